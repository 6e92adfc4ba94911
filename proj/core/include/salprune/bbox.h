// Copyright 2026 The Salprune Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef SALPRUNE_BBOX_H_
#define SALPRUNE_BBOX_H_

namespace salprune {

// Axis-aligned box in image pixels, origin top-left, continuous coordinates.
struct BBox {
  double x_min = 0.0;
  double y_min = 0.0;
  double x_max = 0.0;
  double y_max = 0.0;
  int class_id = 0;

  double width() const { return x_max - x_min; }
  double height() const { return y_max - y_min; }
  double area() const { return width() * height(); }
  double center_x() const { return 0.5 * (x_min + x_max); }
  double center_y() const { return 0.5 * (y_min + y_max); }
  bool valid() const { return x_min < x_max && y_min < y_max; }

  bool operator==(const BBox&) const = default;
};

// Clamps the box to [0, image_w] x [0, image_h].
inline BBox ClampToImage(BBox b, double image_w, double image_h) {
  auto clamp = [](double v, double hi) { return v < 0 ? 0 : (v > hi ? hi : v); };
  b.x_min = clamp(b.x_min, image_w);
  b.x_max = clamp(b.x_max, image_w);
  b.y_min = clamp(b.y_min, image_h);
  b.y_max = clamp(b.y_max, image_h);
  return b;
}

}  // namespace salprune

#endif  // SALPRUNE_BBOX_H_
