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

#ifndef SALPRUNE_PNG_IO_H_
#define SALPRUNE_PNG_IO_H_

#include <cstdint>
#include <string>
#include <vector>

#include "salprune/tensor.h"

namespace salprune {

// 8-bit interleaved raster, `channels` is 1 (gray) or 3 (RGB).
struct Raster {
  int width = 0;
  int height = 0;
  int channels = 3;
  std::vector<uint8_t> pixels;
};

void WritePng(const std::string& path, const Raster& raster);
Raster ReadPng(const std::string& path);

// Conversions between a 3 x H x W tensor in [0,1] and an RGB raster.
Raster TensorToRaster(const Tensor& image);
Tensor RasterToTensor(const Raster& raster);

// Quantizes every value to the nearest multiple of 1/255 so that an
// in-memory image equals its PNG round trip.
void QuantizeToBytes(Tensor& image);

}  // namespace salprune

#endif  // SALPRUNE_PNG_IO_H_
