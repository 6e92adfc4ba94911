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

#ifndef SALPRUNE_TESTS_TEST_UTIL_H_
#define SALPRUNE_TESTS_TEST_UTIL_H_

#include <random>
#include <vector>

#include "salprune/data.h"
#include "salprune/detector.h"

namespace salprune::testing {

// Toy detector small enough for finite differences.
inline Detector TinyDetector(uint64_t seed = 3, int classes = 2, double width = 0.125) {
  return BuildToyDetector(classes, width, seed);
}

inline Dataset TinyDataset(int n, int size = 32, uint64_t seed = 5, int classes = 2,
                           const std::string& split = "train") {
  ShapesOptions o;
  o.split = split;
  o.n_images = n;
  o.image_size = size;
  o.n_classes = classes;
  o.seed = seed;
  o.max_objects = 3;
  return MakeShapesDataset(o);
}

inline std::vector<double> RandomVector(std::mt19937_64& rng, size_t n, double lo = -1.0,
                                        double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(n);
  for (double& x : v) x = u(rng);
  return v;
}

}  // namespace salprune::testing

#endif  // SALPRUNE_TESTS_TEST_UTIL_H_
