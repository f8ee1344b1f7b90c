/*
 * Copyright 2026 The lungseg Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 * http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */
#include "lungseg/inference.hpp"

#include <algorithm>

#include "lungseg/error.hpp"

namespace lungseg {

BinaryMask argmax_mask(const Tensor<float>& logits, std::size_t n) {
  const Shape& s = logits.shape();
  if (s.c != 2) throw ShapeError("argmax_mask expects 2 logit channels, got " + s.to_string());
  if (n >= s.n) throw ShapeError("argmax_mask: sample index out of range");
  const float* background = logits.plane(n, 0);
  const float* lung = logits.plane(n, 1);
  std::vector<std::uint8_t> values(s.plane());
  for (std::size_t p = 0; p < values.size(); ++p) values[p] = lung[p] > background[p] ? 1 : 0;
  return BinaryMask(s.h, s.w, std::move(values));
}

BinaryMask predict_mask(const Network<float>& net, const GrayImage& image) {
  Tensor<float> input({1, 1, image.height, image.width});
  std::copy(image.values.begin(), image.values.end(), input.data());
  return argmax_mask(net.predict(input));
}

}  // namespace lungseg
