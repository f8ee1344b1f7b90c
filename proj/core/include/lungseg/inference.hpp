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
#pragma once

#include "lungseg/data.hpp"
#include "lungseg/net.hpp"
#include "lungseg/postproc.hpp"
#include "lungseg/tensor.hpp"

namespace lungseg {

/// Per-pixel argmax of two-class logits for sample `n`; ties go to background.
BinaryMask argmax_mask(const Tensor<float>& logits, std::size_t n = 0);

/// Eval-mode prediction for one image already at the network input size.
BinaryMask predict_mask(const Network<float>& net, const GrayImage& image);

}  // namespace lungseg
