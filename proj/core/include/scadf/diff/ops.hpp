// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
// http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#pragma once

#include <vector>

#include "scadf/diff/var.hpp"

// Differentiable dense ops. Binary elementwise ops accept equal shapes or a
// right operand whose shape is a trailing suffix of the left one (bias-style
// broadcast). Shape mismatches throw DimensionError naming both shapes.
namespace scadf::diff {

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double factor);

/// [..., M, K] x [K, N] (shared right operand) or [..., M, K] x [..., K, N] (batched).
Var matmul(const Var& a, const Var& b);
/// Swaps the last two axes.
Var transpose(const Var& a);
Var reshape(const Var& a, Shape shape);

Var gelu(const Var& a);
Var relu(const Var& a);

/// Max-subtracted softmax along `axis`.
Var softmax(const Var& a, int axis);
/// (x - mean) / sqrt(var + eps) along `axis`, without affine terms.
Var layer_normalize(const Var& a, int axis, double eps = 1e-5);

Var sum(const Var& a, int axis);
Var mean(const Var& a, int axis);
Var sum_all(const Var& a);
Var mean_all(const Var& a);

Var concat(const std::vector<Var>& parts, int axis);
/// Half-open range [begin, end) along `axis`.
Var slice(const Var& a, int axis, std::size_t begin, std::size_t end);

/// Per-channel 1-D convolution with zero "same" padding.
/// x: [..., C, L], weight: [C, k] with odd k, bias: [C].
Var depthwise_conv1d(const Var& x, const Var& weight, const Var& bias);

/// Mean Gaussian kernel value (1/(M N)) sum_ij exp(-|a_i - b_j|^2 / (2 sigma^2)).
/// a: [..., M, w], b: [..., N, w]; result has the leading shape [...].
Var gaussian_kernel_mean(const Var& a, const Var& b, double sigma);

}  // namespace scadf::diff
