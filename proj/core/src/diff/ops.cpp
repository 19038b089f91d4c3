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


#include "scadf/diff/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "scadf/errors.hpp"

namespace scadf::diff {

namespace {

using detail::make_op;
using detail::Node;

bool is_suffix(const Shape& big, const Shape& small) {
  if (small.size() > big.size()) return false;
  return std::equal(small.rbegin(), small.rend(), big.rbegin());
}

[[noreturn]] void mismatch(const char* op, const Shape& a, const Shape& b) {
  throw DimensionError(std::string(op) + ": incompatible shapes " + shape_str(a) + " and " + shape_str(b));
}

enum class BinaryKind { kAdd, kSub, kMul };

Var binary(const Var& a, const Var& b, BinaryKind kind, const char* name) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  Shape out_shape;
  if (sa == sb || is_suffix(sa, sb)) {
    out_shape = sa;
  } else if (is_suffix(sb, sa)) {
    out_shape = sb;
  } else {
    mismatch(name, sa, sb);
  }
  const auto av = a.value().data();
  const auto bv = b.value().data();
  const std::size_t na = av.size();
  const std::size_t nb = bv.size();
  Tensor out(out_shape);
  auto o = out.data();
  for (std::size_t i = 0; i < o.size(); ++i) {
    const double x = av[i % na];
    const double y = bv[i % nb];
    switch (kind) {
      case BinaryKind::kAdd: o[i] = x + y; break;
      case BinaryKind::kSub: o[i] = x - y; break;
      case BinaryKind::kMul: o[i] = x * y; break;
    }
  }
  return make_op(std::move(out), {a, b}, [kind](Node& self) {
    const auto g = self.grad.data();
    const auto av = self.parent_value(0).data();
    const auto bv = self.parent_value(1).data();
    const std::size_t na = av.size();
    const std::size_t nb = bv.size();
    if (Tensor* ga = self.parent_grad(0)) {
      auto d = ga->data();
      for (std::size_t i = 0; i < g.size(); ++i) {
        d[i % na] += kind == BinaryKind::kMul ? g[i] * bv[i % nb] : g[i];
      }
    }
    if (Tensor* gb = self.parent_grad(1)) {
      auto d = gb->data();
      for (std::size_t i = 0; i < g.size(); ++i) {
        switch (kind) {
          case BinaryKind::kAdd: d[i % nb] += g[i]; break;
          case BinaryKind::kSub: d[i % nb] -= g[i]; break;
          case BinaryKind::kMul: d[i % nb] += g[i] * av[i % na]; break;
        }
      }
    }
  });
}

// C[M,N] += A[M,K] B[K,N]
void gemm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a[i * k + p];
      const double* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// C[M,K] += G[M,N] B[K,N]^T
void gemm_nt(const double* g, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* grow = g + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double* brow = b + p * n;
      double acc = 0.0;
      for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
      c[i * k + p] += acc;
    }
  }
}

// C[K,N] += A[M,K]^T G[M,N]
void gemm_tn(const double* a, const double* g, double* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* grow = g + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a[i * k + p];
      double* crow = c + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * grow[j];
    }
  }
}

Shape without_axis(const Shape& s, std::size_t axis) {
  Shape out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i != axis) out.push_back(s[i]);
  }
  return out;
}

}  // namespace

Var add(const Var& a, const Var& b) { return binary(a, b, BinaryKind::kAdd, "add"); }
Var sub(const Var& a, const Var& b) { return binary(a, b, BinaryKind::kSub, "sub"); }
Var mul(const Var& a, const Var& b) { return binary(a, b, BinaryKind::kMul, "mul"); }

Var scale(const Var& a, double factor) {
  Tensor out = a.value();
  for (auto& v : out.data()) v *= factor;
  return make_op(std::move(out), {a}, [factor](Node& self) {
    auto d = self.parent_grad(0)->data();
    const auto g = self.grad.data();
    for (std::size_t i = 0; i < g.size(); ++i) d[i] += factor * g[i];
  });
}

Var matmul(const Var& a, const Var& b) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa.size() < 2 || sb.size() < 2) mismatch("matmul", sa, sb);
  const std::size_t m = sa[sa.size() - 2];
  const std::size_t k = sa.back();
  const std::size_t n = sb.back();
  if (sb[sb.size() - 2] != k) mismatch("matmul", sa, sb);
  const bool shared = sb.size() == 2;
  if (!shared && (sb.size() != sa.size() || !std::equal(sa.begin(), sa.end() - 2, sb.begin()))) {
    mismatch("matmul", sa, sb);
  }
  const std::size_t batches = a.value().size() / (m * k);
  Shape out_shape(sa.begin(), sa.end() - 2);
  out_shape.push_back(m);
  out_shape.push_back(n);
  Tensor out(out_shape);
  const double* av = a.value().data().data();
  const double* bv = b.value().data().data();
  double* ov = out.data().data();
  for (std::size_t bi = 0; bi < batches; ++bi) {
    gemm_nn(av + bi * m * k, bv + (shared ? 0 : bi * k * n), ov + bi * m * n, m, k, n);
  }
  return make_op(std::move(out), {a, b}, [m, k, n, batches, shared](Node& self) {
    const double* g = self.grad.data().data();
    const double* av = self.parent_value(0).data().data();
    const double* bv = self.parent_value(1).data().data();
    if (Tensor* ga = self.parent_grad(0)) {
      double* d = ga->data().data();
      for (std::size_t bi = 0; bi < batches; ++bi) {
        gemm_nt(g + bi * m * n, bv + (shared ? 0 : bi * k * n), d + bi * m * k, m, k, n);
      }
    }
    if (Tensor* gb = self.parent_grad(1)) {
      double* d = gb->data().data();
      for (std::size_t bi = 0; bi < batches; ++bi) {
        gemm_tn(av + bi * m * k, g + bi * m * n, d + (shared ? 0 : bi * k * n), m, k, n);
      }
    }
  });
}

Var transpose(const Var& a) {
  const Shape& s = a.shape();
  if (s.size() < 2) throw DimensionError("transpose needs rank >= 2, got " + shape_str(s));
  const std::size_t r = s[s.size() - 2];
  const std::size_t c = s.back();
  const std::size_t batches = a.value().size() / (r * c);
  Shape out_shape = s;
  std::swap(out_shape[s.size() - 2], out_shape[s.size() - 1]);
  Tensor out(out_shape);
  const auto in = a.value().data();
  auto o = out.data();
  for (std::size_t b = 0; b < batches; ++b) {
    for (std::size_t i = 0; i < r; ++i) {
      for (std::size_t j = 0; j < c; ++j) o[b * r * c + j * r + i] = in[b * r * c + i * c + j];
    }
  }
  return make_op(std::move(out), {a}, [r, c, batches](Node& self) {
    auto d = self.parent_grad(0)->data();
    const auto g = self.grad.data();
    for (std::size_t b = 0; b < batches; ++b) {
      for (std::size_t i = 0; i < r; ++i) {
        for (std::size_t j = 0; j < c; ++j) d[b * r * c + i * c + j] += g[b * r * c + j * r + i];
      }
    }
  });
}

Var reshape(const Var& a, Shape shape) {
  if (shape_volume(shape) != a.value().size()) mismatch("reshape", a.shape(), shape);
  return make_op(a.value().reshaped(std::move(shape)), {a}, [](Node& self) {
    auto d = self.parent_grad(0)->data();
    const auto g = self.grad.data();
    for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i];
  });
}

Var gelu(const Var& a) {
  Tensor out = a.value();
  for (auto& v : out.data()) v = 0.5 * v * (1.0 + std::erf(v * std::numbers::sqrt2 / 2.0));
  return make_op(std::move(out), {a}, [](Node& self) {
    auto d = self.parent_grad(0)->data();
    const auto g = self.grad.data();
    const auto x = self.parent_value(0).data();
    const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double cdf = 0.5 * (1.0 + std::erf(x[i] * std::numbers::sqrt2 / 2.0));
      const double pdf = inv_sqrt_2pi * std::exp(-0.5 * x[i] * x[i]);
      d[i] += g[i] * (cdf + x[i] * pdf);
    }
  });
}

Var relu(const Var& a) {
  Tensor out = a.value();
  for (auto& v : out.data()) v = v > 0.0 ? v : 0.0;
  return make_op(std::move(out), {a}, [](Node& self) {
    auto d = self.parent_grad(0)->data();
    const auto g = self.grad.data();
    const auto x = self.parent_value(0).data();
    for (std::size_t i = 0; i < g.size(); ++i) d[i] += x[i] > 0.0 ? g[i] : 0.0;
  });
}

Var softmax(const Var& a, int axis_in) {
  const std::size_t axis = normalize_axis(axis_in, a.value().rank());
  const AxisSplit sp = split_at_axis(a.shape(), axis);
  Tensor out(a.shape());
  const auto x = a.value().data();
  auto y = out.data();
  for (std::size_t o = 0; o < sp.outer; ++o) {
    for (std::size_t in = 0; in < sp.inner; ++in) {
      const std::size_t base = o * sp.length * sp.inner + in;
      double mx = x[base];
      for (std::size_t i = 1; i < sp.length; ++i) mx = std::max(mx, x[base + i * sp.inner]);
      double total = 0.0;
      for (std::size_t i = 0; i < sp.length; ++i) {
        const double e = std::exp(x[base + i * sp.inner] - mx);
        y[base + i * sp.inner] = e;
        total += e;
      }
      for (std::size_t i = 0; i < sp.length; ++i) y[base + i * sp.inner] /= total;
    }
  }
  return make_op(std::move(out), {a}, [sp](Node& self) {
    auto d = self.parent_grad(0)->data();
    const auto g = self.grad.data();
    const auto y = self.value.data();
    for (std::size_t o = 0; o < sp.outer; ++o) {
      for (std::size_t in = 0; in < sp.inner; ++in) {
        const std::size_t base = o * sp.length * sp.inner + in;
        double dot = 0.0;
        for (std::size_t i = 0; i < sp.length; ++i) dot += g[base + i * sp.inner] * y[base + i * sp.inner];
        for (std::size_t i = 0; i < sp.length; ++i) {
          const std::size_t idx = base + i * sp.inner;
          d[idx] += y[idx] * (g[idx] - dot);
        }
      }
    }
  });
}

Var layer_normalize(const Var& a, int axis_in, double eps) {
  const std::size_t axis = normalize_axis(axis_in, a.value().rank());
  const AxisSplit sp = split_at_axis(a.shape(), axis);
  Tensor out(a.shape());
  std::vector<double> inv_std(sp.outer * sp.inner);
  const auto x = a.value().data();
  auto y = out.data();
  const double len = static_cast<double>(sp.length);
  for (std::size_t o = 0; o < sp.outer; ++o) {
    for (std::size_t in = 0; in < sp.inner; ++in) {
      const std::size_t base = o * sp.length * sp.inner + in;
      double mu = 0.0;
      for (std::size_t i = 0; i < sp.length; ++i) mu += x[base + i * sp.inner];
      mu /= len;
      double var = 0.0;
      for (std::size_t i = 0; i < sp.length; ++i) {
        const double c = x[base + i * sp.inner] - mu;
        var += c * c;
      }
      var /= len;
      const double is = 1.0 / std::sqrt(var + eps);
      inv_std[o * sp.inner + in] = is;
      for (std::size_t i = 0; i < sp.length; ++i) y[base + i * sp.inner] = (x[base + i * sp.inner] - mu) * is;
    }
  }
  return make_op(std::move(out), {a}, [sp, inv_std = std::move(inv_std)](Node& self) {
    auto d = self.parent_grad(0)->data();
    const auto g = self.grad.data();
    const auto y = self.value.data();
    const double len = static_cast<double>(sp.length);
    for (std::size_t o = 0; o < sp.outer; ++o) {
      for (std::size_t in = 0; in < sp.inner; ++in) {
        const std::size_t base = o * sp.length * sp.inner + in;
        double g_mean = 0.0;
        double gy_mean = 0.0;
        for (std::size_t i = 0; i < sp.length; ++i) {
          g_mean += g[base + i * sp.inner];
          gy_mean += g[base + i * sp.inner] * y[base + i * sp.inner];
        }
        g_mean /= len;
        gy_mean /= len;
        const double is = inv_std[o * sp.inner + in];
        for (std::size_t i = 0; i < sp.length; ++i) {
          const std::size_t idx = base + i * sp.inner;
          d[idx] += is * (g[idx] - g_mean - y[idx] * gy_mean);
        }
      }
    }
  });
}

Var sum(const Var& a, int axis_in) {
  const std::size_t axis = normalize_axis(axis_in, a.value().rank());
  const AxisSplit sp = split_at_axis(a.shape(), axis);
  Tensor out(without_axis(a.shape(), axis));
  const auto x = a.value().data();
  auto y = out.data();
  for (std::size_t o = 0; o < sp.outer; ++o) {
    for (std::size_t i = 0; i < sp.length; ++i) {
      for (std::size_t in = 0; in < sp.inner; ++in) {
        y[o * sp.inner + in] += x[(o * sp.length + i) * sp.inner + in];
      }
    }
  }
  return make_op(std::move(out), {a}, [sp](Node& self) {
    auto d = self.parent_grad(0)->data();
    const auto g = self.grad.data();
    for (std::size_t o = 0; o < sp.outer; ++o) {
      for (std::size_t i = 0; i < sp.length; ++i) {
        for (std::size_t in = 0; in < sp.inner; ++in) {
          d[(o * sp.length + i) * sp.inner + in] += g[o * sp.inner + in];
        }
      }
    }
  });
}

Var mean(const Var& a, int axis) {
  const std::size_t len = a.value().dim(axis);
  return scale(sum(a, axis), 1.0 / static_cast<double>(len));
}

Var sum_all(const Var& a) {
  double total = 0.0;
  for (double v : a.value().data()) total += v;
  return make_op(Tensor::scalar(total), {a}, [](Node& self) {
    auto d = self.parent_grad(0)->data();
    const double g = self.grad[0];
    for (auto& v : d) v += g;
  });
}

Var mean_all(const Var& a) { return scale(sum_all(a), 1.0 / static_cast<double>(a.value().size())); }

Var concat(const std::vector<Var>& parts, int axis_in) {
  if (parts.empty()) throw DimensionError("concat of zero tensors");
  const Shape& ref = parts.front().shape();
  const std::size_t axis = normalize_axis(axis_in, ref.size());
  std::vector<std::size_t> lengths;
  std::size_t total = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    if (s.size() != ref.size()) mismatch("concat", ref, s);
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (i != axis && s[i] != ref[i]) mismatch("concat", ref, s);
    }
    lengths.push_back(s[axis]);
    total += s[axis];
  }
  Shape out_shape = ref;
  out_shape[axis] = total;
  const AxisSplit sp = split_at_axis(out_shape, axis);
  Tensor out(out_shape);
  auto y = out.data();
  std::size_t offset = 0;
  for (std::size_t pi = 0; pi < parts.size(); ++pi) {
    const auto x = parts[pi].value().data();
    const std::size_t block = lengths[pi] * sp.inner;
    for (std::size_t o = 0; o < sp.outer; ++o) {
      std::copy_n(x.begin() + o * block, block, y.begin() + (o * total + offset) * sp.inner);
    }
    offset += lengths[pi];
  }
  return make_op(std::move(out), parts, [sp, total, lengths](Node& self) {
    const auto g = self.grad.data();
    std::size_t offset = 0;
    for (std::size_t pi = 0; pi < lengths.size(); ++pi) {
      const std::size_t block = lengths[pi] * sp.inner;
      if (Tensor* gp = self.parent_grad(pi)) {
        auto d = gp->data();
        for (std::size_t o = 0; o < sp.outer; ++o) {
          const std::size_t src = (o * total + offset) * sp.inner;
          for (std::size_t i = 0; i < block; ++i) d[o * block + i] += g[src + i];
        }
      }
      offset += lengths[pi];
    }
  });
}

Var slice(const Var& a, int axis_in, std::size_t begin, std::size_t end) {
  const std::size_t axis = normalize_axis(axis_in, a.value().rank());
  const Shape& s = a.shape();
  if (begin >= end || end > s[axis]) {
    throw DimensionError("slice [" + std::to_string(begin) + ", " + std::to_string(end) + ") out of range for " +
                         shape_str(s));
  }
  const AxisSplit sp = split_at_axis(s, axis);
  Shape out_shape = s;
  out_shape[axis] = end - begin;
  Tensor out(out_shape);
  const auto x = a.value().data();
  auto y = out.data();
  const std::size_t block = (end - begin) * sp.inner;
  for (std::size_t o = 0; o < sp.outer; ++o) {
    std::copy_n(x.begin() + (o * sp.length + begin) * sp.inner, block, y.begin() + o * block);
  }
  return make_op(std::move(out), {a}, [sp, begin, block](Node& self) {
    auto d = self.parent_grad(0)->data();
    const auto g = self.grad.data();
    for (std::size_t o = 0; o < sp.outer; ++o) {
      const std::size_t dst = (o * sp.length + begin) * sp.inner;
      for (std::size_t i = 0; i < block; ++i) d[dst + i] += g[o * block + i];
    }
  });
}

Var depthwise_conv1d(const Var& x, const Var& weight, const Var& bias) {
  const Shape& sx = x.shape();
  const Shape& sw = weight.shape();
  if (sx.size() < 2 || sw.size() != 2 || sw[0] != sx[sx.size() - 2] || sw[1] % 2 == 0 ||
      bias.shape() != Shape{sw[0]}) {
    mismatch("depthwise_conv1d", sx, sw);
  }
  const std::size_t channels = sw[0];
  const std::size_t kernel = sw[1];
  const std::size_t len = sx.back();
  const std::size_t batches = x.value().size() / (channels * len);
  const auto half = static_cast<std::ptrdiff_t>(kernel / 2);
  Tensor out(sx);
  const auto xv = x.value().data();
  const auto wv = weight.value().data();
  const auto bv = bias.value().data();
  auto y = out.data();
  for (std::size_t b = 0; b < batches; ++b) {
    for (std::size_t c = 0; c < channels; ++c) {
      const std::size_t row = (b * channels + c) * len;
      for (std::size_t l = 0; l < len; ++l) {
        double acc = bv[c];
        for (std::size_t t = 0; t < kernel; ++t) {
          const auto src = static_cast<std::ptrdiff_t>(l) + static_cast<std::ptrdiff_t>(t) - half;
          if (src < 0 || src >= static_cast<std::ptrdiff_t>(len)) continue;
          acc += wv[c * kernel + t] * xv[row + static_cast<std::size_t>(src)];
        }
        y[row + l] = acc;
      }
    }
  }
  return make_op(std::move(out), {x, weight, bias}, [channels, kernel, len, batches, half](Node& self) {
    const auto g = self.grad.data();
    const auto xv = self.parent_value(0).data();
    const auto wv = self.parent_value(1).data();
    Tensor* gx = self.parent_grad(0);
    Tensor* gw = self.parent_grad(1);
    Tensor* gb = self.parent_grad(2);
    for (std::size_t b = 0; b < batches; ++b) {
      for (std::size_t c = 0; c < channels; ++c) {
        const std::size_t row = (b * channels + c) * len;
        for (std::size_t l = 0; l < len; ++l) {
          const double gl = g[row + l];
          if (gb) gb->data()[c] += gl;
          for (std::size_t t = 0; t < kernel; ++t) {
            const auto src = static_cast<std::ptrdiff_t>(l) + static_cast<std::ptrdiff_t>(t) - half;
            if (src < 0 || src >= static_cast<std::ptrdiff_t>(len)) continue;
            const std::size_t si = row + static_cast<std::size_t>(src);
            if (gx) gx->data()[si] += wv[c * kernel + t] * gl;
            if (gw) gw->data()[c * kernel + t] += xv[si] * gl;
          }
        }
      }
    }
  });
}

Var gaussian_kernel_mean(const Var& a, const Var& b, double sigma) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa.size() < 2 || sb.size() != sa.size() || sa.back() != sb.back() ||
      !std::equal(sa.begin(), sa.end() - 2, sb.begin())) {
    mismatch("gaussian_kernel_mean", sa, sb);
  }
  if (!(sigma > 0.0)) throw ConfigError("kernel bandwidth must be positive");
  const std::size_t m = sa[sa.size() - 2];
  const std::size_t n = sb[sb.size() - 2];
  const std::size_t w = sa.back();
  const std::size_t batches = a.value().size() / (m * w);
  const double inv_two_sigma_sq = 1.0 / (2.0 * sigma * sigma);
  const double norm = 1.0 / static_cast<double>(m * n);
  Tensor out(Shape(sa.begin(), sa.end() - 2));
  const auto av = a.value().data();
  const auto bv = b.value().data();
  const bool self_kernel = a.node() == b.node();
  // Kernel values k(a_i, b_j), kept for the backward pass.
  auto kernel = std::make_shared<std::vector<double>>(batches * m * n);
  for (std::size_t bi = 0; bi < batches; ++bi) {
    double* kb = kernel->data() + bi * m * n;
    const double* ar = av.data() + bi * m * w;
    const double* br = bv.data() + bi * n * w;
    for (std::size_t i = 0; i < m; ++i) {
      const std::size_t j0 = self_kernel ? i + 1 : 0;
      if (self_kernel) kb[i * n + i] = 1.0;
      for (std::size_t j = j0; j < n; ++j) {
        double dist = 0.0;
        for (std::size_t c = 0; c < w; ++c) {
          const double diff = ar[i * w + c] - br[j * w + c];
          dist += diff * diff;
        }
        kb[i * n + j] = std::exp(-dist * inv_two_sigma_sq);
        if (self_kernel) kb[j * n + i] = kb[i * n + j];
      }
    }
    // Sum in a canonical orientation (lexicographically smaller operand in the
    // outer loop) so that k(A, B) and k(B, A) are bit-identical.
    const auto a_rows = av.subspan(bi * m * w, m * w);
    const auto b_rows = bv.subspan(bi * n * w, n * w);
    const bool swap = std::lexicographical_compare(b_rows.begin(), b_rows.end(), a_rows.begin(), a_rows.end());
    double total = 0.0;
    if (swap) {
      for (std::size_t j = 0; j < n; ++j) {
        for (std::size_t i = 0; i < m; ++i) total += kb[i * n + j];
      }
    } else {
      for (std::size_t i = 0; i < m * n; ++i) total += kb[i];
    }
    out[bi] = total * norm;
  }
  return make_op(std::move(out), {a, b}, [m, n, w, batches, inv_two_sigma_sq, norm, kernel](Node& self) {
    const auto g = self.grad.data();
    const double* av = self.parent_value(0).data().data();
    const double* bv = self.parent_value(1).data().data();
    Tensor* ga = self.parent_grad(0);
    Tensor* gb = self.parent_grad(1);
    double* gad = ga ? ga->data().data() : nullptr;
    double* gbd = gb ? gb->data().data() : nullptr;
    const double two_c = 2.0 * inv_two_sigma_sq;
    for (std::size_t bi = 0; bi < batches; ++bi) {
      const double* kb = kernel->data() + bi * m * n;
      const double scale = g[bi] * norm * two_c;
      for (std::size_t i = 0; i < m; ++i) {
        const double* ai = av + (bi * m + i) * w;
        for (std::size_t j = 0; j < n; ++j) {
          const double* bj = bv + (bi * n + j) * w;
          // d k / d a_i = -k (a_i - b_j) / sigma^2
          const double coeff = scale * kb[i * n + j];
          for (std::size_t c = 0; c < w; ++c) {
            const double diff = ai[c] - bj[c];
            if (gad) gad[(bi * m + i) * w + c] -= coeff * diff;
            if (gbd) gbd[(bi * n + j) * w + c] += coeff * diff;
          }
        }
      }
    }
  });
}

}  // namespace scadf::diff
