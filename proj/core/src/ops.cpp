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
#include "lungseg/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "lungseg/detail/gemm.hpp"

namespace lungseg {

std::string Shape::to_string() const {
  return "(" + std::to_string(n) + ", " + std::to_string(c) + ", " + std::to_string(h) +
         ", " + std::to_string(w) + ")";
}

void ConvSpec::validate() const {
  if (in_channels == 0) throw ConfigError("conv in_channels must be positive");
  if (out_channels == 0) throw ConfigError("conv out_channels must be positive");
  if (kernel_h == 0 || kernel_w == 0) throw ConfigError("conv kernel must be positive");
  if (stride == 0) throw ConfigError("conv stride must be >= 1");
  if (dilation == 0) throw ConfigError("conv dilation must be >= 1");
}

namespace {

std::size_t conv_extent(std::size_t in, std::size_t kernel, const ConvSpec& spec,
                        const char* axis) {
  const long long span = static_cast<long long>(in) + 2LL * static_cast<long long>(spec.padding) -
                         static_cast<long long>(spec.dilation * (kernel - 1)) - 1;
  if (span < 0) {
    throw ShapeError(std::string("conv output ") + axis + " would be < 1 (input " + axis +
                     " " + std::to_string(in) + ", kernel " + std::to_string(kernel) +
                     ", dilation " + std::to_string(spec.dilation) + ", padding " +
                     std::to_string(spec.padding) + ")");
  }
  return static_cast<std::size_t>(span) / spec.stride + 1;
}

// Kernel offsets along one axis that land inside the input for at least one
// output position. Other taps only ever read padding.
std::vector<std::size_t> active_taps(std::size_t in, std::size_t out, std::size_t kernel,
                                     const ConvSpec& spec) {
  std::vector<std::size_t> taps;
  for (std::size_t a = 0; a < kernel; ++a) {
    const long long shift = static_cast<long long>(a * spec.dilation) -
                            static_cast<long long>(spec.padding);
    const long long first = shift;
    const long long last = static_cast<long long>((out - 1) * spec.stride) + shift;
    if (last >= 0 && first < static_cast<long long>(in)) {
      // Some position i*stride + shift lies in [0, in).
      bool hit = false;
      for (std::size_t i = 0; i < out && !hit; ++i) {
        const long long pos = static_cast<long long>(i * spec.stride) + shift;
        hit = pos >= 0 && pos < static_cast<long long>(in);
      }
      if (hit) taps.push_back(a);
    }
  }
  return taps;
}

// im2col restricted to the active taps; rows ordered (c, a, b).
struct ColumnLayout {
  std::vector<std::size_t> rows_taps;
  std::vector<std::size_t> cols_taps;
  std::size_t out_h = 0;
  std::size_t out_w = 0;

  std::size_t taps() const { return rows_taps.size() * cols_taps.size(); }
  bool dense(const ConvSpec& spec) const {
    return rows_taps.size() == spec.kernel_h && cols_taps.size() == spec.kernel_w;
  }
  // A 1x1 stride-1 unpadded convolution reads the input plane directly.
  bool identity(const ConvSpec& spec) const {
    return spec.kernel_h == 1 && spec.kernel_w == 1 && spec.stride == 1 && spec.padding == 0;
  }
};

ColumnLayout make_layout(const Shape& in, const ConvSpec& spec) {
  ColumnLayout layout;
  layout.out_h = conv_extent(in.h, spec.kernel_h, spec, "rows");
  layout.out_w = conv_extent(in.w, spec.kernel_w, spec, "cols");
  layout.rows_taps = active_taps(in.h, layout.out_h, spec.kernel_h, spec);
  layout.cols_taps = active_taps(in.w, layout.out_w, spec.kernel_w, spec);
  return layout;
}

template <typename T>
void im2col(const T* image, const Shape& in, const ConvSpec& spec, const ColumnLayout& layout,
            T* columns) {
  const std::size_t out_plane = layout.out_h * layout.out_w;
  const long long height = static_cast<long long>(in.h);
  const long long width = static_cast<long long>(in.w);
  for (std::size_t c = 0; c < in.c; ++c) {
    const T* src = image + c * in.h * in.w;
    for (std::size_t a : layout.rows_taps) {
      for (std::size_t b : layout.cols_taps) {
        const long long dy = static_cast<long long>(a * spec.dilation) -
                             static_cast<long long>(spec.padding);
        const long long dx = static_cast<long long>(b * spec.dilation) -
                             static_cast<long long>(spec.padding);
        T* dst = columns;
        columns += out_plane;
        for (std::size_t i = 0; i < layout.out_h; ++i) {
          const long long y = static_cast<long long>(i * spec.stride) + dy;
          T* row = dst + i * layout.out_w;
          if (y < 0 || y >= height) {
            std::fill(row, row + layout.out_w, T(0));
            continue;
          }
          const T* src_row = src + y * width;
          for (std::size_t j = 0; j < layout.out_w; ++j) {
            const long long x = static_cast<long long>(j * spec.stride) + dx;
            row[j] = (x >= 0 && x < width) ? src_row[x] : T(0);
          }
        }
      }
    }
  }
}

template <typename T>
void col2im(const T* columns, const Shape& in, const ConvSpec& spec,
            const ColumnLayout& layout, T* image) {
  const std::size_t out_plane = layout.out_h * layout.out_w;
  const long long height = static_cast<long long>(in.h);
  const long long width = static_cast<long long>(in.w);
  for (std::size_t c = 0; c < in.c; ++c) {
    T* dst = image + c * in.h * in.w;
    for (std::size_t a : layout.rows_taps) {
      for (std::size_t b : layout.cols_taps) {
        const long long dy = static_cast<long long>(a * spec.dilation) -
                             static_cast<long long>(spec.padding);
        const long long dx = static_cast<long long>(b * spec.dilation) -
                             static_cast<long long>(spec.padding);
        const T* src = columns;
        columns += out_plane;
        for (std::size_t i = 0; i < layout.out_h; ++i) {
          const long long y = static_cast<long long>(i * spec.stride) + dy;
          if (y < 0 || y >= height) continue;
          const T* row = src + i * layout.out_w;
          T* dst_row = dst + y * width;
          for (std::size_t j = 0; j < layout.out_w; ++j) {
            const long long x = static_cast<long long>(j * spec.stride) + dx;
            if (x >= 0 && x < width) dst_row[x] += row[j];
          }
        }
      }
    }
  }
}

// Weight matrix (out_channels x active taps), reusing the weight buffer
// when every tap is active.
template <typename T>
std::vector<T> gather_weights(const Tensor<T>& weight, const ConvSpec& spec,
                              const ColumnLayout& layout) {
  const std::size_t k = spec.in_channels * layout.taps();
  std::vector<T> packed(spec.out_channels * k);
  T* out = packed.data();
  for (std::size_t o = 0; o < spec.out_channels; ++o) {
    for (std::size_t c = 0; c < spec.in_channels; ++c) {
      for (std::size_t a : layout.rows_taps) {
        for (std::size_t b : layout.cols_taps) *out++ = weight.at(o, c, a, b);
      }
    }
  }
  return packed;
}

void check_conv_inputs(const Shape& in, const ConvSpec& spec, const Shape& weight) {
  spec.validate();
  if (in.c != spec.in_channels) {
    throw ShapeError("conv input channels " + std::to_string(in.c) +
                     " != spec in_channels " + std::to_string(spec.in_channels));
  }
  const Shape expected = spec.weight_shape();
  if (weight.n != expected.n) {
    throw ShapeError("conv weight out_channels " + std::to_string(weight.n) + " != " +
                     std::to_string(expected.n));
  }
  if (weight.c != expected.c) {
    throw ShapeError("conv weight in_channels " + std::to_string(weight.c) + " != " +
                     std::to_string(expected.c));
  }
  if (weight.h != expected.h) {
    throw ShapeError("conv weight kernel_h " + std::to_string(weight.h) + " != " +
                     std::to_string(expected.h));
  }
  if (weight.w != expected.w) {
    throw ShapeError("conv weight kernel_w " + std::to_string(weight.w) + " != " +
                     std::to_string(expected.w));
  }
}

}  // namespace

std::size_t ConvSpec::output_rows(std::size_t in_rows) const {
  return conv_extent(in_rows, kernel_h, *this, "rows");
}

std::size_t ConvSpec::output_cols(std::size_t in_cols) const {
  return conv_extent(in_cols, kernel_w, *this, "cols");
}

template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const ConvSpec& spec, const Tensor<T>& weight,
                 std::span<const T> bias) {
  const Shape& in = input.shape();
  check_conv_inputs(in, spec, weight.shape());
  if (!bias.empty() && bias.size() != spec.out_channels) {
    throw ShapeError("conv bias length " + std::to_string(bias.size()) + " != out_channels " +
                     std::to_string(spec.out_channels));
  }
  const ColumnLayout layout = make_layout(in, spec);
  const std::size_t out_plane = layout.out_h * layout.out_w;
  Tensor<T> output({in.n, spec.out_channels, layout.out_h, layout.out_w});
  const std::size_t k = spec.in_channels * layout.taps();
  if (k == 0) {
    // Degenerate: every tap reads padding.
    for (std::size_t n = 0; n < in.n; ++n) {
      for (std::size_t o = 0; o < spec.out_channels; ++o) {
        std::fill_n(output.plane(n, o), out_plane, bias.empty() ? T(0) : bias[o]);
      }
    }
    return output;
  }
  std::vector<T> packed;
  const T* weights = weight.data();
  if (!layout.dense(spec)) {
    packed = gather_weights(weight, spec, layout);
    weights = packed.data();
  }
  const bool direct = layout.identity(spec);
  std::vector<T> columns(direct ? 0 : k * out_plane);
  for (std::size_t n = 0; n < in.n; ++n) {
    const T* cols = input.plane(n, 0);
    if (!direct) {
      im2col(input.plane(n, 0), in, spec, layout, columns.data());
      cols = columns.data();
    }
    T* out = output.plane(n, 0);
    detail::gemm(detail::Transpose::kNo, detail::Transpose::kNo, spec.out_channels, out_plane,
                 k, weights, k, cols, out_plane, out, out_plane);
    if (!bias.empty()) {
      for (std::size_t o = 0; o < spec.out_channels; ++o) {
        T* plane = out + o * out_plane;
        for (std::size_t p = 0; p < out_plane; ++p) plane[p] = plane[p] + bias[o];
      }
    }
  }
  return output;
}

template <typename T>
Conv2dGradients<T> conv2d_backward(const Tensor<T>& input, const ConvSpec& spec,
                                   const Tensor<T>& weight, bool has_bias,
                                   const Tensor<T>& grad_output, bool want_input_grad) {
  const Shape& in = input.shape();
  check_conv_inputs(in, spec, weight.shape());
  const ColumnLayout layout = make_layout(in, spec);
  const Shape expected_out{in.n, spec.out_channels, layout.out_h, layout.out_w};
  if (grad_output.shape() != expected_out) {
    throw ShapeError("conv output gradient shape " + grad_output.shape().to_string() +
                     " != forward output shape " + expected_out.to_string());
  }
  const std::size_t out_plane = layout.out_h * layout.out_w;
  const std::size_t k = spec.in_channels * layout.taps();

  Conv2dGradients<T> grads;
  grads.weight = Tensor<T>(weight.shape());
  if (want_input_grad) grads.input = Tensor<T>(in);
  if (has_bias) {
    grads.bias.assign(spec.out_channels, T(0));
    for (std::size_t n = 0; n < in.n; ++n) {
      for (std::size_t o = 0; o < spec.out_channels; ++o) {
        const T* g = grad_output.plane(n, o);
        T sum = grads.bias[o];
        for (std::size_t p = 0; p < out_plane; ++p) sum += g[p];
        grads.bias[o] = sum;
      }
    }
  }
  if (k == 0) return grads;

  const bool dense = layout.dense(spec);
  std::vector<T> packed;
  const T* weights = weight.data();
  if (!dense) {
    packed = gather_weights(weight, spec, layout);
    weights = packed.data();
  }
  std::vector<T> weight_grad(dense ? 0 : spec.out_channels * k, T(0));
  T* dw = dense ? grads.weight.data() : weight_grad.data();

  const bool direct = layout.identity(spec);
  std::vector<T> columns(direct ? 0 : k * out_plane);
  std::vector<T> column_grad(want_input_grad && !direct ? k * out_plane : 0);
  for (std::size_t n = 0; n < in.n; ++n) {
    const T* cols = input.plane(n, 0);
    if (!direct) {
      im2col(input.plane(n, 0), in, spec, layout, columns.data());
      cols = columns.data();
    }
    const T* dy = grad_output.plane(n, 0);
    // dW (O x K) += dY (O x P) * cols^T (P x K)
    detail::gemm(detail::Transpose::kNo, detail::Transpose::kYes, spec.out_channels, k,
                 out_plane, dy, out_plane, cols, out_plane, dw, k);
    if (!want_input_grad) continue;
    // dcols (K x P) = W^T (K x O) * dY (O x P)
    T* dcols = direct ? grads.input.plane(n, 0) : column_grad.data();
    if (!direct) std::fill(column_grad.begin(), column_grad.end(), T(0));
    detail::gemm(detail::Transpose::kYes, detail::Transpose::kNo, k, out_plane,
                 spec.out_channels, weights, k, dy, out_plane, dcols, out_plane);
    if (!direct) col2im(column_grad.data(), in, spec, layout, grads.input.plane(n, 0));
  }
  if (!dense) {
    const T* src = weight_grad.data();
    for (std::size_t o = 0; o < spec.out_channels; ++o) {
      for (std::size_t c = 0; c < spec.in_channels; ++c) {
        for (std::size_t a : layout.rows_taps) {
          for (std::size_t b : layout.cols_taps) grads.weight.at(o, c, a, b) = *src++;
        }
      }
    }
  }
  return grads;
}

namespace {

struct Sample1d {
  std::size_t lo = 0;
  std::size_t hi = 0;
  double frac = 0.0;
};

std::vector<Sample1d> bilinear_axis(std::size_t in, std::size_t out) {
  std::vector<Sample1d> table(out);
  const double scale = static_cast<double>(in) / static_cast<double>(out);
  const double max_src = static_cast<double>(in - 1);
  for (std::size_t d = 0; d < out; ++d) {
    double src = (static_cast<double>(d) + 0.5) * scale - 0.5;
    src = std::clamp(src, 0.0, max_src);
    const auto lo = static_cast<std::size_t>(std::floor(src));
    table[d].lo = lo;
    table[d].hi = std::min(lo + 1, in - 1);
    table[d].frac = src - static_cast<double>(lo);
  }
  return table;
}

}  // namespace

template <typename T>
Tensor<T> bilinear_resize(const Tensor<T>& input, std::size_t out_h, std::size_t out_w) {
  const Shape& in = input.shape();
  if (out_h == 0 || out_w == 0) throw ShapeError("bilinear_resize target must be >= 1x1");
  if (in.h == 0 || in.w == 0) throw ShapeError("bilinear_resize input has an empty plane");
  if (in.h == out_h && in.w == out_w) return input;
  const auto rows = bilinear_axis(in.h, out_h);
  const auto cols = bilinear_axis(in.w, out_w);
  Tensor<T> output({in.n, in.c, out_h, out_w});
  for (std::size_t n = 0; n < in.n; ++n) {
    for (std::size_t c = 0; c < in.c; ++c) {
      const T* src = input.plane(n, c);
      T* dst = output.plane(n, c);
      for (std::size_t i = 0; i < out_h; ++i) {
        const Sample1d& r = rows[i];
        const T fy = static_cast<T>(r.frac);
        const T* top = src + r.lo * in.w;
        const T* bottom = src + r.hi * in.w;
        for (std::size_t j = 0; j < out_w; ++j) {
          const Sample1d& q = cols[j];
          const T fx = static_cast<T>(q.frac);
          const T upper = top[q.lo] * (T(1) - fx) + top[q.hi] * fx;
          const T lower = bottom[q.lo] * (T(1) - fx) + bottom[q.hi] * fx;
          dst[i * out_w + j] = upper * (T(1) - fy) + lower * fy;
        }
      }
    }
  }
  return output;
}

template <typename T>
Tensor<T> bilinear_resize_backward(const Tensor<T>& grad_output, std::size_t in_h,
                                   std::size_t in_w) {
  const Shape& out = grad_output.shape();
  if (in_h == 0 || in_w == 0) throw ShapeError("bilinear_resize input has an empty plane");
  if (in_h == out.h && in_w == out.w) return grad_output;
  const auto rows = bilinear_axis(in_h, out.h);
  const auto cols = bilinear_axis(in_w, out.w);
  Tensor<T> grad_input({out.n, out.c, in_h, in_w});
  for (std::size_t n = 0; n < out.n; ++n) {
    for (std::size_t c = 0; c < out.c; ++c) {
      const T* g = grad_output.plane(n, c);
      T* dst = grad_input.plane(n, c);
      for (std::size_t i = 0; i < out.h; ++i) {
        const Sample1d& r = rows[i];
        const T fy = static_cast<T>(r.frac);
        T* top = dst + r.lo * in_w;
        T* bottom = dst + r.hi * in_w;
        for (std::size_t j = 0; j < out.w; ++j) {
          const Sample1d& q = cols[j];
          const T fx = static_cast<T>(q.frac);
          const T upper = g[i * out.w + j] * (T(1) - fy);
          const T lower = g[i * out.w + j] * fy;
          top[q.lo] += upper * (T(1) - fx);
          top[q.hi] += upper * fx;
          bottom[q.lo] += lower * (T(1) - fx);
          bottom[q.hi] += lower * fx;
        }
      }
    }
  }
  return grad_input;
}

template <typename T>
Tensor<T> batch_norm(const Tensor<T>& input, std::span<const T> gamma,
                     std::span<const T> beta, RunningStats<T>& stats, Mode mode,
                     const BatchNormOptions& options, BatchNormCache<T>* cache) {
  const Shape& in = input.shape();
  if (gamma.size() != in.c || beta.size() != in.c) {
    throw ShapeError("batch_norm gamma/beta length must equal channel count " +
                     std::to_string(in.c));
  }
  if (!(options.epsilon > 0.0)) throw ConfigError("batch_norm epsilon must be > 0");
  const std::size_t count = in.n * in.h * in.w;
  if (count == 0) throw ShapeError("batch_norm input is empty");

  std::vector<T> mean(in.c);
  std::vector<T> inv_std(in.c);
  if (mode == Mode::kTrain) {
    if (stats.empty()) stats = RunningStats<T>::identity(in.c);
    if (stats.mean.size() != in.c) throw ShapeError("batch_norm running stats channel mismatch");
    for (std::size_t c = 0; c < in.c; ++c) {
      double sum = 0.0;
      for (std::size_t n = 0; n < in.n; ++n) {
        const T* p = input.plane(n, c);
        for (std::size_t k = 0; k < in.plane(); ++k) sum += static_cast<double>(p[k]);
      }
      const double mu = sum / static_cast<double>(count);
      double sq = 0.0;
      for (std::size_t n = 0; n < in.n; ++n) {
        const T* p = input.plane(n, c);
        for (std::size_t k = 0; k < in.plane(); ++k) {
          const double d = static_cast<double>(p[k]) - mu;
          sq += d * d;
        }
      }
      const double var = sq / static_cast<double>(count);
      mean[c] = static_cast<T>(mu);
      inv_std[c] = static_cast<T>(1.0 / std::sqrt(var + options.epsilon));
      const double unbiased = count > 1 ? sq / static_cast<double>(count - 1) : var;
      stats.mean[c] = static_cast<T>((1.0 - options.momentum) * stats.mean[c] +
                                     options.momentum * mu);
      stats.var[c] = static_cast<T>((1.0 - options.momentum) * stats.var[c] +
                                    options.momentum * unbiased);
    }
  } else {
    if (stats.empty()) {
      throw ConfigError("batch_norm eval mode requires running statistics");
    }
    if (stats.mean.size() != in.c) throw ShapeError("batch_norm running stats channel mismatch");
    for (std::size_t c = 0; c < in.c; ++c) {
      mean[c] = stats.mean[c];
      inv_std[c] = static_cast<T>(
          1.0 / std::sqrt(static_cast<double>(stats.var[c]) + options.epsilon));
    }
  }

  Tensor<T> output(in);
  Tensor<T> normalized;
  if (cache) normalized = Tensor<T>(in);
  for (std::size_t n = 0; n < in.n; ++n) {
    for (std::size_t c = 0; c < in.c; ++c) {
      const T* x = input.plane(n, c);
      T* y = output.plane(n, c);
      T* xh = cache ? normalized.plane(n, c) : nullptr;
      for (std::size_t k = 0; k < in.plane(); ++k) {
        const T v = (x[k] - mean[c]) * inv_std[c];
        if (xh) xh[k] = v;
        y[k] = gamma[c] * v + beta[c];
      }
    }
  }
  if (cache) {
    cache->mode = mode;
    cache->inv_std = std::move(inv_std);
    cache->normalized = std::move(normalized);
  }
  return output;
}

template <typename T>
BatchNormGradients<T> batch_norm_backward(const Tensor<T>& grad_output,
                                          std::span<const T> gamma,
                                          const BatchNormCache<T>& cache) {
  const Shape& s = grad_output.shape();
  if (cache.normalized.shape() != s) {
    throw ShapeError("batch_norm gradient shape " + s.to_string() +
                     " != cached forward shape " + cache.normalized.shape().to_string());
  }
  if (gamma.size() != s.c) throw ShapeError("batch_norm gamma length mismatch");
  BatchNormGradients<T> grads{Tensor<T>(s), std::vector<T>(s.c), std::vector<T>(s.c)};
  const double count = static_cast<double>(s.n * s.h * s.w);
  for (std::size_t c = 0; c < s.c; ++c) {
    double sum_g = 0.0;
    double sum_gx = 0.0;
    for (std::size_t n = 0; n < s.n; ++n) {
      const T* g = grad_output.plane(n, c);
      const T* xh = cache.normalized.plane(n, c);
      for (std::size_t k = 0; k < s.plane(); ++k) {
        sum_g += static_cast<double>(g[k]);
        sum_gx += static_cast<double>(g[k]) * static_cast<double>(xh[k]);
      }
    }
    grads.beta[c] = static_cast<T>(sum_g);
    grads.gamma[c] = static_cast<T>(sum_gx);
    const double scale = static_cast<double>(gamma[c]) * static_cast<double>(cache.inv_std[c]);
    for (std::size_t n = 0; n < s.n; ++n) {
      const T* g = grad_output.plane(n, c);
      const T* xh = cache.normalized.plane(n, c);
      T* dx = grads.input.plane(n, c);
      if (cache.mode == Mode::kEval) {
        for (std::size_t k = 0; k < s.plane(); ++k) dx[k] = static_cast<T>(scale * g[k]);
        continue;
      }
      const double mean_g = sum_g / count;
      const double mean_gx = sum_gx / count;
      for (std::size_t k = 0; k < s.plane(); ++k) {
        dx[k] = static_cast<T>(scale * (static_cast<double>(g[k]) - mean_g -
                                        static_cast<double>(xh[k]) * mean_gx));
      }
    }
  }
  return grads;
}

template <typename T>
Tensor<T> relu(const Tensor<T>& input) {
  Tensor<T> output(input.shape());
  const T* x = input.data();
  T* y = output.data();
  for (std::size_t k = 0; k < input.size(); ++k) y[k] = x[k] > T(0) ? x[k] : T(0);
  return output;
}

template <typename T>
Tensor<T> relu_backward(const Tensor<T>& input, const Tensor<T>& grad_output) {
  if (input.shape() != grad_output.shape()) {
    throw ShapeError("relu gradient shape " + grad_output.shape().to_string() +
                     " != input shape " + input.shape().to_string());
  }
  Tensor<T> grad(input.shape());
  const T* x = input.data();
  const T* g = grad_output.data();
  T* d = grad.data();
  for (std::size_t k = 0; k < input.size(); ++k) d[k] = x[k] > T(0) ? g[k] : T(0);
  return grad;
}

template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& input) {
  const Shape& in = input.shape();
  if (in.h == 0 || in.w == 0) throw ShapeError("global_avg_pool needs a non-empty plane");
  Tensor<T> output({in.n, in.c, 1, 1});
  for (std::size_t n = 0; n < in.n; ++n) {
    for (std::size_t c = 0; c < in.c; ++c) {
      const T* p = input.plane(n, c);
      double sum = 0.0;
      for (std::size_t k = 0; k < in.plane(); ++k) sum += static_cast<double>(p[k]);
      output.at(n, c, 0, 0) = static_cast<T>(sum / static_cast<double>(in.plane()));
    }
  }
  return output;
}

template <typename T>
Tensor<T> global_avg_pool_backward(const Tensor<T>& grad_output, std::size_t in_h,
                                   std::size_t in_w) {
  const Shape& g = grad_output.shape();
  if (g.h != 1 || g.w != 1) throw ShapeError("global_avg_pool gradient must be (n, c, 1, 1)");
  if (in_h == 0 || in_w == 0) throw ShapeError("global_avg_pool needs a non-empty plane");
  Tensor<T> grad({g.n, g.c, in_h, in_w});
  const T inv = static_cast<T>(1.0 / static_cast<double>(in_h * in_w));
  for (std::size_t n = 0; n < g.n; ++n) {
    for (std::size_t c = 0; c < g.c; ++c) {
      std::fill_n(grad.plane(n, c), in_h * in_w, grad_output.at(n, c, 0, 0) * inv);
    }
  }
  return grad;
}

template <typename T>
Tensor<T> concat_channels(const Tensor<T>& first, const Tensor<T>& second) {
  const Shape& a = first.shape();
  const Shape& b = second.shape();
  if (a.n != b.n || a.h != b.h || a.w != b.w) {
    throw ShapeError("concat_channels shapes " + a.to_string() + " and " + b.to_string() +
                     " differ outside the channel axis");
  }
  Tensor<T> out({a.n, a.c + b.c, a.h, a.w});
  for (std::size_t n = 0; n < a.n; ++n) {
    std::copy_n(first.plane(n, 0), a.c * a.plane(), out.plane(n, 0));
    std::copy_n(second.plane(n, 0), b.c * b.plane(), out.plane(n, a.c));
  }
  return out;
}

template <typename T>
Tensor<T> slice_channels(const Tensor<T>& input, std::size_t begin, std::size_t count) {
  const Shape& s = input.shape();
  if (begin + count > s.c) {
    throw ShapeError("slice_channels range exceeds " + std::to_string(s.c) + " channels");
  }
  Tensor<T> out({s.n, count, s.h, s.w});
  for (std::size_t n = 0; n < s.n; ++n) {
    std::copy_n(input.plane(n, begin), count * s.plane(), out.plane(n, 0));
  }
  return out;
}

#define LUNGSEG_INSTANTIATE_OPS(T)                                                          \
  template Tensor<T> conv2d(const Tensor<T>&, const ConvSpec&, const Tensor<T>&,            \
                            std::span<const T>);                                            \
  template Conv2dGradients<T> conv2d_backward(const Tensor<T>&, const ConvSpec&,            \
                                              const Tensor<T>&, bool, const Tensor<T>&,     \
                                              bool);                                        \
  template Tensor<T> bilinear_resize(const Tensor<T>&, std::size_t, std::size_t);           \
  template Tensor<T> bilinear_resize_backward(const Tensor<T>&, std::size_t, std::size_t);  \
  template Tensor<T> batch_norm(const Tensor<T>&, std::span<const T>, std::span<const T>,   \
                                RunningStats<T>&, Mode, const BatchNormOptions&,            \
                                BatchNormCache<T>*);                                        \
  template BatchNormGradients<T> batch_norm_backward(const Tensor<T>&, std::span<const T>,  \
                                                     const BatchNormCache<T>&);             \
  template Tensor<T> relu(const Tensor<T>&);                                                \
  template Tensor<T> relu_backward(const Tensor<T>&, const Tensor<T>&);                     \
  template Tensor<T> global_avg_pool(const Tensor<T>&);                                     \
  template Tensor<T> global_avg_pool_backward(const Tensor<T>&, std::size_t, std::size_t);  \
  template Tensor<T> concat_channels(const Tensor<T>&, const Tensor<T>&);                   \
  template Tensor<T> slice_channels(const Tensor<T>&, std::size_t, std::size_t);

LUNGSEG_INSTANTIATE_OPS(float)
LUNGSEG_INSTANTIATE_OPS(double)

#undef LUNGSEG_INSTANTIATE_OPS

}  // namespace lungseg
