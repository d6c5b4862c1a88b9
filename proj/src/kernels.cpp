#include "deeprank/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace deeprank {

std::size_t conv_output_extent(std::size_t in, std::size_t kernel, std::size_t stride, std::size_t pad) {
  if (stride == 0) throw ShapeError("stride must be positive");
  if (kernel == 0) throw ShapeError("kernel extent must be positive");
  if (kernel > in + 2 * pad) {
    throw ShapeError("kernel extent " + std::to_string(kernel) + " exceeds padded input extent " +
                     std::to_string(in + 2 * pad));
  }
  return (in + 2 * pad - kernel) / stride + 1;
}

namespace {

double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

// Fixed-order blocked dot product; the eight lanes let the compiler vectorize
// without reassociating the reduction.
template <typename T>
T dot(const T* a, const T* b, std::size_t n) {
  T lane[8] = {};
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    for (std::size_t k = 0; k < 8; ++k) lane[k] += a[i + k] * b[i + k];
  }
  T sum = ((lane[0] + lane[1]) + (lane[2] + lane[3])) + ((lane[4] + lane[5]) + (lane[6] + lane[7]));
  for (; i < n; ++i) sum += a[i] * b[i];
  return sum;
}

template <typename T>
void require_rank3(const Tensor<T>& t, const char* what) {
  if (t.rank() != 3) throw ShapeError(std::string(what) + ": expected [C,H,W], got " + shape_string(t.shape()));
}

}  // namespace

// --- convolution -----------------------------------------------------------

template <typename T>
ConvForward<T> conv2d(const Tensor<T>& input, const ConvParams<T>& p, bool with_relu) {
  require_rank3(input, "conv2d input");
  if (p.kernels.rank() != 4) throw ShapeError("conv2d kernels: expected rank 4, got " + shape_string(p.kernels.shape()));
  const std::size_t channels = input.extent(0), height = input.extent(1), width = input.extent(2);
  const std::size_t out_ch = p.kernels.extent(0), kh = p.kernels.extent(2), kw = p.kernels.extent(3);
  if (p.kernels.extent(1) != channels) {
    throw ShapeError("conv2d: kernels expect " + std::to_string(p.kernels.extent(1)) + " input channels, input " +
                     shape_string(input.shape()) + " has " + std::to_string(channels));
  }
  require_same_shape(Shape{out_ch}, p.bias.shape(), "conv2d bias");
  const std::size_t out_h = conv_output_extent(height, kh, p.stride, p.pad);
  const std::size_t out_w = conv_output_extent(width, kw, p.stride, p.pad);
  const std::size_t positions = out_h * out_w;
  const std::size_t patch = channels * kh * kw;

  ConvForward<T> fwd;
  auto& cache = fwd.cache;
  cache.input_shape = input.shape();
  cache.stride = p.stride;
  cache.pad = p.pad;
  cache.relu = with_relu;
  cache.columns = Tensor<T>({patch, positions});

  T* col = cache.columns.data();
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t ky = 0; ky < kh; ++ky) {
      for (std::size_t kx = 0; kx < kw; ++kx) {
        T* row = col + ((c * kh + ky) * kw + kx) * positions;
        for (std::size_t oy = 0; oy < out_h; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * p.stride + ky) - static_cast<std::ptrdiff_t>(p.pad);
          T* dst = row + oy * out_w;
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(height)) {
            std::fill(dst, dst + out_w, T(0));
            continue;
          }
          const T* src = input.data() + (c * height + static_cast<std::size_t>(iy)) * width;
          for (std::size_t ox = 0; ox < out_w; ++ox) {
            const std::ptrdiff_t ix =
                static_cast<std::ptrdiff_t>(ox * p.stride + kx) - static_cast<std::ptrdiff_t>(p.pad);
            dst[ox] = (ix < 0 || ix >= static_cast<std::ptrdiff_t>(width)) ? T(0) : src[ix];
          }
        }
      }
    }
  }

  fwd.output = Tensor<T>({out_ch, out_h, out_w});
  const T* weights = p.kernels.data();
  for (std::size_t o = 0; o < out_ch; ++o) {
    T* out = fwd.output.data() + o * positions;
    std::fill(out, out + positions, p.bias[o]);
    const T* w = weights + o * patch;
    for (std::size_t k = 0; k < patch; ++k) {
      const T wk = w[k];
      const T* src = col + k * positions;
      for (std::size_t j = 0; j < positions; ++j) out[j] += wk * src[j];
    }
    if (with_relu) {
      for (std::size_t j = 0; j < positions; ++j) out[j] = std::max(out[j], T(0));
    }
  }
  if (with_relu) cache.output = fwd.output;
  return fwd;
}

template <typename T>
ConvGrads<T> conv2d_backward(const ConvCache<T>& cache, const Tensor<T>& kernels, const Tensor<T>& grad_out) {
  if (kernels.rank() != 4 || cache.input_shape.size() != 3) throw ShapeError("conv2d_backward: malformed cache");
  const std::size_t channels = cache.input_shape[0], height = cache.input_shape[1], width = cache.input_shape[2];
  const std::size_t out_ch = kernels.extent(0), kh = kernels.extent(2), kw = kernels.extent(3);
  const std::size_t out_h = conv_output_extent(height, kh, cache.stride, cache.pad);
  const std::size_t out_w = conv_output_extent(width, kw, cache.stride, cache.pad);
  const std::size_t positions = out_h * out_w;
  const std::size_t patch = channels * kh * kw;
  require_same_shape(Shape{out_ch, out_h, out_w}, grad_out.shape(), "conv2d_backward grad_out");
  require_same_shape(Shape{patch, positions}, cache.columns.shape(), "conv2d_backward cache columns");

  Tensor<T> gated = grad_out;
  if (cache.relu) {
    for (std::size_t i = 0; i < gated.size(); ++i) {
      if (!(cache.output[i] > T(0))) gated[i] = T(0);
    }
  }

  ConvGrads<T> g{Tensor<T>(cache.input_shape), Tensor<T>(kernels.shape()), Tensor<T>({out_ch})};
  const T* col = cache.columns.data();
  Tensor<T> grad_cols({patch, positions});
  for (std::size_t o = 0; o < out_ch; ++o) {
    const T* go = gated.data() + o * positions;
    T bias_sum = 0;
    for (std::size_t j = 0; j < positions; ++j) bias_sum += go[j];
    g.bias[o] = bias_sum;
    T* gw = g.kernels.data() + o * patch;
    const T* w = kernels.data() + o * patch;
    for (std::size_t k = 0; k < patch; ++k) {
      gw[k] = dot(go, col + k * positions, positions);
      const T wk = w[k];
      T* gc = grad_cols.data() + k * positions;
      for (std::size_t j = 0; j < positions; ++j) gc[j] += wk * go[j];
    }
  }

  // col2im
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t ky = 0; ky < kh; ++ky) {
      for (std::size_t kx = 0; kx < kw; ++kx) {
        const T* row = grad_cols.data() + ((c * kh + ky) * kw + kx) * positions;
        for (std::size_t oy = 0; oy < out_h; ++oy) {
          const std::ptrdiff_t iy =
              static_cast<std::ptrdiff_t>(oy * cache.stride + ky) - static_cast<std::ptrdiff_t>(cache.pad);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(height)) continue;
          T* dst = g.input.data() + (c * height + static_cast<std::size_t>(iy)) * width;
          const T* src = row + oy * out_w;
          for (std::size_t ox = 0; ox < out_w; ++ox) {
            const std::ptrdiff_t ix =
                static_cast<std::ptrdiff_t>(ox * cache.stride + kx) - static_cast<std::ptrdiff_t>(cache.pad);
            if (ix >= 0 && ix < static_cast<std::ptrdiff_t>(width)) dst[ix] += src[ox];
          }
        }
      }
    }
  }
  return g;
}

// --- max pooling -----------------------------------------------------------

template <typename T>
PoolForward<T> maxpool(const Tensor<T>& input, std::size_t window, std::size_t stride) {
  require_rank3(input, "maxpool input");
  const std::size_t channels = input.extent(0), height = input.extent(1), width = input.extent(2);
  if (window == 0 || stride == 0) throw ShapeError("maxpool: window and stride must be positive");
  if (window > height || window > width) {
    throw ShapeError("maxpool: window " + std::to_string(window) + " larger than input " + shape_string(input.shape()));
  }
  const std::size_t out_h = (height - window) / stride + 1;
  const std::size_t out_w = (width - window) / stride + 1;

  PoolForward<T> fwd{Tensor<T>({channels, out_h, out_w}), {input.shape(), {}}};
  fwd.cache.argmax.resize(fwd.output.size());
  std::size_t o = 0;
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t oy = 0; oy < out_h; ++oy) {
      for (std::size_t ox = 0; ox < out_w; ++ox, ++o) {
        std::size_t best = (c * height + oy * stride) * width + ox * stride;
        T best_value = input[best];
        for (std::size_t wy = 0; wy < window; ++wy) {
          const std::size_t base = (c * height + oy * stride + wy) * width + ox * stride;
          for (std::size_t wx = 0; wx < window; ++wx) {
            if (input[base + wx] > best_value) {
              best_value = input[base + wx];
              best = base + wx;
            }
          }
        }
        fwd.output[o] = best_value;
        fwd.cache.argmax[o] = best;
      }
    }
  }
  return fwd;
}

template <typename T>
Tensor<T> maxpool_backward(const PoolCache<T>& cache, const Tensor<T>& grad_out) {
  if (grad_out.size() != cache.argmax.size()) {
    throw ShapeError("maxpool_backward: grad_out " + shape_string(grad_out.shape()) + " does not match cached output of " +
                     std::to_string(cache.argmax.size()) + " elements");
  }
  Tensor<T> grad_in(cache.input_shape);
  for (std::size_t o = 0; o < cache.argmax.size(); ++o) grad_in[cache.argmax[o]] += grad_out[o];
  return grad_in;
}

// --- local response normalization ------------------------------------------

namespace {

void check_lrn(const LrnParams& p) {
  if (!(p.k > 0.0)) throw std::invalid_argument("lrn: k must be positive");
  if (p.n == 0 || p.n % 2 == 0) throw std::invalid_argument("lrn: window n must be odd and positive");
  if (p.alpha < 0.0 || p.beta < 0.0) throw std::invalid_argument("lrn: alpha and beta must be non-negative");
}

}  // namespace

template <typename T>
LrnForward<T> lrn(const Tensor<T>& input, const LrnParams& params) {
  check_lrn(params);
  require_rank3(input, "lrn input");
  const std::size_t channels = input.extent(0);
  const std::size_t plane = input.extent(1) * input.extent(2);
  const std::size_t half = params.n / 2;
  const T coeff = static_cast<T>(params.alpha / static_cast<double>(params.n));
  const T k = static_cast<T>(params.k);
  const T beta = static_cast<T>(params.beta);

  LrnForward<T> fwd{Tensor<T>(input.shape()), {params, input, Tensor<T>(input.shape())}};
  for (std::size_t c = 0; c < channels; ++c) {
    const std::size_t lo = c >= half ? c - half : 0;
    const std::size_t hi = std::min(channels - 1, c + half);
    T* scale = fwd.cache.scale.data() + c * plane;
    std::fill(scale, scale + plane, T(0));
    for (std::size_t j = lo; j <= hi; ++j) {
      const T* a = input.data() + j * plane;
      for (std::size_t i = 0; i < plane; ++i) scale[i] += a[i] * a[i];
    }
    const T* a = input.data() + c * plane;
    T* out = fwd.output.data() + c * plane;
    for (std::size_t i = 0; i < plane; ++i) {
      scale[i] = k + coeff * scale[i];
      out[i] = a[i] * std::pow(scale[i], -beta);
    }
  }
  return fwd;
}

template <typename T>
Tensor<T> lrn_backward(const LrnCache<T>& cache, const Tensor<T>& grad_out) {
  require_same_shape(cache.input.shape(), grad_out.shape(), "lrn_backward grad_out");
  const auto& p = cache.params;
  const std::size_t channels = cache.input.extent(0);
  const std::size_t plane = cache.input.extent(1) * cache.input.extent(2);
  const std::size_t half = p.n / 2;
  const T beta = static_cast<T>(p.beta);
  const T factor = static_cast<T>(2.0 * p.alpha * p.beta / static_cast<double>(p.n));

  // ratio_c = g_c * a_c * scale_c^(-beta-1)
  Tensor<T> ratio(cache.input.shape());
  Tensor<T> grad_in(cache.input.shape());
  for (std::size_t i = 0; i < cache.input.size(); ++i) {
    const T s = cache.scale[i];
    const T s_pow = std::pow(s, -beta);
    grad_in[i] = grad_out[i] * s_pow;
    ratio[i] = grad_out[i] * cache.input[i] * s_pow / s;
  }
  for (std::size_t j = 0; j < channels; ++j) {
    const std::size_t lo = j >= half ? j - half : 0;
    const std::size_t hi = std::min(channels - 1, j + half);
    const T* a = cache.input.data() + j * plane;
    T* g = grad_in.data() + j * plane;
    for (std::size_t c = lo; c <= hi; ++c) {
      const T* r = ratio.data() + c * plane;
      for (std::size_t i = 0; i < plane; ++i) g[i] -= factor * a[i] * r[i];
    }
  }
  return grad_in;
}

// --- fully connected -------------------------------------------------------

template <typename T>
FcForward<T> fully_connected(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias, bool with_relu) {
  if (weight.rank() != 2) throw ShapeError("fully_connected weight: expected [out,in], got " + shape_string(weight.shape()));
  const std::size_t out_dim = weight.extent(0), in_dim = weight.extent(1);
  if (input.size() != in_dim) {
    throw ShapeError("fully_connected: weight " + shape_string(weight.shape()) + " expects " + std::to_string(in_dim) +
                     " inputs, got " + shape_string(input.shape()));
  }
  require_same_shape(Shape{out_dim}, bias.shape(), "fully_connected bias");

  FcForward<T> fwd{Tensor<T>({out_dim}), {input.shape(), input, {}, with_relu}};
  fwd.cache.input.reshape({in_dim});
  const T* x = input.data();
  for (std::size_t o = 0; o < out_dim; ++o) {
    const T* w = weight.data() + o * in_dim;
    const T acc = dot(w, x, in_dim) + bias[o];
    fwd.output[o] = with_relu ? std::max(acc, T(0)) : acc;
  }
  if (with_relu) fwd.cache.output = fwd.output;
  return fwd;
}

template <typename T>
FcGrads<T> fc_backward(const FcCache<T>& cache, const Tensor<T>& weight, const Tensor<T>& grad_out) {
  if (weight.rank() != 2) throw ShapeError("fc_backward weight: expected rank 2");
  const std::size_t out_dim = weight.extent(0), in_dim = weight.extent(1);
  require_same_shape(Shape{out_dim}, grad_out.shape(), "fc_backward grad_out");
  if (cache.input.size() != in_dim) throw ShapeError("fc_backward: cache does not match weight " + shape_string(weight.shape()));

  FcGrads<T> g{Tensor<T>(cache.input_shape), Tensor<T>(weight.shape()), Tensor<T>({out_dim})};
  const T* x = cache.input.data();
  for (std::size_t o = 0; o < out_dim; ++o) {
    T go = grad_out[o];
    if (cache.relu && !(cache.output[o] > T(0))) go = T(0);
    g.bias[o] = go;
    if (go == T(0)) continue;
    T* gw = g.weight.data() + o * in_dim;
    const T* w = weight.data() + o * in_dim;
    T* gx = g.input.data();
    for (std::size_t i = 0; i < in_dim; ++i) {
      gw[i] = go * x[i];
      gx[i] += w[i] * go;
    }
  }
  return g;
}

// --- dropout ---------------------------------------------------------------

template <typename T>
DropoutForward<T> dropout(const Tensor<T>& input, double rate, Mode mode, Rng& rng) {
  if (!(rate >= 0.0 && rate < 1.0)) throw std::invalid_argument("dropout: rate must lie in [0, 1)");
  DropoutForward<T> fwd{input, Tensor<T>(input.shape(), T(1))};
  if (mode == Mode::infer || rate == 0.0) return fwd;
  const T keep_scale = static_cast<T>(1.0 / (1.0 - rate));
  for (std::size_t i = 0; i < input.size(); ++i) {
    const T m = uniform01(rng) < rate ? T(0) : keep_scale;
    fwd.mask[i] = m;
    fwd.output[i] = input[i] * m;
  }
  return fwd;
}

template <typename T>
Tensor<T> dropout_backward(const Tensor<T>& mask, const Tensor<T>& grad_out) {
  require_same_shape(mask.shape(), grad_out.shape(), "dropout_backward grad_out");
  Tensor<T> g = grad_out;
  for (std::size_t i = 0; i < g.size(); ++i) g[i] *= mask[i];
  return g;
}

#define DEEPRANK_INSTANTIATE_KERNELS(T)                                                              \
  template ConvForward<T> conv2d(const Tensor<T>&, const ConvParams<T>&, bool);                      \
  template ConvGrads<T> conv2d_backward(const ConvCache<T>&, const Tensor<T>&, const Tensor<T>&);    \
  template PoolForward<T> maxpool(const Tensor<T>&, std::size_t, std::size_t);                       \
  template Tensor<T> maxpool_backward(const PoolCache<T>&, const Tensor<T>&);                        \
  template LrnForward<T> lrn(const Tensor<T>&, const LrnParams&);                                    \
  template Tensor<T> lrn_backward(const LrnCache<T>&, const Tensor<T>&);                             \
  template FcForward<T> fully_connected(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, bool); \
  template FcGrads<T> fc_backward(const FcCache<T>&, const Tensor<T>&, const Tensor<T>&);            \
  template DropoutForward<T> dropout(const Tensor<T>&, double, Mode, Rng&);                          \
  template Tensor<T> dropout_backward(const Tensor<T>&, const Tensor<T>&);

DEEPRANK_INSTANTIATE_KERNELS(float)
DEEPRANK_INSTANTIATE_KERNELS(double)

}  // namespace deeprank
