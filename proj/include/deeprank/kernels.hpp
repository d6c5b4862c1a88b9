#pragma once

// Forward and backward primitives for the layers of the scoring network.
// Every backward is the hand-written exact adjoint of its forward.
// Feature maps are [C, H, W]; convolution is cross-correlation (no kernel flip).

#include <cstddef>
#include <vector>

#include "deeprank/tensor.hpp"

namespace deeprank {

/// floor((in + 2*pad - kernel) / stride) + 1; throws ShapeError when the kernel
/// does not fit the padded extent or stride is zero.
std::size_t conv_output_extent(std::size_t in, std::size_t kernel, std::size_t stride, std::size_t pad);

template <typename T>
struct ConvParams {
  Tensor<T> kernels;  // [out_channels, in_channels, kh, kw]
  Tensor<T> bias;     // [out_channels]
  std::size_t stride = 1;
  std::size_t pad = 0;
};

template <typename T>
struct ConvCache {
  Shape input_shape;
  Tensor<T> columns;  // im2col of the padded input: [C*kh*kw, Ho*Wo]
  Tensor<T> output;   // post-activation; relu gate is output > 0
  std::size_t stride = 1;
  std::size_t pad = 0;
  bool relu = false;
};

template <typename T>
struct ConvForward {
  Tensor<T> output;
  ConvCache<T> cache;
};

template <typename T>
struct ConvGrads {
  Tensor<T> input;
  Tensor<T> kernels;
  Tensor<T> bias;
};

template <typename T>
ConvForward<T> conv2d(const Tensor<T>& input, const ConvParams<T>& p, bool with_relu);

/// Gradients of the forward map; `kernels` must be the tensor used in the forward pass.
template <typename T>
ConvGrads<T> conv2d_backward(const ConvCache<T>& cache, const Tensor<T>& kernels, const Tensor<T>& grad_out);

template <typename T>
struct PoolCache {
  Shape input_shape;
  std::vector<std::size_t> argmax;  // flat input offset per output element
};

template <typename T>
struct PoolForward {
  Tensor<T> output;
  PoolCache<T> cache;
};

/// Max pooling without padding. Ties resolve to the first element in row-major window order.
template <typename T>
PoolForward<T> maxpool(const Tensor<T>& input, std::size_t window, std::size_t stride);

template <typename T>
Tensor<T> maxpool_backward(const PoolCache<T>& cache, const Tensor<T>& grad_out);

struct LrnParams {
  double k = 2.0;
  std::size_t n = 5;
  double alpha = 1e-4;
  double beta = 0.75;
};

template <typename T>
struct LrnCache {
  LrnParams params;
  Tensor<T> input;
  Tensor<T> scale;  // k + (alpha/n) * windowed sum of squares
};

template <typename T>
struct LrnForward {
  Tensor<T> output;
  LrnCache<T> cache;
};

/// Cross-channel local response normalization:
///   b_c = a_c * (k + alpha/n * sum_{|c'-c| <= n/2} a_c'^2)^(-beta)
template <typename T>
LrnForward<T> lrn(const Tensor<T>& input, const LrnParams& params);

template <typename T>
Tensor<T> lrn_backward(const LrnCache<T>& cache, const Tensor<T>& grad_out);

template <typename T>
struct FcCache {
  Shape input_shape;
  Tensor<T> input;   // flattened
  Tensor<T> output;  // post-activation
  bool relu = false;
};

template <typename T>
struct FcForward {
  Tensor<T> output;
  FcCache<T> cache;
};

template <typename T>
struct FcGrads {
  Tensor<T> input;  // reshaped to the original input shape
  Tensor<T> weight;
  Tensor<T> bias;
};

/// output = weight * flatten(input) + bias, optionally followed by relu.
template <typename T>
FcForward<T> fully_connected(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias,
                             bool with_relu = false);

template <typename T>
FcGrads<T> fc_backward(const FcCache<T>& cache, const Tensor<T>& weight, const Tensor<T>& grad_out);

enum class Mode { train, infer };

template <typename T>
struct DropoutForward {
  Tensor<T> output;
  Tensor<T> mask;  // 0 or 1/(1-rate) per element; all ones in infer mode
};

/// Inverted dropout.
template <typename T>
DropoutForward<T> dropout(const Tensor<T>& input, double rate, Mode mode, Rng& rng);

template <typename T>
Tensor<T> dropout_backward(const Tensor<T>& mask, const Tensor<T>& grad_out);

}  // namespace deeprank
