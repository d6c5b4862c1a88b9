#pragma once

// The pair-scoring network: a stack of conv / maxpool / lrn / fc / dropout
// layers mapping one stitched [3, S, S] image to a scalar similarity. The last
// layer is a linear fc with one output, so the score is <phi, w> + b where phi
// is the penultimate activation.

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "deeprank/kernels.hpp"
#include "deeprank/tensor.hpp"

namespace deeprank {

enum class LayerKind { conv, maxpool, lrn, fc, dropout };

std::string_view to_string(LayerKind kind);
LayerKind parse_layer_kind(std::string_view text);

struct LayerSpec {
  LayerKind kind = LayerKind::conv;
  std::string name;
  std::size_t out = 0;     // conv channels or fc output dim
  std::size_t kernel = 0;  // conv
  std::size_t stride = 1;  // conv, maxpool
  std::size_t pad = 0;     // conv
  std::size_t window = 0;  // maxpool
  double rate = 0.5;       // dropout
  bool relu = false;       // conv, fc
  LrnParams lrn;

  bool operator==(const LayerSpec&) const;
};

struct NetworkConfig {
  std::string preset = "custom";
  std::size_t input_side = 0;
  std::size_t input_channels = 3;
  std::vector<LayerSpec> layers;

  /// Canonical `key = value` text, one layer per `layer` line. Stable across runs.
  std::string to_text() const;
  static NetworkConfig parse(std::string_view text);

  bool operator==(const NetworkConfig&) const;
};

/// "desk_small" or "alexnet_like".
NetworkConfig preset_config(std::string_view name);

struct ParamInfo {
  std::string name;
  Shape shape;
  std::size_t fan_in = 0;
};

struct ShapePlan {
  std::vector<Shape> activations;  // network input, then the output of each layer
  std::vector<ParamInfo> params;
  std::size_t parameter_count = 0;
  std::size_t feature_dim = 0;  // width of the joint feature feeding the final layer
};

/// Validates the config and derives every activation and parameter shape.
/// Throws ShapeError naming the first offending layer.
ShapePlan plan_network(const NetworkConfig& config);

template <typename T>
class Network {
 public:
  Network() = default;
  /// Zero-initialized parameters.
  explicit Network(NetworkConfig config);

  const NetworkConfig& config() const { return config_; }
  const ShapePlan& plan() const { return plan_; }

  std::vector<Tensor<T>>& params() { return params_; }
  const std::vector<Tensor<T>>& params() const { return params_; }
  const std::string& param_name(std::size_t i) const { return plan_.params.at(i).name; }
  Tensor<T>& param(std::string_view name);
  const Tensor<T>& param(std::string_view name) const;
  std::size_t parameter_count() const { return plan_.parameter_count; }

  /// Index of the first parameter owned by layer `layer` (conv/fc own weight then bias).
  std::size_t param_offset(std::size_t layer) const { return param_offset_.at(layer); }

  template <typename U>
  Network<U> cast() const {
    Network<U> out(config_);
    for (std::size_t i = 0; i < params_.size(); ++i) out.params()[i] = params_[i].template cast<U>();
    for (std::size_t c = 0; c < 3; ++c) out.input_mean[c] = static_cast<U>(input_mean[c]);
    out.init_seed = init_seed;
    return out;
  }

  /// Per-channel value subtracted from the input before the first layer.
  std::array<T, 3> input_mean{};
  std::uint64_t init_seed = 0;

 private:
  NetworkConfig config_;
  ShapePlan plan_;
  std::vector<Tensor<T>> params_;
  std::vector<std::size_t> param_offset_;
};

enum class InitScheme { zeros, uniform, fan_in_normal };

InitScheme parse_init_scheme(std::string_view text);

struct InitOptions {
  InitScheme scheme = InitScheme::fan_in_normal;
  double uniform_bound = 0.05;
  std::uint64_t seed = 0;
};

/// fan_in_normal draws weights from N(0, 2/fan_in) and zeroes biases.
template <typename T>
Network<T> build_network(const NetworkConfig& config, const InitOptions& init);

template <typename T>
using LayerCache = std::variant<ConvCache<T>, PoolCache<T>, LrnCache<T>, FcCache<T>, Tensor<T>>;

template <typename T>
struct ForwardCache {
  Mode mode = Mode::infer;
  std::vector<LayerCache<T>> layers;
};

template <typename T>
struct ScoreResult {
  T score{};
  ForwardCache<T> cache;  // populated only in train mode
};

/// f(x, y) for one stitched pair image [3, input_side, input_side].
template <typename T>
ScoreResult<T> score_pair(const Network<T>& net, const Tensor<T>& pair_image, Mode mode, Rng& rng);

/// Infer-mode score; a pure function of the parameters and the input.
template <typename T>
T score_pair(const Network<T>& net, const Tensor<T>& pair_image);

template <typename T>
using Gradients = std::vector<Tensor<T>>;

template <typename T>
Gradients<T> zero_gradients(const Network<T>& net);

/// Adds dL_df * d f / d params into `grads` (accumulating). Optionally returns
/// the gradient with respect to the input image.
template <typename T>
void backward_pair(const Network<T>& net, const ForwardCache<T>& cache, T dL_df, Gradients<T>& grads,
                   Tensor<T>* grad_input = nullptr);

extern template class Network<float>;
extern template class Network<double>;

}  // namespace deeprank
