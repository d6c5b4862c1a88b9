#include "deeprank/network.hpp"

#include <charconv>
#include <cmath>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

namespace deeprank {

std::string_view to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::conv: return "conv";
    case LayerKind::maxpool: return "maxpool";
    case LayerKind::lrn: return "lrn";
    case LayerKind::fc: return "fc";
    case LayerKind::dropout: return "dropout";
  }
  return "?";
}

LayerKind parse_layer_kind(std::string_view text) {
  for (auto k : {LayerKind::conv, LayerKind::maxpool, LayerKind::lrn, LayerKind::fc, LayerKind::dropout}) {
    if (to_string(k) == text) return k;
  }
  throw std::invalid_argument("unknown layer kind '" + std::string(text) + "'");
}

bool LayerSpec::operator==(const LayerSpec& o) const {
  return kind == o.kind && name == o.name && out == o.out && kernel == o.kernel && stride == o.stride && pad == o.pad &&
         window == o.window && rate == o.rate && relu == o.relu && lrn.k == o.lrn.k && lrn.n == o.lrn.n &&
         lrn.alpha == o.lrn.alpha && lrn.beta == o.lrn.beta;
}

bool NetworkConfig::operator==(const NetworkConfig& o) const {
  return preset == o.preset && input_side == o.input_side && input_channels == o.input_channels && layers == o.layers;
}

namespace {

std::string format_real(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::size_t parse_size(std::string_view text, std::string_view key) {
  std::size_t v = 0;
  auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size()) {
    throw std::invalid_argument("config: bad integer for '" + std::string(key) + "': '" + std::string(text) + "'");
  }
  return v;
}

double parse_real(std::string_view text, std::string_view key) {
  double v = 0;
  auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size()) {
    throw std::invalid_argument("config: bad number for '" + std::string(key) + "': '" + std::string(text) + "'");
  }
  return v;
}

LayerSpec conv(std::string name, std::size_t out, std::size_t kernel, std::size_t stride, std::size_t pad) {
  LayerSpec s;
  s.kind = LayerKind::conv;
  s.name = std::move(name);
  s.out = out;
  s.kernel = kernel;
  s.stride = stride;
  s.pad = pad;
  s.relu = true;
  return s;
}

LayerSpec pool(std::string name, std::size_t window, std::size_t stride) {
  LayerSpec s;
  s.kind = LayerKind::maxpool;
  s.name = std::move(name);
  s.window = window;
  s.stride = stride;
  return s;
}

LayerSpec norm(std::string name) {
  LayerSpec s;
  s.kind = LayerKind::lrn;
  s.name = std::move(name);
  return s;
}

LayerSpec fc(std::string name, std::size_t out, bool relu) {
  LayerSpec s;
  s.kind = LayerKind::fc;
  s.name = std::move(name);
  s.out = out;
  s.relu = relu;
  return s;
}

LayerSpec drop(std::string name, double rate) {
  LayerSpec s;
  s.kind = LayerKind::dropout;
  s.name = std::move(name);
  s.rate = rate;
  return s;
}

}  // namespace

std::string NetworkConfig::to_text() const {
  std::ostringstream os;
  os << "preset = " << preset << '\n';
  os << "input_side = " << input_side << '\n';
  os << "input_channels = " << input_channels << '\n';
  for (const auto& l : layers) {
    os << "layer = " << to_string(l.kind) << " name=" << l.name;
    switch (l.kind) {
      case LayerKind::conv:
        os << " out=" << l.out << " kernel=" << l.kernel << " stride=" << l.stride << " pad=" << l.pad
           << " relu=" << (l.relu ? 1 : 0);
        break;
      case LayerKind::maxpool:
        os << " window=" << l.window << " stride=" << l.stride;
        break;
      case LayerKind::lrn:
        os << " n=" << l.lrn.n << " k=" << format_real(l.lrn.k) << " alpha=" << format_real(l.lrn.alpha)
           << " beta=" << format_real(l.lrn.beta);
        break;
      case LayerKind::fc:
        os << " out=" << l.out << " relu=" << (l.relu ? 1 : 0);
        break;
      case LayerKind::dropout:
        os << " rate=" << format_real(l.rate);
        break;
    }
    os << '\n';
  }
  return os.str();
}

NetworkConfig NetworkConfig::parse(std::string_view text) {
  NetworkConfig cfg;
  cfg.input_side = 0;
  std::istringstream is{std::string(text)};
  std::string line;
  while (std::getline(is, line)) {
    const std::string stripped = trim(line);
    if (stripped.empty() || stripped[0] == '#') continue;
    const auto eq = stripped.find('=');
    if (eq == std::string::npos) throw std::invalid_argument("config: expected 'key = value', got '" + stripped + "'");
    const std::string key = trim(std::string_view(stripped).substr(0, eq));
    const std::string value = trim(std::string_view(stripped).substr(eq + 1));
    if (key == "preset") {
      cfg.preset = value;
    } else if (key == "input_side") {
      cfg.input_side = parse_size(value, key);
    } else if (key == "input_channels") {
      cfg.input_channels = parse_size(value, key);
    } else if (key == "layer") {
      std::istringstream fields(value);
      std::string kind;
      fields >> kind;
      LayerSpec spec;
      spec.kind = parse_layer_kind(kind);
      std::string field;
      while (fields >> field) {
        const auto feq = field.find('=');
        if (feq == std::string::npos) throw std::invalid_argument("config: bad layer field '" + field + "'");
        const std::string fk = field.substr(0, feq);
        const std::string_view fv = std::string_view(field).substr(feq + 1);
        if (fk == "name") spec.name = std::string(fv);
        else if (fk == "out") spec.out = parse_size(fv, fk);
        else if (fk == "kernel") spec.kernel = parse_size(fv, fk);
        else if (fk == "stride") spec.stride = parse_size(fv, fk);
        else if (fk == "pad") spec.pad = parse_size(fv, fk);
        else if (fk == "window") spec.window = parse_size(fv, fk);
        else if (fk == "rate") spec.rate = parse_real(fv, fk);
        else if (fk == "relu") spec.relu = parse_size(fv, fk) != 0;
        else if (fk == "n") spec.lrn.n = parse_size(fv, fk);
        else if (fk == "k") spec.lrn.k = parse_real(fv, fk);
        else if (fk == "alpha") spec.lrn.alpha = parse_real(fv, fk);
        else if (fk == "beta") spec.lrn.beta = parse_real(fv, fk);
        else throw std::invalid_argument("config: unknown layer field '" + fk + "'");
      }
      cfg.layers.push_back(std::move(spec));
    } else {
      throw std::invalid_argument("config: unknown key '" + key + "'");
    }
  }
  return cfg;
}

NetworkConfig preset_config(std::string_view name) {
  NetworkConfig cfg;
  cfg.preset = std::string(name);
  if (name == "desk_small") {
    cfg.input_side = 64;
    // no norm or dropout: both cost held-out rank-1 on the synthetic benchmark
    cfg.layers = {conv("conv1", 16, 5, 2, 2), pool("pool1", 2, 2), conv("conv2", 32, 3, 1, 1),
                  pool("pool2", 2, 2),        fc("fc1", 128, true), fc("fc2", 64, true),
                  fc("score", 1, false)};
  } else if (name == "alexnet_like") {
    cfg.input_side = 227;
    cfg.layers = {conv("conv1", 96, 11, 4, 0),  pool("pool1", 3, 2),      norm("norm1"),
                  conv("conv2", 256, 5, 1, 2),  pool("pool2", 3, 2),      norm("norm2"),
                  conv("conv3", 384, 3, 1, 1),  conv("conv4", 384, 3, 1, 1), conv("conv5", 256, 3, 1, 1),
                  pool("pool5", 3, 2),          fc("fc6", 4096, true),    drop("drop6", 0.5),
                  fc("fc7", 4096, true),        drop("drop7", 0.5),       fc("score", 1, false)};
  } else {
    throw std::invalid_argument("unknown network preset '" + std::string(name) + "'");
  }
  return cfg;
}

ShapePlan plan_network(const NetworkConfig& config) {
  if (config.input_side == 0 || config.input_channels == 0) throw ShapeError("network input extents must be positive");
  if (config.layers.empty()) throw ShapeError("network has no layers");
  ShapePlan plan;
  Shape current{config.input_channels, config.input_side, config.input_side};
  plan.activations.push_back(current);
  std::set<std::string> names;
  for (std::size_t i = 0; i < config.layers.size(); ++i) {
    const auto& l = config.layers[i];
    const std::string where = "layer '" + l.name + "' (#" + std::to_string(i + 1) + ", " + std::string(to_string(l.kind)) + ")";
    if (l.name.empty()) throw ShapeError("layer #" + std::to_string(i + 1) + " has no name");
    if (!names.insert(l.name).second) throw ShapeError(where + ": duplicate layer name");
    try {
      switch (l.kind) {
        case LayerKind::conv: {
          if (current.size() != 3) throw ShapeError("conv needs a [C,H,W] input, got " + shape_string(current));
          if (l.out == 0 || l.kernel == 0) throw ShapeError("conv needs positive out and kernel");
          const std::size_t h = conv_output_extent(current[1], l.kernel, l.stride, l.pad);
          const std::size_t w = conv_output_extent(current[2], l.kernel, l.stride, l.pad);
          const std::size_t fan_in = current[0] * l.kernel * l.kernel;
          plan.params.push_back({l.name + ".weight", {l.out, current[0], l.kernel, l.kernel}, fan_in});
          plan.params.push_back({l.name + ".bias", {l.out}, fan_in});
          current = {l.out, h, w};
          break;
        }
        case LayerKind::maxpool: {
          if (current.size() != 3) throw ShapeError("maxpool needs a [C,H,W] input, got " + shape_string(current));
          if (l.window == 0 || l.stride == 0) throw ShapeError("maxpool needs positive window and stride");
          if (l.window > current[1] || l.window > current[2]) {
            throw ShapeError("pool window " + std::to_string(l.window) + " larger than input " + shape_string(current));
          }
          current = {current[0], (current[1] - l.window) / l.stride + 1, (current[2] - l.window) / l.stride + 1};
          break;
        }
        case LayerKind::lrn:
          if (current.size() != 3) throw ShapeError("lrn needs a [C,H,W] input, got " + shape_string(current));
          if (l.lrn.n == 0 || l.lrn.n % 2 == 0 || !(l.lrn.k > 0)) throw ShapeError("lrn needs odd n and positive k");
          break;
        case LayerKind::fc: {
          if (l.out == 0) throw ShapeError("fc needs a positive output dim");
          const std::size_t in = shape_elements(current);
          plan.params.push_back({l.name + ".weight", {l.out, in}, in});
          plan.params.push_back({l.name + ".bias", {l.out}, in});
          current = {l.out};
          break;
        }
        case LayerKind::dropout:
          if (!(l.rate >= 0.0 && l.rate < 1.0)) throw ShapeError("dropout rate must lie in [0,1)");
          break;
      }
    } catch (const ShapeError& e) {
      throw ShapeError(where + ": " + e.what());
    }
    plan.activations.push_back(current);
  }
  const auto& last = config.layers.back();
  if (last.kind != LayerKind::fc || last.out != 1 || last.relu) {
    throw ShapeError("layer '" + last.name + "': the final layer must be a linear fc with one output");
  }
  const Shape& feature = plan.activations[plan.activations.size() - 2];
  plan.feature_dim = shape_elements(feature);
  for (const auto& p : plan.params) plan.parameter_count += shape_elements(p.shape);
  return plan;
}

template <typename T>
Network<T>::Network(NetworkConfig config) : config_(std::move(config)), plan_(plan_network(config_)) {
  for (const auto& p : plan_.params) params_.emplace_back(p.shape);
  std::size_t next = 0;
  for (const auto& l : config_.layers) {
    param_offset_.push_back(next);
    if (l.kind == LayerKind::conv || l.kind == LayerKind::fc) next += 2;
  }
}

template <typename T>
Tensor<T>& Network<T>::param(std::string_view name) {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (plan_.params[i].name == name) return params_[i];
  }
  throw std::out_of_range("no parameter named '" + std::string(name) + "'");
}

template <typename T>
const Tensor<T>& Network<T>::param(std::string_view name) const {
  return const_cast<Network<T>*>(this)->param(name);
}

InitScheme parse_init_scheme(std::string_view text) {
  if (text == "zeros") return InitScheme::zeros;
  if (text == "uniform") return InitScheme::uniform;
  if (text == "fan_in_normal") return InitScheme::fan_in_normal;
  throw std::invalid_argument("unknown init scheme '" + std::string(text) + "'");
}

template <typename T>
Network<T> build_network(const NetworkConfig& config, const InitOptions& init) {
  Network<T> net(config);
  net.init_seed = init.seed;
  Rng rng(init.seed);
  for (std::size_t i = 0; i < net.params().size(); ++i) {
    auto& p = net.params()[i];
    const auto& info = net.plan().params[i];
    const bool is_bias = p.rank() == 1;
    switch (init.scheme) {
      case InitScheme::zeros:
        break;
      case InitScheme::uniform: {
        std::uniform_real_distribution<double> dist(-init.uniform_bound, init.uniform_bound);
        for (auto& v : p.values()) v = static_cast<T>(dist(rng));
        break;
      }
      case InitScheme::fan_in_normal: {
        if (is_bias) break;
        std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(info.fan_in)));
        for (auto& v : p.values()) v = static_cast<T>(dist(rng));
        break;
      }
    }
  }
  return net;
}

template <typename T>
ScoreResult<T> score_pair(const Network<T>& net, const Tensor<T>& pair_image, Mode mode, Rng& rng) {
  const auto& cfg = net.config();
  require_same_shape(Shape{cfg.input_channels, cfg.input_side, cfg.input_side}, pair_image.shape(), "score_pair input");

  Tensor<T> x = pair_image;
  const std::size_t plane = cfg.input_side * cfg.input_side;
  for (std::size_t c = 0; c < cfg.input_channels && c < 3; ++c) {
    const T m = net.input_mean[c];
    if (m == T(0)) continue;
    T* d = x.data() + c * plane;
    for (std::size_t i = 0; i < plane; ++i) d[i] -= m;
  }

  ScoreResult<T> result;
  result.cache.mode = mode;
  const bool keep = mode == Mode::train;
  if (keep) result.cache.layers.reserve(cfg.layers.size());
  const auto& params = net.params();
  for (std::size_t i = 0; i < cfg.layers.size(); ++i) {
    const auto& l = cfg.layers[i];
    const std::size_t off = net.param_offset(i);
    switch (l.kind) {
      case LayerKind::conv: {
        ConvParams<T> p{params[off], params[off + 1], l.stride, l.pad};
        auto fwd = conv2d(x, p, l.relu);
        x = std::move(fwd.output);
        if (keep) result.cache.layers.emplace_back(std::move(fwd.cache));
        break;
      }
      case LayerKind::maxpool: {
        auto fwd = maxpool(x, l.window, l.stride);
        x = std::move(fwd.output);
        if (keep) result.cache.layers.emplace_back(std::move(fwd.cache));
        break;
      }
      case LayerKind::lrn: {
        auto fwd = lrn(x, l.lrn);
        x = std::move(fwd.output);
        if (keep) result.cache.layers.emplace_back(std::move(fwd.cache));
        break;
      }
      case LayerKind::fc: {
        auto fwd = fully_connected(x, params[off], params[off + 1], l.relu);
        x = std::move(fwd.output);
        if (keep) result.cache.layers.emplace_back(std::move(fwd.cache));
        break;
      }
      case LayerKind::dropout: {
        auto fwd = dropout(x, l.rate, mode, rng);
        x = std::move(fwd.output);
        if (keep) result.cache.layers.emplace_back(std::move(fwd.mask));
        break;
      }
    }
  }
  result.score = x[0];
  return result;
}

template <typename T>
T score_pair(const Network<T>& net, const Tensor<T>& pair_image) {
  Rng unused(0);
  return score_pair(net, pair_image, Mode::infer, unused).score;
}

template <typename T>
Gradients<T> zero_gradients(const Network<T>& net) {
  Gradients<T> g;
  g.reserve(net.params().size());
  for (const auto& p : net.params()) g.emplace_back(p.shape());
  return g;
}

namespace {

template <typename T>
void accumulate(Tensor<T>& dst, const Tensor<T>& src) {
  T* d = dst.data();
  const T* s = src.data();
  for (std::size_t i = 0; i < dst.size(); ++i) d[i] += s[i];
}

}  // namespace

template <typename T>
void backward_pair(const Network<T>& net, const ForwardCache<T>& cache, T dL_df, Gradients<T>& grads,
                   Tensor<T>* grad_input) {
  if (cache.mode != Mode::train) throw std::invalid_argument("backward_pair: cache comes from an infer-mode forward");
  const auto& layers = net.config().layers;
  if (cache.layers.size() != layers.size()) throw std::invalid_argument("backward_pair: cache does not match network");
  if (grads.size() != net.params().size()) throw ShapeError("backward_pair: gradient set does not match network");

  Tensor<T> g({1}, dL_df);
  const auto& params = net.params();
  for (std::size_t i = layers.size(); i-- > 0;) {
    const auto& l = layers[i];
    const std::size_t off = net.param_offset(i);
    const auto& lc = cache.layers[i];
    switch (l.kind) {
      case LayerKind::conv: {
        auto r = conv2d_backward(std::get<ConvCache<T>>(lc), params[off], g);
        accumulate(grads[off], r.kernels);
        accumulate(grads[off + 1], r.bias);
        g = std::move(r.input);
        break;
      }
      case LayerKind::maxpool:
        g = maxpool_backward(std::get<PoolCache<T>>(lc), g);
        break;
      case LayerKind::lrn:
        g = lrn_backward(std::get<LrnCache<T>>(lc), g);
        break;
      case LayerKind::fc: {
        auto r = fc_backward(std::get<FcCache<T>>(lc), params[off], g);
        accumulate(grads[off], r.weight);
        accumulate(grads[off + 1], r.bias);
        g = std::move(r.input);
        break;
      }
      case LayerKind::dropout:
        g = dropout_backward(std::get<Tensor<T>>(lc), g);
        break;
    }
  }
  if (grad_input) *grad_input = std::move(g);
}

template class Network<float>;
template class Network<double>;

#define DEEPRANK_INSTANTIATE_NETWORK(T)                                                               \
  template Network<T> build_network(const NetworkConfig&, const InitOptions&);                        \
  template ScoreResult<T> score_pair(const Network<T>&, const Tensor<T>&, Mode, Rng&);                \
  template T score_pair(const Network<T>&, const Tensor<T>&);                                         \
  template Gradients<T> zero_gradients(const Network<T>&);                                            \
  template void backward_pair(const Network<T>&, const ForwardCache<T>&, T, Gradients<T>&, Tensor<T>*);

DEEPRANK_INSTANTIATE_NETWORK(float)
DEEPRANK_INSTANTIATE_NETWORK(double)

}  // namespace deeprank
