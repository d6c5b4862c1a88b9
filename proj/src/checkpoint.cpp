#include "deeprank/checkpoint.hpp"

#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <sstream>

namespace deeprank {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

std::uint64_t loss_digest(std::span<const double> losses) {
  std::uint64_t h = 1469598103934665603ULL;
  for (double v : losses) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    for (int b = 0; b < 8; ++b) {
      h ^= (bits >> (8 * b)) & 0xFF;
      h *= 1099511628211ULL;
    }
  }
  return h;
}

Checkpoint make_checkpoint(const Network<float>& net, TrainingMeta meta) {
  Checkpoint ckpt{net.config(), net.input_mean, std::move(meta), {}};
  for (std::size_t i = 0; i < net.params().size(); ++i) ckpt.arrays.push_back({net.param_name(i), net.params()[i]});
  return ckpt;
}

Network<float> network_from_checkpoint(const Checkpoint& ckpt) {
  Network<float> net(ckpt.config);
  if (ckpt.arrays.size() != net.params().size()) {
    throw CheckpointError("checkpoint holds " + std::to_string(ckpt.arrays.size()) + " arrays, config needs " +
                          std::to_string(net.params().size()));
  }
  for (std::size_t i = 0; i < ckpt.arrays.size(); ++i) {
    const auto& a = ckpt.arrays[i];
    if (a.name != net.param_name(i)) {
      throw CheckpointError("checkpoint array #" + std::to_string(i) + " is '" + a.name + "', expected '" +
                            net.param_name(i) + "'");
    }
    if (a.tensor.shape() != net.params()[i].shape()) {
      throw CheckpointError("checkpoint array '" + a.name + "' has shape " + shape_string(a.tensor.shape()) +
                            ", config needs " + shape_string(net.params()[i].shape()));
    }
    net.params()[i] = a.tensor;
  }
  net.input_mean = ckpt.input_mean;
  net.init_seed = ckpt.meta.seed;
  return net;
}

Network<float> network_from_checkpoint(const Checkpoint& ckpt, const NetworkConfig& expected) {
  if (!(ckpt.config == expected)) {
    const std::string have = ckpt.config.to_text();
    const std::string want = expected.to_text();
    std::istringstream a(have), b(want);
    std::string la, lb;
    while (true) {
      const bool ga = static_cast<bool>(std::getline(a, la));
      const bool gb = static_cast<bool>(std::getline(b, lb));
      if (!ga) la = "<end>";
      if (!gb) lb = "<end>";
      if (la != lb || (!ga && !gb)) break;
    }
    throw ConfigMismatchError("checkpoint config does not match: checkpoint has '" + la + "', expected '" + lb + "'");
  }
  return network_from_checkpoint(ckpt);
}

namespace {

std::string format_float(float v) {
  char buf[48];
  auto r = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, r.ptr);
}

std::string text_block(const Checkpoint& ckpt) {
  std::ostringstream os;
  os << ckpt.config.to_text();
  os << "meta.epoch = " << ckpt.meta.epoch << '\n';
  os << "meta.loss_digest = " << ckpt.meta.loss_digest << '\n';
  os << "meta.seed = " << ckpt.meta.seed << '\n';
  os << "meta.input_mean = " << format_float(ckpt.input_mean[0]) << ' ' << format_float(ckpt.input_mean[1]) << ' '
     << format_float(ckpt.input_mean[2]) << '\n';
  for (const auto& [k, v] : ckpt.meta.extra) {
    if (k.find_first_of("= \n") != std::string::npos || v.find('\n') != std::string::npos) {
      throw CheckpointError("metadata entry '" + k + "' cannot be stored as a text line");
    }
    os << "meta.extra." << k << " = " << v << '\n';
  }
  return os.str();
}

template <typename U>
void put(std::string& out, U value) {
  char bytes[sizeof(U)];
  std::memcpy(bytes, &value, sizeof(U));
  out.append(bytes, sizeof(U));
}

class Reader {
 public:
  explicit Reader(std::string data) : data_(std::move(data)) {}

  template <typename U>
  U get(const std::string& what) {
    need(sizeof(U), what);
    U v;
    std::memcpy(&v, data_.data() + pos_, sizeof(U));
    pos_ += sizeof(U);
    return v;
  }

  std::string bytes(std::size_t n, const std::string& what) {
    need(n, what);
    std::string s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  void copy_to(void* dst, std::size_t n, const std::string& what) {
    need(n, what);
    std::memcpy(dst, data_.data() + pos_, n);
    pos_ += n;
  }

  bool at_end() const { return pos_ == data_.size(); }

 private:
  void need(std::size_t n, const std::string& what) {
    if (data_.size() - pos_ < n) {
      throw CheckpointError("checkpoint truncated while reading " + what + " (needed " + std::to_string(n) +
                            " bytes at offset " + std::to_string(pos_) + ", " +
                            std::to_string(data_.size() - pos_) + " left)");
    }
  }

  std::string data_;
  std::size_t pos_ = 0;
};

std::uint64_t parse_u64(const std::string& v, const std::string& key) {
  std::uint64_t out = 0;
  auto r = std::from_chars(v.data(), v.data() + v.size(), out);
  if (r.ec != std::errc() || r.ptr != v.data() + v.size()) throw CheckpointError("bad value for " + key + ": '" + v + "'");
  return out;
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  std::string out;
  out.append("DRNK", 4);
  put<std::uint32_t>(out, kCheckpointVersion);
  const std::string text = text_block(ckpt);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(text.size()));
  out += text;
  put<std::uint32_t>(out, static_cast<std::uint32_t>(ckpt.arrays.size()));
  for (const auto& a : ckpt.arrays) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(a.name.size()));
    out += a.name;
    put<std::uint8_t>(out, 0);
    put<std::uint8_t>(out, static_cast<std::uint8_t>(a.tensor.rank()));
    for (auto e : a.tensor.shape()) put<std::uint64_t>(out, e);
    out.append(reinterpret_cast<const char*>(a.tensor.data()), a.tensor.size() * sizeof(float));
  }

  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw CheckpointError("cannot open '" + tmp.string() + "' for writing");
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw CheckpointError("write to '" + tmp.string() + "' failed");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp);
    throw CheckpointError("cannot move checkpoint into place at '" + path.string() + "': " + ec.message());
  }
}

void save_checkpoint(const Network<float>& net, const std::filesystem::path& path, TrainingMeta meta) {
  save_checkpoint(make_checkpoint(net, std::move(meta)), path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw CheckpointError("cannot open checkpoint '" + path.string() + "'");
  std::string data((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  Reader r(std::move(data));

  if (r.bytes(4, "magic") != "DRNK") throw CheckpointError("'" + path.string() + "' is not a checkpoint (bad magic)");
  const auto version = r.get<std::uint32_t>("version");
  if (version != kCheckpointVersion) {
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version) + " (expected " +
                          std::to_string(kCheckpointVersion) + ")");
  }
  const auto text_len = r.get<std::uint32_t>("config length");
  const std::string text = r.bytes(text_len, "config text");

  Checkpoint ckpt;
  std::string config_text;
  std::istringstream lines(text);
  std::string line;
  while (std::getline(lines, line)) {
    if (line.rfind("meta.", 0) != 0) {
      config_text += line;
      config_text += '\n';
      continue;
    }
    const auto eq = line.find(" = ");
    if (eq == std::string::npos) throw CheckpointError("malformed metadata line '" + line + "'");
    const std::string key = line.substr(0, eq);
    const std::string value = line.substr(eq + 3);
    if (key == "meta.epoch") ckpt.meta.epoch = parse_u64(value, key);
    else if (key == "meta.loss_digest") ckpt.meta.loss_digest = parse_u64(value, key);
    else if (key == "meta.seed") ckpt.meta.seed = parse_u64(value, key);
    else if (key == "meta.input_mean") {
      std::istringstream vs(value);
      for (auto& m : ckpt.input_mean) {
        std::string tok;
        vs >> tok;
        auto res = std::from_chars(tok.data(), tok.data() + tok.size(), m);
        if (tok.empty() || res.ec != std::errc()) throw CheckpointError("bad meta.input_mean '" + value + "'");
      }
    } else if (key.rfind("meta.extra.", 0) == 0) {
      ckpt.meta.extra[key.substr(11)] = value;
    } else {
      throw CheckpointError("unknown metadata key '" + key + "'");
    }
  }
  try {
    ckpt.config = NetworkConfig::parse(config_text);
  } catch (const std::exception& e) {
    throw CheckpointError(std::string("checkpoint config is invalid: ") + e.what());
  }

  const auto count = r.get<std::uint32_t>("array count");
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::string label = "array #" + std::to_string(i);
    const auto name_len = r.get<std::uint32_t>(label + " name length");
    NamedArray a;
    a.name = r.bytes(name_len, label + " name");
    const std::string where = "array '" + a.name + "'";
    const auto dtype = r.get<std::uint8_t>(where + " dtype");
    if (dtype != 0) throw CheckpointError(where + " has unsupported dtype code " + std::to_string(dtype));
    const auto rank = r.get<std::uint8_t>(where + " rank");
    if (rank == 0) throw CheckpointError(where + " has rank 0");
    Shape shape(rank);
    for (auto& e : shape) {
      e = r.get<std::uint64_t>(where + " extents");
      if (e == 0) throw CheckpointError(where + " has a zero extent");
    }
    a.tensor = Tensor<float>(shape);
    r.copy_to(a.tensor.data(), a.tensor.size() * sizeof(float), where + " data");
    ckpt.arrays.push_back(std::move(a));
  }
  if (!r.at_end()) throw CheckpointError("trailing bytes after the last array in '" + path.string() + "'");
  return ckpt;
}

}  // namespace deeprank
