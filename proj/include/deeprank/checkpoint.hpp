#pragma once

// Binary checkpoint, all integers little-endian:
//   "DRNK" | u32 version | u32 text_len | text (UTF-8) | u32 array_count |
//   per array: u32 name_len | name | u8 dtype (0 = f32) | u8 rank | u64 extents[rank] | f32 data
// The text block is the canonical network config followed by `meta.*` lines.

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "deeprank/network.hpp"

namespace deeprank {

inline constexpr std::uint32_t kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigMismatchError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainingMeta {
  std::uint64_t epoch = 0;
  std::uint64_t loss_digest = 0;
  std::uint64_t seed = 0;
  std::map<std::string, std::string> extra;

  bool operator==(const TrainingMeta&) const = default;
};

struct NamedArray {
  std::string name;
  Tensor<float> tensor;
};

struct Checkpoint {
  NetworkConfig config;
  std::array<float, 3> input_mean{};
  TrainingMeta meta;
  std::vector<NamedArray> arrays;
};

/// FNV-1a over the IEEE bit patterns of the per-epoch losses.
std::uint64_t loss_digest(std::span<const double> losses);

Checkpoint make_checkpoint(const Network<float>& net, TrainingMeta meta = {});

/// Rebuilds the network; array names and shapes must match the stored config.
Network<float> network_from_checkpoint(const Checkpoint& ckpt);

/// As above, but first requires the stored config to equal `expected`;
/// throws ConfigMismatchError listing the first differing line.
Network<float> network_from_checkpoint(const Checkpoint& ckpt, const NetworkConfig& expected);

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
void save_checkpoint(const Network<float>& net, const std::filesystem::path& path, TrainingMeta meta = {});

Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace deeprank
