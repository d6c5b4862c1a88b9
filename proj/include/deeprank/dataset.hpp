#pragma once

// On-disk layout: <root>/cam_<label>/<identity:04d>_<index:02d>.png

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "deeprank/image_ops.hpp"

namespace deeprank {

class DatasetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct DatasetEntry {
  int identity = 0;
  std::string camera;
  int index = 0;
  std::filesystem::path path;                     // empty for in-memory entries
  std::shared_ptr<const Tensor<float>> pixels;    // set for in-memory entries

  bool operator==(const DatasetEntry& o) const {
    return identity == o.identity && camera == o.camera && index == o.index && path == o.path;
  }
};

struct DatasetIndex {
  std::string name;
  std::vector<DatasetEntry> entries;  // sorted by (camera, identity, index)

  std::vector<std::string> cameras() const;
  std::vector<int> identities() const;
};

DatasetIndex ingest(const std::filesystem::path& root);

struct SplitSpec {
  std::vector<int> train_identities;
  std::vector<int> test_identities;
  std::uint64_t seed = 0;
};

/// Shuffles identities by seed and gives round(fraction * n) of them to training.
SplitSpec split(const DatasetIndex& index, double fraction, std::uint64_t seed);

DatasetIndex restrict_to(const DatasetIndex& index, std::span<const int> identities);

/// Pixels scaled to [0,1], channel order R, G, B.
PersonImage load_image(const DatasetEntry& entry);
std::vector<PersonImage> load_images(const DatasetIndex& index);

std::string entry_relative_path(const DatasetEntry& entry);

/// Writes every entry as PNG under the standard layout.
void export_dataset(const DatasetIndex& index, const std::filesystem::path& root);

}  // namespace deeprank
