#include "deeprank/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <regex>
#include <set>

#include "deeprank/png_io.hpp"
#include "deeprank/sampler.hpp"

namespace fs = std::filesystem;

namespace deeprank {

std::vector<std::string> DatasetIndex::cameras() const {
  std::set<std::string> s;
  for (const auto& e : entries) s.insert(e.camera);
  return {s.begin(), s.end()};
}

std::vector<int> DatasetIndex::identities() const {
  std::set<int> s;
  for (const auto& e : entries) s.insert(e.identity);
  return {s.begin(), s.end()};
}

namespace {

void sort_entries(std::vector<DatasetEntry>& entries) {
  std::sort(entries.begin(), entries.end(), [](const DatasetEntry& a, const DatasetEntry& b) {
    return std::tie(a.camera, a.identity, a.index) < std::tie(b.camera, b.identity, b.index);
  });
}

}  // namespace

DatasetIndex ingest(const fs::path& root) {
  if (!fs::is_directory(root)) throw DatasetError("dataset root '" + root.string() + "' is not a directory");
  static const std::regex file_pattern(R"(^(\d{4,})_(\d{2,})\.png$)");
  DatasetIndex index;
  index.name = root.filename().empty() ? root.parent_path().filename().string() : root.filename().string();
  for (const auto& dir : fs::directory_iterator(root)) {
    const std::string dirname = dir.path().filename().string();
    if (!dir.is_directory() || dirname.rfind("cam_", 0) != 0) continue;
    const std::string camera = dirname.substr(4);
    if (camera.empty()) throw DatasetError("camera directory '" + dir.path().string() + "' has an empty label");
    for (const auto& file : fs::directory_iterator(dir.path())) {
      if (!file.is_regular_file()) continue;
      const std::string name = file.path().filename().string();
      std::smatch m;
      if (!std::regex_match(name, m, file_pattern)) {
        throw DatasetError("malformed dataset file name '" + file.path().string() +
                           "' (expected <identity:04d>_<index:02d>.png)");
      }
      DatasetEntry e;
      e.identity = std::stoi(m[1].str());
      e.index = std::stoi(m[2].str());
      e.camera = camera;
      e.path = file.path();
      index.entries.push_back(std::move(e));
    }
  }
  if (index.entries.empty()) throw DatasetError("dataset '" + root.string() + "' contains no images");
  sort_entries(index.entries);
  return index;
}

SplitSpec split(const DatasetIndex& index, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0)) throw std::invalid_argument("split fraction must lie in (0, 1)");
  std::vector<int> ids = index.identities();
  if (ids.size() < 2) throw std::invalid_argument("split needs at least 2 identities, dataset has " + std::to_string(ids.size()));
  Rng rng(derive_seed(seed, {0x5u}));
  for (std::size_t i = ids.size(); i > 1; --i) std::swap(ids[i - 1], ids[static_cast<std::size_t>(rng() % i)]);
  auto n_train = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(ids.size())));
  n_train = std::clamp<std::size_t>(n_train, 1, ids.size() - 1);
  SplitSpec s;
  s.seed = seed;
  s.train_identities.assign(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(n_train));
  s.test_identities.assign(ids.begin() + static_cast<std::ptrdiff_t>(n_train), ids.end());
  std::sort(s.train_identities.begin(), s.train_identities.end());
  std::sort(s.test_identities.begin(), s.test_identities.end());
  return s;
}

DatasetIndex restrict_to(const DatasetIndex& index, std::span<const int> identities) {
  const std::set<int> keep(identities.begin(), identities.end());
  DatasetIndex out;
  out.name = index.name;
  for (const auto& e : index.entries) {
    if (keep.count(e.identity)) out.entries.push_back(e);
  }
  return out;
}

PersonImage load_image(const DatasetEntry& entry) {
  PersonImage img;
  img.identity = entry.identity;
  img.camera = entry.camera;
  img.index = entry.index;
  if (entry.pixels) {
    img.pixels = *entry.pixels;
  } else {
    try {
      img.pixels = read_png(entry.path);
    } catch (const std::exception& e) {
      throw DatasetError(std::string("cannot load image: ") + e.what());
    }
  }
  if (img.pixels.rank() != 3 || img.pixels.extent(0) != 3 || img.pixels.extent(1) < 8 || img.pixels.extent(2) < 8) {
    throw DatasetError("image '" + entry_relative_path(entry) + "' has unusable extents " + shape_string(img.pixels.shape()));
  }
  return img;
}

std::vector<PersonImage> load_images(const DatasetIndex& index) {
  std::vector<PersonImage> images;
  images.reserve(index.entries.size());
  for (const auto& e : index.entries) images.push_back(load_image(e));
  return images;
}

std::string entry_relative_path(const DatasetEntry& entry) {
  char name[64];
  std::snprintf(name, sizeof(name), "%04d_%02d.png", entry.identity, entry.index);
  return "cam_" + entry.camera + "/" + name;
}

void export_dataset(const DatasetIndex& index, const fs::path& root) {
  for (const auto& e : index.entries) {
    const fs::path target = root / entry_relative_path(e);
    fs::create_directories(target.parent_path());
    write_png(load_image(e).pixels, target);
  }
}

}  // namespace deeprank
