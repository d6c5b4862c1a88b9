#include "deeprank/sampler.hpp"

#include <charconv>
#include <sstream>
#include <stdexcept>

namespace deeprank {

Curriculum::Curriculum(std::map<std::size_t, std::size_t> steps) : steps_(std::move(steps)) {
  if (steps_.empty() || steps_.begin()->first != 0) {
    throw std::invalid_argument("curriculum must define a reference set size from epoch 0");
  }
  std::size_t previous = 0;
  for (const auto& [epoch, size] : steps_) {
    if (size != 1 && size != 2 && size != 4) {
      throw std::invalid_argument("curriculum size " + std::to_string(size) + " at epoch " + std::to_string(epoch) +
                                  " is not one of 1, 2, 4");
    }
    if (size < previous) throw std::invalid_argument("curriculum sizes must not decrease over epochs");
    previous = size;
  }
}

Curriculum Curriculum::parse(std::string_view text) {
  std::map<std::size_t, std::size_t> steps;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto comma = text.find(',', pos);
    const std::string_view item = text.substr(pos, comma == std::string_view::npos ? std::string_view::npos : comma - pos);
    const auto colon = item.find(':');
    std::size_t epoch = 0, size = 0;
    const bool ok = colon != std::string_view::npos &&
                    std::from_chars(item.data(), item.data() + colon, epoch).ptr == item.data() + colon &&
                    std::from_chars(item.data() + colon + 1, item.data() + item.size(), size).ptr ==
                        item.data() + item.size() &&
                    colon > 0 && colon + 1 < item.size();
    if (!ok) throw std::invalid_argument("bad curriculum entry '" + std::string(item) + "', expected epoch:size");
    if (!steps.emplace(epoch, size).second) throw std::invalid_argument("duplicate curriculum epoch " + std::to_string(epoch));
    if (comma == std::string_view::npos) break;
    pos = comma + 1;
  }
  return Curriculum(std::move(steps));
}

Curriculum Curriculum::thirds(std::size_t epochs) {
  std::map<std::size_t, std::size_t> steps{{0, 1}};
  if (epochs >= 3) {
    steps[epochs / 3] = 2;
    steps[2 * epochs / 3] = 4;
  }
  return Curriculum(std::move(steps));
}

std::size_t Curriculum::reference_count(std::size_t epoch) const {
  auto it = steps_.upper_bound(epoch);
  --it;
  return it->second;
}

std::string Curriculum::to_string() const {
  std::ostringstream os;
  bool first = true;
  for (const auto& [epoch, size] : steps_) {
    if (!first) os << ',';
    os << epoch << ':' << size;
    first = false;
  }
  return os.str();
}

std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> salts) {
  auto mix = [](std::uint64_t z) {
    z += 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  };
  std::uint64_t h = mix(base);
  for (auto s : salts) h = mix(h ^ mix(s));
  return h;
}

namespace {

std::size_t uniform_index(Rng& rng, std::size_t n) { return static_cast<std::size_t>(rng() % n); }

bool is_mismatch(const PersonImage& probe, const PersonImage& other, bool relaxed) {
  if (other.identity == probe.identity) return false;
  return relaxed || other.camera != probe.camera;
}

}  // namespace

std::size_t mismatch_pool_size(std::span<const PersonImage> images, std::size_t probe, bool cross_view_relaxed) {
  std::size_t n = 0;
  for (const auto& img : images) n += is_mismatch(images[probe], img, cross_view_relaxed) ? 1 : 0;
  return n;
}

std::vector<RankingUnit> build_units(std::span<const PersonImage> images, std::size_t epoch, std::size_t reference_count,
                                     bool cross_view_relaxed, std::uint64_t seed) {
  if (reference_count == 0) throw std::invalid_argument("build_units: reference set size must be positive");
  Rng rng(derive_seed(seed, {epoch}));
  std::vector<RankingUnit> units;
  std::vector<std::size_t> positives, pool;
  for (std::size_t p = 0; p < images.size(); ++p) {
    const auto& probe = images[p];
    positives.clear();
    pool.clear();
    for (std::size_t j = 0; j < images.size(); ++j) {
      const auto& other = images[j];
      if (other.identity == probe.identity) {
        if (other.camera != probe.camera) positives.push_back(j);
      } else if (is_mismatch(probe, other, cross_view_relaxed)) {
        pool.push_back(j);
      }
    }
    if (positives.empty()) continue;
    if (pool.size() < reference_count) {
      throw std::invalid_argument("build_units: probe " + std::to_string(probe.identity) + "/" + probe.camera + " has " +
                                  std::to_string(pool.size()) + " candidate references, " +
                                  std::to_string(reference_count) + " requested (too few identities)");
    }
    RankingUnit unit;
    unit.probe = p;
    unit.positive = positives[uniform_index(rng, positives.size())];
    for (std::size_t k = 0; k < reference_count; ++k) {
      const std::size_t pick = k + uniform_index(rng, pool.size() - k);
      std::swap(pool[k], pool[pick]);
      unit.references.push_back(pool[k]);
    }
    units.push_back(std::move(unit));
  }
  for (std::size_t i = units.size(); i > 1; --i) std::swap(units[i - 1], units[uniform_index(rng, i)]);
  return units;
}

std::vector<RankingUnit> build_units(std::span<const PersonImage> images, std::size_t epoch, const SamplerPolicy& policy) {
  return build_units(images, epoch, policy.curriculum.reference_count(epoch), policy.cross_view_relaxed, policy.seed);
}

std::vector<std::span<const RankingUnit>> make_minibatches(std::span<const RankingUnit> units, std::size_t batch_units) {
  if (batch_units == 0) throw std::invalid_argument("make_minibatches: batch size must be at least 1");
  std::vector<std::span<const RankingUnit>> batches;
  for (std::size_t i = 0; i < units.size(); i += batch_units) {
    batches.push_back(units.subspan(i, std::min(batch_units, units.size() - i)));
  }
  return batches;
}

}  // namespace deeprank
