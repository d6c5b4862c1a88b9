#pragma once

// Ranking-unit sampling. For every training image used as a probe, the unit
// holds a true match from another camera and a reference set drawn without
// replacement from the probe's mismatch pool: images of other identities taken
// by a different camera (strict) or by any camera (cross-view relaxed).

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "deeprank/image_ops.hpp"

namespace deeprank {

/// Epoch threshold -> reference set size. Sizes are 1, 2 or 4 and never shrink.
class Curriculum {
 public:
  Curriculum() : steps_{{0, 1}} {}
  explicit Curriculum(std::map<std::size_t, std::size_t> steps);

  /// Parses "0:1,10:2,20:4".
  static Curriculum parse(std::string_view text);
  /// {0:1, E/3:2, 2E/3:4}.
  static Curriculum thirds(std::size_t epochs);

  /// Size for a 0-based epoch: value of the largest threshold <= epoch.
  std::size_t reference_count(std::size_t epoch) const;
  std::string to_string() const;
  const std::map<std::size_t, std::size_t>& steps() const { return steps_; }

 private:
  std::map<std::size_t, std::size_t> steps_;
};

struct SamplerPolicy {
  bool cross_view_relaxed = false;
  Curriculum curriculum;
  std::uint64_t seed = 0;
};

struct RankingUnit {
  std::size_t probe = 0;     // indices into the training image list
  std::size_t positive = 0;
  std::vector<std::size_t> references;
};

/// Number of images a probe may draw references from under the policy.
std::size_t mismatch_pool_size(std::span<const PersonImage> images, std::size_t probe, bool cross_view_relaxed);

/// Units for one epoch, shuffled. Deterministic in (images, epoch, policy.seed).
/// Probes without a cross-camera true match are skipped.
std::vector<RankingUnit> build_units(std::span<const PersonImage> images, std::size_t epoch, const SamplerPolicy& policy);

/// Same as above with an explicit reference set size.
std::vector<RankingUnit> build_units(std::span<const PersonImage> images, std::size_t epoch, std::size_t reference_count,
                                     bool cross_view_relaxed, std::uint64_t seed);

/// Consecutive groups of `batch_units`; the final short group is kept.
std::vector<std::span<const RankingUnit>> make_minibatches(std::span<const RankingUnit> units, std::size_t batch_units);

/// Stream of seeds derived from a base seed and a list of salts (epoch, batch, ...).
std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> salts);

}  // namespace deeprank
