#pragma once

#include <cstdint>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "deeprank/image_ops.hpp"
#include "deeprank/network.hpp"

namespace deeprank {

struct ImageLabel {
  int identity = 0;
  std::string camera;
  int index = 0;

  /// "cam_<camera>/<identity:04d>_<index:02d>"
  std::string to_string() const;
  static ImageLabel parse(std::string_view text);
  static ImageLabel of(const PersonImage& image) { return {image.identity, image.camera, image.index}; }

  auto operator<=>(const ImageLabel&) const = default;
};

class ScoreMatrix {
 public:
  ScoreMatrix() = default;
  /// Row-major values; rejects non-finite values and duplicate labels on either axis.
  ScoreMatrix(std::vector<ImageLabel> probes, std::vector<ImageLabel> gallery, std::vector<double> values);

  std::size_t rows() const { return probes_.size(); }
  std::size_t cols() const { return gallery_.size(); }
  double at(std::size_t probe, std::size_t gallery) const { return values_[probe * gallery_.size() + gallery]; }
  const std::vector<ImageLabel>& probes() const { return probes_; }
  const std::vector<ImageLabel>& gallery() const { return gallery_; }
  const std::vector<double>& values() const { return values_; }

  /// Sub-matrix with the given rows and columns, in the given order.
  ScoreMatrix select(std::span<const std::size_t> rows, std::span<const std::size_t> cols) const;

  bool operator==(const ScoreMatrix&) const = default;

 private:
  std::vector<ImageLabel> probes_;
  std::vector<ImageLabel> gallery_;
  std::vector<double> values_;
};

struct ScoringOptions {
  std::size_t stitch_side = 0;  // 0: default_stitch_side(input side)
  bool use_tta = false;         // mean over the eight flip/swap variants
  std::size_t threads = 1;
};

/// Infer-mode score of every (probe, gallery) pair, probe on the left.
ScoreMatrix score_matrix(const Network<float>& net, std::span<const PersonImage> probes,
                         std::span<const PersonImage> gallery, const ScoringOptions& opts = {});

/// Negative squared Euclidean distance between raw pixels; gallery images are
/// resized to the probe's extents when they differ.
ScoreMatrix raw_pixel_scores(std::span<const PersonImage> probes, std::span<const PersonImage> gallery);

/// Negative L1 distance between per-channel 8-bin intensity histograms of the
/// upper and lower image halves. Ignores layout; a weak, cheap scorer.
ScoreMatrix histogram_scores(std::span<const PersonImage> probes, std::span<const PersonImage> gallery);

enum class TiePolicy { pessimistic, optimistic };
TiePolicy parse_tie_policy(std::string_view text);

struct CmcCurve {
  std::vector<double> rates;   // rates[k-1]: fraction of probes whose match is within rank k
  std::vector<double> stddev;  // per-rank sample standard deviation; empty for one trial
  std::size_t trials = 1;
};

/// 1-based rank of the true match for every probe row. Each gallery identity
/// must appear in exactly one column and every probe identity must be present.
std::vector<std::size_t> match_ranks(const ScoreMatrix& m, TiePolicy ties = TiePolicy::pessimistic);

CmcCurve cmc_from_scores(const ScoreMatrix& m, TiePolicy ties = TiePolicy::pessimistic);

enum class MultishotPolicy { max, mean };
MultishotPolicy parse_multishot_policy(std::string_view text);

/// One column per gallery identity, in order of first appearance, labelled by
/// that identity's first image.
ScoreMatrix multishot_aggregate(const ScoreMatrix& m, MultishotPolicy policy = MultishotPolicy::max);

struct TrialOptions {
  std::size_t trials = 1;
  std::size_t gallery_shots = 1;  // images per identity drawn into the gallery
  MultishotPolicy policy = MultishotPolicy::max;
  TiePolicy ties = TiePolicy::pessimistic;
  std::uint64_t seed = 0;
};

/// Averages CMC curves over random draws from a full probe x gallery matrix:
/// per trial and identity, one probe row and up to `gallery_shots` gallery
/// columns. Identities missing from either axis are left out.
CmcCurve cmc_trials(const ScoreMatrix& full, const TrialOptions& opts);

struct OpenWorldPoint {
  double threshold = 0.0;
  double ttr = 0.0;
  double ftr = 0.0;
};

/// Maximum score of each probe over the gallery columns of target identities.
std::vector<double> verification_scores(const ScoreMatrix& m, const std::set<int>& targets);

/// TTR/FTR at each threshold (a query is accepted when its verification score
/// is >= the threshold). With no thresholds given, the grid is -inf, every
/// distinct verification score in ascending order, and +inf.
std::vector<OpenWorldPoint> open_world_sweep(const ScoreMatrix& m, const std::set<int>& targets,
                                             std::span<const double> thresholds = {});

/// Largest TTR among sweep points whose FTR is <= max_ftr.
double ttr_at_ftr(std::span<const OpenWorldPoint> sweep, double max_ftr);

/// p distinct gallery identities drawn with the seed.
std::set<int> pick_targets(const ScoreMatrix& m, std::size_t p, std::uint64_t seed);

enum class FusionNorm { none, minmax, zscore };
FusionNorm parse_fusion_norm(std::string_view text);

/// Elementwise sum after optional whole-matrix normalization.
ScoreMatrix fuse_scores(const ScoreMatrix& a, const ScoreMatrix& b, FusionNorm norm = FusionNorm::none);

}  // namespace deeprank
