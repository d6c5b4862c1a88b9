#include "deeprank/eval.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <stdexcept>

#include "deeprank/parallel.hpp"
#include "deeprank/sampler.hpp"
#include "deeprank/trainer.hpp"

namespace deeprank {

std::string ImageLabel::to_string() const {
  char buf[32];
  std::snprintf(buf, sizeof buf, "/%04d_%02d", identity, index);
  return "cam_" + camera + buf;
}

ImageLabel ImageLabel::parse(std::string_view text) {
  auto fail = [&] { return std::invalid_argument("malformed image label '" + std::string(text) + "'"); };
  const auto slash = text.rfind('/');
  if (!text.starts_with("cam_") || slash == std::string_view::npos || slash <= 4) throw fail();
  ImageLabel l;
  l.camera = std::string(text.substr(4, slash - 4));
  const auto rest = text.substr(slash + 1);
  const auto us = rest.find('_');
  if (us == std::string_view::npos) throw fail();
  auto parse_int = [&](std::string_view s, int& out) {
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    if (ec != std::errc{} || p != s.data() + s.size() || s.empty()) throw fail();
  };
  parse_int(rest.substr(0, us), l.identity);
  parse_int(rest.substr(us + 1), l.index);
  return l;
}

ScoreMatrix::ScoreMatrix(std::vector<ImageLabel> probes, std::vector<ImageLabel> gallery, std::vector<double> values)
    : probes_(std::move(probes)), gallery_(std::move(gallery)), values_(std::move(values)) {
  if (values_.size() != probes_.size() * gallery_.size()) {
    throw std::invalid_argument("ScoreMatrix: " + std::to_string(values_.size()) + " values for a " +
                                std::to_string(probes_.size()) + "x" + std::to_string(gallery_.size()) + " matrix");
  }
  for (double v : values_) {
    if (!std::isfinite(v)) throw std::invalid_argument("ScoreMatrix: non-finite score");
  }
  auto check_unique = [](std::vector<ImageLabel> labels, const char* axis) {
    std::sort(labels.begin(), labels.end());
    auto dup = std::adjacent_find(labels.begin(), labels.end());
    if (dup != labels.end()) {
      throw std::invalid_argument(std::string("ScoreMatrix: duplicate ") + axis + " label " + dup->to_string());
    }
  };
  check_unique(probes_, "probe");
  check_unique(gallery_, "gallery");
}

ScoreMatrix ScoreMatrix::select(std::span<const std::size_t> rows, std::span<const std::size_t> cols) const {
  std::vector<ImageLabel> p, g;
  std::vector<double> v;
  v.reserve(rows.size() * cols.size());
  for (auto r : rows) p.push_back(probes_.at(r));
  for (auto c : cols) g.push_back(gallery_.at(c));
  for (auto r : rows) {
    for (auto c : cols) v.push_back(at(r, c));
  }
  return {std::move(p), std::move(g), std::move(v)};
}

namespace {

std::vector<ImageLabel> labels_of(std::span<const PersonImage> images) {
  std::vector<ImageLabel> out;
  for (const auto& im : images) out.push_back(ImageLabel::of(im));
  return out;
}

void require_nonempty(std::span<const PersonImage> probes, std::span<const PersonImage> gallery, const char* what) {
  if (probes.empty() || gallery.empty()) throw std::invalid_argument(std::string(what) + ": empty probe or gallery set");
}

}  // namespace

ScoreMatrix score_matrix(const Network<float>& net, std::span<const PersonImage> probes,
                         std::span<const PersonImage> gallery, const ScoringOptions& opts) {
  require_nonempty(probes, gallery, "score_matrix");
  const std::size_t crop = net.config().input_side;
  const std::size_t side = opts.stitch_side ? opts.stitch_side : default_stitch_side(crop);
  const std::size_t cols = gallery.size();
  std::vector<double> values(probes.size() * cols);
  parallel_for(values.size(), opts.threads, [&](std::size_t cell) {
    const PersonImage& a = probes[cell / cols];
    const PersonImage& b = gallery[cell % cols];
    if (opts.use_tta) {
      double sum = 0.0;
      for (const auto& input : test_time_inputs(a, b, side, crop)) sum += score_pair(net, input);
      values[cell] = sum / 8.0;
    } else {
      values[cell] = score_pair(net, central_crop(stitch(a, b, side).image, crop));
    }
  });
  return {labels_of(probes), labels_of(gallery), std::move(values)};
}

ScoreMatrix raw_pixel_scores(std::span<const PersonImage> probes, std::span<const PersonImage> gallery) {
  require_nonempty(probes, gallery, "raw_pixel_scores");
  std::vector<double> values;
  values.reserve(probes.size() * gallery.size());
  for (const auto& p : probes) {
    for (const auto& g : gallery) {
      const Tensor<float> resized =
          g.pixels.shape() == p.pixels.shape() ? g.pixels
                                               : resize_bilinear(g.pixels, p.pixels.extent(1), p.pixels.extent(2));
      double d = 0.0;
      for (std::size_t i = 0; i < resized.size(); ++i) {
        const double diff = static_cast<double>(p.pixels[i]) - resized[i];
        d += diff * diff;
      }
      values.push_back(-d);
    }
  }
  return {labels_of(probes), labels_of(gallery), std::move(values)};
}

namespace {

std::vector<double> half_histograms(const Tensor<float>& pixels) {
  constexpr std::size_t bins = 8;
  const std::size_t h = pixels.extent(1), w = pixels.extent(2);
  std::vector<double> hist(2 * 3 * bins, 0.0);
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t y = 0; y < h; ++y) {
      const std::size_t half = y < h / 2 ? 0 : 1;
      for (std::size_t x = 0; x < w; ++x) {
        const auto bin = std::min<std::size_t>(bins - 1, static_cast<std::size_t>(pixels.at(c, y, x) * bins));
        hist[(half * 3 + c) * bins + bin] += 1.0;
      }
    }
  }
  const double top = static_cast<double>((h / 2) * w), bottom = static_cast<double>((h - h / 2) * w);
  for (std::size_t i = 0; i < hist.size(); ++i) hist[i] /= i < 3 * bins ? top : bottom;
  return hist;
}

}  // namespace

ScoreMatrix histogram_scores(std::span<const PersonImage> probes, std::span<const PersonImage> gallery) {
  require_nonempty(probes, gallery, "histogram_scores");
  std::vector<std::vector<double>> hp, hg;
  for (const auto& p : probes) hp.push_back(half_histograms(p.pixels));
  for (const auto& g : gallery) hg.push_back(half_histograms(g.pixels));
  std::vector<double> values;
  values.reserve(probes.size() * gallery.size());
  for (const auto& a : hp) {
    for (const auto& b : hg) {
      double d = 0.0;
      for (std::size_t i = 0; i < a.size(); ++i) d += std::abs(a[i] - b[i]);
      values.push_back(-d);
    }
  }
  return {labels_of(probes), labels_of(gallery), std::move(values)};
}

TiePolicy parse_tie_policy(std::string_view text) {
  if (text == "pessimistic") return TiePolicy::pessimistic;
  if (text == "optimistic") return TiePolicy::optimistic;
  throw std::invalid_argument("unknown tie policy '" + std::string(text) + "' (pessimistic|optimistic)");
}

std::vector<std::size_t> match_ranks(const ScoreMatrix& m, TiePolicy ties) {
  if (m.rows() == 0 || m.cols() == 0) throw std::invalid_argument("match_ranks: empty score matrix");
  std::map<int, std::size_t> column_of;
  for (std::size_t j = 0; j < m.cols(); ++j) {
    if (!column_of.emplace(m.gallery()[j].identity, j).second) {
      throw std::invalid_argument("match_ranks: gallery identity " + std::to_string(m.gallery()[j].identity) +
                                  " appears more than once; aggregate multi-shot galleries first");
    }
  }
  std::vector<std::size_t> ranks;
  ranks.reserve(m.rows());
  for (std::size_t i = 0; i < m.rows(); ++i) {
    auto it = column_of.find(m.probes()[i].identity);
    if (it == column_of.end()) {
      throw std::invalid_argument("match_ranks: probe " + m.probes()[i].to_string() + " has no match in the gallery");
    }
    const double truth = m.at(i, it->second);
    std::size_t rank = 1;
    for (std::size_t j = 0; j < m.cols(); ++j) {
      if (j == it->second) continue;
      const double v = m.at(i, j);
      if (v > truth || (ties == TiePolicy::pessimistic && v == truth)) ++rank;
    }
    ranks.push_back(rank);
  }
  return ranks;
}

CmcCurve cmc_from_scores(const ScoreMatrix& m, TiePolicy ties) {
  const auto ranks = match_ranks(m, ties);
  std::vector<double> counts(m.cols(), 0.0);
  for (auto r : ranks) counts[r - 1] += 1.0;
  CmcCurve curve;
  curve.rates.resize(m.cols());
  double cumulative = 0.0;
  for (std::size_t k = 0; k < m.cols(); ++k) {
    cumulative += counts[k];
    curve.rates[k] = cumulative / static_cast<double>(ranks.size());
  }
  return curve;
}

MultishotPolicy parse_multishot_policy(std::string_view text) {
  if (text == "max") return MultishotPolicy::max;
  if (text == "mean") return MultishotPolicy::mean;
  throw std::invalid_argument("unknown multi-shot policy '" + std::string(text) + "' (max|mean)");
}

ScoreMatrix multishot_aggregate(const ScoreMatrix& m, MultishotPolicy policy) {
  std::vector<int> order;
  std::map<int, std::vector<std::size_t>> columns;
  for (std::size_t j = 0; j < m.cols(); ++j) {
    const int id = m.gallery()[j].identity;
    if (columns[id].empty()) order.push_back(id);
    columns[id].push_back(j);
  }
  std::vector<ImageLabel> gallery;
  for (int id : order) gallery.push_back(m.gallery()[columns[id].front()]);
  std::vector<double> values;
  values.reserve(m.rows() * order.size());
  for (std::size_t i = 0; i < m.rows(); ++i) {
    for (int id : order) {
      const auto& cols = columns[id];
      double acc = policy == MultishotPolicy::max ? -std::numeric_limits<double>::infinity() : 0.0;
      for (auto j : cols) acc = policy == MultishotPolicy::max ? std::max(acc, m.at(i, j)) : acc + m.at(i, j);
      if (policy == MultishotPolicy::mean) acc /= static_cast<double>(cols.size());
      values.push_back(acc);
    }
  }
  return {m.probes(), std::move(gallery), std::move(values)};
}

CmcCurve cmc_trials(const ScoreMatrix& full, const TrialOptions& opts) {
  if (opts.trials == 0) throw std::invalid_argument("cmc_trials: at least one trial is required");
  if (opts.gallery_shots == 0) throw std::invalid_argument("cmc_trials: gallery_shots must be at least 1");
  std::map<int, std::vector<std::size_t>> rows_of, cols_of;
  for (std::size_t i = 0; i < full.rows(); ++i) rows_of[full.probes()[i].identity].push_back(i);
  for (std::size_t j = 0; j < full.cols(); ++j) cols_of[full.gallery()[j].identity].push_back(j);
  std::vector<int> ids;
  for (const auto& [id, rows] : rows_of) {
    if (cols_of.contains(id)) ids.push_back(id);
  }
  if (ids.empty()) throw std::invalid_argument("cmc_trials: no identity appears on both axes");

  std::vector<std::vector<double>> curves;
  for (std::size_t t = 0; t < opts.trials; ++t) {
    Rng rng(derive_seed(opts.seed, {0xC3Cu, t}));
    std::vector<std::size_t> rows, cols;
    for (int id : ids) {
      const auto& r = rows_of[id];
      rows.push_back(r[rng() % r.size()]);
      auto c = cols_of[id];
      const std::size_t take = std::min(opts.gallery_shots, c.size());
      for (std::size_t k = 0; k < take; ++k) {
        std::swap(c[k], c[k + rng() % (c.size() - k)]);
        cols.push_back(c[k]);
      }
    }
    const ScoreMatrix trial = multishot_aggregate(full.select(rows, cols), opts.policy);
    curves.push_back(cmc_from_scores(trial, opts.ties).rates);
  }

  CmcCurve out;
  out.trials = opts.trials;
  const std::size_t n = ids.size();
  out.rates.assign(n, 0.0);
  for (const auto& c : curves) {
    for (std::size_t k = 0; k < n; ++k) out.rates[k] += c[k];
  }
  for (auto& r : out.rates) r /= static_cast<double>(opts.trials);
  if (opts.trials > 1) {
    out.stddev.assign(n, 0.0);
    for (const auto& c : curves) {
      for (std::size_t k = 0; k < n; ++k) out.stddev[k] += (c[k] - out.rates[k]) * (c[k] - out.rates[k]);
    }
    for (auto& s : out.stddev) s = std::sqrt(s / static_cast<double>(opts.trials - 1));
  }
  return out;
}

std::vector<double> verification_scores(const ScoreMatrix& m, const std::set<int>& targets) {
  if (targets.empty()) throw std::invalid_argument("open world: empty target set");
  std::set<int> seen;
  for (const auto& g : m.gallery()) {
    if (targets.contains(g.identity)) seen.insert(g.identity);
  }
  for (int t : targets) {
    if (!seen.contains(t)) throw std::invalid_argument("open world: target " + std::to_string(t) + " is not in the gallery");
  }
  std::vector<double> out(m.rows(), -std::numeric_limits<double>::infinity());
  for (std::size_t i = 0; i < m.rows(); ++i) {
    for (std::size_t j = 0; j < m.cols(); ++j) {
      if (targets.contains(m.gallery()[j].identity)) out[i] = std::max(out[i], m.at(i, j));
    }
  }
  return out;
}

std::vector<OpenWorldPoint> open_world_sweep(const ScoreMatrix& m, const std::set<int>& targets,
                                             std::span<const double> thresholds) {
  const auto stat = verification_scores(m, targets);
  std::vector<double> target_q, other_q;
  for (std::size_t i = 0; i < m.rows(); ++i) {
    (targets.contains(m.probes()[i].identity) ? target_q : other_q).push_back(stat[i]);
  }
  if (target_q.empty()) throw std::invalid_argument("open world: no target queries");
  if (other_q.empty()) throw std::invalid_argument("open world: no non-target queries");

  std::vector<double> grid(thresholds.begin(), thresholds.end());
  if (grid.empty()) {
    grid = stat;
    grid.push_back(-std::numeric_limits<double>::infinity());
    grid.push_back(std::numeric_limits<double>::infinity());
  }
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());

  std::sort(target_q.begin(), target_q.end());
  std::sort(other_q.begin(), other_q.end());
  auto accepted = [](const std::vector<double>& sorted, double s) {
    const auto first = std::lower_bound(sorted.begin(), sorted.end(), s);
    return static_cast<double>(sorted.end() - first) / static_cast<double>(sorted.size());
  };
  std::vector<OpenWorldPoint> sweep;
  for (double s : grid) sweep.push_back({s, accepted(target_q, s), accepted(other_q, s)});
  return sweep;
}

double ttr_at_ftr(std::span<const OpenWorldPoint> sweep, double max_ftr) {
  double best = 0.0;
  for (const auto& p : sweep) {
    if (p.ftr <= max_ftr) best = std::max(best, p.ttr);
  }
  return best;
}

std::set<int> pick_targets(const ScoreMatrix& m, std::size_t p, std::uint64_t seed) {
  std::vector<int> ids;
  for (const auto& g : m.gallery()) ids.push_back(g.identity);
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  if (p == 0 || p >= ids.size()) {
    throw std::invalid_argument("pick_targets: need 1 <= p < " + std::to_string(ids.size()) + " gallery identities, got " +
                                std::to_string(p));
  }
  Rng rng(derive_seed(seed, {0x7A76u}));
  for (std::size_t k = 0; k < p; ++k) std::swap(ids[k], ids[k + rng() % (ids.size() - k)]);
  return {ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(p)};
}

FusionNorm parse_fusion_norm(std::string_view text) {
  if (text == "none") return FusionNorm::none;
  if (text == "minmax") return FusionNorm::minmax;
  if (text == "zscore") return FusionNorm::zscore;
  throw std::invalid_argument("unknown normalization '" + std::string(text) + "' (none|minmax|zscore)");
}

namespace {

std::vector<double> normalized(const std::vector<double>& v, FusionNorm norm) {
  std::vector<double> out = v;
  if (norm == FusionNorm::minmax) {
    const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
    const double range = *hi - *lo;
    for (auto& x : out) x = range > 0 ? (x - *lo) / range : 0.0;
  } else if (norm == FusionNorm::zscore) {
    double mean = 0.0, var = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    for (double x : v) var += (x - mean) * (x - mean);
    const double sd = std::sqrt(var / static_cast<double>(v.size()));
    for (auto& x : out) x = sd > 0 ? (x - mean) / sd : 0.0;
  }
  return out;
}

}  // namespace

ScoreMatrix fuse_scores(const ScoreMatrix& a, const ScoreMatrix& b, FusionNorm norm) {
  if (a.probes() != b.probes() || a.gallery() != b.gallery()) {
    throw std::invalid_argument("fuse_scores: probe/gallery labels differ between the two matrices");
  }
  if (a.values().empty()) throw std::invalid_argument("fuse_scores: empty matrices");
  const auto va = normalized(a.values(), norm), vb = normalized(b.values(), norm);
  std::vector<double> sum(va.size());
  for (std::size_t i = 0; i < va.size(); ++i) sum[i] = va[i] + vb[i];
  return {a.probes(), a.gallery(), std::move(sum)};
}

}  // namespace deeprank
