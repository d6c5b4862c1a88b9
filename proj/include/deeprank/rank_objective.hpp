#pragma once

// Ranking loss over one ranking unit (a probe, its true match and a sampled
// reference set of mismatches). Everything is base 2:
//   sigma(z) = log2(1 + 2^-z)
//   d sigma / dz = -2^-z / (1 + 2^-z)        (no ln 2 factor)
// The unit loss is sum_y sigma(f(x,x+) - f(x,y)); its derivative with respect
// to a mismatch score is 1 / (1 + 2^(f(x,x+) - f(x,y))), and the derivative
// with respect to the true-match score is minus the sum of those.
//
// The scalar pieces are templated on the real type; double is what training
// uses, long double exists for reference computations.

#include <cmath>
#include <concepts>
#include <cstddef>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace deeprank {

namespace detail {
template <class R>
void require_finite(R v, const char* what) {
  if (!std::isfinite(v)) throw std::domain_error(std::string(what) + ": non-finite input");
}
}  // namespace detail

/// log2(1 + 2^-z), overflow-free for any finite z.
template <std::floating_point R>
R surrogate_sigma(R z) {
  detail::require_finite(z, "surrogate_sigma");
  const R ln2 = std::numbers::ln2_v<R>;
  // For z < 0, 2^-z overflows first; use sigma(z) = -z + log2(1 + 2^z).
  if (z >= 0) return std::log1p(std::exp2(-z)) / ln2;
  return -z + std::log1p(std::exp2(z)) / ln2;
}

/// 1 / (1 + 2^-d), i.e. delta/(1+delta) for delta = 2^d. Saturates to 0 or 1.
template <std::floating_point R>
R stable_delta_ratio(R d) {
  detail::require_finite(d, "stable_delta_ratio");
  if (d >= 0) return R(1) / (R(1) + std::exp2(-d));
  const R e = std::exp2(d);
  return e / (R(1) + e);
}

/// Number of gallery scores strictly above the positive score.
std::size_t zero_one_rank(double positive_score, std::span<const double> gallery_scores);

template <std::floating_point R>
struct BasicUnitScores {
  R positive = 0;
  std::vector<R> negatives;
};

template <std::floating_point R>
struct BasicUnitGrads {
  R d_positive = 0;
  std::vector<R> d_negatives;
};

using UnitScores = BasicUnitScores<double>;
using UnitGrads = BasicUnitGrads<double>;

namespace detail {
template <class R>
void validate(const BasicUnitScores<R>& s) {
  require_finite(s.positive, "unit scores");
  if (s.negatives.empty()) throw std::invalid_argument("unit scores: reference set is empty");
  for (R v : s.negatives) require_finite(v, "unit scores");
}
}  // namespace detail

template <std::floating_point R>
R unit_loss(const BasicUnitScores<R>& s) {
  detail::validate(s);
  R loss = 0;
  for (R neg : s.negatives) loss += surrogate_sigma(s.positive - neg);
  return loss;
}

template <std::floating_point R>
BasicUnitGrads<R> unit_grad(const BasicUnitScores<R>& s) {
  detail::validate(s);
  BasicUnitGrads<R> g;
  g.d_negatives.reserve(s.negatives.size());
  R sum = 0;
  for (R neg : s.negatives) {
    const R d = stable_delta_ratio(neg - s.positive);
    g.d_negatives.push_back(d);
    sum += d;
  }
  g.d_positive = -sum;
  return g;
}

inline double surrogate_sigma(double z) { return surrogate_sigma<double>(z); }
inline double stable_delta_ratio(double d) { return stable_delta_ratio<double>(d); }
inline double unit_loss(const UnitScores& s) { return unit_loss<double>(s); }
inline UnitGrads unit_grad(const UnitScores& s) { return unit_grad<double>(s); }

/// Sum of unit losses; rejects an empty batch.
double batch_loss(std::span<const UnitScores> units);

}  // namespace deeprank
