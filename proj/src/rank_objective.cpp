#include "deeprank/rank_objective.hpp"

namespace deeprank {

std::size_t zero_one_rank(double positive_score, std::span<const double> gallery_scores) {
  detail::require_finite(positive_score, "zero_one_rank");
  std::size_t rank = 0;
  for (double g : gallery_scores) {
    detail::require_finite(g, "zero_one_rank");
    if (positive_score - g < 0) ++rank;
  }
  return rank;
}

double batch_loss(std::span<const UnitScores> units) {
  if (units.empty()) throw std::invalid_argument("batch_loss: empty batch");
  double total = 0.0;
  for (const auto& u : units) total += unit_loss(u);
  return total;
}

}  // namespace deeprank
