#pragma once

#include <filesystem>
#include <span>
#include <string>

#include "deeprank/eval.hpp"

namespace deeprank {

/// Shortest general form with 9 significant digits; integral values keep a ".0".
std::string format_real(double value);

/// `rank,rate` rows, plus a `stddev` column when the curve averages several trials.
void write_cmc_csv(const CmcCurve& curve, const std::filesystem::path& path);
CmcCurve read_cmc_csv(const std::filesystem::path& path);

/// `threshold,ttr,ftr` rows; infinite thresholds are written as -inf / inf.
void write_open_world_csv(std::span<const OpenWorldPoint> sweep, const std::filesystem::path& path);

/// First row: empty cell then gallery labels. Each further row: probe label then scores.
/// Scores are written with 17 significant digits so a round trip is exact.
void write_score_csv(const ScoreMatrix& m, const std::filesystem::path& path);
ScoreMatrix read_score_csv(const std::filesystem::path& path);

}  // namespace deeprank
