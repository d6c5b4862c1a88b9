#include "deeprank/score_io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace deeprank {

namespace {

std::string format_with(double value, int precision) {
  if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, value, std::chars_format::general, precision);
  std::string s(buf, end);
  if (s.find_first_of(".en") == std::string::npos) s += ".0";
  return s;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write '" + path.string() + "'");
  return f;
}

void finish(std::ofstream& f, const std::filesystem::path& path) {
  f.flush();
  if (!f) throw std::runtime_error("write to '" + path.string() + "' failed");
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

double parse_real(const std::string& text, const std::filesystem::path& path, std::size_t line) {
  double v = 0.0;
  auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc{} || p != text.data() + text.size() || text.empty()) {
    throw std::runtime_error(path.string() + ":" + std::to_string(line) + ": not a number: '" + text + "'");
  }
  return v;
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot read '" + path.string() + "'");
  return f;
}

void strip_cr(std::string& line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
}

}  // namespace

std::string format_real(double value) { return format_with(value, 9); }

void write_cmc_csv(const CmcCurve& curve, const std::filesystem::path& path) {
  const bool with_sd = curve.trials > 1;
  if (with_sd && curve.stddev.size() != curve.rates.size()) {
    throw std::invalid_argument("write_cmc_csv: stddev length differs from rates");
  }
  auto f = open_out(path);
  f << (with_sd ? "rank,rate,stddev\n" : "rank,rate\n");
  for (std::size_t k = 0; k < curve.rates.size(); ++k) {
    f << k + 1 << ',' << format_real(curve.rates[k]);
    if (with_sd) f << ',' << format_real(curve.stddev[k]);
    f << '\n';
  }
  finish(f, path);
}

CmcCurve read_cmc_csv(const std::filesystem::path& path) {
  auto f = open_in(path);
  std::string line;
  if (!std::getline(f, line)) throw std::runtime_error(path.string() + ": empty file");
  strip_cr(line);
  const bool with_sd = line == "rank,rate,stddev";
  if (!with_sd && line != "rank,rate") throw std::runtime_error(path.string() + ": unexpected header '" + line + "'");
  CmcCurve curve;
  std::size_t n = 1;
  while (std::getline(f, line)) {
    ++n;
    strip_cr(line);
    if (line.empty()) continue;
    const auto cells = split_csv(line);
    if (cells.size() != (with_sd ? 3u : 2u)) throw std::runtime_error(path.string() + ":" + std::to_string(n) + ": wrong column count");
    if (parse_real(cells[0], path, n) != static_cast<double>(curve.rates.size() + 1)) {
      throw std::runtime_error(path.string() + ":" + std::to_string(n) + ": ranks must count up from 1");
    }
    curve.rates.push_back(parse_real(cells[1], path, n));
    if (with_sd) curve.stddev.push_back(parse_real(cells[2], path, n));
  }
  // The file does not record the trial count; 2 stands for "more than one".
  curve.trials = with_sd ? 2 : 1;
  return curve;
}

void write_open_world_csv(std::span<const OpenWorldPoint> sweep, const std::filesystem::path& path) {
  auto f = open_out(path);
  f << "threshold,ttr,ftr\n";
  for (const auto& p : sweep) {
    f << format_with(p.threshold, 17) << ',' << format_real(p.ttr) << ',' << format_real(p.ftr) << '\n';
  }
  finish(f, path);
}

void write_score_csv(const ScoreMatrix& m, const std::filesystem::path& path) {
  auto f = open_out(path);
  for (const auto& g : m.gallery()) f << ',' << g.to_string();
  f << '\n';
  for (std::size_t i = 0; i < m.rows(); ++i) {
    f << m.probes()[i].to_string();
    for (std::size_t j = 0; j < m.cols(); ++j) f << ',' << format_with(m.at(i, j), 17);
    f << '\n';
  }
  finish(f, path);
}

ScoreMatrix read_score_csv(const std::filesystem::path& path) {
  auto f = open_in(path);
  std::string line;
  if (!std::getline(f, line)) throw std::runtime_error(path.string() + ": empty file");
  strip_cr(line);
  auto header = split_csv(line);
  if (header.size() < 2) throw std::runtime_error(path.string() + ": header has no gallery labels");
  std::vector<ImageLabel> gallery, probes;
  for (std::size_t j = 1; j < header.size(); ++j) gallery.push_back(ImageLabel::parse(header[j]));
  std::vector<double> values;
  std::size_t n = 1;
  while (std::getline(f, line)) {
    ++n;
    strip_cr(line);
    if (line.empty()) continue;
    const auto cells = split_csv(line);
    if (cells.size() != header.size()) {
      throw std::runtime_error(path.string() + ":" + std::to_string(n) + ": expected " + std::to_string(header.size()) +
                               " cells, found " + std::to_string(cells.size()));
    }
    probes.push_back(ImageLabel::parse(cells[0]));
    for (std::size_t j = 1; j < cells.size(); ++j) values.push_back(parse_real(cells[j], path, n));
  }
  if (probes.empty()) throw std::runtime_error(path.string() + ": no probe rows");
  return {std::move(probes), std::move(gallery), std::move(values)};
}

}  // namespace deeprank
