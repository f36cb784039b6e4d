#include "hood/scoring.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "hood/binio.hpp"

namespace hood {

Method method_from_string(const std::string& s) {
  if (s == "heatmap") return Method::heatmap;
  if (s == "msp") return Method::msp;
  if (s == "energy") return Method::energy;
  throw InputError("unknown method tag '" + s + "'");
}

std::string to_string(Method m) {
  switch (m) {
    case Method::heatmap: return "heatmap";
    case Method::msp: return "msp";
    case Method::energy: return "energy";
  }
  return "?";
}

Membership membership_from_string(const std::string& s) {
  if (s == "in") return Membership::in;
  if (s == "out") return Membership::out;
  if (s == "?") return Membership::unknown;
  throw InputError("unknown membership '" + s + "'");
}

std::string to_string(Membership m) {
  switch (m) {
    case Membership::in: return "in";
    case Membership::out: return "out";
    case Membership::unknown: return "?";
  }
  return "?";
}

double heatmap_score(std::span<const float> chw_values, int width, int height) {
  long pixels = static_cast<long>(width) * height;
  if (static_cast<long>(chw_values.size()) != 3 * pixels)
    throw InputError("heatmap_score: expected " + std::to_string(3 * pixels) +
                     " values, got " + std::to_string(chw_values.size()));
  double acc = 0.0;
  for (long p = 0; p < pixels; ++p) {
    double m = std::abs(static_cast<double>(chw_values[static_cast<std::size_t>(p)]));
    m = std::max(m, std::abs(static_cast<double>(
                     chw_values[static_cast<std::size_t>(pixels + p)])));
    m = std::max(m, std::abs(static_cast<double>(
                     chw_values[static_cast<std::size_t>(2 * pixels + p)])));
    acc += m;
  }
  return acc / static_cast<double>(pixels);
}

double heatmap_score(const Heatmap& map) {
  return heatmap_score(
      std::span<const float>(map.values.data(),
                             static_cast<std::size_t>(map.values.size())),
      map.width, map.height);
}

Membership detect(double score, const DetectorConfig& config) {
  if (!std::isfinite(score) || !std::isfinite(config.threshold))
    throw InputError("detect: non-finite score or threshold");
  return score <= config.threshold ? Membership::in : Membership::out;
}

double msp_score(std::span<const float> probs) {
  if (probs.empty()) throw InputError("msp_score: empty probability vector");
  double total = 0.0;
  double best = 0.0;
  for (float p : probs) {
    if (!(p >= -1e-6f) || p > 1.0f + 1e-6f)
      throw InputError("msp_score: entry " + std::to_string(p) +
                       " is not a probability");
    total += static_cast<double>(p);
    best = std::max(best, static_cast<double>(p));
  }
  if (std::abs(total - 1.0) > 1e-4)
    throw InputError("msp_score: probabilities sum to " + std::to_string(total));
  return 1.0 - best;
}

double energy_score(std::span<const float> logits, double temperature) {
  if (logits.empty()) throw InputError("energy_score: empty logits");
  if (temperature <= 0.0)
    throw ConfigError("energy_score: temperature must be positive, got " +
                      std::to_string(temperature));
  double m = -std::numeric_limits<double>::infinity();
  for (float v : logits) m = std::max(m, static_cast<double>(v) / temperature);
  double s = 0.0;
  for (float v : logits) s += std::exp(static_cast<double>(v) / temperature - m);
  return -temperature * (m + std::log(s));
}

void save_scores(const std::filesystem::path& path,
                 const std::vector<ScoreRecord>& records) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  char buf[64];
  for (const auto& r : records) {
    if (r.sample_id.empty() ||
        r.sample_id.find_first_of(" \t\n") != std::string::npos)
      throw InputError("score record id '" + r.sample_id +
                       "' is empty or contains whitespace");
    std::snprintf(buf, sizeof(buf), "%.9g", r.score);
    out << r.sample_id << ' ' << to_string(r.method) << ' '
        << to_string(r.membership) << ' ' << buf << '\n';
  }
  if (!out) throw IoError("write failed for " + path.string());
}

std::vector<ScoreRecord> load_scores(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string() + " for reading");
  std::vector<ScoreRecord> records;
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream is(line);
    ScoreRecord r;
    std::string method, membership, score;
    if (!(is >> r.sample_id >> method >> membership >> score))
      throw FormatError(path.string() + ":" + std::to_string(line_no) +
                        ": expected 'id method membership score'");
    r.method = method_from_string(method);
    r.membership = membership_from_string(membership);
    std::size_t used = 0;
    r.score = std::stod(score, &used);
    if (used != score.size())
      throw FormatError(path.string() + ":" + std::to_string(line_no) +
                        ": bad score '" + score + "'");
    records.push_back(std::move(r));
  }
  return records;
}

}  // namespace hood
