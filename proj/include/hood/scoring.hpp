#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "hood/heatmap.hpp"

namespace hood {

// Every score is oriented "higher = more OOD" so one metric stack serves the
// heatmap method and both baselines.
enum class Method { heatmap, msp, energy };
enum class Membership { in, out, unknown };

Method method_from_string(const std::string& s);
std::string to_string(Method m);
Membership membership_from_string(const std::string& s);
std::string to_string(Membership m);

struct ScoreRecord {
  std::string sample_id;
  Method method = Method::heatmap;
  Membership membership = Membership::unknown;
  double score = 0.0;
};

// Mean over pixels of the per-pixel channel-max absolute response; in [0, 1].
double heatmap_score(const Heatmap& map);
double heatmap_score(std::span<const float> chw_values, int width, int height);

struct DetectorConfig {
  double threshold = 0.0;  // delta
};

// `in` iff score <= delta: a low aggregate response means the decoder saw an
// in-distribution sample.
Membership detect(double score, const DetectorConfig& config);

// 1 - max_c probs[c].
double msp_score(std::span<const float> probs);

// -T * log sum_c exp(logits_c / T), computed with max subtraction.
double energy_score(std::span<const float> logits, double temperature = 1.0);

// Score file: one record per line, "<id> <method> <in|out|?> <score>" with
// nine significant digits.
void save_scores(const std::filesystem::path& path,
                 const std::vector<ScoreRecord>& records);
std::vector<ScoreRecord> load_scores(const std::filesystem::path& path);

}  // namespace hood
