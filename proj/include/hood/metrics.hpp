#pragma once

#include <span>
#include <string>
#include <vector>

#include "hood/scoring.hpp"

namespace hood {

// Threshold-free detection metrics. Scores must be oriented higher = more
// OOD. AUROC treats OOD as the positive class; FPR-95 follows the
// AUPR-Success convention (in-distribution positive, accepted by score <=
// delta).

// Trapezoidal ROC area; ties contribute half credit, so the value equals the
// pair-counting statistic.
double auroc(std::span<const double> in_scores,
             std::span<const double> out_scores);

enum class PositiveClass { in, out };

// Step-integrated precision-recall area over a descending-confidence sweep;
// tied confidences collapse into one group.
double aupr(std::span<const double> in_scores,
            std::span<const double> out_scores, PositiveClass positive);

// Fraction of OOD samples accepted (score <= delta) at the largest delta
// achieving the smallest true-positive rate >= tpr_target, where positives
// are in-distribution samples.
double fpr_at_tpr(std::span<const double> in_scores,
                  std::span<const double> out_scores, double tpr_target = 0.95);

struct EvalReport {
  Method method = Method::heatmap;
  double auroc = 0.0;
  double aupr_s = 0.0;
  double aupr_e = 0.0;
  double fpr95 = 0.0;
  long n_in = 0;
  long n_out = 0;
};

EvalReport evaluate_method(Method method, std::span<const double> in_scores,
                           std::span<const double> out_scores);

// Aligned table with one row per method (percent, two decimals).
std::string render_report_table(std::span<const EvalReport> reports);
// key = value lines with nine significant digits.
std::string render_report_kv(std::span<const EvalReport> reports);

}  // namespace hood
