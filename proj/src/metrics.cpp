#include "hood/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

namespace hood {

namespace {

void require_nonempty(std::span<const double> in_scores,
                      std::span<const double> out_scores, const char* op) {
  if (in_scores.empty() || out_scores.empty())
    throw InputError(std::string(op) + ": both score lists must be non-empty");
}

// (score, is_positive) events sorted by descending score.
std::vector<std::pair<double, bool>> descending_events(
    std::span<const double> positives, std::span<const double> negatives) {
  std::vector<std::pair<double, bool>> ev;
  ev.reserve(positives.size() + negatives.size());
  for (double s : positives) ev.emplace_back(s, true);
  for (double s : negatives) ev.emplace_back(s, false);
  std::stable_sort(ev.begin(), ev.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  return ev;
}

}  // namespace

double auroc(std::span<const double> in_scores,
             std::span<const double> out_scores) {
  require_nonempty(in_scores, out_scores, "auroc");
  auto ev = descending_events(out_scores, in_scores);  // positive = OOD
  double n_out = static_cast<double>(out_scores.size());
  double n_in = static_cast<double>(in_scores.size());
  double tp = 0.0, fp = 0.0;
  double prev_tpr = 0.0, prev_fpr = 0.0;
  double area = 0.0;
  std::size_t i = 0;
  while (i < ev.size()) {
    double score = ev[i].first;
    // consume the whole tie group before emitting a point
    while (i < ev.size() && ev[i].first == score) {
      if (ev[i].second)
        tp += 1.0;
      else
        fp += 1.0;
      ++i;
    }
    double tpr = tp / n_out;
    double fpr = fp / n_in;
    area += (fpr - prev_fpr) * (tpr + prev_tpr) * 0.5;
    prev_tpr = tpr;
    prev_fpr = fpr;
  }
  return area;
}

double aupr(std::span<const double> in_scores,
            std::span<const double> out_scores, PositiveClass positive) {
  require_nonempty(in_scores, out_scores, "aupr");
  // Confidence for the positive class: the score itself when OOD is positive,
  // the negated score when in-distribution is positive.
  std::vector<double> pos, neg;
  if (positive == PositiveClass::out) {
    pos.assign(out_scores.begin(), out_scores.end());
    neg.assign(in_scores.begin(), in_scores.end());
  } else {
    for (double s : in_scores) pos.push_back(-s);
    for (double s : out_scores) neg.push_back(-s);
  }
  auto ev = descending_events(pos, neg);
  double n_pos = static_cast<double>(pos.size());
  double tp = 0.0, fp = 0.0;
  double prev_recall = 0.0;
  double area = 0.0;
  std::size_t i = 0;
  while (i < ev.size()) {
    double conf = ev[i].first;
    while (i < ev.size() && ev[i].first == conf) {
      if (ev[i].second)
        tp += 1.0;
      else
        fp += 1.0;
      ++i;
    }
    double recall = tp / n_pos;
    double precision = tp / (tp + fp);
    area += (recall - prev_recall) * precision;
    prev_recall = recall;
  }
  return area;
}

double fpr_at_tpr(std::span<const double> in_scores,
                  std::span<const double> out_scores, double tpr_target) {
  require_nonempty(in_scores, out_scores, "fpr_at_tpr");
  if (tpr_target <= 0.0 || tpr_target > 1.0)
    throw InputError("fpr_at_tpr: target must lie in (0, 1]");

  std::vector<double> in_sorted(in_scores.begin(), in_scores.end());
  std::vector<double> out_sorted(out_scores.begin(), out_scores.end());
  std::sort(in_sorted.begin(), in_sorted.end());
  std::sort(out_sorted.begin(), out_sorted.end());

  // Candidate thresholds are the observed scores. Ascending sweep tracking
  // the acceptance counts on both sides.
  std::vector<double> candidates;
  candidates.reserve(in_sorted.size() + out_sorted.size());
  candidates.insert(candidates.end(), in_sorted.begin(), in_sorted.end());
  candidates.insert(candidates.end(), out_sorted.begin(), out_sorted.end());
  std::sort(candidates.begin(), candidates.end());
  candidates.erase(std::unique(candidates.begin(), candidates.end()),
                   candidates.end());

  double n_in = static_cast<double>(in_sorted.size());
  double n_out = static_cast<double>(out_sorted.size());
  std::size_t ii = 0, oi = 0;
  // TPR only changes at in-scores, so the first candidate reaching the
  // target is the unique threshold achieving the smallest TPR >= target.
  for (double delta : candidates) {
    while (ii < in_sorted.size() && in_sorted[ii] <= delta) ++ii;
    while (oi < out_sorted.size() && out_sorted[oi] <= delta) ++oi;
    double tpr = static_cast<double>(ii) / n_in;
    if (tpr >= tpr_target) return static_cast<double>(oi) / n_out;
  }
  return 1.0;  // unreachable: the largest candidate accepts everything
}

EvalReport evaluate_method(Method method, std::span<const double> in_scores,
                           std::span<const double> out_scores) {
  EvalReport r;
  r.method = method;
  r.auroc = auroc(in_scores, out_scores);
  r.aupr_s = aupr(in_scores, out_scores, PositiveClass::in);
  r.aupr_e = aupr(in_scores, out_scores, PositiveClass::out);
  r.fpr95 = fpr_at_tpr(in_scores, out_scores, 0.95);
  r.n_in = static_cast<long>(in_scores.size());
  r.n_out = static_cast<long>(out_scores.size());
  return r;
}

std::string render_report_table(std::span<const EvalReport> reports) {
  std::ostringstream os;
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%-10s %8s %8s %8s %8s %7s %7s\n", "method",
                "AUROC↑", "AUPR-S↑", "AUPR-E↑", "FPR-95↓",
                "n_in", "n_out");
  os << buf;
  for (const auto& r : reports) {
    std::snprintf(buf, sizeof(buf), "%-10s %8.2f %8.2f %8.2f %8.2f %7ld %7ld\n",
                  to_string(r.method).c_str(), 100.0 * r.auroc, 100.0 * r.aupr_s,
                  100.0 * r.aupr_e, 100.0 * r.fpr95, r.n_in, r.n_out);
    os << buf;
  }
  return os.str();
}

std::string render_report_kv(std::span<const EvalReport> reports) {
  std::ostringstream os;
  char buf[64];
  for (const auto& r : reports) {
    std::string m = to_string(r.method);
    auto put = [&](const char* key, double v) {
      std::snprintf(buf, sizeof(buf), "%.9g", v);
      os << m << '.' << key << " = " << buf << '\n';
    };
    put("auroc", r.auroc);
    put("aupr_s", r.aupr_s);
    put("aupr_e", r.aupr_e);
    put("fpr95", r.fpr95);
    os << m << ".n_in = " << r.n_in << '\n';
    os << m << ".n_out = " << r.n_out << '\n';
  }
  return os.str();
}

}  // namespace hood
