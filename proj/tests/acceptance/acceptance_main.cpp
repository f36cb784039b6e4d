// Acceptance suite: end-to-end checks of the contracts this project ships
// with, one pass/fail line per criterion. Returns nonzero if any fails.

#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "hood/decoder.hpp"
#include "hood/metrics.hpp"
#include "hood/optim.hpp"
#include "hood/pipeline.hpp"
#include "support/oracles.hpp"

using namespace hood;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

// Reference metrics recorded on the first green run of criterion 6
// (defaults, seed 1); later runs must land within +-0.02.
constexpr double kPinnedHeatmapAuroc = -1.0;  // pinned after first green run
constexpr double kPinnedMspAuroc = -1.0;
constexpr double kPinnedHeatmapFpr95 = -1.0;
constexpr double kPinTolerance = 0.02;

struct Check {
  std::vector<std::string> failures;
  char buf[512];

  void require(bool ok, const char* fmt, ...) {
    if (ok) return;
    va_list args;
    va_start(args, fmt);
    std::vsnprintf(buf, sizeof(buf), fmt, args);
    va_end(args);
    failures.emplace_back(buf);
  }
  void note(const char* fmt, ...) {
    va_list args;
    va_start(args, fmt);
    std::vsnprintf(buf, sizeof(buf), fmt, args);
    va_end(args);
    std::printf("       %s\n", buf);
  }
};

double elapsed_s(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

// ---------------------------------------------------------------------------
// 1. finite-difference gradient checks for every registered op
// ---------------------------------------------------------------------------

double probe_value(const Tensor& out, const Tensor& r) {
  return (out.values().cast<double>() * r.values().cast<double>()).sum();
}

void check_grads(Check& c, const char* op, std::vector<Tensor*> params,
                 const std::function<Tensor()>& forward, const Tensor& r) {
  Tape::active().reset();
  backward(sum(mul(forward(), r)));
  for (Tensor* p : params) {
    if (!p->has_grad()) {
      c.require(false, "%s: missing gradient", op);
      continue;
    }
    Eigen::ArrayXf analytic = p->grad();
    auto f = [&] {
      NoGradScope ng;
      return probe_value(forward(), r);
    };
    auto fd = oracle::finite_difference(*p, f);
    for (long i = 0; i < p->numel(); ++i) {
      double err = oracle::rel_err(analytic[i], fd[static_cast<std::size_t>(i)]);
      c.require(err < 1e-3, "%s: grad[%ld] rel err %.2e (analytic %.5f, fd %.5f)",
                op, i, err, analytic[i], fd[static_cast<std::size_t>(i)]);
    }
    p->zero_grad();
  }
  Tape::active().reset();
}

// Inputs kept away from the relu kink so central differences stay valid.
Tensor kink_free(Shape shape, Rng& rng) {
  Eigen::ArrayXf v(shape_numel(shape));
  for (long i = 0; i < v.size(); ++i) {
    float x = rng.uniform(-1.0f, 1.0f);
    v[i] = x + (x >= 0.0f ? 0.06f : -0.06f);
  }
  return Tensor::param(std::move(shape), std::move(v));
}

void criterion_autodiff(Check& c) {
  Rng rng(2001);
  for (int seed = 0; seed < 20; ++seed) {
    {
      Tensor a = oracle::random_tensor({4, 4}, rng, -1, 1, true);
      Tensor b = oracle::random_tensor({4, 4}, rng, -1, 1, true);
      Tensor r = oracle::random_tensor({4, 4}, rng);
      check_grads(c, "add", {&a, &b}, [&] { return add(a, b); }, r);
      check_grads(c, "mul", {&a, &b}, [&] { return mul(a, b); }, r);
      check_grads(c, "scale", {&a}, [&] { return scale(a, 1.7f); }, r);
    }
    {
      Tensor a = oracle::random_tensor({24}, rng, -1, 1, true);
      Tensor r1 = oracle::random_tensor({1}, rng);
      check_grads(c, "sum", {&a}, [&] { return sum(a); }, r1);
      check_grads(c, "mean", {&a}, [&] { return mean(a); }, r1);
      Tensor r2 = oracle::random_tensor({6, 4}, rng);
      check_grads(c, "reshape", {&a}, [&] { return reshape(a, {6, 4}); }, r2);
    }
    {
      Tensor a = kink_free({4, 4}, rng);
      Tensor r = oracle::random_tensor({4, 4}, rng);
      check_grads(c, "relu", {&a}, [&] { return relu(a); }, r);
      Tensor b = oracle::random_tensor({4, 4}, rng, -2, 2, true);
      check_grads(c, "tanh", {&b}, [&] { return hood::tanh(b); }, r);
      Tensor s = oracle::random_tensor({4, 6}, rng, -2, 2, true);
      Tensor rs = oracle::random_tensor({4, 6}, rng);
      check_grads(c, "softmax_lastdim", {&s},
                  [&] { return softmax_lastdim(s); }, rs);
    }
    {
      Tensor x = oracle::random_tensor({2, 3, 2, 2}, rng, -1, 1, true);
      Tensor b = oracle::random_tensor({3}, rng, -1, 1, true);
      Tensor r = oracle::random_tensor({2, 3, 2, 2}, rng);
      check_grads(c, "channel_bias", {&x, &b},
                  [&] { return channel_bias(x, b); }, r);
    }
    {
      Tensor x = oracle::random_tensor({3, 4}, rng, -1, 1, true);
      Tensor w = oracle::random_tensor({4, 5}, rng, -1, 1, true);
      Tensor b = oracle::random_tensor({5}, rng, -1, 1, true);
      Tensor r = oracle::random_tensor({3, 5}, rng);
      check_grads(c, "dense", {&x, &w, &b}, [&] { return dense(x, w, b); }, r);
    }
    {
      int stride = 1 + seed % 2;
      Tensor x = oracle::random_tensor({1, 2, 4, 4}, rng, -1, 1, true);
      Tensor k = oracle::random_tensor({3, 2, 3, 3}, rng, -1, 1, true);
      Tensor probe_shape = conv2d(x.detached(), k.detached(), stride, 1);
      Tensor r = oracle::random_tensor(probe_shape.shape(), rng);
      check_grads(c, "conv2d", {&x, &k},
                  [&] { return conv2d(x, k, stride, 1); }, r);
    }
    {
      Tensor x = oracle::random_tensor({1, 2, 3, 3}, rng, -1, 1, true);
      Tensor k = oracle::random_tensor({2, 2, 4, 4}, rng, -1, 1, true);
      Tensor r = oracle::random_tensor({1, 2, 6, 6}, rng);
      check_grads(c, "conv_transpose2d", {&x, &k},
                  [&] { return conv_transpose2d(x, k, 2, 1); }, r);
    }
    {
      Tensor logits = oracle::random_tensor({4, 5}, rng, -2, 2, true);
      std::vector<int> labels;
      for (int i = 0; i < 4; ++i) labels.push_back(rng.uniform_int(5));
      Tensor r1 = oracle::random_tensor({1}, rng);
      check_grads(c, "cross_entropy", {&logits},
                  [&] { return cross_entropy(logits, labels); }, r1);
    }
    {
      Tensor p = oracle::random_tensor({3, 7}, rng, -1, 1, true);
      Tensor t = oracle::random_tensor({3, 7}, rng, -1, 1, true);
      Tensor w = oracle::random_tensor({3, 7}, rng, 0.1f, 2.0f, true);
      Tensor r1 = oracle::random_tensor({1}, rng);
      check_grads(c, "weighted_mse", {&p, &t, &w},
                  [&] { return weighted_mse(p, t, w); }, r1);
    }
  }
}

// ---------------------------------------------------------------------------
// 2. constrained nearest neighbor vs exhaustive linear scan
// ---------------------------------------------------------------------------

void criterion_knn(Check& c) {
  Rng rng(2002);
  const long rows = 1000, dim = 64;
  const int classes = 10;
  std::vector<float> features(static_cast<std::size_t>(rows * dim));
  for (auto& v : features) v = rng.uniform(-2.0f, 2.0f);
  for (long i = 0; i < 60; ++i)  // duplicated rows force distance ties
    for (long j = 0; j < dim; ++j)
      features[static_cast<std::size_t>((rows - 60 + i) * dim + j)] =
          features[static_cast<std::size_t>(i * dim + j)];
  std::vector<int> labels(static_cast<std::size_t>(rows));
  for (long i = 0; i < rows; ++i)
    labels[static_cast<std::size_t>(i)] = static_cast<int>(i % classes);

  RowMatrixXf m(rows, dim);
  for (long i = 0; i < rows; ++i)
    for (long j = 0; j < dim; ++j)
      m(i, j) = features[static_cast<std::size_t>(i * dim + j)];
  std::vector<std::uint32_t> ulabels(labels.begin(), labels.end());
  std::vector<std::uint32_t> refs(static_cast<std::size_t>(rows));
  for (long i = 0; i < rows; ++i) refs[static_cast<std::size_t>(i)] = static_cast<std::uint32_t>(i);
  FeatureBank bank(std::move(m), ulabels, refs, classes);

  for (int q = 0; q < 100; ++q) {
    std::vector<float> query(static_cast<std::size_t>(dim));
    if (q % 4 == 0) {
      long src = (q * 7) % 60;
      for (long j = 0; j < dim; ++j)
        query[static_cast<std::size_t>(j)] =
            features[static_cast<std::size_t>(src * dim + j)];
    } else {
      for (auto& v : query) v = rng.uniform(-2.0f, 2.0f);
    }
    int cls = q % classes;
    long expected = oracle::knn_linear_scan(features, rows, dim, labels, query, cls);
    Eigen::VectorXf qv = Eigen::Map<Eigen::VectorXf>(query.data(), dim);
    long got = nearest_in_distribution(qv, cls, bank);
    c.require(got == expected, "query %d class %d: got index %ld, oracle %ld", q,
              cls, got, expected);
  }
}

// ---------------------------------------------------------------------------
// 3. metric oracles
// ---------------------------------------------------------------------------

void criterion_metrics(Check& c) {
  Rng rng(2003);
  for (int trial = 0; trial < 40; ++trial) {
    int n_in = 20 + rng.uniform_int(181);   // up to 200
    int n_out = 20 + rng.uniform_int(181);
    std::vector<double> in_scores(static_cast<std::size_t>(n_in));
    std::vector<double> out_scores(static_cast<std::size_t>(n_out));
    for (auto& s : in_scores) s = rng.uniform();
    for (auto& s : out_scores) s = 0.2 + rng.uniform();
    if (trial % 3 == 0)  // shared values make tie groups
      for (int i = 0; i < std::min(n_in, n_out) / 4; ++i)
        out_scores[static_cast<std::size_t>(i)] = in_scores[static_cast<std::size_t>(i)];

    double a = auroc(in_scores, out_scores);
    double a_ref = oracle::auroc_pair_count(in_scores, out_scores);
    c.require(std::abs(a - a_ref) < 1e-9, "trial %d: auroc %.12f vs pair-count %.12f",
              trial, a, a_ref);

    double e = aupr(in_scores, out_scores, PositiveClass::out);
    double e_ref = oracle::aupr_threshold_enum(out_scores, in_scores);
    c.require(std::abs(e - e_ref) < 1e-9, "trial %d: aupr-e %.12f vs oracle %.12f",
              trial, e, e_ref);

    std::vector<double> neg_in, neg_out;
    for (double s : in_scores) neg_in.push_back(-s);
    for (double s : out_scores) neg_out.push_back(-s);
    double s_val = aupr(in_scores, out_scores, PositiveClass::in);
    double s_ref = oracle::aupr_threshold_enum(neg_in, neg_out);
    c.require(std::abs(s_val - s_ref) < 1e-9,
              "trial %d: aupr-s %.12f vs oracle %.12f", trial, s_val, s_ref);

    double f = fpr_at_tpr(in_scores, out_scores, 0.95);
    double f_ref = oracle::fpr_at_tpr_sweep(in_scores, out_scores, 0.95);
    c.require(f == f_ref, "trial %d: fpr95 %.12f vs sweep %.12f", trial, f, f_ref);
  }

  // degenerate cases are exact
  std::vector<double> flat_in(30, 0.5), flat_out(10, 0.5);
  c.require(auroc(flat_in, flat_out) == 0.5, "all-ties auroc != 0.5");
  c.require(aupr(flat_in, flat_out, PositiveClass::out) == 0.25,
            "all-ties aupr-e != prevalence 0.25");
  c.require(aupr(flat_in, flat_out, PositiveClass::in) == 0.75,
            "all-ties aupr-s != prevalence 0.75");
}

// ---------------------------------------------------------------------------
// 4. weighted loss contract
// ---------------------------------------------------------------------------

void criterion_loss(Check& c) {
  Rng rng(2004);
  // zero targets collapse the weight to 1: equals plain MSE within 1e-7
  for (int trial = 0; trial < 10; ++trial) {
    Tensor pred_out = oracle::random_tensor({2, 3, 4, 4}, rng);
    Tensor pred_in = oracle::random_tensor({3, 3, 4, 4}, rng);
    Tensor zeros_t = Tensor::zeros({2, 3, 4, 4});
    float alpha = rng.uniform(0.0f, 10.0f);
    double loss = decoder_loss(pred_in, pred_out, zeros_t, alpha).scalar();
    double mse = pred_out.values().cast<double>().square().mean() +
                 pred_in.values().cast<double>().square().mean();
    c.require(std::abs(loss - mse) < 1e-7, "trial %d: |loss - mse| = %.3e", trial,
              std::abs(loss - mse));
  }

  // single-element hand case holds exactly in float arithmetic
  Tensor p1 = Tensor::zeros({1});
  Tensor t1 = Tensor::full({1}, 0.5f);
  float v = decoder_loss(Tensor(), p1, t1, 5.0f).scalar();
  c.require(v == 0.875f, "single-element case: %.9f != 0.875", v);

  // loss gradient on a tiny decoder (D=4 features, 2 classes, 2x2 maps)
  Tape::active().reset();
  Tensor proj_w = oracle::random_tensor({6, 8}, rng, -0.4f, 0.4f, true);
  Tensor proj_b = oracle::random_tensor({8}, rng, -0.1f, 0.1f, true);
  Tensor kernel = oracle::random_tensor({2, 3, 2, 2}, rng, -0.4f, 0.4f, true);
  Tensor in_x = oracle::random_tensor({2, 6}, rng, 0.0f, 1.0f);
  Tensor out_x = oracle::random_tensor({1, 6}, rng, 0.0f, 1.0f);
  Tensor target = oracle::random_tensor({1, 3, 2, 2}, rng, -0.8f, 0.8f);
  auto forward = [&](const Tensor& x) {
    Tensor h = relu(dense(x, proj_w, proj_b));
    return hood::tanh(conv_transpose2d(reshape(h, {x.dim(0), 2, 2, 2}), kernel, 2, 1));
  };
  backward(decoder_loss(forward(in_x), forward(out_x), target, 5.0f));
  auto loss_fn = [&] {
    NoGradScope ng;
    return static_cast<double>(
        decoder_loss(forward(in_x), forward(out_x), target, 5.0f).scalar());
  };
  for (Tensor* p : {&proj_w, &proj_b, &kernel}) {
    auto fd = oracle::finite_difference(*p, loss_fn);
    for (long i = 0; i < p->numel(); ++i) {
      double err = oracle::rel_err(p->grad()[i], fd[static_cast<std::size_t>(i)]);
      c.require(err < 1e-3, "tiny decoder grad rel err %.2e", err);
    }
  }
  Tape::active().reset();
}

// ---------------------------------------------------------------------------
// 5. scoring-function contract
// ---------------------------------------------------------------------------

void criterion_score(Check& c) {
  Heatmap zero = Heatmap::zero(8, 8);
  c.require(heatmap_score(zero) == 0.0, "zero heatmap scored %.3e",
            heatmap_score(zero));

  Rng rng(2005);
  for (int trial = 0; trial < 10; ++trial) {
    Heatmap h = Heatmap::zero(6, 6);
    for (long i = 0; i < h.values.size(); ++i) h.values[i] = rng.uniform(-1, 1);
    double base = heatmap_score(h);
    for (float s : {0.0f, 0.25f, 0.5f, 1.0f}) {
      Heatmap scaled = h;
      scaled.values *= s;
      double got = heatmap_score(scaled);
      c.require(std::abs(got - s * base) < 1e-6,
                "homogeneity c=%.2f: |%.9f - %.9f| >= 1e-6", s, got, s * base);
    }
  }

  // hand example: per-pixel channel-max abs (0.5, 0.1, 0.3, 0.7) -> 0.4
  // (float storage of the decimals leaves ~4e-10 slack)
  Heatmap hand = Heatmap::zero(2, 2);
  hand.values[0] = 0.5f;
  hand.values[4 + 1] = -0.1f;
  hand.values[8 + 2] = 0.3f;
  hand.values[3] = 0.7f;
  double got = heatmap_score(hand);
  c.require(std::abs(got - 0.4) < 1e-9, "hand example scored %.12f", got);
}

// ---------------------------------------------------------------------------
// 6-9. synthetic end-to-end experiment and its derived criteria
// ---------------------------------------------------------------------------

struct RunMetrics {
  double h_auroc, msp_auroc, energy_auroc;
  double h_fpr95, msp_fpr95;
};

RunMetrics read_metrics(const fs::path& dir) {
  Manifest m = Manifest::load_or_empty(dir / kManifestFile);
  auto val = [&](const std::string& key) {
    std::string s = m.get(key);
    return s.empty() ? -1.0 : std::stod(s);
  };
  return {val("report.heatmap.auroc"), val("report.msp.auroc"),
          val("report.energy.auroc"), val("report.heatmap.fpr95"),
          val("report.msp.fpr95")};
}

void run_experiment(const ExperimentConfig& cfg, const fs::path& dir,
                    bool through_eval) {
  fs::remove_all(dir);
  std::vector<std::string> stages = {"train-classifier", "build-targets",
                                     "train-decoder", "score"};
  if (through_eval) stages.push_back("eval");
  for (const auto& stage : stages) run_stage(stage, cfg, dir);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void criterion_end_to_end(Check& c, const ExperimentConfig& cfg,
                          const fs::path& dir, double seconds) {
  RunMetrics m = read_metrics(dir);
  {
    Manifest man = Manifest::load_or_empty(dir / kManifestFile);
    double first = std::stod(man.get("decoder.first_epoch_loss"));
    double final_loss = std::stod(man.get("decoder.final_epoch_loss"));
    c.require(final_loss <= 0.5 * first,
              "final epoch loss %.5f not below half of first %.5f", final_loss,
              first);
  }
  c.note("heatmap AUROC %.4f (msp %.4f, energy %.4f), heatmap FPR95 %.4f (msp %.4f), %.0f s",
         m.h_auroc, m.msp_auroc, m.energy_auroc, m.h_fpr95, m.msp_fpr95, seconds);
  c.require(m.h_auroc >= 0.95, "heatmap AUROC %.4f < 0.95", m.h_auroc);
  c.require(m.h_auroc >= m.msp_auroc, "heatmap AUROC %.4f < MSP %.4f", m.h_auroc,
            m.msp_auroc);
  c.require(m.h_fpr95 <= m.msp_fpr95, "heatmap FPR95 %.4f > MSP %.4f", m.h_fpr95,
            m.msp_fpr95);
  c.require(seconds < 900.0, "runtime %.0f s exceeds 15 min", seconds);
  if (kPinnedHeatmapAuroc >= 0.0) {
    c.require(std::abs(m.h_auroc - kPinnedHeatmapAuroc) <= kPinTolerance,
              "heatmap AUROC %.4f drifted from pinned %.4f", m.h_auroc,
              kPinnedHeatmapAuroc);
    c.require(std::abs(m.msp_auroc - kPinnedMspAuroc) <= kPinTolerance,
              "MSP AUROC %.4f drifted from pinned %.4f", m.msp_auroc,
              kPinnedMspAuroc);
    c.require(std::abs(m.h_fpr95 - kPinnedHeatmapFpr95) <= kPinTolerance,
              "heatmap FPR95 %.4f drifted from pinned %.4f", m.h_fpr95,
              kPinnedHeatmapFpr95);
  } else {
    c.note("pin constants unset: record heatmap AUROC %.6f, msp AUROC %.6f, heatmap FPR95 %.6f",
           m.h_auroc, m.msp_auroc, m.h_fpr95);
  }
}

void criterion_lighting(Check& c, const ExperimentConfig& cfg, const fs::path& dir) {
  run_stage("lighting", cfg, dir);
  Manifest m = Manifest::load_or_empty(dir / kManifestFile);
  auto val = [&](const std::string& key) {
    std::string s = m.get(key);
    if (s.empty()) throw Error("missing manifest key " + key);
    return std::stod(s);
  };
  double b1 = val("lighting.brightness.1");
  double b2 = val("lighting.brightness.2");
  double b25 = val("lighting.brightness.2.5");
  double c1 = val("lighting.contrast.1");
  double c05 = val("lighting.contrast.0.5");
  double c01 = val("lighting.contrast.0.1");
  double ood = val("lighting.ood_test");
  c.note("brightness 1.0/2.0/2.5: %.4f %.4f %.4f", b1, b2, b25);
  c.note("contrast   1.0/0.5/0.1: %.4f %.4f %.4f (ood-test %.4f)", c1, c05, c01, ood);
  c.require(b1 < b2 && b2 < b25, "brightness scores not increasing: %.4f %.4f %.4f",
            b1, b2, b25);
  c.require(c1 < c05 && c05 < c01, "contrast scores not increasing: %.4f %.4f %.4f",
            c1, c05, c01);
  c.require(b1 < ood, "unaugmented mean %.4f not below OOD-test mean %.4f", b1, ood);
}

void criterion_ablation(Check& c, const ExperimentConfig& cfg, const fs::path& dir) {
  run_stage("ablate-oodsize", cfg, dir);
  Manifest m = Manifest::load_or_empty(dir / kManifestFile);
  std::map<int, double> by_size;
  for (int size : cfg.ablation_sizes) {
    std::string s = m.get("ablation.auroc." + std::to_string(size));
    if (s.empty()) {
      c.require(false, "missing ablation result for size %d", size);
      return;
    }
    by_size[size] = std::stod(s);
  }
  int full = cfg.ablation_sizes.back();
  double full_auroc = by_size[full];
  for (const auto& [size, auroc_v] : by_size) {
    c.note("ood size %4d -> AUROC %.4f", size, auroc_v);
    if (size >= 400)
      c.require(std::abs(auroc_v - full_auroc) <= 0.05,
                "size %d AUROC %.4f deviates from full-size %.4f by > 0.05",
                size, auroc_v, full_auroc);
  }
}

void criterion_determinism(Check& c, const ExperimentConfig& cfg,
                           const fs::path& dir_a, const fs::path& dir_b) {
  run_experiment(cfg, dir_b, true);
  std::string scores_a = slurp(dir_a / kScoresFile);
  std::string scores_b = slurp(dir_b / kScoresFile);
  c.require(!scores_a.empty() && scores_a == scores_b,
            "scores.txt differs between identical runs");
  std::string report_a = slurp(dir_a / kReportFile);
  std::string report_b = slurp(dir_b / kReportFile);
  c.require(!report_a.empty() && report_a == report_b,
            "report.txt differs between identical runs");
}

}  // namespace

int main() {
  fs::path root = fs::temp_directory_path() / "hood_acceptance";
  fs::remove_all(root);
  fs::create_directories(root);

  ExperimentConfig cfg = ExperimentConfig::from(KeyValueConfig{});  // defaults
  fs::path run_a = root / "run_a";
  fs::path run_b = root / "run_b";
  double run_a_seconds = 0.0;

  struct Criterion {
    int id;
    const char* name;
    double time_limit_s;  // 0: no limit
    std::function<void(Check&)> run;
  };
  std::vector<Criterion> criteria = {
      {1, "autodiff gradients match central finite differences (20 seeds)", 30.0,
       criterion_autodiff},
      {2, "class-constrained nearest neighbor equals exhaustive linear scan", 5.0,
       criterion_knn},
      {3, "AUROC / AUPR / FPR95 equal their counting oracles", 10.0,
       criterion_metrics},
      {4, "weighted decoder loss: MSE collapse, hand value, gradient check", 0.0,
       criterion_loss},
      {5, "heatmap score: zero map, homogeneity, hand value", 0.0,
       criterion_score},
      {6, "synthetic end-to-end: heatmap beats MSP at AUROC >= 0.95", 0.0,
       [&](Check& c) {
         auto t0 = Clock::now();
         run_experiment(cfg, run_a, true);
         run_a_seconds = elapsed_s(t0);
         criterion_end_to_end(c, cfg, run_a, run_a_seconds);
       }},
      {7, "lighting: heatmap response grows with brightness/contrast damage", 0.0,
       [&](Check& c) { criterion_lighting(c, cfg, run_a); }},
      {8, "OOD-training-size ablation stays within 0.05 of full-size AUROC", 0.0,
       [&](Check& c) { criterion_ablation(c, cfg, run_a); }},
      {9, "identical seeds give byte-identical scores.txt and report.txt", 0.0,
       [&](Check& c) { criterion_determinism(c, cfg, run_a, run_b); }},
  };

  int failed = 0;
  for (auto& criterion : criteria) {
    auto t0 = Clock::now();
    Check check;
    try {
      criterion.run(check);
    } catch (const std::exception& e) {
      check.failures.push_back(std::string("exception: ") + e.what());
    }
    double secs = elapsed_s(t0);
    if (criterion.time_limit_s > 0.0 && secs > criterion.time_limit_s) {
      char buf[128];
      std::snprintf(buf, sizeof(buf), "runtime %.1f s exceeds %.0f s budget",
                    secs, criterion.time_limit_s);
      check.failures.emplace_back(buf);
    }
    bool ok = check.failures.empty();
    std::printf("[%s] %d %s (%.1f s)\n", ok ? "PASS" : "FAIL", criterion.id,
                criterion.name, secs);
    if (!ok) {
      ++failed;
      std::size_t shown = std::min<std::size_t>(check.failures.size(), 5);
      for (std::size_t i = 0; i < shown; ++i)
        std::printf("       %s\n", check.failures[i].c_str());
      if (check.failures.size() > shown)
        std::printf("       ... and %zu more\n", check.failures.size() - shown);
    }
    std::fflush(stdout);
  }
  if (failed) std::printf("%d of %zu criteria failed\n", failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
