#include "hood/pipeline.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "hood/binio.hpp"
#include "hood/decoder.hpp"

namespace hood {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Manifest
// ---------------------------------------------------------------------------

Manifest Manifest::load_or_empty(const fs::path& path) {
  Manifest m;
  std::ifstream in(path);
  if (!in) return m;
  std::string line;
  while (std::getline(in, line)) {
    std::size_t eq = line.find('=');
    if (eq == std::string::npos) continue;
    std::string key = line.substr(0, eq);
    std::string value = line.substr(eq + 1);
    while (!key.empty() && key.back() == ' ') key.pop_back();
    while (!value.empty() && value.front() == ' ') value.erase(value.begin());
    m.entries_[key] = value;
  }
  return m;
}

void Manifest::save(const fs::path& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  for (const auto& [key, value] : entries_) out << key << " = " << value << '\n';
  if (!out) throw IoError("write failed for " + path.string());
}

void Manifest::set(const std::string& key, const std::string& value) {
  entries_[key] = value;
}

std::string Manifest::get(const std::string& key) const {
  auto it = entries_.find(key);
  return it == entries_.end() ? std::string() : it->second;
}

static std::string digest_hex(std::uint64_t digest) {
  char buf[24];
  std::snprintf(buf, sizeof(buf), "fnv1a:%016llx",
                static_cast<unsigned long long>(digest));
  return buf;
}

void Manifest::record_artifact(const fs::path& out_dir, const std::string& name) {
  entries_["artifact." + name] = digest_hex(file_digest(out_dir / name));
}

void Manifest::verify_artifact(const fs::path& out_dir,
                               const std::string& name) const {
  fs::path path = out_dir / name;
  if (!fs::exists(path)) throw MissingInputError(path);
  std::string recorded = get("artifact." + name);
  if (recorded.empty()) throw MissingInputError(path);
  std::string actual = digest_hex(file_digest(path));
  if (actual != recorded)
    throw Error("artifact " + path.string() +
                " does not match the digest recorded by its producing stage (" +
                actual + " vs " + recorded + "); rerun the producer");
}

// ---------------------------------------------------------------------------
// Shared stage helpers
// ---------------------------------------------------------------------------

namespace {

struct MethodScores {
  std::vector<double> heatmap, msp, energy;
};

// Scores a dataset with all three methods, appending one record per sample
// and method to `records`.
MethodScores score_dataset(const FrozenClassifier& model,
                           const FeatureBank& bank, const DecoderModel& decoder,
                           const Dataset& ds, Membership membership,
                           const std::string& id_prefix,
                           std::vector<ScoreRecord>* records) {
  MethodScores out;
  int d = model.config().feature_dim;
  int c = model.config().class_count;
  const int batch = 200;
  for (int start = 0; start < ds.count(); start += batch) {
    int n = std::min(batch, ds.count() - start);
    std::vector<int> idx(static_cast<std::size_t>(n));
    std::iota(idx.begin(), idx.end(), start);
    ClassifyResult cls = model.classify(ds, idx);

    // Assemble decoder inputs for the whole batch, then one predict call.
    Eigen::ArrayXf inputs(static_cast<long>(n) * (d + c));
    for (int i = 0; i < n; ++i) {
      auto probs = cls.probs.values().segment(static_cast<long>(i) * c, c);
      long arg = 0;
      probs.maxCoeff(&arg);
      Eigen::VectorXf z = Eigen::Map<const Eigen::VectorXf>(
          cls.features.values().data() + static_cast<long>(i) * d, d);
      inputs.segment(static_cast<long>(i) * (d + c), d + c) =
          assemble_input(z, static_cast<int>(arg), bank.feature_min(),
                         bank.feature_max(), c)
              .array();
    }
    Tensor pred = decoder.predict(
        Tensor::from_array({n, d + c}, std::move(inputs)));
    long hm = 3l * ds.height * ds.width;

    for (int i = 0; i < n; ++i) {
      double h = heatmap_score(
          std::span<const float>(pred.values().data() + static_cast<long>(i) * hm,
                                 static_cast<std::size_t>(hm)),
          ds.width, ds.height);
      double m = msp_score(std::span<const float>(
          cls.probs.values().data() + static_cast<long>(i) * c,
          static_cast<std::size_t>(c)));
      double e = energy_score(std::span<const float>(
          cls.logits.values().data() + static_cast<long>(i) * c,
          static_cast<std::size_t>(c)));
      out.heatmap.push_back(h);
      out.msp.push_back(m);
      out.energy.push_back(e);
      if (records) {
        std::string id = id_prefix + ":" + std::to_string(start + i);
        records->push_back({id, Method::heatmap, membership, h});
        records->push_back({id, Method::msp, membership, m});
        records->push_back({id, Method::energy, membership, e});
      }
    }
  }
  return out;
}

double mean_of(const std::vector<double>& v) {
  double acc = 0.0;
  for (double x : v) acc += x;
  return v.empty() ? 0.0 : acc / static_cast<double>(v.size());
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

struct Stage {
  const ExperimentConfig& cfg;
  const fs::path& out;
  Manifest& manifest;
  bool verbose;

  void log(const std::string& msg) const {
    if (verbose) std::printf("%s\n", msg.c_str());
  }
};

void stage_train_classifier(const Stage& s) {
  Dataset train = s.cfg.make_dataset(Split::in_train);
  EpochCallback cb;
  if (s.verbose)
    cb = [](const EpochStats& e) {
      std::printf("[train-classifier] epoch %d loss %.4f acc %.4f\n", e.epoch,
                  e.loss, e.accuracy);
    };
  FrozenClassifier model = train_classifier(train, s.cfg.classifier, cb);
  model.save(s.out / kClassifierFile);
  s.manifest.record_artifact(s.out, kClassifierFile);
  s.manifest.set("classifier.weight_hash",
                 std::to_string(model.weight_hash()));
}

void stage_build_targets(const Stage& s) {
  s.manifest.verify_artifact(s.out, kClassifierFile);
  FrozenClassifier model = FrozenClassifier::load(s.out / kClassifierFile);
  Dataset d_in = s.cfg.make_dataset(Split::in_train);
  Dataset d_out = s.cfg.make_dataset(Split::out_train);
  FeatureBank bank = extract_feature_bank(model, d_in);
  bank.save(s.out / kBankFile);
  TargetSet targets =
      build_target_sets(model, bank, d_in, d_out, s.cfg.target_scale);
  targets.save(s.out / kTargetsFile);
  s.manifest.record_artifact(s.out, kBankFile);
  s.manifest.record_artifact(s.out, kTargetsFile);
  s.log("[build-targets] bank rows " + std::to_string(bank.rows()) +
        ", OOD targets " + std::to_string(targets.out_targets.size()));
}

void stage_train_decoder(const Stage& s) {
  s.manifest.verify_artifact(s.out, kClassifierFile);
  s.manifest.verify_artifact(s.out, kBankFile);
  s.manifest.verify_artifact(s.out, kTargetsFile);
  FrozenClassifier model = FrozenClassifier::load(s.out / kClassifierFile);
  FeatureBank bank = FeatureBank::load(s.out / kBankFile);
  TargetSet targets = TargetSet::load(s.out / kTargetsFile);
  Dataset d_in = s.cfg.make_dataset(Split::in_train);
  Dataset d_out = s.cfg.make_dataset(Split::out_train);

  std::uint64_t hash_before = model.weight_hash();
  EpochCallback cb;
  if (s.verbose)
    cb = [&](const EpochStats& e) {
      if (e.epoch == 1 || e.epoch % 10 == 0)
        std::printf("[train-decoder] epoch %d loss %.6f\n", e.epoch, e.loss);
    };
  DecoderModel::TrainStats stats;
  DecoderModel decoder = train_decoder(targets, d_in, d_out, model, bank,
                                       s.cfg.decoder, &stats, cb);
  if (model.weight_hash() != hash_before)
    throw Error("classifier weights changed during decoder training");
  decoder.save(s.out / kDecoderFile);
  s.manifest.record_artifact(s.out, kDecoderFile);
  s.manifest.set("decoder.first_epoch_loss", format_double(stats.first_epoch_loss));
  s.manifest.set("decoder.final_epoch_loss", format_double(stats.final_epoch_loss));
}

void stage_score(const Stage& s) {
  s.manifest.verify_artifact(s.out, kClassifierFile);
  s.manifest.verify_artifact(s.out, kBankFile);
  s.manifest.verify_artifact(s.out, kDecoderFile);
  FrozenClassifier model = FrozenClassifier::load(s.out / kClassifierFile);
  FeatureBank bank = FeatureBank::load(s.out / kBankFile);
  DecoderModel decoder = DecoderModel::load(s.out / kDecoderFile);
  Dataset in_test = s.cfg.make_dataset(Split::in_test);
  Dataset out_test = s.cfg.make_dataset(Split::out_test);

  std::vector<ScoreRecord> records;
  score_dataset(model, bank, decoder, in_test, Membership::in, "in_test", &records);
  score_dataset(model, bank, decoder, out_test, Membership::out, "out_test", &records);
  save_scores(s.out / kScoresFile, records);
  s.manifest.record_artifact(s.out, kScoresFile);
  s.log("[score] wrote " + std::to_string(records.size()) + " records");
}

void stage_eval(const Stage& s) {
  s.manifest.verify_artifact(s.out, kScoresFile);
  auto records = load_scores(s.out / kScoresFile);
  std::vector<EvalReport> reports;
  for (Method m : {Method::heatmap, Method::msp, Method::energy}) {
    std::vector<double> in_scores, out_scores;
    for (const auto& r : records) {
      if (r.method != m) continue;
      if (r.membership == Membership::in) in_scores.push_back(r.score);
      if (r.membership == Membership::out) out_scores.push_back(r.score);
    }
    if (in_scores.empty() || out_scores.empty()) continue;
    reports.push_back(evaluate_method(m, in_scores, out_scores));
  }
  std::string table = render_report_table(reports);
  {
    std::ofstream out(s.out / kReportFile, std::ios::trunc);
    if (!out) throw IoError("cannot write report");
    out << table;
  }
  {
    std::ofstream out(s.out / kReportKvFile, std::ios::trunc);
    if (!out) throw IoError("cannot write report.kv");
    out << render_report_kv(reports);
  }
  s.manifest.record_artifact(s.out, kReportFile);
  s.manifest.record_artifact(s.out, kReportKvFile);
  for (const auto& r : reports) {
    std::string m = to_string(r.method);
    s.manifest.set("report." + m + ".auroc", format_double(r.auroc));
    s.manifest.set("report." + m + ".aupr_s", format_double(r.aupr_s));
    s.manifest.set("report." + m + ".aupr_e", format_double(r.aupr_e));
    s.manifest.set("report." + m + ".fpr95", format_double(r.fpr95));
  }
  std::printf("%s", table.c_str());

  // Decision summary at the configured threshold (heatmap method).
  DetectorConfig det{s.cfg.detector_delta};
  long in_accepted = 0, in_total = 0, out_rejected = 0, out_total = 0;
  for (const auto& r : records) {
    if (r.method != Method::heatmap) continue;
    if (r.membership == Membership::in) {
      ++in_total;
      if (detect(r.score, det) == Membership::in) ++in_accepted;
    } else if (r.membership == Membership::out) {
      ++out_total;
      if (detect(r.score, det) == Membership::out) ++out_rejected;
    }
  }
  if (in_total + out_total > 0)
    std::printf(
        "detector delta %.9g: %ld/%ld in-distribution accepted, %ld/%ld OOD "
        "rejected (heatmap)\n",
        s.cfg.detector_delta, in_accepted, in_total, out_rejected, out_total);
}

void stage_visualize(const Stage& s) {
  s.manifest.verify_artifact(s.out, kClassifierFile);
  s.manifest.verify_artifact(s.out, kBankFile);
  s.manifest.verify_artifact(s.out, kDecoderFile);
  s.manifest.verify_artifact(s.out, kTargetsFile);
  FrozenClassifier model = FrozenClassifier::load(s.out / kClassifierFile);
  FeatureBank bank = FeatureBank::load(s.out / kBankFile);
  DecoderModel decoder = DecoderModel::load(s.out / kDecoderFile);
  TargetSet targets = TargetSet::load(s.out / kTargetsFile);
  Dataset d_in = s.cfg.make_dataset(Split::in_train);
  Dataset in_test = s.cfg.make_dataset(Split::in_test);
  Dataset out_test = s.cfg.make_dataset(Split::out_test);
  Dataset d_out = s.cfg.make_dataset(Split::out_train);

  fs::path dir = s.out / "heatmaps";
  fs::create_directories(dir);
  long hm = 3l * s.cfg.image_size * s.cfg.image_size;

  auto export_predictions = [&](const Dataset& ds, const std::string& tag) {
    int n = std::min(s.cfg.visualize_count, ds.count());
    if (n == 0) return;
    std::vector<ScoreRecord> unused;
    // predict in one batch of n
    std::vector<int> idx(static_cast<std::size_t>(n));
    std::iota(idx.begin(), idx.end(), 0);
    ClassifyResult cls = model.classify(ds, idx);
    int d = model.config().feature_dim;
    int c = model.config().class_count;
    Eigen::ArrayXf inputs(static_cast<long>(n) * (d + c));
    for (int i = 0; i < n; ++i) {
      auto probs = cls.probs.values().segment(static_cast<long>(i) * c, c);
      long arg = 0;
      probs.maxCoeff(&arg);
      Eigen::VectorXf z = Eigen::Map<const Eigen::VectorXf>(
          cls.features.values().data() + static_cast<long>(i) * d, d);
      inputs.segment(static_cast<long>(i) * (d + c), d + c) =
          assemble_input(z, static_cast<int>(arg), bank.feature_min(),
                         bank.feature_max(), c)
              .array();
    }
    Tensor pred = decoder.predict(Tensor::from_array({n, d + c}, std::move(inputs)));
    for (int i = 0; i < n; ++i) {
      Heatmap h;
      h.width = s.cfg.image_size;
      h.height = s.cfg.image_size;
      h.values = pred.values().segment(static_cast<long>(i) * hm, hm);
      export_heatmap_image(h, dir / (tag + "_" + std::to_string(i) + "_pred.ppm"));
      export_image_ppm(ds.image(i), ds.width, ds.height,
                       dir / (tag + "_" + std::to_string(i) + "_image.ppm"));
    }
  };
  export_predictions(in_test, "in_test");
  export_predictions(out_test, "out_test");

  // Target-definition triptychs: OOD image, nearest in-distribution image,
  // target heatmap.
  int n_targets =
      std::min<std::size_t>(static_cast<std::size_t>(s.cfg.visualize_count),
                            targets.out_targets.size());
  for (int i = 0; i < n_targets; ++i) {
    const OutTarget& t = targets.out_targets[static_cast<std::size_t>(i)];
    std::string base = "out_train_" + std::to_string(i);
    export_image_ppm(d_out.image(static_cast<int>(t.image_ref)), d_out.width,
                     d_out.height, dir / (base + "_image.ppm"));
    export_image_ppm(d_in.image(static_cast<int>(t.nn_image_ref)), d_in.width,
                     d_in.height, dir / (base + "_nn.ppm"));
    export_heatmap_image(t.heatmap, dir / (base + "_target.ppm"));
  }
  s.manifest.set("visualize.exported",
                 std::to_string(2 * std::min(s.cfg.visualize_count,
                                             in_test.count()) +
                                2 * std::min(s.cfg.visualize_count,
                                             out_test.count()) +
                                3 * n_targets));
  s.log("[visualize] wrote PPM files under " + dir.string());
}

void stage_ablate_oodsize(const Stage& s) {
  s.manifest.verify_artifact(s.out, kClassifierFile);
  s.manifest.verify_artifact(s.out, kBankFile);
  FrozenClassifier model = FrozenClassifier::load(s.out / kClassifierFile);
  FeatureBank bank = FeatureBank::load(s.out / kBankFile);
  Dataset d_in = s.cfg.make_dataset(Split::in_train);
  Dataset in_test = s.cfg.make_dataset(Split::in_test);
  Dataset out_test = s.cfg.make_dataset(Split::out_test);

  int max_size =
      *std::max_element(s.cfg.ablation_sizes.begin(), s.cfg.ablation_sizes.end());
  Dataset ood_pool = s.cfg.make_dataset(Split::out_train, max_size);

  std::ostringstream lines;
  for (int size : s.cfg.ablation_sizes) {
    Dataset d_out = ood_pool.prefix(size);
    TargetSet targets =
        build_target_sets(model, bank, d_in, d_out, s.cfg.target_scale);
    DecoderConfig dec_cfg = s.cfg.decoder;
    if (s.cfg.ablation_epochs > 0) dec_cfg.epochs = s.cfg.ablation_epochs;
    dec_cfg.seed = Rng::derive(s.cfg.decoder.seed,
                               "ablation." + std::to_string(size));
    DecoderModel decoder =
        train_decoder(targets, d_in, d_out, model, bank, dec_cfg);

    MethodScores in_scores =
        score_dataset(model, bank, decoder, in_test, Membership::in, "in", nullptr);
    MethodScores out_scores = score_dataset(model, bank, decoder, out_test,
                                            Membership::out, "out", nullptr);
    double a = auroc(in_scores.heatmap, out_scores.heatmap);
    lines << "size " << size << " auroc " << format_double(a) << '\n';
    s.manifest.set("ablation.auroc." + std::to_string(size), format_double(a));
    s.log("[ablate-oodsize] size " + std::to_string(size) + " auroc " +
          format_double(a));
  }
  std::ofstream out(s.out / kAblationFile, std::ios::trunc);
  if (!out) throw IoError("cannot write ablation results");
  out << lines.str();
  out.close();
  s.manifest.record_artifact(s.out, kAblationFile);
}

void stage_lighting(const Stage& s) {
  s.manifest.verify_artifact(s.out, kClassifierFile);
  s.manifest.verify_artifact(s.out, kBankFile);
  s.manifest.verify_artifact(s.out, kDecoderFile);
  FrozenClassifier model = FrozenClassifier::load(s.out / kClassifierFile);
  FeatureBank bank = FeatureBank::load(s.out / kBankFile);
  DecoderModel decoder = DecoderModel::load(s.out / kDecoderFile);
  Dataset in_test = s.cfg.make_dataset(Split::in_test);
  Dataset out_test = s.cfg.make_dataset(Split::out_test);

  fs::path dir = s.out / "heatmaps";
  fs::create_directories(dir);

  auto export_first = [&](const Dataset& ds, const std::string& tag) {
    int n = std::min(4, ds.count());
    int d = model.config().feature_dim;
    int c = model.config().class_count;
    std::vector<int> idx(static_cast<std::size_t>(n));
    std::iota(idx.begin(), idx.end(), 0);
    ClassifyResult cls = model.classify(ds, idx);
    for (int i = 0; i < n; ++i) {
      auto probs = cls.probs.values().segment(static_cast<long>(i) * c, c);
      long arg = 0;
      probs.maxCoeff(&arg);
      Eigen::VectorXf z = Eigen::Map<const Eigen::VectorXf>(
          cls.features.values().data() + static_cast<long>(i) * d, d);
      Heatmap h = decoder.predict_one(assemble_input(
          z, static_cast<int>(arg), bank.feature_min(), bank.feature_max(), c));
      export_heatmap_image(h, dir / ("lighting_" + tag + "_" +
                                     std::to_string(i) + ".ppm"));
      export_image_ppm(ds.image(i), ds.width, ds.height,
                       dir / ("lighting_" + tag + "_" + std::to_string(i) +
                              "_image.ppm"));
    }
  };

  std::ostringstream lines;
  auto run_variant = [&](const std::string& kind, double factor,
                         const Dataset& ds) {
    MethodScores scores =
        score_dataset(model, bank, decoder, ds, Membership::unknown, "aug", nullptr);
    double m = mean_of(scores.heatmap);
    lines << kind << " " << format_double(factor) << " mean_heatmap_score "
          << format_double(m) << '\n';
    s.manifest.set("lighting." + kind + "." + format_double(factor),
                   format_double(m));
    s.log("[lighting] " + kind + " " + format_double(factor) +
          " mean heatmap score " + format_double(m));
    return m;
  };

  run_variant("brightness", 1.0, in_test);
  for (double b : s.cfg.lighting_brightness) {
    Dataset aug = augment_brightness(in_test, static_cast<float>(b));
    run_variant("brightness", b, aug);
    export_first(aug, "b" + format_double(b));
  }
  run_variant("contrast", 1.0, in_test);
  for (double c : s.cfg.lighting_contrast) {
    Dataset aug = augment_contrast(in_test, static_cast<float>(c));
    run_variant("contrast", c, aug);
    export_first(aug, "c" + format_double(c));
  }
  {
    MethodScores scores = score_dataset(model, bank, decoder, out_test,
                                        Membership::out, "out", nullptr);
    lines << "ood_test mean_heatmap_score " << format_double(mean_of(scores.heatmap))
          << '\n';
    s.manifest.set("lighting.ood_test", format_double(mean_of(scores.heatmap)));
  }
  export_first(in_test, "b1");

  std::ofstream out(s.out / kLightingFile, std::ios::trunc);
  if (!out) throw IoError("cannot write lighting results");
  out << lines.str();
  out.close();
  s.manifest.record_artifact(s.out, kLightingFile);
}

}  // namespace

const std::vector<std::string>& stage_names() {
  static const std::vector<std::string> names = {
      "train-classifier", "build-targets", "train-decoder", "score",
      "eval",             "visualize",     "ablate-oodsize", "lighting"};
  return names;
}

void run_stage(const std::string& name, const ExperimentConfig& cfg,
               const fs::path& out_dir, bool verbose) {
  cfg.validate();
  fs::create_directories(out_dir);
  Manifest manifest = Manifest::load_or_empty(out_dir / kManifestFile);
  for (const auto& [key, value] : cfg.snapshot())
    manifest.set("config." + key, value);

  Stage stage{cfg, out_dir, manifest, verbose};
  auto t0 = std::chrono::steady_clock::now();
  if (name == "train-classifier")
    stage_train_classifier(stage);
  else if (name == "build-targets")
    stage_build_targets(stage);
  else if (name == "train-decoder")
    stage_train_decoder(stage);
  else if (name == "score")
    stage_score(stage);
  else if (name == "eval")
    stage_eval(stage);
  else if (name == "visualize")
    stage_visualize(stage);
  else if (name == "ablate-oodsize")
    stage_ablate_oodsize(stage);
  else if (name == "lighting")
    stage_lighting(stage);
  else
    throw ConfigError("unknown stage '" + name + "'");
  auto t1 = std::chrono::steady_clock::now();
  manifest.set(
      "stage." + name + ".wall_ms",
      std::to_string(
          std::chrono::duration_cast<std::chrono::milliseconds>(t1 - t0).count()));
  manifest.save(out_dir / kManifestFile);
}

}  // namespace hood
