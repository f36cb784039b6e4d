#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <numeric>

#include "hood/classifier.hpp"

using namespace hood;
namespace fs = std::filesystem;

namespace {

SynthSpec two_class_spec(int count) {
  SynthSpec spec;
  spec.class_count = 2;
  spec.image_size = 32;
  spec.family = TextureFamily::patch;
  spec.count = count;
  return spec;
}

ClassifierConfig small_config(int classes) {
  ClassifierConfig cfg;
  cfg.class_count = classes;
  cfg.epochs = 10;
  cfg.batch_size = 32;
  cfg.seed = 5;
  return cfg;
}

std::vector<int> all_indices(const Dataset& ds) {
  std::vector<int> idx(static_cast<std::size_t>(ds.count()));
  std::iota(idx.begin(), idx.end(), 0);
  return idx;
}

}  // namespace

TEST_CASE("normalize_image maps byte endpoints to -1 and +1") {
  std::vector<std::uint8_t> img = {0, 255, 128};
  Eigen::ArrayXf v = normalize_image(img);
  CHECK(v[0] == -1.0f);
  CHECK(v[1] == 1.0f);
  CHECK(v[2] == doctest::Approx(128.0 / 127.5 - 1.0));  // ~ +0.00392
}

TEST_CASE("train_classifier separates a 2-class color set to >= 99%") {
  Dataset train = synth_dataset(two_class_spec(200), 11);
  FrozenClassifier model = train_classifier(train, small_config(2));

  ClassifyResult out = model.classify(train, all_indices(train));
  long correct = 0;
  for (int i = 0; i < train.count(); ++i) {
    auto row = out.probs.values().segment(static_cast<long>(i) * 2, 2);
    long arg = 0;
    row.maxCoeff(&arg);
    if (static_cast<int>(arg) == train.labels[static_cast<std::size_t>(i)])
      ++correct;
  }
  CHECK(static_cast<double>(correct) / train.count() >= 0.99);
}

TEST_CASE("train_classifier rejects bad inputs") {
  Dataset empty;
  empty.width = 32;
  empty.height = 32;
  CHECK_THROWS_AS(train_classifier(empty, small_config(2)), InputError);

  Dataset train = synth_dataset(two_class_spec(20), 3);
  train.labels[5] = 7;  // >= class_count
  CHECK_THROWS_AS(train_classifier(train, small_config(2)), InputError);
}

TEST_CASE("identical seeds give identical weight bytes") {
  Dataset train = synth_dataset(two_class_spec(60), 4);
  ClassifierConfig cfg = small_config(2);
  cfg.epochs = 3;
  FrozenClassifier a = train_classifier(train, cfg);
  FrozenClassifier b = train_classifier(train, cfg);
  CHECK(a.weight_hash() == b.weight_hash());

  cfg.seed = 6;
  FrozenClassifier c = train_classifier(train, cfg);
  CHECK(a.weight_hash() != c.weight_hash());
}

TEST_CASE("classify: softmax rows, batch independence, purity") {
  Dataset train = synth_dataset(two_class_spec(40), 8);
  ClassifierConfig cfg = small_config(2);
  cfg.epochs = 2;
  FrozenClassifier model = train_classifier(train, cfg);

  std::vector<int> idx = {0, 1, 0};  // duplicated image
  ClassifyResult out = model.classify(train, idx);
  for (int i = 0; i < 3; ++i) {
    float total = out.probs.values().segment(static_cast<long>(i) * 2, 2).sum();
    CHECK(std::abs(total - 1.0f) < 1e-6f);
  }
  // duplicated input duplicates every output row exactly
  for (long j = 0; j < 2; ++j) {
    CHECK(out.logits.values()[0 * 2 + j] == out.logits.values()[2 * 2 + j]);
    CHECK(out.probs.values()[0 * 2 + j] == out.probs.values()[2 * 2 + j]);
  }
  for (long j = 0; j < model.config().feature_dim; ++j)
    CHECK(out.features.values()[j] ==
          out.features.values()[2 * model.config().feature_dim + j]);

  // repeated calls agree bitwise
  ClassifyResult again = model.classify(train, idx);
  CHECK((out.logits.values() == again.logits.values()).all());
  CHECK((out.features.values() == again.features.values()).all());

  // dim mismatch
  Dataset wrong = synth_dataset(two_class_spec(4), 8);
  wrong.width = 16;
  wrong.height = 16;
  wrong.pixels.resize(static_cast<std::size_t>(4) * 3 * 16 * 16);
  CHECK_THROWS_AS(model.classify(wrong, std::vector<int>{0}), InputError);
}

TEST_CASE("classifier checkpoint round-trips through HOODCKPT") {
  Dataset train = synth_dataset(two_class_spec(30), 9);
  ClassifierConfig cfg = small_config(2);
  cfg.epochs = 2;
  FrozenClassifier model = train_classifier(train, cfg);

  fs::path dir = fs::temp_directory_path() / "hood_classifier_test";
  fs::create_directories(dir);
  fs::path path = dir / "clf.ckpt";
  model.save(path);
  FrozenClassifier back = FrozenClassifier::load(path);
  CHECK(back.weight_hash() == model.weight_hash());
  CHECK(back.config().class_count == 2);
  CHECK(back.config().feature_dim == model.config().feature_dim);

  ClassifyResult a = model.classify(train, std::vector<int>{0, 1});
  ClassifyResult b = back.classify(train, std::vector<int>{0, 1});
  CHECK((a.logits.values() == b.logits.values()).all());
}

TEST_CASE("feature bank: definition, stats, round trip") {
  Dataset train = synth_dataset(two_class_spec(50), 10);
  ClassifierConfig cfg = small_config(2);
  cfg.epochs = 2;
  FrozenClassifier model = train_classifier(train, cfg);
  FeatureBank bank = extract_feature_bank(model, train);

  CHECK(bank.rows() == 50);
  CHECK(bank.dim() == cfg.feature_dim);

  // bank row i equals classify(...).features row i exactly
  ClassifyResult out = model.classify(train, all_indices(train));
  for (int i : {0, 7, 23, 49})
    for (long j = 0; j < bank.dim(); ++j)
      CHECK(bank.features()(i, j) ==
            out.features.values()[static_cast<long>(i) * bank.dim() + j]);

  // ground-truth labels are stored, not re-predictions
  for (long i = 0; i < bank.rows(); ++i)
    CHECK(bank.label(i) ==
          static_cast<std::uint32_t>(train.labels[static_cast<std::size_t>(i)]));

  // every stored feature lies within [min, max] per dimension
  for (long i = 0; i < bank.rows(); ++i)
    for (long j = 0; j < bank.dim(); ++j) {
      CHECK(bank.features()(i, j) >= bank.feature_min()[j]);
      CHECK(bank.features()(i, j) <= bank.feature_max()[j]);
    }

  fs::path dir = fs::temp_directory_path() / "hood_classifier_test";
  fs::create_directories(dir);
  fs::path path = dir / "bank.fb";
  bank.save(path);
  FeatureBank back = FeatureBank::load(path);
  CHECK(back.rows() == bank.rows());
  CHECK((back.features().array() == bank.features().array()).all());
  CHECK((back.feature_min().array() == bank.feature_min().array()).all());
  for (long i = 0; i < bank.rows(); ++i) {
    CHECK(back.label(i) == bank.label(i));
    CHECK(back.image_ref(i) == bank.image_ref(i));
  }

  Dataset empty;
  empty.width = 32;
  empty.height = 32;
  CHECK_THROWS_AS(extract_feature_bank(model, empty), InputError);
}

TEST_CASE("freeze contract: weight hash is stable across uses") {
  Dataset train = synth_dataset(two_class_spec(40), 12);
  ClassifierConfig cfg = small_config(2);
  cfg.epochs = 2;
  FrozenClassifier model = train_classifier(train, cfg);
  std::uint64_t before = model.weight_hash();
  (void)model.classify(train, all_indices(train));
  FeatureBank bank = extract_feature_bank(model, train);
  (void)model.classify(train, std::vector<int>{3});
  CHECK(model.weight_hash() == before);
}
