#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "hood/config.hpp"

using namespace hood;
namespace fs = std::filesystem;

TEST_CASE("key=value parsing: comments, whitespace, line numbers") {
  KeyValueConfig kv = KeyValueConfig::from_string(
      "# experiment\n"
      "seed = 42\n"
      "\n"
      "decoder.alpha = 5.5   # inline comment\n"
      "data.in_train.family=stripes\n");
  CHECK(kv.get_u64("seed", 0) == 42);
  CHECK(kv.get_double("decoder.alpha", 0) == doctest::Approx(5.5));
  CHECK(kv.get_string("data.in_train.family", "") == "stripes");
  CHECK(kv.get_int("missing", 7) == 7);

  try {
    KeyValueConfig::from_string("a = 1\nbogus line\n");
    FAIL("expected parse error");
  } catch (const ConfigParseError& e) {
    CHECK(e.line == 2);
  }
  try {
    KeyValueConfig::from_string("a = 1\na = 2\n");
    FAIL("expected duplicate-key error");
  } catch (const ConfigParseError& e) {
    CHECK(e.line == 2);
  }
}

TEST_CASE("overrides replace file values") {
  KeyValueConfig kv = KeyValueConfig::from_string("decoder.epochs = 150\n");
  kv.apply_override("decoder.epochs=3");
  kv.apply_override("decoder.alpha = 2.5");
  CHECK(kv.get_int("decoder.epochs", 0) == 3);
  CHECK(kv.get_double("decoder.alpha", 0) == doctest::Approx(2.5));
  CHECK_THROWS_AS(kv.apply_override("no-equals-sign"), ConfigError);
}

TEST_CASE("experiment defaults match the training recipe") {
  ExperimentConfig cfg = ExperimentConfig::from(KeyValueConfig{});
  CHECK(cfg.decoder.alpha == 5.0f);
  CHECK(cfg.decoder.epochs == 150);
  CHECK(cfg.decoder.lr == doctest::Approx(0.0002));
  CHECK(cfg.decoder.beta1 == 0.5f);
  CHECK(cfg.decoder.beta2 == 0.999f);
  CHECK(cfg.decoder.batch_size == 200);
  CHECK(cfg.decoder.ood_ratio == doctest::Approx(0.2));
  CHECK(cfg.decoder.ood_per_batch() == 33);  // 200 at ratio 1/5
  CHECK(cfg.target_scale == 0.5f);
  CHECK(cfg.in_train.count == 2000);
  CHECK(cfg.out_train.count == 400);
  CHECK(cfg.ablation_sizes == std::vector<int>{50, 100, 500, 1000, 2000});
}

TEST_CASE("unknown keys and invalid values are rejected") {
  KeyValueConfig kv;
  kv.set("decoder.alhpa", "5");  // typo
  CHECK_THROWS_WITH_AS(ExperimentConfig::from(kv),
                       doctest::Contains("decoder.alhpa"), ConfigError);

  KeyValueConfig bad;
  bad.set("decoder.epochs", "many");
  CHECK_THROWS_AS(ExperimentConfig::from(bad), ConfigError);

  KeyValueConfig neg;
  neg.set("decoder.alpha", "-1");
  CHECK_THROWS_AS(ExperimentConfig::from(neg), ConfigError);

  KeyValueConfig ratio;
  ratio.set("decoder.ood_ratio", "1.5");
  CHECK_THROWS_AS(ExperimentConfig::from(ratio), ConfigError);

  // families must be pairwise distinct across roles
  KeyValueConfig fam;
  fam.set("data.out_test.family", "stripes");
  CHECK_THROWS_AS(ExperimentConfig::from(fam), ConfigError);

  // decoder output must match the configured image size
  KeyValueConfig sz;
  sz.set("data.image_size", "16");
  CHECK_THROWS_AS(ExperimentConfig::from(sz), ConfigError);

  // files mode requires existing paths
  KeyValueConfig files;
  files.set("data.source", "files");
  files.set("data.in_train.path", "/nonexistent/in.hood");
  files.set("data.in_test.path", "/nonexistent/t.hood");
  files.set("data.out_train.path", "/nonexistent/o.hood");
  files.set("data.out_test.path", "/nonexistent/ot.hood");
  CHECK_THROWS_AS(ExperimentConfig::from(files), ConfigError);
}

TEST_CASE("seed derivation gives distinct per-stage streams") {
  ExperimentConfig cfg = ExperimentConfig::from(KeyValueConfig{});
  CHECK(cfg.classifier.seed != cfg.decoder.seed);
  CHECK(cfg.split_seed(Split::in_train) != cfg.split_seed(Split::in_test));
  CHECK(cfg.split_seed(Split::out_train) != cfg.split_seed(Split::out_test));

  KeyValueConfig kv;
  kv.set("seed", "2");
  ExperimentConfig other = ExperimentConfig::from(kv);
  CHECK(other.classifier.seed != cfg.classifier.seed);
}

TEST_CASE("synthetic splits are deterministic with prefix stability") {
  ExperimentConfig cfg = ExperimentConfig::from(KeyValueConfig{});
  Dataset a = cfg.make_dataset(Split::out_train, 50);
  Dataset b = cfg.make_dataset(Split::out_train, 50);
  CHECK(a.pixels == b.pixels);

  // a longer draw from the same stream starts with the same records
  Dataset longer = cfg.make_dataset(Split::out_train, 80);
  CHECK(std::equal(a.pixels.begin(), a.pixels.end(), longer.pixels.begin()));

  Dataset in_train = cfg.make_dataset(Split::in_train, 30);
  CHECK(in_train.has_labels());
  Dataset ood = cfg.make_dataset(Split::out_train, 30);
  CHECK(!ood.has_labels());
}

TEST_CASE("snapshot round-trips through the parser") {
  KeyValueConfig kv;
  kv.set("seed", "9");
  kv.set("decoder.alpha", "3.5");
  kv.set("data.in_train.count", "64");
  ExperimentConfig cfg = ExperimentConfig::from(kv);
  auto snap = cfg.snapshot();
  CHECK(snap.at("seed") == "9");
  CHECK(snap.at("decoder.alpha") == "3.5");
  CHECK(snap.at("data.in_train.count") == "64");

  KeyValueConfig again;
  for (const auto& [k, v] : snap) again.set(k, v);
  ExperimentConfig back = ExperimentConfig::from(again);
  CHECK(back.seed == cfg.seed);
  CHECK(back.decoder.alpha == cfg.decoder.alpha);
  CHECK(back.snapshot() == snap);
}
