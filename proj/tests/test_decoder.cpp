#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>

#include "hood/decoder.hpp"
#include "hood/optim.hpp"
#include "support/oracles.hpp"

using namespace hood;
namespace fs = std::filesystem;

namespace {

// Tiny end-to-end fixture shared by the training-contract tests.
struct Fixture {
  Dataset d_in, d_out;
  FrozenClassifier model;
  FeatureBank bank;
  TargetSet targets;

  static Fixture make(std::uint64_t seed) {
    SynthSpec in_spec;
    in_spec.class_count = 2;
    in_spec.count = 40;
    in_spec.family = TextureFamily::patch;
    Dataset d_in = synth_dataset(in_spec, seed);
    SynthSpec out_spec = in_spec;
    out_spec.count = 12;
    out_spec.family = TextureFamily::stripes;
    out_spec.labeled = false;
    Dataset d_out = synth_dataset(out_spec, seed + 1);

    ClassifierConfig cfg;
    cfg.class_count = 2;
    cfg.epochs = 3;
    cfg.batch_size = 20;
    cfg.seed = seed;
    FrozenClassifier model = train_classifier(d_in, cfg);
    FeatureBank bank = extract_feature_bank(model, d_in);
    TargetSet targets = build_target_sets(model, bank, d_in, d_out);
    return {std::move(d_in), std::move(d_out), std::move(model),
            std::move(bank), std::move(targets)};
  }
};

DecoderConfig small_decoder_config() {
  DecoderConfig cfg;
  cfg.epochs = 4;
  cfg.batch_size = 12;
  cfg.ood_ratio = 0.2f;  // 2 OOD + 10 in per batch
  cfg.block_channels = {16, 8, 4};
  cfg.lr = 1e-3f;  // the tiny fixture needs a faster schedule than the default
  cfg.seed = 3;
  return cfg;
}

}  // namespace

TEST_CASE("assemble_input: endpoints, one-hot, formula") {
  Eigen::VectorXf mn(3), mx(3);
  mn << 0, -1, 2;
  mx << 1, 1, 2;  // last dim degenerate

  Eigen::VectorXf at_min = assemble_input(mn, 0, mn, mx, 3);
  REQUIRE(at_min.size() == 6);
  for (long i = 0; i < 3; ++i) CHECK(at_min[i] == 0.0f);
  CHECK(at_min[3] == 1.0f);
  CHECK(at_min[4] == 0.0f);

  Eigen::VectorXf at_max = assemble_input(mx, 0, mn, mx, 3);
  CHECK(at_max[0] == 1.0f);
  CHECK(at_max[1] == 1.0f);
  CHECK(at_max[2] == 0.0f);  // degenerate dim maps to 0
  CHECK(at_max[3] == 1.0f);

  Rng rng(17);
  for (int trial = 0; trial < 20; ++trial) {
    Eigen::VectorXf z(3);
    for (long i = 0; i < 3; ++i) z[i] = rng.uniform(-2.0f, 3.0f);
    Eigen::VectorXf got = assemble_input(z, 1, mn, mx, 3);
    for (long i = 0; i < 3; ++i) {
      float range = mx[i] - mn[i];
      float expect =
          range > 0 ? std::min(1.0f, std::max(0.0f, (z[i] - mn[i]) / range)) : 0.0f;
      CHECK(got[i] == doctest::Approx(expect).epsilon(1e-6));
      CHECK(got[i] >= 0.0f);
      CHECK(got[i] <= 1.0f);
    }
    CHECK(got[4] == 1.0f);
  }

  Eigen::VectorXf wrong(2);
  wrong.setZero();
  CHECK_THROWS_AS(assemble_input(wrong, 0, mn, mx, 3), InputError);
  CHECK_THROWS_AS(assemble_input(mn, 5, mn, mx, 3), InputError);
}

TEST_CASE("decoder_loss: hand values") {
  // single element, no in-distribution term: 3.5 * 0.25 = 0.875
  Tensor pred = Tensor::zeros({1, 3, 1, 1});
  Tensor target = Tensor::full({1, 3, 1, 1}, 0.0f);
  target.mutable_values()[0] = 0.5f;
  {
    Tensor p1 = Tensor::zeros({1});
    Tensor t1 = Tensor::full({1}, 0.5f);
    Tensor loss = decoder_loss(Tensor(), p1, t1, 5.0f);
    CHECK(loss.scalar() == 0.875f);
  }

  // zero targets collapse the weight to 1: loss equals plain MSE of both terms
  Rng rng(23);
  Tensor pred_out = oracle::random_tensor({2, 3, 2, 2}, rng);
  Tensor zeros_t = Tensor::zeros({2, 3, 2, 2});
  Tensor pred_in = oracle::random_tensor({3, 3, 2, 2}, rng);
  Tensor loss = decoder_loss(pred_in, pred_out, zeros_t, 7.0f);
  double mse_out = pred_out.values().cast<double>().square().mean();
  double mse_in = pred_in.values().cast<double>().square().mean();
  CHECK(loss.scalar() == doctest::Approx(mse_out + mse_in).epsilon(1e-6));

  // perfect fit
  Tensor t = oracle::random_tensor({2, 3, 2, 2}, rng);
  Tensor perfect = decoder_loss(Tensor::zeros({1, 3, 2, 2}), t.detached(), t, 5.0f);
  CHECK(perfect.scalar() == 0.0f);

  Tensor wrong = Tensor::zeros({1, 3, 2, 3});
  CHECK_THROWS_AS(decoder_loss(pred_in, pred_out, wrong, 5.0f), InputError);
  CHECK_THROWS_AS(decoder_loss(Tensor(), Tensor(), Tensor(), 5.0f), InputError);
}

TEST_CASE("decoder_loss is strictly increasing in alpha") {
  Rng rng(29);
  for (int trial = 0; trial < 10; ++trial) {
    Tensor pred = oracle::random_tensor({1, 3, 4, 4}, rng);
    Tensor target = oracle::random_tensor({1, 3, 4, 4}, rng, -0.9f, 0.9f);
    float prev = -1.0f;
    for (float alpha : {0.0f, 1.0f, 5.0f, 20.0f}) {
      float v = decoder_loss(Tensor(), pred, target, alpha).scalar();
      CHECK(v > prev);
      prev = v;
    }
  }
}

TEST_CASE("decoder_loss gradient passes finite differences on a tiny decoder") {
  // D = 4 features + 2 classes, 2x2 heatmaps, single transposed-conv block.
  Rng rng(37);
  Tape::active().reset();
  Tensor proj_w = oracle::random_tensor({6, 8}, rng, -0.4f, 0.4f, true);
  Tensor proj_b = oracle::random_tensor({8}, rng, -0.1f, 0.1f, true);
  Tensor kernel = oracle::random_tensor({2, 3, 2, 2}, rng, -0.4f, 0.4f, true);

  Tensor in_x = oracle::random_tensor({2, 6}, rng, 0.0f, 1.0f);
  Tensor out_x = oracle::random_tensor({1, 6}, rng, 0.0f, 1.0f);
  Tensor target = oracle::random_tensor({1, 3, 2, 2}, rng, -0.8f, 0.8f);

  auto forward = [&](const Tensor& x) {
    Tensor h = relu(dense(x, proj_w, proj_b));
    h = reshape(h, {x.dim(0), 2, 2, 2});
    return hood::tanh(conv_transpose2d(h, kernel, 2, 1));
  };
  auto loss_value = [&] {
    NoGradScope ng;
    Tensor l = decoder_loss(forward(in_x), forward(out_x), target, 5.0f);
    return static_cast<double>(l.scalar());
  };

  backward(decoder_loss(forward(in_x), forward(out_x), target, 5.0f));
  for (Tensor* p : {&proj_w, &proj_b, &kernel}) {
    auto fd = oracle::finite_difference(*p, loss_value);
    REQUIRE(p->has_grad());
    for (long i = 0; i < p->numel(); ++i)
      CHECK(oracle::rel_err(p->grad()[i], fd[static_cast<std::size_t>(i)]) < 1e-3);
  }
  Tape::active().reset();
}

TEST_CASE("decoder forward: shape, open range, purity") {
  Fixture fx = Fixture::make(71);
  DecoderConfig cfg = small_decoder_config();
  cfg.epochs = 2;
  DecoderModel decoder =
      train_decoder(fx.targets, fx.d_in, fx.d_out, fx.model, fx.bank, cfg);

  CHECK(decoder.output_width() == 32);
  CHECK(decoder.input_dim() == fx.bank.dim() + 2);

  Rng rng(73);
  Eigen::VectorXf input(decoder.input_dim());
  for (long i = 0; i < input.size(); ++i) input[i] = rng.uniform(0.0f, 1.0f);
  Heatmap h = decoder.predict_one(input);
  CHECK(h.width == 32);
  CHECK(h.height == 32);
  CHECK(h.values.size() == 3 * 32 * 32);
  for (long i = 0; i < h.values.size(); ++i) {
    CHECK(h.values[i] > -1.0f);
    CHECK(h.values[i] < 1.0f);
  }
  Heatmap again = decoder.predict_one(input);
  CHECK((h.values == again.values).all());

  Eigen::VectorXf wrong(decoder.input_dim() + 1);
  wrong.setZero();
  CHECK_THROWS_AS(decoder.predict_one(wrong), InputError);
}

TEST_CASE("train_decoder: freeze contract, determinism, loss decrease") {
  Fixture fx = Fixture::make(81);
  DecoderConfig cfg = small_decoder_config();
  cfg.epochs = 30;

  std::uint64_t hash_before = fx.model.weight_hash();
  DecoderModel::TrainStats stats;
  DecoderModel a =
      train_decoder(fx.targets, fx.d_in, fx.d_out, fx.model, fx.bank, cfg, &stats);
  CHECK(fx.model.weight_hash() == hash_before);
  CHECK(stats.final_epoch_loss < stats.first_epoch_loss);

  DecoderModel b =
      train_decoder(fx.targets, fx.d_in, fx.d_out, fx.model, fx.bank, cfg);
  CHECK(a.weight_hash() == b.weight_hash());

  cfg.seed = 99;
  DecoderModel c =
      train_decoder(fx.targets, fx.d_in, fx.d_out, fx.model, fx.bank, cfg);
  CHECK(a.weight_hash() != c.weight_hash());

  TargetSet no_out = fx.targets;
  no_out.out_targets.clear();
  CHECK_THROWS_AS(
      train_decoder(no_out, fx.d_in, fx.d_out, fx.model, fx.bank, cfg),
      InputError);
}

TEST_CASE("no gradient reaches classifier weights during decoder training") {
  Fixture fx = Fixture::make(91);
  DecoderConfig cfg = small_decoder_config();
  cfg.epochs = 1;

  // run one training pass, then check the tape left no trace on a fresh
  // classifier forward: its outputs carry no grad and never require it
  DecoderModel decoder =
      train_decoder(fx.targets, fx.d_in, fx.d_out, fx.model, fx.bank, cfg);
  ClassifyResult out = fx.model.classify(fx.d_in, std::vector<int>{0, 1});
  CHECK(!out.logits.requires_grad());
  CHECK(!out.logits.has_grad());
  CHECK(!out.features.has_grad());
}

TEST_CASE("decoder checkpoint round-trips") {
  Fixture fx = Fixture::make(95);
  DecoderConfig cfg = small_decoder_config();
  cfg.epochs = 1;
  DecoderModel decoder =
      train_decoder(fx.targets, fx.d_in, fx.d_out, fx.model, fx.bank, cfg);

  fs::path dir = fs::temp_directory_path() / "hood_decoder_test";
  fs::create_directories(dir);
  fs::path path = dir / "dec.ckpt";
  decoder.save(path);
  DecoderModel back = DecoderModel::load(path);
  CHECK(back.weight_hash() == decoder.weight_hash());
  CHECK(back.input_dim() == decoder.input_dim());

  Eigen::VectorXf input = Eigen::VectorXf::Constant(decoder.input_dim(), 0.3f);
  CHECK((back.predict_one(input).values == decoder.predict_one(input).values).all());

  // a classifier checkpoint is not a decoder checkpoint
  fs::path clf = dir / "clf.ckpt";
  fx.model.save(clf);
  CHECK_THROWS_AS(DecoderModel::load(clf), FormatError);
}
