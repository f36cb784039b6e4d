#include "hood/classifier.hpp"

#include <numeric>

#include "hood/binio.hpp"
#include "hood/checkpoint.hpp"
#include "hood/optim.hpp"

namespace hood {

Eigen::ArrayXf normalize_image(std::span<const std::uint8_t> img) {
  Eigen::ArrayXf out(static_cast<long>(img.size()));
  for (std::size_t i = 0; i < img.size(); ++i)
    out[static_cast<long>(i)] = static_cast<float>(img[i]) / 127.5f - 1.0f;
  return out;
}

Tensor normalized_batch(const Dataset& ds, std::span<const int> indices) {
  long per = ds.image_size();
  Eigen::ArrayXf v(static_cast<long>(indices.size()) * per);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    auto img = ds.image(indices[i]);
    for (long j = 0; j < per; ++j)
      v[static_cast<long>(i) * per + j] =
          static_cast<float>(img[static_cast<std::size_t>(j)]) / 127.5f - 1.0f;
  }
  return Tensor::from_array({static_cast<int>(indices.size()), ds.channels,
                             ds.height, ds.width},
                            std::move(v));
}

void ClassifierConfig::validate() const {
  if (class_count < 2) throw ConfigError("classifier: class count must be >= 2");
  if (feature_dim < 1) throw ConfigError("classifier: feature dim must be >= 1");
  if (width < 1 || height < 1 || channels != 3)
    throw ConfigError("classifier: expected 3-channel images with positive dims");
  if (blocks.empty()) throw ConfigError("classifier: needs at least one conv block");
  if (epochs < 1 || batch_size < 1 || lr <= 0.0f)
    throw ConfigError("classifier: invalid training hyperparameters");
  int h = height, w = width;
  for (const auto& b : blocks) {
    if (b.out_channels < 1 || b.kernel < 1 || b.stride < 1)
      throw ConfigError("classifier: invalid conv block spec");
    int pad = b.kernel / 2;
    h = (h + 2 * pad - b.kernel) / b.stride + 1;
    w = (w + 2 * pad - b.kernel) / b.stride + 1;
    if (h < 1 || w < 1)
      throw ConfigError("classifier: conv stack collapses below 1x1");
  }
}

long ClassifierConfig::flat_dim() const {
  int h = height, w = width, c = channels;
  for (const auto& b : blocks) {
    int pad = b.kernel / 2;
    h = (h + 2 * pad - b.kernel) / b.stride + 1;
    w = (w + 2 * pad - b.kernel) / b.stride + 1;
    c = b.out_channels;
  }
  return static_cast<long>(c) * h * w;
}

// Weight layout: per block {kernel OIHW, channel bias}, then fc1 {w, b}
// projecting the flattened conv stack to feature_dim, then fc2 {w, b} to the
// class logits. z is the post-relu fc1 activation (what feeds fc2).
namespace {

struct ForwardOut {
  Tensor logits;
  Tensor features;
};

ForwardOut run_forward(const ClassifierConfig& cfg,
                       const std::vector<Tensor>& weights, const Tensor& batch) {
  if (batch.rank() != 4 || batch.dim(1) != cfg.channels ||
      batch.dim(2) != cfg.height || batch.dim(3) != cfg.width)
    throw InputError("classifier: batch " + shape_str(batch.shape()) +
                     " does not match configured input " +
                     std::to_string(cfg.channels) + "x" +
                     std::to_string(cfg.height) + "x" + std::to_string(cfg.width));
  std::size_t wi = 0;
  Tensor x = batch;
  for (const auto& b : cfg.blocks) {
    const Tensor& k = weights[wi++];
    const Tensor& bias = weights[wi++];
    x = relu(channel_bias(conv2d(x, k, b.stride, b.kernel / 2), bias));
  }
  x = reshape(x, {batch.dim(0), static_cast<int>(cfg.flat_dim())});
  Tensor z = relu(dense(x, weights[wi], weights[wi + 1]));
  Tensor logits = dense(z, weights[wi + 2], weights[wi + 3]);
  return {logits, z};
}

std::vector<Tensor> init_weights(const ClassifierConfig& cfg, Rng& rng,
                                 bool as_params) {
  auto glorot = [&](Shape shape, long fan_in, long fan_out) {
    float limit = std::sqrt(6.0f / static_cast<float>(fan_in + fan_out));
    Eigen::ArrayXf v(shape_numel(shape));
    for (long i = 0; i < v.size(); ++i) v[i] = rng.uniform(-limit, limit);
    return as_params ? Tensor::param(std::move(shape), std::move(v))
                     : Tensor::from_array(std::move(shape), std::move(v));
  };
  auto zeros = [&](Shape shape) {
    return as_params
               ? Tensor::param(shape, Eigen::ArrayXf::Zero(shape_numel(shape)))
               : Tensor::zeros(shape);
  };

  std::vector<Tensor> w;
  int in_ch = cfg.channels;
  for (const auto& b : cfg.blocks) {
    long fan_in = static_cast<long>(in_ch) * b.kernel * b.kernel;
    long fan_out = static_cast<long>(b.out_channels) * b.kernel * b.kernel;
    w.push_back(glorot({b.out_channels, in_ch, b.kernel, b.kernel}, fan_in, fan_out));
    w.push_back(zeros({b.out_channels}));
    in_ch = b.out_channels;
  }
  long flat = cfg.flat_dim();
  w.push_back(glorot({static_cast<int>(flat), cfg.feature_dim}, flat, cfg.feature_dim));
  w.push_back(zeros({cfg.feature_dim}));
  w.push_back(glorot({cfg.feature_dim, cfg.class_count}, cfg.feature_dim, cfg.class_count));
  w.push_back(zeros({cfg.class_count}));
  return w;
}

}  // namespace

FrozenClassifier train_classifier(const Dataset& train,
                                  const ClassifierConfig& cfg,
                                  const EpochCallback& on_epoch) {
  cfg.validate();
  if (train.count() == 0) throw InputError("train_classifier: empty dataset");
  if (!train.has_labels())
    throw InputError("train_classifier: dataset has no labels");
  for (int i = 0; i < train.count(); ++i)
    if (train.labels[static_cast<std::size_t>(i)] < 0 ||
        train.labels[static_cast<std::size_t>(i)] >= cfg.class_count)
      throw InputError("train_classifier: label " +
                       std::to_string(train.labels[static_cast<std::size_t>(i)]) +
                       " at record " + std::to_string(i) + " outside [0, " +
                       std::to_string(cfg.class_count) + ")");
  if (train.width != cfg.width || train.height != cfg.height ||
      train.channels != cfg.channels)
    throw InputError("train_classifier: dataset geometry does not match config");

  Rng rng(Rng::derive(cfg.seed, "classifier.init"));
  std::vector<Tensor> params = init_weights(cfg, rng, true);
  AdamConfig adam_cfg;
  adam_cfg.lr = cfg.lr;
  adam_cfg.beta1 = 0.9f;
  adam_cfg.beta2 = 0.999f;
  AdamState opt(params, adam_cfg);

  Rng shuffle_rng(Rng::derive(cfg.seed, "classifier.batches"));
  std::vector<int> order(static_cast<std::size_t>(train.count()));
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    double loss_sum = 0.0;
    long correct = 0;
    for (int start = 0; start < train.count(); start += cfg.batch_size) {
      int n = std::min(cfg.batch_size, train.count() - start);
      std::span<const int> idx(order.data() + start, static_cast<std::size_t>(n));
      std::vector<int> labels(static_cast<std::size_t>(n));
      for (int i = 0; i < n; ++i)
        labels[static_cast<std::size_t>(i)] =
            train.labels[static_cast<std::size_t>(idx[static_cast<std::size_t>(i)])];

      Tape::active().reset();
      Tensor batch = normalized_batch(train, idx);
      ForwardOut out = run_forward(cfg, params, batch);
      Tensor loss = cross_entropy(out.logits, labels);
      backward(loss);
      opt.step();
      opt.zero_grad();

      loss_sum += static_cast<double>(loss.scalar()) * n;
      for (int i = 0; i < n; ++i) {
        auto row = out.logits.values().segment(
            static_cast<long>(i) * cfg.class_count, cfg.class_count);
        long arg = 0;
        row.maxCoeff(&arg);
        if (static_cast<int>(arg) == labels[static_cast<std::size_t>(i)]) ++correct;
      }
    }
    Tape::active().reset();
    if (on_epoch)
      on_epoch({epoch + 1, loss_sum / train.count(),
                static_cast<double>(correct) / train.count()});
  }

  std::vector<Tensor> frozen;
  frozen.reserve(params.size());
  for (const Tensor& p : params) frozen.push_back(p.detached());
  return FrozenClassifier(cfg, std::move(frozen));
}

ClassifyResult FrozenClassifier::classify(const Tensor& batch) const {
  NoGradScope ng;
  ForwardOut out = run_forward(cfg_, weights_, batch);
  return {out.logits, softmax_lastdim(out.logits), out.features};
}

ClassifyResult FrozenClassifier::classify(const Dataset& ds,
                                          std::span<const int> indices) const {
  return classify(normalized_batch(ds, indices));
}

std::uint64_t FrozenClassifier::weight_hash() const {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (const Tensor& w : weights_)
    h = fnv1a64(w.values().data(),
                static_cast<std::size_t>(w.numel()) * sizeof(float), h);
  return h;
}

// Checkpoint layout: "classifier.meta" carries the architecture numbers so a
// checkpoint reconstructs without the original config file.
void FrozenClassifier::save(const std::filesystem::path& path) const {
  std::vector<CheckpointEntry> entries;
  std::vector<float> meta = {
      static_cast<float>(cfg_.width),      static_cast<float>(cfg_.height),
      static_cast<float>(cfg_.channels),   static_cast<float>(cfg_.class_count),
      static_cast<float>(cfg_.feature_dim), static_cast<float>(cfg_.blocks.size())};
  for (const auto& b : cfg_.blocks) {
    meta.push_back(static_cast<float>(b.out_channels));
    meta.push_back(static_cast<float>(b.kernel));
    meta.push_back(static_cast<float>(b.stride));
  }
  Eigen::ArrayXf meta_arr(static_cast<long>(meta.size()));
  for (std::size_t i = 0; i < meta.size(); ++i) meta_arr[static_cast<long>(i)] = meta[i];
  entries.push_back({"classifier.meta", {static_cast<int>(meta.size())}, meta_arr});

  std::size_t wi = 0;
  for (std::size_t b = 0; b < cfg_.blocks.size(); ++b) {
    std::string prefix = "classifier.block" + std::to_string(b);
    entries.push_back({prefix + ".k", weights_[wi].shape(), weights_[wi].values()});
    ++wi;
    entries.push_back({prefix + ".b", weights_[wi].shape(), weights_[wi].values()});
    ++wi;
  }
  const char* tail[] = {"classifier.fc1.w", "classifier.fc1.b",
                        "classifier.fc2.w", "classifier.fc2.b"};
  for (const char* name : tail) {
    entries.push_back({name, weights_[wi].shape(), weights_[wi].values()});
    ++wi;
  }
  save_checkpoint(path, entries);
}

FrozenClassifier FrozenClassifier::load(const std::filesystem::path& path) {
  auto entries = load_checkpoint(path);
  if (entries.empty() || entries[0].name != "classifier.meta")
    throw FormatError(path.string() +
                      ": not a classifier checkpoint (missing classifier.meta)");
  const auto& meta = entries[0].values;
  if (meta.size() < 6)
    throw FormatError(path.string() + ": classifier.meta too short");
  ClassifierConfig cfg;
  cfg.width = static_cast<int>(meta[0]);
  cfg.height = static_cast<int>(meta[1]);
  cfg.channels = static_cast<int>(meta[2]);
  cfg.class_count = static_cast<int>(meta[3]);
  cfg.feature_dim = static_cast<int>(meta[4]);
  int nblocks = static_cast<int>(meta[5]);
  if (meta.size() != 6 + 3 * static_cast<long>(nblocks))
    throw FormatError(path.string() + ": classifier.meta length mismatch");
  cfg.blocks.clear();
  for (int b = 0; b < nblocks; ++b)
    cfg.blocks.push_back({static_cast<int>(meta[6 + 3 * b]),
                          static_cast<int>(meta[7 + 3 * b]),
                          static_cast<int>(meta[8 + 3 * b])});
  cfg.validate();

  std::size_t expected = 1 + 2 * cfg.blocks.size() + 4;
  if (entries.size() != expected)
    throw FormatError(path.string() + ": expected " + std::to_string(expected) +
                      " checkpoint entries, got " + std::to_string(entries.size()));
  std::vector<Tensor> weights;
  for (std::size_t i = 1; i < entries.size(); ++i)
    weights.push_back(
        Tensor::from_array(entries[i].shape, std::move(entries[i].values)));
  return FrozenClassifier(std::move(cfg), std::move(weights));
}

// ---------------------------------------------------------------------------
// FeatureBank
// ---------------------------------------------------------------------------

static const char kBankMagic[9] = "HOODFB01";

FeatureBank::FeatureBank(RowMatrixXf features, std::vector<std::uint32_t> labels,
                         std::vector<std::uint32_t> image_refs, int class_count)
    : features_(std::move(features)),
      labels_(std::move(labels)),
      image_refs_(std::move(image_refs)),
      class_count_(class_count) {
  if (features_.rows() == 0) throw InputError("feature bank: no rows");
  if (static_cast<long>(labels_.size()) != features_.rows() ||
      static_cast<long>(image_refs_.size()) != features_.rows())
    throw InputError("feature bank: row/label/image_ref counts differ");
  for (auto l : labels_)
    if (static_cast<int>(l) >= class_count_)
      throw InputError("feature bank: label " + std::to_string(l) +
                       " outside [0, " + std::to_string(class_count_) + ")");
  min_ = features_.colwise().minCoeff();
  max_ = features_.colwise().maxCoeff();
  index_classes();
}

void FeatureBank::index_classes() {
  by_class_.assign(static_cast<std::size_t>(class_count_), {});
  for (long i = 0; i < features_.rows(); ++i)
    by_class_[labels_[static_cast<std::size_t>(i)]].push_back(i);
}

const std::vector<long>& FeatureBank::rows_of_class(int c) const {
  if (c < 0 || c >= class_count_)
    throw LookupError("feature bank: class " + std::to_string(c) +
                      " outside [0, " + std::to_string(class_count_) + ")");
  return by_class_[static_cast<std::size_t>(c)];
}

void FeatureBank::save(const std::filesystem::path& path) const {
  BinWriter w(path);
  w.magic(kBankMagic);
  w.u32(static_cast<std::uint32_t>(features_.rows()));
  w.u32(static_cast<std::uint32_t>(features_.cols()));
  w.u32(static_cast<std::uint32_t>(class_count_));
  for (long i = 0; i < features_.rows(); ++i) {
    w.u32(labels_[static_cast<std::size_t>(i)]);
    w.u32(image_refs_[static_cast<std::size_t>(i)]);
    w.f32_array(features_.row(i).data(), static_cast<std::size_t>(features_.cols()));
  }
  w.f32_array(min_.data(), static_cast<std::size_t>(min_.size()));
  w.f32_array(max_.data(), static_cast<std::size_t>(max_.size()));
  w.close();
}

FeatureBank FeatureBank::load(const std::filesystem::path& path) {
  BinReader r(path);
  r.expect_magic(kBankMagic);
  std::uint32_t n = r.u32();
  std::uint32_t d = r.u32();
  std::uint32_t c = r.u32();
  if (n == 0) throw FormatError(path.string() + ": empty bank", 8);
  RowMatrixXf features(n, d);
  std::vector<std::uint32_t> labels(n), refs(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    labels[i] = r.u32();
    refs[i] = r.u32();
    r.f32_array(features.row(static_cast<long>(i)).data(), d);
  }
  Eigen::VectorXf mn(d), mx(d);
  r.f32_array(mn.data(), d);
  r.f32_array(mx.data(), d);
  r.expect_eof();
  FeatureBank bank(std::move(features), std::move(labels), std::move(refs),
                   static_cast<int>(c));
  // stored stats take precedence (they are part of the format)
  bank.min_ = std::move(mn);
  bank.max_ = std::move(mx);
  return bank;
}

FeatureBank extract_feature_bank(const FrozenClassifier& model,
                                 const Dataset& d_in) {
  if (d_in.count() == 0) throw InputError("extract_feature_bank: empty dataset");
  if (!d_in.has_labels())
    throw InputError("extract_feature_bank: dataset has no labels");
  const int batch = 256;
  int d = model.config().feature_dim;
  RowMatrixXf features(d_in.count(), d);
  std::vector<std::uint32_t> labels(static_cast<std::size_t>(d_in.count()));
  std::vector<std::uint32_t> refs(static_cast<std::size_t>(d_in.count()));
  for (int start = 0; start < d_in.count(); start += batch) {
    int n = std::min(batch, d_in.count() - start);
    std::vector<int> idx(static_cast<std::size_t>(n));
    std::iota(idx.begin(), idx.end(), start);
    ClassifyResult out = model.classify(d_in, idx);
    for (int i = 0; i < n; ++i) {
      features.row(start + i) =
          Eigen::Map<const Eigen::RowVectorXf>(
              out.features.values().data() + static_cast<long>(i) * d, d);
      labels[static_cast<std::size_t>(start + i)] =
          static_cast<std::uint32_t>(d_in.labels[static_cast<std::size_t>(start + i)]);
      refs[static_cast<std::size_t>(start + i)] =
          static_cast<std::uint32_t>(start + i);
    }
  }
  return FeatureBank(std::move(features), std::move(labels), std::move(refs),
                     model.config().class_count);
}

}  // namespace hood
