#include "hood/decoder.hpp"

#include <numeric>

#include "hood/checkpoint.hpp"
#include "hood/optim.hpp"

namespace hood {

void DecoderConfig::validate() const {
  if (alpha < 0.0f) throw ConfigError("decoder: alpha must be >= 0");
  if (ood_ratio <= 0.0f || ood_ratio > 1.0f)
    throw ConfigError("decoder: ood_ratio must lie in (0, 1]");
  if (epochs < 1 || batch_size < 2 || lr <= 0.0f)
    throw ConfigError("decoder: invalid training hyperparameters");
  if (proj_channels < 1 || proj_size < 1 || block_channels.empty())
    throw ConfigError("decoder: invalid layer spec");
  if (final_kernel < 1 || final_kernel % 2 == 0)
    throw ConfigError("decoder: final kernel must be odd");
  if (ood_per_batch() < 1 || ood_per_batch() >= batch_size)
    throw ConfigError("decoder: batch of " + std::to_string(batch_size) +
                      " at ratio " + std::to_string(ood_ratio) +
                      " leaves no room for both sample kinds");
}

int DecoderConfig::output_size() const {
  int s = proj_size;
  for (std::size_t i = 0; i < block_channels.size(); ++i) s *= 2;
  return s;
}

int DecoderConfig::ood_per_batch() const {
  return static_cast<int>(
      std::lround(static_cast<double>(batch_size) * ood_ratio / (1.0 + ood_ratio)));
}

Eigen::VectorXf assemble_input(const Eigen::VectorXf& z, int predicted_class,
                               const Eigen::VectorXf& feature_min,
                               const Eigen::VectorXf& feature_max,
                               int class_count) {
  if (feature_min.size() != z.size() || feature_max.size() != z.size())
    throw InputError("assemble_input: stats dim " +
                     std::to_string(feature_min.size()) +
                     " does not match feature dim " + std::to_string(z.size()));
  if (predicted_class < 0 || predicted_class >= class_count)
    throw InputError("assemble_input: class " + std::to_string(predicted_class) +
                     " outside [0, " + std::to_string(class_count) + ")");
  Eigen::VectorXf out(z.size() + class_count);
  for (long i = 0; i < z.size(); ++i) {
    float range = feature_max[i] - feature_min[i];
    float v = range > 0.0f ? (z[i] - feature_min[i]) / range : 0.0f;
    out[i] = std::min(1.0f, std::max(0.0f, v));
  }
  out.segment(z.size(), class_count).setZero();
  out[z.size() + predicted_class] = 1.0f;
  return out;
}

Tensor decoder_loss(const Tensor& pred_in, const Tensor& pred_out,
                    const Tensor& targets_out, float alpha) {
  if (alpha < 0.0f) throw ConfigError("decoder_loss: alpha must be >= 0");
  Tensor out_term, in_term;
  if (pred_out.defined() && pred_out.numel() > 0) {
    if (!targets_out.defined() || targets_out.shape() != pred_out.shape())
      throw InputError("decoder_loss: OOD prediction/target shapes differ");
    Tensor weight = Tensor::from_array(
        targets_out.shape(), 1.0f + alpha * targets_out.values().abs());
    out_term = weighted_mse(pred_out, targets_out.detached(), weight);
  }
  if (pred_in.defined() && pred_in.numel() > 0) {
    in_term = weighted_mse(pred_in, Tensor::zeros(pred_in.shape()),
                           Tensor::full(pred_in.shape(), 1.0f));
  }
  if (out_term.defined() && in_term.defined()) return add(out_term, in_term);
  if (out_term.defined()) return out_term;
  if (in_term.defined()) return in_term;
  throw InputError("decoder_loss: both prediction batches are empty");
}

// ---------------------------------------------------------------------------
// Model
// ---------------------------------------------------------------------------

// Weight layout: proj {w, b}, per block {kernel IOHW, channel bias}, final
// conv {kernel OIHW, channel bias}.
namespace {

Tensor run_decoder(const DecoderConfig& cfg, const std::vector<Tensor>& weights,
                   const Tensor& inputs, int input_dim) {
  if (inputs.rank() != 2 || inputs.dim(1) != input_dim)
    throw InputError("decoder: inputs " + shape_str(inputs.shape()) +
                     " do not match expected N x " + std::to_string(input_dim));
  std::size_t wi = 0;
  Tensor x = relu(dense(inputs, weights[wi], weights[wi + 1]));
  wi += 2;
  x = reshape(x, {inputs.dim(0), cfg.proj_channels, cfg.proj_size, cfg.proj_size});
  for (std::size_t b = 0; b < cfg.block_channels.size(); ++b) {
    x = relu(channel_bias(conv_transpose2d(x, weights[wi], 2, 1), weights[wi + 1]));
    wi += 2;
  }
  x = channel_bias(conv2d(x, weights[wi], 1, cfg.final_kernel / 2), weights[wi + 1]);
  return hood::tanh(x);
}

// DCGAN-style init: weights from N(0, 0.02), biases zero.
std::vector<Tensor> init_decoder_weights(const DecoderConfig& cfg, int input_dim,
                                         Rng& rng) {
  auto gaussian = [&](Shape shape) {
    Eigen::ArrayXf v(shape_numel(shape));
    for (long i = 0; i < v.size(); ++i) v[i] = rng.normal(0.0f, 0.02f);
    return Tensor::param(std::move(shape), std::move(v));
  };
  auto zeros = [&](Shape shape) {
    return Tensor::param(shape, Eigen::ArrayXf::Zero(shape_numel(shape)));
  };

  std::vector<Tensor> w;
  int proj_out = cfg.proj_channels * cfg.proj_size * cfg.proj_size;
  w.push_back(gaussian({input_dim, proj_out}));
  w.push_back(zeros({proj_out}));
  int in_ch = cfg.proj_channels;
  for (int out_ch : cfg.block_channels) {
    w.push_back(gaussian({in_ch, out_ch, 4, 4}));
    w.push_back(zeros({out_ch}));
    in_ch = out_ch;
  }
  w.push_back(gaussian({3, in_ch, cfg.final_kernel, cfg.final_kernel}));
  w.push_back(zeros({3}));
  return w;
}

// Deterministic cyclic sampler: a shuffled pass over the indices, reshuffled
// on exhaustion.
class IndexStream {
 public:
  IndexStream(long count, Rng& rng) : rng_(rng), order_(static_cast<std::size_t>(count)) {
    std::iota(order_.begin(), order_.end(), 0);
    rng_.shuffle(order_);
  }
  long next() {
    if (pos_ == order_.size()) {
      rng_.shuffle(order_);
      pos_ = 0;
    }
    return order_[pos_++];
  }

 private:
  Rng& rng_;
  std::vector<long> order_;
  std::size_t pos_ = 0;
};

}  // namespace

Tensor DecoderModel::predict(const Tensor& inputs) const {
  NoGradScope ng;
  return run_decoder(cfg_, weights_, inputs, input_dim());
}

Heatmap DecoderModel::predict_one(const Eigen::VectorXf& input) const {
  Eigen::ArrayXf v = input.array();
  Tensor batch = Tensor::from_array({1, static_cast<int>(input.size())}, v);
  Tensor out = predict(batch);
  Heatmap h;
  h.width = output_width();
  h.height = output_height();
  h.values = out.values();
  return h;
}

std::uint64_t DecoderModel::weight_hash() const {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (const Tensor& w : weights_)
    h = fnv1a64(w.values().data(),
                static_cast<std::size_t>(w.numel()) * sizeof(float), h);
  return h;
}

void DecoderModel::save(const std::filesystem::path& path) const {
  std::vector<CheckpointEntry> entries;
  std::vector<float> meta = {static_cast<float>(feature_dim_),
                             static_cast<float>(class_count_),
                             static_cast<float>(cfg_.proj_channels),
                             static_cast<float>(cfg_.proj_size),
                             static_cast<float>(cfg_.final_kernel),
                             static_cast<float>(cfg_.block_channels.size())};
  for (int c : cfg_.block_channels) meta.push_back(static_cast<float>(c));
  Eigen::ArrayXf meta_arr(static_cast<long>(meta.size()));
  for (std::size_t i = 0; i < meta.size(); ++i) meta_arr[static_cast<long>(i)] = meta[i];
  entries.push_back({"decoder.meta", {static_cast<int>(meta.size())}, meta_arr});

  std::size_t wi = 0;
  entries.push_back({"decoder.proj.w", weights_[wi].shape(), weights_[wi].values()});
  ++wi;
  entries.push_back({"decoder.proj.b", weights_[wi].shape(), weights_[wi].values()});
  ++wi;
  for (std::size_t b = 0; b < cfg_.block_channels.size(); ++b) {
    std::string prefix = "decoder.block" + std::to_string(b);
    entries.push_back({prefix + ".k", weights_[wi].shape(), weights_[wi].values()});
    ++wi;
    entries.push_back({prefix + ".b", weights_[wi].shape(), weights_[wi].values()});
    ++wi;
  }
  entries.push_back({"decoder.final.k", weights_[wi].shape(), weights_[wi].values()});
  ++wi;
  entries.push_back({"decoder.final.b", weights_[wi].shape(), weights_[wi].values()});
  save_checkpoint(path, entries);
}

DecoderModel DecoderModel::load(const std::filesystem::path& path) {
  auto entries = load_checkpoint(path);
  if (entries.empty() || entries[0].name != "decoder.meta")
    throw FormatError(path.string() +
                      ": not a decoder checkpoint (missing decoder.meta)");
  const auto& meta = entries[0].values;
  if (meta.size() < 6) throw FormatError(path.string() + ": decoder.meta too short");
  DecoderConfig cfg;
  int feature_dim = static_cast<int>(meta[0]);
  int class_count = static_cast<int>(meta[1]);
  cfg.proj_channels = static_cast<int>(meta[2]);
  cfg.proj_size = static_cast<int>(meta[3]);
  cfg.final_kernel = static_cast<int>(meta[4]);
  int nblocks = static_cast<int>(meta[5]);
  if (meta.size() != 6 + static_cast<long>(nblocks))
    throw FormatError(path.string() + ": decoder.meta length mismatch");
  cfg.block_channels.clear();
  for (int b = 0; b < nblocks; ++b)
    cfg.block_channels.push_back(static_cast<int>(meta[6 + b]));

  std::size_t expected = 1 + 2 + 2 * cfg.block_channels.size() + 2;
  if (entries.size() != expected)
    throw FormatError(path.string() + ": expected " + std::to_string(expected) +
                      " checkpoint entries, got " + std::to_string(entries.size()));
  std::vector<Tensor> weights;
  for (std::size_t i = 1; i < entries.size(); ++i)
    weights.push_back(
        Tensor::from_array(entries[i].shape, std::move(entries[i].values)));
  return DecoderModel(std::move(cfg), feature_dim, class_count, std::move(weights));
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

namespace {

// Assembled decoder inputs for the given dataset indices, computed with the
// frozen classifier outside any tape.
RowMatrixXf assemble_rows(const FrozenClassifier& model, const FeatureBank& bank,
                          const Dataset& ds, const std::vector<int>& indices) {
  int d = model.config().feature_dim;
  int c = model.config().class_count;
  RowMatrixXf rows(static_cast<long>(indices.size()), d + c);
  const int batch = 256;
  for (std::size_t start = 0; start < indices.size(); start += batch) {
    std::size_t n = std::min<std::size_t>(batch, indices.size() - start);
    std::span<const int> idx(indices.data() + start, n);
    ClassifyResult out = model.classify(ds, idx);
    for (std::size_t i = 0; i < n; ++i) {
      auto probs = out.probs.values().segment(static_cast<long>(i) * c, c);
      long arg = 0;
      probs.maxCoeff(&arg);
      Eigen::VectorXf z = Eigen::Map<const Eigen::VectorXf>(
          out.features.values().data() + static_cast<long>(i) * d, d);
      rows.row(static_cast<long>(start + i)) =
          assemble_input(z, static_cast<int>(arg), bank.feature_min(),
                         bank.feature_max(), c)
              .transpose();
    }
  }
  return rows;
}

Tensor gather_rows(const RowMatrixXf& m, const std::vector<long>& rows) {
  Eigen::ArrayXf v(static_cast<long>(rows.size()) * m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i)
    Eigen::Map<Eigen::RowVectorXf>(v.data() + static_cast<long>(i) * m.cols(),
                                   m.cols()) = m.row(rows[i]);
  return Tensor::from_array(
      {static_cast<int>(rows.size()), static_cast<int>(m.cols())}, std::move(v));
}

}  // namespace

DecoderModel train_decoder(const TargetSet& targets, const Dataset& d_in,
                           const Dataset& d_out,
                           const FrozenClassifier& model_f,
                           const FeatureBank& bank, const DecoderConfig& cfg,
                           DecoderModel::TrainStats* stats,
                           const EpochCallback& on_epoch) {
  cfg.validate();
  if (targets.out_targets.empty())
    throw InputError("train_decoder: empty OOD target set");
  if (targets.in_refs.empty())
    throw InputError("train_decoder: empty in-distribution target set");
  if (cfg.output_size() != targets.width || cfg.output_size() != targets.height)
    throw ConfigError("train_decoder: decoder emits " +
                      std::to_string(cfg.output_size()) + "x" +
                      std::to_string(cfg.output_size()) + " but targets are " +
                      std::to_string(targets.width) + "x" +
                      std::to_string(targets.height));

  int d = model_f.config().feature_dim;
  int c = model_f.config().class_count;
  int input_dim = d + c;
  long hm = 3l * targets.width * targets.height;

  std::vector<int> in_indices(targets.in_refs.begin(), targets.in_refs.end());
  std::vector<int> out_indices;
  out_indices.reserve(targets.out_targets.size());
  for (const auto& t : targets.out_targets)
    out_indices.push_back(static_cast<int>(t.image_ref));

  RowMatrixXf in_inputs = assemble_rows(model_f, bank, d_in, in_indices);
  RowMatrixXf out_inputs = assemble_rows(model_f, bank, d_out, out_indices);
  RowMatrixXf out_target_rows(static_cast<long>(targets.out_targets.size()), hm);
  for (std::size_t i = 0; i < targets.out_targets.size(); ++i)
    out_target_rows.row(static_cast<long>(i)) =
        Eigen::Map<const Eigen::RowVectorXf>(
            targets.out_targets[i].heatmap.values.data(), hm);

  Rng init_rng(Rng::derive(cfg.seed, "decoder.init"));
  std::vector<Tensor> params = init_decoder_weights(cfg, input_dim, init_rng);
  AdamConfig adam_cfg{cfg.lr, cfg.beta1, cfg.beta2, 1e-8f};
  AdamState opt(params, adam_cfg);

  int n_out = cfg.ood_per_batch();
  int n_in = cfg.batch_size - n_out;
  long steps_per_epoch =
      (static_cast<long>(in_inputs.rows()) + n_in - 1) / n_in;

  Rng sample_rng(Rng::derive(cfg.seed, "decoder.batches"));
  IndexStream in_stream(in_inputs.rows(), sample_rng);
  IndexStream out_stream(out_inputs.rows(), sample_rng);

  if (stats) *stats = {};
  int hm_w = targets.width, hm_h = targets.height;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    double epoch_loss = 0.0;
    for (long step = 0; step < steps_per_epoch; ++step) {
      std::vector<long> in_rows(static_cast<std::size_t>(n_in));
      for (auto& r : in_rows) r = in_stream.next();
      std::vector<long> out_rows(static_cast<std::size_t>(n_out));
      for (auto& r : out_rows) r = out_stream.next();

      Tape::active().reset();
      Tensor in_x = gather_rows(in_inputs, in_rows);
      Tensor out_x = gather_rows(out_inputs, out_rows);
      Tensor t_out = reshape(gather_rows(out_target_rows, out_rows),
                             {n_out, 3, hm_h, hm_w});
      Tensor pred_in = run_decoder(cfg, params, in_x, input_dim);
      Tensor pred_out = run_decoder(cfg, params, out_x, input_dim);
      Tensor loss = decoder_loss(pred_in, pred_out, t_out, cfg.alpha);
      backward(loss);
      opt.step();
      opt.zero_grad();
      epoch_loss += static_cast<double>(loss.scalar());
    }
    Tape::active().reset();
    epoch_loss /= static_cast<double>(steps_per_epoch);
    if (stats) {
      if (epoch == 0) stats->first_epoch_loss = epoch_loss;
      stats->final_epoch_loss = epoch_loss;
      stats->epoch_losses.push_back(epoch_loss);
    }
    if (on_epoch) on_epoch({epoch + 1, epoch_loss, 0.0});
  }

  std::vector<Tensor> frozen;
  frozen.reserve(params.size());
  for (const Tensor& p : params) frozen.push_back(p.detached());
  return DecoderModel(cfg, d, c, std::move(frozen));
}

}  // namespace hood
