#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "hood/classifier.hpp"
#include "hood/heatmap.hpp"
#include "hood/tensor.hpp"

namespace hood {

// Training hyperparameters follow the reference recipe: alpha 5, 150 epochs,
// Adam(2e-4, 0.5, 0.999), batches of 200 with a 1/5 OOD-to-in ratio.
struct DecoderConfig {
  float alpha = 5.0f;
  int epochs = 150;
  float lr = 2e-4f;
  float beta1 = 0.5f;
  float beta2 = 0.999f;
  int batch_size = 200;
  float ood_ratio = 0.2f;  // OOD : in-distribution samples per batch
  std::uint64_t seed = 1;

  // DCGAN-generator-like stack: dense projection to proj_channels x proj_size
  // x proj_size, stride-2 transposed-conv blocks with ReLU, final conv + tanh.
  int proj_channels = 128;
  int proj_size = 4;
  std::vector<int> block_channels = {32, 16, 8};
  int final_kernel = 3;

  void validate() const;
  int output_size() const;  // proj_size * 2^blocks
  int ood_per_batch() const;
};

// Normalized feature vector concatenated with the one-hot class prediction:
// z' = clamp((z - min) / (max - min), 0, 1), degenerate dims map to 0.
Eigen::VectorXf assemble_input(const Eigen::VectorXf& z, int predicted_class,
                               const Eigen::VectorXf& feature_min,
                               const Eigen::VectorXf& feature_max,
                               int class_count);

// Weighted objective: mean over OOD elements of (1 + alpha*|h_o|) *
// (pred - h_o)^2 plus mean over in-distribution elements of pred^2.
// Either prediction side may be absent (undefined tensor).
Tensor decoder_loss(const Tensor& pred_in, const Tensor& pred_out,
                    const Tensor& targets_out, float alpha);

// The heatmap decoder d(.). Immutable once trained; forward passes are pure.
class DecoderModel {
 public:
  static DecoderModel load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  // inputs: N x (D + C) assembled vectors -> N x 3 x H x W heatmap batch.
  Tensor predict(const Tensor& inputs) const;
  Heatmap predict_one(const Eigen::VectorXf& input) const;

  int input_dim() const { return feature_dim_ + class_count_; }
  int feature_dim() const { return feature_dim_; }
  int class_count() const { return class_count_; }
  int output_width() const { return cfg_.output_size(); }
  int output_height() const { return cfg_.output_size(); }
  const DecoderConfig& config() const { return cfg_; }
  std::uint64_t weight_hash() const;

  struct TrainStats {
    double first_epoch_loss = 0.0;
    double final_epoch_loss = 0.0;
    std::vector<double> epoch_losses;
  };

  friend DecoderModel train_decoder(const TargetSet& targets,
                                    const Dataset& d_in, const Dataset& d_out,
                                    const FrozenClassifier& model_f,
                                    const FeatureBank& bank,
                                    const DecoderConfig& cfg, TrainStats* stats,
                                    const EpochCallback& on_epoch);

 private:
  DecoderModel(DecoderConfig cfg, int feature_dim, int class_count,
               std::vector<Tensor> weights)
      : cfg_(std::move(cfg)),
        feature_dim_(feature_dim),
        class_count_(class_count),
        weights_(std::move(weights)) {}

  DecoderConfig cfg_;
  int feature_dim_ = 0;
  int class_count_ = 0;
  std::vector<Tensor> weights_;
};

// Trains on the target set; h_out must be non-empty and the classifier stays
// frozen (its features are precomputed outside the tape).
DecoderModel train_decoder(const TargetSet& targets, const Dataset& d_in,
                           const Dataset& d_out,
                           const FrozenClassifier& model_f,
                           const FeatureBank& bank, const DecoderConfig& cfg,
                           DecoderModel::TrainStats* stats = nullptr,
                           const EpochCallback& on_epoch = {});

}  // namespace hood
