#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include "hood/dataset.hpp"
#include "hood/tensor.hpp"

namespace hood {

using RowMatrixXf =
    Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Byte image (channel-major) -> float tensor values in [-1, 1]: v/127.5 - 1.
Eigen::ArrayXf normalize_image(std::span<const std::uint8_t> img);

// Stacks the selected images into an N x C x H x W tensor of normalized values.
Tensor normalized_batch(const Dataset& ds, std::span<const int> indices);

struct ConvBlockSpec {
  int out_channels;
  int kernel;
  int stride;
};

struct ClassifierConfig {
  int width = 32;
  int height = 32;
  int channels = 3;
  int class_count = 4;
  std::vector<ConvBlockSpec> blocks = {{16, 3, 2}, {32, 3, 2}, {64, 3, 2}};
  int feature_dim = 64;   // penultimate width D
  int epochs = 10;
  int batch_size = 64;
  float lr = 1e-3f;
  std::uint64_t seed = 1;

  void validate() const;
  long flat_dim() const;  // conv stack output size feeding the first dense
};

struct ClassifyResult {
  Tensor logits;    // N x C
  Tensor probs;     // N x C, softmax rows
  Tensor features;  // N x D, activations feeding the final dense layer
};

struct EpochStats {
  int epoch = 0;
  double loss = 0.0;
  double accuracy = 0.0;
};
using EpochCallback = std::function<void(const EpochStats&)>;

// Multi-class conv classifier, immutable after training. Forward passes are
// pure; any number of threads may share one instance.
class FrozenClassifier {
 public:
  static FrozenClassifier load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  ClassifyResult classify(const Tensor& batch) const;
  ClassifyResult classify(const Dataset& ds, std::span<const int> indices) const;

  const ClassifierConfig& config() const { return cfg_; }
  std::uint64_t weight_hash() const;

  friend FrozenClassifier train_classifier(const Dataset& train,
                                           const ClassifierConfig& cfg,
                                           const EpochCallback& on_epoch);

 private:
  FrozenClassifier(ClassifierConfig cfg, std::vector<Tensor> weights)
      : cfg_(std::move(cfg)), weights_(std::move(weights)) {}

  ClassifierConfig cfg_;
  std::vector<Tensor> weights_;  // detached; layout documented in the .cpp
};

FrozenClassifier train_classifier(const Dataset& train,
                                  const ClassifierConfig& cfg,
                                  const EpochCallback& on_epoch = {});

// Penultimate-layer features of the in-distribution training set, with the
// ground-truth labels and per-dimension min/max statistics used for the
// decoder's [0, 1] input normalization.
class FeatureBank {
 public:
  FeatureBank(RowMatrixXf features, std::vector<std::uint32_t> labels,
              std::vector<std::uint32_t> image_refs, int class_count);

  static FeatureBank load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  long rows() const { return features_.rows(); }
  int dim() const { return static_cast<int>(features_.cols()); }
  int class_count() const { return class_count_; }

  const RowMatrixXf& features() const { return features_; }
  std::uint32_t label(long i) const { return labels_[static_cast<std::size_t>(i)]; }
  std::uint32_t image_ref(long i) const { return image_refs_[static_cast<std::size_t>(i)]; }
  const std::vector<long>& rows_of_class(int c) const;

  const Eigen::VectorXf& feature_min() const { return min_; }
  const Eigen::VectorXf& feature_max() const { return max_; }

 private:
  RowMatrixXf features_;
  std::vector<std::uint32_t> labels_;
  std::vector<std::uint32_t> image_refs_;
  int class_count_ = 0;
  Eigen::VectorXf min_, max_;
  std::vector<std::vector<long>> by_class_;

  void index_classes();
};

FeatureBank extract_feature_bank(const FrozenClassifier& model,
                                 const Dataset& d_in);

}  // namespace hood
