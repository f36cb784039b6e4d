#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "hood/classifier.hpp"
#include "hood/dataset.hpp"

namespace hood {

// Signed w x h x 3 response map, stored channel-major like images. Entries
// stay within [-1, 1]: zero for in-distribution targets, scaled normalized
// image differences for OOD targets, tanh output for predictions.
struct Heatmap {
  int width = 0;
  int height = 0;
  Eigen::ArrayXf values;  // 3 * height * width

  static Heatmap zero(int width, int height) {
    Heatmap h;
    h.width = width;
    h.height = height;
    h.values = Eigen::ArrayXf::Zero(3l * width * height);
    return h;
  }

  long pixels() const { return static_cast<long>(width) * height; }
  float at(int c, int y, int x) const {
    return values[(static_cast<long>(c) * height + y) * width + x];
  }
};

// Index of the bank row with minimum Euclidean distance to `feature` among
// rows labelled `predicted_class`; ties resolve to the smallest bank index.
long nearest_in_distribution(const Eigen::VectorXf& feature, int predicted_class,
                             const FeatureBank& bank);

// Target heatmap for an OOD image: scale * (norm(x_nn) - norm(x_o)).
// The default scale of 1/2 folds the raw [-2, 2] difference into the
// tanh-representable [-1, 1] range.
Heatmap make_ood_heatmap(std::span<const std::uint8_t> x_o,
                         std::span<const std::uint8_t> x_nn, int width,
                         int height, float scale = 0.5f);

struct OutTarget {
  std::uint32_t image_ref;     // index into the OOD training set
  std::uint32_t nn_image_ref;  // index into the in-distribution set
  Heatmap heatmap;
};

// Decoder training corpus: in-distribution refs pair with the implicit zero
// heatmap; OOD refs carry their nearest-neighbor difference maps.
struct TargetSet {
  int width = 0;
  int height = 0;
  std::vector<std::uint32_t> in_refs;
  std::vector<OutTarget> out_targets;

  void save(const std::filesystem::path& path) const;
  static TargetSet load(const std::filesystem::path& path);
};

TargetSet build_target_sets(const FrozenClassifier& model,
                            const FeatureBank& bank, const Dataset& d_in,
                            const Dataset& d_out, float target_scale = 0.5f);

// Blue (response 0) to red (response 1) blend of the per-pixel channel-max
// absolute response, written as binary PPM.
void export_heatmap_image(const Heatmap& map, const std::filesystem::path& path);

}  // namespace hood
