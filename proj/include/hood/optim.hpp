#pragma once

#include <vector>

#include "hood/tensor.hpp"

namespace hood {

struct AdamConfig {
  float lr = 2e-4f;
  float beta1 = 0.5f;
  float beta2 = 0.999f;
  float epsilon = 1e-8f;
};

// Standard Adam with bias correction. Moment accumulators live here, matched
// one-to-one with the registered parameters; step() updates parameters in
// place and leaves their gradients untouched.
class AdamState {
 public:
  AdamState(std::vector<Tensor> params, AdamConfig config);

  void step();
  void zero_grad();

  long step_count() const { return t_; }
  const AdamConfig& config() const { return cfg_; }

 private:
  std::vector<Tensor> params_;
  std::vector<Eigen::ArrayXf> m_, v_;
  long t_ = 0;
  AdamConfig cfg_;
};

}  // namespace hood
