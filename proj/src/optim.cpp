#include "hood/optim.hpp"

#include <cmath>

namespace hood {

AdamState::AdamState(std::vector<Tensor> params, AdamConfig config)
    : params_(std::move(params)), cfg_(config) {
  if (cfg_.lr <= 0.0f) throw ConfigError("adam: learning rate must be positive");
  if (cfg_.beta1 < 0.0f || cfg_.beta1 >= 1.0f || cfg_.beta2 < 0.0f ||
      cfg_.beta2 >= 1.0f)
    throw ConfigError("adam: betas must lie in [0, 1)");
  if (cfg_.epsilon <= 0.0f) throw ConfigError("adam: epsilon must be positive");
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (!params_[i].defined() || !params_[i].requires_grad())
      throw UsageError("adam: parameter " + std::to_string(i) +
                       " does not require gradients");
    m_.push_back(Eigen::ArrayXf::Zero(params_[i].numel()));
    v_.push_back(Eigen::ArrayXf::Zero(params_[i].numel()));
  }
}

void AdamState::step() {
  ++t_;
  float bc1 = static_cast<float>(1.0 - std::pow(static_cast<double>(cfg_.beta1), t_));
  float bc2 = static_cast<float>(1.0 - std::pow(static_cast<double>(cfg_.beta2), t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor& p = params_[i];
    if (!p.has_grad())
      throw UsageError("adam: parameter " + std::to_string(i) +
                       " has no gradient; run backward first");
    const Eigen::ArrayXf& g = p.grad();
    m_[i] = cfg_.beta1 * m_[i] + (1.0f - cfg_.beta1) * g;
    v_[i] = cfg_.beta2 * v_[i] + (1.0f - cfg_.beta2) * g.square();
    p.mutable_values() -=
        cfg_.lr * (m_[i] / bc1) / ((v_[i] / bc2).sqrt() + cfg_.epsilon);
  }
}

void AdamState::zero_grad() {
  for (Tensor& p : params_) p.zero_grad();
}

}  // namespace hood
