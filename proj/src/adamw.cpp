#include "bodyformer/adamw.hpp"

#include <cmath>

namespace bodyformer {

AdamW::AdamW(std::vector<Tensor> params, AdamWConfig cfg)
    : params_(std::move(params)), cfg_(cfg) {
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (auto& p : params_) {
    m_.push_back(Vec::Zero(p.size()));
    v_.push_back(Vec::Zero(p.size()));
  }
}

void AdamW::step(double lr) {
  if (lr < 0.0) throw ConfigError("adamw: negative learning rate");
  ++step_count_;
  double bc1 = 1.0 - std::pow(cfg_.beta1, double(step_count_));
  double bc2 = 1.0 - std::pow(cfg_.beta2, double(step_count_));
  for (size_t i = 0; i < params_.size(); ++i) {
    Vec& p = params_[i].value();
    const Vec& g = params_[i].grad();
    m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * g;
    v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * Vec(g.array().square());
    p *= (1.0 - lr * cfg_.weight_decay);
    p.array() -= lr * (m_[i].array() / bc1) /
                 ((v_[i].array() / bc2).sqrt() + cfg_.eps);
  }
}

void AdamW::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

}  // namespace bodyformer
