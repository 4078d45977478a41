#ifndef BODYFORMER_ADAMW_HPP
#define BODYFORMER_ADAMW_HPP

#include "bodyformer/tensor.hpp"

#include <vector>

namespace bodyformer {

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-2;
};

/// AdamW with decoupled weight decay: parameters are shrunk by lr*wd
/// independently of the adaptive update, and moments are bias-corrected.
class AdamW {
 public:
  AdamW(std::vector<Tensor> params, AdamWConfig cfg = {});

  /// One update from the gradients currently stored in the parameters.
  void step(double lr);

  void zero_grad();

  std::uint64_t step_count() const { return step_count_; }
  const std::vector<Tensor>& params() const { return params_; }

  // Exposed for checkpoint resume.
  std::vector<Vec>& first_moments() { return m_; }
  std::vector<Vec>& second_moments() { return v_; }
  void set_step_count(std::uint64_t s) { step_count_ = s; }

 private:
  std::vector<Tensor> params_;
  std::vector<Vec> m_, v_;
  AdamWConfig cfg_;
  std::uint64_t step_count_ = 0;
};

}  // namespace bodyformer

#endif
