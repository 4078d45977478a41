#ifndef BODYFORMER_TESTS_FD_CHECK_HPP
#define BODYFORMER_TESTS_FD_CHECK_HPP

#include "bodyformer/tensor.hpp"

#include <cmath>
#include <functional>
#include <vector>

namespace bodyformer {

/// Central finite differences over every entry of `params` against the
/// analytic gradient of the scalar produced by `f`.  Returns the worst
/// relative error, with an absolute floor to keep near-zero entries sane.
inline double fd_max_rel_error(std::vector<Tensor> params,
                               const std::function<Tensor()>& f,
                               double h = 1e-5) {
  for (auto& p : params) p.zero_grad();
  Tensor loss = f();
  backward(loss);
  std::vector<Vec> analytic;
  analytic.reserve(params.size());
  for (auto& p : params) analytic.push_back(p.grad());

  double worst = 0.0;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Vec& v = params[pi].value();
    for (Eigen::Index i = 0; i < v.size(); ++i) {
      double keep = v[i];
      v[i] = keep + h;
      double up = f().item();
      v[i] = keep - h;
      double down = f().item();
      v[i] = keep;
      double numeric = (up - down) / (2.0 * h);
      double a = analytic[pi][i];
      double denom = std::max({std::abs(a), std::abs(numeric), 1e-6});
      worst = std::max(worst, std::abs(a - numeric) / denom);
    }
  }
  return worst;
}

}  // namespace bodyformer

#endif
