#include "bodyformer/adamw.hpp"
#include "bodyformer/tensor.hpp"

#include "fd_check.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace bodyformer;

namespace {

Mat random_mat(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng) {
  std::normal_distribution<double> nd(0.0, 1.0);
  Mat m(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = nd(rng);
  return m;
}

}  // namespace

TEST_CASE("matmul forward matches hand arithmetic") {
  Mat a(2, 2);
  a << 1, 2, 3, 4;
  Mat b(2, 1);
  b << 1, 1;
  Tensor c = matmul(Tensor::from_mat(a), Tensor::from_mat(b));
  CHECK(c.value()[0] == 3.0);
  CHECK(c.value()[1] == 7.0);
}

TEST_CASE("matmul rejects mismatched inner dimensions") {
  Tensor a = Tensor::zeros(2, 3);
  Tensor b = Tensor::zeros(2, 3);
  CHECK_THROWS_AS(matmul(a, b), DimensionError);
}

TEST_CASE("gradients of composite expressions match finite differences") {
  std::mt19937_64 rng(7);
  Tensor w = Tensor::from_mat(random_mat(3, 4, rng), true);
  Tensor x = Tensor::from_mat(random_mat(5, 3, rng), true);
  Tensor b = Tensor::from_vec(Vec::Random(4), true);
  auto f = [&] {
    Tensor h = gelu(add_rowvec(matmul(x, w), b));
    return mean(mul(h, h));
  };
  CHECK(fd_max_rel_error({w, x, b}, f) < 1e-4);
}

TEST_CASE("elementwise ops match finite differences") {
  std::mt19937_64 rng(11);
  Tensor x = Tensor::from_mat(random_mat(3, 3, rng).array().abs().matrix() +
                                  Mat::Constant(3, 3, 0.5),
                              true);
  auto f = [&] {
    Tensor y = add(exp(scale(x, 0.3)), log(x));
    y = add(y, mul(sin(x), cos(x)));
    y = add(y, sqrt(x));
    return sum(square(y));
  };
  CHECK(fd_max_rel_error({x}, f) < 1e-4);
}

TEST_CASE("shared subexpressions accumulate gradient once per use") {
  Tensor x = Tensor::scalar(3.0, true);
  Tensor y = add(mul(x, x), x);  // y = x^2 + x, dy/dx = 2x + 1 = 7
  backward(y);
  CHECK(x.grad()[0] == doctest::Approx(7.0).epsilon(1e-12));
}

TEST_CASE("backward requires a scalar loss") {
  Tensor m = Tensor::zeros(2, 2, true);
  CHECK_THROWS_AS(backward(m), DimensionError);
}

TEST_CASE("layer_norm normalizes [1,3] to [-1,1] under unit affine") {
  Mat x(1, 2);
  x << 1, 3;
  Tensor g = Tensor::from_vec(Vec::Ones(2));
  Tensor b = Tensor::from_vec(Vec::Zero(2));
  Tensor y = layer_norm(Tensor::from_mat(x), g, b, 0.0);
  CHECK(y.value()[0] == doctest::Approx(-1.0).epsilon(1e-12));
  CHECK(y.value()[1] == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("layer_norm gradient matches finite differences") {
  std::mt19937_64 rng(5);
  Tensor x = Tensor::from_mat(random_mat(4, 6, rng), true);
  Tensor g = Tensor::from_vec(Vec::Random(6), true);
  Tensor b = Tensor::from_vec(Vec::Random(6), true);
  auto f = [&] { return mean(square(layer_norm(x, g, b))); };
  CHECK(fd_max_rel_error({x, g, b}, f) < 1e-4);
}

TEST_CASE("softmax of [ln 1, ln 3] is [0.25, 0.75]") {
  Mat x(1, 2);
  x << std::log(1.0), std::log(3.0);
  Tensor y = softmax(Tensor::from_mat(x));
  CHECK(y.value()[0] == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(y.value()[1] == doctest::Approx(0.75).epsilon(1e-12));
}

TEST_CASE("softmax is invariant to a constant row shift") {
  std::mt19937_64 rng(3);
  Mat x = random_mat(2, 5, rng);
  Tensor a = softmax(Tensor::from_mat(x));
  Tensor b = softmax(Tensor::from_mat(x.array() + 100.0));
  CHECK((a.value() - b.value()).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("masked softmax zeroes masked entries exactly") {
  Mat x(1, 3);
  x << 5.0, 1.0, 2.0;
  BoolMat mask(1, 3);
  mask << true, false, true;
  Tensor y = softmax(Tensor::from_mat(x), &mask);
  CHECK(y.value()[1] == 0.0);
  CHECK(y.value()[0] + y.value()[2] == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("fully masked softmax row is an error") {
  Mat x(1, 2);
  x << 1.0, 2.0;
  BoolMat mask(1, 2);
  mask << false, false;
  CHECK_THROWS_AS(softmax(Tensor::from_mat(x), &mask), NumericError);
}

TEST_CASE("softmax gradient matches finite differences") {
  std::mt19937_64 rng(13);
  Tensor x = Tensor::from_mat(random_mat(3, 4, rng), true);
  Vec w = Vec::Random(4);
  auto f = [&] {
    Tensor y = softmax(x);
    return sum(mul(y, Tensor::from_mat(Mat(w.transpose().replicate(3, 1)))));
  };
  CHECK(fd_max_rel_error({x}, f) < 1e-4);
}

TEST_CASE("gelu derivative at zero is one half") {
  Tensor x = Tensor::scalar(0.0, true);
  Tensor y = gelu(x);
  backward(y);
  CHECK(x.grad()[0] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(y.item() == 0.0);
}

TEST_CASE("gelu value at one matches the Gaussian CDF form") {
  Tensor y = gelu(Tensor::scalar(1.0));
  double phi = 0.5 * std::erfc(-1.0 / std::sqrt(2.0));
  CHECK(y.item() == doctest::Approx(phi).epsilon(1e-12));
}

TEST_CASE("structural ops round trip and differentiate") {
  std::mt19937_64 rng(17);
  Tensor x = Tensor::from_mat(random_mat(4, 6, rng), true);
  auto f = [&] {
    Tensor a = slice_cols(x, 1, 3);
    Tensor b = slice_rows(x, 0, 2);
    Tensor c = concat_cols({a, slice_cols(x, 0, 1)});
    Tensor d = gather_cols(x, {5, 0, 3});
    Tensor e = transpose(b);
    return add(add(sum(square(c)), sum(square(d))), sum(square(e)));
  };
  CHECK(fd_max_rel_error({x}, f) < 1e-4);
}

TEST_CASE("reshape preserves row-major order") {
  Mat x(2, 3);
  x << 1, 2, 3, 4, 5, 6;
  Tensor y = reshape(Tensor::from_mat(x), 3, 2);
  CHECK(y.matrix()(1, 0) == 3);
  CHECK(y.matrix()(2, 1) == 6);
}

TEST_CASE("multi-head attention output shape and gradient") {
  std::mt19937_64 rng(23);
  int d = 8, heads = 2;
  Tensor q = Tensor::from_mat(random_mat(3, d, rng), true);
  Tensor k = Tensor::from_mat(random_mat(5, d, rng), true);
  Tensor v = Tensor::from_mat(random_mat(5, d, rng), true);
  AttentionWeights w;
  w.wq = Tensor::from_mat(0.3 * random_mat(d, d, rng), true);
  w.wk = Tensor::from_mat(0.3 * random_mat(d, d, rng), true);
  w.wv = Tensor::from_mat(0.3 * random_mat(d, d, rng), true);
  w.wo = Tensor::from_mat(0.3 * random_mat(d, d, rng), true);
  w.bo = Tensor::from_vec(Vec::Random(d), true);
  Tensor out = multi_head_attention(q, k, v, heads, w);
  CHECK(out.rows() == 3);
  CHECK(out.cols() == d);
  auto f = [&] {
    return mean(square(multi_head_attention(q, k, v, heads, w)));
  };
  CHECK(fd_max_rel_error({q, k, v, w.wq, w.wk, w.wv, w.wo, w.bo}, f) < 1e-4);
}

TEST_CASE("attention head count must divide the model width") {
  Tensor q = Tensor::zeros(2, 6);
  AttentionWeights w;
  w.wq = Tensor::zeros(6, 6);
  w.wk = Tensor::zeros(6, 6);
  w.wv = Tensor::zeros(6, 6);
  w.wo = Tensor::zeros(6, 6);
  w.bo = Tensor::from_vec(Vec::Zero(6));
  CHECK_THROWS_AS(multi_head_attention(q, q, q, 4, w), ConfigError);
}

TEST_CASE("causal-style attention mask blocks future keys") {
  std::mt19937_64 rng(29);
  int d = 4;
  Mat qm = random_mat(3, d, rng), km = random_mat(3, d, rng),
      vm = random_mat(3, d, rng);
  AttentionWeights w;
  w.wq = Tensor::from_mat(Mat::Identity(d, d));
  w.wk = Tensor::from_mat(Mat::Identity(d, d));
  w.wv = Tensor::from_mat(Mat::Identity(d, d));
  w.wo = Tensor::from_mat(Mat::Identity(d, d));
  w.bo = Tensor::from_vec(Vec::Zero(d));
  BoolMat mask(3, 3);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) mask(i, j) = j <= i;
  Tensor base = multi_head_attention(
      Tensor::from_mat(qm), Tensor::from_mat(km), Tensor::from_mat(vm), 1, w,
      &mask);
  Mat km2 = km, vm2 = vm;
  km2.row(2).array() += 10.0;
  vm2.row(2).array() += 10.0;
  Tensor pert = multi_head_attention(
      Tensor::from_mat(qm), Tensor::from_mat(km2), Tensor::from_mat(vm2), 1, w,
      &mask);
  // Rows 0 and 1 may not see key/value 2.
  CHECK((base.matrix().topRows(2) - pert.matrix().topRows(2))
            .cwiseAbs()
            .maxCoeff() < 1e-12);
  CHECK((base.matrix().row(2) - pert.matrix().row(2)).cwiseAbs().maxCoeff() >
        1e-6);
}

TEST_CASE("AdamW matches a two-step hand simulation") {
  // Single parameter x = 1, constant gradient 1, lr = 0.1, no decay.
  Tensor x = Tensor::from_vec(Vec::Ones(1), true);
  AdamWConfig cfg;
  cfg.weight_decay = 0.0;
  AdamW opt({x}, cfg);

  double m = 0, v = 0, b1 = cfg.beta1, b2 = cfg.beta2, lr = 0.1, px = 1.0;
  for (int t = 1; t <= 2; ++t) {
    x.zero_grad();
    x.grad()[0] = 1.0;
    opt.step(lr);
    m = b1 * m + (1 - b1) * 1.0;
    v = b2 * v + (1 - b2) * 1.0;
    double mh = m / (1 - std::pow(b1, t));
    double vh = v / (1 - std::pow(b2, t));
    px -= lr * mh / (std::sqrt(vh) + cfg.eps);
    CHECK(x.value()[0] == doctest::Approx(px).epsilon(1e-10));
  }
}

TEST_CASE("AdamW decoupled weight decay shrinks parameters before the update") {
  Tensor x = Tensor::from_vec(Vec::Ones(1), true);
  AdamWConfig cfg;
  cfg.weight_decay = 0.5;
  AdamW opt({x}, cfg);
  x.zero_grad();
  x.grad()[0] = 0.0;  // zero gradient: only decay acts
  opt.step(0.1);
  CHECK(x.value()[0] == doctest::Approx(1.0 * (1.0 - 0.1 * 0.5)).epsilon(1e-12));
}

TEST_CASE("AdamW with zero lr and zero decay is a no-op") {
  Tensor x = Tensor::from_vec(Vec::Ones(3), true);
  AdamWConfig cfg;
  cfg.weight_decay = 0.0;
  AdamW opt({x}, cfg);
  x.zero_grad();
  x.grad() = Vec::Ones(3);
  opt.step(0.0);
  CHECK((x.value() - Vec::Ones(3)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("AdamW rejects a negative learning rate") {
  Tensor x = Tensor::from_vec(Vec::Ones(1), true);
  AdamW opt({x});
  x.grad()[0] = 1.0;
  CHECK_THROWS_AS(opt.step(-1.0), ConfigError);
}
