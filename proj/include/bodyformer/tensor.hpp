#ifndef BODYFORMER_TENSOR_HPP
#define BODYFORMER_TENSOR_HPP

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace bodyformer {

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vec = Eigen::VectorXd;
using BoolMat = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>;

struct DimensionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// One node of the dynamically recorded computation graph.  Values are stored
/// flat in row-major order; `shape` is empty for scalars.
struct TensorNode {
  std::vector<Eigen::Index> shape;
  Vec value;
  Vec grad;                 // sized lazily on first backward touch
  bool requires_grad = false;
  std::uint64_t seq = 0;    // recording order, strictly increasing
  std::vector<std::shared_ptr<TensorNode>> parents;
  // Consumes this node's grad and accumulates into the parents' grads.
  std::function<void(TensorNode&)> backprop;

  Eigen::Index rows() const { return shape.empty() ? 1 : shape[0]; }
  Eigen::Index cols() const {
    return shape.size() < 2 ? (shape.empty() ? 1 : 1) : shape[1];
  }
  void ensure_grad() {
    if (grad.size() != value.size()) grad = Vec::Zero(value.size());
  }
};

/// Value-semantics handle to a graph node.  Copying a Tensor aliases the node.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<TensorNode> n) : node_(std::move(n)) {}

  static Tensor scalar(double v, bool requires_grad = false);
  static Tensor from_vec(const Vec& v, bool requires_grad = false);
  static Tensor from_mat(const Mat& m, bool requires_grad = false);
  static Tensor zeros(Eigen::Index rows, Eigen::Index cols, bool requires_grad = false);

  bool valid() const { return node_ != nullptr; }
  const std::vector<Eigen::Index>& shape() const { return node_->shape; }
  Eigen::Index rows() const { return node_->rows(); }
  Eigen::Index cols() const { return node_->cols(); }
  Eigen::Index size() const { return node_->value.size(); }
  bool is_scalar() const { return node_->shape.empty(); }
  bool requires_grad() const { return node_->requires_grad; }

  double item() const;
  const Vec& value() const { return node_->value; }
  Vec& value() { return node_->value; }
  Vec& grad() { node_->ensure_grad(); return node_->grad; }
  const Vec& grad() const;
  Mat matrix() const;           // copy of the value as a matrix
  void set_matrix(const Mat& m);
  void zero_grad() { node_->grad = Vec::Zero(node_->value.size()); }

  std::shared_ptr<TensorNode> node() const { return node_; }

 private:
  std::shared_ptr<TensorNode> node_;
};

/// Runs reverse-mode accumulation from a scalar loss.  Nodes are visited in
/// reverse recording order, each exactly once.  Gradients accumulate; call
/// zero_grad on parameters between backward passes.
void backward(const Tensor& loss);

// ---- elementwise / structural ops -----------------------------------------

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);  // Hadamard
Tensor scale(const Tensor& a, double c);
Tensor add_scalar(const Tensor& a, double c);
Tensor neg(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor sin(const Tensor& a);
Tensor cos(const Tensor& a);
Tensor sqrt(const Tensor& a);
Tensor square(const Tensor& a);
Tensor gelu(const Tensor& a);  // exact Gaussian-CDF form x*Phi(x)

Tensor sum(const Tensor& a);   // -> scalar
Tensor mean(const Tensor& a);  // -> scalar

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor reshape(const Tensor& a, Eigen::Index rows, Eigen::Index cols);

/// Broadcasts a length-d vector over every row of a T x d matrix.
Tensor add_rowvec(const Tensor& m, const Tensor& v);
/// Multiplies row i by the constant weights[i]; weights are not differentiated.
Tensor scale_rows(const Tensor& m, const Vec& weights);

Tensor slice_cols(const Tensor& a, Eigen::Index start, Eigen::Index n);
Tensor slice_rows(const Tensor& a, Eigen::Index start, Eigen::Index n);
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor concat_rows(const std::vector<Tensor>& parts);
/// Column permutation/selection; gradient scatters back.
Tensor gather_cols(const Tensor& a, const std::vector<Eigen::Index>& idx);

/// Row-wise softmax with numerical max-subtraction.  When a mask is given,
/// masked-out (false) entries get exactly zero weight; an all-false row is a
/// precondition violation.
Tensor softmax(const Tensor& a, const BoolMat* mask = nullptr);

/// Normalizes each row to zero mean / unit variance before the affine
/// (gain, bias) transform.  gain and bias are length-d vectors.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps = 1e-5);

struct AttentionWeights {
  Tensor wq, wk, wv, wo;  // each d x d
  Tensor bo;              // length d
};

/// Scaled dot-product multi-head attention with a concat + output projection.
/// mask, when present, is Tq x Tk with true = attend allowed.
Tensor multi_head_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                            int heads, const AttentionWeights& w,
                            const BoolMat* mask = nullptr);

}  // namespace bodyformer

#endif
