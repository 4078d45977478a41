#include "bodyformer/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <unordered_set>

namespace bodyformer {

namespace {

std::atomic<std::uint64_t> g_seq{1};

std::shared_ptr<TensorNode> make_node(std::vector<Eigen::Index> shape, Vec value) {
  auto n = std::make_shared<TensorNode>();
  n->shape = std::move(shape);
  n->value = std::move(value);
  n->seq = g_seq.fetch_add(1, std::memory_order_relaxed);
  return n;
}

using MatMap = Eigen::Map<Mat>;
using CMatMap = Eigen::Map<const Mat>;

CMatMap as_mat(const TensorNode& n) {
  return CMatMap(n.value.data(), n.rows(), n.cols());
}
MatMap grad_mat(TensorNode& n) {
  n.ensure_grad();
  return MatMap(n.grad.data(), n.rows(), n.cols());
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw DimensionError(std::string(op) + ": shape mismatch");
}

Tensor unary(const Tensor& a, Vec out,
             std::function<void(TensorNode&, TensorNode&)> back) {
  auto n = make_node(a.shape(), std::move(out));
  n->requires_grad = a.requires_grad();
  if (n->requires_grad) {
    n->parents = {a.node()};
    n->backprop = [back](TensorNode& self) {
      auto& p = *self.parents[0];
      if (!p.requires_grad) return;
      p.ensure_grad();
      back(self, p);
    };
  }
  return Tensor(n);
}

constexpr double kInvSqrt2 = 0.7071067811865475244;
constexpr double kInvSqrt2Pi = 0.3989422804014326779;

double norm_cdf(double x) { return 0.5 * std::erfc(-x * kInvSqrt2); }
double norm_pdf(double x) { return kInvSqrt2Pi * std::exp(-0.5 * x * x); }

}  // namespace

// ---- Tensor ---------------------------------------------------------------

Tensor Tensor::scalar(double v, bool requires_grad) {
  auto n = make_node({}, Vec::Constant(1, v));
  n->requires_grad = requires_grad;
  return Tensor(n);
}

Tensor Tensor::from_vec(const Vec& v, bool requires_grad) {
  auto n = make_node({v.size()}, v);
  n->requires_grad = requires_grad;
  return Tensor(n);
}

Tensor Tensor::from_mat(const Mat& m, bool requires_grad) {
  Vec flat = Eigen::Map<const Vec>(m.data(), m.size());
  auto n = make_node({m.rows(), m.cols()}, std::move(flat));
  n->requires_grad = requires_grad;
  return Tensor(n);
}

Tensor Tensor::zeros(Eigen::Index rows, Eigen::Index cols, bool requires_grad) {
  auto n = make_node({rows, cols}, Vec::Zero(rows * cols));
  n->requires_grad = requires_grad;
  return Tensor(n);
}

double Tensor::item() const {
  if (node_->value.size() != 1) throw DimensionError("item: tensor not scalar");
  return node_->value[0];
}

const Vec& Tensor::grad() const {
  node_->ensure_grad();
  return node_->grad;
}

Mat Tensor::matrix() const {
  return CMatMap(node_->value.data(), rows(), cols());
}

void Tensor::set_matrix(const Mat& m) {
  if (m.rows() != rows() || m.cols() != cols())
    throw DimensionError("set_matrix: shape mismatch");
  node_->value = Eigen::Map<const Vec>(m.data(), m.size());
}

// ---- backward -------------------------------------------------------------

void backward(const Tensor& loss) {
  if (!loss.is_scalar() && loss.size() != 1)
    throw DimensionError("backward: loss must be scalar");
  // Collect reachable nodes, then replay in reverse recording order.
  std::vector<TensorNode*> order;
  std::unordered_set<TensorNode*> seen;
  std::vector<TensorNode*> stack{loss.node().get()};
  seen.insert(loss.node().get());
  while (!stack.empty()) {
    TensorNode* n = stack.back();
    stack.pop_back();
    order.push_back(n);
    for (auto& p : n->parents)
      if (seen.insert(p.get()).second) stack.push_back(p.get());
  }
  std::sort(order.begin(), order.end(),
            [](TensorNode* a, TensorNode* b) { return a->seq > b->seq; });
  loss.node()->ensure_grad();
  loss.node()->grad[0] += 1.0;
  for (TensorNode* n : order)
    if (n->backprop && n->requires_grad) n->backprop(*n);
}

// ---- elementwise ----------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "add");
  auto n = make_node(a.shape(), a.value() + b.value());
  n->requires_grad = a.requires_grad() || b.requires_grad();
  if (n->requires_grad) {
    n->parents = {a.node(), b.node()};
    n->backprop = [](TensorNode& self) {
      for (auto& p : self.parents)
        if (p->requires_grad) {
          p->ensure_grad();
          p->grad += self.grad;
        }
    };
  }
  return Tensor(n);
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "sub");
  auto n = make_node(a.shape(), a.value() - b.value());
  n->requires_grad = a.requires_grad() || b.requires_grad();
  if (n->requires_grad) {
    n->parents = {a.node(), b.node()};
    n->backprop = [](TensorNode& self) {
      auto& pa = *self.parents[0];
      auto& pb = *self.parents[1];
      if (pa.requires_grad) { pa.ensure_grad(); pa.grad += self.grad; }
      if (pb.requires_grad) { pb.ensure_grad(); pb.grad -= self.grad; }
    };
  }
  return Tensor(n);
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "mul");
  auto n = make_node(a.shape(), (a.value().array() * b.value().array()).matrix());
  n->requires_grad = a.requires_grad() || b.requires_grad();
  if (n->requires_grad) {
    n->parents = {a.node(), b.node()};
    n->backprop = [](TensorNode& self) {
      auto& pa = *self.parents[0];
      auto& pb = *self.parents[1];
      if (pa.requires_grad) {
        pa.ensure_grad();
        pa.grad.array() += self.grad.array() * pb.value.array();
      }
      if (pb.requires_grad) {
        pb.ensure_grad();
        pb.grad.array() += self.grad.array() * pa.value.array();
      }
    };
  }
  return Tensor(n);
}

Tensor scale(const Tensor& a, double c) {
  return unary(a, a.value() * c, [c](TensorNode& self, TensorNode& p) {
    p.grad += c * self.grad;
  });
}

Tensor add_scalar(const Tensor& a, double c) {
  return unary(a, Vec(a.value().array() + c),
               [](TensorNode& self, TensorNode& p) { p.grad += self.grad; });
}

Tensor neg(const Tensor& a) { return scale(a, -1.0); }

Tensor exp(const Tensor& a) {
  return unary(a, Vec(a.value().array().exp()),
               [](TensorNode& self, TensorNode& p) {
                 p.grad.array() += self.grad.array() * self.value.array();
               });
}

Tensor log(const Tensor& a) {
  return unary(a, Vec(a.value().array().log()),
               [](TensorNode& self, TensorNode& p) {
                 p.grad.array() += self.grad.array() / p.value.array();
               });
}

Tensor sin(const Tensor& a) {
  return unary(a, Vec(a.value().array().sin()),
               [](TensorNode& self, TensorNode& p) {
                 p.grad.array() += self.grad.array() * p.value.array().cos();
               });
}

Tensor cos(const Tensor& a) {
  return unary(a, Vec(a.value().array().cos()),
               [](TensorNode& self, TensorNode& p) {
                 p.grad.array() -= self.grad.array() * p.value.array().sin();
               });
}

Tensor sqrt(const Tensor& a) {
  return unary(a, Vec(a.value().array().sqrt()),
               [](TensorNode& self, TensorNode& p) {
                 p.grad.array() += self.grad.array() * 0.5 / self.value.array();
               });
}

Tensor square(const Tensor& a) {
  return unary(a, Vec(a.value().array().square()),
               [](TensorNode& self, TensorNode& p) {
                 p.grad.array() += 2.0 * self.grad.array() * p.value.array();
               });
}

Tensor gelu(const Tensor& a) {
  Vec out(a.size());
  for (Eigen::Index i = 0; i < a.size(); ++i)
    out[i] = a.value()[i] * norm_cdf(a.value()[i]);
  return unary(a, std::move(out), [](TensorNode& self, TensorNode& p) {
    for (Eigen::Index i = 0; i < p.value.size(); ++i) {
      double x = p.value[i];
      p.grad[i] += self.grad[i] * (norm_cdf(x) + x * norm_pdf(x));
    }
  });
}

Tensor sum(const Tensor& a) {
  auto n = make_node({}, Vec::Constant(1, a.value().sum()));
  n->requires_grad = a.requires_grad();
  if (n->requires_grad) {
    n->parents = {a.node()};
    n->backprop = [](TensorNode& self) {
      auto& p = *self.parents[0];
      p.ensure_grad();
      p.grad.array() += self.grad[0];
    };
  }
  return Tensor(n);
}

Tensor mean(const Tensor& a) { return scale(sum(a), 1.0 / double(a.size())); }

// ---- matrix ops -----------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.shape().size() != 2 || b.shape().size() != 2)
    throw DimensionError("matmul: rank-2 tensors required");
  if (a.cols() != b.rows()) throw DimensionError("matmul: inner extents differ");
  Mat out = as_mat(*a.node()) * as_mat(*b.node());
  auto n = make_node({out.rows(), out.cols()},
                     Eigen::Map<const Vec>(out.data(), out.size()));
  n->requires_grad = a.requires_grad() || b.requires_grad();
  if (n->requires_grad) {
    n->parents = {a.node(), b.node()};
    n->backprop = [](TensorNode& self) {
      auto& pa = *self.parents[0];
      auto& pb = *self.parents[1];
      CMatMap g(self.grad.data(), self.rows(), self.cols());
      if (pa.requires_grad) grad_mat(pa) += g * as_mat(pb).transpose();
      if (pb.requires_grad) grad_mat(pb) += as_mat(pa).transpose() * g;
    };
  }
  return Tensor(n);
}

Tensor transpose(const Tensor& a) {
  Mat out = as_mat(*a.node()).transpose();
  auto n = make_node({out.rows(), out.cols()},
                     Eigen::Map<const Vec>(out.data(), out.size()));
  n->requires_grad = a.requires_grad();
  if (n->requires_grad) {
    n->parents = {a.node()};
    n->backprop = [](TensorNode& self) {
      auto& p = *self.parents[0];
      CMatMap g(self.grad.data(), self.rows(), self.cols());
      grad_mat(p) += g.transpose();
    };
  }
  return Tensor(n);
}

Tensor reshape(const Tensor& a, Eigen::Index rows, Eigen::Index cols) {
  if (rows * cols != a.size()) throw DimensionError("reshape: size mismatch");
  auto n = make_node({rows, cols}, a.value());
  n->requires_grad = a.requires_grad();
  if (n->requires_grad) {
    n->parents = {a.node()};
    n->backprop = [](TensorNode& self) {
      auto& p = *self.parents[0];
      p.ensure_grad();
      p.grad += self.grad;
    };
  }
  return Tensor(n);
}

Tensor add_rowvec(const Tensor& m, const Tensor& v) {
  if (m.cols() != v.size()) throw DimensionError("add_rowvec: width mismatch");
  Mat out = as_mat(*m.node()).rowwise() +
            Eigen::Map<const Eigen::RowVectorXd>(v.value().data(), v.size());
  auto n = make_node({out.rows(), out.cols()},
                     Eigen::Map<const Vec>(out.data(), out.size()));
  n->requires_grad = m.requires_grad() || v.requires_grad();
  if (n->requires_grad) {
    n->parents = {m.node(), v.node()};
    n->backprop = [](TensorNode& self) {
      auto& pm = *self.parents[0];
      auto& pv = *self.parents[1];
      CMatMap g(self.grad.data(), self.rows(), self.cols());
      if (pm.requires_grad) grad_mat(pm) += g;
      if (pv.requires_grad) {
        pv.ensure_grad();
        pv.grad += g.colwise().sum().transpose();
      }
    };
  }
  return Tensor(n);
}

Tensor scale_rows(const Tensor& m, const Vec& weights) {
  if (m.rows() != weights.size())
    throw DimensionError("scale_rows: weight count mismatch");
  Mat out = weights.asDiagonal() * as_mat(*m.node());
  auto n = make_node({out.rows(), out.cols()},
                     Eigen::Map<const Vec>(out.data(), out.size()));
  n->requires_grad = m.requires_grad();
  if (n->requires_grad) {
    n->parents = {m.node()};
    Vec w = weights;
    n->backprop = [w](TensorNode& self) {
      auto& p = *self.parents[0];
      CMatMap g(self.grad.data(), self.rows(), self.cols());
      grad_mat(p) += w.asDiagonal() * g;
    };
  }
  return Tensor(n);
}

Tensor slice_cols(const Tensor& a, Eigen::Index start, Eigen::Index n_cols) {
  if (start < 0 || start + n_cols > a.cols())
    throw DimensionError("slice_cols: out of range");
  Mat out = as_mat(*a.node()).middleCols(start, n_cols);
  auto n = make_node({out.rows(), out.cols()},
                     Eigen::Map<const Vec>(out.data(), out.size()));
  n->requires_grad = a.requires_grad();
  if (n->requires_grad) {
    n->parents = {a.node()};
    n->backprop = [start, n_cols](TensorNode& self) {
      auto& p = *self.parents[0];
      CMatMap g(self.grad.data(), self.rows(), self.cols());
      grad_mat(p).middleCols(start, n_cols) += g;
    };
  }
  return Tensor(n);
}

Tensor slice_rows(const Tensor& a, Eigen::Index start, Eigen::Index n_rows) {
  if (start < 0 || start + n_rows > a.rows())
    throw DimensionError("slice_rows: out of range");
  Mat out = as_mat(*a.node()).middleRows(start, n_rows);
  auto n = make_node({out.rows(), out.cols()},
                     Eigen::Map<const Vec>(out.data(), out.size()));
  n->requires_grad = a.requires_grad();
  if (n->requires_grad) {
    n->parents = {a.node()};
    n->backprop = [start, n_rows](TensorNode& self) {
      auto& p = *self.parents[0];
      CMatMap g(self.grad.data(), self.rows(), self.cols());
      grad_mat(p).middleRows(start, n_rows) += g;
    };
  }
  return Tensor(n);
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw DimensionError("concat_cols: empty list");
  Eigen::Index rows = parts[0].rows(), total = 0;
  for (auto& p : parts) {
    if (p.rows() != rows) throw DimensionError("concat_cols: row mismatch");
    total += p.cols();
  }
  Mat out(rows, total);
  Eigen::Index off = 0;
  bool rg = false;
  for (auto& p : parts) {
    out.middleCols(off, p.cols()) = as_mat(*p.node());
    off += p.cols();
    rg = rg || p.requires_grad();
  }
  auto n = make_node({rows, total}, Eigen::Map<const Vec>(out.data(), out.size()));
  n->requires_grad = rg;
  if (rg) {
    std::vector<Eigen::Index> widths;
    for (auto& p : parts) {
      n->parents.push_back(p.node());
      widths.push_back(p.cols());
    }
    n->backprop = [widths](TensorNode& self) {
      CMatMap g(self.grad.data(), self.rows(), self.cols());
      Eigen::Index off = 0;
      for (size_t i = 0; i < self.parents.size(); ++i) {
        auto& p = *self.parents[i];
        if (p.requires_grad) grad_mat(p) += g.middleCols(off, widths[i]);
        off += widths[i];
      }
    };
  }
  return Tensor(n);
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw DimensionError("concat_rows: empty list");
  Eigen::Index cols = parts[0].cols(), total = 0;
  for (auto& p : parts) {
    if (p.cols() != cols) throw DimensionError("concat_rows: column mismatch");
    total += p.rows();
  }
  Mat out(total, cols);
  Eigen::Index off = 0;
  bool rg = false;
  for (auto& p : parts) {
    out.middleRows(off, p.rows()) = as_mat(*p.node());
    off += p.rows();
    rg = rg || p.requires_grad();
  }
  auto n = make_node({total, cols}, Eigen::Map<const Vec>(out.data(), out.size()));
  n->requires_grad = rg;
  if (rg) {
    std::vector<Eigen::Index> heights;
    for (auto& p : parts) {
      n->parents.push_back(p.node());
      heights.push_back(p.rows());
    }
    n->backprop = [heights](TensorNode& self) {
      CMatMap g(self.grad.data(), self.rows(), self.cols());
      Eigen::Index off = 0;
      for (size_t i = 0; i < self.parents.size(); ++i) {
        auto& p = *self.parents[i];
        if (p.requires_grad) grad_mat(p) += g.middleRows(off, heights[i]);
        off += heights[i];
      }
    };
  }
  return Tensor(n);
}

Tensor gather_cols(const Tensor& a, const std::vector<Eigen::Index>& idx) {
  for (auto i : idx)
    if (i < 0 || i >= a.cols()) throw DimensionError("gather_cols: index out of range");
  Mat src = as_mat(*a.node());
  Mat out(a.rows(), Eigen::Index(idx.size()));
  for (size_t j = 0; j < idx.size(); ++j) out.col(Eigen::Index(j)) = src.col(idx[j]);
  auto n = make_node({out.rows(), out.cols()},
                     Eigen::Map<const Vec>(out.data(), out.size()));
  n->requires_grad = a.requires_grad();
  if (n->requires_grad) {
    n->parents = {a.node()};
    auto indices = idx;
    n->backprop = [indices](TensorNode& self) {
      auto& p = *self.parents[0];
      CMatMap g(self.grad.data(), self.rows(), self.cols());
      auto pg = grad_mat(p);
      for (size_t j = 0; j < indices.size(); ++j)
        pg.col(indices[j]) += g.col(Eigen::Index(j));
    };
  }
  return Tensor(n);
}

// ---- softmax / layer norm -------------------------------------------------

Tensor softmax(const Tensor& a, const BoolMat* mask) {
  if (a.shape().size() != 2) throw DimensionError("softmax: rank-2 required");
  Mat x = as_mat(*a.node());
  if (!x.allFinite()) throw NumericError("softmax: non-finite input");
  if (mask && (mask->rows() != x.rows() || mask->cols() != x.cols()))
    throw DimensionError("softmax: mask shape mismatch");
  Mat out = Mat::Zero(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < x.cols(); ++j)
      if (!mask || (*mask)(i, j)) mx = std::max(mx, x(i, j));
    if (!std::isfinite(mx))
      throw NumericError("softmax: row has no permitted entries");
    double denom = 0.0;
    for (Eigen::Index j = 0; j < x.cols(); ++j)
      if (!mask || (*mask)(i, j)) {
        out(i, j) = std::exp(x(i, j) - mx);
        denom += out(i, j);
      }
    out.row(i) /= denom;
  }
  auto n = make_node({out.rows(), out.cols()},
                     Eigen::Map<const Vec>(out.data(), out.size()));
  n->requires_grad = a.requires_grad();
  if (n->requires_grad) {
    n->parents = {a.node()};
    n->backprop = [](TensorNode& self) {
      auto& p = *self.parents[0];
      CMatMap y(self.value.data(), self.rows(), self.cols());
      CMatMap g(self.grad.data(), self.rows(), self.cols());
      auto pg = grad_mat(p);
      for (Eigen::Index i = 0; i < y.rows(); ++i) {
        double dot = y.row(i).dot(g.row(i));
        pg.row(i) += (y.row(i).array() * (g.row(i).array() - dot)).matrix();
      }
    };
  }
  return Tensor(n);
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps) {
  if (x.shape().empty()) throw DimensionError("layer_norm: rank >= 1 required");
  Eigen::Index d = x.cols();
  if (x.shape().size() == 1) d = x.size();
  if (d < 1) throw DimensionError("layer_norm: empty last axis");
  if (gain.size() != d || bias.size() != d)
    throw DimensionError("layer_norm: gain/bias width mismatch");
  Eigen::Index rows = x.size() / d;
  CMatMap xm(x.value().data(), rows, d);
  Mat xhat(rows, d);
  Vec inv_std(rows);
  for (Eigen::Index i = 0; i < rows; ++i) {
    double mu = xm.row(i).mean();
    double var = (xm.row(i).array() - mu).square().mean();
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    xhat.row(i) = (xm.row(i).array() - mu) * inv_std[i];
  }
  Mat out = (xhat.array().rowwise() *
             Eigen::Map<const Eigen::RowVectorXd>(gain.value().data(), d).array())
                .matrix();
  out.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(bias.value().data(), d);
  auto n = make_node(x.shape(), Eigen::Map<const Vec>(out.data(), out.size()));
  n->requires_grad = x.requires_grad() || gain.requires_grad() || bias.requires_grad();
  if (n->requires_grad) {
    n->parents = {x.node(), gain.node(), bias.node()};
    n->backprop = [xhat, inv_std, rows, d](TensorNode& self) {
      auto& px = *self.parents[0];
      auto& pg = *self.parents[1];
      auto& pb = *self.parents[2];
      CMatMap g(self.grad.data(), rows, d);
      Eigen::Map<const Eigen::RowVectorXd> gain_row(pg.value.data(), d);
      if (pg.requires_grad) {
        pg.ensure_grad();
        pg.grad += (g.array() * xhat.array()).colwise().sum().matrix().transpose();
      }
      if (pb.requires_grad) {
        pb.ensure_grad();
        pb.grad += g.colwise().sum().transpose();
      }
      if (px.requires_grad) {
        px.ensure_grad();
        MatMap pxg(px.grad.data(), rows, d);
        for (Eigen::Index i = 0; i < rows; ++i) {
          Eigen::RowVectorXd dy = (g.row(i).array() * gain_row.array()).matrix();
          double m1 = dy.mean();
          double m2 = (dy.array() * xhat.row(i).array()).mean();
          pxg.row(i) += (inv_std[i] *
                         (dy.array() - m1 - xhat.row(i).array() * m2))
                            .matrix();
        }
      }
    };
  }
  return Tensor(n);
}

// ---- multi-head attention -------------------------------------------------

Tensor multi_head_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                            int heads, const AttentionWeights& w,
                            const BoolMat* mask) {
  Eigen::Index d = q.cols();
  if (heads < 1 || d % heads != 0)
    throw ConfigError("attention: model width not divisible by head count");
  if (k.cols() != d || v.cols() != d)
    throw DimensionError("attention: key/value width mismatch");
  if (k.rows() != v.rows())
    throw DimensionError("attention: key/value length mismatch");
  Eigen::Index dh = d / heads;
  Tensor qp = matmul(q, w.wq);
  Tensor kp = matmul(k, w.wk);
  Tensor vp = matmul(v, w.wv);
  double inv_scale = 1.0 / std::sqrt(double(dh));
  std::vector<Tensor> head_out;
  head_out.reserve(size_t(heads));
  for (int h = 0; h < heads; ++h) {
    Tensor qh = slice_cols(qp, h * dh, dh);
    Tensor kh = slice_cols(kp, h * dh, dh);
    Tensor vh = slice_cols(vp, h * dh, dh);
    Tensor scores = scale(matmul(qh, transpose(kh)), inv_scale);
    Tensor attn = softmax(scores, mask);
    head_out.push_back(matmul(attn, vh));
  }
  Tensor cat = concat_cols(head_out);
  return add_rowvec(matmul(cat, w.wo), w.bo);
}

}  // namespace bodyformer
