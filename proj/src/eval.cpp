#include "bodyformer/eval.hpp"

#include "bodyformer/tensor.hpp"

#include <cmath>
#include <sstream>

namespace bodyformer {

GaussianSummary fit_gaussian(const MatX& samples) {
  GaussianSummary g;
  g.mean = samples.colwise().mean();
  MatX centered = samples.rowwise() - g.mean.transpose();
  g.covariance = (centered.transpose() * centered) / double(samples.rows());
  return g;
}

double maje(const MotionSequence& pred, const MotionSequence& truth,
            MajeNorm norm) {
  if (pred.length() != truth.length())
    throw InputError("maje: sequence lengths differ");
  if (!(pred.skeleton == truth.skeleton))
    throw InputError("maje: skeleton mismatch");
  Eigen::Index T = pred.length();
  int J = pred.skeleton.joint_count();
  double acc = 0.0;
  for (Eigen::Index t = 0; t < T; ++t) {
    auto pp = forward_kinematics(pred, t);
    auto pt = forward_kinematics(truth, t);
    for (int j = 0; j < J; ++j) {
      Eigen::Vector3d d = pp[size_t(j)] - pt[size_t(j)];
      acc += norm == MajeNorm::PerAxisAbs ? d.cwiseAbs().sum() : d.norm();
    }
  }
  double denom = double(T) * double(J) * (norm == MajeNorm::PerAxisAbs ? 3.0 : 1.0);
  return acc / denom;
}

namespace {

Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
  if (es.info() != Eigen::Success)
    throw NumericError("fgd: eigendecomposition failed");
  Eigen::VectorXd ev = es.eigenvalues().cwiseMax(0.0);
  return es.eigenvectors() * ev.cwiseSqrt().asDiagonal() *
         es.eigenvectors().transpose();
}

}  // namespace

double fgd(const MatX& pred_features, const MatX& truth_features) {
  if (pred_features.cols() != truth_features.cols())
    throw DimensionError("fgd: feature widths differ");
  GaussianSummary a = fit_gaussian(pred_features);
  GaussianSummary b = fit_gaussian(truth_features);
  Eigen::Index d = pred_features.cols();
  Eigen::MatrixXd reg = 1e-6 * Eigen::MatrixXd::Identity(d, d);
  Eigen::MatrixXd s1 = a.covariance + reg;
  Eigen::MatrixXd s2 = b.covariance + reg;
  // Tr((S1 S2)^{1/2}) computed on the symmetrized product
  Eigen::MatrixXd root1 = psd_sqrt(s1);
  Eigen::MatrixXd cross = psd_sqrt(root1 * s2 * root1);
  if (!cross.allFinite()) throw NumericError("fgd: degenerate covariance");
  double mean_term = (a.mean - b.mean).squaredNorm();
  double trace_term = s1.trace() + s2.trace() - 2.0 * cross.trace();
  return mean_term + trace_term;
}

MatX fgd_feature_extractor(const MotionSequence& motion, Eigen::Index window) {
  Eigen::Index T = motion.length();
  if (window < 1 || window > T)
    throw InputError("fgd_feature_extractor: window outside [1, T]");
  Eigen::Index D = motion.frames.cols();
  MatX pose_vel(T, 2 * D);
  for (Eigen::Index t = 0; t < T; ++t) {
    pose_vel.row(t).head(D) = motion.frames.row(t);
    pose_vel.row(t).tail(D) =
        t > 0 ? (motion.frames.row(t) - motion.frames.row(t - 1)).eval()
              : Eigen::RowVectorXd::Zero(D).eval();
  }
  MatX out(T - window + 1, 2 * D);
  for (Eigen::Index r = 0; r + window <= T; ++r)
    out.row(r) = pose_vel.middleRows(r, window).colwise().mean();
  return out;
}

ModeVelocityReport mode_velocity_report(
    const MotionSequence& motion, const std::vector<ModeSegment>& segments) {
  ModeVelocityReport report;
  report.stats = velocity_norm_sum(motion, segments);
  std::ostringstream os;
  os << "Speaking mode          NS              SS              LS\n";
  os << "Velocity sum  ";
  for (int m = 0; m < kNumModes; ++m) {
    char cell[40];
    std::snprintf(cell, sizeof(cell), "%7.2f +- %-6.2f",
                  report.stats.mean[size_t(m)], report.stats.stddev[size_t(m)]);
    os << cell;
  }
  os << '\n';
  report.table = os.str();
  return report;
}

}  // namespace bodyformer
