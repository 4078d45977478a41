#ifndef BODYFORMER_EVAL_HPP
#define BODYFORMER_EVAL_HPP

#include "bodyformer/motion.hpp"

#include <string>

namespace bodyformer {

struct GaussianSummary {
  Eigen::VectorXd mean;
  Eigen::MatrixXd covariance;  // symmetric PSD
};

GaussianSummary fit_gaussian(const MatX& samples);

enum class MajeNorm { PerAxisAbs, PerJointL2 };

/// Mean absolute joint-position error after forward kinematics on both
/// sequences.  PerAxisAbs averages |dp| over T*J*3; PerJointL2 averages the
/// per-joint position distance over T*J.
double maje(const MotionSequence& pred, const MotionSequence& truth,
            MajeNorm norm = MajeNorm::PerAxisAbs);

/// Frechet distance between Gaussians fitted to the two feature sets:
/// ||mu1-mu2||^2 + Tr(S1 + S2 - 2 (S1 S2)^{1/2}), square root via
/// eigendecomposition of the symmetrized product, 1e-6*I regularization.
double fgd(const MatX& pred_features, const MatX& truth_features);

/// Statistical stand-in for a learned feature space: sliding windows of
/// (pose, velocity) averaged over the window.  Row count T - window + 1.
MatX fgd_feature_extractor(const MotionSequence& motion, Eigen::Index window);

struct ModeVelocityReport {
  VelocityStats stats;
  /// Aligned table, columns ordered NS, SS, LS.
  std::string table;
};

ModeVelocityReport mode_velocity_report(const MotionSequence& motion,
                                        const std::vector<ModeSegment>& segments);

}  // namespace bodyformer

#endif
