#ifndef BODYFORMER_MOTION_HPP
#define BODYFORMER_MOTION_HPP

#include "bodyformer/features.hpp"  // ModeSegment, MatX, errors

#include <Eigen/Dense>

#include <array>
#include <map>
#include <string>
#include <vector>

namespace bodyformer {

struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Skeleton {
  std::vector<std::string> joints;
  std::vector<int> parent;  // -1 for the root (joint 0)
  std::vector<Eigen::Vector3d> offsets;

  int joint_count() const { return int(joints.size()); }
  bool operator==(const Skeleton& other) const {
    return joints == other.joints && parent == other.parent &&
           [&] {
             for (size_t i = 0; i < offsets.size(); ++i)
               if (offsets[i] != other.offsets[i]) return false;
             return true;
           }();
  }
};

/// Per-frame pose vectors; each joint contributes a 6-block (the first two
/// columns of its rotation matrix).
struct MotionSequence {
  MatX frames;  // T x 6J
  int fps = kFps;
  Skeleton skeleton;

  Eigen::Index length() const { return frames.rows(); }
};

// ---- 6D rotation representation -------------------------------------------

/// First two columns of R, concatenated.  Input must be a proper rotation.
Eigen::Matrix<double, 6, 1> rotmat_to_6d(const Eigen::Matrix3d& R);

/// Gram-Schmidt decoding: b1 = normalize(v[0:3]),
/// b2 = normalize(v[3:6] - (b1.v[3:6]) b1), b3 = b1 x b2.
Eigen::Matrix3d sixd_to_rotmat(const Eigen::Matrix<double, 6, 1>& v);

/// Pose row helpers over the T x 6J layout.
Eigen::Matrix3d pose_joint_rotation(const MotionSequence& motion,
                                    Eigen::Index frame, int joint);

/// Per-mode (mean, std) across segments of the per-segment cumulative
/// velocity sum_t ||y_t - y_{t-1}||_2.  The delta crossing into a segment is
/// attributed to that segment; the global first frame contributes nothing.
struct VelocityStats {
  std::array<double, kNumModes> mean{};
  std::array<double, kNumModes> stddev{};
  std::array<int, kNumModes> segment_count{};
};
VelocityStats velocity_norm_sum(const MotionSequence& motion,
                                const std::vector<ModeSegment>& segments);

// ---- forward kinematics ---------------------------------------------------

/// Global joint positions for one frame (root at the origin; translation is
/// not part of the pose vector).
std::vector<Eigen::Vector3d> forward_kinematics(const MotionSequence& motion,
                                                Eigen::Index frame);

// ---- I/O ------------------------------------------------------------------

/// Native motion container: a binary bundle holding the skeleton descriptor
/// (JSON text) and the T x 6J frame matrix.  Round trips are bit exact.
void write_motion(const MotionSequence& motion, const std::string& path);
MotionSequence read_motion(const std::string& path);

std::string skeleton_to_json(const Skeleton& s);
Skeleton skeleton_from_json(const std::string& text);

/// BVH-subset importer: HIERARCHY / MOTION with per-joint Euler rotation
/// channels.  Root translation channels are parsed and discarded.
/// euler_order names the intrinsic application order, e.g. "ZYX".
MotionSequence read_bvh(const std::string& path,
                        const std::string& euler_order = "ZYX");

}  // namespace bodyformer

#endif
