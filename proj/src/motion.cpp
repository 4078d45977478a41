#include "bodyformer/motion.hpp"

#include "bodyformer/checkpoint.hpp"
#include "bodyformer/tensor.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <fstream>
#include <sstream>

namespace bodyformer {

// ---- 6D representation ----------------------------------------------------

Eigen::Matrix<double, 6, 1> rotmat_to_6d(const Eigen::Matrix3d& R) {
  if ((R.transpose() * R - Eigen::Matrix3d::Identity()).norm() > 1e-6 ||
      R.determinant() < 0.0)
    throw InputError("rotmat_to_6d: input is not a rotation matrix");
  Eigen::Matrix<double, 6, 1> v;
  v.head<3>() = R.col(0);
  v.tail<3>() = R.col(1);
  return v;
}

Eigen::Matrix3d sixd_to_rotmat(const Eigen::Matrix<double, 6, 1>& v) {
  Eigen::Vector3d a1 = v.head<3>();
  Eigen::Vector3d a2 = v.tail<3>();
  double n1 = a1.norm();
  if (n1 < 1e-12) throw NumericError("sixd_to_rotmat: degenerate first column");
  Eigen::Vector3d b1 = a1 / n1;
  Eigen::Vector3d r2 = a2 - b1.dot(a2) * b1;
  double n2 = r2.norm();
  if (n2 < 1e-12)
    throw NumericError("sixd_to_rotmat: columns parallel or second zero");
  Eigen::Vector3d b2 = r2 / n2;
  Eigen::Matrix3d R;
  R.col(0) = b1;
  R.col(1) = b2;
  R.col(2) = b1.cross(b2);
  return R;
}

Eigen::Matrix3d pose_joint_rotation(const MotionSequence& motion,
                                    Eigen::Index frame, int joint) {
  Eigen::Matrix<double, 6, 1> v =
      motion.frames.row(frame).segment<6>(6 * joint).transpose();
  return sixd_to_rotmat(v);
}

// ---- velocity statistics --------------------------------------------------

VelocityStats velocity_norm_sum(const MotionSequence& motion,
                                const std::vector<ModeSegment>& segments) {
  std::array<std::vector<double>, kNumModes> sums;
  for (const auto& seg : segments) {
    if (seg.start_frame + seg.length > motion.length())
      throw InputError("velocity_norm_sum: segment exceeds motion length");
    double acc = 0.0;
    for (Eigen::Index t = seg.start_frame; t < seg.start_frame + seg.length;
         ++t) {
      if (t == 0) continue;  // no previous global frame
      acc += (motion.frames.row(t) - motion.frames.row(t - 1)).norm();
    }
    sums[size_t(int(seg.mode))].push_back(acc);
  }
  VelocityStats stats;
  for (int m = 0; m < kNumModes; ++m) {
    const auto& xs = sums[size_t(m)];
    stats.segment_count[size_t(m)] = int(xs.size());
    if (xs.empty()) continue;
    double mean = 0.0;
    for (double x : xs) mean += x;
    mean /= double(xs.size());
    double var = 0.0;
    for (double x : xs) var += (x - mean) * (x - mean);
    var /= double(xs.size());
    stats.mean[size_t(m)] = mean;
    stats.stddev[size_t(m)] = std::sqrt(var);
  }
  return stats;
}

// ---- forward kinematics ---------------------------------------------------

std::vector<Eigen::Vector3d> forward_kinematics(const MotionSequence& motion,
                                                Eigen::Index frame) {
  int J = motion.skeleton.joint_count();
  std::vector<Eigen::Vector3d> pos{size_t(J)};
  std::vector<Eigen::Matrix3d> glob{size_t(J)};
  for (int j = 0; j < J; ++j) {
    Eigen::Matrix3d local = pose_joint_rotation(motion, frame, j);
    int p = motion.skeleton.parent[size_t(j)];
    if (p < 0) {
      pos[size_t(j)] = Eigen::Vector3d::Zero();
      glob[size_t(j)] = local;
    } else {
      pos[size_t(j)] =
          pos[size_t(p)] + glob[size_t(p)] * motion.skeleton.offsets[size_t(j)];
      glob[size_t(j)] = glob[size_t(p)] * local;
    }
  }
  return pos;
}

// ---- native format --------------------------------------------------------

std::string skeleton_to_json(const Skeleton& s) {
  nlohmann::json j;
  j["joints"] = s.joints;
  j["parent"] = s.parent;
  auto& off = j["offsets"] = nlohmann::json::array();
  for (const auto& o : s.offsets) off.push_back({o.x(), o.y(), o.z()});
  return j.dump();
}

Skeleton skeleton_from_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  Skeleton s;
  s.joints = j.at("joints").get<std::vector<std::string>>();
  s.parent = j.at("parent").get<std::vector<int>>();
  for (const auto& o : j.at("offsets"))
    s.offsets.emplace_back(o[0].get<double>(), o[1].get<double>(),
                           o[2].get<double>());
  if (s.parent.empty() || s.parent[0] != -1)
    throw ParseError("skeleton: joint 0 must be the root");
  for (size_t i = 1; i < s.parent.size(); ++i)
    if (s.parent[i] < 0 || size_t(s.parent[i]) >= i)
      throw ParseError("skeleton: parent indices must form a tree");
  return s;
}

void write_motion(const MotionSequence& motion, const std::string& path) {
  ArrayBundle b;
  b.meta["kind"] = "motion";
  b.meta["fps"] = std::to_string(motion.fps);
  b.meta["skeleton"] = skeleton_to_json(motion.skeleton);
  b.put("frames", motion.frames);
  write_bundle(path, b);
}

MotionSequence read_motion(const std::string& path) {
  ArrayBundle b = read_bundle(path);
  MotionSequence m;
  m.frames = b.mat("frames");
  m.fps = std::stoi(b.meta.at("fps"));
  m.skeleton = skeleton_from_json(b.meta.at("skeleton"));
  if (m.frames.cols() != 6 * m.skeleton.joint_count())
    throw ParseError("motion: frame width does not match skeleton in " + path);
  return m;
}

// ---- BVH subset -----------------------------------------------------------

namespace {

Eigen::Matrix3d axis_rotation(char axis, double degrees) {
  double r = degrees * M_PI / 180.0;
  switch (axis) {
    case 'X': return Eigen::AngleAxisd(r, Eigen::Vector3d::UnitX()).matrix();
    case 'Y': return Eigen::AngleAxisd(r, Eigen::Vector3d::UnitY()).matrix();
    case 'Z': return Eigen::AngleAxisd(r, Eigen::Vector3d::UnitZ()).matrix();
  }
  throw ParseError(std::string("bvh: unknown rotation axis ") + axis);
}

struct BvhJoint {
  std::string name;
  int parent = -1;
  Eigen::Vector3d offset = Eigen::Vector3d::Zero();
  std::vector<std::string> channels;
};

}  // namespace

MotionSequence read_bvh(const std::string& path, const std::string& euler_order) {
  std::ifstream is(path);
  if (!is) throw ParseError("bvh: cannot open " + path);
  std::vector<std::string> tokens;
  {
    std::string tok;
    while (is >> tok) tokens.push_back(tok);
  }
  size_t i = 0;
  auto next = [&]() -> const std::string& {
    if (i >= tokens.size()) throw ParseError("bvh: unexpected end of file");
    return tokens[i++];
  };
  auto expect = [&](const char* want) {
    if (next() != want)
      throw ParseError(std::string("bvh: expected ") + want + " near token " +
                       std::to_string(i));
  };

  expect("HIERARCHY");
  std::vector<BvhJoint> joints;
  std::vector<int> stack;
  while (i < tokens.size()) {
    const std::string& tok = next();
    if (tok == "ROOT" || tok == "JOINT") {
      BvhJoint j;
      j.name = next();
      j.parent = stack.empty() ? -1 : stack.back();
      expect("{");
      expect("OFFSET");
      for (int k = 0; k < 3; ++k) j.offset[k] = std::stod(next());
      expect("CHANNELS");
      int nch = std::stoi(next());
      for (int k = 0; k < nch; ++k) j.channels.push_back(next());
      joints.push_back(j);
      stack.push_back(int(joints.size()) - 1);
    } else if (tok == "End") {
      expect("Site");
      expect("{");
      expect("OFFSET");
      for (int k = 0; k < 3; ++k) next();
      expect("}");
    } else if (tok == "}") {
      if (stack.empty()) throw ParseError("bvh: unbalanced braces");
      stack.pop_back();
    } else if (tok == "MOTION") {
      break;
    } else {
      throw ParseError("bvh: unexpected token " + tok);
    }
  }
  if (joints.empty()) throw ParseError("bvh: no joints in " + path);

  expect("Frames:");
  Eigen::Index n_frames = std::stol(next());
  expect("Frame");
  expect("Time:");
  double frame_time = std::stod(next());

  int total_channels = 0;
  for (const auto& j : joints) total_channels += int(j.channels.size());

  MotionSequence m;
  m.fps = int(std::lround(1.0 / frame_time));
  m.skeleton.joints.reserve(joints.size());
  for (const auto& j : joints) {
    m.skeleton.joints.push_back(j.name);
    m.skeleton.parent.push_back(j.parent);
    m.skeleton.offsets.push_back(j.offset);
  }
  int J = int(joints.size());
  m.frames.resize(n_frames, 6 * J);
  for (Eigen::Index f = 0; f < n_frames; ++f) {
    std::vector<double> vals(std::size_t(total_channels), 0.0);
    for (auto& v : vals) v = std::stod(next());
    size_t c = 0;
    for (int j = 0; j < J; ++j) {
      std::map<char, double> angle;
      for (const auto& ch : joints[size_t(j)].channels) {
        double v = vals[c++];
        if (ch.size() == 9 && ch.substr(1) == "rotation") angle[ch[0]] = v;
        // position channels are parsed but not part of the pose vector
      }
      Eigen::Matrix3d R = Eigen::Matrix3d::Identity();
      for (char axis : euler_order)
        R = R * axis_rotation(axis, angle.count(axis) ? angle[axis] : 0.0);
      m.frames.row(f).segment<6>(6 * j) = rotmat_to_6d(R).transpose();
    }
  }
  return m;
}

}  // namespace bodyformer
