#include "bodyformer/motion.hpp"

#include "bodyformer/tensor.hpp"

#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>

using namespace bodyformer;

namespace {

Skeleton two_joint_skeleton() {
  Skeleton s;
  s.joints = {"root", "child"};
  s.parent = {-1, 0};
  s.offsets = {Eigen::Vector3d::Zero(), Eigen::Vector3d(0, 1, 0)};
  return s;
}

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

Eigen::Matrix3d rot_z(double rad) {
  return Eigen::AngleAxisd(rad, Eigen::Vector3d::UnitZ()).toRotationMatrix();
}

}  // namespace

TEST_CASE("identity rotation maps to the canonical 6D representation") {
  Eigen::Matrix<double, 6, 1> r = rotmat_to_6d(Eigen::Matrix3d::Identity());
  Eigen::Matrix<double, 6, 1> expect;
  expect << 1, 0, 0, 0, 1, 0;
  CHECK((r - expect).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("90 degrees about z maps to its first two columns") {
  Eigen::Matrix<double, 6, 1> r = rotmat_to_6d(rot_z(M_PI / 2.0));
  // Columns of R: (0,1,0) and (-1,0,0), stacked column-major.
  Eigen::Matrix<double, 6, 1> expect;
  expect << 0, 1, 0, -1, 0, 0;
  CHECK((r - expect).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("random rotations survive the 6D round trip") {
  std::mt19937_64 rng(31);
  std::normal_distribution<double> nd(0.0, 1.0);
  for (int i = 0; i < 1000; ++i) {
    Eigen::Quaterniond q(nd(rng), nd(rng), nd(rng), nd(rng));
    q.normalize();
    Eigen::Matrix3d R = q.toRotationMatrix();
    Eigen::Matrix3d back = sixd_to_rotmat(rotmat_to_6d(R));
    CHECK((back - R).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("6D decoding is invariant to positive scaling") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> nd(0.0, 1.0);
  Eigen::Quaterniond q(nd(rng), nd(rng), nd(rng), nd(rng));
  q.normalize();
  Eigen::Matrix<double, 6, 1> r = rotmat_to_6d(q.toRotationMatrix());
  Eigen::Matrix3d a = sixd_to_rotmat(r);
  Eigen::Matrix3d b = sixd_to_rotmat(3.7 * r);
  CHECK((a - b).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("non-orthonormal input to the 6D encoder is rejected") {
  Eigen::Matrix3d bad = 2.0 * Eigen::Matrix3d::Identity();
  CHECK_THROWS_AS(rotmat_to_6d(bad), InputError);
  Eigen::Matrix3d reflect = Eigen::Matrix3d::Identity();
  reflect(2, 2) = -1.0;  // det = -1
  CHECK_THROWS_AS(rotmat_to_6d(reflect), InputError);
}

TEST_CASE("degenerate 6D vector cannot be decoded") {
  Eigen::Matrix<double, 6, 1> zero = Eigen::Matrix<double, 6, 1>::Zero();
  CHECK_THROWS_AS(sixd_to_rotmat(zero), NumericError);
}

TEST_CASE("velocity: hand oracle on a two-frame step") {
  MotionSequence m;
  m.skeleton = two_joint_skeleton();
  m.frames = MatX::Zero(3, 12);
  // Identity pose everywhere, then bump one coordinate by 2 at frame 1.
  for (Eigen::Index t = 0; t < 3; ++t)
    for (int j = 0; j < 2; ++j) {
      m.frames(t, j * 6 + 0) = 1.0;
      m.frames(t, j * 6 + 4) = 1.0;
    }
  m.frames(1, 2) += 2.0;
  ModeSegment seg;
  seg.mode = SpeakingMode::SS;
  seg.start_frame = 0;
  seg.length = 3;
  VelocityStats v = velocity_norm_sum(m, {seg});
  // Deltas: frame1-frame0 has norm 2, frame2-frame1 has norm 2; sum = 4.
  CHECK(v.mean[int(SpeakingMode::SS)] == doctest::Approx(4.0).epsilon(1e-12));
  CHECK(v.segment_count[int(SpeakingMode::SS)] == 1);
  CHECK(v.segment_count[int(SpeakingMode::NS)] == 0);
}

TEST_CASE("velocity: first frame of the sequence contributes no delta") {
  MotionSequence m;
  m.skeleton = two_joint_skeleton();
  m.frames = MatX::Ones(2, 12);
  ModeSegment seg;
  seg.mode = SpeakingMode::NS;
  seg.start_frame = 0;
  seg.length = 2;
  VelocityStats v = velocity_norm_sum(m, {seg});
  CHECK(v.mean[int(SpeakingMode::NS)] == 0.0);
  CHECK(v.stddev[int(SpeakingMode::NS)] == 0.0);
}

TEST_CASE("forward kinematics: identity pose stacks offsets") {
  MotionSequence m;
  m.skeleton = two_joint_skeleton();
  m.frames = MatX::Zero(1, 12);
  for (int j = 0; j < 2; ++j) {
    m.frames(0, j * 6 + 0) = 1.0;
    m.frames(0, j * 6 + 4) = 1.0;
  }
  auto pos = forward_kinematics(m, 0);
  CHECK(pos[0].norm() == 0.0);
  CHECK((pos[1] - Eigen::Vector3d(0, 1, 0)).norm() < 1e-15);
}

TEST_CASE("forward kinematics: root rotation carries the child") {
  MotionSequence m;
  m.skeleton = two_joint_skeleton();
  m.frames = MatX::Zero(1, 12);
  Eigen::Matrix<double, 6, 1> rz = rotmat_to_6d(rot_z(M_PI / 2.0));
  m.frames.block(0, 0, 1, 6) = rz.transpose();
  Eigen::Matrix<double, 6, 1> id = rotmat_to_6d(Eigen::Matrix3d::Identity());
  m.frames.block(0, 6, 1, 6) = id.transpose();
  auto pos = forward_kinematics(m, 0);
  // Offset (0,1,0) rotated 90 degrees about z lands at (-1,0,0).
  CHECK((pos[1] - Eigen::Vector3d(-1, 0, 0)).norm() < 1e-12);
}

TEST_CASE("motion container round trips bit-exactly") {
  std::mt19937_64 rng(19);
  std::normal_distribution<double> nd(0.0, 1.0);
  MotionSequence m;
  m.skeleton = two_joint_skeleton();
  m.frames = MatX(5, 12);
  for (Eigen::Index i = 0; i < m.frames.rows(); ++i)
    for (Eigen::Index j = 0; j < m.frames.cols(); ++j) m.frames(i, j) = nd(rng);
  std::string p = temp_path("bf_test_motion.motion");
  write_motion(m, p);
  MotionSequence back = read_motion(p);
  CHECK((back.frames - m.frames).cwiseAbs().maxCoeff() == 0.0);
  CHECK(back.skeleton == m.skeleton);
  CHECK(back.fps == m.fps);
  std::remove(p.c_str());
}

TEST_CASE("truncated motion file is rejected") {
  MotionSequence m;
  m.skeleton = two_joint_skeleton();
  m.frames = MatX::Ones(4, 12);
  std::string p = temp_path("bf_test_trunc.motion");
  write_motion(m, p);
  auto size = std::filesystem::file_size(p);
  std::filesystem::resize_file(p, size / 2);
  CHECK_THROWS(read_motion(p));
  std::remove(p.c_str());
}

TEST_CASE("skeleton JSON round trip") {
  Skeleton s = two_joint_skeleton();
  Skeleton back = skeleton_from_json(skeleton_to_json(s));
  CHECK(back == s);
}

TEST_CASE("skeleton JSON with a forward-referencing parent is rejected") {
  Skeleton s;
  s.joints = {"a", "b"};
  s.parent = {1, -1};  // parent after child
  s.offsets = {Eigen::Vector3d::Zero(), Eigen::Vector3d::Zero()};
  CHECK_THROWS(skeleton_from_json(skeleton_to_json(s)));
}

TEST_CASE("BVH import matches a hand-converted two-joint clip") {
  std::string p = temp_path("bf_test_clip.bvh");
  {
    std::ofstream os(p);
    os << "HIERARCHY\n"
          "ROOT hips\n"
          "{\n"
          "  OFFSET 0 0 0\n"
          "  CHANNELS 6 Xposition Yposition Zposition Zrotation Yrotation "
          "Xrotation\n"
          "  JOINT spine\n"
          "  {\n"
          "    OFFSET 0 1 0\n"
          "    CHANNELS 3 Zrotation Yrotation Xrotation\n"
          "    End Site\n"
          "    {\n"
          "      OFFSET 0 0.5 0\n"
          "    }\n"
          "  }\n"
          "}\n"
          "MOTION\n"
          "Frames: 2\n"
          "Frame Time: 0.05\n"
          "0 0 0 0 0 0 0 0 0\n"
          "1 2 3 90 0 0 45 0 0\n";
  }
  MotionSequence m = read_bvh(p);
  CHECK(m.fps == 20);
  REQUIRE(m.skeleton.joint_count() == 2);
  CHECK(m.skeleton.joints[1] == "spine");
  CHECK((m.skeleton.offsets[1] - Eigen::Vector3d(0, 1, 0)).norm() == 0.0);
  REQUIRE(m.frames.rows() == 2);
  REQUIRE(m.frames.cols() == 12);
  // Frame 0: both joints identity.
  Eigen::Matrix<double, 6, 1> id6 = rotmat_to_6d(Eigen::Matrix3d::Identity());
  CHECK((m.frames.block(0, 0, 1, 6).transpose() - id6).cwiseAbs().maxCoeff() <
        1e-12);
  // Frame 1: hips = Rz(90 deg) (positions discarded), spine = Rz(45 deg).
  Eigen::Matrix<double, 6, 1> hips = rotmat_to_6d(rot_z(M_PI / 2.0));
  Eigen::Matrix<double, 6, 1> spine = rotmat_to_6d(rot_z(M_PI / 4.0));
  CHECK((m.frames.block(1, 0, 1, 6).transpose() - hips).cwiseAbs().maxCoeff() <
        1e-12);
  CHECK((m.frames.block(1, 6, 1, 6).transpose() - spine).cwiseAbs().maxCoeff() <
        1e-12);
  std::remove(p.c_str());
}

TEST_CASE("malformed BVH is rejected") {
  std::string p = temp_path("bf_test_bad.bvh");
  {
    std::ofstream os(p);
    os << "HIERARCHY\nROOT hips\n{\n  OFFSET 0 0 0\n";
  }
  CHECK_THROWS_AS(read_bvh(p), ParseError);
  std::remove(p.c_str());
}
