#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "quadpose/canine.hpp"
#include "quadpose/io.hpp"
#include "quadpose/skeleton.hpp"

#include <random>

using namespace quadpose;

namespace {

Skeleton three_joint_chain() {
  Skeleton s;
  s.name = "chain3";
  for (int i = 0; i < 3; ++i) {
    JointDef j;
    j.name = "j" + std::to_string(i);
    j.parent = i - 1;
    j.rest_offset = i == 0 ? Vec3::Zero() : Vec3(0, 100, 0);
    s.joints.push_back(j);
  }
  s.validate();
  return s;
}

Quat random_unit_quat(std::mt19937_64& rng) {
  std::normal_distribution<Scalar> g(0.0, 1.0);
  Quat q(g(rng), g(rng), g(rng), g(rng));
  q.normalize();
  return q;
}

Pose random_pose(const Skeleton& s, std::mt19937_64& rng) {
  std::uniform_real_distribution<Scalar> u(-30.0, 30.0);
  Pose p = Pose::rest(s);
  p.root_rotation = random_unit_quat(rng);
  p.root_translation = Vec3(u(rng), u(rng), u(rng)) * 10.0;
  for (int i = 1; i < s.joint_count(); ++i) {
    if (s.joints[i].rotates()) p.joint_rotations[i] = random_unit_quat(rng);
    if (s.joints[i].has_translation) p.joint_translations[i] = Vec3(u(rng), u(rng), u(rng));
  }
  p.canonicalize();
  return p;
}

// brute-force oracle: explicit 4x4 matrix chain per joint
MatX3 matrix_chain_positions(const Skeleton& s, const Pose& pose) {
  std::vector<Eigen::Matrix4d> world(s.joint_count());
  for (int i = 0; i < s.joint_count(); ++i) {
    Eigen::Matrix4d local = Eigen::Matrix4d::Identity();
    const Quat q = i == 0 ? pose.root_rotation : pose.joint_rotations[i];
    const Vec3 t = i == 0 ? pose.root_translation + s.joints[i].rest_offset
                          : s.joints[i].rest_offset + pose.joint_translations[i];
    local.block<3, 3>(0, 0) = q.toRotationMatrix();
    local.block<3, 1>(0, 3) = t;
    world[i] = i == 0 ? local : world[s.joints[i].parent] * local;
  }
  MatX3 out(s.joint_count(), 3);
  for (int i = 0; i < s.joint_count(); ++i) out.row(i) = world[i].block<3, 1>(0, 3).transpose();
  return out;
}

}  // namespace

TEST_CASE("canonical skeleton structure") {
  const Skeleton s = make_canonical_skeleton();
  CHECK(s.joint_count() == 43);
  CHECK(s.dof_count() == 95);
  // ears carry 12 dof; the prior models the remaining 83
  int ear_dof = 0;
  for (const auto& j : s.joints)
    if (j.group == JointGroup::ear) ear_dof += j.rot_dof + (j.has_translation ? 3 : 0);
  CHECK(ear_dof == 12);
  CHECK(s.dof_count() - ear_dof == 83);

  // pair table is an involution and geometrically consistent
  for (int i = 0; i < s.joint_count(); ++i) {
    const int p = s.joints[i].symmetric_pair;
    if (p < 0) {
      CHECK(std::abs(s.joints[i].rest_offset.x()) < 1e-12);
      continue;
    }
    CHECK(s.joints[p].symmetric_pair == i);
    CHECK(s.joints[p].rest_offset.x() == doctest::Approx(-s.joints[i].rest_offset.x()));
    CHECK(s.joints[p].rest_offset.y() == doctest::Approx(s.joints[i].rest_offset.y()));
  }

  // shoulders and ear bases carry the translation dof
  for (const char* name : {"leg_fl_shoulder", "leg_fr_shoulder", "ear_l_base", "ear_r_base"})
    CHECK(s.joints[s.find(name)].has_translation);

  const VecX w1 = canonical_joint_weights();
  REQUIRE(w1.size() == 43);
  CHECK(w1[0] == 5.0);
  CHECK(w1[s.find("ear_l_tip")] == 0.0);
  CHECK(w1[s.find("ear_r_base")] == doctest::Approx(0.1));
  CHECK(w1[s.find("tail_8")] == 1.0);
}

TEST_CASE("fk identity pose lands on cumulative rest offsets") {
  const Skeleton s = make_canonical_skeleton();
  const FkResult fk = forward_kinematics(s, Pose::rest(s));
  for (int i = 0; i < s.joint_count(); ++i) {
    Vec3 expect = Vec3::Zero();
    for (int j = i; j >= 0; j = s.joints[j].parent) expect += s.joints[j].rest_offset;
    CHECK((fk.positions.row(i).transpose() - expect).norm() < 1e-12);
  }
}

TEST_CASE("fk root translation shifts every joint rigidly") {
  const Skeleton s = make_canonical_skeleton();
  Pose p = Pose::rest(s);
  const FkResult base = forward_kinematics(s, p);
  p.root_translation = Vec3(100, 0, 0);
  const FkResult moved = forward_kinematics(s, p);
  CHECK(moved.positions.row(0).x() == doctest::Approx(100.0));
  for (int i = 0; i < s.joint_count(); ++i)
    CHECK((moved.positions.row(i) - base.positions.row(i) - Eigen::RowVector3d(100, 0, 0))
              .norm() < 1e-12);
}

TEST_CASE("fk three-joint chain against the matrix-chain oracle") {
  const Skeleton s = three_joint_chain();
  Pose p = Pose::rest(s);
  p.joint_rotations[1] = Quat(Eigen::AngleAxis<Scalar>(M_PI / 2.0, Vec3::UnitZ()));
  const FkResult fk = forward_kinematics(s, p);
  // hand computation: joint1 at (0,100,0); the rotated +y offset points to -x
  CHECK((fk.positions.row(2).transpose() - Vec3(-100, 100, 0)).norm() < 1e-9);

  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    const Pose rp = random_pose(s, rng);
    CHECK((forward_kinematics(s, rp).positions - matrix_chain_positions(s, rp)).norm() < 1e-9);
  }
  const Skeleton dog = make_canonical_skeleton();
  for (int trial = 0; trial < 20; ++trial) {
    const Pose rp = random_pose(dog, rng);
    CHECK((forward_kinematics(dog, rp).positions - matrix_chain_positions(dog, rp)).norm() <
          1e-8);
  }
}

TEST_CASE("fk dimension mismatch names the skeleton") {
  const Skeleton s = make_canonical_skeleton();
  Pose p = Pose::rest(s);
  p.joint_rotations.pop_back();
  CHECK_THROWS_AS(forward_kinematics(s, p), ValidationError);
}

TEST_CASE("fk bone lengths are rotation invariant") {
  const Skeleton s = make_canonical_skeleton();
  const VecX rest = rest_bone_lengths(s);
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 1000; ++trial) {
    Pose p = random_pose(s, rng);
    p.joint_translations.assign(s.joint_count(), Vec3::Zero());  // keep rest lengths
    const VecX lengths = bone_lengths(s, forward_kinematics(s, p).positions);
    for (int i = 1; i < s.joint_count(); ++i)
      CHECK(std::abs(lengths[i] - rest[i]) <= 1e-6 * rest[i]);
  }
  // translated joints change length by exactly the offset composition
  Pose p = Pose::rest(s);
  const int sh = s.find("leg_fl_shoulder");
  p.joint_translations[sh] = Vec3(10, 0, 0);
  const VecX lengths = bone_lengths(s, forward_kinematics(s, p).positions);
  CHECK(lengths[sh] ==
        doctest::Approx((s.joints[sh].rest_offset + Vec3(10, 0, 0)).norm()));
}

TEST_CASE("skinning identity and blend cases") {
  const Skeleton s = three_joint_chain();
  SkinnedMesh mesh;
  mesh.vertices.resize(3, 3);
  mesh.vertices << 10, 0, 0, 10, 100, 0, 10, 150, 0;
  mesh.triangles.resize(1, 3);
  mesh.triangles << 0, 1, 2;
  mesh.skin_weights = {{{0, 1.0}}, {{1, 1.0}}, {{1, 0.5}, {2, 0.5}}};

  CHECK((skin_mesh(mesh, s, Pose::rest(s)) - mesh.vertices).norm() < 1e-12);

  Pose p = Pose::rest(s);
  p.joint_rotations[1] = Quat(Eigen::AngleAxis<Scalar>(M_PI / 2.0, Vec3::UnitZ()));
  const MatX3 posed = skin_mesh(mesh, s, p);

  // weight-1 vertex moves rigidly with joint 1's transform
  const FkResult fk = forward_kinematics(s, p);
  const Isometry rest1 = Isometry(Eigen::Translation<Scalar, 3>(0, 100, 0));
  const Vec3 rigid = fk.world[1] * (rest1.inverse() * Vec3(10, 100, 0));
  CHECK((posed.row(1).transpose() - rigid).norm() < 1e-12);

  // 0.5/0.5 vertex is the midpoint of its two rigid images
  const Isometry rest2 = Isometry(Eigen::Translation<Scalar, 3>(0, 200, 0));
  const Vec3 img1 = fk.world[1] * (rest1.inverse() * Vec3(10, 150, 0));
  const Vec3 img2 = fk.world[2] * (rest2.inverse() * Vec3(10, 150, 0));
  CHECK((posed.row(2).transpose() - 0.5 * (img1 + img2)).norm() < 1e-12);
}

TEST_CASE("mirror_pose is an involution and reflects fk positions") {
  const Skeleton s = make_canonical_skeleton();
  std::mt19937_64 rng(23);
  for (int trial = 0; trial < 25; ++trial) {
    const Pose p = random_pose(s, rng);
    const Pose mm = mirror_pose(s, mirror_pose(s, p));
    CHECK((mm.root_rotation.coeffs() - p.root_rotation.coeffs()).norm() < 1e-9);
    for (int i = 0; i < s.joint_count(); ++i) {
      CHECK((mm.joint_rotations[i].coeffs() - p.joint_rotations[i].coeffs()).norm() < 1e-9);
      CHECK((mm.joint_translations[i] - p.joint_translations[i]).norm() < 1e-9);
    }

    // mirrored pose's fk equals the x-reflection with identities swapped
    const MatX3 pos = forward_kinematics(s, p).positions;
    const MatX3 mirrored = forward_kinematics(s, mirror_pose(s, p)).positions;
    for (int i = 0; i < s.joint_count(); ++i) {
      const int src = s.joints[i].symmetric_pair >= 0 ? s.joints[i].symmetric_pair : i;
      const Vec3 expect(-pos(src, 0), pos(src, 1), pos(src, 2));
      CHECK((mirrored.row(i).transpose() - expect).norm() < 1e-8);
    }
  }

  // a symmetric standing pose is a fixed point
  const Pose rest = Pose::rest(s);
  const Pose mirrored = mirror_pose(s, rest);
  for (int i = 0; i < s.joint_count(); ++i)
    CHECK((mirrored.joint_rotations[i].coeffs() - rest.joint_rotations[i].coeffs()).norm() <
          1e-12);

  // raising the left front leg raises the right one after mirroring
  Pose raised = Pose::rest(s);
  raised.joint_rotations[s.find("leg_fl_shoulder")] =
      Quat(Eigen::AngleAxis<Scalar>(0.8, Vec3::UnitX()));
  const Pose swapped = mirror_pose(s, raised);
  CHECK(std::abs(swapped.joint_rotations[s.find("leg_fr_shoulder")].angularDistance(
                     Quat::Identity()) -
                 0.8) < 1e-9);
  CHECK(swapped.joint_rotations[s.find("leg_fl_shoulder")].angularDistance(Quat::Identity()) <
        1e-9);
}

TEST_CASE("pose canonical form round-trips through json bit-identically") {
  const Skeleton s = make_canonical_skeleton();
  std::mt19937_64 rng(31);
  Pose p = random_pose(s, rng);
  p.canonicalize();
  for (const auto& q : p.joint_rotations) CHECK(q.w() >= 0.0);
  const Pose back = pose_from_json(Json::parse(to_json(p).dump()));
  CHECK(back.root_rotation.coeffs() == p.root_rotation.coeffs());
  for (int i = 0; i < s.joint_count(); ++i) {
    CHECK(back.joint_rotations[i].coeffs() == p.joint_rotations[i].coeffs());
    CHECK(back.joint_translations[i] == p.joint_translations[i]);
  }
}

TEST_CASE("skeleton json and shipped data files agree with the constructor") {
  const Skeleton s = make_canonical_skeleton();
  const Skeleton back = skeleton_from_json(Json::parse(to_json(s).dump()));
  CHECK(back.joint_count() == s.joint_count());
  for (int i = 0; i < s.joint_count(); ++i) {
    CHECK(back.joints[i].name == s.joints[i].name);
    CHECK(back.joints[i].parent == s.joints[i].parent);
    CHECK(back.joints[i].rot_dof == s.joints[i].rot_dof);
    CHECK((back.joints[i].rest_offset - s.joints[i].rest_offset).norm() == 0.0);
  }

  const Skeleton shipped =
      load_skeleton(std::string(QUADPOSE_SOURCE_DIR) + "/data/dog_skeleton.json");
  CHECK(shipped.joint_count() == s.joint_count());
  CHECK(shipped.dof_count() == 95);
  for (int i = 0; i < s.joint_count(); ++i)
    CHECK(shipped.joints[i].name == s.joints[i].name);

  const Json w1 = load_json(std::string(QUADPOSE_SOURCE_DIR) + "/data/joint_weights_w1.json");
  const VecX w = canonical_joint_weights();
  for (int i = 0; i < s.joint_count(); ++i)
    CHECK(w1.at("weights").at(s.joints[i].name).get<Scalar>() == w[i]);
}
