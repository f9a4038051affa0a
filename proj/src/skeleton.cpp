#include "quadpose/skeleton.hpp"

#include <cmath>
#include <set>

namespace quadpose {

const char* to_string(JointGroup g) {
  switch (g) {
    case JointGroup::head: return "head";
    case JointGroup::body: return "body";
    case JointGroup::tail: return "tail";
    case JointGroup::ear: return "ear";
  }
  return "body";
}

JointGroup joint_group_from_string(const std::string& s) {
  if (s == "head") return JointGroup::head;
  if (s == "body") return JointGroup::body;
  if (s == "tail") return JointGroup::tail;
  if (s == "ear") return JointGroup::ear;
  throw ValidationError("unknown joint group '" + s + "'");
}

int Skeleton::dof_count() const {
  int dof = 0;
  for (const auto& j : joints) {
    dof += j.rot_dof;
    if (j.has_translation) dof += 3;
  }
  // root carries the global translation even when not flagged
  if (!joints.empty() && !joints[0].has_translation) dof += 3;
  return dof;
}

int Skeleton::find(const std::string& joint_name) const {
  for (int i = 0; i < joint_count(); ++i)
    if (joints[i].name == joint_name) return i;
  return -1;
}

void Skeleton::validate() const {
  if (joints.empty()) throw ValidationError("skeleton '" + name + "' has no joints");
  if (joints[0].parent != -1)
    throw ValidationError("joint 0 of '" + name + "' must be the root");
  std::set<std::string> seen;
  for (int i = 0; i < joint_count(); ++i) {
    const auto& j = joints[i];
    if (!seen.insert(j.name).second)
      throw ValidationError("duplicate joint name '" + j.name + "'");
    if (i > 0 && (j.parent < 0 || j.parent >= i))
      throw ValidationError("joint '" + j.name + "' breaks topological order (parent " +
                            std::to_string(j.parent) + ")");
    if (j.rot_dof < 0 || j.rot_dof > 3)
      throw ValidationError("joint '" + j.name + "' has invalid rot_dof");
    if (j.symmetric_pair >= 0) {
      if (j.symmetric_pair >= joint_count())
        throw ValidationError("joint '" + j.name + "' pairs out of range");
      const auto& p = joints[j.symmetric_pair];
      if (p.symmetric_pair != i)
        throw ValidationError("pair table is not an involution at joint '" + j.name + "'");
    }
  }
}

Pose Pose::rest(const Skeleton& skeleton) {
  Pose pose;
  pose.joint_rotations.assign(skeleton.joint_count(), Quat::Identity());
  pose.joint_translations.assign(skeleton.joint_count(), Vec3::Zero());
  return pose;
}

void Pose::canonicalize() {
  root_rotation = canonicalized(root_rotation);
  for (auto& q : joint_rotations) q = canonicalized(q);
}

void SkinnedMesh::validate(const Skeleton& skeleton) const {
  const int nv = vertex_count();
  if (static_cast<int>(skin_weights.size()) != nv)
    throw ValidationError("skin weight count does not match vertex count");
  for (int t = 0; t < triangles.rows(); ++t)
    for (int k = 0; k < 3; ++k)
      if (triangles(t, k) < 0 || triangles(t, k) >= nv)
        throw ValidationError("triangle " + std::to_string(t) + " references invalid vertex");
  for (int v = 0; v < nv; ++v) {
    Scalar sum = 0.0;
    for (const auto& sw : skin_weights[v]) {
      if (sw.joint < 0 || sw.joint >= skeleton.joint_count())
        throw ValidationError("vertex " + std::to_string(v) + " skinned to invalid joint");
      if (sw.weight < 0.0)
        throw ValidationError("vertex " + std::to_string(v) + " has negative skin weight");
      sum += sw.weight;
    }
    if (std::abs(sum - 1.0) > 1e-5)
      throw ValidationError("skin weights of vertex " + std::to_string(v) +
                            " sum to " + std::to_string(sum));
  }
}

static void check_pose_dims(const Skeleton& skeleton, const Pose& pose) {
  const int n = skeleton.joint_count();
  if (static_cast<int>(pose.joint_rotations.size()) != n)
    throw ValidationError("pose has " + std::to_string(pose.joint_rotations.size()) +
                          " rotations for skeleton '" + skeleton.name + "' with " +
                          std::to_string(n) + " joints");
  if (static_cast<int>(pose.joint_translations.size()) != n)
    throw ValidationError("pose has " + std::to_string(pose.joint_translations.size()) +
                          " translations for skeleton '" + skeleton.name + "' with " +
                          std::to_string(n) + " joints");
}

FkResult forward_kinematics(const Skeleton& skeleton, const Pose& pose) {
  check_pose_dims(skeleton, pose);
  const int n = skeleton.joint_count();
  FkResult out;
  out.world.resize(n);
  out.positions.resize(n, 3);
  for (int i = 0; i < n; ++i) {
    const auto& j = skeleton.joints[i];
    Isometry local = Isometry::Identity();
    if (i == 0) {
      local.translate(pose.root_translation + j.rest_offset);
      local.rotate(pose.root_rotation);
    } else {
      local.translate(j.rest_offset + pose.joint_translations[i]);
      local.rotate(pose.joint_rotations[i]);
      local = out.world[j.parent] * local;
    }
    out.world[i] = local;
    out.positions.row(i) = local.translation().transpose();
  }
  return out;
}

/// Rest world transforms (identity pose): pure translations down the chain.
static std::vector<Isometry> rest_transforms(const Skeleton& skeleton) {
  std::vector<Isometry> rest(skeleton.joint_count());
  for (int i = 0; i < skeleton.joint_count(); ++i) {
    Isometry t = Isometry::Identity();
    t.translate(skeleton.joints[i].rest_offset);
    rest[i] = (i == 0) ? t : rest[skeleton.joints[i].parent] * t;
  }
  return rest;
}

MatX3 skin_mesh(const SkinnedMesh& mesh, const Skeleton& skeleton, const Pose& pose) {
  mesh.validate(skeleton);
  const FkResult fk = forward_kinematics(skeleton, pose);
  const std::vector<Isometry> rest = rest_transforms(skeleton);

  std::vector<Eigen::Matrix4d> skin(skeleton.joint_count());
  for (int j = 0; j < skeleton.joint_count(); ++j)
    skin[j] = (fk.world[j] * rest[j].inverse()).matrix();

  MatX3 posed(mesh.vertex_count(), 3);
  for (int v = 0; v < mesh.vertex_count(); ++v) {
    Eigen::Vector4d h(mesh.vertices(v, 0), mesh.vertices(v, 1), mesh.vertices(v, 2), 1.0);
    Eigen::Vector4d acc = Eigen::Vector4d::Zero();
    for (const auto& sw : mesh.skin_weights[v]) acc += sw.weight * (skin[sw.joint] * h);
    posed.row(v) = acc.head<3>().transpose();
  }
  return posed;
}

// Conjugation by the x = 0 reflection: axis (nx,ny,nz) -> (nx,-ny,-nz).
static Quat mirror_quat(const Quat& q) { return Quat(q.w(), q.x(), -q.y(), -q.z()); }

static Vec3 mirror_vec(const Vec3& v) { return Vec3(-v.x(), v.y(), v.z()); }

Pose mirror_pose(const Skeleton& skeleton, const Pose& pose) {
  check_pose_dims(skeleton, pose);
  constexpr Scalar kOffsetEps = 1e-9;
  for (const auto& j : skeleton.joints)
    if (j.symmetric_pair < 0 && std::abs(j.rest_offset.x()) > kOffsetEps && j.parent >= 0)
      throw ValidationError("joint '" + j.name +
                            "' is off the sagittal plane but has no symmetric pair");

  Pose out = pose;
  out.root_rotation = mirror_quat(pose.root_rotation);
  out.root_translation = mirror_vec(pose.root_translation);
  for (int i = 0; i < skeleton.joint_count(); ++i) {
    const int src = skeleton.joints[i].symmetric_pair >= 0 ? skeleton.joints[i].symmetric_pair : i;
    out.joint_rotations[i] = mirror_quat(pose.joint_rotations[src]);
    out.joint_translations[i] = mirror_vec(pose.joint_translations[src]);
  }
  return out;
}

VecX bone_lengths(const Skeleton& skeleton, const MatX3& joint_positions) {
  if (joint_positions.rows() != skeleton.joint_count())
    throw ValidationError("joint position count does not match skeleton");
  VecX lengths = VecX::Zero(skeleton.joint_count());
  for (int i = 1; i < skeleton.joint_count(); ++i)
    lengths[i] =
        (joint_positions.row(i) - joint_positions.row(skeleton.joints[i].parent)).norm();
  return lengths;
}

VecX rest_bone_lengths(const Skeleton& skeleton) {
  VecX lengths = VecX::Zero(skeleton.joint_count());
  for (int i = 1; i < skeleton.joint_count(); ++i)
    lengths[i] = skeleton.joints[i].rest_offset.norm();
  return lengths;
}

Scalar skeleton_height(const Skeleton& skeleton) {
  const FkResult fk = forward_kinematics(skeleton, Pose::rest(skeleton));
  return fk.positions.col(1).maxCoeff() - fk.positions.col(1).minCoeff();
}

}  // namespace quadpose
