#pragma once

#include "quadpose/types.hpp"

#include <string>
#include <vector>

namespace quadpose {

enum class JointGroup { head, body, tail, ear };

const char* to_string(JointGroup g);
JointGroup joint_group_from_string(const std::string& s);

struct JointDef {
  std::string name;
  int parent = -1;                  ///< index of parent joint, -1 for the root
  Vec3 rest_offset = Vec3::Zero();  ///< mm, in the parent frame
  int rot_dof = 3;                  ///< rotational axes 0..3 (0 = fixed); model metadata
  bool has_translation = false;     ///< carries an extra 3-dof translation
  int symmetric_pair = -1;          ///< left/right partner, -1 = lies on the sagittal plane
  JointGroup group = JointGroup::body;

  bool rotates() const { return rot_dof > 0; }
};

/// Kinematic skeleton. Joints are topologically sorted (parent index < joint
/// index) with exactly one root at index 0; symmetric_pair is an involution.
struct Skeleton {
  std::string name;
  std::vector<JointDef> joints;

  int joint_count() const { return static_cast<int>(joints.size()); }
  int dof_count() const;
  int find(const std::string& joint_name) const;  ///< -1 when absent

  /// Throws ValidationError on topology/pair-table violations.
  void validate() const;
};

/// Root transform, per-joint local rotations and per-translating-joint
/// offsets from rest. Rotations are unit quaternions (identity where
/// rot_dof == 0); translations are zero unless the joint has translation dof.
struct Pose {
  Quat root_rotation = Quat::Identity();
  Vec3 root_translation = Vec3::Zero();
  std::vector<Quat> joint_rotations;
  std::vector<Vec3> joint_translations;

  static Pose rest(const Skeleton& skeleton);

  /// Unit-normalizes and flips every quaternion to a non-negative scalar part.
  void canonicalize();
};

struct SkinWeight {
  int joint = 0;
  Scalar weight = 0.0;
};

/// Triangle mesh bound to a skeleton by linear blend skinning.
struct SkinnedMesh {
  MatX3 vertices;  ///< rest positions, mm
  MatX3i triangles;
  std::vector<std::vector<SkinWeight>> skin_weights;  ///< per vertex

  int vertex_count() const { return static_cast<int>(vertices.rows()); }
  void validate(const Skeleton& skeleton) const;
};

struct FkResult {
  std::vector<Isometry> world;  ///< per-joint world transform
  MatX3 positions;              ///< per-joint world position, mm
};

/// Composes local transforms down the hierarchy. The root lands exactly at
/// pose.root_translation; bone i keeps length |rest_offset_i + translation_i|
/// for every rotation assignment.
FkResult forward_kinematics(const Skeleton& skeleton, const Pose& pose);

/// Linear blend skinning: each vertex is the weight-blended image of the
/// joint world transforms relative to the rest transforms.
MatX3 skin_mesh(const SkinnedMesh& mesh, const Skeleton& skeleton, const Pose& pose);

/// Reflects a pose across the sagittal (x = 0) plane, swapping left/right
/// joint identities through the pair table. Involution.
Pose mirror_pose(const Skeleton& skeleton, const Pose& pose);

/// Euclidean joint-to-parent distances; entry 0 (root) is 0.
VecX bone_lengths(const Skeleton& skeleton, const MatX3& joint_positions);

/// Bone lengths of the rest configuration, |rest_offset| per joint.
VecX rest_bone_lengths(const Skeleton& skeleton);

/// Height of the rest skeleton (extent along y over all joints), mm.
Scalar skeleton_height(const Skeleton& skeleton);

}  // namespace quadpose
