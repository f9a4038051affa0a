#include "quadpose/canine.hpp"

#include <cmath>
#include <random>

namespace quadpose {

namespace {

struct JointSpec {
  const char* name;
  const char* parent;  // "" for root
  Scalar ox, oy, oz;   // rest offset, mm
  int rot_dof;
  bool trans;
  const char* pair;  // "" = sagittal
  JointGroup group;
};

// Depth-first template. x = dog's left, y = up, z = nose direction; origin at
// the pelvis. The 95-dof split (root 6, shoulders/ear bases 6, hinge-style
// joints 1-2) is a reconstruction; rot_dof is model metadata and every
// rotating joint still poses with a full quaternion.
const JointSpec kDogJoints[] = {
    {"root", "", 0, 0, 0, 3, false, "", JointGroup::body},
    {"spine_mid", "root", 0, 15, 170, 3, false, "", JointGroup::body},
    {"spine_chest", "spine_mid", 0, 10, 190, 3, false, "", JointGroup::body},

    {"leg_fl_shoulder", "spine_chest", 72, -25, 55, 3, true, "leg_fr_shoulder", JointGroup::body},
    {"leg_fl_elbow", "leg_fl_shoulder", 3, -155, -15, 1, false, "leg_fr_elbow", JointGroup::body},
    {"leg_fl_wrist", "leg_fl_elbow", 0, -150, -20, 2, false, "leg_fr_wrist", JointGroup::body},
    {"leg_fl_paw", "leg_fl_wrist", 0, -125, 10, 1, false, "leg_fr_paw", JointGroup::body},
    {"leg_fl_toe", "leg_fl_paw", 0, -48, 55, 1, false, "leg_fr_toe", JointGroup::body},
    {"leg_fl_toe_end", "leg_fl_toe", 0, -12, 40, 0, false, "leg_fr_toe_end", JointGroup::body},

    {"leg_fr_shoulder", "spine_chest", -72, -25, 55, 3, true, "leg_fl_shoulder", JointGroup::body},
    {"leg_fr_elbow", "leg_fr_shoulder", -3, -155, -15, 1, false, "leg_fl_elbow", JointGroup::body},
    {"leg_fr_wrist", "leg_fr_elbow", 0, -150, -20, 2, false, "leg_fl_wrist", JointGroup::body},
    {"leg_fr_paw", "leg_fr_wrist", 0, -125, 10, 1, false, "leg_fl_paw", JointGroup::body},
    {"leg_fr_toe", "leg_fr_paw", 0, -48, 55, 1, false, "leg_fl_toe", JointGroup::body},
    {"leg_fr_toe_end", "leg_fr_toe", 0, -12, 40, 0, false, "leg_fl_toe_end", JointGroup::body},

    {"neck_1", "spine_chest", 0, 55, 135, 3, false, "", JointGroup::head},
    {"neck_2", "neck_1", 0, 60, 75, 3, false, "", JointGroup::head},
    {"neck_3", "neck_2", 0, 55, 60, 3, false, "", JointGroup::head},
    {"head", "neck_3", 0, 45, 55, 3, false, "", JointGroup::head},
    {"nose", "head", 0, -20, 105, 1, false, "", JointGroup::head},
    {"nose_end", "nose", 0, -8, 38, 0, false, "", JointGroup::head},

    {"ear_l_base", "head", 42, 48, -22, 3, true, "ear_r_base", JointGroup::ear},
    {"ear_l_tip", "ear_l_base", 14, 60, -18, 0, false, "ear_r_tip", JointGroup::ear},
    {"ear_r_base", "head", -42, 48, -22, 3, true, "ear_l_base", JointGroup::ear},
    {"ear_r_tip", "ear_r_base", -14, 60, -18, 0, false, "ear_l_tip", JointGroup::ear},

    {"leg_bl_hip", "root", 62, -20, -35, 3, false, "leg_br_hip", JointGroup::body},
    {"leg_bl_knee", "leg_bl_hip", 3, -185, 25, 1, false, "leg_br_knee", JointGroup::body},
    {"leg_bl_ankle", "leg_bl_knee", 0, -160, -70, 1, false, "leg_br_ankle", JointGroup::body},
    {"leg_bl_paw", "leg_bl_ankle", 0, -95, 20, 1, false, "leg_br_paw", JointGroup::body},
    {"leg_bl_toe", "leg_bl_paw", 0, -32, 58, 0, false, "leg_br_toe", JointGroup::body},

    {"leg_br_hip", "root", -62, -20, -35, 3, false, "leg_bl_hip", JointGroup::body},
    {"leg_br_knee", "leg_br_hip", -3, -185, 25, 1, false, "leg_bl_knee", JointGroup::body},
    {"leg_br_ankle", "leg_br_knee", 0, -160, -70, 1, false, "leg_bl_ankle", JointGroup::body},
    {"leg_br_paw", "leg_br_ankle", 0, -95, 20, 1, false, "leg_bl_paw", JointGroup::body},
    {"leg_br_toe", "leg_br_paw", 0, -32, 58, 0, false, "leg_bl_toe", JointGroup::body},

    {"tail_1", "root", 0, 28, -160, 3, false, "", JointGroup::tail},
    {"tail_2", "tail_1", 0, -2, -58, 3, false, "", JointGroup::tail},
    {"tail_3", "tail_2", 0, -6, -56, 3, false, "", JointGroup::tail},
    {"tail_4", "tail_3", 0, -9, -54, 3, false, "", JointGroup::tail},
    {"tail_5", "tail_4", 0, -11, -52, 3, false, "", JointGroup::tail},
    {"tail_6", "tail_5", 0, -12, -50, 3, false, "", JointGroup::tail},
    {"tail_7", "tail_6", 0, -13, -48, 3, false, "", JointGroup::tail},
    {"tail_8", "tail_7", 0, -13, -46, 3, false, "", JointGroup::tail},
};

// Bound to the joint order above; root and spine weighted highest, limb ends
// above limb bases, ear tips zeroed (ears are outside the pose prior).
const Scalar kJointWeights[] = {5, 5, 5,                         //
                                0.8, 0.5, 0.8, 1, 1, 1,          //
                                0.8, 0.5, 0.8, 1, 1, 1,          //
                                0.8, 0.5, 0.5, 0.8, 1, 1,        //
                                0.1, 0, 0.1, 0,                  //
                                0.8, 1, 1, 1, 1,                 //
                                0.8, 1, 1, 1, 1,                 //
                                1, 1, 1, 1, 1, 1, 1, 1};

}  // namespace

Skeleton make_canonical_skeleton() {
  Skeleton s;
  s.name = "canine43";
  for (const auto& spec : kDogJoints) {
    JointDef j;
    j.name = spec.name;
    j.parent = spec.parent[0] ? s.find(spec.parent) : -1;
    j.rest_offset = Vec3(spec.ox, spec.oy, spec.oz);
    j.rot_dof = spec.rot_dof;
    j.has_translation = spec.trans;
    j.group = spec.group;
    s.joints.push_back(j);
  }
  // pair table needs all names present first
  for (int i = 0; i < s.joint_count(); ++i) {
    const char* pair = kDogJoints[i].pair;
    s.joints[i].symmetric_pair = pair[0] ? s.find(pair) : -1;
  }
  s.validate();
  return s;
}

VecX canonical_joint_weights() {
  VecX w(static_cast<int>(std::size(kJointWeights)));
  for (int i = 0; i < w.size(); ++i) w[i] = kJointWeights[i];
  return w;
}

int head_joint(const Skeleton& skeleton) {
  const int idx = skeleton.find("head");
  if (idx < 0) throw ValidationError("skeleton has no 'head' joint");
  return idx;
}

namespace {

Vec3 scaled_offset(const JointDef& j, const std::string& name, const DogProportions& p) {
  Vec3 o = j.rest_offset;
  const bool leg = name.rfind("leg_", 0) == 0;
  const bool tail = name.rfind("tail_", 0) == 0;
  const bool headish = name.rfind("neck", 0) == 0 || name == "head" ||
                       name.rfind("nose", 0) == 0 || name.rfind("ear_", 0) == 0;
  o.x() *= p.width;
  if (leg) {
    o.y() *= p.legs;
  } else if (headish) {
    o *= p.head;
  } else {
    o.z() *= p.torso;
    if (tail) o.y() *= p.torso;
  }
  return o;
}

Scalar bone_radius(const std::string& name, const DogProportions& p) {
  Scalar r = 60.0;
  if (name.rfind("leg_", 0) == 0) {
    r = name.find("shoulder") != std::string::npos || name.find("hip") != std::string::npos
            ? 45.0
            : 24.0;
  } else if (name.rfind("tail_", 0) == 0) {
    r = 16.0;
  } else if (name.rfind("ear_", 0) == 0) {
    r = 10.0;
  } else if (name.rfind("nose", 0) == 0) {
    r = 26.0;
  } else if (name == "head") {
    r = 48.0;
  } else if (name.rfind("neck", 0) == 0) {
    r = 42.0;
  } else if (name.rfind("spine", 0) == 0) {
    r = 85.0;
  }
  return r * p.width;
}

// Open tube of `rings` 8-gon rings around the bone parent->joint. The segment
// follows the parent joint's frame; the child-end ring blends half into the
// child so the surface bends at the joint.
void append_bone_tube(SkinnedMesh& mesh, const MatX3& rest_positions, int joint, int parent,
                      Scalar radius) {
  constexpr int kRingVerts = 8;
  constexpr int kRings = 4;
  const Vec3 a = rest_positions.row(parent).transpose();
  const Vec3 b = rest_positions.row(joint).transpose();
  Vec3 axis = b - a;
  const Scalar len = axis.norm();
  if (len < 1e-9) axis = Vec3::UnitY();
  else axis /= len;
  Vec3 u = axis.cross(Vec3::UnitY());
  if (u.norm() < 1e-6) u = axis.cross(Vec3::UnitZ());
  u.normalize();
  const Vec3 v = axis.cross(u).normalized();

  const int base = mesh.vertex_count();
  const int old_tris = static_cast<int>(mesh.triangles.rows());
  mesh.vertices.conservativeResize(base + kRings * kRingVerts, 3);
  mesh.triangles.conservativeResize(old_tris + (kRings - 1) * kRingVerts * 2, 3);

  for (int r = 0; r < kRings; ++r) {
    const Scalar s = static_cast<Scalar>(r) / (kRings - 1);
    const Vec3 center = a + s * (b - a);
    const Scalar taper = 1.0 - 0.15 * s;
    for (int k = 0; k < kRingVerts; ++k) {
      const Scalar ang = 2.0 * M_PI * k / kRingVerts;
      const Vec3 pos = center + taper * radius * (std::cos(ang) * u + std::sin(ang) * v);
      mesh.vertices.row(base + r * kRingVerts + k) = pos.transpose();
      std::vector<SkinWeight> w;
      if (r + 1 == kRings)
        w = {{parent, 0.5}, {joint, 0.5}};
      else
        w = {{parent, 1.0}};
      mesh.skin_weights.push_back(std::move(w));
    }
  }
  int t = old_tris;
  for (int r = 0; r + 1 < kRings; ++r) {
    for (int k = 0; k < kRingVerts; ++k) {
      const int k1 = (k + 1) % kRingVerts;
      const int i00 = base + r * kRingVerts + k;
      const int i01 = base + r * kRingVerts + k1;
      const int i10 = base + (r + 1) * kRingVerts + k;
      const int i11 = base + (r + 1) * kRingVerts + k1;
      mesh.triangles.row(t++) << i00, i10, i01;
      mesh.triangles.row(t++) << i01, i10, i11;
    }
  }
}

Quat small_rotation(const Vec3& axis_angle) {
  const Scalar angle = axis_angle.norm();
  if (angle < 1e-12) return Quat::Identity();
  return Quat(Eigen::AngleAxis<Scalar>(angle, axis_angle / angle));
}

}  // namespace

DogModel make_dog(const DogProportions& p) {
  DogModel dog;
  dog.skeleton = make_canonical_skeleton();
  dog.skeleton.name = "canine43";
  for (auto& j : dog.skeleton.joints) j.rest_offset = scaled_offset(j, j.name, p);

  const FkResult fk = forward_kinematics(dog.skeleton, Pose::rest(dog.skeleton));
  dog.mesh.vertices.resize(0, 3);
  dog.mesh.triangles.resize(0, 3);
  for (int i = 1; i < dog.skeleton.joint_count(); ++i)
    append_bone_tube(dog.mesh, fk.positions, i, dog.skeleton.joints[i].parent,
                     bone_radius(dog.skeleton.joints[i].name, p));
  dog.mesh.validate(dog.skeleton);

  // neutral stance: limbs splayed by the stance parameter, a touch of toe-out
  dog.neutral_pose = Pose::rest(dog.skeleton);
  const Scalar s = p.stance;
  for (const char* name : {"leg_fl_shoulder", "leg_bl_hip"}) {
    const int j = dog.skeleton.find(name);
    dog.neutral_pose.joint_rotations[j] = small_rotation(Vec3(0, 0, -s));
  }
  for (const char* name : {"leg_fr_shoulder", "leg_br_hip"}) {
    const int j = dog.skeleton.find(name);
    dog.neutral_pose.joint_rotations[j] = small_rotation(Vec3(0, 0, s));
  }
  const int neck = dog.skeleton.find("neck_2");
  dog.neutral_pose.joint_rotations[neck] = small_rotation(Vec3(0.4 * s, 0, 0));
  dog.neutral_pose.canonicalize();
  return dog;
}

Pose gait_pose(const Skeleton& skeleton, Scalar t, const GaitParams& g) {
  Pose pose = Pose::rest(skeleton);
  const Scalar w = 2.0 * M_PI * g.frequency_hz;
  const Scalar A = g.swing_amplitude;
  const Scalar B = g.flex_amplitude;
  const Scalar C = g.sway_amplitude;
  // second incommensurate component keeps the trajectory from ever repeating
  const Scalar s2 = g.style_drift;
  auto osc = [&](Scalar phase, Scalar detune) {
    return std::sin(w * t + phase) + s2 * std::sin(0.5373 * w * t + phase * 0.7 + detune);
  };

  struct Leg {
    const char* upper;
    const char* mid;
    const char* lower;
    const char* paw;
    Scalar phase;
  };
  // lateral-sequence walk phasing
  const Leg legs[] = {
      {"leg_fl_shoulder", "leg_fl_elbow", "leg_fl_wrist", "leg_fl_paw", 0.5 * M_PI},
      {"leg_fr_shoulder", "leg_fr_elbow", "leg_fr_wrist", "leg_fr_paw", 1.5 * M_PI},
      {"leg_bl_hip", "leg_bl_knee", "leg_bl_ankle", "leg_bl_paw", 0.0},
      {"leg_br_hip", "leg_br_knee", "leg_br_ankle", "leg_br_paw", M_PI},
  };
  for (const auto& leg : legs) {
    pose.joint_rotations[skeleton.find(leg.upper)] =
        small_rotation(Vec3(A * 0.45 * osc(leg.phase, 0.3), 0, 0));
    pose.joint_rotations[skeleton.find(leg.mid)] =
        small_rotation(Vec3(B * 0.35 * (1.0 + osc(leg.phase + 0.9, 1.1)) * 0.5, 0, 0));
    pose.joint_rotations[skeleton.find(leg.lower)] =
        small_rotation(Vec3(-B * 0.3 * (1.0 + osc(leg.phase + M_PI / 2, 2.0)) * 0.5, 0, 0));
    pose.joint_rotations[skeleton.find(leg.paw)] =
        small_rotation(Vec3(B * 0.3 * osc(leg.phase + 2.2, 0.6), 0, 0));
  }

  pose.joint_rotations[skeleton.find("spine_mid")] =
      small_rotation(Vec3(0, C * 0.4 * osc(0.0, 0.5), 0));
  pose.joint_rotations[skeleton.find("spine_chest")] =
      small_rotation(Vec3(0, -C * 0.3 * osc(0.4, 1.7), 0));
  pose.joint_rotations[skeleton.find("neck_2")] =
      small_rotation(Vec3(C * 0.25 * std::sin(2.0 * w * t), 0, 0));
  pose.joint_rotations[skeleton.find("head")] =
      small_rotation(Vec3(C * 0.2 * std::sin(2.0 * w * t + 1.1), 0, 0));
  for (int k = 1; k <= 8; ++k) {
    const int j = skeleton.find("tail_" + std::to_string(k));
    pose.joint_rotations[j] = small_rotation(Vec3(0, C * 0.5 * osc(0.55 * k, 0.9 * k), 0));
  }

  // shoulder bob and a light ear flutter through the translation dof
  const Scalar bob = 8.0 * std::sin(2.0 * w * t);
  pose.joint_translations[skeleton.find("leg_fl_shoulder")] = Vec3(0, bob, 0);
  pose.joint_translations[skeleton.find("leg_fr_shoulder")] = Vec3(0, -bob, 0);
  pose.joint_translations[skeleton.find("ear_l_base")] = Vec3(0, 3.0 * std::sin(3.0 * w * t), 0);
  pose.joint_translations[skeleton.find("ear_r_base")] =
      Vec3(0, 3.0 * std::sin(3.0 * w * t + 0.5), 0);

  pose.root_translation = Vec3(0, g.bob_mm * std::sin(2.0 * w * t), g.speed_mm_s * t);
  pose.root_rotation = small_rotation(Vec3(0, 0.05 * std::sin(w * t + 0.2), 0));
  pose.canonicalize();
  return pose;
}

std::vector<Pose> gait_sequence(const Skeleton& skeleton, int frames, Scalar fps,
                                const GaitParams& params) {
  std::vector<Pose> out;
  out.reserve(frames);
  for (int i = 0; i < frames; ++i) out.push_back(gait_pose(skeleton, i / fps, params));
  return out;
}

std::vector<DogModel> make_shape_corpus(int count, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<Scalar> u(-1.0, 1.0);
  std::vector<DogModel> corpus;
  corpus.reserve(count);
  for (int i = 0; i < count; ++i) {
    DogProportions p;
    p.torso = 1.0 + 0.28 * u(rng);
    p.legs = 1.0 + 0.30 * u(rng);
    p.head = 1.0 + 0.22 * u(rng);
    p.width = 1.0 + 0.18 * u(rng);
    p.stance = 0.10 * (u(rng) + 1.0) * 0.5;
    corpus.push_back(make_dog(p));
  }
  return corpus;
}

}  // namespace quadpose
