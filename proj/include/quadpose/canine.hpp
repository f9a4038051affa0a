#pragma once

#include "quadpose/skeleton.hpp"

#include <cstdint>
#include <vector>

namespace quadpose {

/// Multiplicative proportions applied to the canonical template. 1.0
/// everywhere reproduces the template dog.
struct DogProportions {
  Scalar torso = 1.0;   ///< spine/tail length along z
  Scalar legs = 1.0;    ///< leg drop along y
  Scalar head = 1.0;    ///< head-chain offsets
  Scalar width = 1.0;   ///< lateral spread and girth
  Scalar stance = 0.0;  ///< neutral limb splay, radians
};

struct DogModel {
  Skeleton skeleton;
  SkinnedMesh mesh;
  Pose neutral_pose;  ///< rotations posing the common (rest) pose into the neutral stance
};

/// The canonical 43-joint, 95-dof dog skeleton (depth-first joint order,
/// millimetres). Shoulders and ear bases carry translation dof.
Skeleton make_canonical_skeleton();

/// Static per-joint fitting weights bound to the canonical joint order.
VecX canonical_joint_weights();

/// Index of the head joint; the bone ending at it is the unit for
/// head-normalized metrics.
int head_joint(const Skeleton& skeleton);

/// Template skeleton/mesh scaled by the given proportions. All dogs built
/// this way share mesh topology and skin weights.
DogModel make_dog(const DogProportions& proportions);

struct GaitParams {
  Scalar frequency_hz = 2.2;
  Scalar swing_amplitude = 1.8;    ///< rad, hip/shoulder swing scale
  Scalar flex_amplitude = 1.45;    ///< rad, knee/elbow flexion scale
  Scalar sway_amplitude = 1.0;     ///< rad, spine/tail/head sway scale
  Scalar style_drift = 0.55;       ///< weight of the incommensurate component
  Scalar speed_mm_s = 600.0;
  Scalar bob_mm = 12.0;
};

/// Procedural walk/trot pose at time t (seconds). Deterministic, closed form.
Pose gait_pose(const Skeleton& skeleton, Scalar t, const GaitParams& params = {});

/// Convenience: n frames sampled at fps.
std::vector<Pose> gait_sequence(const Skeleton& skeleton, int frames, Scalar fps = 15.0,
                                const GaitParams& params = {});

/// Procedural surrogate corpus: dogs with varied proportions (seeded), shared
/// topology. Stands in for the unavailable 18-dog corpus.
std::vector<DogModel> make_shape_corpus(int count, std::uint64_t seed);

}  // namespace quadpose
