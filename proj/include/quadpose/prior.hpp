#pragma once

#include "quadpose/camera.hpp"
#include "quadpose/gplvm.hpp"
#include "quadpose/skeleton.hpp"

#include <array>
#include <optional>
#include <string>
#include <vector>

namespace quadpose {

/// Body parts modelled by the prior, in data order: tail, back-left leg,
/// front-left leg, back-right leg, front-right leg, spine, head. Ears are
/// excluded (83 of the 95 dof).
struct PartLayout {
  struct Part {
    std::string name;
    std::vector<int> rot_joints;    ///< joints contributing a quaternion block
    std::vector<int> trans_joints;  ///< joints contributing a translation block
    int col_start = 0;
    int col_end = 0;
  };
  std::vector<Part> parts;
  int dim = 0;

  static constexpr int kLegFirst = 1, kLegCount = 4;
};

PartLayout make_part_layout(const Skeleton& skeleton);

/// Flattened per-bone quaternions (+ shoulder translations) in part order.
VecX pose_to_vector(const Skeleton& skeleton, const PartLayout& layout, const Pose& pose);

/// Inverse packing; root transform identity, ears at rest, quaternions
/// renormalized/canonicalized.
Pose vector_to_pose(const Skeleton& skeleton, const PartLayout& layout, const VecX& v);

/// Summed per-bone quaternion dissimilarity, sum_b (1 - |q_b . q'_b|).
Scalar pose_dissimilarity(const PartLayout& layout, const VecX& a, const VecX& b);

/// Greedy dedup in frame order: a candidate joins S when its minimum
/// dissimilarity against S exceeds the threshold. Mirrors of the surviving
/// frames are appended afterwards.
std::vector<VecX> dedup_poses(const Skeleton& skeleton, const PartLayout& layout,
                              const std::vector<VecX>& frames, Scalar threshold);

struct TreeDims {
  int leaf = 2;
  int legs = 3;
  int root = 3;
};

/// Trained hierarchy: seven leaves over the pose-vector blocks, a legs
/// aggregate over the four leg-leaf latents, and a root over
/// [tail, legs, spine, head] latents.
struct LatentTree {
  Skeleton skeleton;
  PartLayout layout;
  std::vector<GplvmNode> leaves;
  GplvmNode legs;
  GplvmNode root;
  int frames = 0;
};

LatentTree train_tree(const Skeleton& skeleton, const std::vector<VecX>& training_set,
                      const TreeDims& dims = {});

struct TreeCoords {
  std::vector<VecX> leaf;  ///< one per part
  VecX legs;
  VecX root;
};

/// Root latent -> children latents through the GP chain (Fig.-style
/// initialization of the lower nodes).
TreeCoords propagate_root(const LatentTree& tree, const VecX& root_coord);

/// Stored training latents of frame i.
TreeCoords training_coords(const LatentTree& tree, int frame);

struct DecodeResult {
  Pose pose;
  FkResult fk;
};

/// Leaf posterior means assemble the pose vector; quaternions renormalize;
/// optional override replaces the GP-generated shoulder translations
/// (front-left, front-right).
DecodeResult decode_pose(const LatentTree& tree, const TreeCoords& coords,
                         const Quat& root_rotation, const Vec3& root_translation,
                         const std::optional<std::array<Vec3, 2>>& shoulder_translations = {});

struct JointWeights {
  VecX w1;         ///< static per-joint weights
  VecX w2;         ///< bone-length agreement weights, [0,1]
  VecX effective;  ///< elementwise product; 0 for unpredicted joints
};

/// w2 per joint = min(1, 1/deviation) of its parent bone against the model
/// lengths (deviation 0 -> 1); unpredicted joints get effective weight 0.
JointWeights compute_weights(const Skeleton& skeleton, const VecX& w1,
                             const MatX3& predicted_joints, const std::vector<bool>& predicted,
                             const VecX& model_bone_lengths);

struct FitOptions {
  Scalar lambda2d = 1e-3;
  int kmeans_k = 50;
  int kmeans_restarts = 20;
  std::uint64_t seed = 12345;
  Scalar shoulder_bound_mm = 50.0;
  int stage2_iterations = 120;
  int stage3_iterations = 200;
};

struct FitResult {
  Pose pose;
  FkResult fk;
  TreeCoords coords;
  std::array<Scalar, 3> stage_losses{};  ///< loss after stages 1..3
  Scalar final_loss = 0.0;
  bool divergence_warning = false;
};

/// Staged fit minimizing the weighted 3D + lambda-weighted projected-2D
/// distance: (1) k-means candidates over root training latents with a
/// closed-form weighted rotation about the fixed predicted root, (2) joint
/// root-latent/root-rotation refinement, (3) simultaneous leaves, root
/// rotation/translation and bounded shoulder translations. The loss never
/// increases across stages.
FitResult fit(const LatentTree& tree, const MatX3& predicted_j3d, const MatX2& predicted_j2d,
              const CameraModel& camera, const JointWeights& weights,
              const FitOptions& options = {});

/// The Eq.-style fitting loss for a given pose, exposed for diagnostics.
Scalar fit_loss(const Skeleton& skeleton, const Pose& pose, const MatX3& predicted_j3d,
                const MatX2& predicted_j2d, const CameraModel& camera, const VecX& weights,
                Scalar lambda2d);

void write_latent_tree(const std::string& json_path, const std::string& blob_path,
                       const LatentTree& tree);
LatentTree read_latent_tree(const std::string& json_path);

}  // namespace quadpose
