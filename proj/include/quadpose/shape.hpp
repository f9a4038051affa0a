#pragma once

#include "quadpose/canine.hpp"
#include "quadpose/skeleton.hpp"

#include <string>
#include <vector>

namespace quadpose {

/// PCA over concatenated (mesh vertices, bone lengths, neutral-pose joint
/// rotations), standardized per block. Exemplars share topology; the shipped
/// corpus is a procedurally generated surrogate for the original dogs.
struct ShapeModel {
  VecX mean;                ///< over the concatenated feature vector
  MatX components;          ///< rank x dim, orthonormal rows, variance-ordered
  VecX variances;
  Vec3 block_scales;        ///< per-block standardization scale
  int vertex_count = 0;
  int joint_count = 0;

  // shared topology and rest-direction template, carried with the model
  MatX3i triangles;
  std::vector<std::vector<SkinWeight>> skin_weights;
  Skeleton template_skeleton;

  int rank() const { return static_cast<int>(components.rows()); }
  int vertex_block() const { return 3 * vertex_count; }
  int length_block() const { return joint_count - 1; }  ///< bones, root excluded
  int rotation_block() const { return 4 * joint_count; }
  int dim() const { return vertex_block() + length_block() + rotation_block(); }
};

struct ShapeExemplar {
  SkinnedMesh mesh;
  Skeleton skeleton;
  Pose neutral_pose;
};

/// Builds the model via SVD of the standardized corpus matrix. Throws on
/// topology mismatch.
ShapeModel build_shape_model(const std::vector<ShapeExemplar>& corpus);

struct ShapePrediction {
  SkinnedMesh mesh;
  Skeleton skeleton;
  Pose neutral_pose;
  VecX coefficients;
};

/// Coefficients of the first n components minimizing squared bone-length
/// error against the targets (linear least squares), then full
/// reconstruction. Rest offsets come from template directions scaled to the
/// predicted lengths; quaternions are renormalized.
ShapePrediction predict_shape(const ShapeModel& model, const VecX& target_bone_lengths,
                              int n_components = 4);

/// Robust height-extent ratio (10th-90th percentile along y) of cloud over
/// mesh. Needs at least 100 cloud points.
Scalar estimate_scale(const MatX3& pointcloud, const MatX3& mesh_vertices);

void write_shape_model(const std::string& json_path, const std::string& blob_path,
                       const ShapeModel& model);
ShapeModel read_shape_model(const std::string& json_path);

}  // namespace quadpose
