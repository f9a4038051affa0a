#pragma once

#include "quadpose/camera.hpp"
#include "quadpose/skeleton.hpp"

#include <map>
#include <string>
#include <vector>

namespace quadpose {

/// Mean per-joint position error; with align_root the prediction is first
/// translated so the roots coincide. Input units are preserved.
Scalar mpjpe(const MatX3& pred, const MatX3& gt, bool align_root);

struct SimilarityTransform {
  Scalar scale = 1.0;
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  MatX3 apply(const MatX3& pts) const;
};

struct PaResult {
  MatX3 aligned;
  SimilarityTransform transform;
};

/// Least-squares similarity alignment (rotation, translation, uniform scale,
/// no reflection) of pred onto gt. Throws on degenerate (collinear) input.
PaResult pa_align(const MatX3& pred, const MatX3& gt);

/// MPJPE after Procrustes alignment.
Scalar pa_mpjpe(const MatX3& pred, const MatX3& gt);

/// Fraction of joints within alpha * sqrt(mask_area) pixels.
Scalar pck2d(const MatX2& pred, const MatX2& gt, Scalar mask_area, Scalar alpha = 0.05);

/// Both skeletons scaled so the gt head bone spans 2 units; fraction of
/// joints within distance 1.
Scalar pck3d(const MatX3& pred, const MatX3& gt, const Skeleton& skeleton);

/// pck3d after Procrustes alignment of pred (including scale).
Scalar pa_pck3d(const MatX3& pred, const MatX3& gt, const Skeleton& skeleton);

/// Scale factor normalizing the gt head bone to 2 units.
Scalar head_scale(const MatX3& gt, const Skeleton& skeleton);

struct FrameEval {
  MatX3 pred3d;  ///< camera-space mm
  MatX3 gt3d;
  CameraModel camera;
  Scalar mask_area = 0.0;  ///< non-zero pixel count of the frame's mask
};

struct GroupMetrics {
  Scalar mpjpe = 0.0;      ///< root-aligned, head-normalized units
  Scalar pa_mpjpe = 0.0;   ///< head-normalized units
  Scalar pck2d = 0.0;
  Scalar pck3d = 0.0;
  Scalar pa_pck3d = 0.0;
  int joint_count = 0;
};

/// Per-group metrics (All, Head, Body, Tail; ears count in All only) plus
/// per-frame series and the head-bone normalization factors used.
struct EvalReport {
  std::map<std::string, GroupMetrics> groups;
  std::vector<std::map<std::string, GroupMetrics>> per_frame;
  std::vector<Scalar> head_scales;
};

EvalReport evaluate_sequence(const std::vector<FrameEval>& frames, const Skeleton& skeleton);

/// Aligned-column text rendering of a report's sequence means.
std::string format_report(const EvalReport& report);

}  // namespace quadpose
