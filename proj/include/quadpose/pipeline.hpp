#pragma once

#include "quadpose/align.hpp"
#include "quadpose/metrics.hpp"
#include "quadpose/predictor.hpp"
#include "quadpose/prior.hpp"
#include "quadpose/shape.hpp"
#include "quadpose/synth.hpp"
#include "quadpose/io.hpp"

#include <optional>
#include <string>

namespace quadpose {

struct PipelineConfig {
  std::string prior_path;
  std::string shape_model_path;   ///< untouched when known_shape is set
  std::string predictor = "oracle";
  Scalar oracle_sigma_px = 0.0;
  Scalar oracle_sigma_depth = 0.0;
  Scalar lambda2d = 1e-3;
  MatchPolicy match_policy = MatchPolicy::mutual_once;
  bool known_shape = false;
  int occlude_px = 0;             ///< >0: occlusion square side in 256-crop space
  std::uint64_t seed = 7;
  std::string output_dir;         ///< empty: nothing written
  bool overlays = false;
  int shape_components = 4;
};

struct FrameOutput {
  std::string sample_id;
  Pose fitted;
  MatX3 fitted_joints;
  MatX3 raw_joints;
  VecX confidence;
  Scalar loss = 0.0;
  bool ok = false;
  std::string error;
  std::optional<OcclusionRecord> occlusion;
};

struct PipelineResult {
  std::vector<FrameOutput> frames;
  EvalReport raw_report;      ///< predictor output vs ground truth
  EvalReport refined_report;  ///< fitted poses vs ground truth
  VecX aggregated_bone_lengths;
  VecX shape_coefficients;
  Scalar scale_initial = 1.0;
  Scalar scale_refined = 1.0;
  Skeleton fit_skeleton;
};

/// End-to-end run over a dataset: per-frame prediction, optional shape/scale
/// estimation with mesh/cloud alignment, then the staged prior fit per frame.
/// Per-frame failures are recorded and the run continues.
PipelineResult run_pipeline(const PipelineConfig& config, const Dataset& dataset,
                            const LatentTree& prior);

/// Loads the prior from config.prior_path and runs.
PipelineResult run_pipeline(const PipelineConfig& config, const Dataset& dataset);

Json eval_report_to_json(const EvalReport& report);

/// Depth raster as greyscale with the skeleton drawn over it; left-side
/// limbs orange, right-side red, centre bones white (P6 PPM).
void write_overlay_ppm(const std::string& path, const DepthImage& depth,
                       const Skeleton& skeleton, const MatX3& joints_cam);

}  // namespace quadpose
