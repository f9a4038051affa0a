#pragma once

#include "quadpose/synth.hpp"

#include <memory>
#include <optional>
#include <string>

namespace quadpose {

struct PredictedJoints {
  MatX2 j2d_full;
  MatX3 j3d_cam;
  VecX confidence;              ///< [0,1]
  std::vector<bool> predicted;
};

/// Pluggable stand-in for the joint-prediction network: maps a cropped
/// sample to per-joint 2D/3D estimates with confidences.
class JointPredictor {
 public:
  virtual ~JointPredictor() = default;
  virtual PredictedJoints predict(const DatasetSample& sample, const Skeleton& skeleton) = 0;
  virtual std::string name() const = 0;
};

/// Ground-truth oracle with seeded Gaussian noise in full-image pixels and
/// normalized depth codes. Joints whose ground-truth crop position falls in
/// an occlusion square drop to confidence 0.
class OracleNoisePredictor : public JointPredictor {
 public:
  OracleNoisePredictor(Scalar sigma_px, Scalar sigma_depth_codes, std::uint64_t seed);
  void set_occlusion(const std::optional<OcclusionRecord>& occlusion) { occlusion_ = occlusion; }

  PredictedJoints predict(const DatasetSample& sample, const Skeleton& skeleton) override;
  std::string name() const override { return "oracle"; }

 private:
  Scalar sigma_px_;
  Scalar sigma_depth_;
  std::uint64_t seed_;
  std::optional<OcclusionRecord> occlusion_;
};

/// Decodes the sample's heatmap stack (in memory or from the dataset
/// directory) through the tri-planar decoder.
class HeatmapPredictor : public JointPredictor {
 public:
  explicit HeatmapPredictor(std::string dataset_dir) : dataset_dir_(std::move(dataset_dir)) {}

  PredictedJoints predict(const DatasetSample& sample, const Skeleton& skeleton) override;
  std::string name() const override { return "heatmap"; }

 private:
  std::string dataset_dir_;
};

std::unique_ptr<JointPredictor> make_predictor(const std::string& kind, Scalar sigma_px,
                                               Scalar sigma_depth, std::uint64_t seed,
                                               const std::string& dataset_dir);

}  // namespace quadpose
