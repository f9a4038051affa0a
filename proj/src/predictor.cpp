#include "quadpose/predictor.hpp"

#include <filesystem>
#include <random>
#include <sstream>

namespace quadpose {

OracleNoisePredictor::OracleNoisePredictor(Scalar sigma_px, Scalar sigma_depth_codes,
                                           std::uint64_t seed)
    : sigma_px_(sigma_px), sigma_depth_(sigma_depth_codes), seed_(seed) {}

PredictedJoints OracleNoisePredictor::predict(const DatasetSample& sample,
                                              const Skeleton& skeleton) {
  const int n = skeleton.joint_count();
  std::mt19937_64 rng(mix_seed(
      seed_, (static_cast<std::uint64_t>(sample.frame) << 20) ^
                 (static_cast<std::uint64_t>(sample.camera) << 4) ^
                 (sample.mirrored ? 2u : 0u) ^ (sample.fixed_root ? 1u : 0u)));
  std::normal_distribution<Scalar> gauss(0.0, 1.0);

  PredictedJoints out;
  out.j2d_full = sample.j2d_full;
  out.confidence = VecX::Ones(n);
  out.predicted.assign(n, true);

  NormalizedJoints noisy = sample.normalized;
  for (int j = 0; j < n; ++j) {
    if (sigma_px_ > 0.0) {
      out.j2d_full(j, 0) += sigma_px_ * gauss(rng);
      out.j2d_full(j, 1) += sigma_px_ * gauss(rng);
    }
    if (sigma_depth_ > 0.0)
      noisy.zn[j] = std::clamp(noisy.zn[j] + sigma_depth_ * gauss(rng), 0.0, 255.0);
  }

  const VecX depths = denormalize_depth(noisy);
  out.j3d_cam.resize(n, 3);
  for (int j = 0; j < n; ++j)
    out.j3d_cam.row(j) =
        backproject(sample.camera_model, out.j2d_full.row(j).transpose(), depths[j])
            .transpose();

  if (occlusion_) {
    for (int j = 0; j < n; ++j) {
      const Scalar x = sample.normalized.xy256(j, 0);
      const Scalar y = sample.normalized.xy256(j, 1);
      if (x >= occlusion_->x && x < occlusion_->x + occlusion_->size && y >= occlusion_->y &&
          y < occlusion_->y + occlusion_->size) {
        out.confidence[j] = 0.0;
        out.predicted[j] = false;
      }
    }
  }
  return out;
}

PredictedJoints HeatmapPredictor::predict(const DatasetSample& sample,
                                          const Skeleton& skeleton) {
  HeatmapStack stack;
  if (!sample.heatmaps.planes.empty()) {
    stack = sample.heatmaps;
  } else {
    if (dataset_dir_.empty())
      throw ValidationError("heatmap predictor: no in-memory stack and no dataset directory");
    namespace fs = std::filesystem;
    std::ostringstream cdir, fname;
    cdir << "c" << sample.camera << (sample.fixed_root ? "r" : "") << (sample.mirrored ? "m" : "");
    fname.width(4);
    fname.fill('0');
    fname << sample.frame;
    stack = read_heatmaps(
        (fs::path(dataset_dir_) / "heatmaps" / cdir.str() / (fname.str() + ".qhm")).string());
  }
  const DecodedJoints decoded =
      decode_heatmaps(stack, skeleton, sample.crop.transform, sample.camera_model);
  PredictedJoints out;
  out.j2d_full = decoded.j2d_full;
  out.j3d_cam = decoded.j3d_cam;
  out.confidence = decoded.confidence;
  out.predicted = decoded.predicted;
  return out;
}

std::unique_ptr<JointPredictor> make_predictor(const std::string& kind, Scalar sigma_px,
                                               Scalar sigma_depth, std::uint64_t seed,
                                               const std::string& dataset_dir) {
  if (kind == "oracle")
    return std::make_unique<OracleNoisePredictor>(sigma_px, sigma_depth, seed);
  if (kind == "heatmap") return std::make_unique<HeatmapPredictor>(dataset_dir);
  throw ValidationError("unknown predictor '" + kind + "'");
}

}  // namespace quadpose
