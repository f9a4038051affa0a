#pragma once

#include "quadpose/camera.hpp"
#include "quadpose/heatmap.hpp"
#include "quadpose/skeleton.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace quadpose {

struct RasterizeResult {
  DepthImage depth;
  Mask mask;  ///< exactly the non-zero-depth pixels
};

/// Z-buffer rasterization: nearest perspective-correct surface depth per
/// covered pixel, in mm. Pixels sample rays through their integer
/// coordinates.
RasterizeResult rasterize_depth(const MatX3& vertices, const MatX3i& triangles,
                                const CameraModel& camera);

/// Additive Gaussian noise then quantization to multiples of the step;
/// zero (no-return) pixels stay zero.
DepthImage apply_noise(const DepthImage& image, Scalar sigma_mm, Scalar quant_step_mm,
                       std::uint64_t seed);

struct OcclusionRecord {
  int x = 0, y = 0;   ///< top-left corner
  int size = 0;
};

/// Zeroes a randomly placed square (seeded); the square must fit the frame.
DepthImage occlude(const DepthImage& image, int square_px, std::uint64_t seed,
                   OcclusionRecord* record = nullptr);

struct NoiseConfig {
  Scalar sigma_mm = 0.0;
  Scalar quant_step_mm = 0.0;
};

struct RenderJob {
  SkinnedMesh mesh;
  Skeleton skeleton;
  std::vector<Pose> poses;
  std::vector<CameraModel> cameras;
  NoiseConfig noise;
  bool mirror = true;       ///< append identity-swapped mirrored samples
  bool fixed_root = false;  ///< also emit a variant with the root frozen at frame 0
  std::uint64_t seed = 1;
  std::string output_dir;   ///< empty = in-memory only
};

struct DatasetSample {
  int frame = 0;
  int camera = 0;
  bool mirrored = false;
  bool fixed_root = false;
  CameraModel camera_model;     ///< mirrored samples carry the mirrored camera
  CroppedImage crop;
  NormalizedJoints normalized;
  MatX2 j2d_full;
  MatX3 j3d_cam;
  HeatmapStack heatmaps;        ///< empty when the stack lives on disk
  DepthImage depth;             ///< present when has_raster
  Mask mask;
  Scalar mask_area = 0.0;       ///< non-zero mask pixels
  bool has_raster = false;
  std::string id;
};

struct SkipRecord {
  int frame = 0;
  int camera = 0;
  bool mirrored = false;
  std::string reason;
};

struct Dataset {
  Skeleton skeleton;
  std::vector<DatasetSample> samples;
  std::vector<SkipRecord> skipped;
  std::string dir;  ///< set when backed by a directory on disk

  /// The sample's depth raster and mask, from memory or disk.
  std::pair<DepthImage, Mask> raster_of(const DatasetSample& sample) const;
};

/// Renders every frame x camera, crops, normalizes and encodes; samples with
/// joints outside the image (or the 256-crop) are skipped and logged.
/// Mirrored copies flip the raster and swap joint identities. With an output
/// directory set, writes frames/masks/annot/heatmaps plus manifest.json.
Dataset build_dataset(const RenderJob& job);

/// Loads a dataset directory written by build_dataset (rasters stay on disk;
/// heatmaps load on demand via sample ids).
Dataset load_dataset_annotations(const std::string& dir);

/// A ring of cameras looking at a target point.
std::vector<CameraModel> make_camera_ring(int count, const Vec3& target_mm, Scalar radius_mm,
                                          Scalar height_mm);

}  // namespace quadpose
