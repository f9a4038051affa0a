#pragma once

#include "quadpose/types.hpp"

#include <string>
#include <vector>

namespace quadpose {

/// Pinhole model, no distortion. The camera looks down +z; u grows right,
/// v grows down. Extrinsic maps world points into camera space.
struct CameraModel {
  Scalar fx = 500.0, fy = 500.0;
  Scalar cx = 256.0, cy = 212.0;
  int width = 512, height = 424;
  Isometry extrinsic = Isometry::Identity();  ///< world -> camera

  void validate() const;
  Vec3 to_camera(const Vec3& world) const { return extrinsic * world; }
};

/// Depth raster in millimetres; 0 marks no return. Valid depths are capped
/// at 8000 mm (Kinect v2 range).
struct DepthImage {
  int width = 0, height = 0;
  std::vector<Scalar> raster;  ///< row-major, height*width
  CameraModel camera;

  Scalar at(int u, int v) const { return raster[static_cast<size_t>(v) * width + u]; }
  Scalar& at(int u, int v) { return raster[static_cast<size_t>(v) * width + u]; }
  static DepthImage zero(const CameraModel& cam);
};

using Mask = std::vector<std::uint8_t>;  ///< row-major, 0 = background

struct Projection {
  MatX2 pixels;               ///< K x 2
  std::vector<bool> valid;    ///< false where depth was non-positive
};

/// Perspective projection of camera-space points: u = fx x/z + cx.
Projection project(const CameraModel& camera, const MatX3& camera_points);

/// Exact right-inverse of project for depth > 0. Throws on depth <= 0.
Vec3 backproject(const CameraModel& camera, const Vec2& pixel, Scalar depth_mm);

struct PointCloud {
  MatX3 points;                      ///< camera-space mm
  std::vector<std::pair<int, int>> source_pixels;  ///< (u, v) per point
};

/// One point per masked pixel with valid (non-zero) depth; pixel (u,v)
/// backprojects through its integer coordinates.
PointCloud depth_to_pointcloud(const DepthImage& image, const Mask& mask);

/// Per-point normals from the depth raster's local geometry (central
/// differences on the backprojected grid), oriented toward the camera.
MatX3 pointcloud_normals(const DepthImage& image, const PointCloud& cloud);

/// 16-bit P5 PGM, maxval 65535, sample bytes little-endian, value = mm.
void write_depth_pgm(const std::string& path, const DepthImage& image);
DepthImage read_depth_pgm(const std::string& path, const CameraModel& camera);

/// 8-bit P5 PGM, 0 = background, 255 = foreground.
void write_mask_pgm(const std::string& path, const Mask& mask, int width, int height);
Mask read_mask_pgm(const std::string& path, int& width, int& height);

}  // namespace quadpose
