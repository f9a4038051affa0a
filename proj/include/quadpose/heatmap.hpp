#pragma once

#include "quadpose/camera.hpp"
#include "quadpose/skeleton.hpp"

#include <string>
#include <vector>

namespace quadpose {

constexpr int kNetInput = 256;   ///< network input side, px
constexpr int kPlaneSize = 64;   ///< heatmap side, px
constexpr Scalar kRootDepthRange = 8000.0;   ///< mm, Kinect v2 far limit
constexpr Scalar kOffsetDepthRange = 2000.0; ///< mm, +-range of non-root offsets

/// Uniform scale + translation from full-image pixels into 256-crop pixels,
/// with the padding amounts that produced it. apply/invert compose exactly.
struct CropTransform {
  Scalar scale = 1.0;
  Vec2 translation = Vec2::Zero();
  int pad_square_x = 0;  ///< columns added left when squaring the bbox
  int pad_square_y = 0;  ///< rows added top
  int pad_margin = 0;    ///< symmetric margin step, px (left/top amount)

  Vec2 apply(const Vec2& full_px) const { return scale * full_px + translation; }
  Vec2 invert(const Vec2& crop_px) const { return (crop_px - translation) / scale; }
};

struct CroppedImage {
  std::vector<Scalar> raster;  ///< 256x256 row-major depth, mm (0 = background)
  CropTransform transform;

  Scalar at(int u, int v) const { return raster[static_cast<size_t>(v) * kNetInput + u]; }
  /// Depth rescaled to [0,1] over the valid range of this crop.
  std::vector<Scalar> to_grey() const;
};

/// Masks, crops to the bounding box, squares with symmetric padding, scales
/// to 256, pads to 293 and rescales to 256 (nearest-neighbour sampling).
/// Throws on an empty mask.
CroppedImage crop_for_network(const DepthImage& depth, const Mask& mask);

/// Per-joint network-space coordinates: x,y in [0,255] crop pixels and a
/// normalized depth code zn in [0,255].
struct NormalizedJoints {
  MatX2 xy256;   ///< J x 2
  VecX zn;       ///< J
  int root_index = 0;
};

/// Depth codes: the root maps its absolute depth over (0, 8000] mm; other
/// joints map their offset from the root over +-2000 mm, clamped.
VecX normalize_depth(const MatX3& joints_cam, int root_index);

/// Exact inverse on unclamped inputs; the root decodes first.
VecX denormalize_depth(const NormalizedJoints& normalized);

/// 129 planes of 64x64 scores; plane 3j is the joint's xy map, 3j+1 yz,
/// 3j+2 xz (u = first coordinate, v = second).
struct HeatmapStack {
  int joint_count = 0;
  std::vector<MatX> planes;

  const MatX& plane_xy(int j) const { return planes[3 * j]; }
  const MatX& plane_yz(int j) const { return planes[3 * j + 1]; }
  const MatX& plane_xz(int j) const { return planes[3 * j + 2]; }
};

/// 64-space coordinate of a 256-space value, 1-based like floor(v/4)+1 but
/// continuous so sub-pixel information survives encoding.
inline Scalar to_grid64(Scalar v256) { return v256 / 4.0 + 1.0; }

/// sigma = 1 px Gaussians per joint; symmetric pairs sum into both joints'
/// planes and every plane is peak-normalized to 1.
HeatmapStack encode_heatmaps(const NormalizedJoints& normalized, const Skeleton& skeleton);

struct DecodedJoints {
  MatX2 j2d_full;            ///< full-image pixels
  MatX3 j3d_cam;             ///< camera-space mm
  MatX2 j2d_256;             ///< crop-space pixels (diagnostic)
  VecX zn;                   ///< decoded depth codes
  VecX confidence;           ///< peak score per joint, [0,1]
  std::vector<bool> predicted;  ///< false where all planes were empty
};

/// Peak-ranked tri-planar decoding: the strongest of a joint's three planes
/// fixes two coordinates, the second-strongest the remaining one. Paired
/// joints decode the top two modes; colliding pairs fall back to the next
/// mode for the lower-confidence joint. Quarter-pixel offsets are applied
/// before rescaling through the crop transform and depth denormalization.
DecodedJoints decode_heatmaps(const HeatmapStack& stack, const Skeleton& skeleton,
                              const CropTransform& crop, const CameraModel& camera);

/// Binary container: 16-byte header (magic "QPHM", u32 joint count, u32
/// plane size, u32 reserved) then little-endian f32 planes in stack order.
void write_heatmaps(const std::string& path, const HeatmapStack& stack);
HeatmapStack read_heatmaps(const std::string& path);

}  // namespace quadpose
