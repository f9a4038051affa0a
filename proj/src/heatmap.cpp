#include "quadpose/heatmap.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

namespace quadpose {

namespace {

struct Bbox {
  int x0 = 0, y0 = 0, x1 = -1, y1 = -1;
  int width() const { return x1 - x0 + 1; }
  int height() const { return y1 - y0 + 1; }
};

Bbox mask_bbox(const Mask& mask, int width, int height) {
  Bbox b;
  b.x0 = width;
  b.y0 = height;
  for (int v = 0; v < height; ++v)
    for (int u = 0; u < width; ++u)
      if (mask[static_cast<size_t>(v) * width + u]) {
        b.x0 = std::min(b.x0, u);
        b.y0 = std::min(b.y0, v);
        b.x1 = std::max(b.x1, u);
        b.y1 = std::max(b.y1, v);
      }
  if (b.x1 < b.x0) throw ValidationError("crop_for_network: mask is empty");
  return b;
}

// nearest-neighbour resample of a square raster onto an out_side grid,
// sampling input coordinate u * in_side/out_side
std::vector<Scalar> resample(const std::vector<Scalar>& in, int in_side, int out_side) {
  std::vector<Scalar> out(static_cast<size_t>(out_side) * out_side, 0.0);
  const Scalar ratio = static_cast<Scalar>(in_side) / out_side;
  for (int v = 0; v < out_side; ++v) {
    const int sv = std::clamp(static_cast<int>(std::lround(v * ratio)), 0, in_side - 1);
    for (int u = 0; u < out_side; ++u) {
      const int su = std::clamp(static_cast<int>(std::lround(u * ratio)), 0, in_side - 1);
      out[static_cast<size_t>(v) * out_side + u] = in[static_cast<size_t>(sv) * in_side + su];
    }
  }
  return out;
}

}  // namespace

std::vector<Scalar> CroppedImage::to_grey() const {
  Scalar lo = std::numeric_limits<Scalar>::max(), hi = 0.0;
  for (Scalar d : raster)
    if (d > 0.0) {
      lo = std::min(lo, d);
      hi = std::max(hi, d);
    }
  std::vector<Scalar> grey(raster.size(), 0.0);
  if (hi <= 0.0) return grey;
  const Scalar span = hi - lo;
  for (size_t i = 0; i < raster.size(); ++i)
    if (raster[i] > 0.0) grey[i] = span > 0.0 ? (raster[i] - lo) / span : 1.0;
  return grey;
}

CroppedImage crop_for_network(const DepthImage& depth, const Mask& mask) {
  if (static_cast<int>(mask.size()) != depth.width * depth.height)
    throw ValidationError("crop_for_network: mask dimensions do not match raster");
  const Bbox box = mask_bbox(mask, depth.width, depth.height);
  const int w = box.width(), h = box.height();
  const int side = std::max(w, h);
  const int pad_x = (side - w) / 2;
  const int pad_y = (side - h) / 2;

  // masked crop, squared by symmetric padding (extra pixel goes after)
  std::vector<Scalar> square(static_cast<size_t>(side) * side, 0.0);
  for (int v = 0; v < h; ++v)
    for (int u = 0; u < w; ++u) {
      const size_t src = static_cast<size_t>(box.y0 + v) * depth.width + (box.x0 + u);
      if (mask[src])
        square[static_cast<size_t>(v + pad_y) * side + (u + pad_x)] = depth.raster[src];
    }

  std::vector<Scalar> scaled = resample(square, side, kNetInput);

  constexpr int kPadded = 293;
  constexpr int kMargin = (kPadded - kNetInput) / 2;  // 18, remainder goes after
  std::vector<Scalar> padded(static_cast<size_t>(kPadded) * kPadded, 0.0);
  for (int v = 0; v < kNetInput; ++v)
    for (int u = 0; u < kNetInput; ++u)
      padded[static_cast<size_t>(v + kMargin) * kPadded + (u + kMargin)] =
          scaled[static_cast<size_t>(v) * kNetInput + u];

  CroppedImage out;
  out.raster = resample(padded, kPadded, kNetInput);

  const Scalar s1 = static_cast<Scalar>(kNetInput) / side;
  const Scalar s2 = static_cast<Scalar>(kNetInput) / kPadded;
  out.transform.scale = s1 * s2;
  out.transform.translation =
      s2 * (Vec2::Constant(kMargin) +
            s1 * Vec2(pad_x - box.x0, pad_y - box.y0));
  out.transform.pad_square_x = pad_x;
  out.transform.pad_square_y = pad_y;
  out.transform.pad_margin = kMargin;
  return out;
}

VecX normalize_depth(const MatX3& joints_cam, int root_index) {
  const Scalar z_root = joints_cam(root_index, 2);
  if (z_root <= 0.0) throw ValidationError("normalize_depth: root depth must be positive");
  VecX zn(joints_cam.rows());
  for (int j = 0; j < joints_cam.rows(); ++j) {
    const Scalar z = joints_cam(j, 2);
    if (j == root_index) {
      zn[j] = std::min(z, kRootDepthRange) / kRootDepthRange * 255.0;
    } else {
      const Scalar offset = std::clamp((z - z_root) / kOffsetDepthRange, -1.0, 1.0);
      zn[j] = offset * (255.0 / 2.0) + 255.0 / 2.0;
    }
  }
  return zn;
}

VecX denormalize_depth(const NormalizedJoints& normalized) {
  const int n = static_cast<int>(normalized.zn.size());
  VecX z(n);
  const Scalar z_root = normalized.zn[normalized.root_index] / 255.0 * kRootDepthRange;
  for (int j = 0; j < n; ++j) {
    if (j == normalized.root_index)
      z[j] = z_root;
    else
      z[j] = z_root + (normalized.zn[j] - 255.0 / 2.0) / (255.0 / 2.0) * kOffsetDepthRange;
  }
  return z;
}

namespace {

void splat_gaussian(MatX& plane, Scalar cu, Scalar cv) {
  // cu, cv are 1-based 64-space coordinates; grid index = coordinate - 1
  constexpr Scalar kRadius = 5.0;  // 5 sigma support
  const Scalar gu = cu - 1.0, gv = cv - 1.0;
  const int u0 = std::max(0, static_cast<int>(std::floor(gu - kRadius)));
  const int u1 = std::min(kPlaneSize - 1, static_cast<int>(std::ceil(gu + kRadius)));
  const int v0 = std::max(0, static_cast<int>(std::floor(gv - kRadius)));
  const int v1 = std::min(kPlaneSize - 1, static_cast<int>(std::ceil(gv + kRadius)));
  for (int v = v0; v <= v1; ++v)
    for (int u = u0; u <= u1; ++u) {
      const Scalar d2 = (u - gu) * (u - gu) + (v - gv) * (v - gv);
      plane(v, u) += std::exp(-0.5 * d2);
    }
}

}  // namespace

HeatmapStack encode_heatmaps(const NormalizedJoints& normalized, const Skeleton& skeleton) {
  const int n = skeleton.joint_count();
  if (normalized.xy256.rows() != n || normalized.zn.size() != n)
    throw ValidationError("encode_heatmaps: joint count mismatch");
  for (int j = 0; j < n; ++j) {
    const Scalar x = normalized.xy256(j, 0), y = normalized.xy256(j, 1), z = normalized.zn[j];
    if (x < 0 || x > 255 || y < 0 || y > 255 || z < 0 || z > 255)
      throw ValidationError("encode_heatmaps: joint '" + skeleton.joints[j].name +
                            "' outside [0,255]");
  }

  HeatmapStack stack;
  stack.joint_count = n;
  stack.planes.assign(3 * n, MatX::Zero(kPlaneSize, kPlaneSize));
  for (int j = 0; j < n; ++j) {
    const Scalar cx = to_grid64(normalized.xy256(j, 0));
    const Scalar cy = to_grid64(normalized.xy256(j, 1));
    const Scalar cz = to_grid64(normalized.zn[j]);
    const int pair = skeleton.joints[j].symmetric_pair;
    // the joint's own planes, plus its partner's for symmetric pairs
    for (int target : (pair >= 0 && pair != j) ? std::vector<int>{j, pair}
                                               : std::vector<int>{j}) {
      splat_gaussian(stack.planes[3 * target], cx, cy);
      splat_gaussian(stack.planes[3 * target + 1], cy, cz);
      splat_gaussian(stack.planes[3 * target + 2], cx, cz);
    }
  }
  for (auto& plane : stack.planes) {
    const Scalar peak = plane.maxCoeff();
    if (peak > 0.0) plane /= peak;
  }
  return stack;
}

namespace {

struct Mode {
  int u = 0, v = 0;
  Scalar score = -1.0;
  bool valid() const { return score > 0.0; }
};

// greedy peak extraction with euclidean-radius-2 suppression
std::vector<Mode> find_modes(const MatX& plane, int max_modes) {
  MatX work = plane;
  std::vector<Mode> modes;
  for (int m = 0; m < max_modes; ++m) {
    Mode mode;
    for (int v = 0; v < work.rows(); ++v)
      for (int u = 0; u < work.cols(); ++u)
        if (work(v, u) > mode.score) {
          mode.score = work(v, u);
          mode.u = u;
          mode.v = v;
        }
    if (!mode.valid()) break;
    modes.push_back(mode);
    constexpr int kR = 2;
    for (int dv = -kR; dv <= kR; ++dv)
      for (int du = -kR; du <= kR; ++du) {
        if (du * du + dv * dv > kR * kR) continue;
        const int u = mode.u + du, v = mode.v + dv;
        if (u >= 0 && v >= 0 && u < work.cols() && v < work.rows()) work(v, u) = -1.0;
      }
  }
  return modes;
}

Scalar value_or_zero(const MatX& plane, int u, int v) {
  if (u < 0 || v < 0 || u >= plane.cols() || v >= plane.rows()) return 0.0;
  return plane(v, u);
}

// quarter-pixel shift toward the larger neighbour on each axis, then to
// 1-based 64-space coordinates
Vec2 subpixel_coord(const MatX& plane, const Mode& mode) {
  Scalar du = 0.0, dv = 0.0;
  const Scalar right = value_or_zero(plane, mode.u + 1, mode.v);
  const Scalar left = value_or_zero(plane, mode.u - 1, mode.v);
  if (right > left) du = 0.25;
  else if (left > right) du = -0.25;
  const Scalar down = value_or_zero(plane, mode.u, mode.v + 1);
  const Scalar up = value_or_zero(plane, mode.u, mode.v - 1);
  if (down > up) dv = 0.25;
  else if (up > down) dv = -0.25;
  return Vec2(mode.u + 1 + du, mode.v + 1 + dv);
}

struct Candidate {
  Vec3 coord64 = Vec3::Zero();  // 1-based subpixel (x, y, z) in 64-space
  Scalar confidence = 0.0;
  bool valid = false;
};

// which coordinate axes a plane carries: 0=xy, 1=yz, 2=xz
constexpr int kPlaneAxes[3][2] = {{0, 1}, {1, 2}, {0, 2}};

int shared_axis(int plane_a, int plane_b) {
  for (int a : kPlaneAxes[plane_a])
    for (int b : kPlaneAxes[plane_b])
      if (a == b) return a;
  return -1;
}

int remaining_axis(int plane_a, int plane_b) {
  const int s = shared_axis(plane_a, plane_b);
  for (int b : kPlaneAxes[plane_b])
    if (b != s) return b;
  return -1;
}

// assembles a 3d candidate from the rank-th mode of the strongest plane plus
// the consistent mode of the runner-up plane
Candidate assemble_candidate(const MatX* planes[3], const std::vector<Mode> modes[3],
                             int order0, int order1, int rank) {
  Candidate cand;
  if (rank >= static_cast<int>(modes[order0].size())) return cand;
  const Mode& top = modes[order0][rank];
  const Vec2 top_c = subpixel_coord(*planes[order0], top);

  const int shared = shared_axis(order0, order1);
  const int remaining = remaining_axis(order0, order1);
  // coordinate value of the shared axis in the top plane
  const Scalar shared_val = (kPlaneAxes[order0][0] == shared) ? top_c.x() : top_c.y();

  const Mode* best = nullptr;
  Scalar best_diff = std::numeric_limits<Scalar>::max();
  for (const auto& m : modes[order1]) {
    const Vec2 c = subpixel_coord(*planes[order1], m);
    const Scalar v = (kPlaneAxes[order1][0] == shared) ? c.x() : c.y();
    const Scalar diff = std::abs(v - shared_val);
    if (diff < best_diff) {
      best_diff = diff;
      best = &m;
    }
  }
  if (!best) return cand;
  const Vec2 sec_c = subpixel_coord(*planes[order1], *best);
  const Scalar rem_val = (kPlaneAxes[order1][0] == remaining) ? sec_c.x() : sec_c.y();

  cand.coord64[kPlaneAxes[order0][0]] = top_c.x();
  cand.coord64[kPlaneAxes[order0][1]] = top_c.y();
  cand.coord64[remaining] = rem_val;
  cand.confidence = top.score;
  cand.valid = true;
  return cand;
}

}  // namespace

DecodedJoints decode_heatmaps(const HeatmapStack& stack, const Skeleton& skeleton,
                              const CropTransform& crop, const CameraModel& camera) {
  const int n = skeleton.joint_count();
  if (stack.joint_count != n || static_cast<int>(stack.planes.size()) != 3 * n)
    throw ValidationError("decode_heatmaps: stack does not match skeleton");

  DecodedJoints out;
  out.j2d_full.setZero(n, 2);
  out.j2d_256.setZero(n, 2);
  out.j3d_cam.setZero(n, 3);
  out.zn.setZero(n);
  out.confidence.setZero(n);
  out.predicted.assign(n, false);

  std::vector<Candidate> chosen(n);
  std::vector<bool> done(n, false);
  for (int j = 0; j < n; ++j) {
    if (done[j]) continue;
    const MatX* planes[3] = {&stack.planes[3 * j], &stack.planes[3 * j + 1],
                             &stack.planes[3 * j + 2]};
    if (planes[0]->maxCoeff() <= 0.0 || planes[1]->maxCoeff() <= 0.0 ||
        planes[2]->maxCoeff() <= 0.0) {
      done[j] = true;  // unpredicted
      continue;
    }
    const int pair = skeleton.joints[j].symmetric_pair;
    const bool paired = pair >= 0 && pair != j;

    std::vector<Mode> modes[3];
    for (int p = 0; p < 3; ++p) modes[p] = find_modes(*planes[p], paired ? 3 : 2);

    int order[3] = {0, 1, 2};
    std::sort(order, order + 3,
              [&](int a, int b) { return modes[a][0].score > modes[b][0].score; });

    if (!paired) {
      chosen[j] = assemble_candidate(planes, modes, order[0], order[1], 0);
      done[j] = true;
      continue;
    }

    Candidate c0 = assemble_candidate(planes, modes, order[0], order[1], 0);
    Candidate c1 = assemble_candidate(planes, modes, order[0], order[1], 1);
    if (!c1.valid) c1 = c0;
    // same-spot collision: the stronger keeps it, the other falls back to the
    // next most likely mode
    constexpr Scalar kCollision64 = 2.0;
    if (c0.valid && c1.valid &&
        (c0.coord64.head<2>() - c1.coord64.head<2>()).norm() < kCollision64) {
      Candidate next = assemble_candidate(planes, modes, order[0], order[1], 2);
      if (next.valid) {
        if (c0.confidence >= c1.confidence)
          c1 = next;
        else
          c0 = next;
      }
    }
    chosen[j] = c0;
    chosen[pair] = c1;
    done[j] = done[pair] = true;
  }

  // 64 -> 256 -> full image; depth decodes root-first below
  NormalizedJoints decoded;
  decoded.xy256.setZero(n, 2);
  decoded.zn.setZero(n);
  decoded.root_index = 0;
  for (int j = 0; j < n; ++j) {
    if (!chosen[j].valid) continue;
    out.predicted[j] = true;
    out.confidence[j] = chosen[j].confidence;
    const Vec3 c256 = (chosen[j].coord64.array() - 1.0) * 4.0;
    decoded.xy256.row(j) = c256.head<2>().transpose();
    decoded.zn[j] = std::clamp(c256.z(), 0.0, 255.0);
    out.j2d_256.row(j) = c256.head<2>().transpose();
    out.j2d_full.row(j) = crop.invert(c256.head<2>()).transpose();
  }
  out.zn = decoded.zn;

  const VecX depths = denormalize_depth(decoded);
  for (int j = 0; j < n; ++j) {
    if (!out.predicted[j]) continue;
    if (depths[j] <= 0.0) {
      out.predicted[j] = false;
      out.confidence[j] = 0.0;
      continue;
    }
    out.j3d_cam.row(j) =
        backproject(camera, out.j2d_full.row(j).transpose(), depths[j]).transpose();
  }
  return out;
}

void write_heatmaps(const std::string& path, const HeatmapStack& stack) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path);
  const char magic[4] = {'Q', 'P', 'H', 'M'};
  f.write(magic, 4);
  auto put_u32 = [&](std::uint32_t v) {
    char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                 static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
    f.write(b, 4);
  };
  put_u32(static_cast<std::uint32_t>(stack.joint_count));
  put_u32(kPlaneSize);
  put_u32(0);
  for (const auto& plane : stack.planes)
    for (int v = 0; v < plane.rows(); ++v)
      for (int u = 0; u < plane.cols(); ++u) {
        const float val = static_cast<float>(plane(v, u));
        static_assert(sizeof(float) == 4);
        f.write(reinterpret_cast<const char*>(&val), 4);
      }
}

HeatmapStack read_heatmaps(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot read " + path);
  char magic[4];
  f.read(magic, 4);
  if (std::string(magic, 4) != "QPHM") throw ValidationError(path + ": bad heatmap magic");
  auto get_u32 = [&]() {
    unsigned char b[4];
    f.read(reinterpret_cast<char*>(b), 4);
    return static_cast<std::uint32_t>(b[0]) | (b[1] << 8) | (b[2] << 16) |
           (static_cast<std::uint32_t>(b[3]) << 24);
  };
  HeatmapStack stack;
  stack.joint_count = static_cast<int>(get_u32());
  const int side = static_cast<int>(get_u32());
  get_u32();  // reserved
  if (side != kPlaneSize) throw ValidationError(path + ": unexpected plane size");
  stack.planes.assign(3 * stack.joint_count, MatX::Zero(side, side));
  for (auto& plane : stack.planes)
    for (int v = 0; v < side; ++v)
      for (int u = 0; u < side; ++u) {
        float val = 0.0f;
        f.read(reinterpret_cast<char*>(&val), 4);
        plane(v, u) = val;
      }
  if (!f) throw ValidationError(path + " is truncated");
  return stack;
}

}  // namespace quadpose
