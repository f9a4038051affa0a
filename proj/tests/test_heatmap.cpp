#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "quadpose/canine.hpp"
#include "quadpose/heatmap.hpp"

#include <filesystem>
#include <random>

using namespace quadpose;

namespace {

CameraModel crop_camera() {
  CameraModel cam;
  cam.fx = cam.fy = 365.0;
  cam.cx = 256.0;
  cam.cy = 212.0;
  cam.width = 512;
  cam.height = 424;
  return cam;
}

// identity-like transform: 256-crop == a 256x256 window at the image origin
CropTransform unit_crop() {
  CropTransform crop;
  crop.scale = 1.0;
  crop.translation = Vec2::Zero();
  return crop;
}

NormalizedJoints random_normalized(const Skeleton& s, std::mt19937_64& rng,
                                   Scalar separation_px) {
  std::uniform_real_distribution<Scalar> u(8.0, 247.0);
  std::uniform_real_distribution<Scalar> uroot(80.0, 247.0);  // keeps decoded z > 0
  NormalizedJoints n;
  n.root_index = 0;
  n.xy256.resize(s.joint_count(), 2);
  n.zn.resize(s.joint_count());
  for (int j = 0; j < s.joint_count(); ++j) {
    const int pair = s.joints[j].symmetric_pair;
    while (true) {
      n.xy256.row(j) = Eigen::RowVector2d(u(rng), u(rng));
      n.zn[j] = j == 0 ? uroot(rng) : u(rng);
      if (pair < 0 || pair > j) break;
      // keep paired joints apart so both modes stay distinct
      const Scalar dxy = (n.xy256.row(j) - n.xy256.row(pair)).norm();
      const Scalar dyz = std::hypot(n.xy256(j, 1) - n.xy256(pair, 1), n.zn[j] - n.zn[pair]);
      const Scalar dxz = std::hypot(n.xy256(j, 0) - n.xy256(pair, 0), n.zn[j] - n.zn[pair]);
      if (dxy > separation_px && dyz > separation_px && dxz > separation_px) break;
    }
  }
  return n;
}

}  // namespace

TEST_CASE("crop transform follows the squared/padded arithmetic") {
  const CameraModel cam = crop_camera();
  DepthImage img = DepthImage::zero(cam);
  Mask mask(img.raster.size(), 0);
  // centered 100x100 square
  for (int v = 162; v < 262; ++v)
    for (int u = 206; u < 306; ++u) {
      img.at(u, v) = 3000.0;
      mask[static_cast<size_t>(v) * cam.width + u] = 1;
    }
  const CroppedImage crop = crop_for_network(img, mask);

  // square bbox: total scale (256/100)*(256/293); the dog spans 256/293 of the side
  CHECK(crop.transform.scale == doctest::Approx((256.0 / 100.0) * (256.0 / 293.0)));
  const Vec2 bbox_min = crop.transform.apply(Vec2(206, 162));
  const Vec2 bbox_max = crop.transform.apply(Vec2(306, 262));
  CHECK((bbox_max - bbox_min).x() == doctest::Approx(256.0 * 256.0 / 293.0));

  // content occupies the mapped bbox: the interior is non-zero
  const Vec2 mid = crop.transform.apply(Vec2(256, 212));
  CHECK(crop.at(static_cast<int>(mid.x()), static_cast<int>(mid.y())) == 3000.0);

  // inverse recovers full-image coordinates
  for (const Vec2& p : {Vec2(206, 162), Vec2(306, 262), Vec2(250, 200)})
    CHECK((crop.transform.invert(crop.transform.apply(p)) - p).norm() < 1e-9);

  CHECK_THROWS_AS(crop_for_network(img, Mask(img.raster.size(), 0)), ValidationError);
}

TEST_CASE("crop of a border-touching mask still yields a square") {
  const CameraModel cam = crop_camera();
  DepthImage img = DepthImage::zero(cam);
  Mask mask(img.raster.size(), 0);
  for (int v = 0; v < 60; ++v)
    for (int u = 0; u < 200; ++u) {
      img.at(u, v) = 1500.0;
      mask[static_cast<size_t>(v) * cam.width + u] = 1;
    }
  const CroppedImage crop = crop_for_network(img, mask);
  CHECK(crop.raster.size() == static_cast<size_t>(kNetInput) * kNetInput);
  // the wide strip is centered vertically by the square padding
  CHECK(crop.transform.pad_square_y == (200 - 60) / 2);
  CHECK(crop.transform.pad_square_x == 0);
}

TEST_CASE("depth normalization formulas and exact inverse") {
  MatX3 joints(3, 3);
  joints << 0, 0, 8000, 0, 0, 8000, 0, 0, 9000;  // root, same-depth, clamped
  VecX zn = normalize_depth(joints, 0);
  CHECK(zn[0] == doctest::Approx(255.0));
  CHECK(zn[1] == doctest::Approx(127.5));
  CHECK(zn[2] == doctest::Approx(191.25));  // clamped at +1000? no: 9000-8000=1000 -> 191.25

  joints << 0, 0, 4000, 0, 0, 4000, 0, 0, 5000;
  zn = normalize_depth(joints, 0);
  CHECK(zn[1] == doctest::Approx(127.5));
  CHECK(zn[2] == doctest::Approx(191.25));  // +1000 mm -> 0.5*127.5 + 127.5

  std::mt19937_64 rng(3);
  std::uniform_real_distribution<Scalar> uroot(100.0, 7999.0);
  std::uniform_real_distribution<Scalar> uoff(-1999.0, 1999.0);
  Scalar worst = 0.0;
  for (int trial = 0; trial < 100000; ++trial) {
    const Scalar zr = uroot(rng);
    MatX3 j(2, 3);
    j << 0, 0, zr, 0, 0, zr + uoff(rng);
    NormalizedJoints n;
    n.root_index = 0;
    n.xy256 = MatX2::Zero(2, 2);
    n.zn = normalize_depth(j, 0);
    const VecX back = denormalize_depth(n);
    worst = std::max(worst, (back - j.col(2)).cwiseAbs().maxCoeff());
  }
  CHECK(worst <= 1e-9);

  // clamped inputs map to the range endpoints
  MatX3 far(2, 3);
  far << 0, 0, 1000, 0, 0, 4000;
  CHECK(normalize_depth(far, 0)[1] == doctest::Approx(255.0));
  far(1, 2) = -3000.0;
  CHECK(normalize_depth(far, 0)[1] == doctest::Approx(0.0));
  far(0, 2) = -5.0;
  CHECK_THROWS_AS(normalize_depth(far, 0), ValidationError);
}

TEST_CASE("encode places gaussians on the documented grid") {
  const Skeleton s = make_canonical_skeleton();
  // 1-based 64-grid arithmetic: floor(v/4)+1
  CHECK(std::floor(100.0 / 4.0) + 1 == 26);
  CHECK(std::floor(60.0 / 4.0) + 1 == 16);
  CHECK(std::floor(200.0 / 4.0) + 1 == 51);
  CHECK(to_grid64(100.0) == doctest::Approx(26.0));
  CHECK(to_grid64(60.0) == doctest::Approx(16.0));
  CHECK(to_grid64(200.0) == doctest::Approx(51.0));

  NormalizedJoints n;
  n.root_index = 0;
  n.xy256 = MatX2::Constant(s.joint_count(), 2, 128.0);
  n.zn = VecX::Constant(s.joint_count(), 128.0);
  const int jid = s.find("spine_mid");  // unpaired joint
  n.xy256.row(jid) = Eigen::RowVector2d(100.0, 60.0);
  n.zn[jid] = 200.0;
  const HeatmapStack stack = encode_heatmaps(n, s);
  REQUIRE(stack.planes.size() == 129);

  int max_u = -1, max_v = -1;
  Scalar best = -1.0;
  const MatX& plane = stack.plane_xy(jid);
  for (int v = 0; v < plane.rows(); ++v)
    for (int u = 0; u < plane.cols(); ++u)
      if (plane(v, u) > best) {
        best = plane(v, u);
        max_u = u;
        max_v = v;
      }
  CHECK(max_u + 1 == 26);  // 1-based coordinates
  CHECK(max_v + 1 == 16);
  CHECK(best == doctest::Approx(1.0));  // peak-normalized

  // paired joints produce two local maxima in both partners' planes
  NormalizedJoints p = n;
  const int l = s.find("leg_fl_paw"), r = s.find("leg_fr_paw");
  p.xy256.row(l) = Eigen::RowVector2d(60.0, 100.0);
  p.xy256.row(r) = Eigen::RowVector2d(180.0, 100.0);
  const HeatmapStack ps = encode_heatmaps(p, s);
  for (int joint : {l, r}) {
    const MatX& xy = ps.plane_xy(joint);
    CHECK(xy(24, static_cast<int>(to_grid64(60.0)) - 1) > 0.5);
    CHECK(xy(24, static_cast<int>(to_grid64(180.0)) - 1) > 0.5);
  }

  NormalizedJoints bad = n;
  bad.xy256(0, 0) = 300.0;
  CHECK_THROWS_AS(encode_heatmaps(bad, s), ValidationError);
}

TEST_CASE("decode inverts encode within round-trip tolerance") {
  const Skeleton s = make_canonical_skeleton();
  const CameraModel cam = crop_camera();
  const CropTransform crop = unit_crop();
  std::mt19937_64 rng(17);

  // integer-grid case: multiples of 4 decode exactly in 64-space
  NormalizedJoints exact;
  exact.root_index = 0;
  exact.xy256.resize(s.joint_count(), 2);
  exact.zn.resize(s.joint_count());
  std::uniform_int_distribution<int> grid(3, 62);
  for (int j = 0; j < s.joint_count(); ++j) {
    exact.xy256(j, 0) = 4 * grid(rng);
    exact.xy256(j, 1) = 4 * grid(rng);
    exact.zn[j] = 4 * grid(rng);
  }
  const DecodedJoints dec = decode_heatmaps(encode_heatmaps(exact, s), s, crop, cam);
  for (int j = 0; j < s.joint_count(); ++j) {
    if (s.joints[j].symmetric_pair >= 0) continue;  // pairs checked as sets below
    CHECK(dec.predicted[j]);
    CHECK((dec.j2d_256.row(j) - exact.xy256.row(j)).norm() < 1e-9);
    CHECK(std::abs(dec.zn[j] - exact.zn[j]) < 1e-9);
  }

  // random sub-pixel case: mean 2d error in 256-space stays under 2 px and
  // identity assignment of pairs is allowed to swap
  Scalar err2d = 0.0, errzn = 0.0;
  int count = 0;
  for (int trial = 0; trial < 30; ++trial) {
    const NormalizedJoints n = random_normalized(s, rng, 16.0);
    const DecodedJoints d = decode_heatmaps(encode_heatmaps(n, s), s, crop, cam);
    for (int j = 0; j < s.joint_count(); ++j) {
      REQUIRE(d.predicted[j]);
      const int pair = s.joints[j].symmetric_pair;
      if (pair < 0) {
        err2d += (d.j2d_256.row(j) - n.xy256.row(j)).norm();
        errzn += std::abs(d.zn[j] - n.zn[j]);
        ++count;
      } else if (pair > j) {
        const Scalar direct = (d.j2d_256.row(j) - n.xy256.row(j)).norm() +
                              (d.j2d_256.row(pair) - n.xy256.row(pair)).norm();
        const Scalar swapped = (d.j2d_256.row(j) - n.xy256.row(pair)).norm() +
                               (d.j2d_256.row(pair) - n.xy256.row(j)).norm();
        if (direct <= swapped) {
          err2d += direct / 2 * 2;  // both joints
          errzn += std::abs(d.zn[j] - n.zn[j]) + std::abs(d.zn[pair] - n.zn[pair]);
        } else {
          err2d += swapped;
          errzn += std::abs(d.zn[j] - n.zn[pair]) + std::abs(d.zn[pair] - n.zn[j]);
        }
        count += 2;
      }
    }
  }
  CHECK(err2d / count <= 2.0);
  CHECK(errzn / count <= 1.0);
}

TEST_CASE("pair collision falls back to the next mode") {
  const Skeleton s = make_canonical_skeleton();
  NormalizedJoints n;
  n.root_index = 0;
  n.xy256 = MatX2::Constant(s.joint_count(), 2, 128.0);
  n.zn = VecX::Constant(s.joint_count(), 128.0);
  // spread unpaired joints; collapse one pair onto the same location
  std::mt19937_64 rng(29);
  std::uniform_real_distribution<Scalar> u(20.0, 235.0);
  for (int j = 0; j < s.joint_count(); ++j) {
    n.xy256.row(j) = Eigen::RowVector2d(u(rng), u(rng));
    n.zn[j] = u(rng);
  }
  const int l = s.find("ear_l_tip"), r = s.find("ear_r_tip");
  n.xy256.row(r) = n.xy256.row(l);
  n.zn[r] = n.zn[l];

  const DecodedJoints d = decode_heatmaps(encode_heatmaps(n, s), s, unit_crop(), crop_camera());
  CHECK(d.predicted[l]);
  CHECK(d.predicted[r]);
  // both joints land somewhere, and the shared peak goes to the higher confidence
  CHECK(d.confidence[l] >= d.confidence[r]);
  CHECK((d.j2d_256.row(l) - n.xy256.row(l)).norm() < 4.0);
}

TEST_CASE("all-zero planes flag the joint unpredicted") {
  const Skeleton s = make_canonical_skeleton();
  NormalizedJoints n;
  n.root_index = 0;
  n.xy256 = MatX2::Constant(s.joint_count(), 2, 120.0);
  n.zn = VecX::Constant(s.joint_count(), 120.0);
  HeatmapStack stack = encode_heatmaps(n, s);
  const int j = s.find("tail_4");
  stack.planes[3 * j].setZero();
  const DecodedJoints d = decode_heatmaps(stack, s, unit_crop(), crop_camera());
  CHECK_FALSE(d.predicted[j]);
  CHECK(d.confidence[j] == 0.0);
  CHECK(d.predicted[s.find("tail_5")]);
}

TEST_CASE("decode chains crop inversion, depth and backprojection") {
  const Skeleton s = make_canonical_skeleton();
  const CameraModel cam = crop_camera();
  CropTransform crop;
  crop.scale = 0.5;
  crop.translation = Vec2(-40.0, -20.0);

  NormalizedJoints n;
  n.root_index = 0;
  n.xy256.resize(s.joint_count(), 2);
  n.zn.resize(s.joint_count());
  std::mt19937_64 rng(41);
  std::uniform_int_distribution<int> grid(8, 60);
  for (int j = 0; j < s.joint_count(); ++j) {
    n.xy256(j, 0) = 4 * grid(rng);
    n.xy256(j, 1) = 4 * grid(rng);
    n.zn[j] = 4 * grid(rng);
  }
  const DecodedJoints d = decode_heatmaps(encode_heatmaps(n, s), s, crop, cam);
  const VecX depth = denormalize_depth(n);
  for (int j = 0; j < s.joint_count(); ++j) {
    if (s.joints[j].symmetric_pair >= 0) continue;
    const Vec2 expect_full = crop.invert(n.xy256.row(j).transpose());
    CHECK((d.j2d_full.row(j).transpose() - expect_full).norm() < 1e-6);
    const Vec3 expect_cam = backproject(cam, expect_full, depth[j]);
    CHECK((d.j3d_cam.row(j).transpose() - expect_cam).norm() < 1e-6);
  }
}

TEST_CASE("heatmap binary container round trip") {
  const Skeleton s = make_canonical_skeleton();
  NormalizedJoints n;
  n.root_index = 0;
  n.xy256 = MatX2::Constant(s.joint_count(), 2, 77.0);
  n.zn = VecX::Constant(s.joint_count(), 99.0);
  const HeatmapStack stack = encode_heatmaps(n, s);
  const auto path = std::filesystem::temp_directory_path() / "quadpose_hm_test.qhm";
  write_heatmaps(path.string(), stack);
  const HeatmapStack back = read_heatmaps(path.string());
  CHECK(back.joint_count == stack.joint_count);
  REQUIRE(back.planes.size() == stack.planes.size());
  for (size_t p = 0; p < stack.planes.size(); p += 13)
    CHECK((back.planes[p].cast<float>() - stack.planes[p].cast<float>()).norm() == 0.0f);
}
