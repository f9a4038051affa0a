#include "quadpose/synth.hpp"

#include "quadpose/io.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <random>
#include <sstream>

namespace quadpose {

namespace fs = std::filesystem;

RasterizeResult rasterize_depth(const MatX3& vertices, const MatX3i& triangles,
                                const CameraModel& camera) {
  camera.validate();
  RasterizeResult out;
  out.depth = DepthImage::zero(camera);
  out.mask.assign(static_cast<size_t>(camera.width) * camera.height, 0);

  MatX3 cam_pts(vertices.rows(), 3);
  for (int i = 0; i < vertices.rows(); ++i)
    cam_pts.row(i) = (camera.extrinsic * Vec3(vertices.row(i).transpose())).transpose();

  const auto edge = [](const Vec2& a, const Vec2& b, const Vec2& p) {
    return (b.x() - a.x()) * (p.y() - a.y()) - (b.y() - a.y()) * (p.x() - a.x());
  };

  for (int t = 0; t < triangles.rows(); ++t) {
    Vec3 z;
    Vec2 p[3];
    bool in_front = true;
    for (int k = 0; k < 3; ++k) {
      const Vec3 v = cam_pts.row(triangles(t, k)).transpose();
      if (v.z() <= 0.5) {
        in_front = false;
        break;
      }
      z[k] = v.z();
      p[k] = Vec2(camera.fx * v.x() / v.z() + camera.cx, camera.fy * v.y() / v.z() + camera.cy);
    }
    if (!in_front) continue;
    const Scalar area = edge(p[0], p[1], p[2]);
    if (std::abs(area) < 1e-12) continue;

    const int u0 = std::max(0, static_cast<int>(std::ceil(std::min({p[0].x(), p[1].x(), p[2].x()}))));
    const int u1 = std::min(camera.width - 1,
                            static_cast<int>(std::floor(std::max({p[0].x(), p[1].x(), p[2].x()}))));
    const int v0 = std::max(0, static_cast<int>(std::ceil(std::min({p[0].y(), p[1].y(), p[2].y()}))));
    const int v1 = std::min(camera.height - 1,
                            static_cast<int>(std::floor(std::max({p[0].y(), p[1].y(), p[2].y()}))));
    for (int vv = v0; vv <= v1; ++vv) {
      for (int uu = u0; uu <= u1; ++uu) {
        const Vec2 q(uu, vv);
        Scalar w0 = edge(p[1], p[2], q);
        Scalar w1 = edge(p[2], p[0], q);
        Scalar w2 = edge(p[0], p[1], q);
        if (area < 0) {
          w0 = -w0;
          w1 = -w1;
          w2 = -w2;
        }
        if (w0 < 0 || w1 < 0 || w2 < 0) continue;
        const Scalar sum = w0 + w1 + w2;
        // 1/z is affine in screen space; interpolate it for the true depth
        const Scalar inv_z = (w0 / z[0] + w1 / z[1] + w2 / z[2]) / sum;
        const Scalar depth = 1.0 / inv_z;
        Scalar& cell = out.depth.at(uu, vv);
        if (cell == 0.0 || depth < cell) {
          cell = depth;
          out.mask[static_cast<size_t>(vv) * camera.width + uu] = 1;
        }
      }
    }
  }
  return out;
}

DepthImage apply_noise(const DepthImage& image, Scalar sigma_mm, Scalar quant_step_mm,
                       std::uint64_t seed) {
  if (sigma_mm < 0.0 || quant_step_mm < 0.0)
    throw ValidationError("apply_noise: sigma and step must be non-negative");
  DepthImage out = image;
  std::mt19937_64 rng(seed);
  std::normal_distribution<Scalar> gauss(0.0, sigma_mm > 0.0 ? sigma_mm : 1.0);
  for (auto& d : out.raster) {
    if (d <= 0.0) continue;
    if (sigma_mm > 0.0) d += gauss(rng);
    if (quant_step_mm > 0.0) d = std::round(d / quant_step_mm) * quant_step_mm;
    d = std::max(d, 0.0);
  }
  return out;
}

DepthImage occlude(const DepthImage& image, int square_px, std::uint64_t seed,
                   OcclusionRecord* record) {
  if (square_px > image.width || square_px > image.height)
    throw ValidationError("occlude: square does not fit in the frame");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> ux(0, image.width - square_px);
  std::uniform_int_distribution<int> uy(0, image.height - square_px);
  OcclusionRecord rec;
  rec.x = ux(rng);
  rec.y = uy(rng);
  rec.size = square_px;
  if (record) *record = rec;
  DepthImage out = image;
  for (int v = rec.y; v < rec.y + square_px; ++v)
    for (int u = rec.x; u < rec.x + square_px; ++u) out.at(u, v) = 0.0;
  return out;
}

std::vector<CameraModel> make_camera_ring(int count, const Vec3& target_mm, Scalar radius_mm,
                                          Scalar height_mm) {
  std::vector<CameraModel> cameras;
  for (int i = 0; i < count; ++i) {
    const Scalar ang = 2.0 * M_PI * i / count + 0.3;
    const Vec3 pos = target_mm + Vec3(radius_mm * std::cos(ang), height_mm - target_mm.y(),
                                      radius_mm * std::sin(ang));
    CameraModel cam;
    cam.fx = cam.fy = 365.0;  // Kinect v2 depth-ish intrinsics
    cam.cx = 256.0;
    cam.cy = 212.0;
    cam.width = 512;
    cam.height = 424;

    const Vec3 forward = (target_mm - pos).normalized();
    Vec3 up = Vec3::UnitY();
    if (std::abs(forward.dot(up)) > 0.99) up = Vec3::UnitZ();
    const Vec3 right = forward.cross(up).normalized();
    const Vec3 down = forward.cross(right).normalized();
    Mat3 r;
    r.row(0) = right.transpose();
    r.row(1) = down.transpose();
    r.row(2) = forward.transpose();
    cam.extrinsic = Isometry::Identity();
    cam.extrinsic.linear() = r;
    cam.extrinsic.translation() = -r * pos;
    cameras.push_back(cam);
  }
  return cameras;
}

namespace {

DepthImage flip_horizontal(const DepthImage& image) {
  DepthImage out = image;
  for (int v = 0; v < image.height; ++v)
    for (int u = 0; u < image.width; ++u) out.at(u, v) = image.at(image.width - 1 - u, v);
  out.camera.cx = image.width - 1 - image.camera.cx;
  return out;
}

Mask flip_horizontal(const Mask& mask, int width, int height) {
  Mask out(mask.size());
  for (int v = 0; v < height; ++v)
    for (int u = 0; u < width; ++u)
      out[static_cast<size_t>(v) * width + u] = mask[static_cast<size_t>(v) * width + (width - 1 - u)];
  return out;
}

std::string sample_id(int cam, int frame, bool mirrored, bool fixed_root) {
  std::ostringstream os;
  os << "c" << cam << (fixed_root ? "r" : "") << (mirrored ? "m" : "") << "_f";
  os.width(4);
  os.fill('0');
  os << frame;
  return os.str();
}

std::string cam_dir(int cam, bool mirrored, bool fixed_root) {
  std::ostringstream os;
  os << "c" << cam << (fixed_root ? "r" : "") << (mirrored ? "m" : "");
  return os.str();
}

}  // namespace

Dataset build_dataset(const RenderJob& job) {
  if (job.poses.empty()) throw ValidationError("build_dataset: no poses");
  if (job.cameras.empty()) throw ValidationError("build_dataset: no cameras");
  job.mesh.validate(job.skeleton);

  const bool to_disk = !job.output_dir.empty();
  if (to_disk) {
    fs::create_directories(job.output_dir);
    save_skeleton((fs::path(job.output_dir) / "skeleton.json").string(), job.skeleton);
    save_pose_sequence((fs::path(job.output_dir) / "poses.jsonl").string(), job.poses);
  }

  Dataset dataset;
  dataset.skeleton = job.skeleton;
  Json manifest_samples = Json::array();

  std::vector<std::pair<bool, Pose>> variants;  // (fixed_root, pose) per frame handled below
  for (int frame = 0; frame < static_cast<int>(job.poses.size()); ++frame) {
    variants.clear();
    variants.emplace_back(false, job.poses[frame]);
    if (job.fixed_root) {
      Pose frozen = job.poses[frame];
      frozen.root_rotation = job.poses.front().root_rotation;
      frozen.root_translation = job.poses.front().root_translation;
      variants.emplace_back(true, frozen);
    }

    for (const auto& [fixed_root, pose] : variants) {
      const MatX3 world_vertices = skin_mesh(job.mesh, job.skeleton, pose);
      const FkResult fk = forward_kinematics(job.skeleton, pose);

      for (int cam = 0; cam < static_cast<int>(job.cameras.size()); ++cam) {
        const CameraModel& camera = job.cameras[cam];
        RasterizeResult raster = rasterize_depth(world_vertices, job.mesh.triangles, camera);
        if (job.noise.sigma_mm > 0.0 || job.noise.quant_step_mm > 0.0) {
          raster.depth = apply_noise(
              raster.depth, job.noise.sigma_mm, job.noise.quant_step_mm,
              mix_seed(job.seed, static_cast<std::uint64_t>(frame) * 1000 + cam));
          for (size_t i = 0; i < raster.mask.size(); ++i)
            raster.mask[i] = raster.depth.raster[i] > 0.0 ? 1 : 0;
        }

        MatX3 j3d_cam(job.skeleton.joint_count(), 3);
        for (int j = 0; j < job.skeleton.joint_count(); ++j)
          j3d_cam.row(j) = (camera.extrinsic * Vec3(fk.positions.row(j).transpose())).transpose();

        for (int mirrored = 0; mirrored < (job.mirror ? 2 : 1); ++mirrored) {
          SkipRecord skip;
          skip.frame = frame;
          skip.camera = cam;
          skip.mirrored = mirrored;

          DepthImage depth = mirrored ? flip_horizontal(raster.depth) : raster.depth;
          Mask mask = mirrored ? flip_horizontal(raster.mask, camera.width, camera.height)
                               : raster.mask;
          CameraModel sample_camera = depth.camera;

          MatX3 joints = j3d_cam;
          if (mirrored) {
            MatX3 swapped(joints.rows(), 3);
            for (int j = 0; j < joints.rows(); ++j) {
              const int src = job.skeleton.joints[j].symmetric_pair >= 0
                                  ? job.skeleton.joints[j].symmetric_pair
                                  : j;
              swapped.row(j) = Vec3(-joints(src, 0), joints(src, 1), joints(src, 2)).transpose();
            }
            joints = swapped;
          }

          bool ok = true;
          for (int j = 0; j < joints.rows() && ok; ++j)
            if (joints(j, 2) <= 0.0) {
              skip.reason = "joint behind camera";
              ok = false;
            }
          Projection proj;
          if (ok) {
            proj = project(sample_camera, joints);
            for (int j = 0; j < joints.rows() && ok; ++j) {
              if (proj.pixels(j, 0) < 0 || proj.pixels(j, 0) > sample_camera.width - 1 ||
                  proj.pixels(j, 1) < 0 || proj.pixels(j, 1) > sample_camera.height - 1) {
                skip.reason = "joint outside image bounds";
                ok = false;
              }
            }
          }
          bool mask_nonempty =
              std::any_of(mask.begin(), mask.end(), [](std::uint8_t m) { return m != 0; });
          if (ok && !mask_nonempty) {
            skip.reason = "empty mask";
            ok = false;
          }

          DatasetSample sample;
          if (ok) {
            sample.crop = crop_for_network(depth, mask);
            sample.normalized.root_index = 0;
            sample.normalized.xy256.resize(joints.rows(), 2);
            for (int j = 0; j < joints.rows(); ++j)
              sample.normalized.xy256.row(j) =
                  sample.crop.transform.apply(proj.pixels.row(j).transpose()).transpose();
            for (int j = 0; j < joints.rows() && ok; ++j) {
              if (sample.normalized.xy256(j, 0) < 0 || sample.normalized.xy256(j, 0) > 255 ||
                  sample.normalized.xy256(j, 1) < 0 || sample.normalized.xy256(j, 1) > 255) {
                skip.reason = "joint outside 256 crop";
                ok = false;
              }
            }
            if (ok) sample.normalized.zn = normalize_depth(joints, 0);
          }
          if (!ok) {
            dataset.skipped.push_back(skip);
            continue;
          }

          sample.frame = frame;
          sample.camera = cam;
          sample.mirrored = mirrored;
          sample.fixed_root = fixed_root;
          sample.camera_model = sample_camera;
          sample.j2d_full = proj.pixels;
          sample.j3d_cam = joints;
          sample.heatmaps = encode_heatmaps(sample.normalized, job.skeleton);
          sample.id = sample_id(cam, frame, mirrored, fixed_root);
          sample.mask_area = static_cast<Scalar>(
              std::count_if(mask.begin(), mask.end(), [](std::uint8_t m) { return m != 0; }));

          if (to_disk) {
            const fs::path root(job.output_dir);
            const std::string cdir = cam_dir(cam, mirrored, fixed_root);
            std::ostringstream fname;
            fname.width(4);
            fname.fill('0');
            fname << frame;
            for (const char* sub : {"frames", "masks", "annot", "heatmaps"})
              fs::create_directories(root / sub / cdir);
            write_depth_pgm((root / "frames" / cdir / (fname.str() + ".pgm")).string(), depth);
            write_mask_pgm((root / "masks" / cdir / (fname.str() + ".pgm")).string(), mask,
                           sample_camera.width, sample_camera.height);
            Json j2d = Json::array();
            for (int j = 0; j < sample.j2d_full.rows(); ++j)
              j2d.push_back(Json::array({sample.j2d_full(j, 0), sample.j2d_full(j, 1)}));
            Json j3d = Json::array();
            for (int j = 0; j < sample.j3d_cam.rows(); ++j)
              j3d.push_back(Json::array(
                  {sample.j3d_cam(j, 0), sample.j3d_cam(j, 1), sample.j3d_cam(j, 2)}));
            save_json((root / "annot" / cdir / (fname.str() + ".json")).string(),
                      Json{{"id", sample.id},
                           {"frame", frame},
                           {"camera", cam},
                           {"mirrored", static_cast<bool>(mirrored)},
                           {"fixed_root", fixed_root},
                           {"camera_model", to_json(sample_camera)},
                           {"crop", to_json(sample.crop.transform)},
                           {"normalized", to_json(sample.normalized)},
                           {"j2d_full", j2d},
                           {"j3d_cam", j3d}});
            write_heatmaps((root / "heatmaps" / cdir / (fname.str() + ".qhm")).string(),
                           sample.heatmaps);
            manifest_samples.push_back({{"id", sample.id},
                                        {"cam_dir", cdir},
                                        {"frame", fname.str()},
                                        {"mask_area", sample.mask_area}});
            sample.heatmaps = HeatmapStack{};  // stays on disk
          } else {
            sample.depth = depth;
            sample.mask = mask;
            sample.has_raster = true;
          }
          dataset.samples.push_back(std::move(sample));
        }
      }
    }
  }

  if (to_disk) {
    Json skips = Json::array();
    for (const auto& s : dataset.skipped)
      skips.push_back({{"frame", s.frame},
                       {"camera", s.camera},
                       {"mirrored", s.mirrored},
                       {"reason", s.reason}});
    save_json((fs::path(job.output_dir) / "manifest.json").string(),
              Json{{"format", "quadpose-dataset/1"},
                   {"seed", job.seed},
                   {"mirror", job.mirror},
                   {"fixed_root", job.fixed_root},
                   {"noise", {{"sigma_mm", job.noise.sigma_mm},
                              {"quant_step_mm", job.noise.quant_step_mm}}},
                   {"samples", manifest_samples},
                   {"skipped", skips}});
  }
  return dataset;
}

std::pair<DepthImage, Mask> Dataset::raster_of(const DatasetSample& sample) const {
  if (sample.has_raster) return {sample.depth, sample.mask};
  if (dir.empty()) throw ValidationError("dataset sample has no raster and no backing directory");
  std::ostringstream cdir, fname;
  cdir << "c" << sample.camera << (sample.fixed_root ? "r" : "") << (sample.mirrored ? "m" : "");
  fname.width(4);
  fname.fill('0');
  fname << sample.frame;
  const fs::path root(dir);
  DepthImage depth = read_depth_pgm(
      (root / "frames" / cdir.str() / (fname.str() + ".pgm")).string(), sample.camera_model);
  depth.camera = sample.camera_model;
  int w = 0, h = 0;
  Mask mask =
      read_mask_pgm((root / "masks" / cdir.str() / (fname.str() + ".pgm")).string(), w, h);
  return {std::move(depth), std::move(mask)};
}

Dataset load_dataset_annotations(const std::string& dir) {
  const fs::path root(dir);
  const Json manifest = load_json((root / "manifest.json").string());
  if (manifest.value("format", "") != "quadpose-dataset/1")
    throw ValidationError(dir + " is not a dataset directory");
  Dataset dataset;
  dataset.dir = dir;
  dataset.skeleton = load_skeleton((root / "skeleton.json").string());
  for (const auto& entry : manifest.at("samples")) {
    const std::string cdir = entry.at("cam_dir").get<std::string>();
    const std::string frame = entry.at("frame").get<std::string>();
    const Json a = load_json((root / "annot" / cdir / (frame + ".json")).string());
    DatasetSample sample;
    sample.id = a.at("id").get<std::string>();
    sample.frame = a.at("frame").get<int>();
    sample.camera = a.at("camera").get<int>();
    sample.mirrored = a.at("mirrored").get<bool>();
    sample.fixed_root = a.at("fixed_root").get<bool>();
    sample.mask_area = entry.value("mask_area", 0.0);
    sample.camera_model = camera_from_json(a.at("camera_model"));
    sample.crop.transform = crop_from_json(a.at("crop"));
    sample.normalized = normalized_from_json(a.at("normalized"));
    const auto& j2d = a.at("j2d_full");
    sample.j2d_full.resize(static_cast<int>(j2d.size()), 2);
    for (int j = 0; j < sample.j2d_full.rows(); ++j) {
      sample.j2d_full(j, 0) = j2d[j][0].get<Scalar>();
      sample.j2d_full(j, 1) = j2d[j][1].get<Scalar>();
    }
    const auto& j3d = a.at("j3d_cam");
    sample.j3d_cam.resize(static_cast<int>(j3d.size()), 3);
    for (int j = 0; j < sample.j3d_cam.rows(); ++j)
      for (int k = 0; k < 3; ++k) sample.j3d_cam(j, k) = j3d[j][k].get<Scalar>();
    dataset.samples.push_back(std::move(sample));
  }
  return dataset;
}

}  // namespace quadpose
