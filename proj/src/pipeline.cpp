#include "quadpose/pipeline.hpp"

#include "quadpose/canine.hpp"
#include "quadpose/io.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>

namespace quadpose {

namespace fs = std::filesystem;

namespace {

void log_kv(const std::string& key, const std::string& value) {
  std::cerr << key << "=" << value << "\n";
}

LatentTree with_skeleton(const LatentTree& tree, const Skeleton& skeleton) {
  LatentTree out = tree;
  out.skeleton = skeleton;
  out.layout = make_part_layout(skeleton);
  return out;
}

/// Per-bone median over frames where both endpoint joints clear the
/// confidence gate; bones that never qualify fall back to all frames.
VecX aggregate_bone_lengths(const Skeleton& skeleton,
                            const std::vector<PredictedJoints>& predictions) {
  const int n = skeleton.joint_count();
  VecX lengths = VecX::Zero(n);
  for (int j = 1; j < n; ++j) {
    const int parent = skeleton.joints[j].parent;
    std::vector<Scalar> confident, all;
    for (const auto& pred : predictions) {
      const Scalar len = (pred.j3d_cam.row(j) - pred.j3d_cam.row(parent)).norm();
      all.push_back(len);
      if (pred.confidence[j] > 0.5 && pred.confidence[parent] > 0.5) confident.push_back(len);
    }
    std::vector<Scalar>& pool = confident.empty() ? all : confident;
    std::nth_element(pool.begin(), pool.begin() + pool.size() / 2, pool.end());
    lengths[j] = pool[pool.size() / 2];
  }
  return lengths;
}

std::optional<OcclusionRecord> occlusion_for(const PipelineConfig& config,
                                             const DatasetSample& sample) {
  if (config.occlude_px <= 0) return std::nullopt;
  std::mt19937_64 rng(mix_seed(config.seed ^ 0xacc1u,
                               (static_cast<std::uint64_t>(sample.frame) << 8) ^
                                   static_cast<std::uint64_t>(sample.camera)));
  std::uniform_int_distribution<int> u(0, kNetInput - config.occlude_px);
  OcclusionRecord rec;
  rec.x = u(rng);
  rec.y = u(rng);
  rec.size = config.occlude_px;
  return rec;
}

}  // namespace

PipelineResult run_pipeline(const PipelineConfig& config, const Dataset& dataset) {
  if (config.prior_path.empty()) throw ValidationError("pipeline: prior path required");
  return run_pipeline(config, dataset, read_latent_tree(config.prior_path));
}

PipelineResult run_pipeline(const PipelineConfig& config, const Dataset& dataset,
                            const LatentTree& prior) {
  if (dataset.samples.empty()) throw ValidationError("pipeline: empty dataset");
  const Skeleton& gt_skeleton = dataset.skeleton;
  const int n = gt_skeleton.joint_count();

  auto predictor = make_predictor(config.predictor, config.oracle_sigma_px,
                                  config.oracle_sigma_depth, config.seed, dataset.dir);
  auto* oracle = dynamic_cast<OracleNoisePredictor*>(predictor.get());

  PipelineResult result;

  // ---- prediction pass
  std::vector<PredictedJoints> predictions;
  std::vector<std::optional<OcclusionRecord>> occlusions;
  for (const auto& sample : dataset.samples) {
    const auto occ = occlusion_for(config, sample);
    if (occ && !oracle)
      throw ValidationError("pipeline: occlusion harness requires the oracle predictor");
    if (oracle) oracle->set_occlusion(occ);
    occlusions.push_back(occ);
    predictions.push_back(predictor->predict(sample, gt_skeleton));
  }
  log_kv("predictor", predictor->name());
  log_kv("frames", std::to_string(dataset.samples.size()));

  // ---- shape / scale path
  Skeleton fit_skeleton = gt_skeleton;
  result.aggregated_bone_lengths = aggregate_bone_lengths(gt_skeleton, predictions);
  const FitOptions rough_options = [&] {
    FitOptions o;
    o.lambda2d = config.lambda2d;
    o.seed = config.seed;
    o.stage3_iterations = 0;  // stages 1-2 only
    return o;
  }();

  if (!config.known_shape) {
    if (config.shape_model_path.empty())
      throw ValidationError("pipeline: shape model path required unless --known-shape");
    const ShapeModel shape_model = read_shape_model(config.shape_model_path);
    const int bones = shape_model.length_block();
    const VecX targets = result.aggregated_bone_lengths.tail(bones);

    ShapePrediction shape = predict_shape(shape_model, targets, config.shape_components);

    // scale initialisation from the first usable frame's point cloud
    const DatasetSample& ref = dataset.samples.front();
    const auto [depth, mask] = dataset.raster_of(ref);
    const PointCloud cloud = depth_to_pointcloud(depth, mask);
    result.scale_initial = estimate_scale(cloud.points, shape.mesh.vertices);
    log_kv("scale_initial", std::to_string(result.scale_initial));

    // rough fit on the reference frame, then normal-gated alignment
    LatentTree rough_tree = with_skeleton(prior, shape.skeleton);
    const JointWeights rough_weights =
        compute_weights(shape.skeleton, canonical_joint_weights(), predictions[0].j3d_cam,
                        predictions[0].predicted, rest_bone_lengths(shape.skeleton));
    const FitResult rough =
        fit(rough_tree, predictions[0].j3d_cam, predictions[0].j2d_full, ref.camera_model,
            rough_weights, rough_options);

    const MatX3 posed = skin_mesh(shape.mesh, shape.skeleton, rough.pose);
    const MatX3 mesh_normals = vertex_normals(posed, shape.mesh.triangles);
    const MatX3 cloud_normals = pointcloud_normals(depth, cloud);
    const RefineResult refined = refine_root(posed, mesh_normals, cloud.points, cloud_normals,
                                             config.match_policy);
    MatX3 aligned = posed;
    if (refined.matched) {
      for (int i = 0; i < aligned.rows(); ++i)
        aligned.row(i) = (refined.transform * Vec3(posed.row(i).transpose())).transpose();
    }
    result.scale_refined = estimate_scale(cloud.points, aligned);
    log_kv("scale_refined", std::to_string(result.scale_refined));

    // final shape from rescaled lengths, then frozen for the sequence
    shape = predict_shape(shape_model, targets * result.scale_refined, config.shape_components);
    result.shape_coefficients = shape.coefficients;
    fit_skeleton = shape.skeleton;
  }
  result.fit_skeleton = fit_skeleton;

  // ---- per-frame full fit
  const LatentTree tree = with_skeleton(prior, fit_skeleton);
  const VecX model_lengths = rest_bone_lengths(fit_skeleton);
  const VecX w1 = canonical_joint_weights();
  FitOptions options;
  options.lambda2d = config.lambda2d;
  options.seed = config.seed;

  std::vector<FrameEval> raw_eval, refined_eval;
  for (size_t i = 0; i < dataset.samples.size(); ++i) {
    const auto& sample = dataset.samples[i];
    FrameOutput frame;
    frame.sample_id = sample.id;
    frame.raw_joints = predictions[i].j3d_cam;
    frame.confidence = predictions[i].confidence;
    frame.occlusion = occlusions[i];
    try {
      const JointWeights weights = compute_weights(
          fit_skeleton, w1, predictions[i].j3d_cam, predictions[i].predicted, model_lengths);
      const FitResult fitted = fit(tree, predictions[i].j3d_cam, predictions[i].j2d_full,
                                   sample.camera_model, weights, options);
      frame.fitted = fitted.pose;
      frame.fitted_joints = fitted.fk.positions;
      frame.loss = fitted.final_loss;
      frame.ok = true;

      FrameEval fe;
      fe.gt3d = sample.j3d_cam;
      fe.camera = sample.camera_model;
      fe.mask_area = sample.mask_area > 0.0 ? sample.mask_area : 1.0;
      fe.pred3d = predictions[i].j3d_cam;
      raw_eval.push_back(fe);
      fe.pred3d = fitted.fk.positions;
      refined_eval.push_back(fe);
    } catch (const std::exception& e) {
      frame.ok = false;
      frame.error = e.what();
      log_kv("frame_error", sample.id + ": " + e.what());
    }
    result.frames.push_back(std::move(frame));
  }
  if (refined_eval.empty()) throw ValidationError("pipeline: every frame failed");

  result.raw_report = evaluate_sequence(raw_eval, gt_skeleton);
  result.refined_report = evaluate_sequence(refined_eval, gt_skeleton);
  log_kv("raw_pa_mpjpe_all", std::to_string(result.raw_report.groups.at("All").pa_mpjpe));
  log_kv("refined_pa_mpjpe_all",
         std::to_string(result.refined_report.groups.at("All").pa_mpjpe));

  if (!config.output_dir.empty()) {
    fs::create_directories(config.output_dir);
    const fs::path out(config.output_dir);
    std::vector<Pose> fitted;
    for (const auto& f : result.frames)
      if (f.ok) fitted.push_back(f.fitted);
    save_pose_sequence((out / "fitted.jsonl").string(), fitted);
    save_json((out / "report.json").string(),
              Json{{"raw", eval_report_to_json(result.raw_report)},
                   {"refined", eval_report_to_json(result.refined_report)},
                   {"scale_initial", result.scale_initial},
                   {"scale_refined", result.scale_refined}});
    if (config.overlays) {
      fs::create_directories(out / "overlays");
      for (size_t i = 0; i < dataset.samples.size(); ++i) {
        if (!result.frames[i].ok) continue;
        const auto [depth, mask] = dataset.raster_of(dataset.samples[i]);
        write_overlay_ppm((out / "overlays" / (dataset.samples[i].id + ".ppm")).string(),
                          depth, fit_skeleton, result.frames[i].fitted_joints);
      }
    }
  }
  return result;
}

Json eval_report_to_json(const EvalReport& report) {
  auto group_json = [](const GroupMetrics& g) {
    return Json{{"joints", g.joint_count}, {"mpjpe", g.mpjpe},   {"pa_mpjpe", g.pa_mpjpe},
                {"pck2d", g.pck2d},        {"pck3d", g.pck3d},   {"pa_pck3d", g.pa_pck3d}};
  };
  Json groups = Json::object();
  for (const auto& [name, g] : report.groups) groups[name] = group_json(g);
  Json frames = Json::array();
  for (const auto& fm : report.per_frame) {
    Json f = Json::object();
    for (const auto& [name, g] : fm) f[name] = group_json(g);
    frames.push_back(f);
  }
  return Json{{"groups", groups}, {"per_frame", frames}};
}

namespace {

struct Rgb {
  std::uint8_t r, g, b;
};

bool left_side(const std::string& name) {
  return name.find("_fl_") != std::string::npos || name.find("_bl_") != std::string::npos ||
         name.rfind("ear_l", 0) == 0;
}

bool right_side(const std::string& name) {
  return name.find("_fr_") != std::string::npos || name.find("_br_") != std::string::npos ||
         name.rfind("ear_r", 0) == 0;
}

void draw_line(std::vector<Rgb>& img, int w, int h, Vec2 a, Vec2 b, Rgb color) {
  const int steps = static_cast<int>((b - a).norm()) + 1;
  for (int s = 0; s <= steps; ++s) {
    const Vec2 p = a + (b - a) * (static_cast<Scalar>(s) / steps);
    const int u = static_cast<int>(std::lround(p.x()));
    const int v = static_cast<int>(std::lround(p.y()));
    if (u < 0 || v < 0 || u >= w || v >= h) continue;
    img[static_cast<size_t>(v) * w + u] = color;
  }
}

}  // namespace

void write_overlay_ppm(const std::string& path, const DepthImage& depth,
                       const Skeleton& skeleton, const MatX3& joints_cam) {
  const int w = depth.width, h = depth.height;
  Scalar lo = 1e18, hi = 0.0;
  for (Scalar d : depth.raster)
    if (d > 0.0) {
      lo = std::min(lo, d);
      hi = std::max(hi, d);
    }
  std::vector<Rgb> img(static_cast<size_t>(w) * h, Rgb{0, 0, 0});
  for (size_t i = 0; i < depth.raster.size(); ++i) {
    const Scalar d = depth.raster[i];
    if (d <= 0.0) continue;
    const auto g = static_cast<std::uint8_t>(
        std::clamp(230.0 - 180.0 * (d - lo) / std::max(hi - lo, 1.0), 30.0, 230.0));
    img[i] = Rgb{g, g, g};
  }

  const Projection proj = project(depth.camera, joints_cam);
  for (int j = 1; j < skeleton.joint_count(); ++j) {
    if (!proj.valid[j] || !proj.valid[skeleton.joints[j].parent]) continue;
    Rgb color{255, 255, 255};
    if (left_side(skeleton.joints[j].name)) color = Rgb{255, 160, 20};   // orange
    else if (right_side(skeleton.joints[j].name)) color = Rgb{230, 30, 30};  // red
    draw_line(img, w, h, proj.pixels.row(skeleton.joints[j].parent).transpose(),
              proj.pixels.row(j).transpose(), color);
  }

  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path);
  f << "P6\n" << w << " " << h << "\n255\n";
  for (const auto& px : img) {
    f.put(static_cast<char>(px.r));
    f.put(static_cast<char>(px.g));
    f.put(static_cast<char>(px.b));
  }
}

}  // namespace quadpose
