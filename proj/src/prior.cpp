#include "quadpose/prior.hpp"

#include "quadpose/io.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>

namespace quadpose {

namespace {

bool name_has_prefix(const std::string& name, const char* prefix) {
  return name.rfind(prefix, 0) == 0;
}

}  // namespace

PartLayout make_part_layout(const Skeleton& skeleton) {
  struct Rule {
    const char* part;
    const char* prefix;
  };
  // data order: tail, BL leg, FL leg, BR leg, FR leg, spine, head
  const Rule rules[] = {{"tail", "tail_"},   {"leg_bl", "leg_bl_"}, {"leg_fl", "leg_fl_"},
                        {"leg_br", "leg_br_"}, {"leg_fr", "leg_fr_"}, {"spine", "spine_"},
                        {"head", nullptr}};
  PartLayout layout;
  int col = 0;
  for (const auto& rule : rules) {
    PartLayout::Part part;
    part.name = rule.part;
    for (int i = 1; i < skeleton.joint_count(); ++i) {
      const auto& j = skeleton.joints[i];
      const bool in_part = rule.prefix ? name_has_prefix(j.name, rule.prefix)
                                       : j.group == JointGroup::head;
      if (!in_part) continue;
      if (j.rotates()) part.rot_joints.push_back(i);
      if (j.has_translation) part.trans_joints.push_back(i);
    }
    part.col_start = col;
    col += 4 * static_cast<int>(part.rot_joints.size()) +
           3 * static_cast<int>(part.trans_joints.size());
    part.col_end = col;
    if (part.rot_joints.empty() && part.trans_joints.empty())
      throw ValidationError("part layout: no joints matched part '" + part.name + "'");
    layout.parts.push_back(std::move(part));
  }
  layout.dim = col;
  return layout;
}

VecX pose_to_vector(const Skeleton& skeleton, const PartLayout& layout, const Pose& pose) {
  if (static_cast<int>(pose.joint_rotations.size()) != skeleton.joint_count())
    throw ValidationError("pose_to_vector: pose does not match skeleton");
  VecX v(layout.dim);
  for (const auto& part : layout.parts) {
    int k = part.col_start;
    for (int j : part.rot_joints) {
      const Quat q = canonicalized(pose.joint_rotations[j]);
      v[k++] = q.x();
      v[k++] = q.y();
      v[k++] = q.z();
      v[k++] = q.w();
    }
    for (int j : part.trans_joints) {
      v.segment<3>(k) = pose.joint_translations[j];
      k += 3;
    }
  }
  return v;
}

Pose vector_to_pose(const Skeleton& skeleton, const PartLayout& layout, const VecX& v) {
  if (v.size() != layout.dim) throw ValidationError("vector_to_pose: dimension mismatch");
  Pose pose = Pose::rest(skeleton);
  for (const auto& part : layout.parts) {
    int k = part.col_start;
    for (int j : part.rot_joints) {
      Quat q(v[k + 3], v[k], v[k + 1], v[k + 2]);
      pose.joint_rotations[j] = q.norm() > 1e-9 ? canonicalized(q) : Quat::Identity();
      k += 4;
    }
    for (int j : part.trans_joints) {
      pose.joint_translations[j] = v.segment<3>(k);
      k += 3;
    }
  }
  return pose;
}

Scalar pose_dissimilarity(const PartLayout& layout, const VecX& a, const VecX& b) {
  Scalar sum = 0.0;
  for (const auto& part : layout.parts) {
    int k = part.col_start;
    for (size_t r = 0; r < part.rot_joints.size(); ++r, k += 4) {
      const Scalar dot = a.segment<4>(k).dot(b.segment<4>(k));
      sum += 1.0 - std::min<Scalar>(std::abs(dot), 1.0);
    }
  }
  return sum;
}

std::vector<VecX> dedup_poses(const Skeleton& skeleton, const PartLayout& layout,
                              const std::vector<VecX>& frames, Scalar threshold) {
  if (frames.empty()) throw ValidationError("dedup_poses: empty input");
  if (threshold <= 0.0) throw ValidationError("dedup_poses: threshold must be positive");
  std::vector<VecX> kept;
  for (const auto& frame : frames) {
    Scalar min_dissim = std::numeric_limits<Scalar>::max();
    for (const auto& s : kept)
      min_dissim = std::min(min_dissim, pose_dissimilarity(layout, frame, s));
    if (kept.empty() || min_dissim > threshold) kept.push_back(frame);
  }
  const size_t unique_count = kept.size();
  for (size_t i = 0; i < unique_count; ++i) {
    const Pose mirrored = mirror_pose(skeleton, vector_to_pose(skeleton, layout, kept[i]));
    kept.push_back(pose_to_vector(skeleton, layout, mirrored));
  }
  return kept;
}

LatentTree train_tree(const Skeleton& skeleton, const std::vector<VecX>& training_set,
                      const TreeDims& dims) {
  if (training_set.empty()) throw ValidationError("train_tree: empty training set");
  LatentTree tree;
  tree.skeleton = skeleton;
  tree.layout = make_part_layout(skeleton);
  tree.frames = static_cast<int>(training_set.size());

  const int f = tree.frames;
  auto clamp_dim = [&](int q) { return std::min(q, std::max(1, f / 2)); };

  MatX y(f, tree.layout.dim);
  for (int i = 0; i < f; ++i) {
    if (training_set[i].size() != tree.layout.dim)
      throw ValidationError("train_tree: pose vector dimension mismatch");
    y.row(i) = training_set[i].transpose();
  }

  for (const auto& part : tree.layout.parts) {
    GplvmNode node = train_node(y.middleCols(part.col_start, part.col_end - part.col_start),
                                clamp_dim(dims.leaf));
    node.name = part.name;
    node.col_start = part.col_start;
    node.col_end = part.col_end;
    tree.leaves.push_back(std::move(node));
  }

  const int lq = tree.leaves[PartLayout::kLegFirst].latent_dim;
  MatX leg_latents(f, 0);
  for (int l = 0; l < PartLayout::kLegCount; ++l) {
    const auto& leaf = tree.leaves[PartLayout::kLegFirst + l];
    leg_latents.conservativeResize(f, leg_latents.cols() + leaf.latent_dim);
    leg_latents.rightCols(leaf.latent_dim) = leaf.latents;
  }
  tree.legs = train_node(leg_latents, clamp_dim(dims.legs));
  tree.legs.name = "legs";
  (void)lq;

  // root data: tail, legs aggregate, spine, head latents
  MatX root_data(f, 0);
  for (const MatX* block : {&tree.leaves[0].latents, &tree.legs.latents,
                            &tree.leaves[5].latents, &tree.leaves[6].latents}) {
    root_data.conservativeResize(f, root_data.cols() + block->cols());
    root_data.rightCols(block->cols()) = *block;
  }
  tree.root = train_node(root_data, clamp_dim(dims.root));
  tree.root.name = "root";
  return tree;
}

TreeCoords propagate_root(const LatentTree& tree, const VecX& root_coord) {
  TreeCoords coords;
  coords.root = root_coord;
  coords.leaf.resize(tree.leaves.size());

  const VecX root_out = tree.root.posterior_mean(root_coord);
  int k = 0;
  coords.leaf[0] = root_out.segment(k, tree.leaves[0].latent_dim);
  k += tree.leaves[0].latent_dim;
  coords.legs = root_out.segment(k, tree.legs.latent_dim);
  k += tree.legs.latent_dim;
  coords.leaf[5] = root_out.segment(k, tree.leaves[5].latent_dim);
  k += tree.leaves[5].latent_dim;
  coords.leaf[6] = root_out.segment(k, tree.leaves[6].latent_dim);

  const VecX legs_out = tree.legs.posterior_mean(coords.legs);
  int m = 0;
  for (int l = 0; l < PartLayout::kLegCount; ++l) {
    const int q = tree.leaves[PartLayout::kLegFirst + l].latent_dim;
    coords.leaf[PartLayout::kLegFirst + l] = legs_out.segment(m, q);
    m += q;
  }
  return coords;
}

TreeCoords training_coords(const LatentTree& tree, int frame) {
  TreeCoords coords;
  coords.leaf.resize(tree.leaves.size());
  for (size_t i = 0; i < tree.leaves.size(); ++i)
    coords.leaf[i] = tree.leaves[i].latents.row(frame).transpose();
  coords.legs = tree.legs.latents.row(frame).transpose();
  coords.root = tree.root.latents.row(frame).transpose();
  return coords;
}

DecodeResult decode_pose(const LatentTree& tree, const TreeCoords& coords,
                         const Quat& root_rotation, const Vec3& root_translation,
                         const std::optional<std::array<Vec3, 2>>& shoulder_translations) {
  VecX v = VecX::Zero(tree.layout.dim);
  for (size_t p = 0; p < tree.leaves.size(); ++p) {
    const auto& leaf = tree.leaves[p];
    v.segment(leaf.col_start, leaf.col_end - leaf.col_start) =
        leaf.posterior_mean(coords.leaf[p]);
  }
  DecodeResult out;
  out.pose = vector_to_pose(tree.skeleton, tree.layout, v);
  out.pose.root_rotation = canonicalized(root_rotation);
  out.pose.root_translation = root_translation;
  if (shoulder_translations) {
    const int fl = tree.skeleton.find("leg_fl_shoulder");
    const int fr = tree.skeleton.find("leg_fr_shoulder");
    if (fl >= 0) out.pose.joint_translations[fl] = (*shoulder_translations)[0];
    if (fr >= 0) out.pose.joint_translations[fr] = (*shoulder_translations)[1];
  }
  out.fk = forward_kinematics(tree.skeleton, out.pose);
  return out;
}

JointWeights compute_weights(const Skeleton& skeleton, const VecX& w1,
                             const MatX3& predicted_joints, const std::vector<bool>& predicted,
                             const VecX& model_bone_lengths) {
  const int n = skeleton.joint_count();
  if (w1.size() != n || predicted_joints.rows() != n ||
      static_cast<int>(predicted.size()) != n || model_bone_lengths.size() != n)
    throw ValidationError("compute_weights: dimension mismatch");

  JointWeights out;
  out.w1 = w1;
  out.w2 = VecX::Ones(n);
  const VecX measured = bone_lengths(skeleton, predicted_joints);
  for (int j = 1; j < n; ++j) {
    const Scalar l = model_bone_lengths[j];
    if (l <= 0.0) throw ValidationError("compute_weights: non-positive model bone length");
    const Scalar deviation = std::abs(l - measured[j]) / l;
    out.w2[j] = deviation <= 0.0 ? 1.0 : std::min<Scalar>(1.0, 1.0 / deviation);
  }
  out.effective = out.w1.cwiseProduct(out.w2);
  for (int j = 0; j < n; ++j)
    if (!predicted[j]) out.effective[j] = 0.0;
  return out;
}

namespace {

inline Scalar soft_norm(const Vec3& v) { return std::sqrt(v.squaredNorm() + 1e-12); }
inline Scalar soft_norm2(const Vec2& v) { return std::sqrt(v.squaredNorm() + 1e-12); }

Scalar loss_from_positions(const MatX3& model_joints, const MatX3& predicted_j3d,
                           const MatX2& predicted_j2d, const CameraModel& camera,
                           const VecX& weights, Scalar lambda2d) {
  Scalar loss = 0.0;
  for (int b = 0; b < model_joints.rows(); ++b) {
    const Scalar w = weights[b];
    if (w <= 0.0) continue;
    const Vec3 model = model_joints.row(b).transpose();
    loss += w * soft_norm(Vec3(predicted_j3d.row(b).transpose()) - model);
    if (lambda2d > 0.0) {
      if (model.z() <= 1.0) {
        loss += lambda2d * w * 1e6 * (2.0 - model.z());  // behind-camera guard
        continue;
      }
      const Vec2 proj(camera.fx * model.x() / model.z() + camera.cx,
                      camera.fy * model.y() / model.z() + camera.cy);
      loss += lambda2d * w * soft_norm2(Vec2(predicted_j2d.row(b).transpose()) - proj);
    }
  }
  return loss;
}

// weighted rotation-only alignment about a shared origin
Quat solve_rotation(const MatX3& source, const MatX3& target, const VecX& weights) {
  Mat3 h = Mat3::Zero();
  for (int i = 0; i < source.rows(); ++i)
    h += weights[i] * source.row(i).transpose() * target.row(i);
  Eigen::JacobiSVD<Mat3> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 d = Mat3::Identity();
  d(2, 2) = (svd.matrixV() * svd.matrixU().transpose()).determinant() < 0.0 ? -1.0 : 1.0;
  return Quat(Mat3(svd.matrixV() * d * svd.matrixU().transpose()));
}

MatX3 rigidly_moved(const MatX3& local, const Quat& r, const Vec3& t) {
  MatX3 out(local.rows(), 3);
  const Mat3 rm = r.toRotationMatrix();
  for (int i = 0; i < local.rows(); ++i)
    out.row(i) = (rm * local.row(i).transpose() + t).transpose();
  return out;
}

}  // namespace

Scalar fit_loss(const Skeleton& skeleton, const Pose& pose, const MatX3& predicted_j3d,
                const MatX2& predicted_j2d, const CameraModel& camera, const VecX& weights,
                Scalar lambda2d) {
  const FkResult fk = forward_kinematics(skeleton, pose);
  return loss_from_positions(fk.positions, predicted_j3d, predicted_j2d, camera, weights,
                             lambda2d);
}

FitResult fit(const LatentTree& tree, const MatX3& predicted_j3d, const MatX2& predicted_j2d,
              const CameraModel& camera, const JointWeights& weights,
              const FitOptions& options) {
  const VecX& w = weights.effective;
  if (w.maxCoeff() <= 0.0)
    throw ValidationError("fit: no predicted joints with positive weight");

  const Vec3 t_fixed = predicted_j3d.row(0).transpose();
  auto loss_of = [&](const MatX3& positions) {
    return loss_from_positions(positions, predicted_j3d, predicted_j2d, camera, w,
                               options.lambda2d);
  };

  // ---- stage 1: k-means candidates, closed-form rotation about the root
  const MatX candidates =
      kmeans(tree.root.latents, options.kmeans_k, options.kmeans_restarts, options.seed);
  Scalar best_loss = std::numeric_limits<Scalar>::max();
  VecX best_root;
  Quat best_rot = Quat::Identity();
  for (int c = 0; c < candidates.rows(); ++c) {
    const TreeCoords coords = propagate_root(tree, candidates.row(c).transpose());
    const DecodeResult local = decode_pose(tree, coords, Quat::Identity(), Vec3::Zero());
    MatX3 target = predicted_j3d;
    target.rowwise() -= t_fixed.transpose();
    const Quat rot = solve_rotation(local.fk.positions, target, w);
    const Scalar loss = loss_of(rigidly_moved(local.fk.positions, rot, t_fixed));
    if (loss < best_loss) {
      best_loss = loss;
      best_root = candidates.row(c).transpose();
      best_rot = rot;
    }
  }

  FitResult result;
  result.stage_losses[0] = best_loss;

  // ---- stage 2: refine root latent + root rotation (translation stays fixed)
  const int rq = tree.root.latent_dim;
  VecX x2(rq + 4);
  x2.head(rq) = best_root;
  x2.segment<4>(rq) = best_rot.coeffs();
  auto stage2_value = [&](const VecX& x) {
    Quat q(x[rq + 3], x[rq], x[rq + 1], x[rq + 2]);
    const Scalar qn = q.norm();
    if (qn < 1e-6) return 1e30;
    q.coeffs() /= qn;
    const TreeCoords coords = propagate_root(tree, x.head(rq));
    const DecodeResult local = decode_pose(tree, coords, Quat::Identity(), Vec3::Zero());
    return loss_of(rigidly_moved(local.fk.positions, q, t_fixed)) + 10.0 * (qn - 1.0) * (qn - 1.0);
  };
  LbfgsOptions l2;
  l2.max_iterations = options.stage2_iterations;
  l2.rel_tolerance = 1e-9;
  const LbfgsResult s2 = minimize_lbfgs(with_numeric_gradient(stage2_value, 1e-5), x2, l2);

  VecX root_coord = best_root;
  Quat rot2 = best_rot;
  Scalar stage2_loss = best_loss;
  {
    Quat q(s2.x[rq + 3], s2.x[rq], s2.x[rq + 1], s2.x[rq + 2]);
    if (q.norm() > 1e-6) {
      q.normalize();
      const TreeCoords coords = propagate_root(tree, s2.x.head(rq));
      const DecodeResult local = decode_pose(tree, coords, Quat::Identity(), Vec3::Zero());
      const Scalar clean = loss_of(rigidly_moved(local.fk.positions, q, t_fixed));
      if (clean <= best_loss) {
        root_coord = s2.x.head(rq);
        rot2 = q;
        stage2_loss = clean;
      } else {
        result.divergence_warning = true;
      }
    } else {
      result.divergence_warning = true;
    }
  }
  result.stage_losses[1] = stage2_loss;

  // ---- stage 3: leaves + root rotation + root translation + shoulders
  TreeCoords coords3 = propagate_root(tree, root_coord);
  const DecodeResult init_decode = decode_pose(tree, coords3, rot2, t_fixed);
  const int fl = tree.skeleton.find("leg_fl_shoulder");
  const int fr = tree.skeleton.find("leg_fr_shoulder");
  std::array<Vec3, 2> shoulders{init_decode.pose.joint_translations[fl],
                                init_decode.pose.joint_translations[fr]};

  std::vector<int> leaf_offset(tree.leaves.size());
  int leaf_total = 0;
  for (size_t p = 0; p < tree.leaves.size(); ++p) {
    leaf_offset[p] = leaf_total;
    leaf_total += tree.leaves[p].latent_dim;
  }
  VecX x3(leaf_total + 4 + 3 + 6);
  for (size_t p = 0; p < tree.leaves.size(); ++p)
    x3.segment(leaf_offset[p], tree.leaves[p].latent_dim) = coords3.leaf[p];
  x3.segment<4>(leaf_total) = rot2.coeffs();
  x3.segment<3>(leaf_total + 4) = t_fixed;
  x3.segment<3>(leaf_total + 7) = shoulders[0];
  x3.segment<3>(leaf_total + 10) = shoulders[1];

  auto unpack3 = [&](const VecX& x, TreeCoords& coords, Quat& q, Vec3& t,
                     std::array<Vec3, 2>& sh) {
    coords = coords3;
    for (size_t p = 0; p < tree.leaves.size(); ++p)
      coords.leaf[p] = x.segment(leaf_offset[p], tree.leaves[p].latent_dim);
    q = Quat(x[leaf_total + 3], x[leaf_total], x[leaf_total + 1], x[leaf_total + 2]);
    t = x.segment<3>(leaf_total + 4);
    sh[0] = x.segment<3>(leaf_total + 7);
    sh[1] = x.segment<3>(leaf_total + 10);
  };
  auto stage3_value = [&](const VecX& x) {
    TreeCoords coords;
    Quat q;
    Vec3 t;
    std::array<Vec3, 2> sh;
    unpack3(x, coords, q, t, sh);
    const Scalar qn = q.norm();
    if (qn < 1e-6) return 1e30;
    q.coeffs() /= qn;
    Scalar penalty = 10.0 * (qn - 1.0) * (qn - 1.0);
    for (const auto& s : sh)
      for (int k = 0; k < 3; ++k) {
        const Scalar over = std::abs(s[k]) - options.shoulder_bound_mm;
        if (over > 0.0) penalty += 1e3 * over * over;
      }
    const DecodeResult dec = decode_pose(tree, coords, q, t, sh);
    return loss_of(dec.fk.positions) + penalty;
  };
  LbfgsOptions l3;
  l3.max_iterations = options.stage3_iterations;
  l3.rel_tolerance = 1e-9;
  const LbfgsResult s3 = minimize_lbfgs(with_numeric_gradient(stage3_value, 1e-5), x3, l3);

  // monotone stage acceptance on the clean loss
  TreeCoords final_coords = coords3;
  Quat final_rot = rot2;
  Vec3 final_t = t_fixed;
  std::array<Vec3, 2> final_sh = shoulders;
  Scalar stage3_loss = stage2_loss;
  {
    TreeCoords coords;
    Quat q;
    Vec3 t;
    std::array<Vec3, 2> sh;
    unpack3(s3.x, coords, q, t, sh);
    if (q.norm() > 1e-6) {
      q.normalize();
      for (auto& s : sh)
        for (int k = 0; k < 3; ++k)
          s[k] = std::clamp(s[k], -options.shoulder_bound_mm, options.shoulder_bound_mm);
      const DecodeResult dec = decode_pose(tree, coords, q, t, sh);
      const Scalar clean = loss_of(dec.fk.positions);
      if (clean <= stage2_loss) {
        final_coords = coords;
        final_rot = q;
        final_t = t;
        final_sh = sh;
        stage3_loss = clean;
      } else {
        result.divergence_warning = true;
      }
    }
  }
  result.stage_losses[2] = stage3_loss;
  result.final_loss = stage3_loss;

  const DecodeResult final_decode = decode_pose(tree, final_coords, final_rot, final_t, final_sh);
  result.pose = final_decode.pose;
  result.fk = final_decode.fk;
  result.coords = final_coords;
  return result;
}

void write_latent_tree(const std::string& json_path, const std::string& blob_path,
                       const LatentTree& tree) {
  BlobWriter blobs(blob_path);
  Json nodes = Json::array();
  auto add_node = [&](const GplvmNode& node, const std::string& key) {
    blobs.add(key + ".latents", node.latents);
    blobs.add(key + ".data", node.data);
    blobs.add(key + ".col_mean", node.col_mean);
    blobs.add(key + ".col_std", node.col_std);
    blobs.add(key + ".bc_weights", node.bc_weights);
    nodes.push_back({{"key", key},
                     {"name", node.name},
                     {"latent_dim", node.latent_dim},
                     {"col_start", node.col_start},
                     {"col_end", node.col_end},
                     {"bc_length", node.bc_length},
                     {"kernel",
                      {{"log_signal", node.kernel.log_signal},
                       {"log_length", node.kernel.log_length},
                       {"log_noise", node.kernel.log_noise}}}});
  };
  for (size_t i = 0; i < tree.leaves.size(); ++i)
    add_node(tree.leaves[i], "leaf" + std::to_string(i));
  add_node(tree.legs, "legs");
  add_node(tree.root, "root");
  blobs.close();

  save_json(json_path, Json{{"format", "quadpose-prior/1"},
                            {"frames", tree.frames},
                            {"skeleton", to_json(tree.skeleton)},
                            {"blob_file", blob_path},
                            {"blobs", blobs.manifest()},
                            {"nodes", nodes}});
}

LatentTree read_latent_tree(const std::string& json_path) {
  const Json j = load_json(json_path);
  if (j.value("format", "") != "quadpose-prior/1")
    throw ValidationError(json_path + " is not a prior archive");
  LatentTree tree;
  tree.frames = j.at("frames").get<int>();
  tree.skeleton = skeleton_from_json(j.at("skeleton"));
  tree.layout = make_part_layout(tree.skeleton);

  const BlobReader blobs(j.at("blob_file").get<std::string>(), j.at("blobs"));
  auto load_node = [&](const Json& meta) {
    GplvmNode node;
    const std::string key = meta.at("key").get<std::string>();
    node.name = meta.at("name").get<std::string>();
    node.latent_dim = meta.at("latent_dim").get<int>();
    node.col_start = meta.at("col_start").get<int>();
    node.col_end = meta.at("col_end").get<int>();
    node.bc_length = meta.at("bc_length").get<Scalar>();
    node.kernel.log_signal = meta.at("kernel").at("log_signal").get<Scalar>();
    node.kernel.log_length = meta.at("kernel").at("log_length").get<Scalar>();
    node.kernel.log_noise = meta.at("kernel").at("log_noise").get<Scalar>();
    node.latents = blobs.matrix(key + ".latents");
    node.data = blobs.matrix(key + ".data");
    node.col_mean = blobs.vector(key + ".col_mean");
    node.col_std = blobs.vector(key + ".col_std");
    node.bc_weights = blobs.matrix(key + ".bc_weights");
    node.refresh_posterior();
    return node;
  };
  for (const auto& meta : j.at("nodes")) {
    const std::string key = meta.at("key").get<std::string>();
    if (key.rfind("leaf", 0) == 0)
      tree.leaves.push_back(load_node(meta));
    else if (key == "legs")
      tree.legs = load_node(meta);
    else
      tree.root = load_node(meta);
  }
  return tree;
}

}  // namespace quadpose
