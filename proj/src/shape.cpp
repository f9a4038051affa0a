#include "quadpose/shape.hpp"

#include "quadpose/io.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>

namespace quadpose {

namespace {

VecX exemplar_vector(const ShapeExemplar& e) {
  const int nv = e.mesh.vertex_count();
  const int nj = e.skeleton.joint_count();
  VecX x(3 * nv + (nj - 1) + 4 * nj);
  int k = 0;
  for (int v = 0; v < nv; ++v)
    for (int c = 0; c < 3; ++c) x[k++] = e.mesh.vertices(v, c);
  const VecX lengths = rest_bone_lengths(e.skeleton);
  for (int j = 1; j < nj; ++j) x[k++] = lengths[j];
  for (int j = 0; j < nj; ++j) {
    const Quat q = canonicalized(e.neutral_pose.joint_rotations[j]);
    x[k++] = q.x();
    x[k++] = q.y();
    x[k++] = q.z();
    x[k++] = q.w();
  }
  return x;
}

}  // namespace

ShapeModel build_shape_model(const std::vector<ShapeExemplar>& corpus) {
  if (corpus.size() < 2) throw ValidationError("shape corpus needs at least 2 exemplars");
  const auto& first = corpus.front();
  for (const auto& e : corpus) {
    if (e.mesh.vertex_count() != first.mesh.vertex_count() ||
        e.mesh.triangles.rows() != first.mesh.triangles.rows())
      throw ValidationError("shape corpus mesh topology mismatch");
    if (e.skeleton.joint_count() != first.skeleton.joint_count())
      throw ValidationError("shape corpus skeleton joint count mismatch");
  }

  ShapeModel model;
  model.vertex_count = first.mesh.vertex_count();
  model.joint_count = first.skeleton.joint_count();
  model.triangles = first.mesh.triangles;
  model.skin_weights = first.mesh.skin_weights;
  model.template_skeleton = first.skeleton;

  const int n = static_cast<int>(corpus.size());
  MatX data(n, model.dim());
  for (int i = 0; i < n; ++i) data.row(i) = exemplar_vector(corpus[i]).transpose();

  model.mean = data.colwise().mean().transpose();
  MatX centered = data.rowwise() - model.mean.transpose();

  // one standardization scale per block keeps mm-vertices, mm-lengths and
  // unit-quaternion components comparable
  const int blocks[3][2] = {{0, model.vertex_block()},
                            {model.vertex_block(), model.length_block()},
                            {model.vertex_block() + model.length_block(), model.rotation_block()}};
  for (int b = 0; b < 3; ++b) {
    const auto seg = centered.middleCols(blocks[b][0], blocks[b][1]);
    const Scalar var = seg.array().square().sum() / (seg.size() > 0 ? seg.size() : 1);
    model.block_scales[b] = std::max(std::sqrt(var), 1e-12);
    centered.middleCols(blocks[b][0], blocks[b][1]) /= model.block_scales[b];
  }

  Eigen::JacobiSVD<MatX> svd(centered, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const VecX singular = svd.singularValues();
  int rank = 0;
  for (int i = 0; i < singular.size(); ++i)
    if (singular[i] > 1e-10 * singular[0]) ++rank;
  rank = std::min(rank, n - 1);
  model.components = svd.matrixV().leftCols(rank).transpose();
  model.variances = singular.head(rank).array().square() / std::max(n - 1, 1);
  return model;
}

namespace {

VecX block_scale_vector(const ShapeModel& model) {
  VecX s(model.dim());
  s.segment(0, model.vertex_block()).setConstant(model.block_scales[0]);
  s.segment(model.vertex_block(), model.length_block()).setConstant(model.block_scales[1]);
  s.segment(model.vertex_block() + model.length_block(), model.rotation_block())
      .setConstant(model.block_scales[2]);
  return s;
}

ShapePrediction reconstruct(const ShapeModel& model, const VecX& coefficients) {
  const VecX s = block_scale_vector(model);
  const VecX x =
      model.mean + (s.array() * (model.components.topRows(coefficients.size()).transpose() *
                                 coefficients)
                                    .array())
                       .matrix();

  ShapePrediction pred;
  pred.coefficients = coefficients;
  pred.mesh.vertices.resize(model.vertex_count, 3);
  for (int v = 0; v < model.vertex_count; ++v)
    for (int c = 0; c < 3; ++c) pred.mesh.vertices(v, c) = x[3 * v + c];
  pred.mesh.triangles = model.triangles;
  pred.mesh.skin_weights = model.skin_weights;

  pred.skeleton = model.template_skeleton;
  for (int j = 1; j < model.joint_count; ++j) {
    const Scalar len = std::max(x[model.vertex_block() + j - 1], 1e-6);
    Vec3 dir = model.template_skeleton.joints[j].rest_offset;
    const Scalar dn = dir.norm();
    if (dn > 1e-12) dir /= dn;
    pred.skeleton.joints[j].rest_offset = dir * len;
  }

  pred.neutral_pose = Pose::rest(pred.skeleton);
  const int rot0 = model.vertex_block() + model.length_block();
  for (int j = 0; j < model.joint_count; ++j) {
    Quat q(x[rot0 + 4 * j + 3], x[rot0 + 4 * j], x[rot0 + 4 * j + 1], x[rot0 + 4 * j + 2]);
    if (q.norm() < 1e-9) q = Quat::Identity();
    pred.neutral_pose.joint_rotations[j] = canonicalized(q);
  }
  return pred;
}

}  // namespace

ShapePrediction predict_shape(const ShapeModel& model, const VecX& target_bone_lengths,
                              int n_components) {
  if (n_components < 1 || n_components > model.rank())
    throw ValidationError("predict_shape: n_components exceeds model rank");
  if (target_bone_lengths.size() != model.length_block())
    throw ValidationError("predict_shape: expected " + std::to_string(model.length_block()) +
                          " bone lengths");
  if (target_bone_lengths.cwiseAbs().maxCoeff() <= 0.0)
    throw ValidationError("predict_shape: degenerate all-zero targets");

  // bone-length rows of the de-standardized reconstruction, solved for the
  // coefficients in least squares
  MatX a(model.length_block(), n_components);
  for (int c = 0; c < n_components; ++c)
    a.col(c) = model.block_scales[1] *
               model.components.row(c).segment(model.vertex_block(), model.length_block())
                   .transpose();
  const VecX rhs =
      target_bone_lengths - model.mean.segment(model.vertex_block(), model.length_block());
  const VecX coefficients = a.colPivHouseholderQr().solve(rhs);
  return reconstruct(model, coefficients);
}

Scalar estimate_scale(const MatX3& pointcloud, const MatX3& mesh_vertices) {
  if (pointcloud.rows() < 100)
    throw ValidationError("estimate_scale: needs at least 100 points");
  auto robust_extent = [](const MatX3& pts) {
    std::vector<Scalar> ys(pts.rows());
    for (int i = 0; i < pts.rows(); ++i) ys[i] = pts(i, 1);
    std::sort(ys.begin(), ys.end());
    const auto at = [&](Scalar q) {
      return ys[static_cast<size_t>(q * (ys.size() - 1))];
    };
    return at(0.9) - at(0.1);
  };
  const Scalar mesh_extent = robust_extent(mesh_vertices);
  if (mesh_extent <= 0.0) throw ValidationError("estimate_scale: flat mesh");
  return robust_extent(pointcloud) / mesh_extent;
}

void write_shape_model(const std::string& json_path, const std::string& blob_path,
                       const ShapeModel& model) {
  BlobWriter blobs(blob_path);
  blobs.add("mean", model.mean);
  blobs.add("components", model.components);
  blobs.add("variances", model.variances);
  blobs.close();

  Json tris = Json::array();
  for (int t = 0; t < model.triangles.rows(); ++t)
    tris.push_back(Json::array(
        {model.triangles(t, 0), model.triangles(t, 1), model.triangles(t, 2)}));
  Json weights = Json::array();
  for (const auto& vw : model.skin_weights) {
    Json entry = Json::array();
    for (const auto& sw : vw) entry.push_back(Json::array({sw.joint, sw.weight}));
    weights.push_back(entry);
  }
  const Json j = {{"format", "quadpose-shape-model/1"},
                  {"vertex_count", model.vertex_count},
                  {"joint_count", model.joint_count},
                  {"rank", model.rank()},
                  {"block_scales", Json::array({model.block_scales[0], model.block_scales[1],
                                                model.block_scales[2]})},
                  {"blob_file", blob_path},
                  {"blobs", blobs.manifest()},
                  {"triangles", tris},
                  {"skin_weights", weights},
                  {"template_skeleton", to_json(model.template_skeleton)}};
  save_json(json_path, j);
}

ShapeModel read_shape_model(const std::string& json_path) {
  const Json j = load_json(json_path);
  if (j.value("format", "") != "quadpose-shape-model/1")
    throw ValidationError(json_path + " is not a shape model archive");
  ShapeModel model;
  model.vertex_count = j.at("vertex_count").get<int>();
  model.joint_count = j.at("joint_count").get<int>();
  for (int b = 0; b < 3; ++b) model.block_scales[b] = j.at("block_scales")[b].get<Scalar>();

  const BlobReader blobs(j.at("blob_file").get<std::string>(), j.at("blobs"));
  model.mean = blobs.vector("mean");
  model.components = blobs.matrix("components");
  model.variances = blobs.vector("variances");

  const auto& tris = j.at("triangles");
  model.triangles.resize(static_cast<int>(tris.size()), 3);
  for (int t = 0; t < model.triangles.rows(); ++t)
    for (int k = 0; k < 3; ++k) model.triangles(t, k) = tris[t][k].get<int>();
  for (const auto& entry : j.at("skin_weights")) {
    std::vector<SkinWeight> vw;
    for (const auto& sw : entry) vw.push_back({sw[0].get<int>(), sw[1].get<Scalar>()});
    model.skin_weights.push_back(std::move(vw));
  }
  model.template_skeleton = skeleton_from_json(j.at("template_skeleton"));
  return model;
}

}  // namespace quadpose
