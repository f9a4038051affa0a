#include "quadpose/align.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

namespace quadpose {

KdTree::KdTree(const MatX3& points) : points_(points) {
  if (points_.rows() == 0) throw ValidationError("KdTree: empty point set");
  std::vector<int> idx(points_.rows());
  std::iota(idx.begin(), idx.end(), 0);
  nodes_.reserve(points_.rows());
  root_ = build(idx, 0, static_cast<int>(idx.size()), 0);
}

int KdTree::build(std::vector<int>& idx, int lo, int hi, int depth) {
  if (lo >= hi) return -1;
  const int axis = depth % 3;
  const int mid = (lo + hi) / 2;
  std::nth_element(idx.begin() + lo, idx.begin() + mid, idx.begin() + hi,
                   [&](int a, int b) {
                     if (points_(a, axis) != points_(b, axis))
                       return points_(a, axis) < points_(b, axis);
                     return a < b;
                   });
  Node node;
  node.point = idx[mid];
  node.axis = axis;
  const int self = static_cast<int>(nodes_.size());
  nodes_.push_back(node);
  nodes_[self].left = build(idx, lo, mid, depth + 1);
  nodes_[self].right = build(idx, mid + 1, hi, depth + 1);
  return self;
}

void KdTree::search(int node, const Vec3& query, int& best, Scalar& best_d2) const {
  if (node < 0) return;
  const Node& n = nodes_[node];
  const Scalar d2 = (points_.row(n.point).transpose() - query).squaredNorm();
  if (d2 < best_d2 || (d2 == best_d2 && n.point < best)) {
    best_d2 = d2;
    best = n.point;
  }
  const Scalar delta = query[n.axis] - points_(n.point, n.axis);
  const int near = delta < 0.0 ? n.left : n.right;
  const int far = delta < 0.0 ? n.right : n.left;
  search(near, query, best, best_d2);
  if (delta * delta <= best_d2) search(far, query, best, best_d2);
}

int KdTree::nearest(const Vec3& query) const {
  int best = points_.rows();
  Scalar best_d2 = std::numeric_limits<Scalar>::max();
  search(root_, query, best, best_d2);
  return best;
}

MatX3 vertex_normals(const MatX3& vertices, const MatX3i& triangles) {
  MatX3 normals = MatX3::Zero(vertices.rows(), 3);
  for (int t = 0; t < triangles.rows(); ++t) {
    const Vec3 a = vertices.row(triangles(t, 0)).transpose();
    const Vec3 b = vertices.row(triangles(t, 1)).transpose();
    const Vec3 c = vertices.row(triangles(t, 2)).transpose();
    const Vec3 n = (b - a).cross(c - a);  // magnitude = 2 * area
    for (int k = 0; k < 3; ++k) normals.row(triangles(t, k)) += n.transpose();
  }
  for (int v = 0; v < normals.rows(); ++v) {
    const Scalar len = normals.row(v).norm();
    if (len > 1e-12) normals.row(v) /= len;  // zero rows stay zero (flagged)
  }
  return normals;
}

MatchSet make_matches(const MatX3& source_points, const MatX3& source_normals,
                      const MatX3& target_points, const MatX3& target_normals,
                      Scalar angle_threshold_deg) {
  if (source_points.rows() == 0 || target_points.rows() == 0)
    throw ValidationError("make_matches: empty point set");
  const Scalar cos_threshold = std::cos(angle_threshold_deg * M_PI / 180.0);
  const KdTree tree(target_points);
  MatchSet matches;
  for (int i = 0; i < source_points.rows(); ++i) {
    const int j = tree.nearest(source_points.row(i).transpose());
    const Scalar dot = std::clamp<Scalar>(source_normals.row(i).dot(target_normals.row(j)),
                                          -1.0, 1.0);
    // angle between unit normals via the clamped dot product
    if (std::acos(dot) < angle_threshold_deg * M_PI / 180.0 || dot >= cos_threshold)
      matches.pairs.emplace_back(i, j);
  }
  return matches;
}

MatchSet mutual_matches(const MatchSet& m1, const MatchSet& m2) {
  std::set<std::pair<int, int>> reverse(m2.pairs.begin(), m2.pairs.end());
  MatchSet out;
  out.mutual = true;
  for (const auto& [i, j] : m1.pairs)
    if (reverse.count({j, i})) out.pairs.emplace_back(i, j);
  return out;
}

Isometry solve_rigid(const MatX3& source, const MatX3& target, const VecX& weights) {
  if (source.rows() != target.rows() || source.rows() != weights.size())
    throw ValidationError("solve_rigid: dimension mismatch");
  const Scalar wsum = weights.sum();
  if (wsum <= 0.0) throw ValidationError("solve_rigid: no positive weights");

  const Vec3 src_c = (source.transpose() * weights) / wsum;
  const Vec3 dst_c = (target.transpose() * weights) / wsum;
  Mat3 h = Mat3::Zero();
  for (int i = 0; i < source.rows(); ++i)
    h += weights[i] * (source.row(i).transpose() - src_c) * (target.row(i) - dst_c.transpose());

  Eigen::JacobiSVD<Mat3> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 d = Mat3::Identity();
  d(2, 2) = (svd.matrixV() * svd.matrixU().transpose()).determinant() < 0.0 ? -1.0 : 1.0;
  const Mat3 r = svd.matrixV() * d * svd.matrixU().transpose();

  Isometry out = Isometry::Identity();
  out.linear() = r;
  out.translation() = dst_c - r * src_c;
  return out;
}

MatchPolicy match_policy_from_string(const std::string& s) {
  if (s == "once") return MatchPolicy::once;
  if (s == "repeat") return MatchPolicy::repeat;
  if (s == "mutual-once") return MatchPolicy::mutual_once;
  if (s == "mutual-repeat") return MatchPolicy::mutual_repeat;
  throw ValidationError("unknown match policy '" + s + "'");
}

const char* to_string(MatchPolicy policy) {
  switch (policy) {
    case MatchPolicy::once: return "once";
    case MatchPolicy::repeat: return "repeat";
    case MatchPolicy::mutual_once: return "mutual-once";
    case MatchPolicy::mutual_repeat: return "mutual-repeat";
  }
  return "once";
}

namespace {

Scalar mean_matched_distance(const MatX3& src, const MatX3& dst, const MatchSet& matches) {
  Scalar sum = 0.0;
  for (const auto& [i, j] : matches.pairs) sum += (src.row(i) - dst.row(j)).norm();
  return sum / matches.pairs.size();
}

}  // namespace

RefineResult refine_root(const MatX3& source_points, const MatX3& source_normals,
                         const MatX3& target_points, const MatX3& target_normals,
                         MatchPolicy policy, Scalar angle_threshold_deg, int max_rounds,
                         Scalar improvement) {
  const bool mutual =
      policy == MatchPolicy::mutual_once || policy == MatchPolicy::mutual_repeat;
  const bool repeat = policy == MatchPolicy::repeat || policy == MatchPolicy::mutual_repeat;
  const int rounds = repeat ? max_rounds : 1;

  RefineResult result;
  MatX3 src = source_points;
  MatX3 nrm = source_normals;
  Scalar prev_residual = std::numeric_limits<Scalar>::max();

  for (int round = 0; round < rounds; ++round) {
    MatchSet matches =
        make_matches(src, nrm, target_points, target_normals, angle_threshold_deg);
    if (mutual) {
      const MatchSet back =
          make_matches(target_points, target_normals, src, nrm, angle_threshold_deg);
      matches = mutual_matches(matches, back);
    }
    if (matches.pairs.empty()) {
      if (round == 0) return result;  // nothing matched at all; diagnostic state
      break;
    }
    result.matched = true;

    MatX3 s(static_cast<int>(matches.pairs.size()), 3);
    MatX3 t(static_cast<int>(matches.pairs.size()), 3);
    for (size_t k = 0; k < matches.pairs.size(); ++k) {
      s.row(static_cast<int>(k)) = src.row(matches.pairs[k].first);
      t.row(static_cast<int>(k)) = target_points.row(matches.pairs[k].second);
    }
    const Isometry step = solve_rigid(s, t, VecX::Ones(s.rows()));

    MatX3 moved(src.rows(), 3);
    for (int i = 0; i < src.rows(); ++i)
      moved.row(i) = (step * Vec3(src.row(i).transpose())).transpose();
    const Scalar residual = mean_matched_distance(moved, target_points, matches);

    if (!result.round_residuals.empty() && residual > result.round_residuals.back())
      break;  // reject a worsening round
    result.transform = step * result.transform;
    src = moved;
    for (int i = 0; i < nrm.rows(); ++i)
      nrm.row(i) = (step.linear() * Vec3(nrm.row(i).transpose())).transpose();
    result.round_residuals.push_back(residual);
    result.rounds = round + 1;

    if (prev_residual < std::numeric_limits<Scalar>::max() &&
        (prev_residual - residual) < improvement * prev_residual)
      break;
    prev_residual = residual;
  }
  return result;
}

}  // namespace quadpose
