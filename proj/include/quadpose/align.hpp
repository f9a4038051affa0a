#pragma once

#include "quadpose/skeleton.hpp"

#include <string>
#include <vector>

namespace quadpose {

/// Exact nearest-neighbour search over 3D points; equal distances resolve to
/// the lowest index.
class KdTree {
 public:
  explicit KdTree(const MatX3& points);
  int nearest(const Vec3& query) const;

 private:
  struct Node {
    int point = -1;
    int axis = 0;
    int left = -1, right = -1;
  };
  int build(std::vector<int>& idx, int lo, int hi, int depth);
  void search(int node, const Vec3& query, int& best, Scalar& best_d2) const;

  MatX3 points_;
  std::vector<Node> nodes_;
  int root_ = -1;
};

/// Source->target index pairs; a source index appears at most once.
struct MatchSet {
  std::vector<std::pair<int, int>> pairs;
  bool mutual = false;
};

/// Area-weighted incident-triangle normals, unit length. Vertices that
/// accumulate no area keep a zero normal (flagged degenerate).
MatX3 vertex_normals(const MatX3& vertices, const MatX3i& triangles);

/// Nearest target per source point, kept when the normal angle difference is
/// under the threshold (degrees).
MatchSet make_matches(const MatX3& source_points, const MatX3& source_normals,
                      const MatX3& target_points, const MatX3& target_normals,
                      Scalar angle_threshold_deg);

/// Pairs (i, j) present as (i, j) in m1 and (j, i) in m2.
MatchSet mutual_matches(const MatchSet& m1, const MatchSet& m2);

/// Weighted least-squares rigid motion (rotation + translation, no scale, no
/// reflection) mapping source onto target.
Isometry solve_rigid(const MatX3& source, const MatX3& target, const VecX& weights);

enum class MatchPolicy { once, repeat, mutual_once, mutual_repeat };

MatchPolicy match_policy_from_string(const std::string& s);
const char* to_string(MatchPolicy policy);

struct RefineResult {
  Isometry transform = Isometry::Identity();  ///< refinement on top of the input transform
  std::vector<Scalar> round_residuals;        ///< mean matched distance per accepted round
  int rounds = 0;
  bool matched = false;  ///< false when no matches survived the gate
};

/// Iterated match + rigid solve of the (already posed) source surface against
/// the cloud. `repeat` policies re-match up to max_rounds while the residual
/// drops by at least `improvement`; accepted rounds never increase it.
RefineResult refine_root(const MatX3& source_points, const MatX3& source_normals,
                         const MatX3& target_points, const MatX3& target_normals,
                         MatchPolicy policy = MatchPolicy::mutual_once,
                         Scalar angle_threshold_deg = 70.0, int max_rounds = 3,
                         Scalar improvement = 0.05);

}  // namespace quadpose
