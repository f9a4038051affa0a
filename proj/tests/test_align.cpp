#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "quadpose/align.hpp"
#include "quadpose/canine.hpp"

#include <random>
#include <set>

using namespace quadpose;

namespace {

std::mt19937_64 g_rng(99);

MatX3 random_points(int n, Scalar spread = 300.0) {
  std::uniform_real_distribution<Scalar> u(-spread, spread);
  MatX3 m(n, 3);
  for (int i = 0; i < n; ++i) m.row(i) = Eigen::RowVector3d(u(g_rng), u(g_rng), u(g_rng));
  return m;
}

Isometry small_rigid(Scalar angle_rad, Scalar offset_mm) {
  std::uniform_real_distribution<Scalar> u(-1.0, 1.0);
  Isometry t = Isometry::Identity();
  t.rotate(Eigen::AngleAxis<Scalar>(angle_rad, Vec3(u(g_rng), u(g_rng), u(g_rng) + 1.5).normalized()));
  Vec3 dir(u(g_rng), u(g_rng), u(g_rng));
  t.pretranslate(dir.normalized() * offset_mm);
  return t;
}

MatX3 transformed(const MatX3& pts, const Isometry& t) {
  MatX3 out(pts.rows(), 3);
  for (int i = 0; i < pts.rows(); ++i)
    out.row(i) = (t * Vec3(pts.row(i).transpose())).transpose();
  return out;
}

}  // namespace

TEST_CASE("kdtree nearest matches brute force with lowest-index ties") {
  const MatX3 pts = random_points(400);
  const KdTree tree(pts);
  for (int trial = 0; trial < 300; ++trial) {
    const Vec3 q = random_points(1).row(0).transpose();
    int best = -1;
    Scalar best_d = 1e30;
    for (int i = 0; i < pts.rows(); ++i) {
      const Scalar d = (pts.row(i).transpose() - q).squaredNorm();
      if (d < best_d) {
        best_d = d;
        best = i;
      }
    }
    CHECK(tree.nearest(q) == best);
  }
  // exact duplicates resolve to the lowest index
  MatX3 dup(4, 3);
  dup << 1, 1, 1, 5, 5, 5, 1, 1, 1, 9, 9, 9;
  const KdTree dup_tree(dup);
  CHECK(dup_tree.nearest(Vec3(1.01, 1, 1)) == 0);
}

TEST_CASE("vertex normals: cube corner, plane interior, sphere") {
  // unit cube corner at the origin with three incident faces
  MatX3 v(7, 3);
  v << 0, 0, 0, 1, 0, 0, 0, 1, 0, 0, 0, 1, 1, 1, 0, 1, 0, 1, 0, 1, 1;
  MatX3i f(6, 3);
  // outward-facing triangles of the three faces meeting at vertex 0
  f << 0, 2, 1, 1, 2, 4,  // z = 0 face (normal -z)... orientation set below
      0, 1, 3, 1, 5, 3,   // y = 0 face
      0, 3, 2, 2, 3, 6;   // x = 0 face
  const MatX3 normals = vertex_normals(v, f);
  const Vec3 corner = normals.row(0).transpose();
  const Vec3 expect = Vec3(-1, -1, -1).normalized();
  CHECK(std::abs(std::abs(corner.dot(expect)) - 1.0) < 1e-9);

  // flat grid: interior vertex normal equals the plane normal
  const int side = 5;
  MatX3 pv(side * side, 3);
  for (int y = 0; y < side; ++y)
    for (int x = 0; x < side; ++x) pv.row(y * side + x) = Eigen::RowVector3d(x, y, 2.0);
  std::vector<Eigen::Vector3i> tris;
  for (int y = 0; y + 1 < side; ++y)
    for (int x = 0; x + 1 < side; ++x) {
      tris.emplace_back(y * side + x, y * side + x + 1, (y + 1) * side + x);
      tris.emplace_back(y * side + x + 1, (y + 1) * side + x + 1, (y + 1) * side + x);
    }
  MatX3i pf(static_cast<int>(tris.size()), 3);
  for (size_t i = 0; i < tris.size(); ++i) pf.row(static_cast<int>(i)) = tris[i].transpose();
  const MatX3 pn = vertex_normals(pv, pf);
  CHECK(std::abs(std::abs(pn(2 * side + 2, 2)) - 1.0) < 1e-12);

  // uv-sphere normals stay within 5 degrees of radial
  const int rings = 24, segs = 48;
  MatX3 sv(rings * segs, 3);
  for (int r = 0; r < rings; ++r)
    for (int s = 0; s < segs; ++s) {
      const Scalar theta = M_PI * (r + 0.5) / rings, phi = 2.0 * M_PI * s / segs;
      sv.row(r * segs + s) << std::sin(theta) * std::cos(phi), std::cos(theta),
          std::sin(theta) * std::sin(phi);
    }
  std::vector<Eigen::Vector3i> stris;
  for (int r = 0; r + 1 < rings; ++r)
    for (int s = 0; s < segs; ++s) {
      const int s1 = (s + 1) % segs;
      stris.emplace_back(r * segs + s, (r + 1) * segs + s, r * segs + s1);
      stris.emplace_back(r * segs + s1, (r + 1) * segs + s, (r + 1) * segs + s1);
    }
  MatX3i sf(static_cast<int>(stris.size()), 3);
  for (size_t i = 0; i < stris.size(); ++i) sf.row(static_cast<int>(i)) = stris[i].transpose();
  const MatX3 sn = vertex_normals(sv, sf);
  for (int i = 0; i < sv.rows(); i += 7) {
    const Scalar c = std::abs(sn.row(i).dot(sv.row(i).normalized()));
    CHECK(std::acos(std::min(c, 1.0)) < 5.0 * M_PI / 180.0);
  }
}

TEST_CASE("make_matches gates on the normal angle") {
  const MatX3 pts = random_points(200);
  MatX3 normals(200, 3);
  for (int i = 0; i < 200; ++i) normals.row(i) = Eigen::RowVector3d(0, 0, 1);

  // identical clouds, identical normals: identity matching, all kept
  const MatchSet identity = make_matches(pts, normals, pts, normals, 70.0);
  CHECK(identity.pairs.size() == 200);
  for (const auto& [i, j] : identity.pairs) CHECK(i == j);

  // flipped target normals: nothing survives at 70 degrees
  const MatchSet flipped = make_matches(pts, normals, pts, -normals, 70.0);
  CHECK(flipped.pairs.empty());

  // two offset planes at a 60-degree relative tilt: kept at 70, dropped at 45
  MatX3 tilted(200, 3);
  const Vec3 tn(std::sin(M_PI / 3.0), 0, std::cos(M_PI / 3.0));
  for (int i = 0; i < 200; ++i) tilted.row(i) = tn.transpose();
  CHECK(make_matches(pts, normals, pts, tilted, 70.0).pairs.size() == 200);
  CHECK(make_matches(pts, normals, pts, tilted, 45.0).pairs.empty());

  // threshold 180 equals unconstrained nearest neighbour
  const MatchSet all = make_matches(pts, normals, pts, -normals, 180.0);
  CHECK(all.pairs.size() == 200);
}

TEST_CASE("mutual matches keep pairs present in both directions") {
  MatchSet m1, m2;
  for (int i = 0; i < 50; ++i) {
    m1.pairs.emplace_back(i, 49 - i);
    m2.pairs.emplace_back(49 - i, i);
  }
  CHECK(mutual_matches(m1, m2).pairs.size() == 50);

  // one corrupted reverse entry drops exactly one pair
  m2.pairs[7].second = 999;
  CHECK(mutual_matches(m1, m2).pairs.size() == 49);

  MatchSet disjoint1, disjoint2;
  disjoint1.pairs = {{0, 1}, {2, 3}};
  disjoint2.pairs = {{5, 6}};
  CHECK(mutual_matches(disjoint1, disjoint2).pairs.empty());
}

TEST_CASE("solve_rigid is optimal against random perturbations") {
  const MatX3 src = random_points(60);
  const Isometry truth = small_rigid(0.6, 80.0);
  MatX3 dst = transformed(src, truth);
  dst += 3.0 * random_points(60, 1.0);  // noise

  const VecX w = VecX::Ones(60);
  const Isometry solved = solve_rigid(src, dst, w);
  const Scalar residual = (transformed(src, solved) - dst).rowwise().squaredNorm().sum();
  std::uniform_real_distribution<Scalar> u(-1.0, 1.0);
  for (int probe = 0; probe < 100; ++probe) {
    Isometry perturbed = solved;
    perturbed.rotate(Eigen::AngleAxis<Scalar>(0.02 * u(g_rng),
                                              Vec3(u(g_rng), u(g_rng), 1 + u(g_rng)).normalized()));
    perturbed.pretranslate(Vec3(u(g_rng), u(g_rng), u(g_rng)));
    const Scalar other = (transformed(src, perturbed) - dst).rowwise().squaredNorm().sum();
    CHECK(residual <= other + 1e-6);
  }
}

TEST_CASE("refine_root recovers a small rigid motion") {
  const DogModel dog = make_dog({});
  const MatX3 mesh = dog.mesh.vertices;
  const MatX3 normals = vertex_normals(mesh, dog.mesh.triangles);

  const Isometry motion = small_rigid(5.0 * M_PI / 180.0, 20.0);
  const MatX3 cloud = transformed(mesh, motion);
  const MatX3 cloud_normals = transformed(normals, Isometry(motion.linear()));

  const RefineResult r = refine_root(mesh, normals, cloud, cloud_normals,
                                     MatchPolicy::mutual_repeat, 70.0, 3, 0.05);
  REQUIRE(r.matched);
  const Mat3 err_rot = r.transform.linear().transpose() * motion.linear();
  const Scalar angle_err = Eigen::AngleAxis<Scalar>(err_rot).angle();
  CHECK(angle_err < 0.5 * M_PI / 180.0);
  CHECK((r.transform.translation() - motion.translation()).norm() < 2.0);

  // exact overlap: identity comes back with zero residual
  const RefineResult id = refine_root(mesh, normals, mesh, normals, MatchPolicy::mutual_once);
  REQUIRE(id.matched);
  CHECK(id.round_residuals.back() < 1e-9);
  CHECK((id.transform.matrix() - Isometry::Identity().matrix()).norm() < 1e-9);
}

TEST_CASE("refine_root residuals never increase over accepted rounds") {
  const DogModel dog = make_dog({});
  const MatX3 mesh = dog.mesh.vertices;
  const MatX3 normals = vertex_normals(mesh, dog.mesh.triangles);

  // front half of the cloud only
  std::vector<int> keep;
  for (int i = 0; i < mesh.rows(); ++i)
    if (mesh(i, 2) > 0.0) keep.push_back(i);
  MatX3 half(static_cast<int>(keep.size()), 3), half_n(static_cast<int>(keep.size()), 3);
  for (size_t i = 0; i < keep.size(); ++i) {
    half.row(static_cast<int>(i)) = mesh.row(keep[i]);
    half_n.row(static_cast<int>(i)) = normals.row(keep[i]);
  }
  const Isometry motion = small_rigid(4.0 * M_PI / 180.0, 15.0);
  const MatX3 cloud = transformed(half, motion);
  const MatX3 cloud_n = transformed(half_n, Isometry(motion.linear()));

  const RefineResult r =
      refine_root(mesh, normals, cloud, cloud_n, MatchPolicy::repeat, 70.0, 3, 0.0);
  REQUIRE(r.matched);
  for (size_t i = 1; i < r.round_residuals.size(); ++i)
    CHECK(r.round_residuals[i] <= r.round_residuals[i - 1] + 1e-12);
}

TEST_CASE("match policy names round trip") {
  for (const char* name : {"once", "repeat", "mutual-once", "mutual-repeat"})
    CHECK(std::string(to_string(match_policy_from_string(name))) == name);
  CHECK_THROWS_AS(match_policy_from_string("bogus"), ValidationError);
}
