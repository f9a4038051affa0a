#include "quadpose/metrics.hpp"

#include "quadpose/canine.hpp"

#include <Eigen/Dense>
#include <Eigen/Geometry>

#include <cmath>
#include <iomanip>
#include <sstream>

namespace quadpose {

MatX3 SimilarityTransform::apply(const MatX3& pts) const {
  MatX3 out(pts.rows(), 3);
  for (int i = 0; i < pts.rows(); ++i)
    out.row(i) = (scale * (rotation * pts.row(i).transpose()) + translation).transpose();
  return out;
}

Scalar mpjpe(const MatX3& pred, const MatX3& gt, bool align_root) {
  if (pred.rows() != gt.rows())
    throw ValidationError("mpjpe: joint count mismatch");
  if (pred.rows() == 0) throw ValidationError("mpjpe: no joints");
  MatX3 p = pred;
  if (align_root) p.rowwise() += (gt.row(0) - pred.row(0));
  return (p - gt).rowwise().norm().mean();
}

PaResult pa_align(const MatX3& pred, const MatX3& gt) {
  if (pred.rows() != gt.rows()) throw ValidationError("pa_align: joint count mismatch");
  if (pred.rows() < 3) throw ValidationError("pa_align: needs at least 3 joints");

  // degeneracy check: the centered points must span at least a plane
  MatX3 centered = pred.rowwise() - pred.colwise().mean();
  Eigen::JacobiSVD<MatX> rank_svd(centered, Eigen::ComputeThinV);
  if (rank_svd.singularValues()[1] < 1e-9 * (1.0 + rank_svd.singularValues()[0]))
    throw ValidationError("pa_align: degenerate (collinear) configuration");

  const Eigen::Matrix4d t =
      Eigen::umeyama(pred.transpose(), gt.transpose(), /*with_scaling=*/true);
  PaResult out;
  const Mat3 sr = t.topLeftCorner<3, 3>();
  out.transform.scale = std::cbrt(sr.determinant());
  out.transform.rotation = sr / out.transform.scale;
  out.transform.translation = t.topRightCorner<3, 1>();
  out.aligned = out.transform.apply(pred);
  return out;
}

Scalar pa_mpjpe(const MatX3& pred, const MatX3& gt) {
  return (pa_align(pred, gt).aligned - gt).rowwise().norm().mean();
}

Scalar pck2d(const MatX2& pred, const MatX2& gt, Scalar mask_area, Scalar alpha) {
  if (pred.rows() != gt.rows()) throw ValidationError("pck2d: joint count mismatch");
  if (mask_area <= 0.0) throw ValidationError("pck2d: mask area must be positive");
  const Scalar threshold = alpha * std::sqrt(mask_area);
  int hits = 0;
  for (int i = 0; i < pred.rows(); ++i)
    if ((pred.row(i) - gt.row(i)).norm() < threshold) ++hits;
  return static_cast<Scalar>(hits) / pred.rows();
}

Scalar head_scale(const MatX3& gt, const Skeleton& skeleton) {
  const int head = head_joint(skeleton);
  const int parent = skeleton.joints[head].parent;
  const Scalar len = (gt.row(head) - gt.row(parent)).norm();
  if (len <= 0.0) throw ValidationError("head bone has zero length");
  return 2.0 / len;
}

Scalar pck3d(const MatX3& pred, const MatX3& gt, const Skeleton& skeleton) {
  if (pred.rows() != gt.rows()) throw ValidationError("pck3d: joint count mismatch");
  const Scalar s = head_scale(gt, skeleton);
  int hits = 0;
  for (int i = 0; i < pred.rows(); ++i)
    if (s * (pred.row(i) - gt.row(i)).norm() < 1.0) ++hits;
  return static_cast<Scalar>(hits) / pred.rows();
}

Scalar pa_pck3d(const MatX3& pred, const MatX3& gt, const Skeleton& skeleton) {
  return pck3d(pa_align(pred, gt).aligned, gt, skeleton);
}

namespace {

std::vector<int> group_indices(const Skeleton& skeleton, const std::string& group) {
  std::vector<int> idx;
  for (int i = 0; i < skeleton.joint_count(); ++i) {
    const JointGroup g = skeleton.joints[i].group;
    if (group == "All" ||
        (group == "Head" && g == JointGroup::head) ||
        (group == "Body" && g == JointGroup::body) ||
        (group == "Tail" && g == JointGroup::tail))
      idx.push_back(i);
  }
  return idx;
}

template <typename Mat>
Mat select_rows(const Mat& m, const std::vector<int>& idx) {
  Mat out(static_cast<int>(idx.size()), m.cols());
  for (size_t i = 0; i < idx.size(); ++i) out.row(static_cast<int>(i)) = m.row(idx[i]);
  return out;
}

}  // namespace

EvalReport evaluate_sequence(const std::vector<FrameEval>& frames, const Skeleton& skeleton) {
  if (frames.empty()) throw ValidationError("evaluate_sequence: no frames");
  const std::vector<std::string> group_names = {"All", "Head", "Body", "Tail"};

  EvalReport report;
  for (const auto& frame : frames) {
    const Scalar hs = head_scale(frame.gt3d, skeleton);
    report.head_scales.push_back(hs);

    // full-skeleton alignments; groups are sliced from the aligned sets so a
    // group metric reflects whole-body alignment as reported in the tables
    MatX3 root_aligned = frame.pred3d;
    root_aligned.rowwise() += (frame.gt3d.row(0) - frame.pred3d.row(0));
    const MatX3 pa = pa_align(frame.pred3d, frame.gt3d).aligned;

    const MatX2 pred2d = project(frame.camera, frame.pred3d).pixels;
    const MatX2 gt2d = project(frame.camera, frame.gt3d).pixels;

    std::map<std::string, GroupMetrics> fm;
    for (const auto& name : group_names) {
      const auto idx = group_indices(skeleton, name);
      GroupMetrics g;
      g.joint_count = static_cast<int>(idx.size());
      const MatX3 gt_g = select_rows(frame.gt3d, idx);
      g.mpjpe = hs * (select_rows(root_aligned, idx) - gt_g).rowwise().norm().mean();
      g.pa_mpjpe = hs * (select_rows(pa, idx) - gt_g).rowwise().norm().mean();
      g.pck2d = pck2d(select_rows(pred2d, idx), select_rows(gt2d, idx), frame.mask_area);
      int hits3d = 0, hits_pa = 0;
      for (int i : idx) {
        if (hs * (root_aligned.row(i) - frame.gt3d.row(i)).norm() < 1.0) ++hits3d;
        if (hs * (pa.row(i) - frame.gt3d.row(i)).norm() < 1.0) ++hits_pa;
      }
      g.pck3d = static_cast<Scalar>(hits3d) / idx.size();
      g.pa_pck3d = static_cast<Scalar>(hits_pa) / idx.size();
      fm[name] = g;
    }
    report.per_frame.push_back(std::move(fm));
  }

  for (const auto& name : group_names) {
    GroupMetrics mean;
    mean.joint_count = report.per_frame.front().at(name).joint_count;
    for (const auto& fm : report.per_frame) {
      const auto& g = fm.at(name);
      mean.mpjpe += g.mpjpe;
      mean.pa_mpjpe += g.pa_mpjpe;
      mean.pck2d += g.pck2d;
      mean.pck3d += g.pck3d;
      mean.pa_pck3d += g.pa_pck3d;
    }
    const Scalar n = static_cast<Scalar>(report.per_frame.size());
    mean.mpjpe /= n;
    mean.pa_mpjpe /= n;
    mean.pck2d /= n;
    mean.pck3d /= n;
    mean.pa_pck3d /= n;
    report.groups[name] = mean;
  }
  return report;
}

std::string format_report(const EvalReport& report) {
  std::ostringstream os;
  os << std::left << std::setw(8) << "Group" << std::right << std::setw(8) << "Joints"
     << std::setw(10) << "MPJPE" << std::setw(10) << "PA-MPJPE" << std::setw(10) << "PCK2D"
     << std::setw(10) << "PCK3D" << std::setw(10) << "PA-PCK3D" << "\n";
  for (const auto& name : {"All", "Head", "Body", "Tail"}) {
    const auto it = report.groups.find(name);
    if (it == report.groups.end()) continue;
    const auto& g = it->second;
    os << std::left << std::setw(8) << name << std::right << std::setw(8) << g.joint_count
       << std::fixed << std::setprecision(4) << std::setw(10) << g.mpjpe << std::setw(10)
       << g.pa_mpjpe << std::setw(10) << g.pck2d << std::setw(10) << g.pck3d << std::setw(10)
       << g.pa_pck3d << "\n";
  }
  return os.str();
}

}  // namespace quadpose
