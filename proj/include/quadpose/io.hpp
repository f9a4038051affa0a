#pragma once

#include "quadpose/camera.hpp"
#include "quadpose/heatmap.hpp"
#include "quadpose/skeleton.hpp"

#include <json.hpp>

#include <string>
#include <vector>

namespace quadpose {

using Json = nlohmann::json;

// Quaternions serialize scalar-last [x, y, z, w]; vectors as [x, y, z] in mm.

Json to_json(const Quat& q);
Quat quat_from_json(const Json& j);
Json to_json(const Vec3& v);
Vec3 vec3_from_json(const Json& j);

Json to_json(const Skeleton& skeleton);
Skeleton skeleton_from_json(const Json& j);

Json to_json(const Pose& pose);
Pose pose_from_json(const Json& j);

Json to_json(const CameraModel& camera);
CameraModel camera_from_json(const Json& j);

Json to_json(const CropTransform& crop);
CropTransform crop_from_json(const Json& j);

Json to_json(const NormalizedJoints& normalized);
NormalizedJoints normalized_from_json(const Json& j);

void save_json(const std::string& path, const Json& j);
Json load_json(const std::string& path);

void save_skeleton(const std::string& path, const Skeleton& skeleton);
Skeleton load_skeleton(const std::string& path);

/// JSON-lines, one pose per line.
void save_pose_sequence(const std::string& path, const std::vector<Pose>& poses);
std::vector<Pose> load_pose_sequence(const std::string& path);

/// Wavefront OBJ (v/f records) plus a JSON sidecar with per-vertex skin
/// weights; sidecar path = obj path + ".weights.json".
void save_mesh_obj(const std::string& obj_path, const SkinnedMesh& mesh);
SkinnedMesh load_mesh_obj(const std::string& obj_path);

/// Little-endian f64 blob sections keyed by name.
class BlobWriter {
 public:
  explicit BlobWriter(const std::string& path);
  void add(const std::string& name, const MatX& values);
  void add(const std::string& name, const VecX& values);
  Json manifest() const { return manifest_; }
  void close();

 private:
  std::string path_;
  std::vector<double> data_;
  Json manifest_ = Json::object();
};

class BlobReader {
 public:
  BlobReader(const std::string& path, const Json& manifest);
  MatX matrix(const std::string& name) const;
  VecX vector(const std::string& name) const;

 private:
  std::vector<double> data_;
  Json manifest_;
};

}  // namespace quadpose
