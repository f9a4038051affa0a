#include "quadpose/io.hpp"

#include <fstream>
#include <sstream>

namespace quadpose {

Json to_json(const Quat& q) { return Json::array({q.x(), q.y(), q.z(), q.w()}); }

Quat quat_from_json(const Json& j) {
  if (!j.is_array() || j.size() != 4) throw ValidationError("quaternion must be [x,y,z,w]");
  return Quat(j[3].get<Scalar>(), j[0].get<Scalar>(), j[1].get<Scalar>(), j[2].get<Scalar>());
}

Json to_json(const Vec3& v) { return Json::array({v.x(), v.y(), v.z()}); }

Vec3 vec3_from_json(const Json& j) {
  if (!j.is_array() || j.size() != 3) throw ValidationError("vector must be [x,y,z]");
  return Vec3(j[0].get<Scalar>(), j[1].get<Scalar>(), j[2].get<Scalar>());
}

Json to_json(const Skeleton& skeleton) {
  Json joints = Json::array();
  for (const auto& j : skeleton.joints) {
    joints.push_back({{"name", j.name},
                      {"parent", j.parent},
                      {"rest_offset", to_json(j.rest_offset)},
                      {"rot_dof", j.rot_dof},
                      {"has_translation", j.has_translation},
                      {"symmetric_pair", j.symmetric_pair},
                      {"group", to_string(j.group)}});
  }
  return {{"name", skeleton.name}, {"units", "mm"}, {"joints", joints}};
}

Skeleton skeleton_from_json(const Json& j) {
  Skeleton s;
  s.name = j.at("name").get<std::string>();
  for (const auto& joint : j.at("joints")) {
    JointDef d;
    d.name = joint.at("name").get<std::string>();
    d.parent = joint.at("parent").get<int>();
    d.rest_offset = vec3_from_json(joint.at("rest_offset"));
    d.rot_dof = joint.at("rot_dof").get<int>();
    d.has_translation = joint.at("has_translation").get<bool>();
    d.symmetric_pair = joint.at("symmetric_pair").get<int>();
    d.group = joint_group_from_string(joint.at("group").get<std::string>());
    s.joints.push_back(d);
  }
  s.validate();
  return s;
}

Json to_json(const Pose& pose) {
  Json rotations = Json::array();
  for (const auto& q : pose.joint_rotations) rotations.push_back(to_json(q));
  Json translations = Json::array();
  for (const auto& t : pose.joint_translations) translations.push_back(to_json(t));
  return {{"root_rotation", to_json(pose.root_rotation)},
          {"root_translation", to_json(pose.root_translation)},
          {"joint_rotations", rotations},
          {"joint_translations", translations}};
}

Pose pose_from_json(const Json& j) {
  Pose pose;
  pose.root_rotation = quat_from_json(j.at("root_rotation"));
  pose.root_translation = vec3_from_json(j.at("root_translation"));
  for (const auto& q : j.at("joint_rotations")) pose.joint_rotations.push_back(quat_from_json(q));
  for (const auto& t : j.at("joint_translations"))
    pose.joint_translations.push_back(vec3_from_json(t));
  return pose;
}

Json to_json(const CameraModel& camera) {
  const Quat q(camera.extrinsic.rotation());
  return {{"fx", camera.fx},         {"fy", camera.fy},
          {"cx", camera.cx},         {"cy", camera.cy},
          {"width", camera.width},   {"height", camera.height},
          {"extrinsic",
           {{"rotation", to_json(canonicalized(q))},
            {"translation", to_json(camera.extrinsic.translation())}}},
          {"axes", "camera looks down +z; u right, v down"}};
}

CameraModel camera_from_json(const Json& j) {
  CameraModel cam;
  cam.fx = j.at("fx").get<Scalar>();
  cam.fy = j.at("fy").get<Scalar>();
  cam.cx = j.at("cx").get<Scalar>();
  cam.cy = j.at("cy").get<Scalar>();
  cam.width = j.at("width").get<int>();
  cam.height = j.at("height").get<int>();
  cam.extrinsic = Isometry::Identity();
  if (j.contains("extrinsic")) {
    cam.extrinsic.rotate(quat_from_json(j.at("extrinsic").at("rotation")));
    cam.extrinsic.pretranslate(vec3_from_json(j.at("extrinsic").at("translation")));
  }
  cam.validate();
  return cam;
}

Json to_json(const CropTransform& crop) {
  return {{"scale", crop.scale},
          {"translation", Json::array({crop.translation.x(), crop.translation.y()})},
          {"pad", {{"square_x", crop.pad_square_x},
                   {"square_y", crop.pad_square_y},
                   {"margin", crop.pad_margin}}}};
}

CropTransform crop_from_json(const Json& j) {
  CropTransform crop;
  crop.scale = j.at("scale").get<Scalar>();
  crop.translation =
      Vec2(j.at("translation")[0].get<Scalar>(), j.at("translation")[1].get<Scalar>());
  crop.pad_square_x = j.at("pad").at("square_x").get<int>();
  crop.pad_square_y = j.at("pad").at("square_y").get<int>();
  crop.pad_margin = j.at("pad").at("margin").get<int>();
  return crop;
}

Json to_json(const NormalizedJoints& normalized) {
  Json xy = Json::array();
  for (int i = 0; i < normalized.xy256.rows(); ++i)
    xy.push_back(Json::array({normalized.xy256(i, 0), normalized.xy256(i, 1)}));
  Json zn = Json::array();
  for (int i = 0; i < normalized.zn.size(); ++i) zn.push_back(normalized.zn[i]);
  return {{"xy256", xy}, {"zn", zn}, {"root_index", normalized.root_index}};
}

NormalizedJoints normalized_from_json(const Json& j) {
  NormalizedJoints n;
  const auto& xy = j.at("xy256");
  n.xy256.resize(static_cast<int>(xy.size()), 2);
  for (int i = 0; i < n.xy256.rows(); ++i) {
    n.xy256(i, 0) = xy[i][0].get<Scalar>();
    n.xy256(i, 1) = xy[i][1].get<Scalar>();
  }
  const auto& zn = j.at("zn");
  n.zn.resize(static_cast<int>(zn.size()));
  for (int i = 0; i < n.zn.size(); ++i) n.zn[i] = zn[i].get<Scalar>();
  n.root_index = j.at("root_index").get<int>();
  return n;
}

void save_json(const std::string& path, const Json& j) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path);
  f << j.dump(2) << "\n";
}

Json load_json(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot read " + path);
  Json j;
  f >> j;
  return j;
}

void save_skeleton(const std::string& path, const Skeleton& skeleton) {
  save_json(path, to_json(skeleton));
}

Skeleton load_skeleton(const std::string& path) { return skeleton_from_json(load_json(path)); }

void save_pose_sequence(const std::string& path, const std::vector<Pose>& poses) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path);
  for (const auto& pose : poses) f << to_json(pose).dump() << "\n";
}

std::vector<Pose> load_pose_sequence(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot read " + path);
  std::vector<Pose> poses;
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    poses.push_back(pose_from_json(Json::parse(line)));
  }
  return poses;
}

void save_mesh_obj(const std::string& obj_path, const SkinnedMesh& mesh) {
  std::ofstream f(obj_path);
  if (!f) throw std::runtime_error("cannot write " + obj_path);
  f.precision(17);
  for (int v = 0; v < mesh.vertex_count(); ++v)
    f << "v " << mesh.vertices(v, 0) << " " << mesh.vertices(v, 1) << " "
      << mesh.vertices(v, 2) << "\n";
  for (int t = 0; t < mesh.triangles.rows(); ++t)
    f << "f " << mesh.triangles(t, 0) + 1 << " " << mesh.triangles(t, 1) + 1 << " "
      << mesh.triangles(t, 2) + 1 << "\n";

  Json weights = Json::array();
  for (const auto& vw : mesh.skin_weights) {
    Json entry = Json::array();
    for (const auto& sw : vw) entry.push_back(Json::array({sw.joint, sw.weight}));
    weights.push_back(entry);
  }
  save_json(obj_path + ".weights.json", Json{{"weights", weights}});
}

SkinnedMesh load_mesh_obj(const std::string& obj_path) {
  std::ifstream f(obj_path);
  if (!f) throw std::runtime_error("cannot read " + obj_path);
  SkinnedMesh mesh;
  std::vector<Vec3> verts;
  std::vector<Eigen::Vector3i> tris;
  std::string line;
  while (std::getline(f, line)) {
    std::istringstream is(line);
    std::string tag;
    is >> tag;
    if (tag == "v") {
      Vec3 v;
      is >> v.x() >> v.y() >> v.z();
      verts.push_back(v);
    } else if (tag == "f") {
      Eigen::Vector3i t;
      for (int k = 0; k < 3; ++k) {
        std::string tok;
        is >> tok;
        t[k] = std::stoi(tok.substr(0, tok.find('/'))) - 1;  // 1-based, maybe v/vt/vn
      }
      tris.push_back(t);
    }
  }
  mesh.vertices.resize(static_cast<int>(verts.size()), 3);
  for (size_t i = 0; i < verts.size(); ++i) mesh.vertices.row(static_cast<int>(i)) = verts[i].transpose();
  mesh.triangles.resize(static_cast<int>(tris.size()), 3);
  for (size_t i = 0; i < tris.size(); ++i) mesh.triangles.row(static_cast<int>(i)) = tris[i].transpose();

  const Json sidecar = load_json(obj_path + ".weights.json");
  for (const auto& entry : sidecar.at("weights")) {
    std::vector<SkinWeight> vw;
    for (const auto& sw : entry) vw.push_back({sw[0].get<int>(), sw[1].get<Scalar>()});
    mesh.skin_weights.push_back(std::move(vw));
  }
  return mesh;
}

BlobWriter::BlobWriter(const std::string& path) : path_(path) {}

void BlobWriter::add(const std::string& name, const MatX& values) {
  manifest_[name] = {{"offset", data_.size()},
                     {"rows", values.rows()},
                     {"cols", values.cols()}};
  for (int r = 0; r < values.rows(); ++r)
    for (int c = 0; c < values.cols(); ++c) data_.push_back(values(r, c));
}

void BlobWriter::add(const std::string& name, const VecX& values) {
  manifest_[name] = {{"offset", data_.size()}, {"rows", values.size()}, {"cols", 1}};
  for (int i = 0; i < values.size(); ++i) data_.push_back(values[i]);
}

void BlobWriter::close() {
  std::ofstream f(path_, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path_);
  // raw IEEE-754 doubles, little-endian byte order
  f.write(reinterpret_cast<const char*>(data_.data()),
          static_cast<std::streamsize>(data_.size() * sizeof(double)));
}

BlobReader::BlobReader(const std::string& path, const Json& manifest) : manifest_(manifest) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot read " + path);
  f.seekg(0, std::ios::end);
  const auto bytes = static_cast<size_t>(f.tellg());
  f.seekg(0);
  data_.resize(bytes / sizeof(double));
  f.read(reinterpret_cast<char*>(data_.data()), static_cast<std::streamsize>(bytes));
}

MatX BlobReader::matrix(const std::string& name) const {
  const auto& entry = manifest_.at(name);
  const size_t offset = entry.at("offset").get<size_t>();
  const int rows = entry.at("rows").get<int>();
  const int cols = entry.at("cols").get<int>();
  MatX out(rows, cols);
  size_t k = offset;
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) out(r, c) = data_.at(k++);
  return out;
}

VecX BlobReader::vector(const std::string& name) const {
  const MatX m = matrix(name);
  return Eigen::Map<const VecX>(m.data(), m.size());
}

}  // namespace quadpose
