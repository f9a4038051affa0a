#include "quadpose/camera.hpp"

#include <cmath>
#include <fstream>

namespace quadpose {

void CameraModel::validate() const {
  if (fx <= 0.0 || fy <= 0.0) throw ValidationError("camera focal lengths must be positive");
  if (width <= 0 || height <= 0) throw ValidationError("camera image size must be positive");
  if (cx < 0.0 || cx >= width || cy < 0.0 || cy >= height)
    throw ValidationError("camera principal point lies outside the image");
}

DepthImage DepthImage::zero(const CameraModel& cam) {
  DepthImage img;
  img.width = cam.width;
  img.height = cam.height;
  img.camera = cam;
  img.raster.assign(static_cast<size_t>(cam.width) * cam.height, 0.0);
  return img;
}

Projection project(const CameraModel& camera, const MatX3& pts) {
  Projection out;
  out.pixels.resize(pts.rows(), 2);
  out.valid.assign(pts.rows(), true);
  for (int i = 0; i < pts.rows(); ++i) {
    const Scalar z = pts(i, 2);
    if (z <= 0.0) {
      out.valid[i] = false;
      out.pixels.row(i).setZero();
      continue;
    }
    out.pixels(i, 0) = camera.fx * pts(i, 0) / z + camera.cx;
    out.pixels(i, 1) = camera.fy * pts(i, 1) / z + camera.cy;
  }
  return out;
}

Vec3 backproject(const CameraModel& camera, const Vec2& pixel, Scalar depth_mm) {
  if (depth_mm <= 0.0) throw ValidationError("backproject requires positive depth");
  return Vec3((pixel.x() - camera.cx) / camera.fx * depth_mm,
              (pixel.y() - camera.cy) / camera.fy * depth_mm, depth_mm);
}

PointCloud depth_to_pointcloud(const DepthImage& image, const Mask& mask) {
  if (static_cast<int>(mask.size()) != image.width * image.height)
    throw ValidationError("mask dimensions do not match depth raster");
  PointCloud cloud;
  std::vector<Vec3> pts;
  for (int v = 0; v < image.height; ++v) {
    for (int u = 0; u < image.width; ++u) {
      if (!mask[static_cast<size_t>(v) * image.width + u]) continue;
      const Scalar d = image.at(u, v);
      if (d <= 0.0) continue;
      pts.push_back(backproject(image.camera, Vec2(u, v), d));
      cloud.source_pixels.emplace_back(u, v);
    }
  }
  cloud.points.resize(static_cast<int>(pts.size()), 3);
  for (size_t i = 0; i < pts.size(); ++i) cloud.points.row(static_cast<int>(i)) = pts[i].transpose();
  return cloud;
}

MatX3 pointcloud_normals(const DepthImage& image, const PointCloud& cloud) {
  MatX3 normals = MatX3::Zero(cloud.points.rows(), 3);
  auto point_at = [&](int u, int v, Vec3& p) {
    if (u < 0 || v < 0 || u >= image.width || v >= image.height) return false;
    const Scalar d = image.at(u, v);
    if (d <= 0.0) return false;
    p = backproject(image.camera, Vec2(u, v), d);
    return true;
  };
  for (int i = 0; i < cloud.points.rows(); ++i) {
    const auto [u, v] = cloud.source_pixels[i];
    Vec3 px0, px1, py0, py1;
    const Vec3 self = cloud.points.row(i).transpose();
    if (!point_at(u - 1, v, px0)) px0 = self;
    if (!point_at(u + 1, v, px1)) px1 = self;
    if (!point_at(u, v - 1, py0)) py0 = self;
    if (!point_at(u, v + 1, py1)) py1 = self;
    Vec3 n = (px1 - px0).cross(py1 - py0);
    if (n.norm() < 1e-12) continue;  // left zero: no local surface estimate
    n.normalize();
    if (n.dot(self) > 0.0) n = -n;  // face the camera
    normals.row(i) = n.transpose();
  }
  return normals;
}

void write_depth_pgm(const std::string& path, const DepthImage& image) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path);
  f << "P5\n" << image.width << " " << image.height << "\n65535\n";
  for (Scalar d : image.raster) {
    const Scalar clamped = std::min(std::max(d, 0.0), 65535.0);
    const auto v = static_cast<std::uint16_t>(std::lround(clamped));
    const char bytes[2] = {static_cast<char>(v & 0xff), static_cast<char>(v >> 8)};
    f.write(bytes, 2);
  }
}

namespace {

int read_pgm_token(std::istream& f) {
  // skips whitespace and '#' comments per the PGM grammar
  int c = f.get();
  while (c == '#' || std::isspace(c)) {
    if (c == '#')
      while (c != '\n' && c != EOF) c = f.get();
    c = f.get();
  }
  int value = 0;
  while (std::isdigit(c)) {
    value = value * 10 + (c - '0');
    c = f.get();
  }
  return value;
}

}  // namespace

DepthImage read_depth_pgm(const std::string& path, const CameraModel& camera) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot read " + path);
  char m0 = 0, m1 = 0;
  f.get(m0);
  f.get(m1);
  if (m0 != 'P' || m1 != '5') throw ValidationError(path + " is not a P5 PGM");
  const int w = read_pgm_token(f);
  const int h = read_pgm_token(f);
  const int maxval = read_pgm_token(f);
  if (maxval != 65535) throw ValidationError(path + " is not a 16-bit PGM");
  DepthImage img;
  img.width = w;
  img.height = h;
  img.camera = camera;
  img.raster.resize(static_cast<size_t>(w) * h);
  for (auto& d : img.raster) {
    char bytes[2];
    f.read(bytes, 2);
    d = static_cast<Scalar>(static_cast<std::uint8_t>(bytes[0]) |
                            (static_cast<std::uint8_t>(bytes[1]) << 8));
  }
  if (!f) throw ValidationError(path + " is truncated");
  return img;
}

void write_mask_pgm(const std::string& path, const Mask& mask, int width, int height) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path);
  f << "P5\n" << width << " " << height << "\n255\n";
  for (auto m : mask) f.put(m ? char(255) : char(0));
}

Mask read_mask_pgm(const std::string& path, int& width, int& height) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot read " + path);
  char m0 = 0, m1 = 0;
  f.get(m0);
  f.get(m1);
  if (m0 != 'P' || m1 != '5') throw ValidationError(path + " is not a P5 PGM");
  width = read_pgm_token(f);
  height = read_pgm_token(f);
  const int maxval = read_pgm_token(f);
  if (maxval != 255) throw ValidationError(path + " is not an 8-bit PGM");
  Mask mask(static_cast<size_t>(width) * height);
  for (auto& m : mask) m = static_cast<std::uint8_t>(f.get()) ? 1 : 0;
  if (!f) throw ValidationError(path + " is truncated");
  return mask;
}

}  // namespace quadpose
