#pragma once

#include <string>
#include <vector>

#include <Eigen/Core>

namespace unilgl {

// A LiDAR return in the sensor frame. Stored in single precision, matching
// the on-disk formats bit for bit.
struct Point {
  float x = 0.f;
  float y = 0.f;
  float z = 0.f;
  float intensity = 0.f;

  Eigen::Vector3d xyz() const { return {x, y, z}; }
  bool IsValid() const;
};

struct PointCloud {
  std::vector<Point> points;
  double timestamp = 0.0;
  std::string frame_id;

  bool empty() const { return points.empty(); }
  size_t size() const { return points.size(); }
};

// Rigid transform. Applied to a point p as rotation * p + translation.
class PoseSE3 {
 public:
  PoseSE3() : rotation_(Eigen::Matrix3d::Identity()), translation_(Eigen::Vector3d::Zero()) {}
  PoseSE3(const Eigen::Matrix3d& rotation, const Eigen::Vector3d& translation)
      : rotation_(rotation), translation_(translation) {}

  static PoseSE3 Identity() { return {}; }
  // Rotation about +z by `yaw` radians followed by translation.
  static PoseSE3 FromYaw(double yaw, const Eigen::Vector3d& translation);

  const Eigen::Matrix3d& rotation() const { return rotation_; }
  const Eigen::Vector3d& translation() const { return translation_; }

  PoseSE3 Inverse() const;
  PoseSE3 operator*(const PoseSE3& other) const;
  Eigen::Vector3d operator*(const Eigen::Vector3d& p) const { return rotation_ * p + translation_; }

  Eigen::Matrix4d Matrix() const;

  // Orthonormality and det = +1 within `tol`.
  bool IsValid(double tol = 1e-9) const;

 private:
  Eigen::Matrix3d rotation_;
  Eigen::Vector3d translation_;
};

// Applies `pose` to every point, keeping intensity.
PointCloud TransformCloud(const PointCloud& cloud, const PoseSE3& pose);

}  // namespace unilgl
