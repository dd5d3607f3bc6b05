#include "unilgl/types.h"

#include <cmath>

#include <Eigen/Geometry>

namespace unilgl {

bool Point::IsValid() const {
  return std::isfinite(x) && std::isfinite(y) && std::isfinite(z) && std::isfinite(intensity) &&
         intensity >= 0.f;
}

PoseSE3 PoseSE3::FromYaw(double yaw, const Eigen::Vector3d& translation) {
  return PoseSE3(Eigen::AngleAxisd(yaw, Eigen::Vector3d::UnitZ()).toRotationMatrix(),
                 translation);
}

PoseSE3 PoseSE3::Inverse() const {
  const Eigen::Matrix3d rt = rotation_.transpose();
  return PoseSE3(rt, -rt * translation_);
}

PoseSE3 PoseSE3::operator*(const PoseSE3& other) const {
  return PoseSE3(rotation_ * other.rotation_, rotation_ * other.translation_ + translation_);
}

Eigen::Matrix4d PoseSE3::Matrix() const {
  Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
  m.block<3, 3>(0, 0) = rotation_;
  m.block<3, 1>(0, 3) = translation_;
  return m;
}

bool PoseSE3::IsValid(double tol) const {
  if (!rotation_.allFinite() || !translation_.allFinite()) return false;
  const double ortho = (rotation_.transpose() * rotation_ - Eigen::Matrix3d::Identity())
                           .cwiseAbs()
                           .maxCoeff();
  return ortho <= tol && std::abs(rotation_.determinant() - 1.0) <= tol;
}

PointCloud TransformCloud(const PointCloud& cloud, const PoseSE3& pose) {
  PointCloud out;
  out.timestamp = cloud.timestamp;
  out.frame_id = cloud.frame_id;
  out.points.reserve(cloud.size());
  for (const Point& p : cloud.points) {
    const Eigen::Vector3d q = pose * p.xyz();
    out.points.push_back({static_cast<float>(q.x()), static_cast<float>(q.y()),
                          static_cast<float>(q.z()), p.intensity});
  }
  return out;
}

}  // namespace unilgl
