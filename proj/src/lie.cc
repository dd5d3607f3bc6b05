#include "unilgl/lie.h"

#include <cmath>

#include <Eigen/Geometry>
#include <Eigen/SVD>

namespace unilgl::lie {
namespace {

constexpr double kSmallAngle = 1e-2;

}  // namespace

Eigen::Matrix3d Hat(const Eigen::Vector3d& v) {
  Eigen::Matrix3d m;
  m << 0.0, -v.z(), v.y(),
       v.z(), 0.0, -v.x(),
       -v.y(), v.x(), 0.0;
  return m;
}

Eigen::Matrix3d ExpSO3(const Eigen::Vector3d& phi) {
  const double theta = phi.norm();
  const Eigen::Matrix3d K = Hat(phi);
  double a, b;
  if (theta < kSmallAngle) {
    const double t2 = theta * theta;
    a = 1.0 - t2 / 6.0 + t2 * t2 / 120.0;
    b = 0.5 - t2 / 24.0 + t2 * t2 / 720.0;
  } else {
    a = std::sin(theta) / theta;
    b = (1.0 - std::cos(theta)) / (theta * theta);
  }
  return Eigen::Matrix3d::Identity() + a * K + b * K * K;
}

Eigen::Vector3d LogSO3(const Eigen::Matrix3d& rotation) {
  const Eigen::Quaterniond q(rotation);
  const Eigen::Vector3d v = q.vec();
  const double n = v.norm();
  const double w = q.w();
  if (n < 1e-12) {
    // Near identity: 2 * asin(n) / n -> 2 / w.
    return (2.0 / w) * v;
  }
  // Shortest rotation: angle in [0, pi].
  double angle = 2.0 * std::atan2(n, std::abs(w));
  if (w < 0.0) angle = -angle;
  return (angle / n) * v;
}

Eigen::Matrix3d LeftJacobianSO3(const Eigen::Vector3d& phi) {
  const double theta = phi.norm();
  const Eigen::Matrix3d K = Hat(phi);
  double a, b;
  if (theta < kSmallAngle) {
    const double t2 = theta * theta;
    a = 0.5 - t2 / 24.0 + t2 * t2 / 720.0;
    b = 1.0 / 6.0 - t2 / 120.0 + t2 * t2 / 5040.0;
  } else {
    const double t2 = theta * theta;
    a = (1.0 - std::cos(theta)) / t2;
    b = (theta - std::sin(theta)) / (t2 * theta);
  }
  return Eigen::Matrix3d::Identity() + a * K + b * K * K;
}

Eigen::Matrix3d LeftJacobianInverseSO3(const Eigen::Vector3d& phi) {
  const double theta = phi.norm();
  const Eigen::Matrix3d K = Hat(phi);
  double b;
  if (theta < kSmallAngle) {
    const double t2 = theta * theta;
    b = 1.0 / 12.0 + t2 / 720.0 + t2 * t2 / 30240.0;
  } else {
    const double half = 0.5 * theta;
    b = 1.0 / (theta * theta) - std::cos(half) / (2.0 * theta * std::sin(half));
  }
  return Eigen::Matrix3d::Identity() - 0.5 * K + b * K * K;
}

PoseSE3 ExpSE3(const Vector6d& xi) {
  const Eigen::Vector3d rho = xi.head<3>();
  const Eigen::Vector3d phi = xi.tail<3>();
  return PoseSE3(ExpSO3(phi), LeftJacobianSO3(phi) * rho);
}

Vector6d LogSE3(const PoseSE3& pose) {
  const Eigen::Vector3d phi = LogSO3(pose.rotation());
  Vector6d xi;
  xi.head<3>() = LeftJacobianInverseSO3(phi) * pose.translation();
  xi.tail<3>() = phi;
  return xi;
}

Matrix6d Adjoint(const PoseSE3& pose) {
  Matrix6d ad = Matrix6d::Zero();
  const Eigen::Matrix3d& R = pose.rotation();
  ad.block<3, 3>(0, 0) = R;
  ad.block<3, 3>(0, 3) = Hat(pose.translation()) * R;
  ad.block<3, 3>(3, 3) = R;
  return ad;
}

namespace {

// Off-diagonal block of the SE(3) left Jacobian.
Eigen::Matrix3d LeftJacobianQ(const Eigen::Vector3d& rho, const Eigen::Vector3d& phi) {
  const double theta = phi.norm();
  double c1, c2, c3;
  if (theta < kSmallAngle) {
    const double t2 = theta * theta;
    c1 = 1.0 / 6.0 - t2 / 120.0 + t2 * t2 / 5040.0;
    c2 = 1.0 / 24.0 - t2 / 720.0 + t2 * t2 / 40320.0;
    c3 = 1.0 / 120.0 - t2 / 2520.0;
  } else {
    const double s = std::sin(theta);
    const double c = std::cos(theta);
    const double t2 = theta * theta;
    const double t4 = t2 * t2;
    c1 = (theta - s) / (t2 * theta);
    c2 = (t2 + 2.0 * c - 2.0) / (2.0 * t4);
    c3 = (2.0 * theta - 3.0 * s + theta * c) / (2.0 * t4 * theta);
  }
  const Eigen::Matrix3d P = Hat(phi);
  const Eigen::Matrix3d Rh = Hat(rho);
  const Eigen::Matrix3d PR = P * Rh;
  const Eigen::Matrix3d RP = Rh * P;
  const Eigen::Matrix3d PRP = PR * P;
  return 0.5 * Rh + c1 * (PR + RP + PRP) + c2 * (P * PR + RP * P - 3.0 * PRP) +
         c3 * (PRP * P + P * PRP);
}

Matrix6d LeftJacobianSE3(const Vector6d& xi) {
  const Eigen::Vector3d rho = xi.head<3>();
  const Eigen::Vector3d phi = xi.tail<3>();
  const Eigen::Matrix3d J = LeftJacobianSO3(phi);
  Matrix6d out = Matrix6d::Zero();
  out.block<3, 3>(0, 0) = J;
  out.block<3, 3>(0, 3) = LeftJacobianQ(rho, phi);
  out.block<3, 3>(3, 3) = J;
  return out;
}

Matrix6d LeftJacobianInverseSE3(const Vector6d& xi) {
  const Eigen::Vector3d rho = xi.head<3>();
  const Eigen::Vector3d phi = xi.tail<3>();
  const Eigen::Matrix3d Jinv = LeftJacobianInverseSO3(phi);
  Matrix6d out = Matrix6d::Zero();
  out.block<3, 3>(0, 0) = Jinv;
  out.block<3, 3>(0, 3) = -Jinv * LeftJacobianQ(rho, phi) * Jinv;
  out.block<3, 3>(3, 3) = Jinv;
  return out;
}

}  // namespace

Matrix6d RightJacobianSE3(const Vector6d& xi) { return LeftJacobianSE3(-xi); }

Matrix6d RightJacobianInverseSE3(const Vector6d& xi) { return LeftJacobianInverseSE3(-xi); }

Eigen::Matrix3d ProjectToSO3(const Eigen::Matrix3d& m) {
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Matrix3d d = Eigen::Matrix3d::Identity();
  d(2, 2) = (svd.matrixU() * svd.matrixV().transpose()).determinant() < 0.0 ? -1.0 : 1.0;
  return svd.matrixU() * d * svd.matrixV().transpose();
}

}  // namespace unilgl::lie
