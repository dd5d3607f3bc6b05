#pragma once

#include <Eigen/Core>

#include "unilgl/types.h"

// Lie-group helpers for SO(3) and SE(3).
//
// Tangent vectors of SE(3) are ordered [rho; phi]: translational part first,
// rotational part second. Exp([rho; phi]) = [Exp(phi), V(phi) rho].
namespace unilgl::lie {

using Vector6d = Eigen::Matrix<double, 6, 1>;
using Matrix6d = Eigen::Matrix<double, 6, 6>;

Eigen::Matrix3d Hat(const Eigen::Vector3d& v);

Eigen::Matrix3d ExpSO3(const Eigen::Vector3d& phi);
// Rotation vector of `rotation`, angle in [0, pi]. Quaternion based so it
// stays accurate near pi.
Eigen::Vector3d LogSO3(const Eigen::Matrix3d& rotation);

// Left Jacobian of SO(3) and its inverse.
Eigen::Matrix3d LeftJacobianSO3(const Eigen::Vector3d& phi);
Eigen::Matrix3d LeftJacobianInverseSO3(const Eigen::Vector3d& phi);

PoseSE3 ExpSE3(const Vector6d& xi);
Vector6d LogSE3(const PoseSE3& pose);

// Ad(T) such that T Exp(xi) T^-1 = Exp(Ad(T) xi).
Matrix6d Adjoint(const PoseSE3& pose);

// Exp(xi + d) ~= Exp(xi) Exp(Jr(xi) d).
Matrix6d RightJacobianSE3(const Vector6d& xi);
Matrix6d RightJacobianInverseSE3(const Vector6d& xi);

// Projects an arbitrary 3x3 matrix onto SO(3) (nearest rotation in Frobenius
// norm).
Eigen::Matrix3d ProjectToSO3(const Eigen::Matrix3d& m);

}  // namespace unilgl::lie
