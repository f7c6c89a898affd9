#pragma once

#include <Eigen/Core>

#include "r3d/rigid_transform.h"

namespace r3d {

using Vector6d = Eigen::Matrix<double, 6, 1>;
using Matrix6d = Eigen::Matrix<double, 6, 6>;

// Twists are ordered (omega, rho): rotation first, then translation.
// exp(xi) = [exp(omega^), V(omega) rho; 0, 1].

Eigen::Matrix3d hat(const Eigen::Vector3d& v);
/// 4x4 matrix [omega^, rho; 0, 0].
Eigen::Matrix4d hat(const Vector6d& xi);

Eigen::Matrix3d so3_exp(const Eigen::Vector3d& omega);
/// Rotation vector with norm in [0, pi].
Eigen::Vector3d so3_log(const Eigen::Matrix3d& rotation);
/// J_l(omega): exp(omega + d) ~= exp(J_l d) exp(omega). Equals V(omega).
Eigen::Matrix3d so3_left_jacobian(const Eigen::Vector3d& omega);
Eigen::Matrix3d so3_left_jacobian_inverse(const Eigen::Vector3d& omega);

RigidTransform se3_exp(const Vector6d& xi);
Vector6d se3_log(const RigidTransform& t);

/// J_l(xi): exp(xi + d) ~= exp(J_l(xi) d) exp(xi).
Matrix6d se3_left_jacobian(const Vector6d& xi);
Matrix6d se3_left_jacobian_inverse(const Vector6d& xi);

/// Ad_T with T exp(xi) T^-1 = exp(Ad_T xi).
Matrix6d adjoint(const RigidTransform& t);

}  // namespace r3d
