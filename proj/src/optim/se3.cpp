#include "r3d/se3.h"

#include <Eigen/Geometry>
#include <cmath>

namespace r3d {

namespace {

// Below this angle every coefficient switches to its Taylor series.
constexpr double kSeriesAngle = 1e-2;

struct Coefficients {
    double a;   // sin(t)/t
    double b;   // (1 - cos(t))/t^2
    double c;   // (t - sin(t))/t^3
    double d;   // (1 - t sin(t) / (2 (1 - cos(t)))) / t^2
    double c2;  // (t^2 + 2 cos(t) - 2) / (2 t^4)
    double c3;  // (2 t - 3 sin(t) + t cos(t)) / (2 t^5)
};

Coefficients coefficients(double t) {
    Coefficients k;
    const double t2 = t * t;
    if (t < kSeriesAngle) {
        const double t4 = t2 * t2;
        k.a = 1.0 - t2 / 6.0 + t4 / 120.0;
        k.b = 0.5 - t2 / 24.0 + t4 / 720.0;
        k.c = 1.0 / 6.0 - t2 / 120.0 + t4 / 5040.0;
        k.d = 1.0 / 12.0 + t2 / 720.0 + t4 / 30240.0;
        k.c2 = 1.0 / 24.0 - t2 / 720.0 + t4 / 40320.0;
        k.c3 = 1.0 / 120.0 - t2 / 2520.0 + t4 / 120960.0;
        return k;
    }
    const double s = std::sin(t);
    const double c = std::cos(t);
    k.a = s / t;
    k.b = (1.0 - c) / t2;
    k.c = (t - s) / (t2 * t);
    k.d = (1.0 - t * s / (2.0 * (1.0 - c))) / t2;
    k.c2 = (t2 + 2.0 * c - 2.0) / (2.0 * t2 * t2);
    k.c3 = (2.0 * t - 3.0 * s + t * c) / (2.0 * t2 * t2 * t);
    return k;
}

Eigen::Matrix3d q_block(const Eigen::Vector3d& omega, const Eigen::Vector3d& rho) {
    const Coefficients k = coefficients(omega.norm());
    const Eigen::Matrix3d w = hat(omega);
    const Eigen::Matrix3d r = hat(rho);
    const Eigen::Matrix3d wr = w * r;
    const Eigen::Matrix3d rw = r * w;
    const Eigen::Matrix3d wrw = wr * w;
    return 0.5 * r + k.c * (wr + rw + wrw) + k.c2 * (w * wr + rw * w - 3.0 * wrw) + k.c3 * (wrw * w + w * wrw);
}

}  // namespace

Eigen::Matrix3d hat(const Eigen::Vector3d& v) {
    Eigen::Matrix3d m;
    m << 0.0, -v.z(), v.y(), v.z(), 0.0, -v.x(), -v.y(), v.x(), 0.0;
    return m;
}

Eigen::Matrix4d hat(const Vector6d& xi) {
    Eigen::Matrix4d m = Eigen::Matrix4d::Zero();
    m.topLeftCorner<3, 3>() = hat(Eigen::Vector3d(xi.head<3>()));
    m.topRightCorner<3, 1>() = xi.tail<3>();
    return m;
}

Eigen::Matrix3d so3_exp(const Eigen::Vector3d& omega) {
    const Coefficients k = coefficients(omega.norm());
    const Eigen::Matrix3d w = hat(omega);
    return Eigen::Matrix3d::Identity() + k.a * w + k.b * w * w;
}

Eigen::Vector3d so3_log(const Eigen::Matrix3d& rotation) {
    Eigen::Quaterniond q(rotation);
    if (q.w() < 0.0) q.coeffs() = -q.coeffs();
    const Eigen::Vector3d v = q.vec();
    const double vn = v.norm();
    if (vn < 1e-8) {
        // angle = 2 atan(vn / w) ~= 2 vn / w (1 - vn^2 / (3 w^2))
        return v * (2.0 / q.w()) * (1.0 - vn * vn / (3.0 * q.w() * q.w()));
    }
    return v * (2.0 * std::atan2(vn, q.w()) / vn);
}

Eigen::Matrix3d so3_left_jacobian(const Eigen::Vector3d& omega) {
    const Coefficients k = coefficients(omega.norm());
    const Eigen::Matrix3d w = hat(omega);
    return Eigen::Matrix3d::Identity() + k.b * w + k.c * w * w;
}

Eigen::Matrix3d so3_left_jacobian_inverse(const Eigen::Vector3d& omega) {
    const Coefficients k = coefficients(omega.norm());
    const Eigen::Matrix3d w = hat(omega);
    return Eigen::Matrix3d::Identity() - 0.5 * w + k.d * w * w;
}

RigidTransform se3_exp(const Vector6d& xi) {
    const Eigen::Vector3d omega = xi.head<3>();
    const Eigen::Vector3d rho = xi.tail<3>();
    return RigidTransform::from_rotation_translation(so3_exp(omega), so3_left_jacobian(omega) * rho);
}

Vector6d se3_log(const RigidTransform& t) {
    const Eigen::Vector3d omega = so3_log(t.rotation());
    Vector6d xi;
    xi.head<3>() = omega;
    xi.tail<3>() = so3_left_jacobian_inverse(omega) * t.translation();
    return xi;
}

Matrix6d se3_left_jacobian(const Vector6d& xi) {
    const Eigen::Vector3d omega = xi.head<3>();
    const Eigen::Matrix3d j = so3_left_jacobian(omega);
    Matrix6d m = Matrix6d::Zero();
    m.topLeftCorner<3, 3>() = j;
    m.bottomRightCorner<3, 3>() = j;
    m.bottomLeftCorner<3, 3>() = q_block(omega, xi.tail<3>());
    return m;
}

Matrix6d se3_left_jacobian_inverse(const Vector6d& xi) {
    const Eigen::Vector3d omega = xi.head<3>();
    const Eigen::Matrix3d jinv = so3_left_jacobian_inverse(omega);
    Matrix6d m = Matrix6d::Zero();
    m.topLeftCorner<3, 3>() = jinv;
    m.bottomRightCorner<3, 3>() = jinv;
    m.bottomLeftCorner<3, 3>() = -jinv * q_block(omega, xi.tail<3>()) * jinv;
    return m;
}

Matrix6d adjoint(const RigidTransform& t) {
    const Eigen::Matrix3d r = t.rotation();
    Matrix6d m = Matrix6d::Zero();
    m.topLeftCorner<3, 3>() = r;
    m.bottomRightCorner<3, 3>() = r;
    m.bottomLeftCorner<3, 3>() = hat(t.translation()) * r;
    return m;
}

}  // namespace r3d
