#include "r3d/rigid_transform.h"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

#include "r3d/error.h"

namespace r3d {

RigidTransform RigidTransform::from_matrix(const Eigen::Matrix4d& m) {
    if (!is_rigid(m)) throw InvalidArgument("transform is not a proper rigid motion");
    return RigidTransform(m);
}

RigidTransform RigidTransform::from_rotation_translation(const Eigen::Matrix3d& rotation,
                                                         const Eigen::Vector3d& translation) {
    Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
    m.topLeftCorner<3, 3>() = rotation;
    m.topRightCorner<3, 1>() = translation;
    return from_matrix(m);
}

RigidTransform RigidTransform::from_translation(const Eigen::Vector3d& translation) {
    Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
    m.topRightCorner<3, 1>() = translation;
    return RigidTransform(m);
}

bool RigidTransform::is_rigid(const Eigen::Matrix4d& m, double tolerance) {
    if (!m.allFinite()) return false;
    if (m(3, 0) != 0.0 || m(3, 1) != 0.0 || m(3, 2) != 0.0 || m(3, 3) != 1.0) return false;
    const Eigen::Matrix3d r = m.topLeftCorner<3, 3>();
    const double orthogonality = (r.transpose() * r - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff();
    return orthogonality <= tolerance && std::abs(r.determinant() - 1.0) <= tolerance;
}

bool RigidTransform::is_identity() const { return matrix_ == Eigen::Matrix4d::Identity(); }

RigidTransform RigidTransform::inverse() const {
    Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
    const Eigen::Matrix3d rt = rotation().transpose();
    m.topLeftCorner<3, 3>() = rt;
    m.topRightCorner<3, 1>() = -rt * translation();
    return RigidTransform(m);
}

RigidTransform RigidTransform::operator*(const RigidTransform& rhs) const {
    Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
    m.topLeftCorner<3, 3>() = rotation() * rhs.rotation();
    m.topRightCorner<3, 1>() = rotation() * rhs.translation() + translation();
    return RigidTransform(m);
}

double RigidTransform::rotation_angle() const {
    const double c = std::clamp((rotation().trace() - 1.0) / 2.0, -1.0, 1.0);
    return std::acos(c);
}

}  // namespace r3d
