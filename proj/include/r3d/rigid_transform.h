#pragma once

#include <Eigen/Core>

namespace r3d {

/// A proper rigid motion stored as a 4x4 homogeneous matrix.
///
/// Every instance satisfies R^T R = I and det(R) = 1 within kRigidTolerance,
/// with bottom row exactly (0, 0, 0, 1). Construction from an arbitrary
/// matrix validates; composition and inversion of valid transforms do not.
class RigidTransform {
public:
    static constexpr double kRigidTolerance = 1e-9;

    RigidTransform() : matrix_(Eigen::Matrix4d::Identity()) {}

    /// Throws InvalidArgument if `m` is not rigid.
    static RigidTransform from_matrix(const Eigen::Matrix4d& m);
    static RigidTransform from_rotation_translation(const Eigen::Matrix3d& rotation,
                                                    const Eigen::Vector3d& translation);
    static RigidTransform from_translation(const Eigen::Vector3d& translation);

    static bool is_rigid(const Eigen::Matrix4d& m, double tolerance = kRigidTolerance);

    const Eigen::Matrix4d& matrix() const { return matrix_; }
    Eigen::Matrix3d rotation() const { return matrix_.topLeftCorner<3, 3>(); }
    Eigen::Vector3d translation() const { return matrix_.topRightCorner<3, 1>(); }

    /// Exact identity, bit for bit.
    bool is_identity() const;

    /// [R^T, -R^T t].
    RigidTransform inverse() const;

    RigidTransform operator*(const RigidTransform& rhs) const;
    Eigen::Vector3d operator*(const Eigen::Vector3d& p) const {
        return matrix_.topLeftCorner<3, 3>() * p + matrix_.topRightCorner<3, 1>();
    }

    /// Rotation angle of R in radians, in [0, pi].
    double rotation_angle() const;

    bool operator==(const RigidTransform& rhs) const { return matrix_ == rhs.matrix_; }

private:
    explicit RigidTransform(const Eigen::Matrix4d& m) : matrix_(m) {}

    Eigen::Matrix4d matrix_;
};

}  // namespace r3d
