#pragma once

#include <Eigen/Core>
#include <cstddef>
#include <vector>

#include "r3d/image.h"
#include "r3d/kdtree.h"
#include "r3d/rigid_transform.h"

namespace r3d {

/// Points with optional per-point normals and colors (RGB in [0,1]).
///
/// `points` is the master field. `normals` and `colors` count as present
/// only when they hold exactly one record per point.
struct PointCloud {
    std::vector<Eigen::Vector3d> points;
    std::vector<Eigen::Vector3d> normals;
    std::vector<Eigen::Vector3d> colors;

    std::size_t size() const { return points.size(); }
    bool empty() const { return points.empty(); }
    bool has_normals() const { return !points.empty() && normals.size() == points.size(); }
    bool has_colors() const { return !points.empty() && colors.size() == points.size(); }

    Eigen::Vector3d min_bound() const;
    Eigen::Vector3d max_bound() const;

    /// Appends `other`; auxiliary fields survive only if both clouds carry them.
    PointCloud& operator+=(const PointCloud& other);
};

/// Averages all points (and normals/colors) falling in each occupied voxel of
/// the grid anchored at the cloud's minimum bound. Output is ordered by
/// ascending voxel key (x, then y, then z). Averaged normals are renormalized.
PointCloud voxel_down_sample(const PointCloud& cloud, double voxel_size);

/// Replaces `cloud.normals` with PCA normals over the neighbors returned by
/// `search`, oriented so the largest-magnitude component is positive.
/// Points with fewer than 3 neighbors get (0, 0, 1); their count is returned.
std::size_t estimate_normals(PointCloud& cloud, const SearchParam& search);

/// Flips each normal so that it points towards `camera_location`.
void orient_normals_towards_camera(PointCloud& cloud,
                                   const Eigen::Vector3d& camera_location = Eigen::Vector3d::Zero());

/// Unit eigenvector of the smallest eigenvalue of a symmetric 3x3 matrix,
/// computed in closed form. Sign is unspecified.
Eigen::Vector3d smallest_eigenvector(const Eigen::Matrix3d& symmetric);

PointCloud transform(const PointCloud& cloud, const RigidTransform& t);

/// Back-projects every pixel with positive depth, in row-major order.
PointCloud create_point_cloud_from_rgbd(const RGBDImage& rgbd, const PinholeCameraIntrinsic& intrinsic);

}  // namespace r3d
