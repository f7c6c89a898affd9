#pragma once

#include <Eigen/Core>
#include <vector>

#include "r3d/image.h"
#include "r3d/point_cloud.h"
#include "r3d/rigid_transform.h"
#include "r3d/triangle_mesh.h"

namespace r3d {

/// Truncated signed distance field on a dense voxel grid.
///
/// Voxel (i, j, k) has its center at origin + (i + 0.5, j + 0.5, k + 0.5) *
/// voxel_size. tsdf is the signed distance divided by sdf_trunc, clamped to
/// [-1, 1], negative behind the observed surface. weight 0 means never observed.
class TSDFVolume {
public:
    /// Throws InvalidArgument for non-positive sizes or more than kMaxVoxels voxels.
    TSDFVolume(const Eigen::Vector3i& dimensions, double voxel_size, double sdf_trunc,
               const Eigen::Vector3d& origin = Eigen::Vector3d::Zero());

    static constexpr std::size_t kMaxVoxels = std::size_t{1} << 29;

    const Eigen::Vector3i& dimensions() const { return dims_; }
    double voxel_size() const { return voxel_size_; }
    double sdf_trunc() const { return sdf_trunc_; }
    const Eigen::Vector3d& origin() const { return origin_; }
    std::size_t voxel_count() const { return tsdf_.size(); }

    Eigen::Vector3d voxel_center(int i, int j, int k) const {
        return origin_ + voxel_size_ * Eigen::Vector3d(i + 0.5, j + 0.5, k + 0.5);
    }
    std::size_t index(int i, int j, int k) const {
        return static_cast<std::size_t>(i) +
               static_cast<std::size_t>(dims_.x()) * (static_cast<std::size_t>(j) + static_cast<std::size_t>(dims_.y()) * k);
    }

    double tsdf(int i, int j, int k) const { return tsdf_[index(i, j, k)]; }
    float weight(int i, int j, int k) const { return weight_[index(i, j, k)]; }
    Eigen::Vector3d color(int i, int j, int k) const { return color_[index(i, j, k)].cast<double>(); }

    /// Direct write, for analytic fills. tsdf is clamped to [-1, 1].
    void set_voxel(int i, int j, int k, double tsdf, float weight,
                   const Eigen::Vector3d& color = Eigen::Vector3d::Zero());

    bool has_observations() const;

    /// Fuses one RGB-D frame. `extrinsic` maps world to camera coordinates.
    /// Each voxel center is projected to the nearest pixel; with a valid depth
    /// d there, s = d - z_cam. Voxels with s < -sdf_trunc are left alone,
    /// others take a weight-1 running average of min(s / sdf_trunc, 1) and
    /// of the pixel color.
    void integrate(const RGBDImage& rgbd, const PinholeCameraIntrinsic& intrinsic, const RigidTransform& extrinsic);

    /// Marching cubes over cells whose 8 corners are all observed. Triangles
    /// face the positive side. Throws EmptyMeshError without observed voxels.
    TriangleMesh extract_triangle_mesh() const;

    /// The mesh vertices with normals from the interpolated tsdf gradient.
    PointCloud extract_point_cloud() const;

private:
    struct Surface;
    Surface extract_surface(bool gradients) const;
    Eigen::Vector3d gradient(int i, int j, int k) const;

    Eigen::Vector3i dims_;
    double voxel_size_;
    double sdf_trunc_;
    Eigen::Vector3d origin_;
    std::vector<double> tsdf_;
    std::vector<float> weight_;
    std::vector<Eigen::Vector3f> color_;
};

}  // namespace r3d
