#include "r3d/point_cloud.h"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <unordered_map>

#include "r3d/error.h"
#include "r3d/parallel.h"

namespace r3d {

Eigen::Vector3d PointCloud::min_bound() const {
    if (points.empty()) return Eigen::Vector3d::Zero();
    Eigen::Vector3d m = points.front();
    for (const auto& p : points) m = m.cwiseMin(p);
    return m;
}

Eigen::Vector3d PointCloud::max_bound() const {
    if (points.empty()) return Eigen::Vector3d::Zero();
    Eigen::Vector3d m = points.front();
    for (const auto& p : points) m = m.cwiseMax(p);
    return m;
}

PointCloud& PointCloud::operator+=(const PointCloud& other) {
    if (other.empty()) return *this;
    const bool keep_normals = (empty() || has_normals()) && other.has_normals();
    const bool keep_colors = (empty() || has_colors()) && other.has_colors();
    if (keep_normals) {
        normals.insert(normals.end(), other.normals.begin(), other.normals.end());
    } else {
        normals.clear();
    }
    if (keep_colors) {
        colors.insert(colors.end(), other.colors.begin(), other.colors.end());
    } else {
        colors.clear();
    }
    points.insert(points.end(), other.points.begin(), other.points.end());
    return *this;
}

namespace {

using VoxelKey = std::array<std::int64_t, 3>;

struct VoxelKeyHash {
    std::size_t operator()(const VoxelKey& k) const {
        std::uint64_t h = 1469598103934665603ULL;
        for (std::int64_t v : k) {
            h ^= static_cast<std::uint64_t>(v);
            h *= 1099511628211ULL;
        }
        return static_cast<std::size_t>(h);
    }
};

struct VoxelAccumulator {
    Eigen::Vector3d point = Eigen::Vector3d::Zero();
    Eigen::Vector3d normal = Eigen::Vector3d::Zero();
    Eigen::Vector3d color = Eigen::Vector3d::Zero();
    std::size_t count = 0;
};

}  // namespace

PointCloud voxel_down_sample(const PointCloud& cloud, double voxel_size) {
    if (!(voxel_size > 0.0)) throw InvalidArgument("voxel_size must be positive");
    if (cloud.empty()) throw InvalidArgument("cannot downsample an empty cloud");
    const Eigen::Vector3d origin = cloud.min_bound();
    const Eigen::Vector3d extent = cloud.max_bound() - origin;
    if (!extent.allFinite() || extent.maxCoeff() / voxel_size > 1e15)
        throw InvalidArgument("voxel_size is too small for the cloud extent");

    const bool normals = cloud.has_normals();
    const bool colors = cloud.has_colors();
    std::unordered_map<VoxelKey, VoxelAccumulator, VoxelKeyHash> voxels;
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        const Eigen::Vector3d rel = (cloud.points[i] - origin) / voxel_size;
        const VoxelKey key{static_cast<std::int64_t>(std::floor(rel.x())),
                           static_cast<std::int64_t>(std::floor(rel.y())),
                           static_cast<std::int64_t>(std::floor(rel.z()))};
        VoxelAccumulator& acc = voxels[key];
        acc.point += cloud.points[i];
        if (normals) acc.normal += cloud.normals[i];
        if (colors) acc.color += cloud.colors[i];
        ++acc.count;
    }

    std::vector<const std::pair<const VoxelKey, VoxelAccumulator>*> sorted;
    sorted.reserve(voxels.size());
    for (const auto& entry : voxels) sorted.push_back(&entry);
    std::sort(sorted.begin(), sorted.end(), [](auto* a, auto* b) { return a->first < b->first; });

    PointCloud out;
    out.points.reserve(sorted.size());
    for (const auto* entry : sorted) {
        const VoxelAccumulator& acc = entry->second;
        const double n = static_cast<double>(acc.count);
        out.points.push_back(acc.point / n);
        if (normals) {
            const double norm = acc.normal.norm();
            out.normals.push_back(norm > 0.0 ? Eigen::Vector3d(acc.normal / norm) : Eigen::Vector3d::Zero());
        }
        if (colors) out.colors.push_back(acc.color / n);
    }
    return out;
}

PointCloud transform(const PointCloud& cloud, const RigidTransform& t) {
    if (t.is_identity()) return cloud;
    PointCloud out = cloud;
    const Eigen::Matrix3d r = t.rotation();
    const Eigen::Vector3d tr = t.translation();
    for (auto& p : out.points) p = r * p + tr;
    for (auto& n : out.normals) n = r * n;
    return out;
}

void orient_normals_towards_camera(PointCloud& cloud, const Eigen::Vector3d& camera_location) {
    if (!cloud.has_normals()) throw InvalidArgument("cloud has no normals to orient");
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        if (cloud.normals[i].dot(camera_location - cloud.points[i]) < 0.0) cloud.normals[i] = -cloud.normals[i];
    }
}

PointCloud create_point_cloud_from_rgbd(const RGBDImage& rgbd, const PinholeCameraIntrinsic& intrinsic) {
    intrinsic.validate();
    const Image& depth = rgbd.depth;
    const Image& color = rgbd.color;
    if (depth.width() != intrinsic.width || depth.height() != intrinsic.height)
        throw InvalidArgument("RGB-D resolution " + std::to_string(depth.width()) + "x" +
                              std::to_string(depth.height()) + " does not match intrinsic " +
                              std::to_string(intrinsic.width) + "x" + std::to_string(intrinsic.height));
    if (depth.channels() != 1 || depth.type() != PixelType::kFloat32)
        throw InvalidArgument("depth image must be 1-channel float");
    const bool has_color = !color.empty();
    if (has_color && (color.width() != depth.width() || color.height() != depth.height() || color.channels() != 3))
        throw InvalidArgument("color image does not match depth image");

    auto d = depth.data<float>();
    PointCloud cloud;
    for (int v = 0; v < depth.height(); ++v) {
        for (int u = 0; u < depth.width(); ++u) {
            const double z = d[static_cast<std::size_t>(v) * depth.width() + u];
            if (!(z > 0.0)) continue;
            cloud.points.emplace_back((u - intrinsic.cx) * z / intrinsic.fx, (v - intrinsic.cy) * z / intrinsic.fy, z);
            if (!has_color) continue;
            if (color.type() == PixelType::kUInt8) {
                cloud.colors.emplace_back(color.at<std::uint8_t>(u, v, 0) / 255.0, color.at<std::uint8_t>(u, v, 1) / 255.0,
                                          color.at<std::uint8_t>(u, v, 2) / 255.0);
            } else {
                cloud.colors.emplace_back(color.at<float>(u, v, 0), color.at<float>(u, v, 1), color.at<float>(u, v, 2));
            }
        }
    }
    return cloud;
}

}  // namespace r3d
