#pragma once

#include <Eigen/Core>
#include <string>
#include <string_view>
#include <vector>

#include "r3d/features.h"
#include "r3d/image.h"
#include "r3d/point_cloud.h"
#include "r3d/pose_graph.h"

namespace r3d::io {

/// Content of a PLY file restricted to what clouds and meshes use. normals and
/// colors are empty unless the vertex element declares them.
struct PlyData {
    std::vector<Eigen::Vector3d> points;
    std::vector<Eigen::Vector3d> normals;
    std::vector<Eigen::Vector3d> colors;
    std::vector<Eigen::Vector3i> triangles;
};

PlyData parse_ply(std::string_view bytes, const std::string& name);
/// Empty `normals`/`colors` are omitted; `triangles` is written as a face
/// element when `with_faces` is set.
std::string format_ply(const std::vector<Eigen::Vector3d>& points, const std::vector<Eigen::Vector3d>& normals,
                       const std::vector<Eigen::Vector3d>& colors, const std::vector<Eigen::Vector3i>& triangles,
                       bool with_faces, bool binary);

PointCloud parse_pcd(std::string_view bytes, const std::string& name);
std::string format_pcd(const PointCloud& cloud);

Image parse_netpbm(std::string_view bytes, const std::string& name, int expected_channels);
std::string format_netpbm(const Image& image);

PoseGraph parse_pose_graph(std::string_view bytes, const std::string& name);
std::string format_pose_graph(const PoseGraph& graph);

FeatureMatrix parse_feature(std::string_view bytes, const std::string& name);
std::string format_feature(const FeatureMatrix& feature);

}  // namespace r3d::io
