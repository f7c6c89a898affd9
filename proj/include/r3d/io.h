#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "r3d/features.h"
#include "r3d/image.h"
#include "r3d/point_cloud.h"
#include "r3d/pose_graph.h"
#include "r3d/triangle_mesh.h"

namespace r3d {

/// On-disk formats. kAuto picks one from the file extension:
/// .ply -> binary little-endian PLY, .pcd -> ASCII PCD, .pgm / .ppm -> Netpbm,
/// .json -> pose graph, .fpfh / .txt -> feature text.
enum class FileFormat { kAuto, kPlyAscii, kPlyBinary, kPcdAscii, kPgm, kPpm, kPoseGraphJson, kFeatureText };

/// Format implied by the extension of `path`; throws InvalidArgument for an
/// unknown extension.
FileFormat format_from_extension(const std::filesystem::path& path);

// Readers throw IoError when the file cannot be opened and ParseError (or its
// subclass UnsupportedFeature) with a line number or byte offset when the
// content violates the format. The *_from_bytes variants parse an in-memory
// file; `name` is used in error messages.

PointCloud read_point_cloud(const std::filesystem::path& path);
PointCloud read_point_cloud_from_bytes(std::string_view bytes, FileFormat format, const std::string& name);
void write_point_cloud(const std::filesystem::path& path, const PointCloud& cloud, FileFormat format = FileFormat::kAuto);

TriangleMesh read_triangle_mesh(const std::filesystem::path& path);
TriangleMesh read_triangle_mesh_from_bytes(std::string_view bytes, FileFormat format, const std::string& name);
void write_triangle_mesh(const std::filesystem::path& path, const TriangleMesh& mesh,
                         FileFormat format = FileFormat::kAuto);

/// P5 (1 channel) or P6 (3 channels); maxval < 256 gives 8-bit pixels, else
/// 16-bit (big-endian on disk).
Image read_image(const std::filesystem::path& path);
Image read_image_from_bytes(std::string_view bytes, FileFormat format, const std::string& name);
/// 8- or 16-bit images only.
void write_image(const std::filesystem::path& path, const Image& image);

/// Throws VersionError for a version other than 1.
PoseGraph read_pose_graph(const std::filesystem::path& path);
PoseGraph read_pose_graph_from_bytes(std::string_view bytes, const std::string& name);
void write_pose_graph(const std::filesystem::path& path, const PoseGraph& graph);

FeatureMatrix read_feature(const std::filesystem::path& path);
FeatureMatrix read_feature_from_bytes(std::string_view bytes, const std::string& name);
void write_feature(const std::filesystem::path& path, const FeatureMatrix& feature);

}  // namespace r3d
