#include "r3d/io.h"

#include "formats.h"
#include "io_common.h"

namespace r3d {
namespace {

bool is_ply(FileFormat f) { return f == FileFormat::kPlyAscii || f == FileFormat::kPlyBinary; }

FileFormat resolve(const std::filesystem::path& path, FileFormat format) {
    return format == FileFormat::kAuto ? format_from_extension(path) : format;
}

}  // namespace

FileFormat format_from_extension(const std::filesystem::path& path) {
    const std::string ext = io::lower_extension(path);
    if (ext == ".ply") return FileFormat::kPlyBinary;
    if (ext == ".pcd") return FileFormat::kPcdAscii;
    if (ext == ".pgm") return FileFormat::kPgm;
    if (ext == ".ppm") return FileFormat::kPpm;
    if (ext == ".json") return FileFormat::kPoseGraphJson;
    if (ext == ".fpfh" || ext == ".txt") return FileFormat::kFeatureText;
    throw InvalidArgument("unknown file extension '" + ext + "' in '" + path.string() + "'");
}

PointCloud read_point_cloud_from_bytes(std::string_view bytes, FileFormat format, const std::string& name) {
    if (is_ply(format)) {
        io::PlyData d = io::parse_ply(bytes, name);
        PointCloud cloud;
        cloud.points = std::move(d.points);
        cloud.normals = std::move(d.normals);
        cloud.colors = std::move(d.colors);
        return cloud;
    }
    if (format == FileFormat::kPcdAscii) return io::parse_pcd(bytes, name);
    throw InvalidArgument("read_point_cloud: '" + name + "' is not a point-cloud format");
}

PointCloud read_point_cloud(const std::filesystem::path& path) {
    const FileFormat format = format_from_extension(path);
    return read_point_cloud_from_bytes(io::read_file(path), format, path.string());
}

void write_point_cloud(const std::filesystem::path& path, const PointCloud& cloud, FileFormat format) {
    format = resolve(path, format);
    static const std::vector<Eigen::Vector3d> none;
    std::string bytes;
    if (is_ply(format)) {
        bytes = io::format_ply(cloud.points, cloud.has_normals() ? cloud.normals : none,
                               cloud.has_colors() ? cloud.colors : none, {}, false, format == FileFormat::kPlyBinary);
    } else if (format == FileFormat::kPcdAscii) {
        bytes = io::format_pcd(cloud);
    } else {
        throw InvalidArgument("write_point_cloud: '" + path.string() + "' is not a point-cloud format");
    }
    io::write_file(path, bytes);
}

TriangleMesh read_triangle_mesh_from_bytes(std::string_view bytes, FileFormat format, const std::string& name) {
    if (!is_ply(format)) throw InvalidArgument("read_triangle_mesh: '" + name + "' is not a PLY file");
    io::PlyData d = io::parse_ply(bytes, name);
    TriangleMesh mesh;
    mesh.vertices = std::move(d.points);
    mesh.vertex_normals = std::move(d.normals);
    mesh.vertex_colors = std::move(d.colors);
    mesh.triangles = std::move(d.triangles);
    return mesh;
}

TriangleMesh read_triangle_mesh(const std::filesystem::path& path) {
    const FileFormat format = format_from_extension(path);
    return read_triangle_mesh_from_bytes(io::read_file(path), format, path.string());
}

void write_triangle_mesh(const std::filesystem::path& path, const TriangleMesh& mesh, FileFormat format) {
    format = resolve(path, format);
    if (!is_ply(format)) throw InvalidArgument("write_triangle_mesh: '" + path.string() + "' is not a PLY path");
    mesh.validate();
    static const std::vector<Eigen::Vector3d> none;
    io::write_file(path, io::format_ply(mesh.vertices, mesh.has_vertex_normals() ? mesh.vertex_normals : none,
                                        mesh.has_vertex_colors() ? mesh.vertex_colors : none, mesh.triangles, true,
                                        format == FileFormat::kPlyBinary));
}

Image read_image_from_bytes(std::string_view bytes, FileFormat format, const std::string& name) {
    if (format == FileFormat::kPgm) return io::parse_netpbm(bytes, name, 1);
    if (format == FileFormat::kPpm) return io::parse_netpbm(bytes, name, 3);
    throw InvalidArgument("read_image: '" + name + "' is not a PGM or PPM file");
}

Image read_image(const std::filesystem::path& path) {
    const FileFormat format = format_from_extension(path);
    return read_image_from_bytes(io::read_file(path), format, path.string());
}

void write_image(const std::filesystem::path& path, const Image& image) {
    const FileFormat format = format_from_extension(path);
    if (format != FileFormat::kPgm && format != FileFormat::kPpm)
        throw InvalidArgument("write_image: '" + path.string() + "' is not a .pgm or .ppm path");
    if ((format == FileFormat::kPgm) != (image.channels() == 1))
        throw InvalidArgument("write_image: .pgm holds 1-channel and .ppm 3-channel images");
    io::write_file(path, io::format_netpbm(image));
}

PoseGraph read_pose_graph_from_bytes(std::string_view bytes, const std::string& name) {
    return io::parse_pose_graph(bytes, name);
}

PoseGraph read_pose_graph(const std::filesystem::path& path) {
    return io::parse_pose_graph(io::read_file(path), path.string());
}

void write_pose_graph(const std::filesystem::path& path, const PoseGraph& graph) {
    graph.validate();
    io::write_file(path, io::format_pose_graph(graph));
}

FeatureMatrix read_feature_from_bytes(std::string_view bytes, const std::string& name) {
    return io::parse_feature(bytes, name);
}

FeatureMatrix read_feature(const std::filesystem::path& path) {
    return io::parse_feature(io::read_file(path), path.string());
}

void write_feature(const std::filesystem::path& path, const FeatureMatrix& feature) {
    io::write_file(path, io::format_feature(feature));
}

}  // namespace r3d
