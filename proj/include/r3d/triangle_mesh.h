#pragma once

#include <Eigen/Core>
#include <vector>

#include "r3d/rigid_transform.h"

namespace r3d {

/// Indexed triangle mesh. `vertices` and `triangles` are the master fields;
/// vertex_normals / vertex_colors follow vertices, triangle_normals follow
/// triangles, and each counts as present only at matching length.
struct TriangleMesh {
    std::vector<Eigen::Vector3d> vertices;
    std::vector<Eigen::Vector3i> triangles;
    std::vector<Eigen::Vector3d> vertex_normals;
    std::vector<Eigen::Vector3d> vertex_colors;
    std::vector<Eigen::Vector3d> triangle_normals;

    bool has_vertex_normals() const { return !vertices.empty() && vertex_normals.size() == vertices.size(); }
    bool has_vertex_colors() const { return !vertices.empty() && vertex_colors.size() == vertices.size(); }
    bool has_triangle_normals() const { return !triangles.empty() && triangle_normals.size() == triangles.size(); }

    /// Throws InvalidArgument if a triangle references a missing vertex.
    void validate() const;
};

/// Triangle normals from (v1 - v0) x (v2 - v0); vertex normals as the
/// normalized sum of incident triangle normals. Degenerate triangles get a
/// zero normal and contribute nothing.
void compute_vertex_normals(TriangleMesh& mesh);

TriangleMesh transform(const TriangleMesh& mesh, const RigidTransform& t);

/// Sphere mesh obtained by subdividing an icosahedron `subdivisions` times
/// (20 * 4^subdivisions triangles), outward-facing counter-clockwise winding.
TriangleMesh create_icosphere(double radius, int subdivisions);

}  // namespace r3d
