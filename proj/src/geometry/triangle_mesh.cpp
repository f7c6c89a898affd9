#include "r3d/triangle_mesh.h"

#include <Eigen/Geometry>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>

#include "r3d/error.h"

namespace r3d {

void TriangleMesh::validate() const {
    const int n = static_cast<int>(vertices.size());
    for (std::size_t t = 0; t < triangles.size(); ++t) {
        for (int k = 0; k < 3; ++k) {
            const int v = triangles[t][k];
            if (v < 0 || v >= n)
                throw InvalidArgument("triangle " + std::to_string(t) + " references vertex " +
                                      std::to_string(v) + " of " + std::to_string(n));
        }
    }
}

void compute_vertex_normals(TriangleMesh& mesh) {
    if (mesh.triangles.empty()) throw InvalidArgument("mesh has no triangles");
    mesh.validate();
    mesh.triangle_normals.assign(mesh.triangles.size(), Eigen::Vector3d::Zero());
    std::vector<Eigen::Vector3d> sums(mesh.vertices.size(), Eigen::Vector3d::Zero());
    for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
        const Eigen::Vector3i& tri = mesh.triangles[t];
        const Eigen::Vector3d& v0 = mesh.vertices[tri[0]];
        const Eigen::Vector3d n = (mesh.vertices[tri[1]] - v0).cross(mesh.vertices[tri[2]] - v0);
        const double norm = n.norm();
        if (!(norm > 0.0)) continue;
        const Eigen::Vector3d unit = n / norm;
        mesh.triangle_normals[t] = unit;
        for (int k = 0; k < 3; ++k) sums[tri[k]] += unit;
    }
    mesh.vertex_normals.resize(mesh.vertices.size());
    for (std::size_t v = 0; v < sums.size(); ++v) {
        const double norm = sums[v].norm();
        mesh.vertex_normals[v] = norm > 0.0 ? Eigen::Vector3d(sums[v] / norm) : Eigen::Vector3d::Zero();
    }
}

TriangleMesh transform(const TriangleMesh& mesh, const RigidTransform& t) {
    if (t.is_identity()) return mesh;
    TriangleMesh out = mesh;
    const Eigen::Matrix3d r = t.rotation();
    const Eigen::Vector3d tr = t.translation();
    for (auto& v : out.vertices) v = r * v + tr;
    for (auto& n : out.vertex_normals) n = r * n;
    for (auto& n : out.triangle_normals) n = r * n;
    return out;
}

TriangleMesh create_icosphere(double radius, int subdivisions) {
    if (!(radius > 0.0)) throw InvalidArgument("radius must be positive");
    if (subdivisions < 0) throw InvalidArgument("subdivisions must be non-negative");
    const double phi = (1.0 + std::sqrt(5.0)) / 2.0;
    TriangleMesh mesh;
    mesh.vertices = {{-1, phi, 0}, {1, phi, 0},  {-1, -phi, 0}, {1, -phi, 0}, {0, -1, phi},  {0, 1, phi},
                     {0, -1, -phi}, {0, 1, -phi}, {phi, 0, -1},  {phi, 0, 1},  {-phi, 0, -1}, {-phi, 0, 1}};
    for (auto& v : mesh.vertices) v.normalize();
    mesh.triangles = {{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11}, {1, 5, 9}, {5, 11, 4},
                      {11, 10, 2}, {10, 7, 6}, {7, 1, 8},   {3, 9, 4},  {3, 4, 2},   {3, 2, 6}, {3, 6, 8},
                      {3, 8, 9},   {4, 9, 5},  {2, 4, 11},  {6, 2, 10}, {8, 6, 7},   {9, 8, 1}};

    for (int level = 0; level < subdivisions; ++level) {
        std::map<std::pair<int, int>, int> midpoints;
        auto midpoint = [&](int a, int b) {
            const auto key = std::minmax(a, b);
            auto it = midpoints.find(key);
            if (it != midpoints.end()) return it->second;
            const int id = static_cast<int>(mesh.vertices.size());
            mesh.vertices.push_back((mesh.vertices[a] + mesh.vertices[b]).normalized());
            midpoints.emplace(key, id);
            return id;
        };
        std::vector<Eigen::Vector3i> refined;
        refined.reserve(mesh.triangles.size() * 4);
        for (const auto& t : mesh.triangles) {
            const int ab = midpoint(t[0], t[1]);
            const int bc = midpoint(t[1], t[2]);
            const int ca = midpoint(t[2], t[0]);
            refined.emplace_back(t[0], ab, ca);
            refined.emplace_back(t[1], bc, ab);
            refined.emplace_back(t[2], ca, bc);
            refined.emplace_back(ab, bc, ca);
        }
        mesh.triangles = std::move(refined);
    }
    for (auto& v : mesh.vertices) v *= radius;
    return mesh;
}

}  // namespace r3d
