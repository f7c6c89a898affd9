#include "r3d/tsdf_volume.h"

#include <algorithm>
#include <cmath>
#include <unordered_map>

#include "marching_cubes.h"
#include "r3d/error.h"
#include "r3d/parallel.h"

namespace r3d {

struct TSDFVolume::Surface {
    std::vector<Eigen::Vector3d> vertices;
    std::vector<Eigen::Vector3d> colors;
    std::vector<Eigen::Vector3d> normals;
    std::vector<Eigen::Vector3i> triangles;
};

TSDFVolume::TSDFVolume(const Eigen::Vector3i& dimensions, double voxel_size, double sdf_trunc,
                       const Eigen::Vector3d& origin)
    : dims_(dimensions), voxel_size_(voxel_size), sdf_trunc_(sdf_trunc), origin_(origin) {
    if ((dims_.array() <= 0).any()) throw InvalidArgument("TSDF dimensions must be positive");
    if (!(voxel_size > 0.0) || !(sdf_trunc > 0.0)) throw InvalidArgument("voxel_size and sdf_trunc must be positive");
    if (!origin.allFinite()) throw InvalidArgument("TSDF origin must be finite");
    const double count = static_cast<double>(dims_.x()) * dims_.y() * dims_.z();
    if (count > static_cast<double>(kMaxVoxels)) throw InvalidArgument("TSDF volume is too large");
    const auto n = static_cast<std::size_t>(count);
    tsdf_.assign(n, 1.0);
    weight_.assign(n, 0.0f);
    color_.assign(n, Eigen::Vector3f::Zero());
}

void TSDFVolume::set_voxel(int i, int j, int k, double tsdf, float weight, const Eigen::Vector3d& color) {
    if (i < 0 || j < 0 || k < 0 || i >= dims_.x() || j >= dims_.y() || k >= dims_.z())
        throw InvalidArgument("voxel index out of range");
    if (!(weight >= 0.0f)) throw InvalidArgument("voxel weight must be non-negative");
    const std::size_t v = index(i, j, k);
    tsdf_[v] = std::clamp(tsdf, -1.0, 1.0);
    weight_[v] = weight;
    color_[v] = color.cast<float>();
}

bool TSDFVolume::has_observations() const {
    return std::any_of(weight_.begin(), weight_.end(), [](float w) { return w > 0.0f; });
}

void TSDFVolume::integrate(const RGBDImage& rgbd, const PinholeCameraIntrinsic& intrinsic,
                           const RigidTransform& extrinsic) {
    intrinsic.validate();
    const Image& depth = rgbd.depth;
    const Image& color = rgbd.color;
    if (depth.width() != intrinsic.width || depth.height() != intrinsic.height || depth.channels() != 1 ||
        depth.type() != PixelType::kFloat32)
        throw InvalidArgument("depth image must be 1-channel float matching the intrinsic");
    const bool has_color = !color.empty();
    if (has_color && (color.width() != depth.width() || color.height() != depth.height() || color.channels() != 3 ||
                      color.type() == PixelType::kUInt16))
        throw InvalidArgument("color image must be 3-channel 8-bit or float matching the depth image");

    const auto d = depth.data<float>();
    const Eigen::Matrix3d r = extrinsic.rotation();
    const Eigen::Vector3d t = extrinsic.translation();
    const int w = depth.width(), h = depth.height();

    parallel_for(dims_.z(), [&](std::ptrdiff_t kk) {
        const int k = static_cast<int>(kk);
        for (int j = 0; j < dims_.y(); ++j) {
            for (int i = 0; i < dims_.x(); ++i) {
                const Eigen::Vector3d p = r * voxel_center(i, j, k) + t;
                if (!(p.z() > 0.0)) continue;
                const double uf = std::floor(intrinsic.fx * p.x() / p.z() + intrinsic.cx + 0.5);
                const double vf = std::floor(intrinsic.fy * p.y() / p.z() + intrinsic.cy + 0.5);
                if (!(uf >= 0.0 && uf < w && vf >= 0.0 && vf < h)) continue;
                const int u = static_cast<int>(uf), v = static_cast<int>(vf);
                const double z = d[static_cast<std::size_t>(v) * w + u];
                if (!(z > 0.0)) continue;
                const double s = z - p.z();
                if (s < -sdf_trunc_) continue;
                const double sample = std::min(s / sdf_trunc_, 1.0);
                const std::size_t idx = index(i, j, k);
                const double wv = weight_[idx];
                tsdf_[idx] = (wv * tsdf_[idx] + sample) / (wv + 1.0);
                if (has_color) {
                    Eigen::Vector3d c;
                    if (color.type() == PixelType::kUInt8) {
                        for (int ch = 0; ch < 3; ++ch) c[ch] = color.at<std::uint8_t>(u, v, ch) / 255.0;
                    } else {
                        for (int ch = 0; ch < 3; ++ch) c[ch] = color.at<float>(u, v, ch);
                    }
                    color_[idx] = ((wv * color_[idx].cast<double>() + c) / (wv + 1.0)).cast<float>();
                }
                weight_[idx] = static_cast<float>(wv + 1.0);
            }
        }
    });
}

Eigen::Vector3d TSDFVolume::gradient(int i, int j, int k) const {
    Eigen::Vector3d g;
    const int c[3] = {i, j, k};
    for (int axis = 0; axis < 3; ++axis) {
        int lo[3] = {i, j, k}, hi[3] = {i, j, k};
        lo[axis] = c[axis] - 1;
        hi[axis] = c[axis] + 1;
        const bool has_lo = lo[axis] >= 0 && weight_[index(lo[0], lo[1], lo[2])] > 0.0f;
        const bool has_hi = hi[axis] < dims_[axis] && weight_[index(hi[0], hi[1], hi[2])] > 0.0f;
        const double f = tsdf_[index(i, j, k)];
        if (has_lo && has_hi) {
            g[axis] = (tsdf_[index(hi[0], hi[1], hi[2])] - tsdf_[index(lo[0], lo[1], lo[2])]) / (2.0 * voxel_size_);
        } else if (has_hi) {
            g[axis] = (tsdf_[index(hi[0], hi[1], hi[2])] - f) / voxel_size_;
        } else if (has_lo) {
            g[axis] = (f - tsdf_[index(lo[0], lo[1], lo[2])]) / voxel_size_;
        } else {
            g[axis] = 0.0;
        }
    }
    return g;
}

TSDFVolume::Surface TSDFVolume::extract_surface(bool gradients) const {
    if (!has_observations()) throw EmptyMeshError("TSDF volume has no observed voxels");
    const auto& edges = mc::edges();
    const int nx = dims_.x(), ny = dims_.y(), nz = dims_.z();
    const int slabs = std::max(nz - 1, 0);

    // Triangles per slab as global edge keys: 3 * grid index of the edge's
    // lower corner + axis.
    std::vector<std::vector<std::array<std::int64_t, 3>>> slab_triangles(static_cast<std::size_t>(slabs));
    parallel_for(slabs, [&](std::ptrdiff_t kk) {
        const int k = static_cast<int>(kk);
        auto& out = slab_triangles[kk];
        for (int j = 0; j + 1 < ny; ++j) {
            for (int i = 0; i + 1 < nx; ++i) {
                int config = 0;
                bool observed = true;
                std::array<std::int64_t, 8> corner_index;
                for (int c = 0; c < 8 && observed; ++c) {
                    const std::size_t v = index(i + (c & 1), j + ((c >> 1) & 1), k + ((c >> 2) & 1));
                    corner_index[c] = static_cast<std::int64_t>(v);
                    if (!(weight_[v] > 0.0f)) observed = false;
                    if (tsdf_[v] < 0.0) config |= 1 << c;
                }
                if (!observed) continue;
                for (const auto& tri : mc::triangles(config)) {
                    std::array<std::int64_t, 3> keys;
                    for (int q = 0; q < 3; ++q) {
                        const auto& e = edges[tri[q]];
                        keys[q] = 3 * corner_index[e.a] + e.axis;
                    }
                    out.push_back(keys);
                }
            }
        }
    });

    Surface s;
    std::unordered_map<std::int64_t, int> vertex_of;
    std::vector<std::int64_t> keys;
    for (const auto& slab : slab_triangles) {
        for (const auto& tri : slab) {
            Eigen::Vector3i t;
            for (int q = 0; q < 3; ++q) {
                auto [it, inserted] = vertex_of.try_emplace(tri[q], static_cast<int>(keys.size()));
                if (inserted) keys.push_back(tri[q]);
                t[q] = it->second;
            }
            s.triangles.push_back(t);
        }
    }

    const std::size_t n = keys.size();
    s.vertices.resize(n);
    s.colors.resize(n);
    if (gradients) s.normals.resize(n);
    const std::int64_t sx = nx, sxy = static_cast<std::int64_t>(nx) * ny;
    parallel_for(static_cast<std::ptrdiff_t>(n), [&](std::ptrdiff_t v) {
        const std::int64_t grid = keys[v] / 3;
        const int axis = static_cast<int>(keys[v] % 3);
        int a[3] = {static_cast<int>(grid % sx), static_cast<int>((grid % sxy) / sx), static_cast<int>(grid / sxy)};
        int b[3] = {a[0], a[1], a[2]};
        ++b[axis];
        const std::size_t ia = index(a[0], a[1], a[2]), ib = index(b[0], b[1], b[2]);
        const double fa = tsdf_[ia], fb = tsdf_[ib];
        const double t = fa / (fa - fb);
        Eigen::Vector3d p = voxel_center(a[0], a[1], a[2]);
        p[axis] += t * voxel_size_;
        s.vertices[v] = p;
        s.colors[v] = (1.0 - t) * color_[ia].cast<double>() + t * color_[ib].cast<double>();
        if (gradients) {
            const Eigen::Vector3d g = (1.0 - t) * gradient(a[0], a[1], a[2]) + t * gradient(b[0], b[1], b[2]);
            const double norm = g.norm();
            s.normals[v] = norm > 0.0 ? Eigen::Vector3d(g / norm) : Eigen::Vector3d::Zero();
        }
    });
    return s;
}

TriangleMesh TSDFVolume::extract_triangle_mesh() const {
    Surface s = extract_surface(false);
    TriangleMesh mesh;
    mesh.vertices = std::move(s.vertices);
    mesh.vertex_colors = std::move(s.colors);
    mesh.triangles = std::move(s.triangles);
    if (!mesh.triangles.empty()) compute_vertex_normals(mesh);
    return mesh;
}

PointCloud TSDFVolume::extract_point_cloud() const {
    Surface s = extract_surface(true);
    PointCloud cloud;
    cloud.points = std::move(s.vertices);
    cloud.normals = std::move(s.normals);
    cloud.colors = std::move(s.colors);
    return cloud;
}

}  // namespace r3d
