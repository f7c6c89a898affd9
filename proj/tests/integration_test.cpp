#include <doctest.h>

#include <algorithm>
#include <map>
#include <numeric>

#include "r3d/error.h"
#include "r3d/parallel.h"
#include "r3d/tsdf_volume.h"
#include "support/oracles.h"
#include "support/render.h"

using namespace r3d;

namespace {

PinholeCameraIntrinsic small_camera() { return {80, 60, 70.0, 70.0, 39.5, 29.5}; }

struct NaiveVolume {
    std::vector<double> tsdf;
    std::vector<double> weight;
    std::vector<Eigen::Vector3d> color;
};

// Single-loop integrator written directly from the update rule.
void naive_integrate(NaiveVolume& vol, const TSDFVolume& shape, const RGBDImage& rgbd, const PinholeCameraIntrinsic& k,
                     const RigidTransform& world_to_camera) {
    const auto dims = shape.dimensions();
    for (int z = 0; z < dims.z(); ++z) {
        for (int y = 0; y < dims.y(); ++y) {
            for (int x = 0; x < dims.x(); ++x) {
                const Eigen::Vector3d c =
                    shape.origin() + shape.voxel_size() * Eigen::Vector3d(x + 0.5, y + 0.5, z + 0.5);
                const Eigen::Vector3d p = world_to_camera * c;
                if (p.z() <= 0) continue;
                const long u = static_cast<long>(std::floor(k.fx * p.x() / p.z() + k.cx + 0.5));
                const long v = static_cast<long>(std::floor(k.fy * p.y() / p.z() + k.cy + 0.5));
                if (u < 0 || v < 0 || u >= k.width || v >= k.height) continue;
                const double d = rgbd.depth.at<float>(u, v);
                if (d <= 0) continue;
                const double s = d - p.z();
                if (s < -shape.sdf_trunc()) continue;
                const double sample = std::min(1.0, s / shape.sdf_trunc());
                const std::size_t i = shape.index(x, y, z);
                Eigen::Vector3d col;
                for (int ch = 0; ch < 3; ++ch) col[ch] = rgbd.color.at<std::uint8_t>(u, v, ch) / 255.0;
                vol.tsdf[i] = (vol.weight[i] * vol.tsdf[i] + sample) / (vol.weight[i] + 1);
                vol.color[i] = (vol.weight[i] * vol.color[i] + col) / (vol.weight[i] + 1);
                vol.weight[i] += 1;
            }
        }
    }
}

test::Scene sphere_scene() {
    test::Scene s;
    s.spheres.push_back({{0, 0, 0}, 0.3, {0.8, 0.2, 0.1}});
    return s;
}

std::vector<std::pair<RGBDImage, RigidTransform>> sphere_frames(int n) {
    std::vector<std::pair<RGBDImage, RigidTransform>> frames;
    const auto k = small_camera();
    for (int f = 0; f < n; ++f) {
        const double a = 2 * std::numbers::pi * f / n;
        const auto pose = test::look_at({1.2 * std::cos(a), 1.2 * std::sin(a), 0.3}, {0, 0, 0});
        auto img = test::render(sphere_scene(), k, pose);
        frames.emplace_back(create_rgbd_image(img.color, img.depth), pose.inverse());
    }
    return frames;
}

void fill_sdf(TSDFVolume& vol, const std::function<double(const Eigen::Vector3d&)>& sdf) {
    const auto d = vol.dimensions();
    for (int k = 0; k < d.z(); ++k)
        for (int j = 0; j < d.y(); ++j)
            for (int i = 0; i < d.x(); ++i)
                vol.set_voxel(i, j, k, sdf(vol.voxel_center(i, j, k)) / vol.sdf_trunc(), 1.0f, {0.5, 0.5, 0.5});
}

// Undirected edge -> number of incident triangles.
std::map<std::pair<int, int>, int> edge_counts(const TriangleMesh& mesh) {
    std::map<std::pair<int, int>, int> count;
    for (const auto& t : mesh.triangles) {
        for (int e = 0; e < 3; ++e) {
            const int a = t[e], b = t[(e + 1) % 3];
            ++count[{std::min(a, b), std::max(a, b)}];
        }
    }
    return count;
}

// Directed edges must pair up with their reverses for a consistently oriented closed surface.
bool consistently_oriented(const TriangleMesh& mesh) {
    std::map<std::pair<int, int>, int> directed;
    for (const auto& t : mesh.triangles)
        for (int e = 0; e < 3; ++e) ++directed[{t[e], t[(e + 1) % 3]}];
    for (const auto& [edge, n] : directed) {
        if (n != 1) return false;
        auto it = directed.find({edge.second, edge.first});
        if (it == directed.end() || it->second != 1) return false;
    }
    return true;
}

}  // namespace

TEST_CASE("volume construction") {
    CHECK_THROWS_AS(TSDFVolume({0, 4, 4}, 0.1, 0.3), InvalidArgument);
    CHECK_THROWS_AS(TSDFVolume({4, 4, 4}, 0.0, 0.3), InvalidArgument);
    CHECK_THROWS_AS(TSDFVolume({4, 4, 4}, 0.1, -1.0), InvalidArgument);
    CHECK_THROWS_AS(TSDFVolume({100000, 100000, 100000}, 0.1, 0.3), InvalidArgument);
    TSDFVolume vol({4, 5, 6}, 0.1, 0.3, {1, 2, 3});
    CHECK(vol.voxel_count() == 120);
    CHECK(vol.voxel_center(0, 0, 0).isApprox(Eigen::Vector3d(1.05, 2.05, 3.05)));
    CHECK_FALSE(vol.has_observations());
    CHECK_THROWS_AS(vol.extract_triangle_mesh(), EmptyMeshError);
    CHECK_THROWS_AS(vol.extract_point_cloud(), EmptyMeshError);
}

TEST_CASE("head-on plane: sign change at the plane") {
    const auto k = small_camera();
    Image depth(k.width, k.height, 1, PixelType::kFloat32);
    std::fill(depth.data<float>().begin(), depth.data<float>().end(), 2.0f);
    Image color(k.width, k.height, 3, PixelType::kUInt8);
    const auto rgbd = create_rgbd_image(color, depth);
    const double voxel = 0.04;
    TSDFVolume vol({10, 10, 25}, voxel, 0.2, {-0.2, -0.2, 1.5});
    vol.integrate(rgbd, k, {});
    for (int j = 0; j < 10; ++j) {
        for (int i = 0; i < 10; ++i) {
            int changes = 0;
            for (int z = 0; z + 1 < 25; ++z) {
                if (vol.weight(i, j, z) == 0 || vol.weight(i, j, z + 1) == 0) continue;
                if ((vol.tsdf(i, j, z) >= 0) != (vol.tsdf(i, j, z + 1) >= 0)) {
                    ++changes;
                    CHECK(std::abs(vol.voxel_center(i, j, z).z() + 0.5 * voxel - 2.0) <= 0.5 * voxel + 1e-12);
                }
            }
            CHECK(changes == 1);
        }
    }
    const auto mesh = vol.extract_triangle_mesh();
    REQUIRE_FALSE(mesh.triangles.empty());
    for (const auto& v : mesh.vertices) CHECK(v.z() == doctest::Approx(2.0).epsilon(1e-9));
}

TEST_CASE("integrating the same frame twice keeps tsdf and doubles weights") {
    const auto frames = sphere_frames(1);
    TSDFVolume once({40, 40, 40}, 0.02, 0.06, {-0.4, -0.4, -0.4});
    once.integrate(frames[0].first, small_camera(), frames[0].second);
    TSDFVolume twice = once;
    twice.integrate(frames[0].first, small_camera(), frames[0].second);
    for (int k = 0; k < 40; ++k)
        for (int j = 0; j < 40; ++j)
            for (int i = 0; i < 40; ++i) {
                REQUIRE(twice.tsdf(i, j, k) == doctest::Approx(once.tsdf(i, j, k)).epsilon(1e-12));
                REQUIRE(twice.weight(i, j, k) == 2 * once.weight(i, j, k));
            }
}

TEST_CASE("integration equals a naive per-voxel integrator; order invariance; invariants") {
    const auto frames = sphere_frames(20);
    const auto k = small_camera();
    TSDFVolume vol({40, 40, 40}, 0.02, 0.06, {-0.4, -0.4, -0.4});
    NaiveVolume naive{std::vector<double>(vol.voxel_count(), 1.0), std::vector<double>(vol.voxel_count(), 0.0),
                      std::vector<Eigen::Vector3d>(vol.voxel_count(), Eigen::Vector3d::Zero())};
    std::vector<float> previous(vol.voxel_count(), 0.0f);
    for (const auto& [rgbd, extrinsic] : frames) {
        vol.integrate(rgbd, k, extrinsic);
        naive_integrate(naive, vol, rgbd, k, extrinsic);
        for (int z = 0; z < 40; ++z)
            for (int y = 0; y < 40; ++y)
                for (int x = 0; x < 40; ++x) {
                    const std::size_t i = vol.index(x, y, z);
                    REQUIRE(vol.weight(x, y, z) >= previous[i]);
                    previous[i] = vol.weight(x, y, z);
                    REQUIRE(std::abs(vol.tsdf(x, y, z)) <= 1.0);
                }
    }
    double worst = 0.0, worst_color = 0.0;
    for (int z = 0; z < 40; ++z)
        for (int y = 0; y < 40; ++y)
            for (int x = 0; x < 40; ++x) {
                const std::size_t i = vol.index(x, y, z);
                worst = std::max(worst, std::abs(vol.tsdf(x, y, z) - naive.tsdf[i]));
                REQUIRE(vol.weight(x, y, z) == naive.weight[i]);
                worst_color = std::max(worst_color, (vol.color(x, y, z) - naive.color[i]).cwiseAbs().maxCoeff());
            }
    CHECK(worst < 1e-9);
    CHECK(worst_color < 1e-6);  // colors are stored in single precision

    std::vector<std::size_t> order(frames.size());
    std::iota(order.begin(), order.end(), 0);
    Xoshiro256 rng(3);
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.uniform(i)]);
    TSDFVolume permuted({40, 40, 40}, 0.02, 0.06, {-0.4, -0.4, -0.4});
    for (std::size_t f : order) permuted.integrate(frames[f].first, k, frames[f].second);
    double diff = 0.0;
    for (int z = 0; z < 40; ++z)
        for (int y = 0; y < 40; ++y)
            for (int x = 0; x < 40; ++x) {
                diff = std::max(diff, std::abs(permuted.tsdf(x, y, z) - vol.tsdf(x, y, z)));
                REQUIRE(permuted.weight(x, y, z) == vol.weight(x, y, z));
            }
    CHECK(diff < 1e-9);

    // Thread count does not change the result.
    ScopedNumThreads one(1);
    TSDFVolume serial({40, 40, 40}, 0.02, 0.06, {-0.4, -0.4, -0.4});
    for (const auto& [rgbd, extrinsic] : frames) serial.integrate(rgbd, k, extrinsic);
    bool same = true;
    for (int z = 0; z < 40; ++z)
        for (int y = 0; y < 40; ++y)
            for (int x = 0; x < 40; ++x) same = same && serial.tsdf(x, y, z) == vol.tsdf(x, y, z);
    CHECK(same);

    const auto mesh = vol.extract_triangle_mesh();
    CHECK(mesh.triangles.size() > 500);
    double worst_radius = 0.0;
    for (const auto& v : mesh.vertices) worst_radius = std::max(worst_radius, std::abs(v.norm() - 0.3));
    CHECK(worst_radius < 0.02);
}

TEST_CASE("sphere SDF: surface accuracy, watertightness, outward orientation") {
    TSDFVolume vol({40, 40, 40}, 0.025, 0.1, {-0.5, -0.5, -0.5});
    const Eigen::Vector3d c(0.013, -0.021, 0.007);
    fill_sdf(vol, [&](const Eigen::Vector3d& p) { return (p - c).norm() - 0.3; });
    const auto mesh = vol.extract_triangle_mesh();
    REQUIRE(mesh.triangles.size() > 1000);
    for (const auto& v : mesh.vertices) REQUIRE(std::abs((v - c).norm() - 0.3) <= 0.5 * vol.voxel_size());
    for (const auto& [edge, n] : edge_counts(mesh)) REQUIRE(n == 2);
    CHECK(consistently_oriented(mesh));
    for (const auto& t : mesh.triangles) {
        const Eigen::Vector3d a = mesh.vertices[t[0]], b = mesh.vertices[t[1]], d = mesh.vertices[t[2]];
        REQUIRE((b - a).cross(d - a).dot((a + b + d) / 3 - c) > 0.0);
    }
    CHECK(mesh.has_vertex_colors());
    CHECK(mesh.vertex_colors[0].isApprox(Eigen::Vector3d(0.5, 0.5, 0.5), 1e-6));

    const auto cloud = vol.extract_point_cloud();
    REQUIRE(cloud.size() == mesh.vertices.size());
    double worst = 0.0;
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        CHECK(cloud.points[i] == mesh.vertices[i]);
        worst = std::max(worst, test::angle_between_lines(cloud.normals[i], cloud.points[i] - c));
        REQUIRE(cloud.normals[i].dot(cloud.points[i] - c) > 0.0);
    }
    CHECK(test::deg(worst) < 5.0);
}

TEST_CASE("random closed fields produce watertight, consistently oriented meshes") {
    Xoshiro256 rng(7);
    for (int trial = 0; trial < 5; ++trial) {
        TSDFVolume vol({12, 12, 12}, 0.1, 0.3);
        for (int k = 0; k < 12; ++k)
            for (int j = 0; j < 12; ++j)
                for (int i = 0; i < 12; ++i) {
                    const bool border = i == 0 || j == 0 || k == 0 || i == 11 || j == 11 || k == 11;
                    const double v = border ? 0.5 : 2.0 * rng.uniform01() - 1.0;
                    vol.set_voxel(i, j, k, v == 0.0 ? 0.1 : v, 1.0f);
                }
        const auto mesh = vol.extract_triangle_mesh();
        REQUIRE_FALSE(mesh.triangles.empty());
        for (const auto& [edge, n] : edge_counts(mesh)) REQUIRE(n % 2 == 0);
        std::map<std::pair<int, int>, int> directed;
        for (const auto& t : mesh.triangles)
            for (int e = 0; e < 3; ++e) ++directed[{t[e], t[(e + 1) % 3]}];
        for (const auto& [edge, n] : directed) REQUIRE(directed[{edge.second, edge.first}] == n);
    }
}

TEST_CASE("plane SDF: planar mesh and identical normals") {
    TSDFVolume vol({20, 20, 20}, 0.05, 0.5);
    fill_sdf(vol, [](const Eigen::Vector3d& p) { return p.z() - 0.512; });
    auto mesh = vol.extract_triangle_mesh();
    REQUIRE_FALSE(mesh.triangles.empty());
    for (const auto& v : mesh.vertices) CHECK(std::abs(v.z() - 0.512) < 1e-6);
    compute_vertex_normals(mesh);
    for (const auto& n : mesh.triangle_normals) CHECK((n - Eigen::Vector3d::UnitZ()).norm() < 1e-6);
    const auto cloud = vol.extract_point_cloud();
    for (const auto& n : cloud.normals) CHECK((n - Eigen::Vector3d::UnitZ()).norm() < 1e-6);
}

TEST_CASE("all-positive volume yields an empty mesh") {
    TSDFVolume vol({5, 5, 5}, 0.1, 0.3);
    fill_sdf(vol, [](const Eigen::Vector3d&) { return 0.2; });
    CHECK(vol.extract_triangle_mesh().triangles.empty());
    CHECK(vol.extract_point_cloud().size() == 0);
}

TEST_CASE("cells with an unobserved corner are skipped") {
    TSDFVolume vol({10, 10, 10}, 0.1, 0.3);
    fill_sdf(vol, [](const Eigen::Vector3d& p) { return p.z() - 0.5; });
    const std::size_t full = vol.extract_triangle_mesh().triangles.size();
    vol.set_voxel(4, 4, 4, vol.tsdf(4, 4, 4), 0.0f);
    const std::size_t holed = vol.extract_triangle_mesh().triangles.size();
    CHECK(holed < full);
}
