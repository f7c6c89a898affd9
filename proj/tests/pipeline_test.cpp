#include <doctest.h>
#include <json.hpp>

#include <filesystem>
#include <cstring>
#include <fstream>
#include <numbers>
#include <unistd.h>

#include "r3d/error.h"
#include "r3d/io.h"
#include "r3d/pipeline.h"
#include "support/synthetic.h"

using namespace r3d;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("r3d_pipeline_test_" + std::to_string(::getpid())) / name;
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

void put(const fs::path& p, const std::string& text) {
    std::ofstream(p, std::ios::binary) << text;
}

// The reconstruction lives in the camera frame of the first integrated frame;
// `to_world` is that camera's ground-truth pose.
double fraction_near(const test::Scene& scene, const TriangleMesh& mesh, const RigidTransform& to_world, double tol) {
    std::size_t near = 0;
    for (const auto& v : mesh.vertices) near += test::surface_distance(scene, to_world * v) <= tol;
    return mesh.vertices.empty() ? 0.0 : static_cast<double>(near) / mesh.vertices.size();
}

// 12 frames on a 24 degree arc at 160x120 keeps each run to a few seconds.
const test::SyntheticDataset& small_dataset() {
    static const test::SyntheticDataset d = test::make_orbit_dataset(12, 24.0, 160, 120);
    return d;
}

const fs::path& small_dataset_dir() {
    static const fs::path dir = [] {
        const fs::path p = scratch("small");
        test::write_dataset(small_dataset(), p);
        return p;
    }();
    return dir;
}

}  // namespace

TEST_CASE("config: defaults validate and every key round-trips through text") {
    PipelineConfig c;
    CHECK_NOTHROW(c.validate());
    CHECK(c.fragment_size == 100);
    CHECK(c.voxel_size == 0.05);
    CHECK(c.ransac_max_iteration == 4000000);
    PipelineConfig d;
    for (const auto& key : PipelineConfig::keys()) d.set(key, c.value(key));
    for (const auto& key : PipelineConfig::keys()) CHECK(d.value(key) == c.value(key));
    c.set("voxel_size", "0.1");
    CHECK(c.value("voxel_size") == "0.1");
}

TEST_CASE("config: file parsing with comments and located errors") {
    PipelineConfig c;
    parse_pipeline_config("# comment\n\nfragment_size = 7   # trailing\n  seed=42\n", "cfg", c);
    CHECK(c.fragment_size == 7);
    CHECK(c.seed == 42);

    auto line_of = [](const std::string& text) {
        PipelineConfig c;
        try {
            parse_pipeline_config(text, "cfg", c);
        } catch (const ParseError& e) {
            CHECK(e.unit() == ParseError::Unit::kLine);
            return static_cast<int>(e.location());
        }
        return -1;
    };
    CHECK(line_of("seed = 1\nvoxel_size\n") == 2);
    CHECK(line_of("seed = 1\n\nbogus = 3\n") == 3);
    CHECK(line_of("voxel_size = fast\n") == 1);
    CHECK(line_of("fragment_size = 2.5\n") == 1);
    CHECK(line_of("seed = -1\n") == 1);

    CHECK_THROWS_AS(c.set("nope", "1"), InvalidArgument);
    PipelineConfig bad;
    bad.fragment_size = 1;
    CHECK_THROWS_AS(bad.validate(), InvalidArgument);
    bad = {};
    bad.voxel_size = 0.0;
    CHECK_THROWS_WITH_AS(bad.validate(), "voxel_size must be positive", InvalidArgument);
    bad = {};
    bad.tsdf_voxel_size = -0.01;
    CHECK_THROWS_AS(bad.validate(), InvalidArgument);
}

TEST_CASE("intrinsic file: round trip and errors") {
    const fs::path dir = scratch("intrinsic");
    const PinholeCameraIntrinsic k{640, 480, 525.0, 525.0, 319.5, 239.5};
    write_intrinsic(dir / "k.txt", k);
    const PinholeCameraIntrinsic r = read_intrinsic(dir / "k.txt");
    CHECK(r.width == 640);
    CHECK(r.height == 480);
    CHECK(r.fx == 525.0);
    CHECK(r.cy == 239.5);

    CHECK_THROWS_AS(read_intrinsic(dir / "missing.txt"), IoError);
    put(dir / "short.txt", "640 480\n525 525\n319.5\n");
    try {
        read_intrinsic(dir / "short.txt");
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(e.location() == 4);  // cy is missing at the end of the file
    }
    put(dir / "neg.txt", "640 480 -1 525 319.5 239.5\n");
    CHECK_THROWS_AS(read_intrinsic(dir / "neg.txt"), ParseError);
}

TEST_CASE("dataset: gaps, unpaired frames and size mismatches fail before compute") {
    const auto d = test::make_orbit_dataset(4, 10.0, 64, 48);
    const fs::path ok = scratch("ds_ok");
    test::write_dataset(d, ok);
    CHECK(open_dataset(ok).size() == 4);

    CHECK_THROWS_AS(open_dataset(scratch("ds_none") / "absent"), IoError);

    const fs::path gap = scratch("ds_gap");
    fs::copy(ok, gap, fs::copy_options::recursive);
    fs::remove(gap / "color" / "000002.ppm");
    fs::remove(gap / "depth" / "000002.pgm");
    CHECK_THROWS_WITH_AS(open_dataset(gap), doctest::Contains("frame 2 is missing"), InvalidArgument);

    const fs::path unpaired = scratch("ds_unpaired");
    fs::copy(ok, unpaired, fs::copy_options::recursive);
    fs::remove(unpaired / "depth" / "000003.pgm");
    CHECK_THROWS_WITH_AS(open_dataset(unpaired), "frame 3 has a color image but no depth image", InvalidArgument);

    const fs::path sized = scratch("ds_size");
    fs::copy(ok, sized, fs::copy_options::recursive);
    write_intrinsic(sized / "intrinsic.txt", {80, 48, 53.0, 53.0, 39.5, 23.5});
    CHECK_THROWS_WITH_AS(open_dataset(sized), doctest::Contains("frame 0"), InvalidArgument);

    const fs::path no_intrinsic = scratch("ds_nok");
    fs::copy(ok, no_intrinsic, fs::copy_options::recursive);
    fs::remove(no_intrinsic / "intrinsic.txt");
    CHECK_THROWS_AS(open_dataset(no_intrinsic), IoError);

    const fs::path corrupt = scratch("ds_corrupt");
    fs::copy(ok, corrupt, fs::copy_options::recursive);
    put(corrupt / "depth" / "000001.pgm", "P5\n64 48\n65535\n");
    CHECK_THROWS_AS(open_dataset(corrupt), ParseError);
}

TEST_CASE("reconstruct: single fragment degenerates to an identity global graph") {
    const Dataset ds = open_dataset(small_dataset_dir());
    PipelineConfig config;
    const ReconstructionResult r = reconstruct(ds, config);
    REQUIRE(r.fragments.size() == 1);
    CHECK(r.global_graph.nodes.size() == 1);
    CHECK(r.global_graph.nodes[0].is_identity());
    CHECK(r.global_graph.edges.empty());
    CHECK(r.frames.size() == 12);
    CHECK(r.skipped_frames.empty());
    REQUIRE(!r.mesh.vertices.empty());
    CHECK(fraction_near(small_dataset().scene, r.mesh, small_dataset().camera_to_world[0], 2.0 * config.tsdf_voxel_size) >= 0.95);

    // Frame poses relative to frame 0 agree with the rendering trajectory.
    const auto& truth = small_dataset().camera_to_world;
    for (std::size_t k = 0; k < r.frames.size(); ++k) {
        const RigidTransform expected = truth[0].inverse() * truth[r.frames[k]];
        const RigidTransform delta = expected.inverse() * r.frame_poses[k];
        CHECK(delta.rotation_angle() * 180.0 / std::numbers::pi < 1.0);
        CHECK(delta.translation().norm() < 0.02);
    }
}

TEST_CASE("reconstruct: a frame with no valid depth is skipped with a warning") {
    const auto d = test::make_orbit_dataset(10, 20.0, 160, 120);
    const fs::path dir = scratch("blank");
    test::write_dataset(d, dir, 1000.0, {4});
    PipelineConfig config;
    config.fragment_size = 5;
    std::vector<std::string> messages;
    const ReconstructionResult r =
        reconstruct(open_dataset(dir), config, [&](const std::string& m) { messages.push_back(m); });
    CHECK(r.skipped_frames == std::vector<int>{4});
    CHECK(r.frames.size() == 9);
    CHECK(std::find(r.frames.begin(), r.frames.end(), 4) == r.frames.end());
    const bool warned = std::any_of(messages.begin(), messages.end(), [](const std::string& m) {
        return m.find("warning") != std::string::npos && m.find("frame 4") != std::string::npos;
    });
    CHECK(warned);
    CHECK(r.fragments.size() == 2);
    CHECK(fraction_near(d.scene, r.mesh, d.camera_to_world[0], 2.0 * config.tsdf_voxel_size) >= 0.95);
}

TEST_CASE("reconstruct: all frames blank is a processing error") {
    const auto d = test::make_orbit_dataset(3, 10.0, 64, 48);
    const fs::path dir = scratch("all_blank");
    test::write_dataset(d, dir, 1000.0, {0, 1, 2});
    CHECK_THROWS_AS(reconstruct(open_dataset(dir), PipelineConfig{}), DegenerateInput);
}

TEST_CASE("reconstruct: bit-reproducible across runs and thread counts") {
    const Dataset ds = open_dataset(small_dataset_dir());
    PipelineConfig config;
    config.fragment_size = 4;
    config.seed = 7;
    config.threads = 1;
    const ReconstructionResult a = reconstruct(ds, config);
    config.threads = 3;
    const ReconstructionResult b = reconstruct(ds, config);
    REQUIRE(a.fragments.size() == 3);
    REQUIRE(a.mesh.vertices.size() == b.mesh.vertices.size());
    REQUIRE(a.mesh.triangles.size() == b.mesh.triangles.size());
    CHECK(std::memcmp(a.mesh.vertices.data(), b.mesh.vertices.data(), a.mesh.vertices.size() * sizeof(Eigen::Vector3d)) ==
          0);
    CHECK(a.mesh.triangles == b.mesh.triangles);
    REQUIRE(a.frame_poses.size() == b.frame_poses.size());
    for (std::size_t k = 0; k < a.frame_poses.size(); ++k) CHECK(a.frame_poses[k].matrix() == b.frame_poses[k].matrix());
    REQUIRE(a.pairs.size() == b.pairs.size());
    for (std::size_t k = 0; k < a.pairs.size(); ++k) CHECK(a.pairs[k].fitness == b.pairs[k].fitness);
    CHECK(a.global_graph.nodes[0].is_identity());
    CHECK(fraction_near(small_dataset().scene, a.mesh, small_dataset().camera_to_world[0], 2.0 * config.tsdf_voxel_size) >= 0.95);
}

TEST_CASE("write_reconstruction: outputs and versioned report") {
    const Dataset ds = open_dataset(small_dataset_dir());
    PipelineConfig config;
    config.fragment_size = 6;
    const ReconstructionResult r = reconstruct(ds, config);
    const fs::path out = scratch("out");
    write_reconstruction(out, r, config);
    for (const char* name : {"mesh.ply", "fragment_000.ply", "fragment_001.ply", "pose_graph_fragment_000.json",
                             "pose_graph_fragment_001.json", "pose_graph_global.json", "trajectory.json", "report.json"})
        CHECK_MESSAGE(fs::exists(out / name), name);

    const TriangleMesh mesh = read_triangle_mesh(out / "mesh.ply");
    CHECK(mesh.vertices == r.mesh.vertices);
    const PoseGraph trajectory = read_pose_graph(out / "trajectory.json");
    REQUIRE(trajectory.nodes.size() == r.frame_poses.size());
    for (std::size_t k = 0; k < r.frame_poses.size(); ++k)
        CHECK(trajectory.nodes[k].matrix() == r.frame_poses[k].matrix());

    std::ifstream in(out / "report.json");
    const nlohmann::json report = nlohmann::json::parse(in);
    CHECK(report["schema"] == "r3d-report");
    CHECK(report["version"] == 1);
    CHECK(report["config"]["fragment_size"] == 6);
    CHECK(report["config"].size() == PipelineConfig::keys().size());
    CHECK(report["trajectory_frames"].size() == r.frames.size());
    std::vector<std::string> steps;
    for (const auto& t : report["timings"]) {
        steps.push_back(t["step"]);
        CHECK(t["seconds"].get<double>() >= 0.0);
    }
    CHECK(steps == std::vector<std::string>{"fragments", "global registration", "refinement", "integration"});
    REQUIRE(!report["pairs"].empty());
    for (const auto& p : report["pairs"]) {
        CHECK(p.contains("fitness"));
        CHECK(p["fitness"].get<double>() >= 0.0);
        CHECK(p["fitness"].get<double>() <= 1.0);
    }
    CHECK(report["mesh"]["vertices"] == r.mesh.vertices.size());
}

TEST_CASE("integrate_frames: reproduces the pipeline mesh from its trajectory") {
    const Dataset ds = open_dataset(small_dataset_dir());
    PipelineConfig config;
    config.fragment_size = 6;
    const ReconstructionResult r = reconstruct(ds, config);
    const TriangleMesh again = integrate_frames(ds, r.frames, r.frame_poses, config);
    CHECK(again.vertices == r.mesh.vertices);
    CHECK(again.triangles == r.mesh.triangles);
    CHECK_THROWS_AS(integrate_frames(ds, {0, 1}, {RigidTransform{}}, config), InvalidArgument);
    CHECK_THROWS_AS(integrate_frames(ds, {99}, {RigidTransform{}}, config), InvalidArgument);
}
