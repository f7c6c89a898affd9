// Runs the r3d executable and checks exit codes, outputs and that each
// command matches the library call it wraps.

#include <doctest.h>
#include <json.hpp>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>
#include <unistd.h>

#include "r3d/features.h"
#include "r3d/io.h"
#include "r3d/pipeline.h"
#include "r3d/registration.h"
#include "r3d/triangle_mesh.h"
#include "support/loop_graph.h"
#include "support/scenes.h"
#include "support/synthetic.h"

using namespace r3d;
namespace fs = std::filesystem;

namespace {

const fs::path& workdir() {
    static const fs::path dir = [] {
        const fs::path p = fs::temp_directory_path() / ("r3d_cli_test_" + std::to_string(::getpid()));
        fs::remove_all(p);
        fs::create_directories(p);
        return p;
    }();
    return dir;
}

fs::path at(const std::string& name) { return workdir() / name; }

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

struct Run {
    int code = -1;
    std::string out;
    std::string err;
};

Run run_cli(const std::string& args) {
    const std::string cmd = std::string(R3D_CLI) + " " + args + " >" + at("stdout").string() + " 2>" +
                            at("stderr").string();
    const int status = std::system(cmd.c_str());
    Run r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = slurp(at("stdout"));
    r.err = slurp(at("stderr"));
    return r;
}

std::string q(const fs::path& p) { return "'" + p.string() + "'"; }

RegistrationResult parse_line(const std::string& out) {
    REQUIRE(std::count(out.begin(), out.end(), '\n') == 1);
    const auto j = nlohmann::json::parse(out);
    RegistrationResult r;
    r.fitness = j.at("fitness");
    r.inlier_rmse = j.at("rmse");
    Eigen::Matrix4d m;
    const auto& t = j.at("transformation");
    REQUIRE(t.size() == 16);
    for (int i = 0; i < 16; ++i) m(i / 4, i % 4) = t[i];
    r.transformation = RigidTransform::from_matrix(m);
    return r;
}

}  // namespace

TEST_CASE("cli: usage errors exit 2 and name the flag") {
    write_point_cloud(at("u.ply"), test::bumpy_surface(200, 1));

    Run r = run_cli("downsample --voxel abc " + q(at("u.ply")) + " " + q(at("u_out.ply")));
    CHECK(r.code == 2);
    CHECK(r.err.find("--voxel") != std::string::npos);
    CHECK(r.out.empty());

    r = run_cli("downsample --voxel -1 " + q(at("u.ply")) + " " + q(at("u_out.ply")));
    CHECK(r.code == 2);
    CHECK(r.err.find("--voxel") != std::string::npos);

    r = run_cli("register-icp --method diagonal " + q(at("u.ply")) + " " + q(at("u.ply")));
    CHECK(r.code == 2);
    CHECK(r.err.find("--method") != std::string::npos);

    r = run_cli("register-icp --init 1 0 0 " + q(at("u.ply")) + " " + q(at("u.ply")));
    CHECK(r.code == 2);
    CHECK(r.err.find("--init") != std::string::npos);

    r = run_cli("reconstruct " + q(at("nowhere")) + " --voxel-size fast");
    CHECK(r.code == 2);
    CHECK(r.err.find("--voxel-size") != std::string::npos);

    r = run_cli("reconstruct " + q(at("nowhere")) + " --fragment-size 1");
    CHECK(r.code == 2);
    CHECK(r.err.find("fragment_size") != std::string::npos);

    r = run_cli("downsample --no-such-flag 1 a.ply b.ply");
    CHECK(r.code == 2);
    CHECK(r.err.find("--no-such-flag") != std::string::npos);

    CHECK(run_cli("").code == 2);
    CHECK(run_cli("explode").code == 2);
    CHECK(run_cli("--help").code == 0);
    CHECK(run_cli("reconstruct --help").code == 0);
}

TEST_CASE("cli: processing errors exit 1 with a message on stderr") {
    Run r = run_cli("downsample " + q(at("missing.ply")) + " " + q(at("o.ply")));
    CHECK(r.code == 1);
    CHECK(r.err.find("missing.ply") != std::string::npos);

    std::ofstream(at("broken.ply")) << "ply\nformat ascii 1.0\nelement vertex 2\nproperty float x\nend_header\n1\n";
    r = run_cli("convert " + q(at("broken.ply")) + " " + q(at("o.pcd")));
    CHECK(r.code == 1);
    CHECK(r.err.find("broken.ply") != std::string::npos);

    write_point_cloud(at("plain.ply"), PointCloud{test::bumpy_surface(100, 2).points, {}, {}});
    r = run_cli("fpfh " + q(at("plain.ply")) + " " + q(at("plain.fpfh")));
    CHECK(r.code == 1);
    CHECK(r.err.find("normals") != std::string::npos);

    r = run_cli("reconstruct " + q(at("no_dataset")));
    CHECK(r.code == 1);
}

TEST_CASE("cli: downsample, normals and fpfh match the library") {
    const PointCloud cloud = test::bumpy_surface(3000, 3);
    write_point_cloud(at("in.ply"), PointCloud{cloud.points, {}, {}});

    REQUIRE(run_cli("downsample --voxel 0.05 " + q(at("in.ply")) + " " + q(at("down.ply"))).code == 0);
    const PointCloud down = read_point_cloud(at("down.ply"));
    const PointCloud expected = voxel_down_sample(PointCloud{cloud.points, {}, {}}, 0.05);
    CHECK(down.points == expected.points);

    REQUIRE(run_cli("normals --radius 0.1 --max-nn 30 " + q(at("down.ply")) + " " + q(at("normals.ply"))).code == 0);
    const PointCloud with_normals = read_point_cloud(at("normals.ply"));
    PointCloud lib = expected;
    estimate_normals(lib, SearchParam::hybrid(0.1, 30));
    CHECK(with_normals.normals == lib.normals);

    REQUIRE(run_cli("fpfh --radius 0.25 --max-nn 100 " + q(at("normals.ply")) + " " + q(at("f.fpfh"))).code == 0);
    const FeatureMatrix f = read_feature(at("f.fpfh"));
    CHECK(f == compute_fpfh_feature(lib, SearchParam::hybrid(0.25, 100)));
}

TEST_CASE("cli: register-icp on aligned inputs prints fitness 1") {
    write_point_cloud(at("a.ply"), test::bumpy_surface(1000, 4));
    const Run r = run_cli("register-icp --distance 0.02 --method point-to-plane " + q(at("a.ply")) + " " + q(at("a.ply")));
    REQUIRE(r.code == 0);
    const RegistrationResult res = parse_line(r.out);
    CHECK(res.fitness == 1.0);
    CHECK(res.inlier_rmse == 0.0);
    CHECK(res.transformation.is_identity());
}

TEST_CASE("cli: register-global and register-icp equal the library field by field") {
    Xoshiro256 rng(21);
    const PointCloud src = test::bumpy_surface(600, 31);
    const RigidTransform truth = test::random_motion(rng, 1.0, 0.3);
    const PointCloud tgt = test::moved_copy(src, truth, 0.001, 32);
    write_point_cloud(at("src.ply"), src);
    write_point_cloud(at("tgt.ply"), tgt);
    // Written and reread bitwise, so the library sees the same input.
    const PointCloud s = read_point_cloud(at("src.ply")), t = read_point_cloud(at("tgt.ply"));

    const Run g = run_cli("register-global --seed 5 --distance 0.075 " + q(at("src.ply")) + " " + q(at("tgt.ply")));
    REQUIRE(g.code == 0);
    const RegistrationResult cli = parse_line(g.out);
    const auto fs_ = compute_fpfh_feature(s, SearchParam::hybrid(0.25, 100));
    const auto ft = compute_fpfh_feature(t, SearchParam::hybrid(0.25, 100));
    const std::vector<CorrespondenceChecker> checkers = {CorrespondenceChecker::edge_length(0.9),
                                                         CorrespondenceChecker::distance(0.075)};
    const auto lib = registration_ransac_based_on_feature_matching(s, t, fs_, ft, 0.075, 4, checkers, {4000000, 500}, 5);
    CHECK(cli.fitness == lib.fitness);
    CHECK(cli.inlier_rmse == lib.inlier_rmse);
    CHECK(cli.transformation.matrix() == lib.transformation.matrix());
    CHECK(test::rotation_error_deg(cli.transformation, truth) < 3.0);

    // Refine from the global result, passed as 16 numbers.
    std::string init;
    for (int i = 0; i < 16; ++i) {
        char buf[40];
        std::snprintf(buf, sizeof(buf), " %.17g", lib.transformation.matrix()(i / 4, i % 4));
        init += buf;
    }
    const Run icp = run_cli("register-icp --distance 0.02 --method point-to-point --init" + init + " " + q(at("src.ply")) +
                        " " + q(at("tgt.ply")));
    REQUIRE(icp.code == 0);
    const RegistrationResult cli_icp = parse_line(icp.out);
    const auto lib_icp = registration_icp(s, t, 0.02, lib.transformation, TransformationEstimation::kPointToPoint);
    CHECK(cli_icp.fitness == lib_icp.fitness);
    CHECK(cli_icp.transformation.matrix() == lib_icp.transformation.matrix());
    CHECK(test::rotation_error_deg(cli_icp.transformation, truth) < 0.2);
}

TEST_CASE("cli: convert pcd to ply and back keeps 6 significant digits") {
    PointCloud cloud = test::bumpy_surface(300, 41);
    for (auto& p : cloud.points) p = p * 123.456 + Eigen::Vector3d(1e3, -2e-3, 7.0);
    cloud.colors.assign(cloud.size(), Eigen::Vector3d(1.0, 0.0, 0.5));
    write_point_cloud(at("c.pcd"), cloud);
    REQUIRE(run_cli("convert " + q(at("c.pcd")) + " " + q(at("c.ply"))).code == 0);
    REQUIRE(run_cli("convert " + q(at("c.ply")) + " " + q(at("back.pcd"))).code == 0);
    REQUIRE(run_cli("convert --ascii " + q(at("back.pcd")) + " " + q(at("ascii.ply"))).code == 0);
    CHECK(slurp(at("ascii.ply")).find("format ascii 1.0") != std::string::npos);
    const PointCloud back = read_point_cloud(at("back.pcd"));
    REQUIRE(back.size() == cloud.size());
    for (std::size_t i = 0; i < cloud.size(); ++i)
        for (int k = 0; k < 3; ++k) {
            const double a = cloud.points[i][k], b = back.points[i][k];
            CHECK(std::abs(a - b) <= 5e-6 * std::max(std::abs(a), 1e-300));
        }
    CHECK(back.has_normals());
    CHECK(back.colors[0].isApprox(Eigen::Vector3d(1.0, 0.0, 128.0 / 255.0)));

    const TriangleMesh mesh = create_icosphere(1.0, 2);
    write_triangle_mesh(at("m.ply"), mesh);
    REQUIRE(run_cli("convert --ascii " + q(at("m.ply")) + " " + q(at("m_ascii.ply"))).code == 0);
    CHECK(read_triangle_mesh(at("m_ascii.ply")).triangles == mesh.triangles);
    CHECK(run_cli("convert " + q(at("m.ply")) + " " + q(at("m.pcd"))).code == 1);
    CHECK(run_cli("convert --ascii " + q(at("c.ply")) + " " + q(at("x.pcd"))).code == 2);
}

TEST_CASE("cli: posegraph-optimize prunes a corrupted loop closure") {
    const auto loop = test::make_loop_graph(8, 0.0, 0.0, 3);
    PoseGraph g = loop.graph;
    PoseGraphEdge bad;
    bad.source = 5;
    bad.target = 1;
    bad.transformation = RigidTransform::from_translation(Eigen::Vector3d(3, 0, 0));
    bad.information = Matrix6d::Identity() * 100.0;
    bad.uncertain = true;
    g.edges.push_back(bad);
    write_pose_graph(at("g.json"), g);
    const Run r = run_cli("posegraph-optimize --distance 0.075 " + q(at("g.json")) + " " + q(at("g_opt.json")));
    REQUIRE(r.code == 0);
    const PoseGraph opt = read_pose_graph(at("g_opt.json"));
    CHECK(opt.nodes.size() == g.nodes.size());
    CHECK(opt.edges.size() == g.edges.size() - 1);
    CHECK(test::position_rmse(opt.nodes, loop.truth) < 1e-4);
    CHECK(r.err.find("1 edges pruned") != std::string::npos);
}

TEST_CASE("cli: reconstruct and integrate on a small dataset") {
    const auto d = test::make_orbit_dataset(8, 16.0, 120, 90);
    test::write_dataset(d, at("ds"));
    std::ofstream(at("cfg.txt")) << "# small run\nfragment_size = 4\nseed = 3\n";

    std::ofstream(at("bad.txt")) << "fragment_size = 4\ncolour = red\n";
    Run r = run_cli("reconstruct " + q(at("ds")) + " --config " + q(at("bad.txt")) + " --output " + q(at("out_bad")));
    CHECK(r.code == 2);
    CHECK(r.err.find("line 2") != std::string::npos);

    r = run_cli("reconstruct " + q(at("ds")) + " --config " + q(at("cfg.txt")) + " --tsdf-voxel-size 0.025 --output " +
            q(at("out")));
    REQUIRE(r.code == 0);
    CHECK(r.out.empty());
    const auto report = nlohmann::json::parse(slurp(at("out") / "report.json"));
    CHECK(report["config"]["fragment_size"] == 4);
    CHECK(report["config"]["seed"] == 3);
    CHECK(report["config"]["tsdf_voxel_size"] == 0.025);
    CHECK(report["fragments"].size() == 2);

    PipelineConfig config;
    config.fragment_size = 4;
    config.seed = 3;
    config.tsdf_voxel_size = 0.025;
    const ReconstructionResult lib = reconstruct(open_dataset(at("ds")), config);
    const TriangleMesh mesh = read_triangle_mesh(at("out") / "mesh.ply");
    CHECK(mesh.vertices == lib.mesh.vertices);

    r = run_cli("integrate " + q(at("ds")) + " --trajectory " + q(at("out") / "trajectory.json") +
            " --tsdf-voxel-size 0.025 --output " + q(at("again.ply")));
    REQUIRE(r.code == 0);
    CHECK(read_triangle_mesh(at("again.ply")).vertices == lib.mesh.vertices);

    r = run_cli("integrate " + q(at("ds")) + " --trajectory " + q(at("out") / "trajectory.json") +
            " --frames 0,1 --output " + q(at("x.ply")));
    CHECK(r.code == 2);
    CHECK(r.err.find("--frames") != std::string::npos);
}
