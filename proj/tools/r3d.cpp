// r3d: command-line front end of the library.
//
// Exit status: 0 on success, 2 on a usage error (bad flag, bad value, unknown
// config key), 1 when processing fails. Diagnostics go to stderr; register
// commands print a single JSON line on stdout.

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <array>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "r3d/error.h"
#include "r3d/features.h"
#include "r3d/io.h"
#include "r3d/parallel.h"
#include "r3d/pipeline.h"
#include "r3d/point_cloud.h"
#include "r3d/pose_graph.h"
#include "r3d/registration.h"

namespace {

using namespace r3d;

class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

std::string flag_name(const std::string& key) {
    std::string f = "--" + key;
    std::replace(f.begin(), f.end(), '_', '-');
    return f;
}

void print_result(const RegistrationResult& r) {
    nlohmann::json line;
    line["fitness"] = r.fitness;
    line["rmse"] = r.inlier_rmse;
    line["correspondences"] = r.correspondences.size();
    std::vector<double> m;
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) m.push_back(r.transformation.matrix()(i, j));
    line["transformation"] = m;
    std::cout << line.dump() << std::endl;
}

RigidTransform parse_init(const std::vector<double>& values) {
    if (values.empty()) return {};
    Eigen::Matrix4d m;
    for (int i = 0; i < 16; ++i) m(i / 4, i % 4) = values[i];
    try {
        return RigidTransform::from_matrix(m);
    } catch (const InvalidArgument& e) {
        throw UsageError(std::string("--init: ") + e.what());
    }
}

void ensure_normals(PointCloud& cloud, double radius, int max_nn, const char* which) {
    if (cloud.has_normals()) return;
    std::cerr << "r3d: " << which << " has no normals; estimating with radius " << radius << ", max_nn " << max_nn
              << "\n";
    estimate_normals(cloud, SearchParam::hybrid(radius, max_nn));
}

struct Options {
    std::string input, output, source, target;
    double voxel = 0.05;
    double radius = 0.1;
    int max_nn = 30;
    double fpfh_radius = 0.25;
    int fpfh_max_nn = 100;
    // Per-command fields: CLI11 assigns defaults at declaration time.
    double ransac_distance = 0.075;
    int ransac_n = 4;
    double edge_similarity = 0.9;
    int ransac_max_iteration = 4000000;
    int max_validation = 500;
    double icp_distance = 0.02;
    int icp_max_iteration = 30;
    double pgo_distance = 0.075;
    int pgo_max_iteration = 100;
    std::uint64_t seed = 0;
    std::string source_feature, target_feature;
    std::string method = "point-to-plane";
    std::vector<double> init;
    double preference = 0.25;
    bool ascii = false;
    std::string dataset, trajectory, config_file;
    std::vector<int> frames;
    std::map<std::string, std::string> overrides;
};

void cmd_downsample(const Options& o) {
    const PointCloud cloud = read_point_cloud(o.input);
    const PointCloud down = voxel_down_sample(cloud, o.voxel);
    std::cerr << "r3d: " << cloud.size() << " -> " << down.size() << " points\n";
    write_point_cloud(o.output, down);
}

void cmd_normals(const Options& o) {
    PointCloud cloud = read_point_cloud(o.input);
    const std::size_t fallback = estimate_normals(cloud, SearchParam::hybrid(o.radius, o.max_nn));
    if (fallback > 0) std::cerr << "r3d: " << fallback << " points had too few neighbors for a normal\n";
    write_point_cloud(o.output, cloud);
}

void cmd_fpfh(const Options& o) {
    const PointCloud cloud = read_point_cloud(o.input);
    if (!cloud.has_normals()) throw InvalidArgument("'" + o.input + "' has no normals; run 'r3d normals' first");
    write_feature(o.output, compute_fpfh_feature(cloud, SearchParam::hybrid(o.fpfh_radius, o.fpfh_max_nn)));
}

void cmd_register_global(const Options& o) {
    PointCloud source = read_point_cloud(o.source);
    PointCloud target = read_point_cloud(o.target);
    auto feature = [&](PointCloud& cloud, const std::string& path, const char* which) {
        if (!path.empty()) return read_feature(path);
        ensure_normals(cloud, o.radius, o.max_nn, which);
        return compute_fpfh_feature(cloud, SearchParam::hybrid(o.fpfh_radius, o.fpfh_max_nn));
    };
    const FeatureMatrix fs = feature(source, o.source_feature, "source");
    const FeatureMatrix ft = feature(target, o.target_feature, "target");
    const std::vector<CorrespondenceChecker> checkers = {CorrespondenceChecker::edge_length(o.edge_similarity),
                                                         CorrespondenceChecker::distance(o.ransac_distance)};
    const RegistrationResult r = registration_ransac_based_on_feature_matching(
        source, target, fs, ft, o.ransac_distance, o.ransac_n, checkers, {o.ransac_max_iteration, o.max_validation}, o.seed);
    print_result(r);
}

void cmd_register_icp(const Options& o) {
    const PointCloud source = read_point_cloud(o.source);
    PointCloud target = read_point_cloud(o.target);
    const auto estimation =
        o.method == "point-to-point" ? TransformationEstimation::kPointToPoint : TransformationEstimation::kPointToPlane;
    if (estimation == TransformationEstimation::kPointToPlane) ensure_normals(target, o.radius, o.max_nn, "target");
    IcpCriteria criteria;
    criteria.max_iteration = o.icp_max_iteration;
    print_result(registration_icp(source, target, o.icp_distance, parse_init(o.init), estimation, criteria));
}

void cmd_posegraph_optimize(const Options& o) {
    const PoseGraph graph = read_pose_graph(o.input);
    GlobalOptimizationOption option;
    option.max_correspondence_distance = o.pgo_distance;
    option.preference_loop_closure = o.preference;
    option.max_iteration = o.pgo_max_iteration;
    const GlobalOptimizationResult r = global_optimization(graph, option);
    PoseGraph out = r.graph;
    // Drop pruned edges from the written graph; their confidences are reported.
    std::vector<PoseGraphEdge> kept;
    for (std::size_t i = 0; i < out.edges.size(); ++i)
        if (std::find(r.pruned_edges.begin(), r.pruned_edges.end(), static_cast<int>(i)) == r.pruned_edges.end())
            kept.push_back(out.edges[i]);
    out.edges = std::move(kept);
    std::cerr << "r3d: " << r.outer_rounds << " rounds, objective " << r.objective_trace.front() << " -> "
              << r.objective_trace.back() << ", " << r.pruned_edges.size() << " edges pruned\n";
    write_pose_graph(o.output, out);
}

PipelineConfig load_config(const Options& o) {
    PipelineConfig config;
    if (!o.config_file.empty()) {
        try {
            config = read_pipeline_config(o.config_file);
        } catch (const ParseError& e) {
            throw UsageError(std::string("--config: ") + e.what());
        }
    }
    for (const auto& [key, value] : o.overrides) {
        try {
            config.set(key, value);
        } catch (const InvalidArgument&) {
            throw UsageError(flag_name(key) + ": invalid value '" + value + "'");
        }
    }
    try {
        config.validate();
    } catch (const InvalidArgument& e) {
        throw UsageError(e.what());
    }
    return config;
}

void cmd_integrate(const Options& o) {
    const PipelineConfig config = load_config(o);
    const Dataset dataset = open_dataset(o.dataset);
    const PoseGraph trajectory = read_pose_graph(o.trajectory);
    std::vector<int> frames = o.frames;
    if (frames.empty())
        for (std::size_t i = 0; i < trajectory.nodes.size(); ++i) frames.push_back(static_cast<int>(i));
    if (frames.size() != trajectory.nodes.size())
        throw UsageError("--frames lists " + std::to_string(frames.size()) + " frames but the trajectory has " +
                         std::to_string(trajectory.nodes.size()) + " poses");
    const TriangleMesh mesh = integrate_frames(dataset, frames, trajectory.nodes, config);
    std::cerr << "r3d: mesh with " << mesh.vertices.size() << " vertices, " << mesh.triangles.size()
              << " triangles\n";
    write_triangle_mesh(o.output, mesh);
}

void cmd_convert(const Options& o) {
    const FileFormat in = format_from_extension(o.input);
    FileFormat out = format_from_extension(o.output);
    if (o.ascii) {
        if (out != FileFormat::kPlyBinary) throw UsageError("--ascii only applies to .ply output");
        out = FileFormat::kPlyAscii;
    }
    if (in == FileFormat::kPlyBinary) {
        const TriangleMesh mesh = read_triangle_mesh(o.input);
        if (!mesh.triangles.empty()) {
            if (out != FileFormat::kPlyBinary && out != FileFormat::kPlyAscii)
                throw InvalidArgument("'" + o.input + "' has faces; only .ply output can hold them");
            write_triangle_mesh(o.output, mesh, out);
            return;
        }
    }
    write_point_cloud(o.output, read_point_cloud(o.input), out);
}

void cmd_reconstruct(const Options& o) {
    const PipelineConfig config = load_config(o);
    const Dataset dataset = open_dataset(o.dataset);
    std::cerr << "r3d: " << dataset.size() << " frames\n";
    const ReconstructionResult result = reconstruct(dataset, config, [](const std::string& msg) {
        std::cerr << "r3d: " << msg << "\n";
    });
    write_reconstruction(o.output, result, config);
    std::cerr << "r3d: wrote " << o.output << "\n";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"r3d: point cloud processing, registration and scene reconstruction"};
    app.require_subcommand(1);
    int threads = 0;
    app.add_option("--threads", threads, "Worker threads (0 keeps the default)")->check(CLI::NonNegativeNumber);

    Options o;
    std::map<std::string, std::string> raw;

    auto* down = app.add_subcommand("downsample", "Voxel-grid downsampling");
    down->add_option("--voxel", o.voxel, "Voxel edge length")->capture_default_str()->check(CLI::PositiveNumber);
    down->add_option("input", o.input)->required();
    down->add_option("output", o.output)->required();

    auto* normals = app.add_subcommand("normals", "Estimate normals");
    normals->add_option("--radius", o.radius)->capture_default_str()->check(CLI::PositiveNumber);
    normals->add_option("--max-nn", o.max_nn)->capture_default_str()->check(CLI::PositiveNumber);
    normals->add_option("input", o.input)->required();
    normals->add_option("output", o.output)->required();

    auto* fpfh = app.add_subcommand("fpfh", "Compute FPFH features of a cloud with normals");
    fpfh->add_option("--radius", o.fpfh_radius)->capture_default_str()->check(CLI::PositiveNumber);
    fpfh->add_option("--max-nn", o.fpfh_max_nn)->capture_default_str()->check(CLI::PositiveNumber);
    fpfh->add_option("input", o.input)->required();
    fpfh->add_option("output", o.output, "Feature file (.fpfh)")->required();

    auto* global = app.add_subcommand("register-global", "Feature-matched RANSAC registration");
    global->add_option("source", o.source)->required();
    global->add_option("target", o.target)->required();
    global->add_option("--source-feature", o.source_feature, "Precomputed source features");
    global->add_option("--target-feature", o.target_feature, "Precomputed target features");
    global->add_option("--distance", o.ransac_distance, "Max correspondence distance")->capture_default_str()->check(CLI::PositiveNumber);
    global->add_option("--ransac-n", o.ransac_n)->capture_default_str()->check(CLI::Range(3, 1 << 20));
    global->add_option("--edge-similarity", o.edge_similarity)->capture_default_str()->check(CLI::Range(0.0, 1.0));
    global->add_option("--max-iteration", o.ransac_max_iteration)->capture_default_str()->check(CLI::PositiveNumber);
    global->add_option("--max-validation", o.max_validation)->capture_default_str()->check(CLI::PositiveNumber);
    global->add_option("--seed", o.seed)->capture_default_str();
    global->add_option("--normal-radius", o.radius)->capture_default_str()->check(CLI::PositiveNumber);
    global->add_option("--normal-max-nn", o.max_nn)->capture_default_str()->check(CLI::PositiveNumber);
    global->add_option("--fpfh-radius", o.fpfh_radius)->capture_default_str()->check(CLI::PositiveNumber);
    global->add_option("--fpfh-max-nn", o.fpfh_max_nn)->capture_default_str()->check(CLI::PositiveNumber);

    auto* icp = app.add_subcommand("register-icp", "ICP registration");
    icp->add_option("source", o.source)->required();
    icp->add_option("target", o.target)->required();
    icp->add_option("--distance", o.icp_distance, "Max correspondence distance")->capture_default_str()->check(CLI::PositiveNumber);
    icp->add_option("--method", o.method)
        ->capture_default_str()
        ->check(CLI::IsMember({"point-to-point", "point-to-plane"}));
    icp->add_option("--init", o.init, "Initial transform, 16 numbers row-major")->expected(16);
    icp->add_option("--max-iteration", o.icp_max_iteration)->capture_default_str()->check(CLI::PositiveNumber);
    icp->add_option("--normal-radius", o.radius)->capture_default_str()->check(CLI::PositiveNumber);
    icp->add_option("--normal-max-nn", o.max_nn)->capture_default_str()->check(CLI::PositiveNumber);

    auto* pgo = app.add_subcommand("posegraph-optimize", "Robust pose-graph optimization");
    pgo->add_option("input", o.input)->required();
    pgo->add_option("output", o.output)->required();
    pgo->add_option("--distance", o.pgo_distance, "Max correspondence distance")->capture_default_str()->check(CLI::PositiveNumber);
    pgo->add_option("--preference", o.preference, "Pruning threshold on edge confidence")
        ->capture_default_str()
        ->check(CLI::Range(0.0, 1.0));
    pgo->add_option("--max-iteration", o.pgo_max_iteration, "LM iterations per round")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);

    // Every pipeline field is a flag of the commands that take a config.
    auto add_config_flags = [&](CLI::App* cmd) {
        cmd->add_option("--config", o.config_file, "key = value config file")->check(CLI::ExistingFile);
        for (const auto& key : PipelineConfig::keys())
            cmd->add_option(flag_name(key), raw[key], "Pipeline field " + key);
    };

    auto* integrate = app.add_subcommand("integrate", "Fuse dataset frames along a trajectory");
    integrate->add_option("dataset", o.dataset)->required();
    integrate->add_option("--trajectory", o.trajectory, "Pose graph whose nodes are camera-to-world poses")
        ->required();
    integrate->add_option("--frames", o.frames, "Frame index of each trajectory node (default 0..n-1)")
        ->delimiter(',');
    integrate->add_option("--output", o.output)->required();
    add_config_flags(integrate);

    auto* convert = app.add_subcommand("convert", "Convert between point cloud and mesh formats");
    convert->add_option("input", o.input)->required();
    convert->add_option("output", o.output)->required();
    convert->add_flag("--ascii", o.ascii, "Write ASCII PLY");

    auto* recon = app.add_subcommand("reconstruct", "Reconstruct a scene from an RGB-D dataset");
    recon->add_option("dataset", o.dataset)->required();
    recon->add_option("--output", o.output)->default_val("r3d_output");
    add_config_flags(recon);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);
        std::cerr << "r3d: usage error: " << e.what() << "\n";
        return 2;
    }

    try {
        for (const auto& [key, value] : raw)
            if (!value.empty()) o.overrides[key] = value;
        if (threads > 0) set_num_threads(threads);
        if (o.overrides.count("threads") == 0 && threads > 0) o.overrides["threads"] = std::to_string(threads);
        if (*down) cmd_downsample(o);
        else if (*normals) cmd_normals(o);
        else if (*fpfh) cmd_fpfh(o);
        else if (*global) cmd_register_global(o);
        else if (*icp) cmd_register_icp(o);
        else if (*pgo) cmd_posegraph_optimize(o);
        else if (*integrate) cmd_integrate(o);
        else if (*convert) cmd_convert(o);
        else if (*recon) cmd_reconstruct(o);
    } catch (const UsageError& e) {
        std::cerr << "r3d: usage error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "r3d: error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
