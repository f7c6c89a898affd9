#include <Eigen/Geometry>
#include <chrono>
#include <cmath>
#include <exception>
#include <json.hpp>
#include <mutex>

#include "../io/io_common.h"
#include "r3d/error.h"
#include "r3d/features.h"
#include "r3d/io.h"
#include "r3d/parallel.h"
#include "r3d/pipeline.h"
#include "r3d/tsdf_volume.h"

namespace r3d {
namespace {

using Clock = std::chrono::steady_clock;

// A frame cloud needs this many points to take part in odometry.
constexpr std::size_t kMinFramePoints = 100;

class Logger {
public:
    explicit Logger(const PipelineLog& log) : log_(log) {}
    void operator()(const std::string& message) const {
        if (!log_) return;
        std::lock_guard<std::mutex> lock(mutex_);
        log_(message);
    }

private:
    const PipelineLog& log_;
    mutable std::mutex mutex_;
};

// Runs job(i) for i in [0, count) on the worker pool; the first failure by
// index is rethrown after all jobs finished.
template <typename Job>
void run_jobs(std::ptrdiff_t count, Job&& job) {
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(count));
    parallel_for(count, [&](std::ptrdiff_t i) {
        try {
            job(i);
        } catch (...) {
            errors[static_cast<std::size_t>(i)] = std::current_exception();
        }
    });
    for (const auto& e : errors)
        if (e) std::rethrow_exception(e);
}

PointCloud frame_cloud(const RGBDImage& rgbd, const PinholeCameraIntrinsic& intrinsic, const PipelineConfig& config) {
    PointCloud cloud = create_point_cloud_from_rgbd(rgbd, intrinsic);
    if (cloud.size() < kMinFramePoints) return {};
    cloud = voxel_down_sample(cloud, config.frame_voxel_size);
    estimate_normals(cloud, SearchParam::hybrid(config.normal_radius, config.normal_max_nn));
    orient_normals_towards_camera(cloud);
    return cloud;
}

Matrix6d information_of(const RegistrationResult& r) {
    return Matrix6d::Identity() * static_cast<double>(r.correspondences.size());
}

// Coarse-to-fine point-to-plane ICP of source onto target.
RegistrationResult align(const PointCloud& source, const PointCloud& target, const RigidTransform& init,
                         const PipelineConfig& config) {
    const RegistrationResult coarse =
        registration_icp(source, target, config.odometry_distance, init, TransformationEstimation::kPointToPlane);
    return registration_icp(source, target, config.icp_distance, coarse.transformation,
                            TransformationEstimation::kPointToPlane);
}

struct Box {
    Eigen::Vector3d lo = Eigen::Vector3d::Constant(std::numeric_limits<double>::infinity());
    Eigen::Vector3d hi = -Eigen::Vector3d::Constant(std::numeric_limits<double>::infinity());

    void add(const PointCloud& cloud, const RigidTransform& t) {
        for (const auto& p : cloud.points) {
            const Eigen::Vector3d q = t * p;
            lo = lo.cwiseMin(q);
            hi = hi.cwiseMax(q);
        }
    }
    bool empty() const { return !(lo.array() <= hi.array()).all(); }
};

TSDFVolume make_volume(const Box& box, const PipelineConfig& config) {
    if (box.empty()) throw DegenerateInput("no valid depth to integrate");
    const double margin = config.sdf_trunc + 2.0 * config.tsdf_voxel_size;
    const Eigen::Vector3d origin = box.lo.array() - margin;
    const Eigen::Vector3d extent = (box.hi - box.lo).array() + 2.0 * margin;
    const Eigen::Vector3d cells = (extent / config.tsdf_voxel_size).array().ceil();
    if ((cells.array() > 1e6).any() || cells.prod() > static_cast<double>(TSDFVolume::kMaxVoxels))
        throw InvalidArgument("scene extent needs " + std::to_string(cells.prod()) +
                              " voxels at tsdf_voxel_size; increase it or lower depth_trunc");
    return TSDFVolume(cells.cast<int>(), config.tsdf_voxel_size, config.sdf_trunc, origin);
}

GlobalOptimizationOption optimization_option(double distance, const PipelineConfig& config) {
    GlobalOptimizationOption option;
    option.max_correspondence_distance = distance;
    option.preference_loop_closure = config.preference_loop_closure;
    return option;
}

// Internal fragment state: the public result plus the boundary frame clouds
// used to chain consecutive fragments.
struct FragmentWork {
    Fragment fragment;
    std::vector<PairRecord> pairs;
    std::vector<int> skipped;
    PointCloud first_cloud;
    PointCloud last_cloud;
};

FragmentWork build_fragment(const Dataset& dataset, int begin, int end, const PipelineConfig& config,
                            const Logger& log) {
    FragmentWork work;
    std::vector<PointCloud> clouds;
    for (int f = begin; f < end; ++f) {
        PointCloud c = frame_cloud(load_frame(dataset, static_cast<std::size_t>(f), config), dataset.intrinsic, config);
        if (c.empty()) {
            log("warning: frame " + std::to_string(f) + " has no usable depth, skipped");
            work.skipped.push_back(f);
            continue;
        }
        work.fragment.frames.push_back(f);
        clouds.push_back(std::move(c));
    }
    const int m = static_cast<int>(clouds.size());
    if (m == 0) return work;

    PoseGraph& graph = work.fragment.pose_graph;
    graph.nodes.push_back(RigidTransform());
    for (int k = 0; k + 1 < m; ++k) {
        const RegistrationResult r = align(clouds[k + 1], clouds[k], RigidTransform(), config);
        PoseGraphEdge e;
        e.source = k + 1;
        e.target = k;
        e.transformation = r.transformation;
        e.information = information_of(r);
        if (r.correspondences.size() < 3) {
            log("warning: odometry failed between frames " + std::to_string(work.fragment.frames[k]) + " and " +
                std::to_string(work.fragment.frames[k + 1]) + ", assuming no motion");
            e.transformation = RigidTransform();
            e.information = Matrix6d::Identity();
        }
        graph.edges.push_back(e);
        graph.nodes.push_back(graph.nodes.back() * e.transformation);
        work.pairs.push_back({work.fragment.frames[k + 1], work.fragment.frames[k], "odometry", r.fitness,
                              r.inlier_rmse, r.correspondences.size() >= 3});
    }
    for (int k = 0; k + config.skip_k < m; ++k) {
        const int s = k + config.skip_k;
        const RigidTransform init = graph.nodes[k].inverse() * graph.nodes[s];
        const RegistrationResult r = align(clouds[s], clouds[k], init, config);
        const bool accepted = r.fitness >= config.min_pair_fitness && r.correspondences.size() >= 3;
        work.pairs.push_back({work.fragment.frames[s], work.fragment.frames[k], "loop", r.fitness, r.inlier_rmse, accepted});
        if (!accepted) continue;
        PoseGraphEdge e;
        e.source = s;
        e.target = k;
        e.transformation = r.transformation;
        e.information = information_of(r);
        e.uncertain = true;
        graph.edges.push_back(e);
    }
    if (graph.nodes.size() > 1) {
        const GlobalOptimizationResult opt = global_optimization(graph, optimization_option(config.icp_distance, config));
        graph = opt.graph;
    }
    work.fragment.frame_poses = graph.nodes;

    Box box;
    for (int k = 0; k < m; ++k) box.add(clouds[k], graph.nodes[k]);
    TSDFVolume volume = make_volume(box, config);
    for (int k = 0; k < m; ++k)
        volume.integrate(load_frame(dataset, static_cast<std::size_t>(work.fragment.frames[k]), config),
                         dataset.intrinsic, graph.nodes[k].inverse());
    work.fragment.cloud = volume.extract_point_cloud();
    work.first_cloud = std::move(clouds.front());
    work.last_cloud = std::move(clouds.back());
    return work;
}

std::uint64_t pair_seed(std::uint64_t seed, int i, int j) {
    std::uint64_t h = seed ^ 0x9E3779B97F4A7C15ull;
    for (const std::uint64_t v : {static_cast<std::uint64_t>(i), static_cast<std::uint64_t>(j)}) {
        h ^= v + 0x9E3779B97F4A7C15ull + (h << 6) + (h >> 2);
    }
    return h;
}

struct PairJob {
    int source = 0;  // fragment index (node)
    int target = 0;
    bool adjacent = false;
};

struct PairOutcome {
    std::vector<PairRecord> records;
    bool has_edge = false;
    PoseGraphEdge edge;
};

}  // namespace

ReconstructionResult reconstruct(const Dataset& dataset, const PipelineConfig& config, const PipelineLog& log_fn) {
    config.validate();
    dataset.intrinsic.validate();
    ScopedNumThreads threads(config.threads);
    const Logger log(log_fn);
    ReconstructionResult result;
    auto t0 = Clock::now();
    auto lap = [&](const std::string& name) {
        const auto t1 = Clock::now();
        result.timings.push_back({name, std::chrono::duration<double>(t1 - t0).count()});
        t0 = t1;
    };

    // Step 1: fragments.
    const int n_frames = static_cast<int>(dataset.size());
    const int n_windows = (n_frames + config.fragment_size - 1) / config.fragment_size;
    std::vector<FragmentWork> works(static_cast<std::size_t>(n_windows));
    log("building " + std::to_string(n_windows) + " fragment(s) from " + std::to_string(n_frames) + " frames");
    run_jobs(n_windows, [&](std::ptrdiff_t w) {
        const int begin = static_cast<int>(w) * config.fragment_size;
        works[w] = build_fragment(dataset, begin, std::min(n_frames, begin + config.fragment_size), config, log);
    });
    std::vector<FragmentWork> kept;
    for (auto& w : works) {
        result.skipped_frames.insert(result.skipped_frames.end(), w.skipped.begin(), w.skipped.end());
        result.pairs.insert(result.pairs.end(), w.pairs.begin(), w.pairs.end());
        if (w.fragment.frames.empty()) {
            log("warning: a fragment has no usable frames and is dropped");
            continue;
        }
        kept.push_back(std::move(w));
    }
    if (kept.empty()) throw DegenerateInput("no frame of the dataset has usable depth");
    lap("fragments");

    // Step 2: global alignment of fragments.
    const int n = static_cast<int>(kept.size());
    PoseGraph global;
    global.nodes.push_back(RigidTransform());
    if (n > 1) {
        std::vector<PointCloud> down(static_cast<std::size_t>(n));
        std::vector<FeatureMatrix> features(static_cast<std::size_t>(n));
        run_jobs(n, [&](std::ptrdiff_t i) {
            down[i] = voxel_down_sample(kept[i].fragment.cloud, config.voxel_size);
            features[i] = compute_fpfh_feature(down[i], SearchParam::hybrid(config.fpfh_radius, config.fpfh_max_nn));
        });

        std::vector<PairJob> jobs;
        for (int i = 0; i < n; ++i)
            for (int j = i + 1; j < n; ++j) jobs.push_back({j, i, j == i + 1});
        std::vector<PairOutcome> outcomes(jobs.size());
        const std::vector<CorrespondenceChecker> checkers = {CorrespondenceChecker::edge_length(config.edge_similarity),
                                                             CorrespondenceChecker::distance(config.ransac_distance)};
        const RansacCriteria criteria{config.ransac_max_iteration, config.ransac_max_validation};
        run_jobs(static_cast<std::ptrdiff_t>(jobs.size()), [&](std::ptrdiff_t q) {
            const PairJob& job = jobs[q];
            PairOutcome& out = outcomes[q];
            const FragmentWork& src = kept[job.source];
            const FragmentWork& tgt = kept[job.target];
            RegistrationResult r;
            if (job.adjacent) {
                // Chain through the boundary frames: the first frame of the
                // source fragment against the last frame of the target one.
                const RegistrationResult bridge = align(src.first_cloud, tgt.last_cloud, RigidTransform(), config);
                const RigidTransform init = tgt.fragment.frame_poses.back() * bridge.transformation;
                r = registration_icp(src.fragment.cloud, tgt.fragment.cloud, config.icp_distance, init,
                                     TransformationEstimation::kPointToPlane);
                out.records.push_back({job.source, job.target, "odometry", r.fitness, r.inlier_rmse, true});
                out.has_edge = true;
                out.edge.uncertain = false;
                if (r.correspondences.size() < 3) {
                    r.transformation = init;
                    r.correspondences.clear();
                }
            } else {
                const RegistrationResult g = registration_ransac_based_on_feature_matching(
                    down[job.source], down[job.target], features[job.source], features[job.target],
                    config.ransac_distance, config.ransac_n, checkers, criteria,
                    pair_seed(config.seed, job.source, job.target));
                const bool accepted = g.fitness >= config.min_pair_fitness;
                out.records.push_back({job.source, job.target, "global", g.fitness, g.inlier_rmse, accepted});
                if (!accepted) return;
                r = registration_icp(src.fragment.cloud, tgt.fragment.cloud, config.icp_distance, g.transformation,
                                     TransformationEstimation::kPointToPlane);
                out.has_edge = r.correspondences.size() >= 3;
                out.edge.uncertain = true;
            }
            out.edge.source = job.source;
            out.edge.target = job.target;
            out.edge.transformation = r.transformation;
            out.edge.information = r.correspondences.empty() ? Matrix6d::Identity() : information_of(r);
        });

        // Initial poses chain the adjacent edges, which come first per target.
        std::vector<RigidTransform> chain(static_cast<std::size_t>(n));
        for (std::size_t q = 0; q < jobs.size(); ++q) {
            result.pairs.insert(result.pairs.end(), outcomes[q].records.begin(), outcomes[q].records.end());
            if (!outcomes[q].has_edge) continue;
            global.edges.push_back(outcomes[q].edge);
            if (jobs[q].adjacent) chain[jobs[q].source] = chain[jobs[q].target] * outcomes[q].edge.transformation;
        }
        global.nodes = chain;
        GlobalOptimizationResult opt = global_optimization(global, optimization_option(config.ransac_distance, config));
        for (const int e : opt.pruned_edges) {
            const auto& edge = opt.graph.edges[e];
            log("pruned fragment pair " + std::to_string(edge.source) + " -> " + std::to_string(edge.target) +
                " (confidence " + std::to_string(edge.confidence) + ")");
        }
        lap("global registration");

        // ICP refinement of every surviving edge from the optimized poses.
        PoseGraph refined;
        refined.nodes = opt.graph.nodes;
        std::vector<PoseGraphEdge> kept_edges;
        for (std::size_t e = 0; e < opt.graph.edges.size(); ++e)
            if (std::find(opt.pruned_edges.begin(), opt.pruned_edges.end(), static_cast<int>(e)) == opt.pruned_edges.end())
                kept_edges.push_back(opt.graph.edges[e]);
        std::vector<PairRecord> refine_records(kept_edges.size());
        run_jobs(static_cast<std::ptrdiff_t>(kept_edges.size()), [&](std::ptrdiff_t q) {
            PoseGraphEdge& edge = kept_edges[q];
            const RigidTransform init = refined.nodes[edge.target].inverse() * refined.nodes[edge.source];
            const RegistrationResult r =
                registration_icp(kept[edge.source].fragment.cloud, kept[edge.target].fragment.cloud, config.icp_distance,
                                 init, TransformationEstimation::kPointToPlane);
            const bool ok = r.correspondences.size() >= 3;
            refine_records[q] = {edge.source, edge.target, "refine", r.fitness, r.inlier_rmse, ok};
            if (ok) {
                edge.transformation = r.transformation;
                edge.information = information_of(r);
            }
            edge.confidence = 1.0;
        });
        result.pairs.insert(result.pairs.end(), refine_records.begin(), refine_records.end());
        refined.edges = std::move(kept_edges);
        global = global_optimization(refined, optimization_option(config.icp_distance, config)).graph;
        lap("refinement");
    } else {
        lap("global registration");
        lap("refinement");
    }

    // Step 3: integrate every frame with its composed pose.
    for (int i = 0; i < n; ++i) {
        const Fragment& frag = kept[i].fragment;
        for (std::size_t k = 0; k < frag.frames.size(); ++k) {
            result.frames.push_back(frag.frames[k]);
            result.frame_poses.push_back(global.nodes[i] * frag.frame_poses[k]);
        }
    }
    result.mesh = integrate_frames(dataset, result.frames, result.frame_poses, config);
    lap("integration");

    result.global_graph = std::move(global);
    for (auto& w : kept) result.fragments.push_back(std::move(w.fragment));
    log("mesh: " + std::to_string(result.mesh.vertices.size()) + " vertices, " +
        std::to_string(result.mesh.triangles.size()) + " triangles");
    return result;
}

TriangleMesh integrate_frames(const Dataset& dataset, const std::vector<int>& frames,
                              const std::vector<RigidTransform>& camera_to_world, const PipelineConfig& config) {
    if (frames.size() != camera_to_world.size()) throw InvalidArgument("integrate_frames: one pose per frame required");
    config.validate();
    ScopedNumThreads threads(config.threads);
    // Two passes keep a single frame in memory at a time: bounds, then fusion.
    std::vector<Box> boxes(frames.size());
    run_jobs(static_cast<std::ptrdiff_t>(frames.size()), [&](std::ptrdiff_t k) {
        if (frames[k] < 0 || static_cast<std::size_t>(frames[k]) >= dataset.size())
            throw InvalidArgument("integrate_frames: frame " + std::to_string(frames[k]) + " is not in the dataset");
        const RGBDImage image = load_frame(dataset, static_cast<std::size_t>(frames[k]), config);
        boxes[k].add(create_point_cloud_from_rgbd(image, dataset.intrinsic), camera_to_world[k]);
    });
    Box box;
    for (const auto& b : boxes) {
        if (b.empty()) continue;
        box.lo = box.lo.cwiseMin(b.lo);
        box.hi = box.hi.cwiseMax(b.hi);
    }
    TSDFVolume volume = make_volume(box, config);
    for (std::size_t k = 0; k < frames.size(); ++k)
        volume.integrate(load_frame(dataset, static_cast<std::size_t>(frames[k]), config), dataset.intrinsic,
                         camera_to_world[k].inverse());
    return volume.extract_triangle_mesh();
}

std::string reconstruction_report(const ReconstructionResult& result, const PipelineConfig& config) {
    using nlohmann::json;
    json doc;
    doc["schema"] = "r3d-report";
    doc["version"] = 1;
    json cfg = json::object();
    for (const auto& key : PipelineConfig::keys()) cfg[key] = json::parse(config.value(key));
    doc["config"] = cfg;
    doc["frames_integrated"] = result.frames.size();
    // Node i of trajectory.json is the pose of dataset frame trajectory_frames[i].
    doc["trajectory_frames"] = result.frames;
    doc["skipped_frames"] = result.skipped_frames;
    json frags = json::array();
    for (const auto& f : result.fragments)
        frags.push_back({{"frames", f.frames}, {"cloud_points", f.cloud.size()}, {"edges", f.pose_graph.edges.size()}});
    doc["fragments"] = frags;
    json pairs = json::array();
    for (const auto& p : result.pairs)
        pairs.push_back({{"source", p.source},
                         {"target", p.target},
                         {"kind", p.kind},
                         {"fitness", p.fitness},
                         {"inlier_rmse", p.inlier_rmse},
                         {"accepted", p.accepted}});
    doc["pairs"] = pairs;
    json timings = json::array();
    for (const auto& t : result.timings) timings.push_back({{"step", t.name}, {"seconds", t.seconds}});
    doc["timings"] = timings;
    doc["mesh"] = {{"vertices", result.mesh.vertices.size()}, {"triangles", result.mesh.triangles.size()}};
    return doc.dump(1) + "\n";
}

void write_reconstruction(const std::filesystem::path& dir, const ReconstructionResult& result,
                          const PipelineConfig& config) {
    std::filesystem::create_directories(dir);
    auto numbered = [](const char* prefix, std::size_t i, const char* ext) {
        char buf[64];
        std::snprintf(buf, sizeof(buf), "%s%03zu%s", prefix, i, ext);
        return std::string(buf);
    };
    for (std::size_t i = 0; i < result.fragments.size(); ++i) {
        write_point_cloud(dir / numbered("fragment_", i, ".ply"), result.fragments[i].cloud);
        write_pose_graph(dir / numbered("pose_graph_fragment_", i, ".json"), result.fragments[i].pose_graph);
    }
    write_pose_graph(dir / "pose_graph_global.json", result.global_graph);
    PoseGraph trajectory;
    trajectory.nodes = result.frame_poses;
    write_pose_graph(dir / "trajectory.json", trajectory);
    write_triangle_mesh(dir / "mesh.ply", result.mesh);
    io::write_file(dir / "report.json", reconstruction_report(result, config));
}

}  // namespace r3d
