#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "r3d/image.h"
#include "r3d/point_cloud.h"
#include "r3d/pose_graph.h"
#include "r3d/registration.h"
#include "r3d/triangle_mesh.h"

namespace r3d {

/// Parameters of the scene reconstruction pipeline. Defaults for the
/// registration stages are the values of the reference tutorial.
struct PipelineConfig {
    int fragment_size = 100;

    // Fragment registration.
    double voxel_size = 0.05;
    double normal_radius = 0.1;
    int normal_max_nn = 30;
    double fpfh_radius = 0.25;
    int fpfh_max_nn = 100;
    double ransac_distance = 0.075;
    int ransac_n = 4;
    double edge_similarity = 0.9;
    int ransac_max_iteration = 4000000;
    int ransac_max_validation = 500;
    double icp_distance = 0.02;
    /// RANSAC results below this fitness do not enter the pose graph.
    double min_pair_fitness = 0.3;

    // Frame odometry inside a fragment.
    double frame_voxel_size = 0.02;
    /// Coarse ICP distance for consecutive frames; refined at icp_distance.
    double odometry_distance = 0.1;
    /// Frame gap of the uncertain edges inside a fragment.
    int skip_k = 5;

    // Pose-graph optimization.
    double preference_loop_closure = 0.25;

    // Volumetric integration.
    double tsdf_voxel_size = 0.02;
    double sdf_trunc = 0.06;

    // Depth decoding.
    double depth_scale = 1000.0;
    double depth_trunc = 3.0;

    std::uint64_t seed = 0;
    /// Worker count for data-parallel loops; 0 keeps the default.
    int threads = 0;

    /// Throws InvalidArgument naming the first invalid field.
    void validate() const;

    /// Sets one field from its textual value. Throws InvalidArgument for an
    /// unknown key or an unparseable value.
    void set(std::string_view key, std::string_view value);

    /// Current value of a field as text (shortest round-trip for reals).
    std::string value(std::string_view key) const;

    /// Names of every settable field, in declaration order.
    static const std::vector<std::string>& keys();
};

/// Parses UTF-8 "key = value" lines; '#' starts a comment. Fields not listed
/// keep their current value in `config`. Throws ParseError with the line number.
void parse_pipeline_config(std::string_view text, const std::string& name, PipelineConfig& config);
PipelineConfig read_pipeline_config(const std::filesystem::path& path);

/// "width height fx fy cx cy", whitespace separated.
PinholeCameraIntrinsic read_intrinsic(const std::filesystem::path& path);
void write_intrinsic(const std::filesystem::path& path, const PinholeCameraIntrinsic& intrinsic);

/// Frames of a dataset directory:
///   intrinsic.txt
///   color/000000.ppm, color/000001.ppm, ...
///   depth/000000.pgm, depth/000001.pgm, ...
/// Depth samples are 16-bit raw values, meters = raw / depth_scale.
struct Dataset {
    PinholeCameraIntrinsic intrinsic;
    std::vector<std::filesystem::path> color;
    std::vector<std::filesystem::path> depth;

    std::size_t size() const { return color.size(); }
};

/// Lists and checks the dataset without reading images. Throws IoError for a
/// missing directory or intrinsic file, ParseError for a malformed intrinsic
/// file and InvalidArgument naming the first gap in the frame numbering or
/// the first color frame without a depth partner.
Dataset open_dataset(const std::filesystem::path& dir);

/// Frame `index` as metric RGB-D.
RGBDImage load_frame(const Dataset& dataset, std::size_t index, const PipelineConfig& config);

struct PairRecord {
    int source = 0;
    int target = 0;
    /// "odometry", "loop", "global" or "refine".
    std::string kind;
    double fitness = 0.0;
    double inlier_rmse = 0.0;
    bool accepted = false;
};

struct StepTiming {
    std::string name;
    double seconds = 0.0;
};

struct Fragment {
    /// Dataset frame indices of the frames that contributed (skipped frames
    /// are absent).
    std::vector<int> frames;
    /// Optimized camera-to-fragment poses, one per entry of `frames`.
    std::vector<RigidTransform> frame_poses;
    PoseGraph pose_graph;
    /// Surface samples extracted from the fragment volume, in fragment coordinates.
    PointCloud cloud;
};

struct ReconstructionResult {
    std::vector<Fragment> fragments;
    /// Fragment-to-world poses after refinement; fragment 0 is the identity.
    PoseGraph global_graph;
    /// Camera-to-world pose of every dataset frame that was integrated.
    std::vector<int> frames;
    std::vector<RigidTransform> frame_poses;
    std::vector<int> skipped_frames;
    TriangleMesh mesh;
    std::vector<PairRecord> pairs;
    std::vector<StepTiming> timings;
};

/// Receives human-readable progress and warnings.
using PipelineLog = std::function<void(const std::string&)>;

/// Runs the three reconstruction steps: fragments from frame odometry and
/// per-fragment pose graphs, global fragment alignment with refinement, and
/// final integration of every frame.
ReconstructionResult reconstruct(const Dataset& dataset, const PipelineConfig& config, const PipelineLog& log = {});

/// Integrates the listed frames (camera-to-world poses) into a volume sized
/// to their back-projected depth and extracts the mesh.
TriangleMesh integrate_frames(const Dataset& dataset, const std::vector<int>& frames,
                              const std::vector<RigidTransform>& camera_to_world, const PipelineConfig& config);

/// Writes mesh.ply, fragment_NNN.ply, pose_graph_fragment_NNN.json,
/// pose_graph_global.json, trajectory.json and report.json into `dir`.
void write_reconstruction(const std::filesystem::path& dir, const ReconstructionResult& result,
                          const PipelineConfig& config);

/// Report document (schema "r3d-report", version 1) as JSON text.
std::string reconstruction_report(const ReconstructionResult& result, const PipelineConfig& config);

}  // namespace r3d
