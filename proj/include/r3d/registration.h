#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "r3d/features.h"
#include "r3d/kdtree.h"
#include "r3d/point_cloud.h"
#include "r3d/rigid_transform.h"

namespace r3d {

/// (source index, target index) pairs.
using CorrespondenceSet = std::vector<Eigen::Vector2i>;

struct RegistrationResult {
    RigidTransform transformation;
    /// Inlier correspondences / source point count.
    double fitness = 0.0;
    /// RMSE over inlier correspondences; 0 when there are none.
    double inlier_rmse = 0.0;
    /// Sorted by source index, at most one pair per source point.
    CorrespondenceSet correspondences;
};

struct RansacCriteria {
    int max_iteration = 4000000;
    /// Number of full-cloud validations after which sampling stops.
    int max_validation = 500;
};

struct IcpCriteria {
    int max_iteration = 30;
    double relative_fitness = 1e-6;
    double relative_rmse = 1e-6;
};

/// Cheap tests that reject a RANSAC sample before or after fitting.
class CorrespondenceChecker {
public:
    enum class Kind { kEdgeLength, kDistance };

    /// For every two sampled pairs, min(|e_s|, |e_t|) / max(|e_s|, |e_t|) >= similarity,
    /// with e_s, e_t the edges between them in source and target.
    static CorrespondenceChecker edge_length(double similarity);
    /// Every sampled pair lies within `threshold` after applying the fitted transform.
    static CorrespondenceChecker distance(double threshold);

    Kind kind() const { return kind_; }
    double value() const { return value_; }
    bool requires_transformation() const { return kind_ == Kind::kDistance; }

    bool check(const PointCloud& source, const PointCloud& target, const CorrespondenceSet& sample,
               const RigidTransform& t) const;

private:
    CorrespondenceChecker(Kind kind, double value) : kind_(kind), value_(value) {}
    Kind kind_;
    double value_;
};

enum class TransformationEstimation { kPointToPoint, kPointToPlane };

/// Least-squares rigid motion (no scale) with sum |R s_i + t - t_i|^2 minimal,
/// via SVD of the cross-covariance with a reflection fix. Throws
/// DegenerateInput for fewer than 3 pairs or collinear configurations.
RigidTransform estimate_point_to_point(std::span<const Eigen::Vector3d> source,
                                       std::span<const Eigen::Vector3d> target);

/// One Gauss-Newton step on sum ((R s_i + t - t_i) . n_i)^2 linearized at the
/// identity; the rotation is rebuilt with the exponential map. Throws
/// DegenerateInput when the 6x6 system is singular.
RigidTransform estimate_point_to_plane(std::span<const Eigen::Vector3d> source,
                                       std::span<const Eigen::Vector3d> target,
                                       std::span<const Eigen::Vector3d> target_normals);

/// Fitness, RMSE and correspondences of `source` moved by `t` against
/// `target`: each source point pairs with its nearest target point when that
/// lies within max_correspondence_distance.
RegistrationResult evaluate_registration(const PointCloud& source, const PointCloud& target,
                                         double max_correspondence_distance, const RigidTransform& t);

/// Same, reusing a KD-tree built over target.points.
RegistrationResult evaluate_registration(const PointCloud& source, const PointCloud& target,
                                         const KDTree& target_tree, double max_correspondence_distance,
                                         const RigidTransform& t);

/// Feature-matched RANSAC. Candidates pair every source point with its
/// nearest target point in feature space. Each iteration samples ransac_n
/// distinct candidates, applies the checkers, fits a point-to-point transform
/// and validates it on the full cloud. The best result has the highest
/// fitness, ties broken by lower RMSE. Without any valid sample the result is
/// the identity with fitness 0.
RegistrationResult registration_ransac_based_on_feature_matching(
    const PointCloud& source, const PointCloud& target, const FeatureMatrix& source_feature,
    const FeatureMatrix& target_feature, double max_correspondence_distance, int ransac_n,
    const std::vector<CorrespondenceChecker>& checkers, const RansacCriteria& criteria, std::uint64_t seed);

/// Called after every ICP iteration with the iteration index and its result.
using IcpObserver = std::function<void(int, const RegistrationResult&)>;

/// Iterative closest point starting from `init`. Stops when both fitness and
/// RMSE change by less than the relative criteria, after max_iteration
/// iterations, or when no correspondences remain (fitness 0).
RegistrationResult registration_icp(const PointCloud& source, const PointCloud& target,
                                    double max_correspondence_distance, const RigidTransform& init,
                                    TransformationEstimation estimation, const IcpCriteria& criteria = {},
                                    const IcpObserver& observer = {});

}  // namespace r3d
