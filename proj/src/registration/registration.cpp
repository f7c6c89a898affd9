#include "r3d/registration.h"

#include <Eigen/Cholesky>
#include <Eigen/Geometry>
#include <Eigen/LU>
#include <Eigen/SVD>
#include <algorithm>
#include <cmath>

#include "r3d/error.h"
#include "r3d/parallel.h"
#include "r3d/random.h"
#include "r3d/se3.h"

namespace r3d {

namespace {

constexpr double kRankTolerance = 1e-12;

struct ErrorSum {
    std::int64_t count = 0;
    double squared = 0.0;
};

void check_distance(double d) {
    if (!(d > 0.0) || !std::isfinite(d)) throw InvalidArgument("max_correspondence_distance must be positive");
}

bool better(const RegistrationResult& a, const RegistrationResult& b) {
    return a.fitness > b.fitness || (a.fitness == b.fitness && a.inlier_rmse < b.inlier_rmse);
}

}  // namespace

CorrespondenceChecker CorrespondenceChecker::edge_length(double similarity) {
    if (!(similarity > 0.0 && similarity <= 1.0)) throw InvalidArgument("edge length similarity must lie in (0, 1]");
    return {Kind::kEdgeLength, similarity};
}

CorrespondenceChecker CorrespondenceChecker::distance(double threshold) {
    if (!(threshold > 0.0)) throw InvalidArgument("distance threshold must be positive");
    return {Kind::kDistance, threshold};
}

bool CorrespondenceChecker::check(const PointCloud& source, const PointCloud& target, const CorrespondenceSet& sample,
                                  const RigidTransform& t) const {
    if (kind_ == Kind::kDistance) {
        const double t2 = value_ * value_;
        for (const auto& c : sample)
            if ((t * source.points[c[0]] - target.points[c[1]]).squaredNorm() > t2) return false;
        return true;
    }
    for (std::size_t a = 0; a < sample.size(); ++a) {
        for (std::size_t b = a + 1; b < sample.size(); ++b) {
            const double es = (source.points[sample[a][0]] - source.points[sample[b][0]]).norm();
            const double et = (target.points[sample[a][1]] - target.points[sample[b][1]]).norm();
            const double hi = std::max(es, et);
            if (hi == 0.0) continue;
            if (std::min(es, et) < value_ * hi) return false;
        }
    }
    return true;
}

RigidTransform estimate_point_to_point(std::span<const Eigen::Vector3d> source,
                                       std::span<const Eigen::Vector3d> target) {
    if (source.size() != target.size()) throw InvalidArgument("source and target sizes differ");
    if (source.size() < 3) throw DegenerateInput("point-to-point estimation needs at least 3 pairs");
    const double n = static_cast<double>(source.size());
    Eigen::Vector3d cs = Eigen::Vector3d::Zero(), ct = Eigen::Vector3d::Zero();
    for (std::size_t i = 0; i < source.size(); ++i) {
        cs += source[i];
        ct += target[i];
    }
    cs /= n;
    ct /= n;
    Eigen::Matrix3d h = Eigen::Matrix3d::Zero();
    for (std::size_t i = 0; i < source.size(); ++i) h += (source[i] - cs) * (target[i] - ct).transpose();

    const Eigen::JacobiSVD<Eigen::Matrix3d> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const Eigen::Vector3d sv = svd.singularValues();
    if (!(sv[0] > 0.0) || sv[1] <= kRankTolerance * sv[0])
        throw DegenerateInput("point-to-point correspondences are collinear");
    const Eigen::Matrix3d u = svd.matrixU(), v = svd.matrixV();
    Eigen::Vector3d d(1.0, 1.0, (v * u.transpose()).determinant() < 0.0 ? -1.0 : 1.0);
    const Eigen::Matrix3d r = v * d.asDiagonal() * u.transpose();
    return RigidTransform::from_rotation_translation(r, ct - r * cs);
}

RigidTransform estimate_point_to_plane(std::span<const Eigen::Vector3d> source,
                                       std::span<const Eigen::Vector3d> target,
                                       std::span<const Eigen::Vector3d> target_normals) {
    if (source.size() != target.size() || target.size() != target_normals.size())
        throw InvalidArgument("source, target and normal counts differ");
    if (source.size() < 6) throw DegenerateInput("point-to-plane estimation needs at least 6 pairs");
    using Vector6 = Eigen::Matrix<double, 6, 1>;
    using Matrix6 = Eigen::Matrix<double, 6, 6>;
    Matrix6 jtj = Matrix6::Zero();
    Vector6 jtr = Vector6::Zero();
    for (std::size_t i = 0; i < source.size(); ++i) {
        const Eigen::Vector3d& s = source[i];
        const Eigen::Vector3d& n = target_normals[i];
        Vector6 j;
        j.head<3>() = s.cross(n);
        j.tail<3>() = n;
        const double r = (s - target[i]).dot(n);
        jtj.selfadjointView<Eigen::Upper>().rankUpdate(j);
        jtr += j * r;
    }
    jtj.triangularView<Eigen::StrictlyLower>() = jtj.transpose();
    const Eigen::LDLT<Matrix6> ldlt(jtj);
    const Vector6 d = ldlt.vectorD().cwiseAbs();
    if (ldlt.info() != Eigen::Success || !(d.maxCoeff() > 0.0) || d.minCoeff() <= kRankTolerance * d.maxCoeff())
        throw DegenerateInput("point-to-plane system is singular");
    const Vector6 x = -ldlt.solve(jtr);
    if (!x.allFinite()) throw DegenerateInput("point-to-plane system is singular");
    return RigidTransform::from_rotation_translation(so3_exp(x.head<3>()), x.tail<3>());
}

RegistrationResult evaluate_registration(const PointCloud& source, const PointCloud& target,
                                         double max_correspondence_distance, const RigidTransform& t) {
    check_distance(max_correspondence_distance);
    if (target.size() == 0) {
        RegistrationResult r;
        r.transformation = t;
        return r;
    }
    const KDTree tree(target.points);
    return evaluate_registration(source, target, tree, max_correspondence_distance, t);
}

RegistrationResult evaluate_registration(const PointCloud& source, const PointCloud& target,
                                         const KDTree& target_tree, double max_correspondence_distance,
                                         const RigidTransform& t) {
    check_distance(max_correspondence_distance);
    RegistrationResult result;
    result.transformation = t;
    const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(source.size());
    if (n == 0 || target.size() == 0) return result;

    std::vector<int> match(static_cast<std::size_t>(n), -1);
    std::vector<double> dist2(static_cast<std::size_t>(n), 0.0);
    const SearchParam param = SearchParam::hybrid(max_correspondence_distance, 1);
    parallel_for(n, [&](std::ptrdiff_t i) {
        thread_local std::vector<int> idx;
        thread_local std::vector<double> d2;
        if (target_tree.search(t * source.points[i], param, idx, d2) > 0) {
            match[i] = idx[0];
            dist2[i] = d2[0];
        }
    });
    const ErrorSum sum = deterministic_reduce(
        n, ErrorSum{},
        [&](ErrorSum& acc, std::ptrdiff_t i) {
            if (match[i] < 0) return;
            ++acc.count;
            acc.squared += dist2[i];
        },
        [](ErrorSum& a, const ErrorSum& b) {
            a.count += b.count;
            a.squared += b.squared;
        });

    result.correspondences.reserve(static_cast<std::size_t>(sum.count));
    for (std::ptrdiff_t i = 0; i < n; ++i)
        if (match[i] >= 0) result.correspondences.emplace_back(static_cast<int>(i), match[i]);
    result.fitness = static_cast<double>(sum.count) / static_cast<double>(n);
    result.inlier_rmse = sum.count > 0 ? std::sqrt(sum.squared / static_cast<double>(sum.count)) : 0.0;
    return result;
}

RegistrationResult registration_ransac_based_on_feature_matching(
    const PointCloud& source, const PointCloud& target, const FeatureMatrix& source_feature,
    const FeatureMatrix& target_feature, double max_correspondence_distance, int ransac_n,
    const std::vector<CorrespondenceChecker>& checkers, const RansacCriteria& criteria, std::uint64_t seed) {
    check_distance(max_correspondence_distance);
    if (static_cast<std::size_t>(source_feature.rows()) != source.size() ||
        static_cast<std::size_t>(target_feature.rows()) != target.size())
        throw InvalidArgument("feature rows do not match point counts");
    if (ransac_n < 3) throw InvalidArgument("ransac_n must be at least 3");
    if (criteria.max_iteration < 1 || criteria.max_validation < 1)
        throw InvalidArgument("RANSAC criteria must be positive");
    if (static_cast<std::size_t>(ransac_n) > source.size() || target.size() == 0)
        throw InvalidArgument("ransac_n exceeds the number of candidate correspondences");

    // Candidate correspondences: nearest target feature of every source feature.
    const KDTree feature_tree(std::span<const double>(target_feature.data(), static_cast<std::size_t>(target_feature.size())),
                              kFpfhDimension);
    const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(source.size());
    CorrespondenceSet candidates(static_cast<std::size_t>(n));
    parallel_for(n, [&](std::ptrdiff_t i) {
        thread_local std::vector<int> idx;
        thread_local std::vector<double> d2;
        feature_tree.search(std::span<const double>(source_feature.row(i).data(), kFpfhDimension), SearchParam::knn(1),
                            idx, d2);
        candidates[i] = Eigen::Vector2i(static_cast<int>(i), idx[0]);
    });

    const KDTree target_tree(target.points);
    Xoshiro256 rng(seed);
    RegistrationResult best;
    CorrespondenceSet sample(static_cast<std::size_t>(ransac_n));
    std::vector<std::size_t> picked(static_cast<std::size_t>(ransac_n));
    std::vector<Eigen::Vector3d> sp(sample.size()), tp(sample.size());
    int validations = 0;

    for (int it = 0; it < criteria.max_iteration && validations < criteria.max_validation; ++it) {
        for (std::size_t k = 0; k < picked.size(); ++k) {
            std::size_t c;
            do {
                c = static_cast<std::size_t>(rng.uniform(candidates.size()));
            } while (std::find(picked.begin(), picked.begin() + static_cast<std::ptrdiff_t>(k), c) !=
                     picked.begin() + static_cast<std::ptrdiff_t>(k));
            picked[k] = c;
            sample[k] = candidates[c];
        }

        bool ok = true;
        for (const auto& checker : checkers) {
            if (!checker.requires_transformation() && !checker.check(source, target, sample, {})) {
                ok = false;
                break;
            }
        }
        if (!ok) continue;

        for (std::size_t k = 0; k < sample.size(); ++k) {
            sp[k] = source.points[sample[k][0]];
            tp[k] = target.points[sample[k][1]];
        }
        RigidTransform t;
        try {
            t = estimate_point_to_point(sp, tp);
        } catch (const DegenerateInput&) {
            continue;
        }
        for (const auto& checker : checkers) {
            if (checker.requires_transformation() && !checker.check(source, target, sample, t)) {
                ok = false;
                break;
            }
        }
        if (!ok) continue;

        RegistrationResult r = evaluate_registration(source, target, target_tree, max_correspondence_distance, t);
        ++validations;
        if (better(r, best)) best = std::move(r);
    }
    return best;
}

RegistrationResult registration_icp(const PointCloud& source, const PointCloud& target,
                                    double max_correspondence_distance, const RigidTransform& init,
                                    TransformationEstimation estimation, const IcpCriteria& criteria,
                                    const IcpObserver& observer) {
    check_distance(max_correspondence_distance);
    if (criteria.max_iteration < 1 || !(criteria.relative_fitness > 0.0) || !(criteria.relative_rmse > 0.0))
        throw InvalidArgument("ICP criteria must be positive");
    if (estimation == TransformationEstimation::kPointToPlane && !target.has_normals())
        throw InvalidArgument("point-to-plane ICP needs target normals");
    RegistrationResult result;
    result.transformation = init;
    if (source.size() == 0 || target.size() == 0) return result;

    const KDTree tree(target.points);
    result = evaluate_registration(source, target, tree, max_correspondence_distance, init);
    std::vector<Eigen::Vector3d> sp, tp, tn;
    for (int it = 0; it < criteria.max_iteration; ++it) {
        if (result.correspondences.empty()) break;
        const std::size_t m = result.correspondences.size();
        sp.resize(m);
        tp.resize(m);
        for (std::size_t k = 0; k < m; ++k) {
            sp[k] = result.transformation * source.points[result.correspondences[k][0]];
            tp[k] = target.points[result.correspondences[k][1]];
        }
        RigidTransform delta;
        try {
            if (estimation == TransformationEstimation::kPointToPoint) {
                delta = estimate_point_to_point(sp, tp);
            } else {
                tn.resize(m);
                for (std::size_t k = 0; k < m; ++k) tn[k] = target.normals[result.correspondences[k][1]];
                delta = estimate_point_to_plane(sp, tp, tn);
            }
        } catch (const DegenerateInput&) {
            break;
        }
        const RegistrationResult previous = std::move(result);
        result = evaluate_registration(source, target, tree, max_correspondence_distance,
                                       delta * previous.transformation);
        if (observer) observer(it, result);
        if (std::abs(previous.fitness - result.fitness) < criteria.relative_fitness &&
            std::abs(previous.inlier_rmse - result.inlier_rmse) < criteria.relative_rmse)
            break;
    }
    return result;
}

}  // namespace r3d
