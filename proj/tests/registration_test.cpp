#include <doctest.h>

#include <Eigen/Geometry>

#include "r3d/error.h"
#include "r3d/parallel.h"
#include "r3d/registration.h"
#include "support/oracles.h"
#include "support/scenes.h"

using namespace r3d;

namespace {

double sum_squared(const std::vector<Eigen::Vector3d>& s, const std::vector<Eigen::Vector3d>& t,
                   const Eigen::Matrix3d& r, const Eigen::Vector3d& tr) {
    double e = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) e += (r * s[i] + tr - t[i]).squaredNorm();
    return e;
}

// Independent minimizer: Gauss-Newton with finite-difference Jacobians over
// a local rotation-vector chart, recentered every step.
double minimize_point_to_point(const std::vector<Eigen::Vector3d>& s, const std::vector<Eigen::Vector3d>& t) {
    Eigen::Matrix3d r = Eigen::Matrix3d::Identity();
    Eigen::Vector3d tr = Eigen::Vector3d::Zero();
    auto residual = [&](const Eigen::Matrix<double, 6, 1>& p) {
        Eigen::Matrix3d dr = Eigen::Matrix3d::Identity();
        const Eigen::Vector3d w = p.head<3>();
        if (w.norm() > 0) dr = Eigen::AngleAxisd(w.norm(), w.normalized()).toRotationMatrix();
        Eigen::VectorXd out(3 * s.size());
        for (std::size_t i = 0; i < s.size(); ++i) out.segment<3>(3 * i) = dr * r * s[i] + tr + p.tail<3>() - t[i];
        return out;
    };
    for (int it = 0; it < 100; ++it) {
        const Eigen::Matrix<double, 6, 1> zero = Eigen::Matrix<double, 6, 1>::Zero();
        const Eigen::VectorXd r0 = residual(zero);
        Eigen::MatrixXd j(r0.size(), 6);
        for (int c = 0; c < 6; ++c) {
            Eigen::Matrix<double, 6, 1> h = zero;
            h[c] = 1e-7;
            j.col(c) = (residual(h) - residual(-h)) / 2e-7;
        }
        const Eigen::Matrix<double, 6, 1> step = -(j.transpose() * j).ldlt().solve(j.transpose() * r0);
        const Eigen::Vector3d w = step.head<3>();
        if (w.norm() > 0) r = Eigen::AngleAxisd(w.norm(), w.normalized()).toRotationMatrix() * r;
        tr += step.tail<3>();
        if (step.norm() < 1e-14) break;
    }
    return sum_squared(s, t, r, tr);
}

// Brute-force correspondence counting.
RegistrationResult brute_evaluate(const PointCloud& s, const PointCloud& t, double d, const RigidTransform& tr) {
    RegistrationResult r;
    double sq = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        const Eigen::Vector3d p = tr * s.points[i];
        int best = -1;
        double bd = d * d;
        for (std::size_t j = 0; j < t.size(); ++j) {
            const double e = (p - t.points[j]).squaredNorm();
            if (e < bd || (e == bd && best < 0)) {
                bd = e;
                best = static_cast<int>(j);
            }
        }
        if (best >= 0) {
            r.correspondences.emplace_back(static_cast<int>(i), best);
            sq += bd;
        }
    }
    r.fitness = static_cast<double>(r.correspondences.size()) / s.size();
    r.inlier_rmse = r.correspondences.empty() ? 0.0 : std::sqrt(sq / r.correspondences.size());
    return r;
}

// Sum over source points of min(d_nn^2, tau^2), nearest neighbor by linear scan.
double truncated_objective(const PointCloud& s, const PointCloud& t, double tau, const RigidTransform& tr) {
    double sum = 0.0;
    for (const auto& p : s.points) {
        const Eigen::Vector3d q = tr * p;
        double best = tau * tau;
        for (const auto& x : t.points) best = std::min(best, (q - x).squaredNorm());
        sum += best;
    }
    return sum;
}

}  // namespace

TEST_CASE("point-to-point: exact cases") {
    const auto pts = test::random_points(50, 1, -1, 1);
    CHECK((estimate_point_to_point(pts, pts).matrix() - Eigen::Matrix4d::Identity()).cwiseAbs().maxCoeff() < 1e-12);
    Xoshiro256 rng(2);
    for (int trial = 0; trial < 50; ++trial) {
        const auto t = test::random_motion(rng, std::numbers::pi, 2.0);
        std::vector<Eigen::Vector3d> moved;
        for (const auto& p : pts) moved.push_back(t * p);
        const auto est = estimate_point_to_point(pts, moved);
        REQUIRE((est.matrix() - t.matrix()).cwiseAbs().maxCoeff() < 1e-10);
    }
}

TEST_CASE("point-to-point: reflection is corrected") {
    auto pts = test::random_points(30, 3, -1, 1);
    std::vector<Eigen::Vector3d> mirrored;
    for (const auto& p : pts) mirrored.emplace_back(p.x(), p.y(), -p.z());
    const auto est = estimate_point_to_point(pts, mirrored);
    CHECK(est.rotation().determinant() == doctest::Approx(1.0));
}

TEST_CASE("point-to-point: degenerate input") {
    std::vector<Eigen::Vector3d> two = {{0, 0, 0}, {1, 0, 0}};
    CHECK_THROWS_AS(estimate_point_to_point(two, two), DegenerateInput);
    std::vector<Eigen::Vector3d> line = {{0, 0, 0}, {1, 1, 1}, {2, 2, 2}, {-1, -1, -1}};
    CHECK_THROWS_AS(estimate_point_to_point(line, line), DegenerateInput);
    std::vector<Eigen::Vector3d> three = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}};
    CHECK_THROWS_AS(estimate_point_to_point(three, two), InvalidArgument);
    CHECK_NOTHROW(estimate_point_to_point(three, three));
}

TEST_CASE("point-to-point: noisy residual equals an independent minimizer") {
    Xoshiro256 rng(4);
    for (int trial = 0; trial < 10; ++trial) {
        const auto src = test::random_points(100, 10 + trial, -1, 1);
        const auto t = test::random_motion(rng, 1.0, 0.5);
        std::vector<Eigen::Vector3d> dst;
        for (const auto& p : src)
            dst.push_back(t * p + 0.01 * Eigen::Vector3d(test::gaussian(rng), test::gaussian(rng), test::gaussian(rng)));
        const auto est = estimate_point_to_point(src, dst);
        const double ours = sum_squared(src, dst, est.rotation(), est.translation());
        const double oracle = minimize_point_to_point(src, dst);
        REQUIRE(std::abs(ours - oracle) < 1e-8);
    }
}

TEST_CASE("point-to-plane: fixed point, one-step recovery and degeneracy") {
    const auto surface = test::bumpy_surface(2000, 5);
    std::vector<Eigen::Vector3d> tgt = surface.points, nrm = surface.normals;
    // Exact analytic normals for the one-step check.
    for (std::size_t i = 0; i < tgt.size(); ++i) {
        const double x = tgt[i].x(), y = tgt[i].y(), h = 1e-6;
        const double dx = (test::bumpy_height(x + h, y) - test::bumpy_height(x - h, y)) / (2 * h);
        const double dy = (test::bumpy_height(x, y + h) - test::bumpy_height(x, y - h)) / (2 * h);
        nrm[i] = Eigen::Vector3d(-dx, -dy, 1).normalized();
    }
    CHECK((estimate_point_to_plane(tgt, tgt, nrm).matrix() - Eigen::Matrix4d::Identity()).cwiseAbs().maxCoeff() <
          1e-10);

    Xoshiro256 rng(6);
    for (int trial = 0; trial < 10; ++trial) {
        const Eigen::Vector3d axis = Eigen::Vector3d(test::gaussian(rng), test::gaussian(rng), test::gaussian(rng)).normalized();
        const Eigen::Vector3d dir = Eigen::Vector3d(test::gaussian(rng), test::gaussian(rng), test::gaussian(rng)).normalized();
        const auto perturb = RigidTransform::from_rotation_translation(
            Eigen::AngleAxisd(test::rad(1.0), axis).toRotationMatrix(), 0.01 * dir);
        std::vector<Eigen::Vector3d> src;
        for (const auto& p : tgt) src.push_back(perturb * p);
        const auto est = estimate_point_to_plane(src, tgt, nrm);
        const Eigen::Matrix4d err = (est * perturb).matrix() - Eigen::Matrix4d::Identity();
        INFO("trial " << trial << " error " << err.cwiseAbs().maxCoeff());
        CHECK(err.cwiseAbs().maxCoeff() < 1e-4);
    }

    std::vector<Eigen::Vector3d> flat;
    for (const auto& p : test::random_points(100, 7)) flat.emplace_back(p.x(), p.y(), 0.0);
    std::vector<Eigen::Vector3d> up(flat.size(), Eigen::Vector3d::UnitZ());
    CHECK_THROWS_AS(estimate_point_to_plane(flat, flat, up), DegenerateInput);
}

TEST_CASE("evaluate_registration matches brute-force counting") {
    Xoshiro256 rng(8);
    PointCloud s, t;
    s.points = test::random_points(300, 9);
    t.points = test::random_points(400, 10);
    for (int trial = 0; trial < 20; ++trial) {
        const auto tr = test::random_motion(rng, 0.3, 0.05);
        const double d = 0.02 + 0.05 * rng.uniform01();
        const auto ours = evaluate_registration(s, t, d, tr);
        const auto ref = brute_evaluate(s, t, d, tr);
        REQUIRE(ours.correspondences == ref.correspondences);
        CHECK(ours.fitness == ref.fitness);
        CHECK(ours.inlier_rmse == doctest::Approx(ref.inlier_rmse).epsilon(1e-12));
        for (const auto& c : ours.correspondences) CHECK((tr * s.points[c[0]] - t.points[c[1]]).norm() <= d);
    }
    const auto perfect = evaluate_registration(s, s, 0.01, {});
    CHECK(perfect.fitness == 1.0);
    CHECK(perfect.inlier_rmse == 0.0);
    const auto away = evaluate_registration(s, s, 0.5, RigidTransform::from_translation({10, 0, 0}));
    CHECK(away.fitness == 0.0);
    CHECK(away.correspondences.empty());
}

TEST_CASE("RANSAC on an exact copy returns the identity") {
    const auto cloud = test::bumpy_surface(500, 11);
    const auto f = compute_fpfh_feature(cloud, SearchParam::hybrid(0.25, 100));
    const std::vector<CorrespondenceChecker> checkers = {CorrespondenceChecker::edge_length(0.9),
                                                         CorrespondenceChecker::distance(0.075)};
    const auto r = registration_ransac_based_on_feature_matching(cloud, cloud, f, f, 0.075, 4, checkers, {4000000, 500}, 1);
    CHECK(r.fitness == 1.0);
    CHECK(r.inlier_rmse < 1e-12);
    CHECK((r.transformation.matrix() - Eigen::Matrix4d::Identity()).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("RANSAC recovers a known motion and is reproducible") {
    Xoshiro256 rng(12);
    const std::vector<CorrespondenceChecker> checkers = {CorrespondenceChecker::edge_length(0.9),
                                                         CorrespondenceChecker::distance(0.075)};
    int success = 0;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const auto src = test::bumpy_surface(500, 100 + seed);
        const auto truth = test::random_motion(rng, std::numbers::pi, 1.0);
        const auto tgt = test::moved_copy(src, truth, 0.002, 200 + seed);
        const auto fs = compute_fpfh_feature(src, SearchParam::hybrid(0.25, 100));
        const auto ft = compute_fpfh_feature(tgt, SearchParam::hybrid(0.25, 100));
        const auto r = registration_ransac_based_on_feature_matching(src, tgt, fs, ft, 0.075, 4, checkers,
                                                                     {4000000, 500}, seed);
        if (test::rotation_error_deg(r.transformation, truth) < 3.0 && test::translation_error(r.transformation, truth) < 0.05)
            ++success;
        const auto again = evaluate_registration(src, tgt, 0.075, r.transformation);
        CHECK(again.fitness == r.fitness);
        CHECK(again.inlier_rmse == r.inlier_rmse);
        CHECK(again.correspondences == r.correspondences);
        for (const auto& c : r.correspondences)
            CHECK((r.transformation * src.points[c[0]] - tgt.points[c[1]]).norm() <= 0.075);
        if (seed == 0) {
            for (int threads : {1, 3}) {
                ScopedNumThreads scoped(threads);
                const auto rep = registration_ransac_based_on_feature_matching(src, tgt, fs, ft, 0.075, 4, checkers,
                                                                               {4000000, 500}, seed);
                CHECK(rep.transformation == r.transformation);
                CHECK(rep.fitness == r.fitness);
                CHECK(rep.inlier_rmse == r.inlier_rmse);
            }
        }
    }
    CHECK(success >= 4);
}

TEST_CASE("RANSAC with checkers rejecting everything returns fitness 0") {
    const auto src = test::bumpy_surface(200, 13);
    const auto tgt = test::moved_copy(src, RigidTransform::from_translation({0.1, 0, 0}), 0.01, 14);
    const auto fs = compute_fpfh_feature(src, SearchParam::hybrid(0.25, 100));
    const auto ft = compute_fpfh_feature(tgt, SearchParam::hybrid(0.25, 100));
    const auto r = registration_ransac_based_on_feature_matching(
        src, tgt, fs, ft, 0.075, 4, {CorrespondenceChecker::edge_length(1.0)}, {20000, 500}, 3);
    CHECK(r.fitness == 0.0);
    CHECK(r.transformation.is_identity());
    CHECK(r.correspondences.empty());
}

TEST_CASE("RANSAC argument errors") {
    const auto src = test::bumpy_surface(50, 15);
    const auto f = compute_fpfh_feature(src, SearchParam::hybrid(0.25, 100));
    CHECK_THROWS_AS(registration_ransac_based_on_feature_matching(src, src, f, f, 0.075, 60, {}, {}, 0), InvalidArgument);
    CHECK_THROWS_AS(registration_ransac_based_on_feature_matching(src, src, f, f, 0.075, 2, {}, {}, 0), InvalidArgument);
    CHECK_THROWS_AS(registration_ransac_based_on_feature_matching(src, src, f, f, 0.075, 4, {}, {0, 5}, 0),
                    InvalidArgument);
    FeatureMatrix small = f.topRows(10);
    CHECK_THROWS_AS(registration_ransac_based_on_feature_matching(src, src, small, f, 0.075, 4, {}, {}, 0),
                    InvalidArgument);
    CHECK_THROWS_AS(CorrespondenceChecker::edge_length(0.0), InvalidArgument);
    CHECK_THROWS_AS(CorrespondenceChecker::distance(-1.0), InvalidArgument);
}

TEST_CASE("ICP: identical clouds converge immediately") {
    const auto cloud = test::bumpy_surface(500, 16);
    int calls = 0;
    const auto r = registration_icp(cloud, cloud, 0.02, {}, TransformationEstimation::kPointToPoint, {},
                                    [&](int, const RegistrationResult&) { ++calls; });
    CHECK(calls == 1);
    CHECK(r.fitness == 1.0);
    CHECK(r.inlier_rmse < 1e-12);
    CHECK((r.transformation.matrix() - Eigen::Matrix4d::Identity()).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("ICP point-to-point recovers a small motion with a monotone objective") {
    const auto target = test::bumpy_surface(3000, 17);
    const auto perturb = RigidTransform::from_rotation_translation(
        Eigen::AngleAxisd(test::rad(5.0), Eigen::Vector3d(1, 2, 3).normalized()).toRotationMatrix(), {0.02, -0.01, 0.01});
    // Source is the target moved by perturb^-1, so the answer is perturb.
    PointCloud source = transform(target, perturb.inverse());
    const double tau = 0.1;
    std::vector<double> objective = {truncated_objective(source, target, tau, {})};
    IcpCriteria criteria;
    criteria.max_iteration = 100;
    const auto r = registration_icp(source, target, tau, {}, TransformationEstimation::kPointToPoint, criteria,
                                    [&](int, const RegistrationResult& it) {
                                        objective.push_back(truncated_objective(source, target, tau, it.transformation));
                                        for (const auto& c : it.correspondences)
                                            CHECK((it.transformation * source.points[c[0]] - target.points[c[1]]).norm() <= tau);
                                    });
    CHECK(test::rotation_error_deg(r.transformation, perturb) < 0.1);
    CHECK(test::translation_error(r.transformation, perturb) < 1e-3);
    for (std::size_t k = 1; k < objective.size(); ++k) CHECK(objective[k] <= objective[k - 1] + 1e-12);
}

TEST_CASE("ICP point-to-plane refines a RANSAC result") {
    Xoshiro256 rng(18);
    const auto src = test::bumpy_surface(500, 19);
    const auto truth = test::random_motion(rng, std::numbers::pi, 1.0);
    const auto tgt = test::moved_copy(src, truth, 0.002, 20);
    const auto fs = compute_fpfh_feature(src, SearchParam::hybrid(0.25, 100));
    const auto ft = compute_fpfh_feature(tgt, SearchParam::hybrid(0.25, 100));
    const auto coarse = registration_ransac_based_on_feature_matching(
        src, tgt, fs, ft, 0.075, 4, {CorrespondenceChecker::edge_length(0.9), CorrespondenceChecker::distance(0.075)},
        {4000000, 500}, 7);
    const auto fine =
        registration_icp(src, tgt, 0.075, coarse.transformation, TransformationEstimation::kPointToPlane);
    CHECK(fine.inlier_rmse < coarse.inlier_rmse);
    CHECK(fine.fitness >= coarse.fitness);
}

TEST_CASE("ICP without correspondences reports fitness 0") {
    const auto cloud = test::bumpy_surface(100, 21);
    const auto r = registration_icp(cloud, cloud, 0.02, RigidTransform::from_translation({5, 0, 0}),
                                    TransformationEstimation::kPointToPoint);
    CHECK(r.fitness == 0.0);
    CHECK(r.transformation == RigidTransform::from_translation({5, 0, 0}));
    PointCloud no_normals;
    no_normals.points = cloud.points;
    CHECK_THROWS_AS(registration_icp(cloud, no_normals, 0.02, {}, TransformationEstimation::kPointToPlane),
                    InvalidArgument);
}
