#include <Eigen/Geometry>
#include <algorithm>
#include <cmath>
#include <numbers>

#include "r3d/error.h"
#include "r3d/features.h"
#include "r3d/parallel.h"

namespace r3d {

namespace {
constexpr double kCoincident = 1e-12;
}

PairFeature compute_pair_feature(const Eigen::Vector3d& p1, const Eigen::Vector3d& n1, const Eigen::Vector3d& p2,
                                 const Eigen::Vector3d& n2) {
    PairFeature f;
    Eigen::Vector3d d = p2 - p1;
    const double dist = d.norm();
    if (dist < kCoincident) return f;
    d /= dist;

    const Eigen::Vector3d* source = &n1;
    const Eigen::Vector3d* target = &n2;
    if (std::abs(n1.dot(d)) < std::abs(n2.dot(d))) {
        std::swap(source, target);
        d = -d;
    }
    const Eigen::Vector3d& u = *source;
    Eigen::Vector3d v = u.cross(d);
    const double v_norm = v.norm();
    if (v_norm < kCoincident) return f;
    v /= v_norm;
    const Eigen::Vector3d w = u.cross(v);

    f.alpha = v.dot(*target);
    f.phi = u.dot(d);
    f.theta = std::atan2(w.dot(*target), u.dot(*target));
    f.valid = true;
    return f;
}

int fpfh_bin(double value, double lo, double hi) {
    const int bin = static_cast<int>(std::floor(kFpfhBins * (value - lo) / (hi - lo)));
    return std::clamp(bin, 0, kFpfhBins - 1);
}

FeatureMatrix compute_fpfh_feature(const PointCloud& cloud, const SearchParam& search) {
    if (!cloud.has_normals()) throw InvalidArgument("FPFH needs a cloud with normals");
    if (std::holds_alternative<SearchParam::Knn>(search.mode()))
        throw InvalidArgument("FPFH needs a Radius or Hybrid search");
    const std::size_t n = cloud.size();
    const KDTree tree(cloud.points);

    // Neighbors other than the point itself, with distances.
    std::vector<std::vector<int>> neighbors(n);
    std::vector<std::vector<double>> distances(n);
    FeatureMatrix spfh = FeatureMatrix::Zero(static_cast<Eigen::Index>(n), kFpfhDimension);

    parallel_for(static_cast<std::ptrdiff_t>(n), [&](std::ptrdiff_t i) {
        thread_local std::vector<int> idx;
        thread_local std::vector<double> d2;
        tree.search(cloud.points[i], search, idx, d2);
        auto& nb = neighbors[i];
        auto& dist = distances[i];
        for (std::size_t k = 0; k < idx.size(); ++k) {
            if (idx[k] == static_cast<int>(i)) continue;
            const double d = std::sqrt(d2[k]);
            if (d < kCoincident) continue;
            nb.push_back(idx[k]);
            dist.push_back(d);
        }

        int valid = 0;
        Eigen::Matrix<double, 1, kFpfhDimension> hist = Eigen::Matrix<double, 1, kFpfhDimension>::Zero();
        for (int j : nb) {
            const PairFeature f = compute_pair_feature(cloud.points[i], cloud.normals[i], cloud.points[j], cloud.normals[j]);
            if (!f.valid) continue;
            hist[fpfh_bin(f.alpha, -1.0, 1.0)] += 1.0;
            hist[kFpfhBins + fpfh_bin(f.phi, -1.0, 1.0)] += 1.0;
            hist[2 * kFpfhBins + fpfh_bin(f.theta, -std::numbers::pi, std::numbers::pi)] += 1.0;
            ++valid;
        }
        if (valid > 0) spfh.row(i) = hist * (100.0 / valid);
    });

    FeatureMatrix fpfh(static_cast<Eigen::Index>(n), kFpfhDimension);
    parallel_for(static_cast<std::ptrdiff_t>(n), [&](std::ptrdiff_t i) {
        const auto& nb = neighbors[i];
        Eigen::Matrix<double, 1, kFpfhDimension> acc = Eigen::Matrix<double, 1, kFpfhDimension>::Zero();
        for (std::size_t k = 0; k < nb.size(); ++k) acc += spfh.row(nb[k]) / distances[i][k];
        fpfh.row(i) = spfh.row(i);
        if (!nb.empty()) fpfh.row(i) += acc / static_cast<double>(nb.size());
    });
    return fpfh;
}

}  // namespace r3d
