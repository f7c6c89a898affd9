#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

#include "r3d/error.h"
#include "r3d/parallel.h"
#include "r3d/point_cloud.h"

namespace r3d {

namespace {

// Closed-form symmetric 3x3 eigensolver after D. Eberly, "A Robust
// Eigensolver for 3x3 Symmetric Matrices". The eigenvector of the eigenvalue
// that is best separated from the other two is computed first; the remaining
// ones are found in its orthogonal complement.

Eigen::Vector3d eigenvector_from_rows(const Eigen::Matrix3d& a, double eigenvalue) {
    const Eigen::Vector3d r0(a(0, 0) - eigenvalue, a(0, 1), a(0, 2));
    const Eigen::Vector3d r1(a(0, 1), a(1, 1) - eigenvalue, a(1, 2));
    const Eigen::Vector3d r2(a(0, 2), a(1, 2), a(2, 2) - eigenvalue);
    const Eigen::Vector3d r0xr1 = r0.cross(r1);
    const Eigen::Vector3d r0xr2 = r0.cross(r2);
    const Eigen::Vector3d r1xr2 = r1.cross(r2);
    const double d0 = r0xr1.squaredNorm();
    const double d1 = r0xr2.squaredNorm();
    const double d2 = r1xr2.squaredNorm();
    if (d0 >= d1 && d0 >= d2) return r0xr1 / std::sqrt(d0);
    if (d1 >= d2) return r0xr2 / std::sqrt(d1);
    return r1xr2 / std::sqrt(d2);
}

void orthogonal_complement(const Eigen::Vector3d& w, Eigen::Vector3d& u, Eigen::Vector3d& v) {
    if (std::abs(w.x()) > std::abs(w.y())) {
        const double inv = 1.0 / std::sqrt(w.x() * w.x() + w.z() * w.z());
        u = Eigen::Vector3d(-w.z() * inv, 0.0, w.x() * inv);
    } else {
        const double inv = 1.0 / std::sqrt(w.y() * w.y() + w.z() * w.z());
        u = Eigen::Vector3d(0.0, w.z() * inv, -w.y() * inv);
    }
    v = w.cross(u);
}

Eigen::Vector3d second_eigenvector(const Eigen::Matrix3d& a, const Eigen::Vector3d& first, double eigenvalue) {
    Eigen::Vector3d u, v;
    orthogonal_complement(first, u, v);
    const Eigen::Vector3d au = a * u;
    const Eigen::Vector3d av = a * v;
    double m00 = u.dot(au) - eigenvalue;
    double m01 = u.dot(av);
    double m11 = v.dot(av) - eigenvalue;
    const double abs00 = std::abs(m00);
    const double abs01 = std::abs(m01);
    const double abs11 = std::abs(m11);
    if (abs00 >= abs11) {
        if (std::max(abs00, abs01) <= 0.0) return u;
        if (abs00 >= abs01) {
            m01 /= m00;
            m00 = 1.0 / std::sqrt(1.0 + m01 * m01);
            m01 *= m00;
        } else {
            m00 /= m01;
            m01 = 1.0 / std::sqrt(1.0 + m00 * m00);
            m00 *= m01;
        }
        return m01 * u - m00 * v;
    }
    if (std::max(abs11, abs01) <= 0.0) return u;
    if (abs11 >= abs01) {
        m01 /= m11;
        m11 = 1.0 / std::sqrt(1.0 + m01 * m01);
        m01 *= m11;
    } else {
        m11 /= m01;
        m01 = 1.0 / std::sqrt(1.0 + m11 * m11);
        m11 *= m01;
    }
    return m11 * u - m01 * v;
}

void orient_largest_component_positive(Eigen::Vector3d& n) {
    int axis = 0;
    for (int d = 1; d < 3; ++d) {
        if (std::abs(n[d]) > std::abs(n[axis])) axis = d;
    }
    if (n[axis] < 0.0) n = -n;
}

}  // namespace

Eigen::Vector3d smallest_eigenvector(const Eigen::Matrix3d& symmetric) {
    const double scale = symmetric.cwiseAbs().maxCoeff();
    if (!(scale > 0.0)) return Eigen::Vector3d::UnitZ();
    const Eigen::Matrix3d a = symmetric / scale;

    const double off = a(0, 1) * a(0, 1) + a(0, 2) * a(0, 2) + a(1, 2) * a(1, 2);
    if (off == 0.0) {
        int axis = 0;
        for (int d = 1; d < 3; ++d) {
            if (a(d, d) < a(axis, axis)) axis = d;
        }
        return Eigen::Vector3d::Unit(axis);
    }

    const double q = a.trace() / 3.0;
    const double b00 = a(0, 0) - q;
    const double b11 = a(1, 1) - q;
    const double b22 = a(2, 2) - q;
    const double p = std::sqrt((b00 * b00 + b11 * b11 + b22 * b22 + 2.0 * off) / 6.0);
    const double c00 = b11 * b22 - a(1, 2) * a(1, 2);
    const double c01 = a(0, 1) * b22 - a(1, 2) * a(0, 2);
    const double c02 = a(0, 1) * a(1, 2) - b11 * a(0, 2);
    const double det = (b00 * c00 - a(0, 1) * c01 + a(0, 2) * c02) / (p * p * p);
    const double half_det = std::clamp(det * 0.5, -1.0, 1.0);
    const double angle = std::acos(half_det) / 3.0;
    constexpr double kTwoThirdsPi = 2.09439510239319549;
    const double beta2 = std::cos(angle) * 2.0;
    const double beta0 = std::cos(angle + kTwoThirdsPi) * 2.0;
    const double beta1 = -(beta0 + beta2);
    const double eval0 = q + p * beta0;
    const double eval1 = q + p * beta1;
    const double eval2 = q + p * beta2;

    if (half_det >= 0.0) {
        const Eigen::Vector3d evec2 = eigenvector_from_rows(a, eval2);
        const Eigen::Vector3d evec1 = second_eigenvector(a, evec2, eval1);
        return evec1.cross(evec2).normalized();
    }
    return eigenvector_from_rows(a, eval0);
}

std::size_t estimate_normals(PointCloud& cloud, const SearchParam& search) {
    if (cloud.size() < 3) throw InvalidArgument("normal estimation needs at least 3 points");
    const KDTree tree(cloud.points);
    std::vector<Eigen::Vector3d> normals(cloud.size());
    std::vector<unsigned char> fallback(cloud.size(), 0);

    parallel_for(static_cast<std::ptrdiff_t>(cloud.size()), [&](std::ptrdiff_t i) {
        thread_local std::vector<int> indices;
        thread_local std::vector<double> distances2;
        const int found = tree.search(cloud.points[i], search, indices, distances2);
        if (found < 3) {
            normals[i] = Eigen::Vector3d::UnitZ();
            fallback[i] = 1;
            return;
        }
        Eigen::Vector3d mean = Eigen::Vector3d::Zero();
        for (int k = 0; k < found; ++k) mean += cloud.points[indices[k]];
        mean /= found;
        Eigen::Matrix3d covariance = Eigen::Matrix3d::Zero();
        for (int k = 0; k < found; ++k) {
            const Eigen::Vector3d d = cloud.points[indices[k]] - mean;
            covariance += d * d.transpose();
        }
        covariance /= found;
        Eigen::Vector3d n = smallest_eigenvector(covariance);
        orient_largest_component_positive(n);
        normals[i] = n;
    });

    cloud.normals = std::move(normals);
    std::size_t degenerate = 0;
    for (unsigned char f : fallback) degenerate += f;
    return degenerate;
}

}  // namespace r3d
