#pragma once

#include <Eigen/Core>

#include "r3d/kdtree.h"
#include "r3d/point_cloud.h"

namespace r3d {

inline constexpr int kFpfhBins = 11;
inline constexpr int kFpfhDimension = 3 * kFpfhBins;

/// One 33-bin FPFH descriptor per row, row i describing point i. Rows are
/// contiguous, so the buffer doubles as packed input for a KDTree.
using FeatureMatrix = Eigen::Matrix<double, Eigen::Dynamic, kFpfhDimension, Eigen::RowMajor>;

/// Darboux-frame angles of one point pair. `valid` is false for coincident
/// points and for pairs whose connecting line is parallel to the source normal.
struct PairFeature {
    double alpha = 0.0;  // v . n_t, in [-1, 1]
    double phi = 0.0;    // u . d / |d|, in [-1, 1]
    double theta = 0.0;  // atan2(w . n_t, u . n_t), in [-pi, pi]
    bool valid = false;
};

/// The point whose normal makes the smaller angle with the connecting line
/// plays the source role; the frame is u = n_s, v = u x d/|d|, w = u x v.
PairFeature compute_pair_feature(const Eigen::Vector3d& p1, const Eigen::Vector3d& n1,
                                 const Eigen::Vector3d& p2, const Eigen::Vector3d& n2);

/// Histogram bin of `value` among kFpfhBins uniform bins over [lo, hi]; the
/// last bin includes hi, out-of-range values clamp.
int fpfh_bin(double value, double lo, double hi);

/// Fast Point Feature Histograms.
///
/// SPFH(p): the (alpha, phi, theta) angles against each neighbor are binned
/// into three concatenated 11-bin histograms, each scaled to sum 100.
/// FPFH(p) = SPFH(p) + (1/k) * sum_k SPFH(q_k) / |p - q_k| over the k
/// neighbors of p. Points without neighbors get a zero row.
/// Requires unit normals and a Radius or Hybrid search.
FeatureMatrix compute_fpfh_feature(const PointCloud& cloud, const SearchParam& search);

}  // namespace r3d
