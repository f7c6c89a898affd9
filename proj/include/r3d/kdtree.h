#pragma once

#include <Eigen/Core>
#include <span>
#include <variant>
#include <vector>

namespace r3d {

/// Neighbor query mode. Radius values are distances (not squared).
class SearchParam {
public:
    struct Knn {
        int max_nn;
    };
    struct Radius {
        double radius;
    };
    struct Hybrid {
        double radius;
        int max_nn;
    };

    /// The min(max_nn, n) nearest points.
    static SearchParam knn(int max_nn);
    /// Every point with distance <= radius.
    static SearchParam radius(double radius);
    /// The nearest points, at most max_nn, each with distance <= radius.
    static SearchParam hybrid(double radius, int max_nn);

    const std::variant<Knn, Radius, Hybrid>& mode() const { return mode_; }

private:
    explicit SearchParam(std::variant<Knn, Radius, Hybrid> mode) : mode_(mode) {}
    std::variant<Knn, Radius, Hybrid> mode_;
};

/// Exact, immutable KD-tree over k-dimensional points.
///
/// Nodes split at the median of the widest-spread axis (ties on coordinate
/// broken by lower point index) until at most kLeafSize points remain.
/// Query results are sorted by (squared distance, index), so equidistant
/// neighbors come back lowest index first, the same order a linear scan
/// with a stable sort produces. Safe for concurrent queries.
class KDTree {
public:
    static constexpr int kLeafSize = 16;

    /// 3D points. Throws InvalidArgument on empty input.
    explicit KDTree(std::span<const Eigen::Vector3d> points);
    /// One point per column. Throws InvalidArgument on empty input.
    explicit KDTree(const Eigen::MatrixXd& points);
    /// `packed` holds size() consecutive points of `dimension` coordinates each.
    KDTree(std::span<const double> packed, int dimension);

    int dimension() const { return dimension_; }
    std::size_t size() const { return count_; }

    /// Fills `indices` and `distances2` (squared) sorted ascending; returns the
    /// neighbor count. Throws InvalidArgument if query.size() != dimension().
    int search(std::span<const double> query, const SearchParam& param, std::vector<int>& indices,
               std::vector<double>& distances2) const;
    int search(const Eigen::Vector3d& query, const SearchParam& param, std::vector<int>& indices,
               std::vector<double>& distances2) const {
        return search(std::span<const double>(query.data(), 3), param, indices, distances2);
    }

    // Introspection for structural tests.
    std::size_t node_count() const { return nodes_.size(); }
    std::size_t max_leaf_population() const;
    /// Point indices in leaf order; a permutation of [0, size()).
    const std::vector<int>& leaf_order() const { return order_; }

private:
    struct Node {
        int begin = 0;
        int end = 0;
        int left = -1;
        int right = -1;
        int axis = 0;
        double split = 0.0;
        bool leaf() const { return left < 0; }
    };

    void build();
    int build_node(int begin, int end);
    const double* point(int index) const { return data_.data() + static_cast<std::size_t>(index) * dimension_; }

    template <typename ResultSet>
    void search_node(int node, const double* query, ResultSet& results) const;

    int dimension_ = 0;
    std::size_t count_ = 0;
    std::vector<double> data_;
    std::vector<int> order_;
    std::vector<Node> nodes_;
};

}  // namespace r3d
