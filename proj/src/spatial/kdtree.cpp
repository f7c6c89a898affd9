#include "r3d/kdtree.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <utility>

#include "r3d/error.h"

namespace r3d {

SearchParam SearchParam::knn(int max_nn) {
    if (max_nn <= 0) throw InvalidArgument("max_nn must be positive");
    return SearchParam(Knn{max_nn});
}

SearchParam SearchParam::radius(double radius) {
    if (!(radius >= 0.0)) throw InvalidArgument("radius must be non-negative");
    return SearchParam(Radius{radius});
}

SearchParam SearchParam::hybrid(double radius, int max_nn) {
    if (!(radius >= 0.0)) throw InvalidArgument("radius must be non-negative");
    if (max_nn <= 0) throw InvalidArgument("max_nn must be positive");
    return SearchParam(Hybrid{radius, max_nn});
}

namespace {

inline double squared_distance(const double* a, const double* b, int dim) {
    double s = 0.0;
    for (int d = 0; d < dim; ++d) {
        const double diff = a[d] - b[d];
        s += diff * diff;
    }
    return s;
}

using Entry = std::pair<double, int>;  // (squared distance, index), lexicographic

// Bounded max-heap on (distance, index).
class KnnResults {
public:
    KnnResults(int max_nn, double bound2) : max_nn_(static_cast<std::size_t>(max_nn)), bound2_(bound2) {
        heap_.reserve(max_nn_);
    }

    double worst() const { return heap_.size() < max_nn_ ? bound2_ : heap_.front().first; }

    void add(double d2, int index) {
        if (d2 > bound2_) return;
        if (heap_.size() < max_nn_) {
            heap_.emplace_back(d2, index);
            std::push_heap(heap_.begin(), heap_.end());
        } else if (Entry(d2, index) < heap_.front()) {
            std::pop_heap(heap_.begin(), heap_.end());
            heap_.back() = Entry(d2, index);
            std::push_heap(heap_.begin(), heap_.end());
        }
    }

    std::vector<Entry>& entries() { return heap_; }

private:
    std::size_t max_nn_;
    double bound2_;
    std::vector<Entry> heap_;
};

class RadiusResults {
public:
    explicit RadiusResults(double bound2) : bound2_(bound2) {}
    double worst() const { return bound2_; }
    void add(double d2, int index) {
        if (d2 <= bound2_) entries_.emplace_back(d2, index);
    }
    std::vector<Entry>& entries() { return entries_; }

private:
    double bound2_;
    std::vector<Entry> entries_;
};

}  // namespace

KDTree::KDTree(std::span<const Eigen::Vector3d> points) : dimension_(3), count_(points.size()) {
    if (points.empty()) throw InvalidArgument("cannot build a KD-tree over zero points");
    data_.resize(count_ * 3);
    for (std::size_t i = 0; i < count_; ++i) {
        data_[3 * i + 0] = points[i].x();
        data_[3 * i + 1] = points[i].y();
        data_[3 * i + 2] = points[i].z();
    }
    build();
}

KDTree::KDTree(const Eigen::MatrixXd& points)
    : dimension_(static_cast<int>(points.rows())), count_(static_cast<std::size_t>(points.cols())) {
    if (points.cols() == 0 || points.rows() == 0)
        throw InvalidArgument("cannot build a KD-tree over zero points");
    // Column-major storage already places each point contiguously.
    data_.assign(points.data(), points.data() + points.size());
    build();
}

KDTree::KDTree(std::span<const double> packed, int dimension) : dimension_(dimension) {
    if (dimension <= 0) throw InvalidArgument("dimension must be positive");
    if (packed.empty() || packed.size() % static_cast<std::size_t>(dimension) != 0)
        throw InvalidArgument("packed point buffer is empty or not a multiple of the dimension");
    count_ = packed.size() / static_cast<std::size_t>(dimension);
    data_.assign(packed.begin(), packed.end());
    build();
}

void KDTree::build() {
    order_.resize(count_);
    std::iota(order_.begin(), order_.end(), 0);
    nodes_.reserve(2 * (count_ / kLeafSize + 1));
    build_node(0, static_cast<int>(count_));
}

int KDTree::build_node(int begin, int end) {
    const int id = static_cast<int>(nodes_.size());
    nodes_.push_back(Node{begin, end});
    if (end - begin <= kLeafSize) return id;

    int axis = 0;
    double widest = -1.0;
    for (int d = 0; d < dimension_; ++d) {
        double lo = std::numeric_limits<double>::infinity();
        double hi = -lo;
        for (int i = begin; i < end; ++i) {
            const double v = point(order_[i])[d];
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
        if (hi - lo > widest) {
            widest = hi - lo;
            axis = d;
        }
    }

    const int mid = begin + (end - begin) / 2;
    std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                     [&](int a, int b) {
                         const double va = point(a)[axis];
                         const double vb = point(b)[axis];
                         return va < vb || (va == vb && a < b);
                     });
    const double split = point(order_[mid])[axis];
    const int left = build_node(begin, mid);
    const int right = build_node(mid, end);
    Node& node = nodes_[id];
    node.left = left;
    node.right = right;
    node.axis = axis;
    node.split = split;
    return id;
}

std::size_t KDTree::max_leaf_population() const {
    std::size_t m = 0;
    for (const Node& n : nodes_) {
        if (n.leaf()) m = std::max(m, static_cast<std::size_t>(n.end - n.begin));
    }
    return m;
}

template <typename ResultSet>
void KDTree::search_node(int id, const double* query, ResultSet& results) const {
    const Node& node = nodes_[id];
    if (node.leaf()) {
        for (int i = node.begin; i < node.end; ++i) {
            const int index = order_[i];
            results.add(squared_distance(query, point(index), dimension_), index);
        }
        return;
    }
    // Left holds coordinates <= split, right >= split.
    const double diff = query[node.axis] - node.split;
    const int near = diff < 0.0 ? node.left : node.right;
    const int far = diff < 0.0 ? node.right : node.left;
    search_node(near, query, results);
    if (diff * diff <= results.worst()) search_node(far, query, results);
}

int KDTree::search(std::span<const double> query, const SearchParam& param, std::vector<int>& indices,
                   std::vector<double>& distances2) const {
    if (static_cast<int>(query.size()) != dimension_)
        throw InvalidArgument("query dimension " + std::to_string(query.size()) +
                              " does not match tree dimension " + std::to_string(dimension_));
    std::vector<Entry> found;
    std::visit(
        [&](const auto& mode) {
            using Mode = std::decay_t<decltype(mode)>;
            if constexpr (std::is_same_v<Mode, SearchParam::Radius>) {
                RadiusResults results(mode.radius * mode.radius);
                search_node(0, query.data(), results);
                found = std::move(results.entries());
            } else {
                double bound2 = std::numeric_limits<double>::infinity();
                if constexpr (std::is_same_v<Mode, SearchParam::Hybrid>) bound2 = mode.radius * mode.radius;
                KnnResults results(mode.max_nn, bound2);
                search_node(0, query.data(), results);
                found = std::move(results.entries());
            }
        },
        param.mode());
    std::sort(found.begin(), found.end());
    indices.resize(found.size());
    distances2.resize(found.size());
    for (std::size_t i = 0; i < found.size(); ++i) {
        distances2[i] = found[i].first;
        indices[i] = found[i].second;
    }
    return static_cast<int>(found.size());
}

}  // namespace r3d
