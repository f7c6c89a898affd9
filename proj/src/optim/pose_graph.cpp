#include "r3d/pose_graph.h"

#include <Eigen/Eigenvalues>
#include <cmath>
#include <numeric>

#include "r3d/error.h"

namespace r3d {

namespace {

constexpr double kSymmetryTolerance = 1e-9;

Matrix6d matrix_sqrt(const Matrix6d& info) {
    const Eigen::SelfAdjointEigenSolver<Matrix6d> es(info);
    const Vector6d s = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    return es.eigenvectors() * s.asDiagonal() * es.eigenvectors().transpose();
}

int find_root(std::vector<int>& parent, int k) {
    while (parent[k] != k) k = parent[k] = parent[parent[k]];
    return k;
}

bool certain_edges_connect(const PoseGraph& graph) {
    std::vector<int> parent(graph.nodes.size());
    std::iota(parent.begin(), parent.end(), 0);
    std::size_t components = graph.nodes.size();
    for (const auto& e : graph.edges) {
        if (e.uncertain) continue;
        const int a = find_root(parent, e.source), b = find_root(parent, e.target);
        if (a != b) {
            parent[a] = b;
            --components;
        }
    }
    return components <= 1;
}

double weighted_squared(const PoseGraph& graph, const PoseGraphEdge& e) {
    const Vector6d r = edge_residual(graph, e);
    return r.dot(e.information * r);
}

double line_process(double mu_e, double e2) {
    if (mu_e <= 0.0) return 0.0;
    const double l = mu_e / (mu_e + e2);
    return l * l;
}

}  // namespace

void PoseGraph::validate() const {
    const int n = static_cast<int>(nodes.size());
    for (const auto& e : edges) {
        if (e.source < 0 || e.source >= n || e.target < 0 || e.target >= n)
            throw InvalidArgument("pose graph edge endpoint out of range");
        if (e.source == e.target) throw InvalidArgument("pose graph edge is a self loop");
        if (!e.information.allFinite()) throw InvalidArgument("information matrix is not finite");
        const double scale = std::max(1.0, e.information.cwiseAbs().maxCoeff());
        if ((e.information - e.information.transpose()).cwiseAbs().maxCoeff() > kSymmetryTolerance * scale)
            throw InvalidArgument("information matrix is not symmetric");
        const Eigen::SelfAdjointEigenSolver<Matrix6d> es(e.information, Eigen::EigenvaluesOnly);
        if (es.eigenvalues().minCoeff() < -kSymmetryTolerance * scale)
            throw InvalidArgument("information matrix is not positive semidefinite");
        if (!(e.confidence >= 0.0 && e.confidence <= 1.0)) throw InvalidArgument("edge confidence outside [0, 1]");
    }
}

Vector6d edge_residual(const PoseGraph& graph, const PoseGraphEdge& edge) {
    return se3_log(edge.transformation.inverse() * graph.nodes[edge.target].inverse() * graph.nodes[edge.source]);
}

PoseGraphResidualSystem::PoseGraphResidualSystem(const PoseGraph& graph, std::vector<double> weights)
    : graph_(graph), weights_(std::move(weights)) {
    if (graph_.nodes.empty()) throw InvalidArgument("pose graph has no nodes");
    if (weights_.size() != graph_.edges.size()) throw InvalidArgument("one weight per edge expected");
    sqrt_information_.reserve(graph_.edges.size());
    for (const auto& e : graph_.edges) sqrt_information_.push_back(matrix_sqrt(e.information));
}

RigidTransform PoseGraphResidualSystem::pose(const Eigen::VectorXd& x, int k) const {
    if (k == 0) return graph_.nodes[0];
    return se3_exp(x.segment<6>(6 * (k - 1))) * graph_.nodes[k];
}

void PoseGraphResidualSystem::evaluate(int record, const Eigen::VectorXd& x, ResidualBlock& block) const {
    const PoseGraphEdge& edge = graph_.edges[record];
    const int s = edge.source, t = edge.target;
    const RigidTransform z_inv = edge.transformation.inverse();
    const RigidTransform ts = pose(x, s);
    const RigidTransform tt = pose(x, t);
    const Vector6d e = se3_log(z_inv * tt.inverse() * ts);
    const Matrix6d jinv = se3_left_jacobian_inverse(e);
    const Matrix6d w = std::sqrt(weights_[record]) * sqrt_information_[record];

    block.residuals = w * e;
    block.columns.clear();
    const int ncols = (s > 0 ? 6 : 0) + (t > 0 ? 6 : 0);
    block.jacobian.resize(6, ncols);
    int col = 0;
    if (s > 0) {
        const Vector6d xs = x.segment<6>(6 * (s - 1));
        block.jacobian.middleCols<6>(col) = w * jinv * adjoint(z_inv * tt.inverse()) * se3_left_jacobian(xs);
        for (int k = 0; k < 6; ++k) block.columns.push_back(6 * (s - 1) + k);
        col += 6;
    }
    if (t > 0) {
        const Vector6d xt = x.segment<6>(6 * (t - 1));
        block.jacobian.middleCols<6>(col) =
            -w * jinv * adjoint(z_inv * graph_.nodes[t].inverse()) * se3_left_jacobian(Vector6d(-xt));
        for (int k = 0; k < 6; ++k) block.columns.push_back(6 * (t - 1) + k);
    }
}

GlobalOptimizationResult global_optimization(const PoseGraph& graph, const GlobalOptimizationOption& option) {
    graph.validate();
    if (graph.nodes.empty()) throw InvalidArgument("pose graph has no nodes");
    if (!(option.max_correspondence_distance > 0.0))
        throw InvalidArgument("max_correspondence_distance must be positive");
    if (!(option.preference_loop_closure >= 0.0 && option.preference_loop_closure <= 1.0))
        throw InvalidArgument("preference_loop_closure must lie in [0, 1]");
    if (option.max_iteration < 0 || option.max_outer_rounds < 1) throw InvalidArgument("bad iteration limits");
    if (!certain_edges_connect(graph)) throw InvalidArgument("certain edges do not connect the pose graph");

    GlobalOptimizationResult result;
    result.graph = graph;
    PoseGraph& g = result.graph;
    const std::size_t m = g.edges.size();
    const double mu = option.max_correspondence_distance * option.max_correspondence_distance;
    std::vector<double> mu_e(m, 0.0);
    std::vector<double> l(m, 1.0);

    auto robust_objective = [&]() {
        double f = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
            const double e2 = weighted_squared(g, g.edges[i]);
            if (!g.edges[i].uncertain) {
                f += e2;
            } else {
                const double r = std::sqrt(l[i]) - 1.0;
                f += l[i] * e2 + mu_e[i] * r * r;
            }
        }
        return f;
    };
    // Returns the largest confidence change.
    auto update_line_process = [&]() {
        double change = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
            if (!g.edges[i].uncertain) continue;
            const double next = line_process(mu_e[i], weighted_squared(g, g.edges[i]));
            change = std::max(change, std::abs(next - l[i]));
            l[i] = next;
        }
        return change;
    };

    for (std::size_t i = 0; i < m; ++i) {
        if (g.edges[i].uncertain) mu_e[i] = mu * g.edges[i].information.trace() / 6.0;
    }
    update_line_process();
    result.objective_trace.push_back(robust_objective());

    if (g.nodes.size() > 1 && m > 0) {
        const int dim = 6 * (static_cast<int>(g.nodes.size()) - 1);
        for (int round = 0; round < option.max_outer_rounds; ++round) {
            const PoseGraphResidualSystem system(g, l);
            const SolverReport report = levenberg_marquardt_solve(system, Eigen::VectorXd::Zero(dim),
                                                                  option.max_iteration, option.gradient_tolerance,
                                                                  option.lambda_init);
            if (report.termination == Termination::kNonFinite)
                throw DegenerateInput("pose graph optimization produced non-finite values");
            const std::vector<RigidTransform> saved_nodes = g.nodes;
            const std::vector<double> saved_l = l;
            for (std::size_t k = 1; k < g.nodes.size(); ++k) g.nodes[k] = system.pose(report.x, static_cast<int>(k));

            const double change = update_line_process();
            const double before = result.objective_trace.back();
            const double after = robust_objective();
            // The l update is a closed-form minimizer, so only rounding can
            // raise the objective; such a round is undone and ends the loop.
            if (after > before) {
                g.nodes = saved_nodes;
                l = saved_l;
                break;
            }
            ++result.outer_rounds;
            result.objective_trace.push_back(after);
            if (change < 1e-9 || before - after <= 1e-14 * std::max(1.0, before)) break;
        }
    }

    for (std::size_t i = 0; i < m; ++i) {
        if (!g.edges[i].uncertain) continue;
        g.edges[i].confidence = l[i];
        if (l[i] < option.preference_loop_closure) result.pruned_edges.push_back(static_cast<int>(i));
    }
    return result;
}

}  // namespace r3d
