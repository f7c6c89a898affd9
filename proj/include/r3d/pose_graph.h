#pragma once

#include <vector>

#include "r3d/rigid_transform.h"
#include "r3d/se3.h"
#include "r3d/solver.h"

namespace r3d {

/// Relative-pose measurement between two nodes.
///
/// `transformation` maps points from the source node's frame into the target
/// node's frame, so that it ideally equals T_target^-1 T_source. The residual
/// is e = log(Z^-1 T_target^-1 T_source) weighted by `information`.
struct PoseGraphEdge {
    int source = 0;
    int target = 0;
    RigidTransform transformation;
    Matrix6d information = Matrix6d::Identity();
    bool uncertain = false;
    double confidence = 1.0;
};

/// Nodes are poses mapping each node frame into the world frame.
struct PoseGraph {
    std::vector<RigidTransform> nodes;
    std::vector<PoseGraphEdge> edges;

    /// Throws InvalidArgument on bad endpoints, self loops, non-symmetric or
    /// indefinite information matrices and confidences outside [0, 1].
    void validate() const;
};

/// Edge residual twist log(Z^-1 T_target^-1 T_source).
Vector6d edge_residual(const PoseGraph& graph, const PoseGraphEdge& edge);

/// Pose-graph least squares over twists x = (x_1, ..., x_{N-1}) with
/// T_k = exp(x_k) T_k^0; node 0 has no parameters. Record e contributes
/// sqrt(w_e) Lambda_e^(1/2) e(x).
class PoseGraphResidualSystem : public ResidualSystem {
public:
    /// `weights` holds one factor per edge.
    PoseGraphResidualSystem(const PoseGraph& graph, std::vector<double> weights);

    int parameter_count() const override { return 6 * (static_cast<int>(graph_.nodes.size()) - 1); }
    int record_count() const override { return static_cast<int>(graph_.edges.size()); }
    void evaluate(int record, const Eigen::VectorXd& x, ResidualBlock& block) const override;

    /// Pose of node k at x.
    RigidTransform pose(const Eigen::VectorXd& x, int k) const;

private:
    const PoseGraph& graph_;
    std::vector<double> weights_;
    std::vector<Matrix6d> sqrt_information_;
};

struct GlobalOptimizationOption {
    /// Sets the line-process scale mu = max_correspondence_distance^2.
    double max_correspondence_distance = 0.075;
    /// Uncertain edges whose final confidence is below this are pruned.
    double preference_loop_closure = 0.25;
    /// LM iterations per outer round.
    int max_iteration = 100;
    int max_outer_rounds = 30;
    double gradient_tolerance = 1e-12;
    double lambda_init = 1e-4;
};

struct GlobalOptimizationResult {
    /// Optimized poses; uncertain edges carry their final confidence.
    PoseGraph graph;
    /// Indices of uncertain edges with confidence < preference_loop_closure.
    std::vector<int> pruned_edges;
    /// Robust objective after line-process initialization and after each round.
    std::vector<double> objective_trace;
    int outer_rounds = 0;
};

/// Robust pose-graph optimization with a line process on uncertain edges.
///
/// Objective: sum_certain e^T L e + sum_uncertain [l e^T L e + mu_e (sqrt(l) - 1)^2]
/// with mu_e = mu trace(L) / 6. Rounds alternate an LM solve at fixed l with
/// the closed-form update l = (mu_e / (mu_e + e^T L e))^2, so the objective
/// never increases. Node 0 is the gauge anchor and is returned bit for bit.
/// Throws InvalidArgument when the certain edges do not connect all nodes.
GlobalOptimizationResult global_optimization(const PoseGraph& graph, const GlobalOptimizationOption& option);

}  // namespace r3d
