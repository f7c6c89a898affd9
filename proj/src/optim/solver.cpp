#include "r3d/solver.h"

#include <Eigen/Cholesky>
#include <cmath>

#include "r3d/error.h"
#include "r3d/parallel.h"

namespace r3d {

namespace {

constexpr int kMaxTrials = 10;
// Relative pivot threshold of the LDLT singularity guard.
constexpr double kPivotTolerance = 1e-12;

void check_dimensions(const ResidualSystem& system, const Eigen::VectorXd& x) {
    if (system.parameter_count() <= 0) throw InvalidArgument("residual system has no parameters");
    if (x.size() != system.parameter_count()) throw InvalidArgument("x0 size does not match the parameter count");
    if (system.record_count() < 0) throw InvalidArgument("negative record count");
}

void check_block(const ResidualBlock& b, int m) {
    if (b.jacobian.rows() != b.residuals.size() || b.jacobian.cols() != static_cast<Eigen::Index>(b.columns.size()))
        throw InvalidArgument("residual block has inconsistent dimensions");
    for (int c : b.columns)
        if (c < 0 || c >= m) throw InvalidArgument("residual block column out of range");
}

// Solves a x = b; false if the factorization is singular or the result is not finite.
bool solve_symmetric(const Eigen::MatrixXd& a, const Eigen::VectorXd& b, Eigen::VectorXd& x) {
    const Eigen::LDLT<Eigen::MatrixXd> ldlt(a);
    if (ldlt.info() != Eigen::Success) return false;
    const Eigen::VectorXd d = ldlt.vectorD().cwiseAbs();
    const double dmax = d.maxCoeff();
    if (!(dmax > 0.0) || d.minCoeff() <= kPivotTolerance * dmax) return false;
    x = ldlt.solve(b);
    return x.allFinite();
}

}  // namespace

LinearResidualSystem::LinearResidualSystem(Eigen::MatrixXd a, Eigen::VectorXd b) : a_(std::move(a)), b_(std::move(b)) {
    if (a_.rows() != b_.size()) throw InvalidArgument("A and b have different row counts");
}

void LinearResidualSystem::evaluate(int record, const Eigen::VectorXd& x, ResidualBlock& block) const {
    const Eigen::Index n = a_.cols();
    block.residuals.resize(1);
    block.residuals[0] = a_.row(record).dot(x) - b_[record];
    block.jacobian = a_.row(record);
    block.columns.resize(n);
    for (Eigen::Index c = 0; c < n; ++c) block.columns[c] = static_cast<int>(c);
}

void RosenbrockResidualSystem::evaluate(int, const Eigen::VectorXd& x, ResidualBlock& block) const {
    block.residuals.resize(2);
    block.residuals << 10.0 * (x[1] - x[0] * x[0]), 1.0 - x[0];
    block.jacobian.resize(2, 2);
    block.jacobian << -20.0 * x[0], 10.0, -1.0, 0.0;
    block.columns = {0, 1};
}

NormalEquations build_normal_equations(const ResidualSystem& system, const Eigen::VectorXd& x) {
    const int m = system.parameter_count();
    NormalEquations zero;
    zero.jtj = Eigen::MatrixXd::Zero(m, m);
    zero.jtr = Eigen::VectorXd::Zero(m);

    NormalEquations sum = deterministic_reduce(
        system.record_count(), zero,
        [&](NormalEquations& acc, std::ptrdiff_t i) {
            thread_local ResidualBlock block;
            system.evaluate(static_cast<int>(i), x, block);
            check_block(block, m);
            if (!block.residuals.allFinite() || !block.jacobian.allFinite()) {
                acc.finite = false;
                return;
            }
            const Eigen::MatrixXd jtj = block.jacobian.transpose() * block.jacobian;
            const Eigen::VectorXd jtr = block.jacobian.transpose() * block.residuals;
            const auto& cols = block.columns;
            for (std::size_t a = 0; a < cols.size(); ++a) {
                acc.jtr[cols[a]] += jtr[a];
                for (std::size_t b = 0; b < cols.size(); ++b) acc.jtj(cols[a], cols[b]) += jtj(a, b);
            }
            acc.objective += block.residuals.squaredNorm();
        },
        [](NormalEquations& a, const NormalEquations& b) {
            a.jtj += b.jtj;
            a.jtr += b.jtr;
            a.objective += b.objective;
            a.finite = a.finite && b.finite;
        });
    if (!std::isfinite(sum.objective)) sum.finite = false;
    return sum;
}

double evaluate_objective(const ResidualSystem& system, const Eigen::VectorXd& x) {
    return deterministic_reduce(
        system.record_count(), 0.0,
        [&](double& acc, std::ptrdiff_t i) {
            thread_local ResidualBlock block;
            system.evaluate(static_cast<int>(i), x, block);
            acc += block.residuals.squaredNorm();
        },
        [](double& a, double b) { a += b; });
}

std::string to_string(Termination t) {
    switch (t) {
        case Termination::kConverged: return "converged";
        case Termination::kMaxIterations: return "max-iterations";
        case Termination::kSingularSystem: return "singular-system";
        case Termination::kNonFinite: return "non-finite";
    }
    return "unknown";
}

SolverReport gauss_newton_solve(const ResidualSystem& system, const Eigen::VectorXd& x0, int max_iteration,
                                double gradient_tolerance) {
    check_dimensions(system, x0);
    if (max_iteration < 0) throw InvalidArgument("max_iteration must be non-negative");
    SolverReport report;
    report.x = x0;
    for (int it = 0;; ++it) {
        const NormalEquations ne = build_normal_equations(system, report.x);
        if (!ne.finite) {
            report.termination = Termination::kNonFinite;
            break;
        }
        report.objective_trace.push_back(ne.objective);
        report.iterates.push_back(report.x);
        if (ne.jtr.lpNorm<Eigen::Infinity>() < gradient_tolerance) {
            report.termination = Termination::kConverged;
            break;
        }
        if (it == max_iteration) {
            report.termination = Termination::kMaxIterations;
            break;
        }
        Eigen::VectorXd step;
        if (!solve_symmetric(ne.jtj, ne.jtr, step)) {
            report.termination = Termination::kSingularSystem;
            break;
        }
        report.x -= step;
        report.iterations = it + 1;
    }
    return report;
}

SolverReport levenberg_marquardt_solve(const ResidualSystem& system, const Eigen::VectorXd& x0, int max_iteration,
                                       double gradient_tolerance, double lambda_init) {
    check_dimensions(system, x0);
    if (max_iteration < 0) throw InvalidArgument("max_iteration must be non-negative");
    if (!(lambda_init > 0.0)) throw InvalidArgument("lambda_init must be positive");
    SolverReport report;
    report.x = x0;
    double lambda = lambda_init;

    NormalEquations ne = build_normal_equations(system, report.x);
    if (!ne.finite) {
        report.termination = Termination::kNonFinite;
        return report;
    }
    report.objective_trace.push_back(ne.objective);
    report.iterates.push_back(report.x);

    for (int it = 0;; ++it) {
        if (ne.jtr.lpNorm<Eigen::Infinity>() < gradient_tolerance) {
            report.termination = Termination::kConverged;
            return report;
        }
        if (it == max_iteration) {
            report.termination = Termination::kMaxIterations;
            return report;
        }
        const Eigen::VectorXd diag = ne.jtj.diagonal();
        const double floor = kPivotTolerance * std::max(1.0, diag.maxCoeff());
        bool accepted = false;
        bool any_solved = false;
        Eigen::VectorXd candidate;
        for (int trial = 0; trial < kMaxTrials && !accepted; ++trial) {
            Eigen::MatrixXd a = ne.jtj;
            for (Eigen::Index k = 0; k < a.rows(); ++k) a(k, k) += lambda * std::max(diag[k], floor);
            Eigen::VectorXd step;
            if (solve_symmetric(a, ne.jtr, step)) {
                any_solved = true;
                candidate = report.x - step;
                const double value = evaluate_objective(system, candidate);
                if (std::isfinite(value) && value < ne.objective) {
                    accepted = true;
                    lambda *= 0.5;
                    break;
                }
            }
            lambda *= 2.0;
        }
        if (!accepted) {
            report.termination = any_solved ? Termination::kConverged : Termination::kSingularSystem;
            return report;
        }
        NormalEquations next = build_normal_equations(system, candidate);
        if (!next.finite) {
            report.termination = Termination::kNonFinite;
            return report;
        }
        report.x = candidate;
        ne = std::move(next);
        report.objective_trace.push_back(ne.objective);
        report.iterates.push_back(report.x);
        report.iterations = it + 1;
    }
}

}  // namespace r3d
