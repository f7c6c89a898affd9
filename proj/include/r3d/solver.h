#pragma once

#include <Eigen/Core>
#include <string>
#include <vector>

namespace r3d {

/// Residuals of one record and their Jacobian restricted to the parameter
/// indices listed in `columns` (residuals.size() x columns.size()).
struct ResidualBlock {
    Eigen::VectorXd residuals;
    Eigen::MatrixXd jacobian;
    std::vector<int> columns;
};

/// A least-squares problem L(x) = sum_i |r_i(x)|^2 over records i.
///
/// `evaluate` is called concurrently for distinct records and must not
/// mutate shared state.
class ResidualSystem {
public:
    virtual ~ResidualSystem() = default;
    virtual int parameter_count() const = 0;
    virtual int record_count() const = 0;
    virtual void evaluate(int record, const Eigen::VectorXd& x, ResidualBlock& block) const = 0;
};

/// r = A x - b, one record per row.
class LinearResidualSystem : public ResidualSystem {
public:
    LinearResidualSystem(Eigen::MatrixXd a, Eigen::VectorXd b);
    int parameter_count() const override { return static_cast<int>(a_.cols()); }
    int record_count() const override { return static_cast<int>(a_.rows()); }
    void evaluate(int record, const Eigen::VectorXd& x, ResidualBlock& block) const override;

private:
    Eigen::MatrixXd a_;
    Eigen::VectorXd b_;
};

/// r = (10 (x1 - x0^2), 1 - x0) as a single record; minimum at (1, 1).
class RosenbrockResidualSystem : public ResidualSystem {
public:
    int parameter_count() const override { return 2; }
    int record_count() const override { return 1; }
    void evaluate(int record, const Eigen::VectorXd& x, ResidualBlock& block) const override;
};

struct NormalEquations {
    Eigen::MatrixXd jtj;
    Eigen::VectorXd jtr;
    double objective = 0.0;  // sum of squared residuals
    bool finite = true;
};

/// J^T J, J^T r and L(x), summed over records with deterministic_reduce.
NormalEquations build_normal_equations(const ResidualSystem& system, const Eigen::VectorXd& x);

/// L(x) alone, with the same reduction order as build_normal_equations.
double evaluate_objective(const ResidualSystem& system, const Eigen::VectorXd& x);

enum class Termination { kConverged, kMaxIterations, kSingularSystem, kNonFinite };

std::string to_string(Termination t);

struct SolverReport {
    Eigen::VectorXd x;
    /// objective_trace[k] = L(iterates[k]); iterates[0] = x0, back() = x.
    std::vector<double> objective_trace;
    std::vector<Eigen::VectorXd> iterates;
    Termination termination = Termination::kMaxIterations;
    int iterations = 0;
};

/// x <- x - (J^T J)^-1 J^T r until |J^T r|_inf < gradient_tolerance.
SolverReport gauss_newton_solve(const ResidualSystem& system, const Eigen::VectorXd& x0, int max_iteration,
                                double gradient_tolerance);

/// Damped step (J^T J + lambda diag(J^T J))^-1 J^T r; lambda halves when a
/// step lowers L and doubles otherwise, up to 10 trials per iteration. Only
/// decreasing steps are taken. If no trial decreases L the solver reports
/// convergence.
SolverReport levenberg_marquardt_solve(const ResidualSystem& system, const Eigen::VectorXd& x0, int max_iteration,
                                       double gradient_tolerance, double lambda_init);

}  // namespace r3d
