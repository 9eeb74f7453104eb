// SPDX-License-Identifier: Apache-2.0
//
// Smooth bound-constrained minimization with nonlinear inequality constraints.
//
// The outer loop is a Powell-Hestenes-Rockafellar augmented Lagrangian over the
// inequalities g(x) <= 0; the inner loop is a projected limited-memory BFGS on
// the box. Everything is deterministic: no randomness, no threads.
#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

namespace impdr::nlp {

/// Returns f(x) and writes the full gradient into grad (same length as x).
using Objective = std::function<double(std::span<const double> x, std::span<double> grad)>;

/// A scalar inequality g(x) <= 0 with its gradient, same calling convention.
using ScalarConstraint = Objective;

/// A batch of inequalities sharing one evaluation. The solver only ever needs
/// J(x)^T w, so the block exposes that product instead of a dense Jacobian.
struct InequalityBlock {
    std::size_t count{0};
    std::function<void(std::span<const double> x, std::span<double> values)> values;
    /// grad += sum_i weights[i] * grad g_i(x)
    std::function<void(std::span<const double> x, std::span<const double> weights,
                       std::span<double> grad)>
        accumulate_gradient;
};

struct NlpProblem {
    std::size_t dim{0};
    Objective objective;
    std::vector<double> lower;
    std::vector<double> upper;
    std::vector<InequalityBlock> inequalities;

    void add_inequality(ScalarConstraint g);
    [[nodiscard]] std::size_t constraint_count() const noexcept;
    void validate() const;
};

struct SolverConfig {
    int max_outer_iters{30};
    int max_inner_iters{500};
    double convergence_tol{1e-8};  // on the infinity norm of the projected gradient
    double feasibility_tol{1e-6};  // on max_i g_i(x)
    double objective_rel_tol{0.0};  // stop on relative decrease below this; 0 disables
    double penalty_init{10.0};
    double penalty_growth{10.0};
    double penalty_max{1e8};
    int memory{10};
    std::optional<double> wall_clock_cap;  // seconds

    void validate() const;
};

enum class SolverStatus {
    converged,
    stalled,  // line search can make no further progress; iterate is at numerical precision
    iteration_capped,
    wall_clock_capped,
    degraded,  // non-finite values appeared mid-run; best previous iterate returned
};

[[nodiscard]] std::string_view to_string(SolverStatus s) noexcept;

/// Augmented-Lagrangian merit before and after one inner solve (same multipliers).
struct OuterRecord {
    double merit_start{0.0};
    double merit_end{0.0};
    double penalty{0.0};
    double violation{0.0};
    int inner_iterations{0};
};

struct SolverReport {
    std::vector<double> x;
    double objective{0.0};
    SolverStatus status{SolverStatus::iteration_capped};
    double max_violation{0.0};
    double projected_gradient_norm{0.0};
    int outer_iterations{0};
    int inner_iterations{0};
    int evaluations{0};
    double wall_time{0.0};  // seconds
    std::vector<OuterRecord> history;

    [[nodiscard]] bool acceptable(double feasibility_tol) const noexcept {
        return status != SolverStatus::degraded && max_violation <= feasibility_tol;
    }
};

/// Minimizes p from x0 (projected onto the box first).
/// Throws InputError if the objective or its gradient is non-finite at the start point.
[[nodiscard]] SolverReport minimize(const NlpProblem& p, std::span<const double> x0,
                                    const SolverConfig& cfg = {});

/// Largest componentwise relative error between the analytic gradient and a
/// central difference with step h:
///   |g_i - fd_i| / max(|fd_i|, 1e-6 * max(1, max_j |fd_j|)).
[[nodiscard]] double check_gradient(const Objective& f, std::span<const double> x,
                                    double h = 1e-5);
[[nodiscard]] double check_gradient(const NlpProblem& p, std::span<const double> x,
                                    double h = 1e-5);

}  // namespace impdr::nlp
