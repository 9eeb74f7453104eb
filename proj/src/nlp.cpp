// SPDX-License-Identifier: Apache-2.0
#include "impdr/nlp.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <deque>
#include <limits>
#include <numeric>
#include <string>

#include "impdr/errors.hpp"

namespace impdr::nlp {

void NlpProblem::add_inequality(ScalarConstraint g) {
    InequalityBlock block;
    block.count = 1;
    block.values = [g](std::span<const double> x, std::span<double> out) {
        std::vector<double> scratch(x.size());
        out[0] = g(x, scratch);
    };
    block.accumulate_gradient = [g](std::span<const double> x, std::span<const double> w,
                                    std::span<double> grad) {
        std::vector<double> scratch(x.size());
        g(x, scratch);
        for (std::size_t i = 0; i < x.size(); ++i) grad[i] += w[0] * scratch[i];
    };
    inequalities.push_back(std::move(block));
}

std::size_t NlpProblem::constraint_count() const noexcept {
    std::size_t n = 0;
    for (const auto& b : inequalities) n += b.count;
    return n;
}

void NlpProblem::validate() const {
    if (!objective) throw ContractError("NLP objective is not set");
    if (lower.size() != dim || upper.size() != dim) {
        throw ContractError("NLP bounds must have length " + std::to_string(dim));
    }
    for (std::size_t i = 0; i < dim; ++i) {
        if (lower[i] > upper[i]) {
            throw ContractError("NLP bound " + std::to_string(i) + " has lower > upper");
        }
    }
    for (const auto& b : inequalities) {
        if (b.count > 0 && (!b.values || !b.accumulate_gradient)) {
            throw ContractError("inequality block is missing a callback");
        }
    }
}

void SolverConfig::validate() const {
    if (!(convergence_tol > 0.0)) throw ContractError("convergence_tol must be positive");
    if (!(feasibility_tol > 0.0)) throw ContractError("feasibility_tol must be positive");
    if (!(penalty_growth > 1.0)) throw ContractError("penalty_growth must exceed 1");
    if (!(penalty_init > 0.0)) throw ContractError("penalty_init must be positive");
    if (max_outer_iters < 1 || max_inner_iters < 1) {
        throw ContractError("iteration limits must be at least 1");
    }
    if (memory < 1) throw ContractError("L-BFGS memory must be at least 1");
}

std::string_view to_string(SolverStatus s) noexcept {
    switch (s) {
        case SolverStatus::converged: return "converged";
        case SolverStatus::stalled: return "stalled";
        case SolverStatus::iteration_capped: return "iteration-capped";
        case SolverStatus::wall_clock_capped: return "wall-clock-capped";
        case SolverStatus::degraded: return "degraded";
    }
    return "unknown";
}

namespace {

using Clock = std::chrono::steady_clock;

bool all_finite(std::span<const double> v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

double inf_norm(std::span<const double> v) {
    double m = 0.0;
    for (double x : v) m = std::max(m, std::abs(x));
    return m;
}

/// Augmented Lagrangian of the problem for fixed multipliers and penalty.
class Merit {
public:
    Merit(const NlpProblem& p, int& evaluations)
        : p_(p), evaluations_(evaluations), ncon_(p.constraint_count()), c_(ncon_), w_(ncon_),
          lambda_(ncon_, 0.0) {}

    [[nodiscard]] std::size_t constraint_count() const noexcept { return ncon_; }
    std::vector<double>& multipliers() noexcept { return lambda_; }
    double penalty{1.0};

    /// Constraint values at x, concatenated over blocks.
    void constraints(std::span<const double> x, std::span<double> out) const {
        std::size_t off = 0;
        for (const auto& b : p_.inequalities) {
            if (b.count == 0) continue;
            b.values(x, out.subspan(off, b.count));
            off += b.count;
        }
    }

    double objective_only(std::span<const double> x, std::span<double> grad) {
        ++evaluations_;
        return p_.objective(x, grad);
    }

    double operator()(std::span<const double> x, std::span<double> grad) {
        double f = objective_only(x, grad);
        if (ncon_ == 0) return f;
        constraints(x, c_);
        double extra = 0.0;
        for (std::size_t i = 0; i < ncon_; ++i) {
            const double shifted = lambda_[i] + penalty * c_[i];
            if (shifted > 0.0) {
                w_[i] = shifted;
                extra += shifted * shifted;
            } else {
                w_[i] = 0.0;
            }
            extra -= lambda_[i] * lambda_[i];
        }
        f += extra / (2.0 * penalty);
        std::size_t off = 0;
        for (const auto& b : p_.inequalities) {
            if (b.count == 0) continue;
            b.accumulate_gradient(x, std::span<const double>(w_).subspan(off, b.count), grad);
            off += b.count;
        }
        return f;
    }

private:
    const NlpProblem& p_;
    int& evaluations_;
    std::size_t ncon_;
    std::vector<double> c_;
    std::vector<double> w_;
    std::vector<double> lambda_;
};

enum class InnerStop { converged, stalled, iterations, wall_clock, non_finite };

struct InnerResult {
    InnerStop stop{InnerStop::iterations};
    double merit{0.0};
    double pg_norm{0.0};
    int iterations{0};
};

/// Projected L-BFGS on the box. The quasi-Newton direction is built on the
/// variables that are not held at a bound by the current gradient.
class ProjectedLbfgs {
public:
    ProjectedLbfgs(const NlpProblem& p, const SolverConfig& cfg, Clock::time_point start)
        : p_(p), cfg_(cfg), start_(start), n_(p.dim) {}

    InnerResult run(Merit& merit, std::vector<double>& x, double tol, int& total_iters) {
        InnerResult res;
        std::vector<double> g(n_), xt(n_), gt(n_), d(n_), pg(n_);
        std::vector<char> free(n_);
        double f = merit(x, g);
        if (!std::isfinite(f) || !all_finite(g)) {
            res.stop = InnerStop::non_finite;
            return res;
        }
        s_.clear();
        y_.clear();
        rho_.clear();

        for (int it = 0; it < cfg_.max_inner_iters; ++it) {
            projected_gradient(x, g, pg);
            res.pg_norm = inf_norm(pg);
            res.merit = f;
            if (res.pg_norm <= tol) {
                res.stop = InnerStop::converged;
                return res;
            }
            if (cfg_.wall_clock_cap &&
                std::chrono::duration<double>(Clock::now() - start_).count() >
                    *cfg_.wall_clock_cap) {
                res.stop = InnerStop::wall_clock;
                return res;
            }

            for (std::size_t i = 0; i < n_; ++i) {
                const bool at_lower = x[i] <= p_.lower[i] && g[i] > 0.0;
                const bool at_upper = x[i] >= p_.upper[i] && g[i] < 0.0;
                free[i] = !(at_lower || at_upper);
            }
            direction(g, free, d);
            double slope = dot_masked(g, d, free);
            if (!(slope < 0.0)) {
                clear_memory();
                for (std::size_t i = 0; i < n_; ++i) d[i] = free[i] ? -g[i] : 0.0;
                slope = dot_masked(g, d, free);
            }
            if (!(slope < 0.0)) {
                res.stop = InnerStop::converged;
                return res;
            }

            double alpha = 1.0;
            if (s_.empty()) alpha = std::min(1.0, 1.0 / std::max(inf_norm(d), 1e-300));

            bool accepted = false;
            double ft = f;
            bool saw_non_finite = false;
            for (int ls = 0; ls < 40; ++ls) {
                for (std::size_t i = 0; i < n_; ++i) {
                    xt[i] = std::clamp(x[i] + alpha * d[i], p_.lower[i], p_.upper[i]);
                }
                ft = merit(xt, gt);
                double decrease = 0.0;
                for (std::size_t i = 0; i < n_; ++i) decrease += g[i] * (xt[i] - x[i]);
                if (std::isfinite(ft) && all_finite(gt)) {
                    if (ft <= f + 1e-4 * decrease) {
                        accepted = true;
                        break;
                    }
                } else {
                    saw_non_finite = true;
                }
                alpha *= 0.5;
            }
            ++total_iters;
            ++res.iterations;

            if (!accepted) {
                if (!s_.empty()) {
                    clear_memory();
                    continue;
                }
                res.stop = saw_non_finite ? InnerStop::non_finite : InnerStop::stalled;
                return res;
            }

            double sy = 0.0, yy = 0.0;
            std::vector<double> s(n_), y(n_);
            for (std::size_t i = 0; i < n_; ++i) {
                s[i] = xt[i] - x[i];
                y[i] = gt[i] - g[i];
                sy += s[i] * y[i];
                yy += y[i] * y[i];
            }
            if (sy > 1e-12 * std::sqrt(yy) * std::sqrt(dot(s, s))) push_pair(std::move(s), std::move(y), sy);

            const double prev = f;
            x.swap(xt);
            g.swap(gt);
            f = ft;
            res.merit = f;
            if (cfg_.objective_rel_tol > 0.0 &&
                prev - f <= cfg_.objective_rel_tol * std::max({std::abs(f), std::abs(prev), 1.0})) {
                projected_gradient(x, g, pg);
                res.pg_norm = inf_norm(pg);
                res.stop = InnerStop::converged;
                return res;
            }
        }
        projected_gradient(x, g, pg);
        res.pg_norm = inf_norm(pg);
        res.stop = InnerStop::iterations;
        return res;
    }

private:
    static double dot(const std::vector<double>& a, const std::vector<double>& b) {
        return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
    }

    static double dot_masked(const std::vector<double>& a, const std::vector<double>& b,
                             const std::vector<char>& mask) {
        double s = 0.0;
        for (std::size_t i = 0; i < a.size(); ++i) {
            if (mask[i]) s += a[i] * b[i];
        }
        return s;
    }

    void projected_gradient(const std::vector<double>& x, const std::vector<double>& g,
                            std::vector<double>& pg) const {
        for (std::size_t i = 0; i < n_; ++i) {
            pg[i] = x[i] - std::clamp(x[i] - g[i], p_.lower[i], p_.upper[i]);
        }
    }

    void clear_memory() {
        s_.clear();
        y_.clear();
        rho_.clear();
    }

    void push_pair(std::vector<double> s, std::vector<double> y, double sy) {
        if (static_cast<int>(s_.size()) == cfg_.memory) {
            s_.pop_front();
            y_.pop_front();
            rho_.pop_front();
        }
        s_.push_back(std::move(s));
        y_.push_back(std::move(y));
        rho_.push_back(1.0 / sy);
    }

    /// Two-loop recursion restricted to the free variables.
    void direction(const std::vector<double>& g, const std::vector<char>& free,
                   std::vector<double>& d) {
        for (std::size_t i = 0; i < n_; ++i) d[i] = free[i] ? -g[i] : 0.0;
        const std::size_t m = s_.size();
        if (m == 0) return;
        std::vector<double> alpha(m);
        std::vector<double> rho(m);
        for (std::size_t k = 0; k < m; ++k) {
            const double sy = dot_masked(s_[k], y_[k], free);
            rho[k] = sy > 0.0 ? 1.0 / sy : 0.0;
        }
        for (std::size_t k = m; k-- > 0;) {
            if (rho[k] == 0.0) continue;
            alpha[k] = rho[k] * dot_masked(s_[k], d, free);
            for (std::size_t i = 0; i < n_; ++i) {
                if (free[i]) d[i] -= alpha[k] * y_[k][i];
            }
        }
        double gamma = 1.0;
        for (std::size_t k = m; k-- > 0;) {
            if (rho[k] == 0.0) continue;
            const double yy = dot_masked(y_[k], y_[k], free);
            if (yy > 0.0) gamma = 1.0 / (rho[k] * yy);
            break;
        }
        for (std::size_t i = 0; i < n_; ++i) d[i] *= gamma;
        for (std::size_t k = 0; k < m; ++k) {
            if (rho[k] == 0.0) continue;
            const double beta = rho[k] * dot_masked(y_[k], d, free);
            for (std::size_t i = 0; i < n_; ++i) {
                if (free[i]) d[i] += (alpha[k] - beta) * s_[k][i];
            }
        }
    }

    const NlpProblem& p_;
    const SolverConfig& cfg_;
    Clock::time_point start_;
    std::size_t n_;
    std::deque<std::vector<double>> s_;
    std::deque<std::vector<double>> y_;
    std::deque<double> rho_;
};

struct Incumbent {
    std::vector<double> x;
    double objective{std::numeric_limits<double>::infinity()};
    double violation{std::numeric_limits<double>::infinity()};
    double pg_norm{0.0};
    bool valid{false};

    void offer(const std::vector<double>& cand, double f, double viol, double pg, double feas_tol) {
        const bool cand_feasible = viol <= feas_tol;
        const bool cur_feasible = valid && violation <= feas_tol;
        bool better = !valid;
        if (!better) {
            if (cand_feasible && !cur_feasible) better = true;
            else if (cand_feasible && cur_feasible) better = f < objective;
            else if (!cand_feasible && !cur_feasible) better = viol < violation;
        }
        if (better) {
            x = cand;
            objective = f;
            violation = viol;
            pg_norm = pg;
            valid = true;
        }
    }
};

}  // namespace

SolverReport minimize(const NlpProblem& p, std::span<const double> x0, const SolverConfig& cfg) {
    p.validate();
    cfg.validate();
    if (x0.size() != p.dim) {
        throw ContractError("start point has length " + std::to_string(x0.size()) +
                            ", expected " + std::to_string(p.dim));
    }
    const auto start = Clock::now();
    SolverReport report;

    std::vector<double> x(p.dim);
    for (std::size_t i = 0; i < p.dim; ++i) x[i] = std::clamp(x0[i], p.lower[i], p.upper[i]);

    std::vector<double> grad(p.dim);
    {
        const double f0 = p.objective(x, grad);
        if (!std::isfinite(f0) || !all_finite(grad)) {
            throw InputError("objective or gradient is not finite at the start point");
        }
    }

    Merit merit(p, report.evaluations);
    merit.penalty = cfg.penalty_init;
    const std::size_t ncon = merit.constraint_count();
    std::vector<double> c(ncon);

    auto violation_at = [&](const std::vector<double>& pt) {
        if (ncon == 0) return 0.0;
        merit.constraints(pt, c);
        double v = 0.0;
        for (double ci : c) v = std::max(v, ci);
        return v;
    };
    auto objective_at = [&](const std::vector<double>& pt) { return merit.objective_only(pt, grad); };

    ProjectedLbfgs inner(p, cfg, start);
    Incumbent best;
    double prev_violation = violation_at(x);
    best.offer(x, objective_at(x), prev_violation, 0.0, cfg.feasibility_tol);
    double omega = ncon == 0 ? cfg.convergence_tol : std::max(cfg.convergence_tol, 1e-3);

    SolverStatus status = SolverStatus::iteration_capped;
    bool finished = false;
    for (int outer = 0; outer < cfg.max_outer_iters && !finished; ++outer) {
        OuterRecord rec;
        rec.penalty = merit.penalty;
        rec.merit_start = merit(x, grad);
        std::vector<double> x_prev = x;
        const auto res = inner.run(merit, x, omega, report.inner_iterations);
        ++report.outer_iterations;
        rec.inner_iterations = res.iterations;

        if (res.stop == InnerStop::non_finite) {
            x = x_prev;
            status = SolverStatus::degraded;
            rec.merit_end = rec.merit_start;
            rec.violation = violation_at(x);
            report.history.push_back(rec);
            break;
        }
        rec.merit_end = res.merit;
        const double viol = violation_at(x);
        rec.violation = viol;
        report.history.push_back(rec);
        best.offer(x, objective_at(x), viol, res.pg_norm, cfg.feasibility_tol);
        report.projected_gradient_norm = res.pg_norm;

        if (res.stop == InnerStop::wall_clock) {
            status = SolverStatus::wall_clock_capped;
            break;
        }
        const bool inner_done =
            res.stop == InnerStop::converged || res.stop == InnerStop::stalled;
        const bool at_final_tol = omega <= cfg.convergence_tol;
        if (viol <= cfg.feasibility_tol && inner_done && (at_final_tol || ncon == 0)) {
            status = res.stop == InnerStop::converged ? SolverStatus::converged
                                                      : SolverStatus::stalled;
            finished = true;
            break;
        }
        if (ncon == 0) {
            status = res.stop == InnerStop::iterations ? SolverStatus::iteration_capped
                                                       : SolverStatus::stalled;
            finished = true;
            break;
        }

        // First-order multiplier update, then penalty increase on slow feasibility progress.
        merit.constraints(x, c);
        auto& lambda = merit.multipliers();
        for (std::size_t i = 0; i < ncon; ++i) {
            lambda[i] = std::max(0.0, lambda[i] + merit.penalty * c[i]);
        }
        if (viol > cfg.feasibility_tol && viol > 0.25 * prev_violation) {
            merit.penalty = std::min(cfg.penalty_max, merit.penalty * cfg.penalty_growth);
        }
        prev_violation = viol;
        omega = std::max(cfg.convergence_tol, omega * 0.1);
    }

    const bool use_last = status == SolverStatus::converged || status == SolverStatus::stalled;
    if (use_last) {
        report.x = x;
        report.objective = objective_at(x);
        report.max_violation = violation_at(x);
    } else {
        report.x = best.x;
        report.objective = best.objective;
        report.max_violation = best.violation;
        if (status != SolverStatus::degraded && status != SolverStatus::wall_clock_capped) {
            report.projected_gradient_norm = std::max(report.projected_gradient_norm, best.pg_norm);
        }
    }
    report.status = status;
    report.wall_time = std::chrono::duration<double>(Clock::now() - start).count();
    return report;
}

double check_gradient(const Objective& f, std::span<const double> x, double h) {
    const std::size_t n = x.size();
    std::vector<double> g(n), scratch(n), xp(x.begin(), x.end());
    f(x, g);
    std::vector<double> fd(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double xi = xp[i];
        xp[i] = xi + h;
        const double fp = f(xp, scratch);
        xp[i] = xi - h;
        const double fm = f(xp, scratch);
        xp[i] = xi;
        fd[i] = (fp - fm) / (2.0 * h);
    }
    const double floor = 1e-6 * std::max(1.0, inf_norm(fd));
    double worst = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        worst = std::max(worst, std::abs(g[i] - fd[i]) / std::max(std::abs(fd[i]), floor));
    }
    return worst;
}

double check_gradient(const NlpProblem& p, std::span<const double> x, double h) {
    return check_gradient(p.objective, x, h);
}

}  // namespace impdr::nlp
