// SPDX-License-Identifier: Apache-2.0
#include "impdr/planner.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <random>
#include <string>

#include "impdr/errors.hpp"

namespace impdr::mpc {

void PlannerConfig::validate() const {
    if (multistart_count < 1) throw ContractError("multistart_count must be at least 1");
    if (!(reward_noise_sigma >= 0.0)) throw ContractError("reward noise sigma must be >= 0");
    if (!(constraint_margin >= 0.0) || constraint_margin >= 0.5) {
        throw ContractError("constraint_margin must be in [0, 0.5)");
    }
    for (const auto& st : sensor_continuation) {
        if (!(st.cutoff_factor > 0.0) || !(st.degree >= 0.0)) {
            throw ContractError("sensor continuation stages need a positive cutoff factor");
        }
    }
    solver.validate();
}

void check_fleet(const FleetState& fleet) {
    const auto& lim = fleet.limits;
    if (!(lim.v_max > 0.0) || !(lim.a_max > 0.0) || !(lim.d_min >= 0.0)) {
        throw ContractError("motion limits must be positive");
    }
    for (std::size_t j = 0; j < fleet.size(); ++j) {
        const auto& s = fleet.vehicles[j];
        if (!s.position.allFinite() || !s.velocity.allFinite()) {
            throw ContractError("vehicle " + std::to_string(j) + " has a non-finite state");
        }
        if (s.velocity.norm() > lim.v_max + 1e-6) {
            throw ContractError("vehicle " + std::to_string(j) + " starts above v_max");
        }
    }
    const auto pd = pairwise_min_distance(fleet);
    if (pd.distance < lim.d_min * (1.0 - 1e-9)) {
        throw ContractError("vehicles " + std::to_string(pd.first) + " and " +
                            std::to_string(pd.second) + " start " + std::to_string(pd.distance) +
                            " m apart, below d_min = " + std::to_string(lim.d_min));
    }
}

nlp::NlpProblem build_nlp(const OcpProblem& ocp, double scale, double constraint_margin) {
    nlp::NlpProblem p;
    p.dim = ocp.control_count();
    p.lower.assign(p.dim, -ocp.fleet.limits.a_max);
    p.upper.assign(p.dim, ocp.fleet.limits.a_max);
    p.objective = [&ocp, scale](std::span<const double> u, std::span<double> g) {
        try {
            const double f = cost_and_gradient(ocp, u, g);
            for (double& gi : g) gi *= scale;
            return f * scale;
        } catch (const InputError&) {
            std::fill(g.begin(), g.end(), 0.0);
            return std::numeric_limits<double>::quiet_NaN();
        }
    };
    p.inequalities.push_back(
        speed_constraints(ocp, ocp.fleet.limits.v_max * (1.0 - constraint_margin)));
    if (ocp.vehicle_count() > 1 && ocp.fleet.limits.d_min > 0.0) {
        p.inequalities.push_back(
            separation_constraints(ocp, ocp.fleet.limits.d_min * (1.0 + constraint_margin)));
    }
    return p;
}

namespace {

/// Scales the first-interval acceleration of each vehicle so its speed after
/// the interval stays within v_max.
void guard_first_interval(const OcpProblem& ocp, std::vector<double>& u) {
    const double vmax = ocp.fleet.limits.v_max, dt = ocp.dt;
    for (std::size_t j = 0; j < ocp.vehicle_count(); ++j) {
        const Vec2 v0 = ocp.fleet.vehicles[j].velocity;
        const Vec2 a(u[2 * j], u[2 * j + 1]);
        if ((v0 + a * dt).norm() <= vmax) continue;
        // |v0 + t a dt|^2 = vmax^2, smallest root in [0, 1]
        const double aa = dt * dt * a.squaredNorm();
        const double bb = 2.0 * dt * v0.dot(a);
        const double cc = v0.squaredNorm() - vmax * vmax;
        double t = 0.0;
        if (aa > 0.0 && cc <= 0.0) {
            const double disc = std::max(0.0, bb * bb - 4.0 * aa * cc);
            t = std::clamp((-bb + std::sqrt(disc)) / (2.0 * aa), 0.0, 1.0) * (1.0 - 1e-9);
        }
        u[2 * j] = t * a.x();
        u[2 * j + 1] = t * a.y();
    }
}

std::mt19937_64 make_rng(std::uint64_t seed, std::uint64_t stream) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
    return std::mt19937_64(seq);
}

}  // namespace

PlanResult plan_from(const OcpProblem& ocp, const PlannerConfig& cfg,
                     std::vector<double> initial_controls, std::uint64_t stream) {
    ocp.validate();
    cfg.validate();
    check_fleet(ocp.fleet);
    if (initial_controls.size() != ocp.control_count()) {
        throw ContractError("initial controls have the wrong length");
    }
    const auto t0 = std::chrono::steady_clock::now();

    auto rng = make_rng(cfg.seed, stream);
    std::normal_distribution<double> noise(0.0, cfg.reward_noise_sigma);

    PlanResult result;
    std::vector<std::vector<double>> solutions;
    for (int start = 0; start < cfg.multistart_count; ++start) {
        OcpProblem local = ocp;
        if (start > 0 && cfg.reward_noise_sigma > 0.0) {
            for (double& r : local.rewards.values) r = std::max(0.0, r + noise(rng));
        }
        std::vector<double> x = initial_controls;
        std::vector<SensorStage> stages = cfg.sensor_continuation;
        stages.push_back({});
        nlp::SolverReport rep;
        for (const auto& st : stages) {
            local.sensor.cutoff = ocp.sensor.cutoff * st.cutoff_factor;
            local.sensor.degree = st.degree > 0.0 ? st.degree : ocp.sensor.degree;
            const double scale = 1.0 / std::max(1.0, std::abs(cost(local, x)));
            const auto nlp = build_nlp(local, scale, cfg.constraint_margin);
            rep = nlp::minimize(nlp, x, cfg.solver);
            x = rep.x;
        }
        guard_first_interval(ocp, x);
        StartRecord rec;
        rec.true_cost = cost(ocp, x, Saturation::hard);
        rec.feasible = rep.acceptable(cfg.solver.feasibility_tol) && std::isfinite(rec.true_cost);
        rec.report = std::move(rep);
        rec.controls = x;
        result.starts.push_back(std::move(rec));
        solutions.push_back(std::move(x));
    }

    int best = 0;
    for (int s = 1; s < static_cast<int>(result.starts.size()); ++s) {
        const auto& cand = result.starts[s];
        const auto& cur = result.starts[best];
        if (cand.feasible != cur.feasible) {
            if (cand.feasible) best = s;
        } else if (cand.feasible) {
            if (cand.true_cost < cur.true_cost) best = s;
        } else if (cand.report.max_violation < cur.report.max_violation) {
            best = s;
        }
    }

    result.selected_start = best;
    result.report = result.starts[best].report;
    result.true_cost = result.starts[best].true_cost;
    result.feasible = result.starts[best].feasible;
    result.plan.horizon = ocp.horizon;
    result.plan.vehicles = ocp.vehicle_count();
    result.plan.controls = std::move(solutions[best]);
    result.plan.predicted = rollout(ocp, result.plan.controls, Saturation::hard);
    result.wall_time =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return result;
}

PlanResult plan_step(const OcpProblem& ocp, const PlannerConfig& cfg, const ControlPlan* warm,
                     std::uint64_t stream) {
    std::vector<double> init(ocp.control_count(), 0.0);
    if (warm && cfg.warm_start && warm->horizon == ocp.horizon &&
        warm->vehicles == ocp.vehicle_count()) {
        init = shift_warm_start(*warm);
    }
    return plan_from(ocp, cfg, std::move(init), stream);
}

}  // namespace impdr::mpc
