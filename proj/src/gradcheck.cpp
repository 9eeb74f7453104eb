// SPDX-License-Identifier: Apache-2.0
#include "impdr/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "impdr/errors.hpp"
#include "impdr/nlp.hpp"

namespace impdr::mpc {

OcpProblem random_ocp(std::mt19937_64& rng, const GradCheckSpec& spec) {
    std::uniform_int_distribution<int> pick_m(1, spec.max_vehicles), pick_np(1, spec.max_targets),
        pick_n(spec.min_horizon, spec.max_horizon);
    std::uniform_real_distribution<double> pos(0.0, 2.0), vel(-0.5, 0.5), rew(0.0, 5.0);
    const int m = pick_m(rng), np = pick_np(rng), n = pick_n(rng);
    OcpProblem p;
    p.horizon = n;
    p.dt = 0.2;
    for (int j = 0; j < m; ++j) p.fleet.vehicles.push_back({Vec2(pos(rng), pos(rng)), Vec2(vel(rng), vel(rng))});
    for (int i = 0; i < np; ++i) p.rewards.values.push_back(rew(rng));
    p.rewards.gain = 1.0;
    std::vector<Vec2> base(np);
    for (auto& b : base) b = Vec2(pos(rng), pos(rng));
    for (int k = 0; k <= n; ++k) {
        std::vector<Vec2> row;
        for (const auto& b : base) row.push_back(b + Vec2(0.05 * k, 0.02 * std::sin(0.3 * k)));
        p.target_path.push_back(std::move(row));
    }
    p.sensor = {0.6, 4.0};
    p.cost.input_change_penalty = 1e-2;
    return p;
}

GradCheckResult run_gradient_check(const GradCheckSpec& spec) {
    if (spec.problems < 1 || !(spec.step > 0.0) || spec.max_vehicles < 1 || spec.max_targets < 1 ||
        spec.min_horizon < 1 || spec.max_horizon < spec.min_horizon) {
        throw ContractError("invalid gradient check specification");
    }
    std::mt19937_64 rng(spec.seed);
    std::uniform_real_distribution<double> acc(-2.0, 2.0);
    GradCheckResult out;
    for (int t = 0; t < spec.problems; ++t) {
        const auto p = random_ocp(rng, spec);
        std::vector<double> u(p.control_count());
        for (double& x : u) x = acc(rng);
        const nlp::Objective f = [&p](std::span<const double> x, std::span<double> g) {
            return cost_and_gradient(p, x, g);
        };
        const double err = nlp::check_gradient(f, u, spec.step);
        out.cases.push_back({p.vehicle_count(), p.target_count(), p.horizon, err});
        out.worst = std::max(out.worst, err);
    }
    return out;
}

}  // namespace impdr::mpc
