// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "impdr/errors.hpp"
#include "impdr/models.hpp"
#include "impdr/ocp.hpp"
#include "oracles.hpp"

using namespace impdr;
using namespace impdr::mpc;

namespace {

OcpProblem static_problem(std::vector<Vec2> vehicles, std::vector<Vec2> targets,
                          std::vector<double> r0, int horizon = 10) {
    OcpProblem p;
    p.horizon = horizon;
    p.dt = 0.25;
    for (const auto& q : vehicles) p.fleet.vehicles.push_back({q, Vec2::Zero()});
    p.fleet.limits = {1.0, 2.0, 0.1};
    p.rewards.values = std::move(r0);
    p.rewards.gain = 1.0;
    p.target_path.assign(horizon + 1, targets);
    p.sensor = {0.5, 4.0};
    return p;
}

OcpProblem random_problem(std::mt19937_64& rng) {
    std::uniform_int_distribution<int> pick_m(1, 2), pick_np(1, 4), pick_n(1, 10);
    std::uniform_real_distribution<double> pos(0.0, 2.0), vel(-0.5, 0.5), rew(0.0, 5.0);
    const int m = pick_m(rng), np = pick_np(rng), n = pick_n(rng);
    OcpProblem p;
    p.horizon = n;
    p.dt = 0.2;
    for (int j = 0; j < m; ++j) p.fleet.vehicles.push_back({Vec2(pos(rng), pos(rng)), Vec2(vel(rng), vel(rng))});
    for (int i = 0; i < np; ++i) p.rewards.values.push_back(rew(rng));
    p.rewards.gain = 1.0;
    // Slowly drifting targets so every step sees a different geometry.
    std::vector<Vec2> base(np);
    for (auto& b : base) b = Vec2(pos(rng), pos(rng));
    for (int k = 0; k <= n; ++k) {
        std::vector<Vec2> row;
        for (const auto& b : base) row.push_back(b + Vec2(0.05 * k, 0.02 * std::sin(0.3 * k)));
        p.target_path.push_back(row);
    }
    p.sensor = {0.6, 4.0};
    p.cost.input_change_penalty = 1e-2;
    p.saturation_sharpness = 50.0;
    return p;
}

std::vector<double> random_controls(std::mt19937_64& rng, std::size_t n) {
    std::uniform_real_distribution<double> a(-2.0, 2.0);
    std::vector<double> u(n);
    for (double& x : u) x = a(rng);
    return u;
}

double max_relative_error(const std::vector<double>& g, const std::vector<double>& fd) {
    double scale = 1.0;
    for (double v : fd) scale = std::max(scale, std::abs(v));
    double worst = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) {
        worst = std::max(worst, std::abs(g[i] - fd[i]) / std::max(std::abs(fd[i]), 1e-6 * scale));
    }
    return worst;
}

}  // namespace

TEST_CASE("zero controls keep vehicles in place and rewards grow") {
    auto p = static_problem({Vec2(1e4, 1e4)}, {Vec2(0, 0), Vec2(1, 0)}, {1.0, 2.0}, 8);
    const std::vector<double> u(p.control_count(), 0.0);
    const auto tr = rollout(p, u, Saturation::hard);
    REQUIRE(tr.vehicles.size() == 9);
    for (int k = 0; k <= 8; ++k) {
        CHECK(tr.vehicles[k][0].position == Vec2(1e4, 1e4));
        CHECK(tr.rewards[k][0] == doctest::Approx(1.0 + 0.25 * k).epsilon(1e-9));
        CHECK(tr.rewards[k][1] == doctest::Approx(2.0 + 0.25 * k).epsilon(1e-9));
    }
}

TEST_CASE("a vehicle sitting on the target pins its reward near zero") {
    auto p = static_problem({Vec2(1, 1)}, {Vec2(1, 1)}, {5.0}, 6);
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> a(-1e-4, 1e-4);
    std::vector<double> u(p.control_count());
    for (double& x : u) x = a(rng);
    const auto hard = rollout(p, u, Saturation::hard);
    for (int k = 1; k <= 6; ++k) CHECK(hard.rewards[k][0] < 1e-6);
    // The smooth saturation leaves (r + dt k_gain) ln2 / beta behind.
    const auto smooth = rollout(p, u, Saturation::smooth);
    for (int k = 1; k <= 6; ++k) CHECK(smooth.rewards[k][0] < 5e-3);
}

TEST_CASE("twenty steps of a quarter second span five seconds") {
    OcpProblem p;
    p.horizon = 20;
    p.dt = 0.25;
    CHECK(p.horizon * p.dt == doctest::Approx(5.0));
}

TEST_CASE("rollout positions agree with vehicle_step") {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 20; ++trial) {
        auto p = random_problem(rng);
        const auto u = random_controls(rng, p.control_count());
        const auto tr = rollout(p, u);
        const std::size_t m = p.vehicle_count();
        for (std::size_t j = 0; j < m; ++j) {
            VehicleState s = p.fleet.vehicles[j];
            for (int k = 0; k < p.horizon; ++k) {
                const std::size_t o = (k * m + j) * 2;
                s = vehicle_step(s, Vec2(u[o], u[o + 1]), p.dt);
                CHECK((tr.vehicles[k + 1][j].position - s.position).norm() < 1e-12);
                CHECK((tr.vehicles[k + 1][j].velocity - s.velocity).norm() < 1e-12);
            }
        }
    }
}

TEST_CASE("hard rollout rewards agree with the scalar recurrence") {
    std::mt19937_64 rng(12);
    for (int trial = 0; trial < 20; ++trial) {
        auto p = random_problem(rng);
        const auto u = random_controls(rng, p.control_count());
        const auto tr = rollout(p, u, Saturation::hard);
        for (std::size_t i = 0; i < p.target_count(); ++i) {
            double r = p.rewards.values[i];
            for (int k = 0; k < p.horizon; ++k) {
                std::vector<Eigen::Vector2d> qs;
                for (const auto& v : tr.vehicles[k]) qs.push_back(v.position);
                r = oracle::scalar_reward_step(r, p.target_path[k][i], qs, p.sensor.cutoff,
                                               p.sensor.degree, p.dt, p.rewards.gain);
                CHECK(tr.rewards[k + 1][i] == doctest::Approx(r).epsilon(1e-12));
            }
        }
    }
}

TEST_CASE("cost with a distant idle vehicle equals the brute-force sum of squares") {
    auto p = static_problem({Vec2(1e4, 1e4)}, {Vec2(0, 0), Vec2(1, 2), Vec2(3, 1)},
                            {0.5, 1.5, 4.0}, 12);
    p.cost.input_change_penalty = 0.0;
    const std::vector<double> u(p.control_count(), 0.0);
    double expected = 0.0;
    for (double r0 : p.rewards.values) {
        double r = r0;
        for (int k = 0; k <= p.horizon; ++k) {
            expected += r * r;
            r += p.dt * p.rewards.gain;
        }
    }
    CHECK(cost(p, u, Saturation::hard) == doctest::Approx(expected).epsilon(1e-12));
    CHECK(cost(p, u, Saturation::smooth) == doctest::Approx(expected).epsilon(1e-12));
    std::vector<double> g(u.size());
    CHECK(cost_and_gradient(p, u, g) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("linear stage cost sums rewards") {
    auto p = static_problem({Vec2(1e4, 1e4)}, {Vec2(0, 0)}, {2.0}, 4);
    p.cost.stage = StageCost::linear;
    p.cost.input_change_penalty = 0.0;
    const std::vector<double> u(p.control_count(), 0.0);
    // 2 + 2.25 + 2.5 + 2.75 + 3
    CHECK(cost(p, u) == doctest::Approx(12.5));
}

TEST_CASE("endpoint terminal cost") {
    auto p = static_problem({Vec2(1, 1)}, {Vec2(50, 50)}, {0.0}, 4);
    p.rewards.gain = 0.0;
    p.cost.stage = StageCost::linear;
    p.cost.terminal = TerminalCost::endpoint;
    p.cost.terminal_point = Vec2(1, 3);
    p.cost.input_change_penalty = 0.0;
    const std::vector<double> u(p.control_count(), 0.0);
    CHECK(cost(p, u) == doctest::Approx(1e3 * 4.0));
}

TEST_CASE("constant controls add nothing through the input-change term") {
    auto p = static_problem({Vec2(1e4, 1e4)}, {Vec2(0, 0)}, {1.0}, 6);
    p.fleet.limits.v_max = 100.0;
    p.previous_input = std::vector<Vec2>{Vec2(0.3, -0.2)};
    std::vector<double> u(p.control_count());
    for (std::size_t i = 0; i < u.size(); i += 2) {
        u[i] = 0.3;
        u[i + 1] = -0.2;
    }
    auto q = p;
    q.cost.input_change_penalty = 0.0;
    CHECK(cost(p, u) == doctest::Approx(cost(q, u)).epsilon(1e-14));

    // Without a previous input the first step is measured against zero.
    p.previous_input.reset();
    CHECK(cost(p, u) - cost(q, u) == doctest::Approx(1e-3 * (0.09 + 0.04)));
}

TEST_CASE("input penalty defaults to 1e-3") {
    CHECK(CostConfig{}.input_change_penalty == 1e-3);
}

TEST_CASE("smooth saturation stays close to the hard one away from the kink") {
    for (double s = 0.0; s < 3.0; s += 0.001) {
        if (std::abs(s - 1.0) < 0.005) continue;
        CHECK(std::abs(saturate(s, Saturation::smooth, 2000.0) - std::min(1.0, s)) < 1e-6);
    }
    CHECK(saturate(2.0, Saturation::hard, 2000.0) == 1.0);
}

TEST_CASE("gradient matches central differences on random small problems") {
    std::mt19937_64 rng(2024);
    double worst = 0.0;
    for (int trial = 0; trial < 60; ++trial) {
        auto p = random_problem(rng);
        if (trial % 3 == 0) p.cost.stage = StageCost::linear;
        if (trial % 4 == 1) {
            p.cost.terminal = TerminalCost::endpoint;
            p.cost.terminal_point = Vec2(1.0, 1.5);
            p.cost.terminal_weight = 10.0;
        }
        if (trial % 5 == 2) p.previous_input = std::vector<Vec2>(p.vehicle_count(), Vec2(0.1, -0.4));
        if (trial % 6 == 3) p.sensor.degree = 3.0;
        const auto u = random_controls(rng, p.control_count());
        std::vector<double> g(u.size());
        cost_and_gradient(p, u, g);
        const auto fd = oracle::five_point_difference(
            [&](const std::vector<double>& x) { return cost(p, x); }, u, 1e-4);
        worst = std::max(worst, max_relative_error(g, fd));
    }
    MESSAGE("worst relative gradient error " << worst);
    CHECK(worst < 1e-5);
}

TEST_CASE("gradient at the default sharpness") {
    // beta = 2000 is steep near s = 1; keep the footprints well apart from that.
    std::mt19937_64 rng(77);
    for (int trial = 0; trial < 20; ++trial) {
        auto p = random_problem(rng);
        p.saturation_sharpness = 2000.0;
        p.fleet.vehicles.resize(1);
        std::vector<double> u = random_controls(rng, p.control_count());
        std::vector<double> g(u.size());
        cost_and_gradient(p, u, g);
        const auto fd = oracle::five_point_difference(
            [&](const std::vector<double>& x) { return cost(p, x); }, u, 1e-5);
        CHECK(max_relative_error(g, fd) < 1e-5);
    }
}

TEST_CASE("constraint blocks: values and vector-Jacobian products") {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 20; ++trial) {
        auto p = random_problem(rng);
        p.fleet.vehicles.push_back({Vec2(3.0, 3.0), Vec2(0.1, 0.0)});
        const auto u = random_controls(rng, p.control_count());
        const auto tr = rollout(p, u);
        for (auto block : {speed_constraints(p, 0.9), separation_constraints(p, 0.2)}) {
            std::vector<double> c(block.count);
            block.values(u, c);
            std::vector<double> w(block.count);
            std::uniform_real_distribution<double> wd(0.0, 1.0);
            for (double& x : w) x = wd(rng);
            std::vector<double> g(u.size(), 0.0);
            block.accumulate_gradient(u, w, g);
            const auto fd = oracle::five_point_difference(
                [&](const std::vector<double>& x) {
                    std::vector<double> cv(block.count);
                    block.values(x, cv);
                    double s = 0.0;
                    for (std::size_t i = 0; i < cv.size(); ++i) s += w[i] * cv[i];
                    return s;
                },
                u, 1e-4);
            CHECK(max_relative_error(g, fd) < 1e-6);
        }
        // Speed block values against the rolled-out velocities.
        auto sp = speed_constraints(p, 0.9);
        std::vector<double> c(sp.count);
        sp.values(u, c);
        const std::size_t m = p.vehicle_count();
        for (int k = 1; k <= p.horizon; ++k) {
            for (std::size_t j = 0; j < m; ++j) {
                const double v2 = tr.vehicles[k][j].velocity.squaredNorm();
                CHECK(c[(k - 1) * m + j] == doctest::Approx(v2 - 0.81));
            }
        }
    }
}

TEST_CASE("single vehicle has no separation constraints") {
    auto p = static_problem({Vec2(0, 0)}, {Vec2(1, 1)}, {1.0});
    CHECK(separation_constraints(p, 0.5).count == 0);
}

TEST_CASE("shape mismatch and non-finite states are rejected") {
    auto p = static_problem({Vec2(0, 0)}, {Vec2(1, 1)}, {1.0}, 5);
    std::vector<double> bad(3, 0.0), g(3);
    CHECK_THROWS_AS((void)rollout(p, bad), ContractError);
    CHECK_THROWS_AS(cost_and_gradient(p, bad, g), ContractError);

    p.rewards.values[0] = 1e300;
    p.cost.input_change_penalty = 0.0;
    std::vector<double> u(p.control_count(), 0.0), gu(u.size());
    try {
        cost_and_gradient(p, u, gu);
        FAIL("expected an InputError");
    } catch (const InputError& e) {
        CHECK(std::string(e.what()).find("step") != std::string::npos);
    }

    auto q = static_problem({Vec2(0, 0)}, {Vec2(1, 1)}, {1.0}, 5);
    q.target_path.pop_back();
    CHECK_THROWS_AS(q.validate(), ContractError);
}

TEST_CASE("shift_warm_start") {
    ControlPlan plan;
    plan.horizon = 3;
    plan.vehicles = 1;
    plan.controls = {0, 1, 2, 3, 4, 5};
    CHECK(shift_warm_start(plan) == std::vector<double>{2, 3, 4, 5, 4, 5});

    plan.controls.assign(6, 0.0);
    CHECK(shift_warm_start(plan) == plan.controls);

    plan.vehicles = 2;
    plan.controls = {1, 2, 3, 4, 1, 2, 3, 4, 1, 2, 3, 4};
    CHECK(shift_warm_start(plan) == plan.controls);

    ControlPlan empty;
    CHECK_THROWS_AS((void)shift_warm_start(empty), ContractError);
}
