// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <string>
#include <vector>

#include "impdr/errors.hpp"
#include "impdr/sim.hpp"

using namespace impdr;
using namespace impdr::sim;

namespace {

ScenarioConfig small_scenario(PlannerKind planner, int steps) {
    ScenarioConfig c = default_scenario();
    c.name = "small";
    c.grid = GridSpec{4, 4, 1.0, Vec2::Zero()};
    c.targets = make_grid_targets(4, 4, 1.0);
    c.fleet = lower_edge_fleet(*c.grid, 2);
    c.horizon = 12;
    c.duration_steps = steps;
    c.planner = planner;
    c.planner_config.solver.max_inner_iters = 20;
    c.planner_config.solver.max_outer_iters = 5;
    c.planner_config.solver.convergence_tol = 1e-6;
    c.planner_config.sensor_continuation = {{1.0, 2.0}};
    c.grasp_horizon_lb = 6.0;
    c.grasp_horizon_ub = 12.0;
    return c;
}

ScenarioConfig idle_scenario(double r0, double gain, int steps) {
    ScenarioConfig c = default_scenario();
    c.planner = PlannerKind::static_hold;
    c.fleet = {{Vec2(-50.0, -50.0), Vec2::Zero()}};
    c.initial_reward = r0;
    c.gain = gain;
    c.duration_steps = steps;
    c.warmup_fraction = 0.0;
    return c;
}

}  // namespace

TEST_CASE("an idle fleet leaves every reward on the ramp") {
    // 100 s at T_s = 0.25 s.
    const auto tr = run_closed_loop(idle_scenario(0.0, 1.0, 400));
    REQUIRE(tr.steps.size() == 401);
    CHECK(tr.metrics.r_eq == doctest::Approx(50.0).epsilon(1e-12));
    CHECK(tr.metrics.r_max == doctest::Approx(100.0).epsilon(1e-12));
    for (const auto& s : tr.steps) {
        for (double r : s.r_eval) CHECK(r == doctest::Approx(s.time).epsilon(1e-12));
    }

    const auto tr2 = run_closed_loop(idle_scenario(10.0, 1.0, 120));
    CHECK(tr2.metrics.r_max == doctest::Approx(1.0 * 30.0 + 10.0));
}

TEST_CASE("constant rewards average to the constant") {
    const auto tr = run_closed_loop(idle_scenario(7.0, 0.0, 50));
    CHECK(tr.metrics.r_eq == doctest::Approx(7.0));
    CHECK(tr.metrics.r_max == doctest::Approx(7.0));
}

TEST_CASE("metrics warm-up drops the leading rows") {
    auto c = idle_scenario(0.0, 1.0, 9);
    c.warmup_fraction = 0.25;
    const auto tr = run_closed_loop(c);
    REQUIRE(tr.steps.size() == 10);
    CHECK(tr.metrics.warmup_steps == 2);
    // Mean of 0.25 k for k = 2..9.
    CHECK(tr.metrics.r_eq == doctest::Approx(0.25 * 5.5));
    const auto m = compute_metrics(tr, 0.0, c.limits);
    CHECK(m.r_eq == doctest::Approx(0.25 * 4.5));
    CHECK_THROWS_AS((void)compute_metrics(RunTrace{}, 0.1, c.limits), ContractError);
}

TEST_CASE("trace shape and timing") {
    const auto tr = run_closed_loop(small_scenario(PlannerKind::impdr, 30));
    REQUIRE_FALSE(tr.failed);
    REQUIRE(tr.steps.size() == 31);
    for (std::size_t k = 0; k < tr.steps.size(); ++k) {
        CHECK(tr.steps[k].step == static_cast<int>(k));
        CHECK(tr.steps[k].time == doctest::Approx(0.25 * k));
        CHECK(tr.steps[k].control.size() == (k + 1 < tr.steps.size() ? 2u : 0u));
        CHECK(tr.steps[k].r_model.size() == 16);
        CHECK(tr.steps[k].r_eval.size() == 16);
    }
    CHECK(tr.metrics.r_eq <= tr.metrics.r_max);
    CHECK(tr.metrics.t_avg <= tr.metrics.t_max);
    CHECK(tr.metrics.speed_violations == 0);
    CHECK(tr.metrics.accel_violations == 0);
    CHECK(tr.metrics.separation_violations == 0);
    CHECK(tr.metrics.min_distance >= 0.5 - 1e-6);
}

TEST_CASE("replaying the recorded controls reproduces the states") {
    const auto tr = run_closed_loop(small_scenario(PlannerKind::impdr, 30));
    const auto states = replay_controls(tr);
    REQUIRE(states.size() == tr.steps.size());
    double worst = 0.0;
    for (std::size_t k = 0; k < states.size(); ++k) {
        for (std::size_t j = 0; j < states[k].size(); ++j) {
            worst = std::max(worst, (states[k][j].position - tr.steps[k].fleet[j].position).norm());
            worst = std::max(worst, (states[k][j].velocity - tr.steps[k].fleet[j].velocity).norm());
        }
    }
    CHECK(worst <= 1e-12);
}

TEST_CASE("the closed loop is deterministic") {
    auto c = small_scenario(PlannerKind::impdr, 15);
    c.planner_config.multistart_count = 3;
    c.planner_config.reward_noise_sigma = 0.5;
    const auto a = run_closed_loop(c);
    const auto b = run_closed_loop(c);
    for (std::size_t k = 0; k < a.steps.size(); ++k) {
        CHECK(a.steps[k].control == b.steps[k].control);
        CHECK(a.steps[k].r_eval == b.steps[k].r_eval);
    }
}

TEST_CASE("evaluation rewards never feed the planner") {
    auto c = small_scenario(PlannerKind::impdr, 20);
    const auto a = run_closed_loop(c);
    c.eval_radius = 0.01;
    const auto b = run_closed_loop(c);
    for (std::size_t k = 0; k < a.steps.size(); ++k) {
        CHECK(a.steps[k].control == b.steps[k].control);
        CHECK(a.steps[k].r_model == b.steps[k].r_model);
    }
}

TEST_CASE("injected targets join the next plan") {
    ClosedLoop loop(small_scenario(PlannerKind::impdr, 10));
    for (int k = 0; k < 4; ++k) loop.step();
    const double before = loop.trace().steps.back().r_model[0];
    loop.inject_target(Target{Vec2(1.5, 1.5)}, 0.0);
    loop.inject_target(Target{Vec2(1.5, 1.5)}, 3.0);  // duplicates are distinct states
    loop.step();
    const auto& row = loop.trace().steps.back();
    REQUIRE(row.r_model.size() == 18);
    REQUIRE(row.r_eval.size() == 18);
    REQUIRE(row.targets.size() == 18);
    CHECK(row.r_model[16] <= 0.25);
    CHECK(row.r_model[17] <= 3.25);
    CHECK(row.r_model[0] <= before + 0.25);
    const auto tr = loop.finish();
    CHECK(tr.steps.size() == 11);

    auto c = small_scenario(PlannerKind::impdr, 6);
    c.injections.push_back({3, Target{Vec2(0.5, 0.5)}, 1.0});
    const auto t2 = run_closed_loop(c);
    CHECK(t2.steps[2].r_eval.size() == 16);
    CHECK(t2.steps[3].r_eval.size() == 17);
}

TEST_CASE("holding a plan for several intervals") {
    auto c = small_scenario(PlannerKind::impdr, 12);
    c.hold_steps = 3;
    const auto tr = run_closed_loop(c);
    for (std::size_t k = 0; k + 1 < tr.steps.size(); ++k) CHECK(tr.steps[k].solved == (k % 3 == 0));
}

TEST_CASE("grid baselines move along grid edges") {
    for (auto kind : {PlannerKind::grasp_lb, PlannerKind::grasp_ub}) {
        auto c = small_scenario(kind, 40);
        const baselines::GridGraph g(4, 4, 1.0);
        for (auto& v : c.fleet) v.position = g.position(g.nearest_node(v.position));
        const auto tr = run_closed_loop(c);
        REQUIRE_FALSE(tr.failed);
        for (const auto& s : tr.steps) {
            for (const auto& v : s.fleet) {
                const double fx = std::abs(v.position.x() - std::round(v.position.x()));
                const double fy = std::abs(v.position.y() - std::round(v.position.y()));
                CHECK(std::min(fx, fy) < 1e-9);
            }
        }
        CHECK(tr.metrics.r_eq < run_closed_loop(idle_scenario(10.0, 1.0, 40)).metrics.r_eq);
    }
    auto bad = small_scenario(PlannerKind::grasp_lb, 5);
    bad.grid.reset();
    CHECK_THROWS_AS((void)run_closed_loop(bad), ContractError);
}

TEST_CASE("planner names round-trip") {
    for (auto k : {PlannerKind::impdr, PlannerKind::grasp_lb, PlannerKind::grasp_ub, PlannerKind::static_hold}) {
        CHECK(planner_kind_from_string(to_string(k)) == k);
    }
    CHECK_THROWS_AS((void)planner_kind_from_string("dijkstra"), InputError);
}

TEST_CASE("scenario library") {
    const auto d = default_scenario();
    CHECK(d.targets.size() == 100);
    CHECK(d.fleet.size() == 3);
    CHECK(d.gain == 1.0);
    CHECK(d.initial_reward == 10.0);
    CHECK(d.dt == 0.25);
    CHECK(d.horizon == 20);
    CHECK(d.duration_steps == 1200);
    CHECK(d.sensor.cutoff == 0.25);
    CHECK(d.sensor.degree == 8.0);
    CHECK(d.limits.v_max == 1.0);
    CHECK(d.limits.a_max == 2.0);
    CHECK(d.fleet[0].position.x() == doctest::Approx(9.0 / 4.0));

    const auto f = scenario_library("flotsam");
    CHECK(f.horizon == 40);
    CHECK(f.targets.size() == 12);
    CHECK(f.sensor.cutoff == 0.5);
    CHECK(f.targets.targets[0].drift_x.amplitude == 0.5);
    CHECK(f.targets.targets[0].drift_x.angular_velocity == doctest::Approx(M_PI / 10.0));

    const auto e = scenario_library("exploration");
    CHECK(e.targets.size() == 400);
    CHECK(e.sensor.cutoff == 0.5);
    CHECK(e.sensor.degree == 4.0);

    const auto g = scenario_library("grid-sweep", 25, 4);
    CHECK(g.targets.size() == 25);
    CHECK(g.fleet.size() == 4);
    CHECK_THROWS_AS((void)scenario_library("grid-sweep", 30, 2), InputError);

    const auto h = scenario_library("horizon-sweep", 2, 30);
    CHECK(h.horizon == 30);
    CHECK(h.fleet.size() == 2);

    const auto t = scenario_library("top-compare");
    CHECK(t.dt == 0.1);
    CHECK(t.duration_steps == 3000);

    for (const auto& n : scenario_names()) CHECK_NOTHROW(scenario_library(n).validate());
    try {
        (void)scenario_library("nowhere");
        FAIL("expected an error");
    } catch (const InputError& err) {
        const std::string msg = err.what();
        CHECK(msg.find("flotsam") != std::string::npos);
        CHECK(msg.find("exploration") != std::string::npos);
    }
}
