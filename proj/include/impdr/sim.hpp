// SPDX-License-Identifier: Apache-2.0
//
// Closed-loop driver: plan, apply one sampling interval, advance the truth
// models, record. The planner only ever sees the hard-saturation model
// rewards; the evaluation rewards are kept for scoring.
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "impdr/grasp.hpp"
#include "impdr/models.hpp"
#include "impdr/planner.hpp"

namespace impdr::sim {

enum class PlannerKind { impdr, grasp_lb, grasp_ub, static_hold };

[[nodiscard]] std::string to_string(PlannerKind k);
/// Accepts impdr, grasp-lb, grasp-ub, static.
[[nodiscard]] PlannerKind planner_kind_from_string(const std::string& s);

struct GridSpec {
    int cols{10};
    int rows{10};
    double spacing{1.0};
    Vec2 origin{Vec2::Zero()};
};

struct Injection {
    int step{0};
    Target target;
    double initial_reward{0.0};
};

struct ScenarioConfig {
    std::string name{"custom"};
    TargetSet targets;
    /// Set when the targets form a grid; the GRASP baselines need it.
    std::optional<GridSpec> grid;
    std::vector<VehicleState> fleet;
    MotionLimits limits{};
    SensorParams sensor{};
    double gain{1.0};            // k_gain [1/s]
    double initial_reward{10.0};  // r_0
    double dt{0.25};             // T_s
    int horizon{20};             // N_s
    PlannerKind planner{PlannerKind::impdr};
    mpc::PlannerConfig planner_config{};
    mpc::CostConfig cost{};
    baselines::GraspConfig grasp{};  // travel mode and horizon are set per planner below
    double grasp_horizon_lb{20.0};   // [s]
    double grasp_horizon_ub{40.0};   // [s]
    int duration_steps{1200};  // S
    /// Evaluation radius n_e; defaults to the sensor cutoff.
    std::optional<double> eval_radius;
    /// Sampling intervals applied per solve (1 = plan every step).
    int hold_steps{1};
    double warmup_fraction{0.1};
    std::uint64_t seed{0};
    std::vector<Injection> injections;

    [[nodiscard]] double effective_eval_radius() const {
        return eval_radius.value_or(sensor.cutoff);
    }
    void validate() const;
};

struct StepRecord {
    int step{0};
    double time{0.0};
    std::vector<VehicleState> fleet;   // state at this step
    std::vector<Vec2> control;         // acceleration applied over [step, step + 1); empty on the last row
    std::vector<Vec2> targets;         // target positions at this step
    std::vector<double> r_model;
    std::vector<double> r_eval;
    double solver_ms{0.0};             // 0 when no solve happened at this step
    bool solved{false};
    std::string solver_status;
    double min_distance{0.0};
    double max_speed{0.0};
};

struct MetricsSummary {
    std::vector<double> r_avg;  // per step, evaluation rewards
    double r_eq{0.0};
    double r_max{0.0};
    double r_avg_max_after_warmup{0.0};
    double t_avg{0.0};  // solver wall time [ms]
    double t_max{0.0};
    int warmup_steps{0};
    double min_distance{0.0};
    double max_speed{0.0};
    double max_abs_accel{0.0};
    int speed_violations{0};
    int separation_violations{0};
    int accel_violations{0};
};

struct RunTrace {
    std::string scenario;
    PlannerKind planner{PlannerKind::impdr};
    double dt{0.25};
    std::vector<StepRecord> steps;
    bool failed{false};
    std::string failure;
    MetricsSummary metrics;
};

/// Metrics over the recorded steps. Warm-up = floor(fraction * rows).
[[nodiscard]] MetricsSummary compute_metrics(const RunTrace& trace, double warmup_fraction,
                                             const MotionLimits& limits);

class ClosedLoop {
public:
    explicit ClosedLoop(ScenarioConfig cfg);

    [[nodiscard]] bool done() const noexcept;
    [[nodiscard]] int current_step() const noexcept { return step_; }
    /// Plans, applies one interval and advances all models.
    void step();
    /// Adds a target at the current step; the next plan sees it.
    void inject_target(const Target& target, double initial_reward);
    [[nodiscard]] const RunTrace& trace() const noexcept { return trace_; }
    /// Runs to the end (or the first failure) and returns the trace with metrics.
    RunTrace finish();

private:
    void record(double solver_ms, bool solved, const std::string& status);
    std::vector<Vec2> plan_impdr(double& solver_ms, std::string& status);
    std::vector<Vec2> plan_grasp(double& solver_ms, std::string& status);

    ScenarioConfig cfg_;
    int step_{0};
    std::vector<VehicleState> fleet_;
    RewardVector r_model_;
    RewardVector r_eval_;
    std::optional<mpc::ControlPlan> warm_;
    int plan_age_{0};
    std::vector<Vec2> last_control_;
    // GRASP execution state
    std::vector<std::vector<Vec2>> grasp_positions_;
    int grasp_age_{0};
    RunTrace trace_;
};

[[nodiscard]] RunTrace run_closed_loop(const ScenarioConfig& cfg);

/// Re-applies the recorded controls from the first recorded state.
[[nodiscard]] std::vector<std::vector<VehicleState>> replay_controls(const RunTrace& trace);

/// Fleet evenly spaced along the lower edge of the grid, at rest:
/// x_j = x0 + (j + 1) W / (m + 1).
[[nodiscard]] std::vector<VehicleState> lower_edge_fleet(const GridSpec& grid, int vehicles);

/// Named scenarios: exploration, flotsam, grid-sweep, horizon-sweep, top-compare.
/// grid-sweep takes (targets, vehicles) with targets a square number;
/// horizon-sweep takes (vehicles, horizon).
[[nodiscard]] ScenarioConfig scenario_library(const std::string& name, int a = 0, int b = 0);
[[nodiscard]] std::vector<std::string> scenario_names();

/// The defaults shared by the sweeps: 10x10 grid of 1 m, m = 3, k_gain 1/s,
/// r_0 = 10, v_max 1 m/s, a_max 2 m/s^2, c_b 0.25, n_b 8, T_s 0.25, N_s 20, S 1200,
/// and the short per-step solver budget used by every closed-loop scenario.
[[nodiscard]] ScenarioConfig default_scenario();

}  // namespace impdr::sim
