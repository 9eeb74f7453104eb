// SPDX-License-Identifier: Apache-2.0
//
// Single-shooting transcription of the monitoring step: the decision variables
// are the accelerations of every vehicle over the horizon, and states are
// eliminated by forward simulation. Cost gradients come from one reverse sweep
// through the same discrete dynamics.
//
// Control layout (flat): u[(k * m + j) * 2 + axis], k = step, j = vehicle.
#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "impdr/models.hpp"
#include "impdr/nlp.hpp"

namespace impdr::mpc {

enum class StageCost { squared, linear };
enum class TerminalCost { same_as_stage, endpoint };

struct CostConfig {
    StageCost stage{StageCost::squared};
    TerminalCost terminal{TerminalCost::same_as_stage};
    double terminal_weight{1e3};           // endpoint mode: weight * |q_N - terminal_point|^2
    Vec2 terminal_point{Vec2::Zero()};
    double input_change_penalty{1e-3};     // k_R
};

/// Which saturation the reward rollout uses. Planning needs the smooth one.
enum class Saturation { smooth, hard };

struct OcpProblem {
    int horizon{20};  // N_s
    double dt{0.25};  // T_s
    FleetState fleet;
    RewardVector rewards;
    /// Target positions for steps 0..horizon (horizon + 1 rows of n_p positions).
    std::vector<std::vector<Vec2>> target_path;
    SensorParams sensor;
    CostConfig cost;
    /// Smooth saturation sharpness: sat(s) = s - softplus_beta(s - 1).
    double saturation_sharpness{2000.0};
    /// Control applied just before this horizon, for the first input-change term.
    std::optional<std::vector<Vec2>> previous_input;

    [[nodiscard]] std::size_t vehicle_count() const noexcept { return fleet.size(); }
    [[nodiscard]] std::size_t target_count() const noexcept { return rewards.size(); }
    [[nodiscard]] std::size_t control_count() const noexcept {
        return static_cast<std::size_t>(horizon) * fleet.size() * 2;
    }
    void validate() const;
};

/// Predicted states x_0..x_N (positions, velocities, rewards) and the cost split.
struct Trajectory {
    std::vector<std::vector<VehicleState>> vehicles;  // [N + 1][m]
    std::vector<std::vector<double>> rewards;         // [N + 1][n_p]
    std::vector<double> stage_costs;                  // [N], Lagrange + input change
    double terminal_cost{0.0};

    [[nodiscard]] double total() const noexcept;
};

/// Saturation of the summed footprint; the smooth variant is C^1 and deviates
/// from min(1, s) by less than 1e-6 outside |s - 1| < 0.005 at the default sharpness.
[[nodiscard]] double saturate(double s, Saturation mode, double sharpness) noexcept;

[[nodiscard]] Trajectory rollout(const OcpProblem& ocp, std::span<const double> controls,
                                 Saturation mode = Saturation::smooth);

[[nodiscard]] double cost(const OcpProblem& ocp, std::span<const double> controls,
                          Saturation mode = Saturation::smooth);

/// Cost with the smooth saturation and its exact gradient by reverse accumulation.
/// Throws InputError naming the step if a state becomes non-finite.
double cost_and_gradient(const OcpProblem& ocp, std::span<const double> controls,
                         std::span<double> grad);

/// Speed limit at steps 1..N for every vehicle: (|v|^2 - v_cap^2) / v_max^2 <= 0.
[[nodiscard]] nlp::InequalityBlock speed_constraints(const OcpProblem& ocp, double v_cap);

/// Pairwise separation at steps 1..N: (d_req^2 - |q_a - q_b|^2) / d_min^2 <= 0.
/// Empty block for a single vehicle.
[[nodiscard]] nlp::InequalityBlock separation_constraints(const OcpProblem& ocp, double d_req);

/// A solved horizon: controls plus the states they produce.
struct ControlPlan {
    int horizon{0};
    std::size_t vehicles{0};
    std::vector<double> controls;
    Trajectory predicted;

    [[nodiscard]] Vec2 acceleration(int step, std::size_t vehicle) const;
};

/// Drops step 0 and repeats the last step; the shape is unchanged.
[[nodiscard]] std::vector<double> shift_warm_start(const ControlPlan& prev);

}  // namespace impdr::mpc
