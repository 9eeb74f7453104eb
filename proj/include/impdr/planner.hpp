// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "impdr/nlp.hpp"
#include "impdr/ocp.hpp"

namespace impdr::mpc {

/// A widened footprint used as a continuation stage: cutoff scaled by
/// `cutoff_factor`, degree replaced by `degree` when it is positive.
struct SensorStage {
    double cutoff_factor{1.0};
    double degree{0.0};
};

struct PlannerConfig {
    int multistart_count{1};
    double reward_noise_sigma{0.0};  // std-dev of the N(0, sigma) added to r_0 on extra starts
    bool warm_start{true};
    nlp::SolverConfig solver{};
    std::uint64_t seed{0};
    /// Relative tightening of the speed and separation limits inside the NLP.
    double constraint_margin{1e-4};
    /// Optional surrogate sensors solved in sequence before the nominal one; each
    /// stage warm-starts the next. The final solve always uses the nominal sensor.
    std::vector<SensorStage> sensor_continuation{};

    void validate() const;
};

struct StartRecord {
    nlp::SolverReport report;
    std::vector<double> controls;  // after the first-interval guard
    double true_cost{0.0};
    bool feasible{false};
};

struct PlanResult {
    ControlPlan plan;
    nlp::SolverReport report;  // report of the selected start
    double true_cost{0.0};     // hard-saturation cost with the unperturbed rewards
    bool feasible{false};
    int selected_start{0};
    std::vector<StartRecord> starts;
    double wall_time{0.0};  // seconds, all starts
};

/// Solves one receding-horizon step.
///
/// Start 0 uses the unperturbed rewards; starts 1..K-1 add truncated Gaussian
/// noise to r_0. All starts share the initial controls: the shifted warm plan
/// when one is given (and warm starting is enabled), zeros otherwise. The start
/// with the lowest hard-saturation cost among the feasible ones is returned.
///
/// The first control interval is scaled back, if needed, so the applied
/// acceleration never pushes a vehicle above v_max.
///
/// Throws ContractError if the fleet starts closer than d_min or faster than v_max.
[[nodiscard]] PlanResult plan_step(const OcpProblem& ocp, const PlannerConfig& cfg,
                                   const ControlPlan* warm = nullptr,
                                   std::uint64_t stream = 0);

/// Same as plan_step but from explicit initial controls.
[[nodiscard]] PlanResult plan_from(const OcpProblem& ocp, const PlannerConfig& cfg,
                                   std::vector<double> initial_controls,
                                   std::uint64_t stream = 0);

/// The NLP the planner hands to the solver (objective scaled by `scale`).
/// The returned problem refers to `ocp`, which must outlive it.
[[nodiscard]] nlp::NlpProblem build_nlp(const OcpProblem& ocp, double scale,
                                        double constraint_margin);

/// Rejects fleets that violate separation or the speed limit at the start.
void check_fleet(const FleetState& fleet);

}  // namespace impdr::mpc
