// SPDX-License-Identifier: Apache-2.0
//
// Kinematic orienteering: one double-integrator vehicle collects static node
// scores within a travel budget, using the monitoring planner with a linear
// stage cost, no reward growth and a soft end-point term.
#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "impdr/models.hpp"
#include "impdr/ocp.hpp"
#include "impdr/planner.hpp"

namespace impdr::kop {

/// Orienteering instance in the Tsiligirides text layout:
///
///     <budget> <vehicles>
///     <x> <y> <score>      start node
///     <x> <y> <score>      ...
///     <x> <y> <score>      end node
///
/// Fields are whitespace separated. Blank lines and lines starting with '#'
/// are ignored. At least two nodes are required; the first is the start and
/// the last is the end.
struct OpInstance {
    std::string name;
    double budget{0.0};
    int vehicles{1};
    std::vector<Vec2> nodes;
    std::vector<double> scores;

    [[nodiscard]] const Vec2& start() const { return nodes.front(); }
    [[nodiscard]] const Vec2& end() const { return nodes.back(); }
    [[nodiscard]] double total_score() const;
};

/// Throws ParseError with the offending line.
[[nodiscard]] OpInstance read_op_instance(std::istream& in, const std::string& source);
[[nodiscard]] OpInstance load_op_instance(const std::string& path);

struct KopParams {
    double dt{0.1};
    SensorParams sensor{0.05, 2.0};
    double v_max{3.0};
    double a_max{1.5};
    double terminal_weight{1e3};
    double input_change_penalty{1e-3};
    double visit_radius{0.02};  // a node counts as collected inside this distance
};

/// Largest step count whose duration fits the budget: round(C_max / T_s),
/// reduced by one if rounding went over.
[[nodiscard]] int kop_horizon(double budget, double dt);

/// Static targets at the nodes with their scores as initial rewards and no
/// growth, linear stage cost, end-point terminal cost, vehicle at rest on the
/// start node.
[[nodiscard]] mpc::OcpProblem configure_kop(const OpInstance& inst, double budget,
                                            const KopParams& params = {});

struct KopEvaluation {
    double score{0.0};
    std::vector<int> visited;  // node indices
    double endpoint_deviation{0.0};
    double duration{0.0};
    double max_speed{0.0};
    double max_abs_accel{0.0};
    /// Closest approach of the continuous trajectory to every node.
    std::vector<double> closest;
};

/// Scores a control sequence on the exact piecewise-quadratic trajectory.
[[nodiscard]] KopEvaluation evaluate_kop(const OpInstance& inst, const mpc::OcpProblem& ocp,
                                         const std::vector<double>& controls,
                                         const KopParams& params = {});

struct KopResult {
    KopEvaluation best;
    int best_start{0};
    std::vector<double> controls;
    mpc::Trajectory trajectory;
    std::vector<KopEvaluation> starts;  // one per multistart
    mpc::PlanResult plan;
    double wall_time{0.0};  // seconds, all starts
};

/// Ten perturbed starts with N(0, 0.1) reward noise, a cutoff continuation and
/// a solver budget sized for horizons of a few hundred steps.
[[nodiscard]] mpc::PlannerConfig default_kop_planner();

/// Runs every start and keeps the one with the highest collected score among
/// those ending within the visit radius of the end node (any start if none do).
[[nodiscard]] KopResult solve_kop(const OpInstance& inst, double budget,
                                  const KopParams& params = {},
                                  const mpc::PlannerConfig& planner = default_kop_planner());

}  // namespace impdr::kop
