// SPDX-License-Identifier: Apache-2.0
//
// GRASP team-orienteering baseline on a 4-connected target grid. Vehicles move
// node to node along grid edges; a route is a list of waypoints joined by
// L-shaped shortest paths (x first, then y). Every node a path passes over
// counts as visited.
#pragma once

#include <cstdint>
#include <vector>

#include "impdr/models.hpp"

namespace impdr::baselines {

enum class TravelMode {
    lower_bound,  // constant cruise speed, instant turns
    upper_bound,  // rest-to-rest trapezoid on every edge
};

struct TravelModel {
    TravelMode mode{TravelMode::lower_bound};
    double speed{1.0};         // [m/s]
    double acceleration{2.0};  // [m/s^2], upper bound only
};

/// Time to traverse one edge of length `spacing`.
[[nodiscard]] double edge_travel_time(double spacing, const TravelModel& model);

/// Distance covered after `t` seconds on an edge of length `spacing`.
[[nodiscard]] double edge_progress(double t, double spacing, const TravelModel& model);

class GridGraph {
public:
    GridGraph(int cols, int rows, double spacing, const Vec2& origin = Vec2::Zero());

    [[nodiscard]] int cols() const noexcept { return cols_; }
    [[nodiscard]] int rows() const noexcept { return rows_; }
    [[nodiscard]] double spacing() const noexcept { return spacing_; }
    [[nodiscard]] int node_count() const noexcept { return cols_ * rows_; }
    [[nodiscard]] int edge_count() const noexcept;
    [[nodiscard]] Vec2 position(int node) const;
    [[nodiscard]] std::vector<int> neighbors(int node) const;
    [[nodiscard]] bool adjacent(int a, int b) const;
    /// Closest node; ties go to the lower index.
    [[nodiscard]] int nearest_node(const Vec2& p) const;
    /// L-shaped shortest path from a to b, excluding a, including b.
    [[nodiscard]] std::vector<int> path(int a, int b) const;

private:
    int cols_;
    int rows_;
    double spacing_;
    Vec2 origin_;
};

struct VehicleRoute {
    std::vector<int> nodes;        // start node first, consecutive entries adjacent
    std::vector<double> arrival;   // arrival time at each entry, arrival[0] = 0
    std::vector<int> waypoints;    // chosen targets, in visiting order
};

struct TeamPlan {
    std::vector<VehicleRoute> routes;
    double objective{0.0};
};

struct GraspConfig {
    int iterations{5};
    double rcl_alpha{0.3};  // restricted candidate list: top fraction by benefit / time
    TravelModel travel{};
    double horizon{20.0};   // [s]
    double gain{1.0};       // reward growth used when scoring a plan
    std::uint64_t seed{0};

    void validate() const;
};

/// Time integral over [0, horizon] of sum_i r_i(t)^2 when r_i grows at `gain`
/// and is reset to zero whenever a route passes over node i.
[[nodiscard]] double plan_objective(const GridGraph& graph, const std::vector<double>& rewards,
                                    const TeamPlan& plan, double horizon, double gain);

/// Best of `iterations` randomized constructions, each followed by local search
/// (2-opt on each route, insertion, removal and swap of waypoints). The reward
/// snapshot is frozen for the whole plan.
[[nodiscard]] TeamPlan grasp_plan(const GridGraph& graph, const std::vector<double>& rewards,
                                  const std::vector<int>& starts, const GraspConfig& cfg);

/// Objective after construction and after local search for every iteration;
/// exposed for testing.
struct GraspTrace {
    std::vector<double> constructed;
    std::vector<double> improved;
};
[[nodiscard]] TeamPlan grasp_plan(const GridGraph& graph, const std::vector<double>& rewards,
                                  const std::vector<int>& starts, const GraspConfig& cfg,
                                  GraspTrace* trace);

/// Vehicle positions sampled every dt for `steps + 1` samples (t = 0 .. steps * dt).
/// Vehicles wait at their last node once the route is done.
[[nodiscard]] std::vector<std::vector<Vec2>> execute_team_plan(const TeamPlan& plan,
                                                               const GridGraph& graph,
                                                               const TravelModel& model,
                                                               double dt, int steps);

}  // namespace impdr::baselines
