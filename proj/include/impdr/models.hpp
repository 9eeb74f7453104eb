// SPDX-License-Identifier: Apache-2.0
//
// Sensor, reward, vehicle and target-motion models. Everything here is a pure
// function of its arguments; the planner, the baselines and the simulator all
// share these definitions.
#pragma once

#include <cstddef>
#include <limits>
#include <span>
#include <vector>

#include <Eigen/Core>

namespace impdr {

using Vec2 = Eigen::Vector2d;

/// Butterworth sensor footprint: cutoff range c_b [m] and degree n_b.
struct SensorParams {
    double cutoff{0.25};
    double degree{8.0};

    void validate() const;
};

/// Per-axis target motion: x(t) = t * drift_velocity + amplitude * sin(t * angular_velocity).
struct DriftParams {
    double amplitude{0.0};         // [m]
    double angular_velocity{0.0};  // [rad/s]
    double drift_velocity{0.0};    // [m/s]

    [[nodiscard]] bool is_static() const noexcept {
        return amplitude == 0.0 && drift_velocity == 0.0;
    }
};

struct Target {
    Vec2 base{Vec2::Zero()};
    DriftParams drift_x{};
    DriftParams drift_y{};
};

/// Ordered targets. The index of a target is the index of its reward state
/// for the whole run.
struct TargetSet {
    std::vector<Target> targets;

    [[nodiscard]] std::size_t size() const noexcept { return targets.size(); }
};

/// Reward states r_i and the growth rate k_gain [1/s].
struct RewardVector {
    std::vector<double> values;
    double gain{1.0};

    [[nodiscard]] std::size_t size() const noexcept { return values.size(); }
};

struct VehicleState {
    Vec2 position{Vec2::Zero()};
    Vec2 velocity{Vec2::Zero()};
};

struct MotionLimits {
    double v_max{1.0};  // speed magnitude [m/s]
    double a_max{2.0};  // per-axis acceleration [m/s^2]
    double d_min{0.5};  // minimum inter-vehicle distance [m]
};

struct FleetState {
    std::vector<VehicleState> vehicles;
    MotionLimits limits{};

    [[nodiscard]] std::size_t size() const noexcept { return vehicles.size(); }
    [[nodiscard]] std::vector<Vec2> positions() const;
};

// ─── Sensor ─────────────────────────────────────────────────────────────────

/// 1 / (1 + (|x| / c_b)^n_b). Equals 1 at x = 0 and exactly 0.5 at |x| = c_b.
[[nodiscard]] double butterworth_1d(double x, const SensorParams& p);

/// Radially symmetric footprint: butterworth_1d(hypot(dx, dy)).
[[nodiscard]] double butterworth_2d(double dx, double dy, const SensorParams& p);

// ─── Rewards ────────────────────────────────────────────────────────────────

/// Coverage of one target by the whole fleet: min(1, sum_j f_b2(p - q_j)).
[[nodiscard]] double coverage(const Vec2& target, std::span<const Vec2> vehicles,
                              const SensorParams& p);

/// One step of the planning reward model with hard saturation:
/// r_i' = (r_i + dt * k_gain) * (1 - coverage_i). Never produces negative values.
[[nodiscard]] RewardVector reward_step(const RewardVector& r, std::span<const Vec2> targets,
                                       std::span<const Vec2> vehicles, const SensorParams& p,
                                       double dt);

/// Scoring model: reset to 0 if any vehicle lies within eval_radius (inclusive),
/// otherwise grow by dt * k_gain. No smoothing.
[[nodiscard]] RewardVector eval_reward_step(const RewardVector& r, std::span<const Vec2> targets,
                                            std::span<const Vec2> vehicles, double eval_radius,
                                            double dt);

// ─── Vehicles ───────────────────────────────────────────────────────────────

/// Exact double-integrator step under a constant acceleration held for dt.
[[nodiscard]] VehicleState vehicle_step(const VehicleState& s, const Vec2& accel, double dt);

enum class MotionConstraint { speed, accel_x, accel_y };

struct ConstraintViolation {
    MotionConstraint constraint;
    double value;  // <= 0 means satisfied
};

/// Signed violations of the speed limit and both acceleration bounds.
[[nodiscard]] std::vector<ConstraintViolation> motion_constraint_violations(
    const VehicleState& s, const Vec2& accel, const MotionLimits& limits);

struct PairDistance {
    double distance{std::numeric_limits<double>::infinity()};
    std::size_t first{0};
    std::size_t second{0};
};

/// Closest pair of vehicles. A single vehicle yields distance = +inf.
[[nodiscard]] PairDistance pairwise_min_distance(std::span<const Vec2> positions);
[[nodiscard]] PairDistance pairwise_min_distance(const FleetState& fleet);

// ─── Targets ────────────────────────────────────────────────────────────────

[[nodiscard]] double drift_offset(double t, const DriftParams& d);

[[nodiscard]] Vec2 target_position_at(const Target& target, double t);
[[nodiscard]] std::vector<Vec2> target_positions_at(const TargetSet& ts, double t);

/// cols x rows static targets, row-major (x fastest), equal spacing on both axes.
[[nodiscard]] TargetSet make_grid_targets(int cols, int rows, double spacing,
                                          const Vec2& origin = Vec2::Zero());
[[nodiscard]] TargetSet make_grid_targets(int width, double spacing,
                                          const Vec2& origin = Vec2::Zero());

}  // namespace impdr
