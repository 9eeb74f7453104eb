// SPDX-License-Identifier: Apache-2.0
#include "impdr/models.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "impdr/errors.hpp"

namespace impdr {

void SensorParams::validate() const {
    if (!(cutoff > 0.0) || !std::isfinite(cutoff)) {
        throw ContractError("sensor cutoff must be positive, got " + std::to_string(cutoff));
    }
    if (!(degree >= 1.0) || !std::isfinite(degree)) {
        throw ContractError("sensor degree must be >= 1, got " + std::to_string(degree));
    }
}

std::vector<Vec2> FleetState::positions() const {
    std::vector<Vec2> out;
    out.reserve(vehicles.size());
    for (const auto& v : vehicles) out.push_back(v.position);
    return out;
}

double butterworth_1d(double x, const SensorParams& p) {
    if (x == 0.0) return 1.0;
    return 1.0 / (1.0 + std::pow(std::abs(x) / p.cutoff, p.degree));
}

double butterworth_2d(double dx, double dy, const SensorParams& p) {
    return butterworth_1d(std::sqrt(dx * dx + dy * dy), p);
}

double coverage(const Vec2& target, std::span<const Vec2> vehicles, const SensorParams& p) {
    double sum = 0.0;
    for (const auto& q : vehicles) sum += butterworth_2d(target.x() - q.x(), target.y() - q.y(), p);
    return std::min(1.0, sum);
}

namespace {

void check_lengths(const RewardVector& r, std::span<const Vec2> targets, double dt) {
    if (r.size() != targets.size()) {
        throw ContractError("reward vector has " + std::to_string(r.size()) + " entries but " +
                            std::to_string(targets.size()) + " target positions were given");
    }
    if (!(dt > 0.0)) throw ContractError("sampling period must be positive");
}

}  // namespace

RewardVector reward_step(const RewardVector& r, std::span<const Vec2> targets,
                         std::span<const Vec2> vehicles, const SensorParams& p, double dt) {
    check_lengths(r, targets, dt);
    RewardVector next{std::vector<double>(r.size()), r.gain};
    for (std::size_t i = 0; i < r.size(); ++i) {
        const double c = coverage(targets[i], vehicles, p);
        next.values[i] = (r.values[i] + dt * r.gain) * (1.0 - c);
    }
    return next;
}

RewardVector eval_reward_step(const RewardVector& r, std::span<const Vec2> targets,
                              std::span<const Vec2> vehicles, double eval_radius, double dt) {
    check_lengths(r, targets, dt);
    if (!(eval_radius > 0.0)) throw ContractError("evaluation radius must be positive");
    RewardVector next{std::vector<double>(r.size()), r.gain};
    const double r2 = eval_radius * eval_radius;
    for (std::size_t i = 0; i < r.size(); ++i) {
        const bool seen = std::any_of(vehicles.begin(), vehicles.end(), [&](const Vec2& q) {
            return (targets[i] - q).squaredNorm() <= r2;
        });
        next.values[i] = seen ? 0.0 : r.values[i] + dt * r.gain;
    }
    return next;
}

VehicleState vehicle_step(const VehicleState& s, const Vec2& accel, double dt) {
    return VehicleState{s.position + s.velocity * dt + accel * (0.5 * dt * dt),
                        s.velocity + accel * dt};
}

std::vector<ConstraintViolation> motion_constraint_violations(const VehicleState& s,
                                                              const Vec2& accel,
                                                              const MotionLimits& limits) {
    return {
        {MotionConstraint::speed, s.velocity.norm() - limits.v_max},
        {MotionConstraint::accel_x, std::abs(accel.x()) - limits.a_max},
        {MotionConstraint::accel_y, std::abs(accel.y()) - limits.a_max},
    };
}

PairDistance pairwise_min_distance(std::span<const Vec2> positions) {
    PairDistance best;
    for (std::size_t i = 0; i < positions.size(); ++i) {
        for (std::size_t j = i + 1; j < positions.size(); ++j) {
            const double d = (positions[i] - positions[j]).norm();
            if (d < best.distance) best = {d, i, j};
        }
    }
    return best;
}

PairDistance pairwise_min_distance(const FleetState& fleet) {
    const auto pos = fleet.positions();
    return pairwise_min_distance(pos);
}

double drift_offset(double t, const DriftParams& d) {
    return t * d.drift_velocity + d.amplitude * std::sin(t * d.angular_velocity);
}

Vec2 target_position_at(const Target& target, double t) {
    if (target.drift_x.is_static() && target.drift_y.is_static()) return target.base;
    return target.base + Vec2(drift_offset(t, target.drift_x), drift_offset(t, target.drift_y));
}

std::vector<Vec2> target_positions_at(const TargetSet& ts, double t) {
    std::vector<Vec2> out;
    out.reserve(ts.size());
    for (const auto& target : ts.targets) out.push_back(target_position_at(target, t));
    return out;
}

TargetSet make_grid_targets(int cols, int rows, double spacing, const Vec2& origin) {
    if (cols < 1 || rows < 1) throw ContractError("grid needs at least one row and column");
    if (!(spacing > 0.0)) throw ContractError("grid spacing must be positive");
    TargetSet ts;
    ts.targets.reserve(static_cast<std::size_t>(cols) * static_cast<std::size_t>(rows));
    for (int row = 0; row < rows; ++row) {
        for (int col = 0; col < cols; ++col) {
            ts.targets.push_back(Target{origin + Vec2(col * spacing, row * spacing)});
        }
    }
    return ts;
}

TargetSet make_grid_targets(int width, double spacing, const Vec2& origin) {
    return make_grid_targets(width, width, spacing, origin);
}

}  // namespace impdr
