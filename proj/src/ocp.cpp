// SPDX-License-Identifier: Apache-2.0
#include "impdr/ocp.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "impdr/errors.hpp"

namespace impdr::mpc {

namespace {

/// Butterworth footprint written in terms of u = d^2 / c^2, with an integer
/// fast path for the usual even degrees.
class Footprint {
public:
    explicit Footprint(const SensorParams& p)
        : inv_c2_(1.0 / (p.cutoff * p.cutoff)), half_degree_(0.5 * p.degree) {
        const double r = std::round(half_degree_);
        if (r == half_degree_ && r >= 1.0 && r <= 16.0) int_power_ = static_cast<int>(r);
    }

    /// f(d) for d = (dx, dy).
    [[nodiscard]] double value(double dx, double dy) const {
        const double u = (dx * dx + dy * dy) * inv_c2_;
        return 1.0 / (1.0 + power(u));
    }

    /// f(d) and df/d(dx), df/d(dy).
    double value_and_gradient(double dx, double dy, double& gx, double& gy) const {
        const double u = (dx * dx + dy * dy) * inv_c2_;
        double um1;  // u^(m-1)
        double um;
        if (int_power_ > 0) {
            um1 = ipow(u, int_power_ - 1);
            um = um1 * u;
        } else {
            um = std::pow(u, half_degree_);
            um1 = u > 0.0 ? um / u : (half_degree_ > 1.0 ? 0.0 : (half_degree_ == 1.0 ? 1.0 : 0.0));
        }
        const double f = 1.0 / (1.0 + um);
        const double dfdu = -half_degree_ * um1 * f * f;
        gx = dfdu * 2.0 * dx * inv_c2_;
        gy = dfdu * 2.0 * dy * inv_c2_;
        return f;
    }

private:
    static double ipow(double u, int n) {
        switch (n) {
            case 0: return 1.0;
            case 1: return u;
            case 2: return u * u;
            case 3: return u * u * u;
            case 4: {
                const double u2 = u * u;
                return u2 * u2;
            }
            default: break;
        }
        double r = 1.0;
        double b = u;
        while (n > 0) {
            if (n & 1) r *= b;
            b *= b;
            n >>= 1;
        }
        return r;
    }

    [[nodiscard]] double power(double u) const {
        return int_power_ > 0 ? ipow(u, int_power_) : std::pow(u, half_degree_);
    }

    double inv_c2_;
    double half_degree_;
    int int_power_{0};
};

// exp() below this underflows to zero; skipping it avoids libm's slow error path.
constexpr double kExpUnderflow = -745.0;

double softplus(double z, double beta) {
    const double bz = beta * z;
    if (bz < kExpUnderflow) return 0.0;
    if (bz > -kExpUnderflow) return z;
    if (bz > 0.0) return z + std::log1p(std::exp(-bz)) / beta;
    return std::log1p(std::exp(bz)) / beta;
}

double saturate_derivative(double s, double beta) {
    // d/ds [s - softplus(s - 1)] = 1 - logistic(beta (s - 1))
    const double bz = beta * (s - 1.0);
    if (bz < kExpUnderflow) return 1.0;
    if (bz > -kExpUnderflow) return 0.0;
    if (bz >= 0.0) {
        const double e = std::exp(-bz);
        return e / (1.0 + e);
    }
    return 1.0 / (1.0 + std::exp(bz));
}

void check_controls(const OcpProblem& ocp, std::span<const double> controls) {
    if (controls.size() != ocp.control_count()) {
        throw ContractError("control vector has " + std::to_string(controls.size()) +
                            " entries, expected horizon x vehicles x 2 = " +
                            std::to_string(ocp.control_count()));
    }
}

double stage_value(const std::vector<double>& r, StageCost mode) {
    double s = 0.0;
    if (mode == StageCost::squared) {
        for (double v : r) s += v * v;
    } else {
        for (double v : r) s += v;
    }
    return s;
}

/// Positions and velocities for steps 0..N under the given controls (flat layout).
void integrate(const OcpProblem& ocp, std::span<const double> u, std::vector<double>& q,
               std::vector<double>& v) {
    const std::size_t m = ocp.vehicle_count();
    const int n = ocp.horizon;
    const double dt = ocp.dt, half_dt2 = 0.5 * ocp.dt * ocp.dt;
    q.resize((n + 1) * m * 2);
    v.resize((n + 1) * m * 2);
    for (std::size_t j = 0; j < m; ++j) {
        q[2 * j] = ocp.fleet.vehicles[j].position.x();
        q[2 * j + 1] = ocp.fleet.vehicles[j].position.y();
        v[2 * j] = ocp.fleet.vehicles[j].velocity.x();
        v[2 * j + 1] = ocp.fleet.vehicles[j].velocity.y();
    }
    for (int k = 0; k < n; ++k) {
        const std::size_t cur = k * m * 2, nxt = (k + 1) * m * 2;
        for (std::size_t a = 0; a < m * 2; ++a) {
            q[nxt + a] = q[cur + a] + v[cur + a] * dt + u[cur + a] * half_dt2;
            v[nxt + a] = v[cur + a] + u[cur + a] * dt;
        }
    }
}

/// Maps adjoints of positions/velocities at steps 1..N (flat, step 0 ignored)
/// onto the controls: grad += dJ/du.
void backprop_integrator(const OcpProblem& ocp, const std::vector<double>& dq,
                         const std::vector<double>& dv, std::span<double> grad) {
    const std::size_t w = ocp.vehicle_count() * 2;
    const double dt = ocp.dt, half_dt2 = 0.5 * ocp.dt * ocp.dt;
    std::vector<double> lq(w, 0.0), lv(w, 0.0);
    for (int k = ocp.horizon; k >= 1; --k) {
        const std::size_t off = k * w;
        for (std::size_t a = 0; a < w; ++a) {
            lv[a] = dv[off + a] + lv[a] + dt * lq[a];
            lq[a] = dq[off + a] + lq[a];
            grad[(k - 1) * w + a] += half_dt2 * lq[a] + dt * lv[a];
        }
    }
}

double input_change_term(const OcpProblem& ocp, std::span<const double> u, std::span<double> grad,
                         std::vector<double>* per_step) {
    const double kr = ocp.cost.input_change_penalty;
    const std::size_t w = ocp.vehicle_count() * 2;
    double total = 0.0;
    for (int k = 0; k < ocp.horizon; ++k) {
        double step = 0.0;
        for (std::size_t a = 0; a < w; ++a) {
            double prev = 0.0;
            if (k > 0) {
                prev = u[(k - 1) * w + a];
            } else if (ocp.previous_input) {
                prev = (*ocp.previous_input)[a / 2][a % 2];
            }
            const double du = u[k * w + a] - prev;
            step += kr * du * du;
            if (!grad.empty()) {
                grad[k * w + a] += 2.0 * kr * du;
                if (k > 0) grad[(k - 1) * w + a] -= 2.0 * kr * du;
            }
        }
        if (per_step) (*per_step)[k] += step;
        total += step;
    }
    return total;
}

}  // namespace

void OcpProblem::validate() const {
    if (horizon < 1) throw ContractError("horizon must be at least one step");
    if (!(dt > 0.0)) throw ContractError("sampling period must be positive");
    if (fleet.size() == 0) throw ContractError("fleet is empty");
    sensor.validate();
    if (static_cast<int>(target_path.size()) != horizon + 1) {
        throw ContractError("target path needs horizon + 1 = " + std::to_string(horizon + 1) +
                            " rows, got " + std::to_string(target_path.size()));
    }
    for (const auto& row : target_path) {
        if (row.size() != rewards.size()) {
            throw ContractError("target path row length differs from the reward vector");
        }
    }
    if (previous_input && previous_input->size() != fleet.size()) {
        throw ContractError("previous input must have one entry per vehicle");
    }
    if (cost.input_change_penalty < 0.0 || cost.terminal_weight < 0.0) {
        throw ContractError("cost weights must be non-negative");
    }
}

double Trajectory::total() const noexcept {
    double s = terminal_cost;
    for (double c : stage_costs) s += c;
    return s;
}

double saturate(double s, Saturation mode, double sharpness) noexcept {
    if (mode == Saturation::hard) return std::min(1.0, s);
    return s - softplus(s - 1.0, sharpness);
}

Trajectory rollout(const OcpProblem& ocp, std::span<const double> controls, Saturation mode) {
    ocp.validate();
    check_controls(ocp, controls);
    const std::size_t m = ocp.vehicle_count(), np = ocp.target_count();
    const int n = ocp.horizon;
    std::vector<double> q, v;
    integrate(ocp, controls, q, v);

    Trajectory tr;
    tr.vehicles.assign(n + 1, std::vector<VehicleState>(m));
    tr.rewards.assign(n + 1, std::vector<double>(np));
    tr.stage_costs.assign(n, 0.0);
    for (int k = 0; k <= n; ++k) {
        for (std::size_t j = 0; j < m; ++j) {
            const std::size_t o = (k * m + j) * 2;
            tr.vehicles[k][j] = VehicleState{Vec2(q[o], q[o + 1]), Vec2(v[o], v[o + 1])};
        }
    }

    const Footprint fp(ocp.sensor);
    tr.rewards[0] = ocp.rewards.values;
    const double growth = ocp.dt * ocp.rewards.gain;
    for (int k = 0; k < n; ++k) {
        for (std::size_t i = 0; i < np; ++i) {
            const Vec2& p = ocp.target_path[k][i];
            double s = 0.0;
            for (std::size_t j = 0; j < m; ++j) {
                const std::size_t o = (k * m + j) * 2;
                s += fp.value(p.x() - q[o], p.y() - q[o + 1]);
            }
            const double c = saturate(s, mode, ocp.saturation_sharpness);
            tr.rewards[k + 1][i] = (tr.rewards[k][i] + growth) * (1.0 - c);
        }
        tr.stage_costs[k] = stage_value(tr.rewards[k], ocp.cost.stage);
    }
    input_change_term(ocp, controls, {}, &tr.stage_costs);

    if (ocp.cost.terminal == TerminalCost::same_as_stage) {
        tr.terminal_cost = stage_value(tr.rewards[n], ocp.cost.stage);
    } else {
        for (std::size_t j = 0; j < m; ++j) {
            tr.terminal_cost +=
                ocp.cost.terminal_weight * (tr.vehicles[n][j].position - ocp.cost.terminal_point).squaredNorm();
        }
    }
    return tr;
}

double cost(const OcpProblem& ocp, std::span<const double> controls, Saturation mode) {
    return rollout(ocp, controls, mode).total();
}

double cost_and_gradient(const OcpProblem& ocp, std::span<const double> controls,
                         std::span<double> grad) {
    check_controls(ocp, controls);
    if (grad.size() != controls.size()) throw ContractError("gradient buffer has the wrong size");
    const std::size_t m = ocp.vehicle_count(), np = ocp.target_count();
    const int n = ocp.horizon;
    const double beta = ocp.saturation_sharpness;
    const double growth = ocp.dt * ocp.rewards.gain;
    const bool squared = ocp.cost.stage == StageCost::squared;

    std::vector<double> q, v;
    integrate(ocp, controls, q, v);

    // Forward: rewards r_k and summed footprints s_k.
    std::vector<double> r((n + 1) * np), s(n * np), keep(n * np);
    std::copy(ocp.rewards.values.begin(), ocp.rewards.values.end(), r.begin());
    const Footprint fp(ocp.sensor);
    double total = 0.0;
    for (int k = 0; k < n; ++k) {
        for (std::size_t i = 0; i < np; ++i) {
            const Vec2& p = ocp.target_path[k][i];
            double sum = 0.0;
            for (std::size_t j = 0; j < m; ++j) {
                const std::size_t o = (k * m + j) * 2;
                sum += fp.value(p.x() - q[o], p.y() - q[o + 1]);
            }
            s[k * np + i] = sum;
            keep[k * np + i] = 1.0 - saturate(sum, Saturation::smooth, beta);
            const double rk = r[k * np + i];
            r[(k + 1) * np + i] = (rk + growth) * keep[k * np + i];
            total += squared ? rk * rk : rk;
        }
        if (!std::isfinite(total)) throw InputError("non-finite cost at step " + std::to_string(k));
        for (std::size_t i = 0; i < np; ++i) {
            if (!std::isfinite(r[(k + 1) * np + i])) {
                throw InputError("non-finite reward state at step " + std::to_string(k + 1));
            }
        }
        for (std::size_t a = 0; a < 2 * m; ++a) {
            if (!std::isfinite(q[(k + 1) * m * 2 + a]) || !std::isfinite(v[(k + 1) * m * 2 + a])) {
                throw InputError("non-finite vehicle state at step " + std::to_string(k + 1));
            }
        }
    }

    std::fill(grad.begin(), grad.end(), 0.0);
    std::vector<double> dq((n + 1) * m * 2, 0.0), dv((n + 1) * m * 2, 0.0);
    std::vector<double> lr(np);

    // Terminal term.
    if (ocp.cost.terminal == TerminalCost::same_as_stage) {
        for (std::size_t i = 0; i < np; ++i) {
            const double rn = r[n * np + i];
            total += squared ? rn * rn : rn;
            lr[i] = squared ? 2.0 * rn : 1.0;
        }
    } else {
        std::fill(lr.begin(), lr.end(), 0.0);
        const double w = ocp.cost.terminal_weight;
        for (std::size_t j = 0; j < m; ++j) {
            const std::size_t o = (n * m + j) * 2;
            const double ex = q[o] - ocp.cost.terminal_point.x();
            const double ey = q[o + 1] - ocp.cost.terminal_point.y();
            total += w * (ex * ex + ey * ey);
            dq[o] += 2.0 * w * ex;
            dq[o + 1] += 2.0 * w * ey;
        }
    }
    if (!std::isfinite(total)) throw InputError("non-finite cost at step " + std::to_string(n));

    // Reverse sweep through the reward recursion.
    for (int k = n - 1; k >= 0; --k) {
        for (std::size_t i = 0; i < np; ++i) {
            const double sum = s[k * np + i];
            const double rk = r[k * np + i];
            const double next_adj = lr[i];
            // dJ/ds_{k,i}
            const double ds = -next_adj * (rk + growth) * saturate_derivative(sum, beta);
            lr[i] = (squared ? 2.0 * rk : 1.0) + next_adj * keep[k * np + i];
            if (ds == 0.0 || k == 0) continue;  // q_0 is fixed
            const Vec2& p = ocp.target_path[k][i];
            for (std::size_t j = 0; j < m; ++j) {
                const std::size_t o = (k * m + j) * 2;
                double gx, gy;
                fp.value_and_gradient(p.x() - q[o], p.y() - q[o + 1], gx, gy);
                // d = p - q, so d/dq = -d/dd.
                dq[o] -= ds * gx;
                dq[o + 1] -= ds * gy;
            }
        }
    }
    backprop_integrator(ocp, dq, dv, grad);
    total += input_change_term(ocp, controls, grad, nullptr);
    return total;
}

nlp::InequalityBlock speed_constraints(const OcpProblem& ocp, double v_cap) {
    const std::size_t m = ocp.vehicle_count();
    const int n = ocp.horizon;
    const double inv = 1.0 / (ocp.fleet.limits.v_max * ocp.fleet.limits.v_max);
    const double cap2 = v_cap * v_cap;
    nlp::InequalityBlock b;
    b.count = static_cast<std::size_t>(n) * m;
    b.values = [&ocp, m, n, inv, cap2](std::span<const double> u, std::span<double> out) {
        std::vector<double> q, v;
        integrate(ocp, u, q, v);
        for (int k = 1; k <= n; ++k) {
            for (std::size_t j = 0; j < m; ++j) {
                const std::size_t o = (k * m + j) * 2;
                out[(k - 1) * m + j] = (v[o] * v[o] + v[o + 1] * v[o + 1] - cap2) * inv;
            }
        }
    };
    b.accumulate_gradient = [&ocp, m, n, inv](std::span<const double> u, std::span<const double> w,
                                              std::span<double> grad) {
        std::vector<double> q, v;
        integrate(ocp, u, q, v);
        std::vector<double> dq((n + 1) * m * 2, 0.0), dv((n + 1) * m * 2, 0.0);
        for (int k = 1; k <= n; ++k) {
            for (std::size_t j = 0; j < m; ++j) {
                const double wk = w[(k - 1) * m + j];
                if (wk == 0.0) continue;
                const std::size_t o = (k * m + j) * 2;
                dv[o] = 2.0 * wk * v[o] * inv;
                dv[o + 1] = 2.0 * wk * v[o + 1] * inv;
            }
        }
        backprop_integrator(ocp, dq, dv, grad);
    };
    return b;
}

nlp::InequalityBlock separation_constraints(const OcpProblem& ocp, double d_req) {
    const std::size_t m = ocp.vehicle_count();
    const int n = ocp.horizon;
    const std::size_t pairs = m * (m - 1) / 2;
    const double inv = 1.0 / (ocp.fleet.limits.d_min * ocp.fleet.limits.d_min);
    const double req2 = d_req * d_req;
    nlp::InequalityBlock b;
    b.count = pairs * static_cast<std::size_t>(n);
    if (b.count == 0) return b;
    b.values = [&ocp, m, n, pairs, inv, req2](std::span<const double> u, std::span<double> out) {
        std::vector<double> q, v;
        integrate(ocp, u, q, v);
        std::size_t idx = 0;
        for (int k = 1; k <= n; ++k) {
            for (std::size_t a = 0; a < m; ++a) {
                for (std::size_t c = a + 1; c < m; ++c) {
                    const std::size_t oa = (k * m + a) * 2, oc = (k * m + c) * 2;
                    const double dx = q[oa] - q[oc], dy = q[oa + 1] - q[oc + 1];
                    out[idx++] = (req2 - dx * dx - dy * dy) * inv;
                }
            }
        }
        (void)pairs;
    };
    b.accumulate_gradient = [&ocp, m, n, inv](std::span<const double> u, std::span<const double> w,
                                              std::span<double> grad) {
        std::vector<double> q, v;
        integrate(ocp, u, q, v);
        std::vector<double> dq((n + 1) * m * 2, 0.0), dv((n + 1) * m * 2, 0.0);
        std::size_t idx = 0;
        for (int k = 1; k <= n; ++k) {
            for (std::size_t a = 0; a < m; ++a) {
                for (std::size_t c = a + 1; c < m; ++c) {
                    const double wk = w[idx++];
                    if (wk == 0.0) continue;
                    const std::size_t oa = (k * m + a) * 2, oc = (k * m + c) * 2;
                    const double gx = -2.0 * wk * (q[oa] - q[oc]) * inv;
                    const double gy = -2.0 * wk * (q[oa + 1] - q[oc + 1]) * inv;
                    dq[oa] += gx;
                    dq[oa + 1] += gy;
                    dq[oc] -= gx;
                    dq[oc + 1] -= gy;
                }
            }
        }
        backprop_integrator(ocp, dq, dv, grad);
    };
    return b;
}

Vec2 ControlPlan::acceleration(int step, std::size_t vehicle) const {
    const std::size_t o = (static_cast<std::size_t>(step) * vehicles + vehicle) * 2;
    return Vec2(controls.at(o), controls.at(o + 1));
}

std::vector<double> shift_warm_start(const ControlPlan& prev) {
    if (prev.horizon < 1) throw ContractError("cannot shift an empty plan");
    const std::size_t w = prev.vehicles * 2;
    std::vector<double> out(prev.controls.size());
    for (int k = 0; k < prev.horizon; ++k) {
        const int src = std::min(k + 1, prev.horizon - 1);
        std::copy_n(prev.controls.begin() + src * w, w, out.begin() + k * w);
    }
    return out;
}

}  // namespace impdr::mpc
