// SPDX-License-Identifier: Apache-2.0
#include "impdr/grasp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <string>

#include "impdr/errors.hpp"

namespace impdr::baselines {

double edge_travel_time(double spacing, const TravelModel& model) {
    if (!(spacing > 0.0)) throw ContractError("edge length must be positive");
    const double v = model.speed;
    if (!(v > 0.0) || !std::isfinite(v)) throw ContractError("travel speed must be positive");
    if (model.mode == TravelMode::lower_bound) return spacing / v;
    const double a = model.acceleration;
    if (!(a > 0.0) || !std::isfinite(a)) throw ContractError("travel acceleration must be positive");
    if (spacing >= v * v / a) return spacing / v + v / a;
    return 2.0 * std::sqrt(spacing / a);
}

double edge_progress(double t, double spacing, const TravelModel& model) {
    const double total = edge_travel_time(spacing, model);
    if (t <= 0.0) return 0.0;
    if (t >= total) return spacing;
    if (model.mode == TravelMode::lower_bound) return model.speed * t;
    const double a = model.acceleration;
    // Symmetric profile: accelerate, optionally cruise, decelerate.
    const double peak = std::min(model.speed, a * 0.5 * total);
    const double ramp = peak / a;
    if (t <= ramp) return 0.5 * a * t * t;
    if (t >= total - ramp) {
        const double rest = total - t;
        return spacing - 0.5 * a * rest * rest;
    }
    return 0.5 * a * ramp * ramp + peak * (t - ramp);
}

GridGraph::GridGraph(int cols, int rows, double spacing, const Vec2& origin)
    : cols_(cols), rows_(rows), spacing_(spacing), origin_(origin) {
    if (cols < 1 || rows < 1) throw ContractError("grid needs at least one node");
    if (!(spacing > 0.0)) throw ContractError("grid spacing must be positive");
}

int GridGraph::edge_count() const noexcept { return (cols_ - 1) * rows_ + cols_ * (rows_ - 1); }

Vec2 GridGraph::position(int node) const {
    if (node < 0 || node >= node_count()) throw ContractError("node index out of range");
    return origin_ + spacing_ * Vec2(node % cols_, node / cols_);
}

std::vector<int> GridGraph::neighbors(int node) const {
    const int x = node % cols_, y = node / cols_;
    std::vector<int> out;
    if (y > 0) out.push_back(node - cols_);
    if (x > 0) out.push_back(node - 1);
    if (x + 1 < cols_) out.push_back(node + 1);
    if (y + 1 < rows_) out.push_back(node + cols_);
    return out;
}

bool GridGraph::adjacent(int a, int b) const {
    const int dx = std::abs(a % cols_ - b % cols_), dy = std::abs(a / cols_ - b / cols_);
    return dx + dy == 1;
}

int GridGraph::nearest_node(const Vec2& p) const {
    int best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (int i = 0; i < node_count(); ++i) {
        const double d = (position(i) - p).squaredNorm();
        if (d < best_d) {
            best_d = d;
            best = i;
        }
    }
    return best;
}

std::vector<int> GridGraph::path(int a, int b) const {
    std::vector<int> out;
    int x = a % cols_, y = a / cols_;
    const int bx = b % cols_, by = b / cols_;
    while (x != bx) {
        x += bx > x ? 1 : -1;
        out.push_back(y * cols_ + x);
    }
    while (y != by) {
        y += by > y ? 1 : -1;
        out.push_back(y * cols_ + x);
    }
    return out;
}

void GraspConfig::validate() const {
    if (iterations < 1) throw ContractError("GRASP needs at least one iteration");
    if (!(rcl_alpha > 0.0) || rcl_alpha > 1.0) throw ContractError("rcl_alpha must be in (0, 1]");
    if (!(horizon >= 0.0)) throw ContractError("GRASP horizon must be non-negative");
    if (!(travel.speed > 0.0) || !(travel.acceleration > 0.0)) {
        throw ContractError("travel model needs positive speed and acceleration");
    }
}

namespace {

/// Integral of (a + g s)^2 for s in [0, tau].
double ramp_integral(double a, double g, double tau) {
    if (tau <= 0.0) return 0.0;
    if (g == 0.0) return a * a * tau;
    const double b = a + g * tau;
    return (b * b * b - a * a * a) / (3.0 * g);
}

/// Squared-reward integral for one node given its sorted visit times.
double node_integral(double r0, const std::vector<double>& visits, double horizon, double gain) {
    double total = 0.0, t = 0.0, r = r0;
    for (double v : visits) {
        if (v > horizon) break;
        total += ramp_integral(r, gain, v - t);
        t = v;
        r = 0.0;
    }
    return total + ramp_integral(r, gain, horizon - t);
}

class Evaluator {
public:
    Evaluator(const GridGraph& g, const std::vector<double>& rewards, const GraspConfig& cfg)
        : graph_(g), rewards_(rewards), cfg_(cfg),
          edge_time_(edge_travel_time(g.spacing(), cfg.travel)) {
        idle_.resize(rewards.size());
        for (std::size_t i = 0; i < rewards.size(); ++i) {
            idle_[i] = ramp_integral(rewards[i], cfg.gain, cfg.horizon);
            idle_total_ += idle_[i];
        }
    }

    [[nodiscard]] double edge_time() const noexcept { return edge_time_; }

    VehicleRoute build(int start, const std::vector<int>& waypoints) const {
        VehicleRoute r;
        r.waypoints = waypoints;
        r.nodes.push_back(start);
        r.arrival.push_back(0.0);
        int at = start;
        for (int w : waypoints) {
            for (int n : graph_.path(at, w)) {
                r.nodes.push_back(n);
                r.arrival.push_back(r.arrival.back() + edge_time_);
            }
            at = w;
        }
        return r;
    }

    [[nodiscard]] bool within_budget(const VehicleRoute& r) const {
        return r.arrival.back() <= cfg_.horizon + 1e-9;
    }

    double objective(const std::vector<VehicleRoute>& routes) const {
        // Only visited nodes differ from the idle baseline.
        buf_.clear();
        for (const auto& r : routes) {
            for (std::size_t k = 0; k < r.nodes.size(); ++k) buf_.emplace_back(r.nodes[k], r.arrival[k]);
        }
        std::sort(buf_.begin(), buf_.end());
        double total = idle_total_;
        std::size_t k = 0;
        while (k < buf_.size()) {
            const int node = buf_[k].first;
            double t = 0.0, r = rewards_[node], acc = 0.0;
            for (; k < buf_.size() && buf_[k].first == node; ++k) {
                const double v = buf_[k].second;
                if (v > cfg_.horizon) continue;
                acc += ramp_integral(r, cfg_.gain, v - t);
                t = v;
                r = 0.0;
            }
            acc += ramp_integral(r, cfg_.gain, cfg_.horizon - t);
            total += acc - idle_[node];
        }
        return total;
    }

private:
    const GridGraph& graph_;
    const std::vector<double>& rewards_;
    const GraspConfig& cfg_;
    double edge_time_;
    std::vector<double> idle_;
    double idle_total_{0.0};
    mutable std::vector<std::pair<int, double>> buf_;
};

struct Candidate {
    std::size_t vehicle;
    int node;
    double ratio;
};

std::vector<VehicleRoute> construct(const Evaluator& ev, const GridGraph& g,
                                    const std::vector<int>& starts, const GraspConfig& cfg,
                                    std::mt19937_64& rng) {
    std::vector<std::vector<int>> wps(starts.size());
    std::vector<VehicleRoute> routes;
    for (int s : starts) routes.push_back(ev.build(s, {}));
    double current = ev.objective(routes);

    while (true) {
        std::vector<bool> covered(g.node_count(), false);
        for (const auto& r : routes) {
            for (int n : r.nodes) covered[n] = true;
        }
        std::vector<Candidate> cands;
        for (std::size_t v = 0; v < routes.size(); ++v) {
            const int at = routes[v].nodes.back();
            const double t0 = routes[v].arrival.back();
            for (int n = 0; n < g.node_count(); ++n) {
                if (covered[n]) continue;
                const auto p = g.path(at, n);
                const double dt = ev.edge_time() * static_cast<double>(p.size());
                if (t0 + dt > cfg.horizon + 1e-9) continue;
                auto trial = routes;
                auto w = wps[v];
                w.push_back(n);
                trial[v] = ev.build(starts[v], w);
                const double gain = current - ev.objective(trial);
                if (gain > 0.0) cands.push_back({v, n, gain / dt});
            }
        }
        if (cands.empty()) break;
        std::stable_sort(cands.begin(), cands.end(),
                         [](const Candidate& a, const Candidate& b) { return a.ratio > b.ratio; });
        const std::size_t rcl = std::max<std::size_t>(
            1, static_cast<std::size_t>(std::ceil(cfg.rcl_alpha * static_cast<double>(cands.size()))));
        std::uniform_int_distribution<std::size_t> pick(0, rcl - 1);
        const auto& c = cands[pick(rng)];
        wps[c.vehicle].push_back(c.node);
        routes[c.vehicle] = ev.build(starts[c.vehicle], wps[c.vehicle]);
        current = ev.objective(routes);
    }
    return routes;
}

/// First-improvement local search; returns the improved routes.
std::vector<VehicleRoute> local_search(const Evaluator& ev, const GridGraph& g,
                                       const std::vector<int>& starts,
                                       std::vector<VehicleRoute> routes) {
    double current = ev.objective(routes);
    auto try_move = [&](std::size_t v, std::vector<int> w) {
        auto cand = ev.build(starts[v], w);
        if (!ev.within_budget(cand)) return false;
        auto trial = routes;
        trial[v] = std::move(cand);
        const double obj = ev.objective(trial);
        if (obj < current - 1e-9 * std::max(1.0, std::abs(current))) {
            routes = std::move(trial);
            current = obj;
            return true;
        }
        return false;
    };

    for (int pass = 0; pass < 100; ++pass) {
        bool improved = false;
        for (std::size_t v = 0; v < routes.size() && !improved; ++v) {
            const auto w = routes[v].waypoints;
            const std::size_t n = w.size();
            // 2-opt: reverse w[i..j].
            for (std::size_t i = 0; i + 1 < n && !improved; ++i) {
                for (std::size_t j = i + 1; j < n && !improved; ++j) {
                    auto t = w;
                    std::reverse(t.begin() + i, t.begin() + j + 1);
                    improved = try_move(v, t);
                }
            }
            // Removal.
            for (std::size_t i = 0; i < n && !improved; ++i) {
                auto t = w;
                t.erase(t.begin() + i);
                improved = try_move(v, t);
            }
        }
        if (improved) continue;

        std::vector<bool> covered(g.node_count(), false);
        for (const auto& r : routes) {
            for (int node : r.nodes) covered[node] = true;
        }
        for (std::size_t v = 0; v < routes.size() && !improved; ++v) {
            const auto w = routes[v].waypoints;
            for (int node = 0; node < g.node_count() && !improved; ++node) {
                if (covered[node]) continue;
                // Insertion at every position.
                for (std::size_t pos = 0; pos <= w.size() && !improved; ++pos) {
                    auto t = w;
                    t.insert(t.begin() + pos, node);
                    improved = try_move(v, t);
                }
                // Swap with an existing waypoint.
                for (std::size_t pos = 0; pos < w.size() && !improved; ++pos) {
                    auto t = w;
                    t[pos] = node;
                    improved = try_move(v, t);
                }
            }
        }
        if (!improved) break;
    }
    return routes;
}

}  // namespace

double plan_objective(const GridGraph& graph, const std::vector<double>& rewards,
                      const TeamPlan& plan, double horizon, double gain) {
    std::vector<std::vector<double>> visits(graph.node_count());
    for (const auto& r : plan.routes) {
        for (std::size_t k = 0; k < r.nodes.size(); ++k) visits[r.nodes[k]].push_back(r.arrival[k]);
    }
    double total = 0.0;
    for (int i = 0; i < graph.node_count(); ++i) {
        std::sort(visits[i].begin(), visits[i].end());
        total += node_integral(rewards[i], visits[i], horizon, gain);
    }
    return total;
}

TeamPlan grasp_plan(const GridGraph& graph, const std::vector<double>& rewards,
                    const std::vector<int>& starts, const GraspConfig& cfg) {
    return grasp_plan(graph, rewards, starts, cfg, nullptr);
}

TeamPlan grasp_plan(const GridGraph& graph, const std::vector<double>& rewards,
                    const std::vector<int>& starts, const GraspConfig& cfg, GraspTrace* trace) {
    cfg.validate();
    if (static_cast<int>(rewards.size()) != graph.node_count()) {
        throw ContractError("one reward per grid node is required");
    }
    for (int s : starts) {
        if (s < 0 || s >= graph.node_count()) throw ContractError("start node out of range");
    }
    const Evaluator ev(graph, rewards, cfg);
    std::seed_seq seq{static_cast<std::uint32_t>(cfg.seed), static_cast<std::uint32_t>(cfg.seed >> 32)};
    std::mt19937_64 rng(seq);

    TeamPlan best;
    best.objective = std::numeric_limits<double>::infinity();
    for (int it = 0; it < cfg.iterations; ++it) {
        auto routes = construct(ev, graph, starts, cfg, rng);
        const double built = ev.objective(routes);
        routes = local_search(ev, graph, starts, std::move(routes));
        const double obj = ev.objective(routes);
        if (trace) {
            trace->constructed.push_back(built);
            trace->improved.push_back(obj);
        }
        if (obj < best.objective) {
            best.routes = std::move(routes);
            best.objective = obj;
        }
    }
    return best;
}

std::vector<std::vector<Vec2>> execute_team_plan(const TeamPlan& plan, const GridGraph& graph,
                                                 const TravelModel& model, double dt, int steps) {
    if (!(dt > 0.0) || steps < 0) throw ContractError("sampling needs dt > 0 and steps >= 0");
    const double tau = edge_travel_time(graph.spacing(), model);
    std::vector<std::vector<Vec2>> out(steps + 1, std::vector<Vec2>(plan.routes.size()));
    for (std::size_t v = 0; v < plan.routes.size(); ++v) {
        const auto& nodes = plan.routes[v].nodes;
        if (nodes.empty()) throw ContractError("route without a start node");
        const std::size_t edges = nodes.size() - 1;
        for (int k = 0; k <= steps; ++k) {
            const double t = k * dt;
            const auto e = static_cast<std::size_t>(std::floor(t / tau + 1e-12));
            if (e >= edges) {
                out[k][v] = graph.position(nodes.back());
                continue;
            }
            const Vec2 a = graph.position(nodes[e]), b = graph.position(nodes[e + 1]);
            const double s = edge_progress(t - e * tau, graph.spacing(), model) / graph.spacing();
            out[k][v] = a + s * (b - a);
        }
    }
    return out;
}

}  // namespace impdr::baselines
