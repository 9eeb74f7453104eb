// SPDX-License-Identifier: Apache-2.0
//
// impdr: run scenarios, sweeps and orienteering benchmarks, export plot data
// and check gradients. Exit codes: 0 success, 1 bad input or configuration,
// 2 runtime or solver failure.
#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "impdr/config.hpp"
#include "impdr/errors.hpp"
#include "impdr/gradcheck.hpp"
#include "impdr/io.hpp"
#include "impdr/kop.hpp"
#include "impdr/sim.hpp"

namespace {

using namespace impdr;
namespace fs = std::filesystem;

constexpr int kOk = 0;
constexpr int kBadInput = 1;
constexpr int kFailed = 2;

/// Overrides shared by run and sweep.
struct Overrides {
    std::optional<std::string> config;
    std::optional<std::string> scenario;
    std::vector<int> scenario_args;
    std::optional<std::string> out;
    std::optional<std::uint64_t> seed;
    std::optional<int> duration_steps;
    std::optional<std::string> planner;
    std::optional<int> multistart;
    std::optional<double> wall_cap_ms;

    void add_to(CLI::App* app, bool with_source) {
        if (with_source) {
            app->add_option("--config", config, "Scenario JSON file");
            app->add_option("--scenario", scenario, "Library scenario (exploration, flotsam, grid-sweep, "
                                                    "horizon-sweep, top-compare)");
            app->add_option("--scenario-args", scenario_args, "Up to two integer arguments of the scenario")
                ->expected(0, 2);
        }
        app->add_option("--out", out, "Output directory (default $IMPDR_OUTPUT_DIR or ./impdr-out)");
        app->add_option("--seed", seed, "Random seed for planners and baselines");
        app->add_option("--duration-steps", duration_steps, "Planning steps S")->check(CLI::PositiveNumber);
        app->add_option("--planner", planner, "impdr, grasp-lb, grasp-ub or static");
        app->add_option("--multistart", multistart, "Starts per IMP-DR solve")->check(CLI::PositiveNumber);
        app->add_option("--wall-cap-ms", wall_cap_ms, "Wall-clock cap per solve [ms]")->check(CLI::PositiveNumber);
    }

    void apply(sim::ScenarioConfig& c) const {
        if (seed) {
            c.seed = *seed;
            c.planner_config.seed = *seed;
        }
        if (duration_steps) c.duration_steps = *duration_steps;
        if (planner) c.planner = sim::planner_kind_from_string(*planner);
        if (multistart) {
            c.planner_config.multistart_count = *multistart;
            if (*multistart > 1 && c.planner_config.reward_noise_sigma == 0.0) c.planner_config.reward_noise_sigma = 0.1;
        }
        if (wall_cap_ms) c.planner_config.solver.wall_clock_cap = *wall_cap_ms / 1000.0;
        c.validate();
    }

    [[nodiscard]] std::map<std::string, std::string> describe() const {
        std::map<std::string, std::string> m;
        if (scenario) m["scenario"] = *scenario;
        if (!scenario_args.empty()) {
            std::string s;
            for (int a : scenario_args) s += (s.empty() ? "" : ",") + std::to_string(a);
            m["scenario_args"] = s;
        }
        if (seed) m["seed"] = std::to_string(*seed);
        if (duration_steps) m["duration_steps"] = std::to_string(*duration_steps);
        if (planner) m["planner"] = *planner;
        if (multistart) m["multistart"] = std::to_string(*multistart);
        if (wall_cap_ms) m["wall_cap_ms"] = io::format_number(*wall_cap_ms);
        return m;
    }
};

sim::ScenarioConfig base_config(const Overrides& o) {
    if (o.config && o.scenario) throw InputError("give either --config or --scenario, not both");
    if (o.config) return config::load_scenario(*o.config);
    if (o.scenario) {
        const int a = o.scenario_args.size() > 0 ? o.scenario_args[0] : 0;
        const int b = o.scenario_args.size() > 1 ? o.scenario_args[1] : 0;
        return sim::scenario_library(*o.scenario, a, b);
    }
    return sim::default_scenario();
}

template <typename F>
void write_with(const fs::path& path, F&& f) {
    std::ostringstream ss;
    f(ss);
    io::write_file(path, ss.str());
}

int cmd_run(const Overrides& o) {
    auto c = base_config(o);
    o.apply(c);
    const auto dir = io::output_directory(o.out);
    std::fprintf(stderr, "running %s (%s, %d steps)\n", c.name.c_str(), sim::to_string(c.planner).c_str(),
                 c.duration_steps);
    const auto trace = sim::run_closed_loop(c);
    write_with(dir / "trace.csv", [&](std::ostream& s) { io::write_trace_csv(s, trace); });
    write_with(dir / "timings.csv", [&](std::ostream& s) { io::write_timings_csv(s, trace); });
    io::write_file(dir / "metrics.json", io::metrics_json(trace));
    io::write_file(dir / "config.json", config::dump_scenario(c));
    io::write_manifest({"run", o.config, o.describe(), c.seed, dir,
                        {"config.json", "trace.csv", "timings.csv", "metrics.json"}});
    const auto& m = trace.metrics;
    std::printf("r_eq %.4g  r_max %.4g  t_avg %.4g ms  t_max %.4g ms  -> %s\n", m.r_eq, m.r_max, m.t_avg, m.t_max,
                dir.string().c_str());
    if (trace.failed) {
        std::fprintf(stderr, "error: run stopped at step %zu: %s\n", trace.steps.size() - 1, trace.failure.c_str());
        return kFailed;
    }
    return kOk;
}

struct SweepArgs {
    std::string kind;
    std::vector<int> targets;
    std::vector<int> vehicles;
    std::vector<int> horizons;
};

int cmd_sweep(const Overrides& o, const SweepArgs& a) {
    struct Cell {
        int np, m, n;
    };
    std::vector<Cell> cells;
    if (a.kind == "targets") {
        if (a.targets.empty() || a.vehicles.empty()) throw InputError("targets sweep needs --targets and --vehicles");
        for (int np : a.targets) {
            for (int m : a.vehicles) cells.push_back({np, m, 0});
        }
    } else if (a.kind == "horizon") {
        if (a.horizons.empty() || a.vehicles.empty()) throw InputError("horizon sweep needs --horizons and --vehicles");
        for (int m : a.vehicles) {
            for (int n : a.horizons) cells.push_back({0, m, n});
        }
    } else {
        throw InputError("unknown sweep kind '" + a.kind + "' (expected targets or horizon)");
    }
    // Validate every cell before running any.
    std::vector<sim::ScenarioConfig> configs;
    for (const auto& cell : cells) {
        auto c = cell.n == 0 ? sim::scenario_library("grid-sweep", cell.np, cell.m)
                             : sim::scenario_library("horizon-sweep", cell.m, cell.n);
        o.apply(c);
        configs.push_back(std::move(c));
    }
    const auto dir = io::output_directory(o.out);
    std::ostringstream table;
    table << "n_p,m,N_s,t_avg,t_max,r_eq,r_max,status\n";
    bool any_failed = false;
    for (const auto& c : configs) {
        std::fprintf(stderr, "cell %s\n", c.name.c_str());
        std::string status = "ok";
        sim::MetricsSummary m;
        try {
            const auto trace = sim::run_closed_loop(c);
            m = trace.metrics;
            if (trace.failed) status = "failed: " + trace.failure;
        } catch (const std::exception& e) {
            status = std::string("failed: ") + e.what();
        }
        for (char& ch : status) {
            if (ch == ',' || ch == '\n') ch = ' ';
        }
        any_failed = any_failed || status != "ok";
        table << c.targets.size() << ',' << c.fleet.size() << ',' << c.horizon << ',' << io::format_number(m.t_avg)
              << ',' << io::format_number(m.t_max) << ',' << io::format_number(m.r_eq) << ','
              << io::format_number(m.r_max) << ',' << status << '\n';
    }
    io::write_file(dir / "sweep.csv", table.str());
    auto desc = o.describe();
    desc["kind"] = a.kind;
    io::write_manifest({"sweep", std::nullopt, desc, o.seed.value_or(0), dir, {"sweep.csv"}});
    std::printf("%zu cells -> %s\n", cells.size(), (dir / "sweep.csv").string().c_str());
    return any_failed ? kFailed : kOk;
}

struct KopArgs {
    std::string instance;
    std::vector<double> budgets;
    std::vector<double> references;
    int multistart{10};
    double sigma{0.1};
    std::optional<std::string> out;
    std::uint64_t seed{0};
    std::optional<double> wall_cap_ms;
};

int cmd_kop(const KopArgs& a) {
    const auto inst = kop::load_op_instance(a.instance);
    if (a.budgets.empty()) throw InputError("need at least one --budget");
    if (!a.references.empty() && a.references.size() != a.budgets.size()) {
        throw InputError("--reference needs one value per budget");
    }
    auto planner = kop::default_kop_planner();
    planner.multistart_count = a.multistart;
    planner.reward_noise_sigma = a.sigma;
    planner.seed = a.seed;
    if (a.wall_cap_ms) planner.solver.wall_clock_cap = *a.wall_cap_ms / 1000.0;
    planner.validate();
    const kop::KopParams params;
    for (double b : a.budgets) (void)kop::configure_kop(inst, b, params);

    const auto dir = io::output_directory(a.out);
    std::ostringstream table;
    table << "instance,C_max,N_s,multistart,best_score,reference,score_ratio,endpoint_deviation,duration,"
             "max_speed,max_abs_accel,t_avg_s,t_total_s,visited\n";
    std::vector<std::string> files{"kop.csv"};
    for (std::size_t i = 0; i < a.budgets.size(); ++i) {
        const double b = a.budgets[i];
        std::fprintf(stderr, "C_max %s\n", io::format_number(b).c_str());
        const auto res = kop::solve_kop(inst, b, params, planner);
        const auto& e = res.best;
        std::string visited;
        for (int v : e.visited) visited += (visited.empty() ? "" : " ") + std::to_string(v);
        const std::string ref = a.references.empty() ? "" : io::format_number(a.references[i]);
        const std::string ratio = a.references.empty() ? "" : io::format_number(e.score / a.references[i]);
        table << fs::path(a.instance).filename().string() << ',' << io::format_number(b) << ','
              << kop::kop_horizon(b, params.dt) << ',' << a.multistart << ',' << io::format_number(e.score) << ','
              << ref << ',' << ratio << ',' << io::format_number(e.endpoint_deviation) << ','
              << io::format_number(e.duration) << ',' << io::format_number(e.max_speed) << ','
              << io::format_number(e.max_abs_accel) << ',' << io::format_number(res.wall_time / a.multistart)
              << ',' << io::format_number(res.wall_time) << ',' << visited << '\n';
        const std::string path_file = "kop_path_" + io::format_number(b) + ".csv";
        write_with(dir / path_file, [&](std::ostream& s) {
            s << "step,time,x,y,vx,vy\n";
            for (std::size_t k = 0; k < res.trajectory.vehicles.size(); ++k) {
                const auto& v = res.trajectory.vehicles[k][0];
                s << k << ',' << io::format_number(k * params.dt) << ',' << io::format_number(v.position.x()) << ','
                  << io::format_number(v.position.y()) << ',' << io::format_number(v.velocity.x()) << ','
                  << io::format_number(v.velocity.y()) << '\n';
            }
        });
        files.push_back(path_file);
        std::printf("C_max %g: score %g of %g, end deviation %.3g m, %.3g s\n", b, e.score, inst.total_score(),
                    e.endpoint_deviation, res.wall_time);
    }
    io::write_file(dir / "kop.csv", table.str());
    io::write_manifest({"kop", a.instance, {{"multistart", std::to_string(a.multistart)}}, a.seed, dir, files});
    return kOk;
}

int cmd_plotdata(const std::string& trace_path, const std::vector<double>& times,
                 const std::optional<std::string>& out) {
    std::ifstream f(trace_path);
    if (!f) throw InputError("cannot open trace file " + trace_path);
    const auto table = io::read_trace_csv(f, trace_path);
    const auto dir = io::output_directory(out);
    std::vector<std::string> files;
    write_with(dir / "paths.csv", [&](std::ostream& s) { io::write_paths_csv(s, table); });
    files.push_back("paths.csv");
    int frames = 0;
    for (double t : times) {
        if (table.time.empty() || t < table.time.front() - 1e-9 || t > table.time.back() + 1e-9) continue;
        const auto row = io::row_at_time(table, t);
        const std::string name = "frame_" + io::format_number(t) + ".csv";
        write_with(dir / name, [&](std::ostream& s) { io::write_frame_csv(s, table, *row); });
        files.push_back(name);
        ++frames;
    }
    io::write_manifest({"plotdata", trace_path, {}, 0, dir, files});
    std::printf("%d frames -> %s\n", frames, dir.string().c_str());
    return kOk;
}

int cmd_check_grad(const mpc::GradCheckSpec& spec, double tolerance, const std::optional<std::string>& out) {
    const auto res = mpc::run_gradient_check(spec);
    const auto dir = io::output_directory(out);
    std::ostringstream s;
    s << "problem,vehicles,targets,horizon,max_relative_error\n";
    for (std::size_t i = 0; i < res.cases.size(); ++i) {
        const auto& c = res.cases[i];
        s << i << ',' << c.vehicles << ',' << c.targets << ',' << c.horizon << ','
          << io::format_number(c.max_relative_error) << '\n';
    }
    io::write_file(dir / "check_grad.csv", s.str());
    io::write_manifest({"check-grad", std::nullopt, {}, spec.seed, dir, {"check_grad.csv"}});
    const bool ok = res.worst < tolerance;
    std::printf("%d problems, worst relative error %.3g (%s %.3g)\n", spec.problems, res.worst,
                ok ? "below" : "above", tolerance);
    return ok ? kOk : kFailed;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Receding-horizon monitoring planner with dynamic rewards.\n"
                 "Exit codes: 0 success, 1 bad input or configuration, 2 runtime or solver failure.\n"
                 "IMPDR_OUTPUT_DIR sets the default output directory."};
    app.require_subcommand(1);

    Overrides run_o;
    auto* run = app.add_subcommand("run", "Run one closed-loop scenario");
    run_o.add_to(run, true);

    Overrides sweep_o;
    SweepArgs sweep_a;
    auto* sweep = app.add_subcommand("sweep", "Run a grid of scenarios and tabulate t_avg, t_max, r_eq, r_max");
    sweep->add_option("--kind", sweep_a.kind, "targets (n_p x m) or horizon (m x N_s)")->required();
    sweep->add_option("--targets", sweep_a.targets, "Square target counts, e.g. 25,49,100")->delimiter(',');
    sweep->add_option("--vehicles", sweep_a.vehicles, "Fleet sizes")->delimiter(',');
    sweep->add_option("--horizons", sweep_a.horizons, "Horizon lengths N_s")->delimiter(',');
    sweep_o.add_to(sweep, false);

    KopArgs kop_a;
    auto* kopc = app.add_subcommand("kop", "Kinematic orienteering on an instance file");
    kopc->add_option("--instance", kop_a.instance, "Instance file")->required();
    kopc->add_option("--budget", kop_a.budgets, "Travel budgets C_max [s]")->delimiter(',')->required();
    kopc->add_option("--reference", kop_a.references, "Reference scores, one per budget")->delimiter(',');
    kopc->add_option("--multistart", kop_a.multistart, "Starts per budget")->check(CLI::PositiveNumber);
    kopc->add_option("--sigma", kop_a.sigma, "Reward noise on extra starts")->check(CLI::NonNegativeNumber);
    kopc->add_option("--seed", kop_a.seed, "Random seed");
    kopc->add_option("--wall-cap-ms", kop_a.wall_cap_ms, "Wall-clock cap per solve [ms]")->check(CLI::PositiveNumber);
    kopc->add_option("--out", kop_a.out, "Output directory");

    std::string plot_trace;
    std::vector<double> plot_times{10.0, 15.0, 20.0, 25.0};
    std::optional<std::string> plot_out;
    auto* plot = app.add_subcommand("plotdata", "Reward frames and vehicle paths from a trace");
    plot->add_option("--trace", plot_trace, "trace.csv from a run")->required();
    plot->add_option("--times", plot_times, "Frame times [s]")->delimiter(',');
    plot->add_option("--out", plot_out, "Output directory");

    mpc::GradCheckSpec gc;
    double gc_tol = 1e-5;
    std::optional<std::string> gc_out;
    auto* grad = app.add_subcommand("check-grad", "Adjoint gradients against central differences");
    grad->add_option("--problems", gc.problems, "Random problems")->check(CLI::PositiveNumber);
    grad->add_option("--seed", gc.seed, "Random seed");
    grad->add_option("--step", gc.step, "Difference step")->check(CLI::PositiveNumber);
    grad->add_option("--tolerance", gc_tol, "Largest accepted relative error")->check(CLI::PositiveNumber);
    grad->add_option("--out", gc_out, "Output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kBadInput;
    }

    try {
        if (*run) return cmd_run(run_o);
        if (*sweep) return cmd_sweep(sweep_o, sweep_a);
        if (*kopc) return cmd_kop(kop_a);
        if (*plot) return cmd_plotdata(plot_trace, plot_times, plot_out);
        if (*grad) return cmd_check_grad(gc, gc_tol, gc_out);
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return kBadInput;
    } catch (const ParseError& e) {
        std::fprintf(stderr, "parse error: %s\n", e.what());
        return kBadInput;
    } catch (const InputError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kBadInput;
    } catch (const ContractError& e) {
        std::fprintf(stderr, "invalid parameters: %s\n", e.what());
        return kBadInput;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "failure: %s\n", e.what());
        return kFailed;
    }
    return kOk;
}
