// SPDX-License-Identifier: Apache-2.0
#include "impdr/io.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <memory>
#include <ostream>

#include <json.hpp>

#include "impdr/errors.hpp"

namespace impdr::io {

using nlohmann::json;

std::string format_number(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    if (v == 0.0) return "0";  // also folds -0
    std::array<char, 32> buf{};
    const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    return {buf.data(), res.ptr};
}

namespace {

std::size_t max_targets(const sim::RunTrace& trace) {
    std::size_t n = 0;
    for (const auto& s : trace.steps) n = std::max(n, s.r_eval.size());
    return n;
}

/// No field ever contains a comma, so nothing is quoted.
void cell(std::ostream& out, double v) { out << ',' << format_number(v); }

}  // namespace

void write_trace_csv(std::ostream& out, const sim::RunTrace& trace) {
    const std::size_t m = trace.steps.empty() ? 0 : trace.steps.front().fleet.size();
    const std::size_t np = max_targets(trace);
    out << "step,time,solved,status,min_distance";
    for (std::size_t j = 0; j < m; ++j) {
        out << ",q" << j << "_x,q" << j << "_y,v" << j << "_x,v" << j << "_y,a" << j << "_x,a" << j << "_y";
    }
    for (std::size_t i = 0; i < np; ++i) {
        out << ",t" << i << "_x,t" << i << "_y,r_model_" << i << ",r_eval_" << i;
    }
    out << '\n';
    for (const auto& s : trace.steps) {
        out << s.step;
        cell(out, s.time);
        out << ',' << (s.solved ? 1 : 0) << ',' << s.solver_status;
        cell(out, s.min_distance);
        for (std::size_t j = 0; j < m; ++j) {
            const auto& v = s.fleet[j];
            cell(out, v.position.x());
            cell(out, v.position.y());
            cell(out, v.velocity.x());
            cell(out, v.velocity.y());
            if (j < s.control.size()) {
                cell(out, s.control[j].x());
                cell(out, s.control[j].y());
            } else {
                out << ",,";
            }
        }
        for (std::size_t i = 0; i < np; ++i) {
            if (i < s.r_eval.size()) {
                cell(out, s.targets[i].x());
                cell(out, s.targets[i].y());
                cell(out, s.r_model[i]);
                cell(out, s.r_eval[i]);
            } else {
                out << ",,,,";
            }
        }
        out << '\n';
    }
}

void write_timings_csv(std::ostream& out, const sim::RunTrace& trace) {
    out << "step,solved,solver_ms,status\n";
    for (const auto& s : trace.steps) {
        out << s.step << ',' << (s.solved ? 1 : 0) << ',' << format_number(s.solver_ms) << ','
            << s.solver_status << '\n';
    }
}

std::string metrics_json(const sim::RunTrace& trace) {
    const auto& m = trace.metrics;
    json j;
    j["schema_version"] = kSchemaVersion;
    j["scenario"] = trace.scenario;
    j["planner"] = sim::to_string(trace.planner);
    j["steps"] = trace.steps.empty() ? 0 : static_cast<int>(trace.steps.size()) - 1;
    j["dt"] = trace.dt;
    j["failed"] = trace.failed;
    j["failure"] = trace.failure;
    j["r_eq"] = m.r_eq;
    j["r_max"] = m.r_max;
    j["r_avg_max_after_warmup"] = m.r_avg_max_after_warmup;
    j["warmup_steps"] = m.warmup_steps;
    j["t_avg_ms"] = m.t_avg;
    j["t_max_ms"] = m.t_max;
    j["min_distance"] = std::isfinite(m.min_distance) ? json(m.min_distance) : json(nullptr);
    j["max_speed"] = m.max_speed;
    j["max_abs_accel"] = m.max_abs_accel;
    j["violations"] = {{"speed", m.speed_violations},
                       {"separation", m.separation_violations},
                       {"acceleration", m.accel_violations}};
    return j.dump(2) + "\n";
}

namespace {

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(std::move(cur));
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    out.push_back(std::move(cur));
    return out;
}

std::optional<double> parse_cell(const std::string& s, const std::string& source, int line) {
    if (s.empty()) return std::nullopt;
    double v = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) {
        throw ParseError(source, line, "not a number: '" + s + "'");
    }
    return v;
}

}  // namespace

TraceTable read_trace_csv(std::istream& in, const std::string& source) {
    TraceTable t;
    std::string line;
    if (!std::getline(in, line)) return t;
    const auto header = split_csv(line);
    if (header.size() < 5 || header[0] != "step" || header[1] != "time") {
        throw ParseError(source, 1, "not a trace file (expected a 'step,time,...' header)");
    }
    std::size_t m = 0, np = 0;
    for (const auto& h : header) {
        if (h.size() > 3 && h[0] == 'q' && h.compare(h.size() - 2, 2, "_x") == 0) ++m;
        if (h.rfind("r_eval_", 0) == 0) ++np;
    }
    const std::size_t expect = 5 + 6 * m + 4 * np;
    if (header.size() != expect) throw ParseError(source, 1, "unexpected column count in header");
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        const auto cells = split_csv(line);
        if (cells.size() != expect) {
            throw ParseError(source, lineno, "expected " + std::to_string(expect) + " fields, got " +
                                                 std::to_string(cells.size()));
        }
        const auto time = parse_cell(cells[1], source, lineno);
        if (!time) throw ParseError(source, lineno, "missing time");
        t.time.push_back(*time);
        std::vector<Vec2> vs;
        for (std::size_t j = 0; j < m; ++j) {
            const auto x = parse_cell(cells[5 + 6 * j], source, lineno);
            const auto y = parse_cell(cells[6 + 6 * j], source, lineno);
            if (!x || !y) throw ParseError(source, lineno, "missing vehicle position");
            vs.emplace_back(*x, *y);
        }
        t.vehicles.push_back(std::move(vs));
        std::vector<std::optional<Vec2>> ts;
        std::vector<std::optional<double>> rs;
        for (std::size_t i = 0; i < np; ++i) {
            const std::size_t c = 5 + 6 * m + 4 * i;
            const auto x = parse_cell(cells[c], source, lineno);
            const auto y = parse_cell(cells[c + 1], source, lineno);
            ts.push_back(x && y ? std::optional<Vec2>(Vec2(*x, *y)) : std::nullopt);
            rs.push_back(parse_cell(cells[c + 3], source, lineno));
        }
        t.targets.push_back(std::move(ts));
        t.r_eval.push_back(std::move(rs));
    }
    return t;
}

std::optional<std::size_t> row_at_time(const TraceTable& table, double t) {
    if (table.time.empty()) return std::nullopt;
    std::size_t best = 0;
    for (std::size_t k = 1; k < table.time.size(); ++k) {
        if (std::abs(table.time[k] - t) < std::abs(table.time[best] - t)) best = k;
    }
    return best;
}

void write_frame_csv(std::ostream& out, const TraceTable& table, std::size_t row) {
    out << "target,x,y,r_eval\n";
    const auto& ts = table.targets.at(row);
    for (std::size_t i = 0; i < ts.size(); ++i) {
        if (!ts[i] || !table.r_eval[row][i]) continue;
        out << i << ',' << format_number(ts[i]->x()) << ',' << format_number(ts[i]->y()) << ','
            << format_number(*table.r_eval[row][i]) << '\n';
    }
}

void write_paths_csv(std::ostream& out, const TraceTable& table) {
    out << "step,time,vehicle,x,y\n";
    for (std::size_t k = 0; k < table.time.size(); ++k) {
        for (std::size_t j = 0; j < table.vehicles[k].size(); ++j) {
            out << k << ',' << format_number(table.time[k]) << ',' << j << ','
                << format_number(table.vehicles[k][j].x()) << ',' << format_number(table.vehicles[k][j].y())
                << '\n';
        }
    }
}

std::string sha256_file(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw InputError("cannot read " + path.string());
    std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), &EVP_MD_CTX_free);
    if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1) {
        throw std::runtime_error("SHA-256 initialisation failed");
    }
    std::array<char, 1 << 16> buf{};
    while (f) {
        f.read(buf.data(), buf.size());
        if (f.gcount() > 0) EVP_DigestUpdate(ctx.get(), buf.data(), static_cast<std::size_t>(f.gcount()));
    }
    std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx.get(), md.data(), &len);
    static constexpr char hex[] = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
        out += hex[md[i] >> 4];
        out += hex[md[i] & 0xf];
    }
    return out;
}

void write_manifest(const RunManifest& manifest) {
    json j;
    j["schema_version"] = kSchemaVersion;
    j["command"] = manifest.command;
    j["config"] = manifest.config_path ? json(*manifest.config_path) : json(nullptr);
    j["overrides"] = manifest.overrides;
    j["seed"] = manifest.seed;
    j["output_dir"] = manifest.output_dir.string();
    json files = json::array();
    for (const auto& name : manifest.files) {
        const auto p = manifest.output_dir / name;
        files.push_back({{"name", name},
                         {"bytes", std::filesystem::file_size(p)},
                         {"sha256", sha256_file(p)}});
    }
    j["files"] = files;
    write_file(manifest.output_dir / "manifest.json", j.dump(2) + "\n");
}

std::filesystem::path output_directory(const std::optional<std::string>& flag) {
    std::filesystem::path dir;
    if (flag && !flag->empty()) {
        dir = *flag;
    } else if (const char* env = std::getenv("IMPDR_OUTPUT_DIR"); env && *env) {
        dir = env;
    } else {
        dir = "impdr-out";
    }
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw InputError("cannot create output directory " + dir.string() + ": " + ec.message());
    return dir;
}

void write_file(const std::filesystem::path& path, const std::string& content) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw InputError("cannot write " + path.string());
    f << content;
    if (!f) throw InputError("write failed for " + path.string());
}

}  // namespace impdr::io
