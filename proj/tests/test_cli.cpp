// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace fs = std::filesystem;

namespace {

const fs::path kWork = fs::temp_directory_path() / "impdr_test_cli";

int run(const std::string& args) {
    const std::string cmd = std::string(IMPDR_CLI_PATH) + " " + args + " >" + (kWork / "stdout.txt").string() +
                            " 2>" + (kWork / "stderr.txt").string();
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

int count_lines(const std::string& s) {
    int n = 0;
    for (char c : s) n += c == '\n';
    return n;
}

struct Workspace {
    Workspace() {
        fs::remove_all(kWork);
        fs::create_directories(kWork);
    }
};

}  // namespace

TEST_CASE_FIXTURE(Workspace, "run writes the trace, metrics and manifest") {
    const auto out = kWork / "flotsam";
    REQUIRE(run("run --scenario flotsam --duration-steps 12 --out " + out.string()) == 0);
    const auto trace = slurp(out / "trace.csv");
    CHECK(count_lines(trace) == 14);  // header + S + 1 states
    const auto header = trace.substr(0, trace.find('\n'));
    CHECK(header.find("r_eval_11") != std::string::npos);
    CHECK(header.find("r_eval_12") == std::string::npos);
    for (const char* f : {"timings.csv", "metrics.json", "config.json", "manifest.json"}) CHECK(fs::exists(out / f));
    const auto manifest = slurp(out / "manifest.json");
    for (const char* f : {"trace.csv", "timings.csv", "metrics.json", "config.json"}) {
        CHECK(manifest.find(std::string("\"") + f + "\"") != std::string::npos);
    }

    // Same config and seed give the same bytes.
    const auto again = kWork / "again";
    REQUIRE(run("run --config " + (out / "config.json").string() + " --out " + again.string()) == 0);
    CHECK(slurp(again / "trace.csv") == trace);
}

TEST_CASE_FIXTURE(Workspace, "the output directory falls back to the environment") {
    const auto env = kWork / "from_env";
    REQUIRE(run("check-grad --problems 2 >/dev/null; IMPDR_OUTPUT_DIR=" + env.string() + " " +
                std::string(IMPDR_CLI_PATH) + " check-grad --problems 2") == 0);
    CHECK(fs::exists(env / "check_grad.csv"));
}

TEST_CASE_FIXTURE(Workspace, "configuration errors exit with 1") {
    CHECK(run("run --config " + (kWork / "missing.json").string()) == 1);
    CHECK(slurp(kWork / "stderr.txt").find("missing.json") != std::string::npos);

    std::ofstream(kWork / "bad.json") << R"({"schema_version": 1, "limits": {"a_max": "fast"}})";
    CHECK(run("run --config " + (kWork / "bad.json").string()) == 1);
    CHECK(slurp(kWork / "stderr.txt").find("limits.a_max") != std::string::npos);

    CHECK(run("run --planner teleport --out " + kWork.string()) == 1);
    CHECK(run("run --no-such-flag") == 1);
    CHECK(run("sweep --kind targets --vehicles 1 --out " + kWork.string()) == 1);
    CHECK(run("kop --instance " + (kWork / "none.txt").string() + " --budget 10") == 1);

    std::ofstream(kWork / "op.txt") << "5 1\n0 0 0\n1 zz 3\n";
    CHECK(run("kop --instance " + (kWork / "op.txt").string() + " --budget 10") == 1);
    CHECK(slurp(kWork / "stderr.txt").find(":3:") != std::string::npos);
}

TEST_CASE_FIXTURE(Workspace, "runtime failures exit with 2") {
    CHECK(run("check-grad --problems 2 --tolerance 1e-300 --out " + kWork.string()) == 2);
}

TEST_CASE_FIXTURE(Workspace, "help and success exit with 0") {
    CHECK(run("--help") == 0);
    for (const char* sub : {"run", "sweep", "kop", "plotdata", "check-grad"}) CHECK(run(std::string(sub) + " --help") == 0);
    const auto help = slurp(kWork / "stdout.txt");
    CHECK(help.find("--tolerance") != std::string::npos);
}

TEST_CASE_FIXTURE(Workspace, "sweep tables have one row per cell") {
    const auto out = kWork / "sweep";
    REQUIRE(run("sweep --kind horizon --vehicles 1,2 --horizons 5,8,10 --duration-steps 4 --out " + out.string()) == 0);
    const auto table = slurp(out / "sweep.csv");
    CHECK(table.rfind("n_p,m,N_s,t_avg,t_max,r_eq,r_max,status\n", 0) == 0);
    CHECK(count_lines(table) == 7);
}

TEST_CASE_FIXTURE(Workspace, "plot data from a trace") {
    const auto out = kWork / "run";
    REQUIRE(run("run --scenario flotsam --duration-steps 30 --out " + out.string()) == 0);
    const auto plot = kWork / "plot";
    REQUIRE(run("plotdata --trace " + (out / "trace.csv").string() + " --times 2,5,100 --out " + plot.string()) == 0);
    CHECK(fs::exists(plot / "frame_2.csv"));
    CHECK(fs::exists(plot / "frame_5.csv"));
    CHECK_FALSE(fs::exists(plot / "frame_100.csv"));
    CHECK(count_lines(slurp(plot / "frame_2.csv")) == 13);
    CHECK(count_lines(slurp(plot / "paths.csv")) == 1 + 31 * 2);
}

TEST_CASE_FIXTURE(Workspace, "kop on a small instance") {
    std::ofstream(kWork / "op.txt") << "4 1\n0 0 0\n1 0.5 10\n2 0 0\n";
    const auto out = kWork / "kop";
    REQUIRE(run("kop --instance " + (kWork / "op.txt").string() + " --budget 4 --multistart 2 --reference 10 --out " +
                out.string()) == 0);
    const auto table = slurp(out / "kop.csv");
    CHECK(count_lines(table) == 2);
    CHECK(table.find(",40,2,10,10,1,") != std::string::npos);
    CHECK(fs::exists(out / "kop_path_4.csv"));
}
