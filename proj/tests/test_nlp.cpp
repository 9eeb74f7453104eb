// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "impdr/errors.hpp"
#include "impdr/nlp.hpp"

using namespace impdr;
using namespace impdr::nlp;

namespace {

NlpProblem shifted_square(double lo, double hi) {
    NlpProblem p;
    p.dim = 1;
    p.lower = {lo};
    p.upper = {hi};
    p.objective = [](std::span<const double> x, std::span<double> g) {
        g[0] = 2.0 * (x[0] - 3.0);
        return (x[0] - 3.0) * (x[0] - 3.0);
    };
    return p;
}

double rosenbrock(std::span<const double> x, std::span<double> g) {
    const double a = 1.0 - x[0], b = x[1] - x[0] * x[0];
    g[0] = -2.0 * a - 400.0 * x[0] * b;
    g[1] = 200.0 * b;
    return a * a + 100.0 * b * b;
}

NlpProblem unbounded(std::size_t n, Objective f) {
    NlpProblem p;
    p.dim = n;
    p.lower.assign(n, -std::numeric_limits<double>::infinity());
    p.upper.assign(n, std::numeric_limits<double>::infinity());
    p.objective = std::move(f);
    return p;
}

/// Plain gradient descent with backtracking, used as a slow independent reference.
std::vector<double> gradient_descent(const Objective& f, std::vector<double> x, int iters) {
    std::vector<double> g(x.size()), gt(x.size()), xt(x.size());
    double fx = f(x, g);
    for (int it = 0; it < iters; ++it) {
        double gg = 0.0;
        for (double v : g) gg += v * v;
        if (gg < 1e-30) break;
        double step = 1e-2;
        for (;;) {
            for (std::size_t i = 0; i < x.size(); ++i) xt[i] = x[i] - step * g[i];
            const double ft = f(xt, gt);
            if (ft <= fx - 0.5 * step * gg || step < 1e-16) {
                x = xt;
                g = gt;
                fx = ft;
                break;
            }
            step *= 0.5;
        }
    }
    return x;
}

}  // namespace

TEST_CASE("convex quadratic, interior and active bound") {
    auto p = shifted_square(0.0, 10.0);
    auto rep = minimize(p, std::vector<double>{0.0});
    CHECK(rep.status == SolverStatus::converged);
    CHECK(rep.x[0] == doctest::Approx(3.0).epsilon(1e-8));
    CHECK(rep.objective == doctest::Approx(0.0));

    p = shifted_square(0.0, 2.0);
    rep = minimize(p, std::vector<double>{0.0});
    CHECK(rep.x[0] == 2.0);
    CHECK(rep.objective == doctest::Approx(1.0));
}

TEST_CASE("start point is projected onto the box") {
    auto p = shifted_square(0.0, 2.0);
    const auto rep = minimize(p, std::vector<double>{50.0});
    CHECK(rep.x[0] == 2.0);
}

TEST_CASE("Rosenbrock agrees with a long gradient-descent reference") {
    const auto p = unbounded(2, rosenbrock);
    const auto rep = minimize(p, std::vector<double>{-1.2, 1.0});
    CHECK(std::abs(rep.x[0] - 1.0) < 1e-6);
    CHECK(std::abs(rep.x[1] - 1.0) < 1e-6);

    const auto ref = gradient_descent(rosenbrock, {-1.2, 1.0}, 400000);
    CHECK(std::abs(ref[0] - 1.0) < 1e-4);
    CHECK(std::abs(ref[1] - 1.0) < 1e-4);
    CHECK(std::abs(ref[0] - rep.x[0]) < 1e-4);
}

TEST_CASE("property: random positive-definite quadratics match the closed form") {
    std::mt19937_64 rng(31);
    std::normal_distribution<double> n01(0.0, 1.0);
    for (int trial = 0; trial < 20; ++trial) {
        const int n = 2 + static_cast<int>(rng() % 49);
        Eigen::MatrixXd A(n, n);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) A(i, j) = n01(rng);
        const Eigen::MatrixXd H = A * A.transpose() + Eigen::MatrixXd::Identity(n, n);
        Eigen::VectorXd b(n);
        for (int i = 0; i < n; ++i) b[i] = n01(rng);
        const Eigen::VectorXd x_star = H.ldlt().solve(b);

        auto p = unbounded(n, [&](std::span<const double> x, std::span<double> g) {
            const Eigen::Map<const Eigen::VectorXd> xv(x.data(), n);
            Eigen::Map<Eigen::VectorXd> gv(g.data(), n);
            gv = H * xv - b;
            return 0.5 * xv.dot(H * xv) - b.dot(xv);
        });
        const auto rep = minimize(p, std::vector<double>(n, 0.0));
        double err = 0.0;
        for (int i = 0; i < n; ++i) err = std::max(err, std::abs(rep.x[i] - x_star[i]));
        CHECK(err < 1e-6);
    }
}

TEST_CASE("property: separable quadratics with a box match the clamped minimizer") {
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> u(-3.0, 3.0);
    std::uniform_real_distribution<double> w(0.5, 20.0);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t n = 1 + rng() % 50;
        std::vector<double> h(n), c(n);
        for (std::size_t i = 0; i < n; ++i) {
            h[i] = w(rng);
            c[i] = u(rng);
        }
        NlpProblem p;
        p.dim = n;
        p.lower.assign(n, -1.0);
        p.upper.assign(n, 1.0);
        p.objective = [&](std::span<const double> x, std::span<double> g) {
            double f = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                g[i] = h[i] * (x[i] - c[i]);
                f += 0.5 * h[i] * (x[i] - c[i]) * (x[i] - c[i]);
            }
            return f;
        };
        const auto rep = minimize(p, std::vector<double>(n, 0.0));
        for (std::size_t i = 0; i < n; ++i) {
            CHECK(rep.x[i] >= -1.0);
            CHECK(rep.x[i] <= 1.0);
            CHECK(std::abs(rep.x[i] - std::clamp(c[i], -1.0, 1.0)) < 1e-6);
        }
    }
}

TEST_CASE("inequality constraints via augmented Lagrangian") {
    // min x^2 + y^2  s.t.  x + y >= 1
    auto p = unbounded(2, [](std::span<const double> x, std::span<double> g) {
        g[0] = 2.0 * x[0];
        g[1] = 2.0 * x[1];
        return x[0] * x[0] + x[1] * x[1];
    });
    p.add_inequality([](std::span<const double> x, std::span<double> g) {
        g[0] = -1.0;
        g[1] = -1.0;
        return 1.0 - x[0] - x[1];
    });
    const auto rep = minimize(p, std::vector<double>{3.0, -1.0});
    CHECK(rep.status == SolverStatus::converged);
    CHECK(rep.x[0] == doctest::Approx(0.5).epsilon(1e-6));
    CHECK(rep.x[1] == doctest::Approx(0.5).epsilon(1e-6));
    CHECK(rep.max_violation <= 1e-6);
    REQUIRE(!rep.history.empty());
    for (const auto& h : rep.history) CHECK(h.merit_end <= h.merit_start);
}

TEST_CASE("nonconvex constraint with a block callback and box") {
    // min (x-2)^2 + (y-2)^2  s.t.  x^2 + y^2 <= 1,  0 <= x <= 0.5
    NlpProblem p;
    p.dim = 2;
    p.lower = {0.0, -5.0};
    p.upper = {0.5, 5.0};
    p.objective = [](std::span<const double> x, std::span<double> g) {
        g[0] = 2.0 * (x[0] - 2.0);
        g[1] = 2.0 * (x[1] - 2.0);
        return (x[0] - 2.0) * (x[0] - 2.0) + (x[1] - 2.0) * (x[1] - 2.0);
    };
    InequalityBlock disk;
    disk.count = 1;
    disk.values = [](std::span<const double> x, std::span<double> out) {
        out[0] = x[0] * x[0] + x[1] * x[1] - 1.0;
    };
    disk.accumulate_gradient = [](std::span<const double> x, std::span<const double> w,
                                  std::span<double> g) {
        g[0] += w[0] * 2.0 * x[0];
        g[1] += w[0] * 2.0 * x[1];
    };
    p.inequalities.push_back(disk);
    const auto rep = minimize(p, std::vector<double>{0.0, 0.0});
    CHECK(rep.acceptable(1e-6));
    CHECK(rep.x[0] == 0.5);
    CHECK(rep.x[1] == doctest::Approx(std::sqrt(0.75)).epsilon(1e-6));
    for (const auto& h : rep.history) CHECK(h.merit_end <= h.merit_start);
}

TEST_CASE("determinism: identical inputs give bitwise identical reports") {
    const auto p = unbounded(2, rosenbrock);
    const auto a = minimize(p, std::vector<double>{-1.2, 1.0});
    const auto b = minimize(p, std::vector<double>{-1.2, 1.0});
    CHECK(a.x == b.x);
    CHECK(a.objective == b.objective);
    CHECK(a.inner_iterations == b.inner_iterations);
    CHECK(a.evaluations == b.evaluations);
}

TEST_CASE("error paths and caps") {
    SUBCASE("non-finite start is an input error") {
        auto p = unbounded(1, [](std::span<const double>, std::span<double> g) {
            g[0] = 0.0;
            return std::numeric_limits<double>::quiet_NaN();
        });
        CHECK_THROWS_AS((void)minimize(p, std::vector<double>{0.0}), InputError);
    }
    SUBCASE("non-finite mid-run degrades and keeps the last good iterate") {
        int calls = 0;
        auto p = unbounded(1, [&calls](std::span<const double> x, std::span<double> g) {
            if (++calls > 3) {
                g[0] = 0.0;
                return std::numeric_limits<double>::infinity();
            }
            g[0] = 2.0 * (x[0] - 10.0);
            return (x[0] - 10.0) * (x[0] - 10.0);
        });
        const auto rep = minimize(p, std::vector<double>{0.0});
        CHECK(rep.status == SolverStatus::degraded);
        CHECK(std::isfinite(rep.x[0]));
    }
    SUBCASE("wall-clock cap returns the incumbent") {
        auto p = unbounded(2, rosenbrock);
        SolverConfig cfg;
        cfg.wall_clock_cap = 0.0;
        const auto rep = minimize(p, std::vector<double>{-1.2, 1.0}, cfg);
        CHECK(rep.status == SolverStatus::wall_clock_capped);
        CHECK(rep.x.size() == 2);
    }
    SUBCASE("iteration cap") {
        auto p = unbounded(2, rosenbrock);
        SolverConfig cfg;
        cfg.max_inner_iters = 3;
        const auto rep = minimize(p, std::vector<double>{-1.2, 1.0}, cfg);
        CHECK(rep.status == SolverStatus::iteration_capped);
    }
    SUBCASE("bad config") {
        SolverConfig cfg;
        cfg.penalty_growth = 1.0;
        CHECK_THROWS_AS((void)minimize(shifted_square(0, 1), std::vector<double>{0.0}, cfg),
                        ContractError);
    }
}

TEST_CASE("check_gradient") {
    auto quad = [](std::span<const double> x, std::span<double> g) {
        g[0] = 2.0 * x[0] + x[1];
        g[1] = x[0] + 6.0 * x[1];
        return x[0] * x[0] + x[0] * x[1] + 3.0 * x[1] * x[1];
    };
    const std::vector<double> x{0.7, -1.3};
    CHECK(check_gradient(quad, x, 1e-5) < 1e-9);

    // +1 on the first component: error is 1 / |true component|.
    auto corrupted = [&](std::span<const double> xx, std::span<double> g) {
        const double f = quad(xx, g);
        g[0] += 1.0;
        return f;
    };
    const double true_g0 = 2.0 * 0.7 - 1.3;
    CHECK(check_gradient(corrupted, x, 1e-5) == doctest::Approx(1.0 / std::abs(true_g0)).epsilon(1e-6));
}
