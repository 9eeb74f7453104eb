// SPDX-License-Identifier: Apache-2.0
//
// Randomized adjoint-versus-finite-difference check over small OCPs.
#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "impdr/ocp.hpp"

namespace impdr::mpc {

struct GradCheckSpec {
    int problems{50};
    std::uint64_t seed{2024};
    double step{1e-4};  // central-difference step
    int max_vehicles{2};
    int max_targets{4};
    int min_horizon{5};
    int max_horizon{10};
};

struct GradCheckCase {
    std::size_t vehicles{0};
    std::size_t targets{0};
    int horizon{0};
    double max_relative_error{0.0};
};

struct GradCheckResult {
    std::vector<GradCheckCase> cases;
    double worst{0.0};
};

/// Random fleet, drifting targets and controls; production saturation sharpness.
[[nodiscard]] OcpProblem random_ocp(std::mt19937_64& rng, const GradCheckSpec& spec);

[[nodiscard]] GradCheckResult run_gradient_check(const GradCheckSpec& spec);

}  // namespace impdr::mpc
