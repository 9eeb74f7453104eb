// SPDX-License-Identifier: Apache-2.0
//
// JSON scenario files. A file either starts from a named library scenario or
// from the default sweep scenario and overrides individual fields:
//
//     {
//       "schema_version": 1,
//       "scenario": "grid-sweep", "scenario_args": [25, 4],
//       "duration_steps": 400,
//       "sensor": {"cutoff": 0.25, "degree": 8},
//       "solver": {"max_inner_iters": 40}
//     }
//
// Unknown keys are errors. Every error names the file and the dotted field.
#pragma once

#include <string>
#include <string_view>

#include "impdr/sim.hpp"

namespace impdr::config {

/// Throws ConfigError.
[[nodiscard]] sim::ScenarioConfig parse_scenario(std::string_view text, const std::string& source);

/// Throws InputError if the file cannot be read, ConfigError if it is invalid.
[[nodiscard]] sim::ScenarioConfig load_scenario(const std::string& path);

/// The full configuration as JSON in the same layout, for reference output.
[[nodiscard]] std::string dump_scenario(const sim::ScenarioConfig& cfg);

}  // namespace impdr::config
