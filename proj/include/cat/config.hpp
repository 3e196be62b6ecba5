#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cat/train.hpp"

// JSON experiment configuration: strict schema (unknown keys are errors, with
// a nearest-key hint), defaults for everything, dotted-path overrides applied
// last. config_to_json emits the fully-normalized document; feeding that back
// through parse_config reproduces the same configuration (closure property).

namespace cat {

// λ/K grid for the ablate command (defaults: the standard sweep)
struct AblationSpec {
    std::vector<double> lambdas = {0.1, 1.0, 5.0, 10.0};
    std::vector<std::size_t> Ks = {1, 2, 5, 15};
    std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
};

// export-embeddings sampling
struct ExportSpec {
    std::size_t per_class = 300;  // samples drawn per (domain, class)
};

struct FullConfig {
    RunConfig run;
    AblationSpec ablation;
    ExportSpec exports;
};

// Strict parse of a whole config document. Unknown or ill-typed keys throw
// ConfigError naming the dotted path; ranges are checked via RunConfig::validate.
FullConfig parse_config(const nlohmann::json& doc);

// Apply "dotted.path=value" overrides to a JSON document. Values are parsed
// as JSON; bare words fall back to strings (mode=dann works unquoted).
nlohmann::json apply_overrides(nlohmann::json doc, const std::vector<std::string>& overrides);

// Read path (or start from {} when path is empty), apply overrides, parse.
FullConfig load_config(const std::string& path, const std::vector<std::string>& overrides);

// Fully-normalized echo of a configuration (every key present, fixed order).
nlohmann::ordered_json config_to_json(const FullConfig& cfg);

}  // namespace cat
