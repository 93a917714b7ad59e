#pragma once

#include "mvrds/mean_field.hpp"
#include "mvrds/models.hpp"

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace mvrds {

/// Invalid scenario file. The message starts with "source:line: ".
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct InitialCondition {
    std::size_t particles = 500;
    std::vector<double> mean;       // empty: origin
    double scale = 1.0;             // isotropic standard deviation of the cloud
    std::vector<double> point;      // initial point of the flow; empty: origin
    std::uint64_t seed = 7;
};

/// Everything a batch run needs. Field names match the YAML keys; see
/// README.md for the schema.
struct ScenarioConfig {
    std::string name = "scenario";
    std::string model = "eks-gaussian";
    ModelParameters params;
    double horizon = 1.0;
    InitialCondition initial;
    std::size_t law_n = 16;             // law-freeze cells on [0, T]
    std::size_t inner_steps = 4;
    int rde_level = 10;
    int fine_level = 12;
    double blowup = 1e8;
    std::vector<std::uint64_t> seeds{1};
    std::string output = "out";
    std::vector<std::string> checks;
    double p = 2.0;
    std::size_t duality_paths = 4;
};

/// Suites accepted under `checks`.
const std::vector<std::string>& check_names();

/// Parses and validates YAML text. Unknown keys are errors.
ScenarioConfig parse_scenario(const std::string& text, const std::string& source = "<config>");
ScenarioConfig load_scenario(const std::string& path);

/// Semantic checks (model exists, grids nest, seeds distinct, ...); throws
/// ConfigError without a line number.
void validate_scenario(const ScenarioConfig& cfg);

/// Key-sorted YAML with every field written out; parse_scenario of the
/// result reproduces the same canonical text.
std::string canonical_yaml(const ScenarioConfig& cfg);

}  // namespace mvrds
