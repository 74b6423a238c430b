#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "pdmplab/experiments.hpp"
#include "pdmplab/fluid_flows.hpp"
#include "pdmplab/samplers.hpp"

namespace pdmplab {

// Validation failure in a config file or flag; what() names the offending
// field by its dotted path.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Reads the whole file; ConfigError mentions the path when it cannot be read.
std::string load_config_text(const std::string& path);

// Folds flag/env overrides into the JSON text and returns the merged document
// pretty-printed. Writing this next to the outputs gives a config echo that
// reproduces the run when re-fed (flags already folded in).
std::string merge_config_overrides(const std::string& text, std::optional<std::uint64_t> seed,
                                   std::optional<int> threads);

ScalingSpec parse_scaling_config(const std::string& text);
GapSpec parse_gap_config(const std::string& text);
RefreshBalanceSpec parse_refresh_balance_config(const std::string& text);
DriftSpec parse_drift_config(const std::string& text);

// Single-run config: one sampler path until the level-set hit (or horizon).
struct SimulateConfig {
    SamplerKind sampler = SamplerKind::bps;
    std::shared_ptr<const Potential> potential;
    double eps = 1e-2;
    double gamma = 0.5;
    RefreshPolicy refresh;
    double horizon = 1e6;
    std::uint64_t seed = 1;
    Vec start;              // resolved start point
    std::optional<Vec> v0;  // empty: sampler's own initial draw
    double stride = 0.0;
    bool recordEvents = false;
    bool stopOnBandExit = false;
    EnvelopeConfig envelope;
};

SimulateConfig parse_simulate_config(const std::string& text);

// Fluid-limit flow config.
struct FlowConfig {
    enum class Kind { snapping, refresh, highRefresh, rwm, zigzag };
    Kind kind = Kind::snapping;
    std::shared_ptr<const Potential> potential;
    Vec start;
    Vec v0;  // snapping / zigzag
    double T = 10.0;
    double gamma = 0.05;
    double sigma = 1.0;                            // rwm speed scale
    std::vector<std::pair<double, Vec>> schedule;  // refresh flow, explicit list
    double stride = 0.0;
    double tol = 1e-10;
};

FlowConfig parse_flow_config(const std::string& text);

// JSON-array forms used by qp-solve flags, e.g. "[[1,-0.3],[-0.3,1]]".
Mat parse_matrix_arg(const std::string& text, const std::string& field);
Vec parse_vector_arg(const std::string& text, const std::string& field);

}  // namespace pdmplab
