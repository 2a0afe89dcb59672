#pragma once
#include <stochprox/diagnostics.hpp>
#include <stochprox/engine.hpp>
#include <stochprox/model.hpp>

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace stochprox::cli {

// Unknown keys, malformed values, inconsistent settings. Maps to exit code 2.
class ConfigError : public ArgumentError
{
public:
    using ArgumentError::ArgumentError;
};

struct ModelConfig
{
    std::string type = "toy"; // toy | pk
    long n_subjects = 20;
    long n_times = 8;
    long n_covariates = 20;
    std::uint64_t seed = 1;
    std::string data_dir; // empty: simulate from `seed`
    double dose = 150000.0;
    double sigma_fraction = 0.1;
    std::vector<bool> covariate_coords; // pk only; empty means all
    double omega_floor = 1e-4;
};

/// One rate-experiment panel: algorithm and schedule exponents.
struct RatePanel
{
    Algorithm algorithm = Algorithm::sapg;
    double alpha = 0.0;
    double beta = 0.0;
    long m_star = 60;
    double c = 0.0;
};

struct DiagnosticsConfig
{
    long replicates = 30;
    std::vector<RatePanel> rate_panels;
    long path_points = 40;
    double path_min_ratio = 0.1;
    double path_lambda_max = 0.0; // <= 0: estimate from a fit at huge λ
    PathOptions path;
    std::vector<Algorithm> compare_algorithms;
    double compare_tolerance = 1e-2;
    long reference_max_iter = 5000;
};

struct RunConfig
{
    std::string profile = "desk"; // desk | paper
    ModelConfig model;
    EngineConfig engine;
    DiagnosticsConfig diagnostics;
    std::string output_dir = "out";
    long checkpoint_every = 0; // 0: only at the end of a fit

    /// Flat section.key -> value map holding every resolved setting.
    std::map<std::string, std::string> resolved;
};

/// Parses an INI file; keys missing from it take profile defaults.
RunConfig load_config(const std::string& path);

/// Same as load_config, from INI text.
RunConfig parse_config(const std::string& text);

/// Applies "section.key=value" overrides on top of a parsed config.
RunConfig apply_overrides(const RunConfig& base, const std::vector<std::string>& overrides);

/// INI text of the resolved settings; parsing it reproduces the same config.
std::string resolved_ini(const RunConfig& config);

/// Default settings for a model type and profile, as section.key -> value.
std::map<std::string, std::string> profile_defaults(const std::string& type, const std::string& profile);

/// A model together with the ground truth when the data were simulated.
struct ModelBundle
{
    std::unique_ptr<LatentModel> model;
    std::optional<Vector> truth;
};

ModelBundle build_model(const RunConfig& config);

/// Engine config with the model's default penalty mask filled in.
EngineConfig engine_for(const RunConfig& config, const LatentModel& model);

} // namespace stochprox::cli
