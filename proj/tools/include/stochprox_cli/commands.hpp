#pragma once
#include <stochprox_cli/config.hpp>

#include <optional>
#include <string>

namespace stochprox::cli {

struct FitOptions
{
    std::string resume;             // checkpoint to continue from
    std::optional<long> stop_after; // stop (and checkpoint) once this iteration is reached
};

/// Each command writes into config.output_dir, including resolved.ini.
/// Return values are process exit codes; exceptions propagate.
int cmd_simulate(const RunConfig& config);
int cmd_fit(const RunConfig& config, const FitOptions& options = {});
int cmd_rate(const RunConfig& config);
int cmd_path(const RunConfig& config);
int cmd_compare(const RunConfig& config);
int cmd_validate_schedule(const RunConfig& config);

/// Maps an exception to the documented exit code: 2 config, 3 numeric, 1 other.
int exit_code_for(const std::exception& e);

} // namespace stochprox::cli
