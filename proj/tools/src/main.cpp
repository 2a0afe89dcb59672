#include <stochprox_cli/commands.hpp>

#include <stochprox/parallel.hpp>

#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>

namespace {

std::size_t thread_count(long flag)
{
    if (flag > 0) return static_cast<std::size_t>(flag);
    if (const char* env = std::getenv("STOCHPROX_THREADS")) {
        char* end = nullptr;
        const long v = std::strtol(env, &end, 10);
        if (end == env || *end != '\0' || v < 0) {
            throw stochprox::cli::ConfigError(std::string("STOCHPROX_THREADS must be a non-negative integer, got '") +
                                              env + "'");
        }
        return static_cast<std::size_t>(v);
    }
    return 0;
}

} // namespace

int main(int argc, char** argv)
{
    using namespace stochprox::cli;
    CLI::App app{"Stochastic proximal-gradient fitting for penalized latent-variable models"};
    app.require_subcommand(1);
    long threads = 0;
    app.add_option("--threads", threads, "Worker threads (0: STOCHPROX_THREADS or all cores)")->check(CLI::NonNegativeNumber);

    std::string config_path;
    std::vector<std::string> overrides;
    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("-c,--config", config_path, "INI configuration file");
        cmd->add_option("-s,--set", overrides, "Override a setting: section.key=value");
    };
    auto* simulate = app.add_subcommand("simulate", "Simulate a dataset");
    auto* fit = app.add_subcommand("fit", "Run one estimation");
    auto* rate = app.add_subcommand("rate", "Replicated convergence-rate experiment");
    auto* path = app.add_subcommand("path", "Regularization path with EBIC selection");
    auto* compare = app.add_subcommand("compare", "Agreement of stochastic limits with EM-pen");
    auto* schedule = app.add_subcommand("validate-schedule", "Check step-size and averaging schedules");
    for (auto* cmd : {simulate, fit, rate, path, compare, schedule}) add_common(cmd);
    FitOptions fit_options;
    long stop_after = -1;
    fit->add_option("--resume", fit_options.resume, "Continue from a checkpoint");
    fit->add_option("--stop-after", stop_after, "Stop and checkpoint at this iteration")->check(CLI::NonNegativeNumber);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        stochprox::ThreadLimit limit(thread_count(threads));
        RunConfig config = config_path.empty() ? parse_config("") : load_config(config_path);
        if (!overrides.empty()) config = apply_overrides(config, overrides);
        if (stop_after >= 0) fit_options.stop_after = stop_after;
        if (*simulate) return cmd_simulate(config);
        if (*fit) return cmd_fit(config, fit_options);
        if (*rate) return cmd_rate(config);
        if (*path) return cmd_path(config);
        if (*compare) return cmd_compare(config);
        return cmd_validate_schedule(config);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_code_for(e);
    }
}
