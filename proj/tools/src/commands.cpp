#include <stochprox_cli/commands.hpp>
#include <stochprox_cli/io.hpp>
#include <stochprox_cli/plots.hpp>

#include <stochprox/diagnostics.hpp>
#include <stochprox/lmm_toy.hpp>
#include <stochprox/nlme_pk.hpp>
#include <stochprox/schedules.hpp>

#include <algorithm>
#include <filesystem>
#include <iostream>

namespace stochprox::cli {

namespace {

std::string sanitize(std::string s)
{
    std::replace(s.begin(), s.end(), ',', ';');
    std::replace(s.begin(), s.end(), '\n', ' ');
    return s;
}

std::string join(const std::vector<Index>& v)
{
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) out += (i ? ";" : "") + std::to_string(v[i]);
    return out;
}

std::string path_in(const RunConfig& config, const std::string& file) { return config.output_dir + "/" + file; }

void prepare_output(const RunConfig& config)
{
    ensure_directory(config.output_dir);
    write_text(path_in(config, "resolved.ini"), resolved_ini(config));
}

std::vector<std::string> theta_names(const LatentModel& model)
{
    std::vector<std::string> names(static_cast<std::size_t>(model.dim_theta()));
    for (const auto& b : model.theta_layout().blocks) {
        for (Index i = 0; i < b.size; ++i) {
            names[static_cast<std::size_t>(b.offset + i)] =
                b.size == 1 ? b.name : b.name + "[" + std::to_string(i) + "]";
        }
    }
    return names;
}

void write_theta_rows(const std::string& path, const std::string& schema, const std::vector<std::string>& names,
                      const std::vector<long>& iterations, const std::vector<Vector>& values)
{
    std::vector<std::string> cols{"iteration"};
    cols.insert(cols.end(), names.begin(), names.end());
    CsvWriter w(path, schema, cols);
    for (std::size_t r = 0; r < values.size(); ++r) {
        w.cell(iterations[r]);
        for (Index i = 0; i < values[r].size(); ++i) w.cell(values[r][i]);
        w.end_row();
    }
    w.close();
}

void write_estimate(const std::string& path, const std::vector<std::string>& names, const Vector& theta,
                    const std::optional<Vector>& truth)
{
    CsvWriter w(path, "estimate", {"index", "name", "value", "truth"});
    for (Index i = 0; i < theta.size(); ++i) {
        w.cell(static_cast<long>(i)).cell(names[static_cast<std::size_t>(i)]).cell(theta[i]);
        if (truth) {
            w.cell((*truth)[i]);
        } else {
            w.empty();
        }
        w.end_row();
    }
    w.close();
}

void write_trace(const std::string& path, const RunTrace& trace)
{
    CsvWriter w(path, "run-trace",
                {"iteration", "gamma", "delta", "batch", "objective", "stat_error", "support", "acceptance"});
    for (const auto& row : trace.rows) {
        w.cell(row.iteration).cell(row.gamma).cell(row.delta).cell(row.batch);
        if (row.objective_infinite) {
            w.cell(std::string("-inf"));
        } else if (row.objective) {
            w.cell(*row.objective);
        } else {
            w.empty();
        }
        if (row.stat_error) {
            w.cell(*row.stat_error);
        } else {
            w.empty();
        }
        w.cell(row.support);
        if (row.acceptance) {
            w.cell(*row.acceptance);
        } else {
            w.empty();
        }
        w.end_row();
    }
    w.close();
}

void report_warnings(const std::vector<std::string>& warnings)
{
    for (const auto& w : warnings) std::cerr << "warning: " << w << '\n';
}

EngineConfig with_panel(EngineConfig e, const RatePanel& p)
{
    e.algorithm = p.algorithm;
    e.schedule.alpha = p.alpha;
    e.schedule.beta = p.beta;
    e.schedule.m_star = p.m_star;
    e.schedule.c = p.c;
    return e;
}

} // namespace

int exit_code_for(const std::exception& e)
{
    if (dynamic_cast<const ArgumentError*>(&e) || dynamic_cast<const FormatError*>(&e)) return 2;
    if (dynamic_cast<const NumericError*>(&e)) return 3;
    return 1;
}

int cmd_simulate(const RunConfig& config)
{
    if (!config.model.data_dir.empty()) throw ConfigError("simulate needs model.data_dir to be empty");
    const ModelBundle bundle = build_model(config);
    prepare_output(config);
    if (const auto* toy = dynamic_cast<const LmmToyModel*>(bundle.model.get())) {
        write_toy_dataset(config.output_dir, toy->data());
    } else {
        write_pk_dataset(config.output_dir, dynamic_cast<const PkModel&>(*bundle.model).data());
    }
    const auto names = theta_names(*bundle.model);
    CsvWriter w(path_in(config, "truth.csv"), "parameters", {"index", "name", "value"});
    for (Index i = 0; i < bundle.truth->size(); ++i) {
        w.cell(static_cast<long>(i)).cell(names[static_cast<std::size_t>(i)]).cell((*bundle.truth)[i]);
        w.end_row();
    }
    w.close();
    return 0;
}

int cmd_fit(const RunConfig& config, const FitOptions& options)
{
    const ModelBundle bundle = build_model(config);
    const LatentModel& model = *bundle.model;
    const EngineConfig engine = engine_for(config, model);
    prepare_output(config);
    const std::string checkpoint = path_in(config, "checkpoint.bin");

    EngineState state;
    if (!options.resume.empty()) {
        state = load_checkpoint(options.resume);
        if (state.theta.size() != model.dim_theta()) {
            throw ConfigError("checkpoint '" + options.resume + "' does not match the configured model");
        }
    } else {
        state = init_engine_state(model, engine);
    }
    const long stop = options.stop_after.value_or(engine.max_iter);
    advance(model, engine, state, [&](const EngineState& s) {
        if (config.checkpoint_every > 0 && s.iteration % config.checkpoint_every == 0) save_checkpoint(checkpoint, s);
        return s.iteration < stop;
    });
    save_checkpoint(checkpoint, state);

    const RunTrace& trace = state.trace;
    const auto names = theta_names(model);
    write_trace(path_in(config, "trace.csv"), trace);
    write_theta_rows(path_in(config, "theta.csv"), "theta-path", names, trace.theta_iterations, trace.thetas);
    if (!trace.step_diagonals.empty()) {
        std::vector<long> its;
        std::vector<Vector> steps;
        for (std::size_t i = 0; i < trace.step_diagonals.size(); ++i) {
            if (trace.step_diagonals[i].size() == 0) continue;
            its.push_back(trace.theta_iterations[i]);
            steps.push_back(trace.step_diagonals[i]);
        }
        write_theta_rows(path_in(config, "steps.csv"), "step-diagonals", names, its, steps);
    }
    write_estimate(path_in(config, "estimate.csv"), names, trace.final_theta, bundle.truth);
    {
        CsvWriter w(path_in(config, "fit_summary.csv"), "fit-summary", {"key", "value"});
        w.cell(std::string("iterations")).cell(trace.iterations).end_row();
        w.cell(std::string("projections")).cell(trace.projections).end_row();
        w.cell(std::string("stopped_early")).cell(std::string(trace.stopped_early ? "true" : "false")).end_row();
        w.cell(std::string("aborted")).cell(std::string(trace.aborted ? "true" : "false")).end_row();
        w.cell(std::string("error")).cell(sanitize(trace.error)).end_row();
        w.cell(std::string("support")).cell(join(RunTrace::support_of(trace.final_theta, engine.penalty.mask)));
        w.end_row();
        w.close();
    }
    std::vector<std::string> plotted;
    for (Index i : RunTrace::support_of(trace.final_theta, engine.penalty.mask)) {
        plotted.push_back(names[static_cast<std::size_t>(i)]);
    }
    write_text(path_in(config, "trace.gp"), trace_plot_script(plotted));
    report_warnings(trace.warnings);
    if (trace.aborted) {
        std::cerr << "error: " << trace.error << '\n';
        return trace.numeric_failure ? 3 : 1;
    }
    return 0;
}

int cmd_rate(const RunConfig& config)
{
    const ModelBundle bundle = build_model(config);
    const LatentModel& model = *bundle.model;
    const EngineConfig engine = engine_for(config, model);
    if (config.diagnostics.rate_panels.empty()) throw ConfigError("diagnostics.rate_panels is empty");
    prepare_output(config);
    CsvWriter curves(path_in(config, "rate.csv"), "rate-curves",
                     {"panel", "algorithm", "alpha", "beta", "m_star", "c", "iteration", "l2_error"});
    CsvWriter summary(path_in(config, "rate_summary.csv"), "rate-summary",
                      {"panel", "algorithm", "alpha", "beta", "m_star", "c", "replicates", "predicted_slope",
                       "fitted_slope", "intercept", "max_residual"});
    long index = 0;
    for (const auto& panel : config.diagnostics.rate_panels) {
        EngineConfig e = with_panel(engine, panel);
        e.validate(model);
        const RateReport report = rate_experiment(model, e, config.diagnostics.replicates);
        const std::string alg = to_string(panel.algorithm);
        for (std::size_t i = 0; i < report.iterations.size(); ++i) {
            curves.cell(index).cell(alg).cell(panel.alpha).cell(panel.beta).cell(panel.m_star).cell(panel.c);
            curves.cell(report.iterations[i]).cell(report.l2_error[i]);
            curves.end_row();
        }
        summary.cell(index).cell(alg).cell(panel.alpha).cell(panel.beta).cell(panel.m_star).cell(panel.c);
        summary.cell(report.replicates).cell(report.predicted_slope).cell(report.fit.slope);
        summary.cell(report.fit.intercept).cell(report.fit.max_residual);
        summary.end_row();
        std::cout << "panel " << index << " (" << alg << ", alpha=" << panel.alpha << ", beta=" << panel.beta
                  << ", c=" << panel.c << "): slope " << report.fit.slope << ", predicted " << report.predicted_slope
                  << '\n';
        ++index;
    }
    curves.close();
    summary.close();
    write_text(path_in(config, "rate.gp"), rate_plot_script(index));
    return 0;
}

int cmd_path(const RunConfig& config)
{
    const ModelBundle bundle = build_model(config);
    const LatentModel& model = *bundle.model;
    EngineConfig engine = engine_for(config, model);
    if (engine.penalty.kind != PenaltyKind::lasso && engine.penalty.kind != PenaltyKind::elastic_net) {
        throw ConfigError("path needs a lasso or elastic-net penalty");
    }
    prepare_output(config);
    const DiagnosticsConfig& d = config.diagnostics;
    const double top = d.path_lambda_max > 0.0 ? d.path_lambda_max : 1.05 * estimate_lambda_max(model, engine);
    const auto grid = lambda_grid(top, d.path_points, d.path_min_ratio);
    const PathReport report = reg_path(model, engine, grid, d.path);

    const auto names = theta_names(model);
    std::vector<Index> penalized;
    for (Index i = 0; i < model.dim_theta(); ++i) {
        if (engine.penalty.mask[static_cast<std::size_t>(i)]) penalized.push_back(i);
    }
    CsvWriter path(path_in(config, "path.csv"), "reg-path",
                   {"index", "lambda", "ok", "support_size", "loglik", "ebic", "selected", "support", "error"});
    std::vector<std::string> cols{"index", "lambda"};
    for (Index i : penalized) cols.push_back(names[static_cast<std::size_t>(i)]);
    CsvWriter coef(path_in(config, "path_coefficients.csv"), "path-coefficients", cols);
    for (std::size_t k = 0; k < report.points.size(); ++k) {
        const PathPoint& p = report.points[k];
        path.cell(static_cast<long>(k)).cell(p.lambda).cell(std::string(p.ok ? "true" : "false"));
        if (p.ok) {
            path.cell(static_cast<long>(p.support.size())).cell(p.loglik).cell(p.ebic);
        } else {
            path.empty().empty().empty();
        }
        path.cell(std::string(static_cast<long>(k) == report.selected ? "true" : "false"));
        path.cell(join(p.support)).cell(sanitize(p.error));
        path.end_row();
        coef.cell(static_cast<long>(k)).cell(p.lambda);
        for (Index i : penalized) {
            if (p.ok) {
                coef.cell(p.theta[i]);
            } else {
                coef.empty();
            }
        }
        coef.end_row();
    }
    path.close();
    coef.close();
    const double selected = report.selected >= 0 ? report.points[static_cast<std::size_t>(report.selected)].lambda : 0.0;
    write_text(path_in(config, "path.gp"), path_plot_script(static_cast<long>(penalized.size()), selected));
    report_warnings(report.warnings);
    if (report.selected < 0) {
        std::cerr << "error: no lambda value produced a usable fit\n";
        return 3;
    }
    const PathPoint& best = report.points[static_cast<std::size_t>(report.selected)];
    std::cout << "selected lambda " << best.lambda << " with support {" << join(best.support) << "}\n";
    return 0;
}

int cmd_compare(const RunConfig& config)
{
    const ModelBundle bundle = build_model(config);
    const LatentModel& model = *bundle.model;
    const EngineConfig engine = engine_for(config, model);
    const DiagnosticsConfig& d = config.diagnostics;
    if (d.compare_algorithms.empty()) throw ConfigError("diagnostics.compare_algorithms is empty");
    prepare_output(config);
    EngineConfig reference = engine;
    reference.algorithm = Algorithm::em_pen;
    reference.max_iter = d.reference_max_iter;
    reference.track_objective = false;
    reference.track_stat_error = false;
    std::vector<EngineConfig> runs;
    for (Algorithm a : d.compare_algorithms) {
        for (long r = 0; r < d.replicates; ++r) {
            EngineConfig e = engine;
            e.algorithm = a;
            e.seed = engine.seed + static_cast<std::uint64_t>(r);
            e.track_objective = false;
            e.track_stat_error = false;
            e.theta_stride = e.max_iter;
            e.validate(model);
            runs.push_back(e);
        }
    }
    const AgreementReport report = limit_agreement(model, reference, runs, d.compare_tolerance);
    const auto names = theta_names(model);

    CsvWriter w(path_in(config, "compare.csv"), "limit-agreement",
                {"algorithm", "seed", "max_deviation", "identical_support", "support_size", "support"});
    for (const auto& e : report.entries) {
        w.cell(to_string(e.algorithm)).cell(static_cast<long>(e.seed)).cell(e.max_deviation);
        w.cell(std::string(e.identical_support ? "true" : "false")).cell(static_cast<long>(e.support.size()));
        w.cell(join(e.support)).end_row();
    }
    w.close();

    CsvWriter s(path_in(config, "compare_summary.csv"), "limit-agreement-summary",
                {"algorithm", "runs", "within_tolerance", "identical_support", "worst_deviation"});
    for (Algorithm a : d.compare_algorithms) {
        long n = 0, within = 0, identical = 0;
        double worst = 0.0;
        for (const auto& e : report.entries) {
            if (e.algorithm != a) continue;
            ++n;
            within += e.max_deviation <= d.compare_tolerance;
            identical += e.identical_support;
            worst = std::max(worst, e.max_deviation);
        }
        s.cell(to_string(a)).cell(n).cell(within).cell(identical).cell(worst).end_row();
        std::cout << to_string(a) << ": " << within << "/" << n << " within " << d.compare_tolerance << ", "
                  << identical << "/" << n << " identical support\n";
    }
    s.close();

    std::vector<std::string> cols{"run", "algorithm", "seed"};
    cols.insert(cols.end(), names.begin(), names.end());
    CsvWriter t(path_in(config, "compare_theta.csv"), "limit-agreement-theta", cols);
    t.cell(0L).cell(std::string("em-pen")).cell(0L);
    for (Index i = 0; i < report.reference.size(); ++i) t.cell(report.reference[i]);
    t.end_row();
    for (std::size_t k = 0; k < report.entries.size(); ++k) {
        const auto& e = report.entries[k];
        t.cell(static_cast<long>(k + 1)).cell(to_string(e.algorithm)).cell(static_cast<long>(e.seed));
        for (Index i = 0; i < e.theta.size(); ++i) t.cell(e.theta[i]);
        t.end_row();
    }
    t.close();
    std::vector<std::string> algs;
    for (Algorithm a : d.compare_algorithms) algs.push_back(to_string(a));
    write_text(path_in(config, "compare.gp"), compare_plot_script(algs));
    return 0;
}

int cmd_validate_schedule(const RunConfig& config)
{
    const ScheduleSpec& spec = config.engine.schedule;
    spec.validate();
    prepare_output(config);
    const long n_terms = std::max<long>(config.engine.max_iter, 1000);
    const H5Report h5 = validate_H5(spec, n_terms);
    CsvWriter w(path_in(config, "schedule_checks.csv"), "schedule-checks", {"check", "passed", "detail"});
    for (const auto& c : h5.conditions) {
        w.cell(c.name).cell(std::string(c.passed ? "true" : "false")).cell(sanitize(c.detail)).end_row();
    }
    w.cell(std::string("H5")).cell(std::string(h5.passed ? "true" : "false"));
    w.cell(std::string("block sums ") + format_number(h5.block_sum_early) + " then " +
           format_number(h5.block_sum_late) + (h5.numerically_flattening ? " (flattening)" : " (not flattening)"));
    w.end_row();
    const DeltaIdentity id = delta_identity_check(spec, n_terms);
    w.cell(std::string("delta_identity")).cell(std::string(id.residual < 1e-10 ? "true" : "false"));
    w.cell("residual " + format_number(id.residual)).end_row();
    w.close();

    CsvWriter seq(path_in(config, "schedule.csv"), "schedule-sequence", {"n", "gamma", "delta", "batch", "D"});
    const long horizon_cap = 1L << 24;
    for (long n = 1; n <= config.engine.max_iter; ++n) {
        seq.cell(n).cell(gamma_at(spec, n - 1)).cell(delta_at(spec, n - 1)).cell(batch_at(spec, n));
        // D_n only on a logarithmic subset of n; each value needs its own long horizon.
        const bool sample = (n & (n - 1)) == 0;
        bool wrote = false;
        if (sample) {
            try {
                const long h = std::min(required_D_horizon(spec, n), horizon_cap);
                seq.cell(compute_D(spec, n, h).value);
                wrote = true;
            } catch (const ArgumentError&) {
            }
        }
        if (!wrote) seq.empty();
        seq.end_row();
    }
    seq.close();
    std::cout << "H5 " << (h5.passed ? "satisfied" : "violated") << '\n';
    for (const auto& c : h5.conditions) {
        std::cout << "  " << (c.passed ? "ok   " : "FAIL ") << c.name << ": " << c.detail << '\n';
    }
    return 0;
}

} // namespace stochprox::cli
