#include <stochprox_cli/config.hpp>
#include <stochprox_cli/io.hpp>

#include <stochprox/lmm_toy.hpp>
#include <stochprox/nlme_pk.hpp>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace stochprox::cli {

namespace {

using Settings = std::map<std::string, std::string>;

const std::vector<std::string>& section_order()
{
    static const std::vector<std::string> v{"model", "engine", "schedule", "penalty", "mcmc", "diagnostics", "output"};
    return v;
}

std::string trim(const std::string& s)
{
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep)
{
    std::vector<std::string> out;
    std::string item;
    std::istringstream in(s);
    while (std::getline(in, item, sep)) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

class Reader
{
public:
    explicit Reader(const Settings& s) : s_(s) {}

    const std::string& str(const std::string& key) const
    {
        const auto it = s_.find(key);
        if (it == s_.end()) throw ConfigError("missing setting '" + key + "'");
        return it->second;
    }

    double real(const std::string& key) const
    {
        const std::string& v = str(key);
        try {
            std::size_t used = 0;
            const double x = std::stod(v, &used);
            if (used != v.size() || !std::isfinite(x)) throw std::invalid_argument(v);
            return x;
        } catch (const std::exception&) {
            throw ConfigError("'" + key + "' must be a finite number, got '" + v + "'");
        }
    }

    long integer(const std::string& key) const
    {
        const std::string& v = str(key);
        long x = 0;
        const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
        if (ec != std::errc{} || ptr != v.data() + v.size()) {
            throw ConfigError("'" + key + "' must be an integer, got '" + v + "'");
        }
        return x;
    }

    std::uint64_t unsigned_integer(const std::string& key) const
    {
        const std::string& v = str(key);
        std::uint64_t x = 0;
        const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
        if (ec != std::errc{} || ptr != v.data() + v.size()) {
            throw ConfigError("'" + key + "' must be a non-negative integer, got '" + v + "'");
        }
        return x;
    }

    bool boolean(const std::string& key) const
    {
        const std::string& v = str(key);
        if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
        if (v == "false" || v == "0" || v == "no" || v == "off") return false;
        throw ConfigError("'" + key + "' must be true or false, got '" + v + "'");
    }

    template <class F>
    auto parsed(const std::string& key, F&& f) const
    {
        try {
            return f(str(key));
        } catch (const ConfigError&) {
            throw;
        } catch (const std::exception& e) {
            throw ConfigError("'" + key + "': " + e.what());
        }
    }

private:
    const Settings& s_;
};

Settings flatten(const boost::property_tree::ptree& tree)
{
    Settings out;
    for (const auto& [section, body] : tree) {
        if (body.empty()) throw ConfigError("setting '" + section + "' must be inside a [section]");
        for (const auto& [key, value] : body) {
            if (!value.empty()) throw ConfigError("nested keys are not supported: '" + section + "." + key + "'");
            out[section + "." + key] = trim(value.data());
        }
    }
    return out;
}

std::vector<bool> parse_coords(const std::string& v)
{
    if (v == "all") return {};
    static const std::vector<std::string> names{"vc", "vp", "q", "cl", "ka"};
    std::vector<bool> mask(names.size(), false);
    for (const auto& item : split(v, ',')) {
        bool found = false;
        for (std::size_t r = 0; r < names.size(); ++r) {
            if (item == names[r]) {
                mask[r] = true;
                found = true;
            }
        }
        if (!found) throw ConfigError("unknown latent coordinate '" + item + "' (use vc, vp, q, cl, ka or all)");
    }
    return mask;
}

std::vector<RatePanel> parse_panels(const std::string& v)
{
    std::vector<RatePanel> panels;
    for (const auto& item : split(v, ',')) {
        const auto parts = split(item, ':');
        if (parts.size() != 5) {
            throw ConfigError("rate panel '" + item + "' must read algorithm:alpha:beta:m_star:c");
        }
        RatePanel p;
        try {
            p.algorithm = algorithm_from_string(parts[0]);
            p.alpha = std::stod(parts[1]);
            p.beta = std::stod(parts[2]);
            p.m_star = std::stol(parts[3]);
            p.c = std::stod(parts[4]);
        } catch (const std::exception& e) {
            throw ConfigError("rate panel '" + item + "': " + e.what());
        }
        panels.push_back(p);
    }
    return panels;
}

RunConfig from_settings(const Settings& user)
{
    const std::string type = user.count("model.type") ? user.at("model.type") : "toy";
    const std::string profile = user.count("model.profile") ? user.at("model.profile") : "desk";
    Settings s = profile_defaults(type, profile);
    for (const auto& [key, value] : user) {
        if (!s.count(key)) throw ConfigError("unknown setting '" + key + "'");
        s[key] = value;
    }
    const Reader r(s);
    RunConfig c;
    c.resolved = s;
    c.profile = profile;

    ModelConfig& m = c.model;
    m.type = type;
    m.n_subjects = r.integer("model.n_subjects");
    m.n_times = r.integer("model.n_times");
    m.n_covariates = r.integer("model.n_covariates");
    m.seed = r.unsigned_integer("model.seed");
    m.data_dir = r.str("model.data_dir");
    m.dose = r.real("model.dose");
    m.sigma_fraction = r.real("model.sigma_fraction");
    m.covariate_coords = parse_coords(r.str("model.covariate_coords"));
    m.omega_floor = r.real("model.omega_floor");
    if (m.n_subjects < 1 || m.n_times < 1 || m.n_covariates < 0) throw ConfigError("model dimensions must be positive");

    EngineConfig& e = c.engine;
    e.algorithm = r.parsed("engine.algorithm", [](const std::string& v) { return algorithm_from_string(v); });
    e.max_iter = r.integer("engine.max_iter");
    e.seed = r.unsigned_integer("engine.seed");
    e.sampler = r.parsed("engine.sampler", [](const std::string& v) { return sampler_from_string(v); });
    e.mcmc_burnin = r.integer("engine.mcmc_burnin");
    e.curvature = r.parsed("engine.curvature", [](const std::string& v) { return curvature_from_string(v); });
    e.enforce_lipschitz = r.boolean("engine.enforce_lipschitz");
    e.gamma_limits.h_min = r.real("engine.h_min");
    e.gamma_limits.h_max = r.real("engine.h_max");
    e.mstep.tolerance = r.real("engine.mstep_tolerance");
    e.mstep.max_cycles = r.integer("engine.mstep_max_cycles");
    e.track_objective = r.boolean("engine.track_objective");
    e.track_stat_error = r.boolean("engine.track_stat_error");
    e.theta_stride = r.integer("engine.theta_stride");
    e.stop_tolerance = r.real("engine.stop_tolerance");
    e.stop_window = r.integer("engine.stop_window");

    ScheduleSpec& sc = e.schedule;
    sc.gamma_star = r.real("schedule.gamma_star");
    sc.alpha = r.real("schedule.alpha");
    sc.n_alpha = r.integer("schedule.n_alpha");
    sc.delta_star = r.real("schedule.delta_star");
    sc.beta = r.real("schedule.beta");
    sc.n_beta = r.integer("schedule.n_beta");
    sc.m_star = r.integer("schedule.m_star");
    sc.c = r.real("schedule.c");
    sc.adaptive = r.boolean("schedule.adaptive");
    sc.n0 = r.integer("schedule.n0");
    r.parsed("schedule.alpha", [&](const std::string&) {
        sc.validate();
        return 0;
    });

    PenaltySpec& p = e.penalty;
    p.kind = r.parsed("penalty.kind", [](const std::string& v) { return penalty_kind_from_string(v); });
    p.lambda = r.real("penalty.lambda");
    p.alpha = r.real("penalty.alpha");
    // lo/hi are sized once the model dimension is known (engine_for).
    r.real("penalty.box_lo");
    r.real("penalty.box_hi");

    McmcOptions& mc = e.mcmc;
    mc.target_acceptance = r.real("mcmc.target");
    mc.window = r.integer("mcmc.window");
    mc.gain_exponent = r.real("mcmc.gain_exponent");
    mc.sd_min = r.real("mcmc.sd_min");
    mc.sd_max = r.real("mcmc.sd_max");
    mc.initial_scale = r.real("mcmc.initial_scale");
    mc.adapt = r.boolean("mcmc.adapt");
    r.parsed("mcmc.target", [&](const std::string&) {
        mc.validate();
        return 0;
    });

    DiagnosticsConfig& d = c.diagnostics;
    d.replicates = r.integer("diagnostics.replicates");
    d.rate_panels = parse_panels(r.str("diagnostics.rate_panels"));
    d.path_points = r.integer("diagnostics.path_points");
    d.path_min_ratio = r.real("diagnostics.path_min_ratio");
    d.path_lambda_max = r.real("diagnostics.path_lambda_max");
    d.path.gamma_e = r.real("diagnostics.gamma_e");
    d.path.warm_start = r.boolean("diagnostics.warm_start");
    d.path.refit = r.boolean("diagnostics.refit");
    d.path.loglik.particles = r.integer("diagnostics.particles");
    d.path.loglik.pilot_burnin = r.integer("diagnostics.pilot_burnin");
    d.path.loglik.pilot_draws = r.integer("diagnostics.pilot_draws");
    d.path.loglik.proposal_inflation = r.real("diagnostics.proposal_inflation");
    d.path.loglik.seed = r.unsigned_integer("diagnostics.loglik_seed");
    d.path.loglik.prefer_exact = r.boolean("diagnostics.prefer_exact_loglik");
    for (const auto& name : split(r.str("diagnostics.compare_algorithms"), ',')) {
        d.compare_algorithms.push_back(
            r.parsed("diagnostics.compare_algorithms", [&](const std::string&) { return algorithm_from_string(name); }));
    }
    d.compare_tolerance = r.real("diagnostics.compare_tolerance");
    d.reference_max_iter = r.integer("diagnostics.reference_max_iter");
    if (d.replicates < 1) throw ConfigError("diagnostics.replicates must be >= 1");
    if (d.path_points < 1) throw ConfigError("diagnostics.path_points must be >= 1");
    if (!(d.path_min_ratio > 0.0 && d.path_min_ratio < 1.0)) {
        throw ConfigError("diagnostics.path_min_ratio must lie in (0, 1)");
    }

    c.output_dir = r.str("output.dir");
    c.checkpoint_every = r.integer("output.checkpoint_every");
    if (c.output_dir.empty()) throw ConfigError("output.dir must not be empty");
    if (c.checkpoint_every < 0) throw ConfigError("output.checkpoint_every must be >= 0");
    return c;
}

Settings parse_ini(const std::string& text)
{
    boost::property_tree::ptree tree;
    std::istringstream in(text);
    try {
        boost::property_tree::ini_parser::read_ini(in, tree);
    } catch (const boost::property_tree::ini_parser_error& e) {
        throw ConfigError(std::string("malformed config: ") + e.what());
    }
    return flatten(tree);
}

} // namespace

Settings profile_defaults(const std::string& type, const std::string& profile)
{
    if (type != "toy" && type != "pk") throw ConfigError("model.type must be toy or pk, got '" + type + "'");
    if (profile != "desk" && profile != "paper") {
        throw ConfigError("model.profile must be desk or paper, got '" + profile + "'");
    }
    const bool paper = profile == "paper";
    Settings s{
        {"model.type", type},
        {"model.profile", profile},
        {"model.n_subjects", paper ? "40" : "20"},
        {"model.n_times", type == "toy" ? "8" : "12"},
        {"model.n_covariates", paper ? "300" : "20"},
        {"model.seed", "1"},
        {"model.data_dir", ""},
        {"model.dose", "150000"},
        {"model.sigma_fraction", "0.1"},
        {"model.covariate_coords", "all"},
        {"model.omega_floor", "1e-4"},
        {"engine.seed", "1"},
        {"engine.sampler", "auto"},
        {"engine.enforce_lipschitz", "true"},
        {"engine.h_min", "1e-6"},
        {"engine.h_max", "1e6"},
        {"engine.mstep_tolerance", "1e-8"},
        {"engine.mstep_max_cycles", "10000"},
        {"engine.track_objective", "true"},
        {"engine.track_stat_error", "true"},
        {"engine.theta_stride", "1"},
        {"engine.stop_tolerance", "0"},
        {"engine.stop_window", "50"},
        {"schedule.n_alpha", "0"},
        {"schedule.c", "0"},
        {"penalty.kind", "lasso"},
        {"penalty.alpha", "1"},
        {"penalty.box_lo", "-1e4"},
        {"penalty.box_hi", "1e4"},
        {"mcmc.target", "0.4"},
        {"mcmc.window", "50"},
        {"mcmc.gain_exponent", "0.6"},
        {"mcmc.sd_min", "1e-6"},
        {"mcmc.sd_max", "1e3"},
        {"mcmc.initial_scale", "0.5"},
        {"mcmc.adapt", "true"},
        {"diagnostics.replicates", paper ? "100" : "30"},
        {"diagnostics.path_points", "40"},
        {"diagnostics.path_min_ratio", "0.1"},
        {"diagnostics.path_lambda_max", "0"},
        {"diagnostics.gamma_e", "0.5"},
        {"diagnostics.warm_start", "true"},
        {"diagnostics.refit", "true"},
        {"diagnostics.particles", "1000"},
        {"diagnostics.pilot_burnin", "200"},
        {"diagnostics.pilot_draws", "200"},
        {"diagnostics.proposal_inflation", "1.5"},
        {"diagnostics.loglik_seed", "20240607"},
        {"diagnostics.prefer_exact_loglik", "true"},
        {"diagnostics.compare_tolerance", "1e-2"},
        {"output.dir", "out"},
        {"output.checkpoint_every", "0"},
    };
    if (type == "toy") {
        const std::string iters = "2000";
        s.insert({{"engine.algorithm", "sapg"},
                  {"engine.max_iter", iters},
                  {"engine.mcmc_burnin", "0"},
                  {"engine.curvature", "louis"},
                  {"schedule.gamma_star", "1"},
                  {"schedule.alpha", "0.9"},
                  {"schedule.delta_star", "0.5"},
                  {"schedule.beta", "0.4"},
                  {"schedule.n_beta", "0"},
                  {"schedule.m_star", "60"},
                  {"schedule.adaptive", "false"},
                  {"schedule.n0", "0"},
                  {"penalty.lambda", paper ? "50" : "20"},
                  {"diagnostics.rate_panels", "sapg:0.9:0.4:60:0,sapg:0.6:0.1:60:0,sapg:0.5:0.5:60:0"},
                  {"diagnostics.compare_algorithms", "mcpg,sapg,saem-pen,mcem-pen"},
                  {"diagnostics.reference_max_iter", "5000"}});
    } else {
        const std::string iters = paper ? "15000" : "500";
        const std::string n0 = paper ? "9500" : "300";
        s.insert({{"engine.algorithm", "sapg"},
                  {"engine.max_iter", iters},
                  {"engine.mcmc_burnin", "50"},
                  {"engine.curvature", "majorant"},
                  {"schedule.gamma_star", "1"},
                  {"schedule.alpha", "0.75"},
                  {"schedule.delta_star", "0.5"},
                  {"schedule.beta", "0.499"},
                  {"schedule.n_beta", n0},
                  {"schedule.m_star", "5"},
                  {"schedule.adaptive", "true"},
                  {"schedule.n0", n0},
                  {"penalty.lambda", paper ? "190" : "10"},
                  {"diagnostics.rate_panels", "sapg:0.75:0.499:5:0"},
                  {"diagnostics.compare_algorithms", "sapg,saem-pen"},
                  {"diagnostics.reference_max_iter", iters}});
    }
    return s;
}

RunConfig parse_config(const std::string& text) { return from_settings(parse_ini(text)); }

RunConfig load_config(const std::string& path)
{
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config '" + path + "'");
    std::ostringstream text;
    text << in.rdbuf();
    return parse_config(text.str());
}

RunConfig apply_overrides(const RunConfig& base, const std::vector<std::string>& overrides)
{
    Settings user = base.resolved;
    for (const auto& o : overrides) {
        const auto eq = o.find('=');
        if (eq == std::string::npos || o.find('.') > eq) {
            throw ConfigError("override '" + o + "' must read section.key=value");
        }
        const std::string key = trim(o.substr(0, eq));
        if (!user.count(key)) throw ConfigError("unknown setting '" + key + "'");
        user[key] = trim(o.substr(eq + 1));
    }
    // A changed type or profile re-derives the defaults of every key not set explicitly.
    if (user.at("model.type") != base.model.type || user.at("model.profile") != base.profile) {
        Settings explicit_only;
        for (const auto& o : overrides) {
            const auto eq = o.find('=');
            explicit_only[trim(o.substr(0, eq))] = trim(o.substr(eq + 1));
        }
        return from_settings(explicit_only);
    }
    return from_settings(user);
}

std::string resolved_ini(const RunConfig& config)
{
    std::ostringstream out;
    bool first = true;
    for (const auto& section : section_order()) {
        if (!first) out << '\n';
        first = false;
        out << '[' << section << "]\n";
        const std::string prefix = section + ".";
        for (const auto& [key, value] : config.resolved) {
            if (key.rfind(prefix, 0) == 0) out << key.substr(prefix.size()) << " = " << value << '\n';
        }
    }
    return out.str();
}

ModelBundle build_model(const RunConfig& config)
{
    const ModelConfig& m = config.model;
    ModelBundle bundle;
    if (m.type == "toy") {
        LmmDataset data;
        if (m.data_dir.empty()) {
            LmmSimulation sim = simulate_lmm(m.n_subjects, m.n_times, m.n_covariates, m.seed);
            data = std::move(sim.data);
            bundle.truth = sim.theta_star;
        } else {
            data = read_toy_dataset(m.data_dir);
        }
        bundle.model = std::make_unique<LmmToyModel>(std::move(data));
    } else {
        PkDataset data;
        if (m.data_dir.empty()) {
            PkSimulationOptions options;
            options.dose = m.dose;
            options.sigma_fraction = m.sigma_fraction;
            PkSimulation sim = simulate_pk(m.n_subjects, m.n_times, m.n_covariates, m.seed, options);
            data = std::move(sim.data);
            bundle.truth = sim.theta_tilde;
        } else {
            data = read_pk_dataset(m.data_dir, m.dose);
        }
        PkModelSpec spec;
        spec.covariate_coords = m.covariate_coords;
        spec.omega_floor = m.omega_floor;
        bundle.model = std::make_unique<PkModel>(std::move(data), spec);
    }
    return bundle;
}

EngineConfig engine_for(const RunConfig& config, const LatentModel& model)
{
    EngineConfig e = config.engine;
    e.penalty.mask = model.default_penalty_mask();
    if (e.penalty.kind == PenaltyKind::box) {
        const auto d = static_cast<std::size_t>(model.dim_theta());
        e.penalty.lo.assign(d, std::stod(config.resolved.at("penalty.box_lo")));
        e.penalty.hi.assign(d, std::stod(config.resolved.at("penalty.box_hi")));
    }
    try {
        e.validate(model);
    } catch (const ArgumentError& err) {
        throw ConfigError(err.what());
    }
    return e;
}

} // namespace stochprox::cli
