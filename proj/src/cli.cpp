#include "resqrl/cli.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include <omp.h>

#include "CLI11.hpp"
#include "json.hpp"
#include "resqrl/data.hpp"
#include "resqrl/gcomp.hpp"
#include "resqrl/sampler.hpp"
#include "resqrl/simulation.hpp"

namespace resqrl {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr const char* kToolVersion = "1.0.0";

json mcmc_defaults() {
    return {{"burn_in", 20000}, {"iterations", 20000}, {"thin", 20}, {"k_new", 1}, {"phi", 0.0}, {"eta", 1.0}};
}

json defaults_for(const std::string& cmd) {
    json base = {{"seed", nullptr}, {"out_dir", "."}, {"workers", 0}};
    if (cmd == "simulate") {
        base.update({{"scenario", 1},
                     {"n", 500},
                     {"replicates", 100},
                     {"model", "edpmm"},
                     {"level", 0.95},
                     {"nu", json::array({0, 1, 2, 3})},
                     {"rho", nullptr},
                     {"cohort_size", 1000},
                     {"truth_n_mc", 10000000},
                     {"mcmc", mcmc_defaults()}});
    } else if (cmd == "fit") {
        base.update({{"data", nullptr},
                     {"schema", {{"binary", json::array()}, {"continuous", json::array()}}},
                     {"missing_marker", "NA"},
                     {"model", "edpmm"},
                     {"prior", {{"a_beta", nullptr}, {"B_beta", nullptr}, {"c_beta", nullptr}}},
                     {"mcmc", mcmc_defaults()}});
    } else if (cmd == "estimate" || cmd == "sensitivity") {
        base.update({{"draws", nullptr},
                     {"manifest", nullptr},
                     {"nu", json::array({0})},
                     {"rho", json::array({0.5})},
                     {"subgroups", json::array()},
                     {"include_overall", true},
                     {"cohort_size", 1000},
                     {"level", 0.99},
                     {"survival_times", json::array()}});
        if (cmd == "estimate") base["psi"] = json::array({json::array({0.0, 0.0})});
        else base["psi_values"] = json::array({-0.25, 0.0, 0.25});
    } else if (cmd == "km") {
        base.update({{"data", nullptr},
                     {"schema", {{"binary", json::array()}, {"continuous", json::array()}}},
                     {"missing_marker", "NA"},
                     {"by_exposure", true}});
    }
    return base;
}

void check_keys(const json& cfg, const json& defaults, const std::string& prefix) {
    for (auto it = cfg.begin(); it != cfg.end(); ++it) {
        if (!defaults.contains(it.key())) throw ConfigError("unknown configuration key '" + prefix + it.key() + "'");
        const json& d = defaults.at(it.key());
        if (d.is_object() && it.key() != "schema") {
            if (!it.value().is_object()) throw ConfigError("configuration key '" + prefix + it.key() + "' must be an object");
            check_keys(it.value(), d, prefix + it.key() + ".");
        }
    }
}

// merge_patch drops keys set to null; put the defaults back
void restore_dropped(json& cfg, const json& defaults) {
    for (auto it = defaults.begin(); it != defaults.end(); ++it) {
        if (!cfg.contains(it.key())) cfg[it.key()] = it.value();
        else if (it.value().is_object() && cfg[it.key()].is_object()) restore_dropped(cfg[it.key()], it.value());
    }
}

json parse_override_value(const std::string& v) {
    try {
        return json::parse(v);
    } catch (const json::exception&) {
        return v;
    }
}

void apply_override(json& cfg, const std::string& kv) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + kv + "' must look like key=value");
    const std::string key = kv.substr(0, eq);
    json* node = &cfg;
    std::size_t start = 0;
    for (;;) {
        const auto dot = key.find('.', start);
        const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
        if (part.empty()) throw ConfigError("override '" + kv + "' has an empty key component");
        if (dot == std::string::npos) {
            (*node)[part] = parse_override_value(kv.substr(eq + 1));
            return;
        }
        if (!node->contains(part) || !(*node)[part].is_object()) (*node)[part] = json::object();
        node = &(*node)[part];
        start = dot + 1;
    }
}

template <class T>
T get_as(const json& cfg, const std::string& key) {
    try {
        return cfg.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError("configuration key '" + key + "' has the wrong type");
    }
}

std::string require_string(const json& cfg, const std::string& key) {
    if (!cfg.contains(key) || cfg.at(key).is_null()) throw ConfigError("configuration key '" + key + "' is required");
    return get_as<std::string>(cfg, key);
}

std::vector<double> get_doubles(const json& cfg, const std::string& key) {
    const json& v = cfg.at(key);
    if (!v.is_array()) throw ConfigError("configuration key '" + key + "' must be a list of numbers");
    std::vector<double> out;
    for (const auto& e : v) {
        if (!e.is_number()) throw ConfigError("configuration key '" + key + "' must be a list of numbers");
        out.push_back(e.get<double>());
    }
    return out;
}

MCMCConfig mcmc_from(const json& m, std::uint64_t seed) {
    MCMCConfig c;
    c.burn_in = get_as<int>(m, "burn_in");
    c.iterations = get_as<int>(m, "iterations");
    c.thin = get_as<int>(m, "thin");
    c.k_new = get_as<int>(m, "k_new");
    c.phi = get_as<double>(m, "phi");
    c.eta = get_as<double>(m, "eta");
    c.seed = seed;
    try {
        c.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    return c;
}

CovariateSchema schema_from(const json& cfg) {
    const json& s = cfg.at("schema");
    if (!s.is_object()) throw ConfigError("schema must be an object with 'binary' and 'continuous' lists");
    std::vector<std::string> names;
    std::vector<CovariateKind> kinds;
    for (const char* part : {"binary", "continuous"}) {
        if (!s.contains(part)) continue;
        if (!s.at(part).is_array()) throw ConfigError(std::string("schema.") + part + " must be a list of names");
        for (const auto& n : s.at(part)) {
            if (!n.is_string()) throw ConfigError(std::string("schema.") + part + " must be a list of names");
            names.push_back(n.get<std::string>());
            kinds.push_back(std::string(part) == "binary" ? CovariateKind::Binary : CovariateKind::Continuous);
        }
    }
    for (auto it = s.begin(); it != s.end(); ++it)
        if (it.key() != "binary" && it.key() != "continuous") throw ConfigError("unknown schema key '" + it.key() + "'");
    return CovariateSchema::make(names, kinds);
}

void write_text(const fs::path& p, const std::string& text) {
    std::ofstream f(p, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write '" + p.string() + "'");
    f << text;
}

std::string fmt(double v) { return format_double(v); }

json read_json_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open '" + path + "'");
    try {
        return json::parse(f);
    } catch (const json::exception& e) {
        throw ConfigError("cannot parse '" + path + "': " + e.what());
    }
}

struct RunContext {
    std::string command;
    json cfg;
    std::uint64_t seed = 0;
    fs::path out_dir;
    std::ostream& out;
    std::ostream& err;
};

void write_manifest(const RunContext& ctx, json extra) {
    json echo = ctx.cfg;
    echo.erase("out_dir");
    echo.erase("workers");
    json m = {{"tool", "resqrl"}, {"version", kToolVersion}, {"command", ctx.command}, {"config", echo}};
    if (!ctx.cfg.at("seed").is_null()) m["seed"] = ctx.seed;
    m.update(extra);
    write_text(ctx.out_dir / "manifest.json", m.dump(2) + "\n");
}

// ---- simulate -----------------------------------------------------------------

int cmd_simulate(RunContext& ctx) {
    const json& c = ctx.cfg;
    const Scenario sc = Scenario::get(get_as<int>(c, "scenario"));
    std::vector<double> nus = get_doubles(c, "nu");
    std::vector<double> rhos;
    if (c.at("rho").is_null()) {
        rhos = sc.light_censoring ? std::vector<double>{0.3, 0.6} : std::vector<double>{0.1, 0.2};
    } else {
        rhos = get_doubles(c, "rho");
    }
    ReplicateConfig rc;
    rc.scenario = sc.id;
    rc.n = get_as<int>(c, "n");
    rc.replicates = get_as<int>(c, "replicates");
    rc.seed = ctx.seed;
    if (rc.n < 10) throw ConfigError("n must be at least 10");
    if (rc.replicates < 1) throw ConfigError("replicates must be positive");
    for (double nu : nus)
        for (double rho : rhos) rc.cells.push_back({nu, rho, 0.0, 0.0});
    OsqcRequest probe;
    probe.cells = rc.cells;
    probe.level = get_as<double>(c, "level");
    probe.cohort_size = get_as<int>(c, "cohort_size");
    try {
        probe.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    const ModelKind model = [&] {
        try {
            return parse_model(get_as<std::string>(c, "model"));
        } catch (const std::invalid_argument& e) {
            throw ConfigError(e.what());
        }
    }();
    const MCMCConfig mcmc = mcmc_from(c.at("mcmc"), 0);
    const long n_mc = get_as<long>(c, "truth_n_mc");
    if (n_mc < 1000000) throw ConfigError("truth_n_mc must be at least 1e6");

    ctx.err << "computing Monte Carlo truth with " << n_mc << " draws\n";
    const auto truth = true_osqc(rc.cells, n_mc, Rng(ctx.seed).split("truth").next_u64());
    const Estimator est = model_estimator(model, mcmc, probe.cohort_size, probe.level);
    const MetricsTable table =
        run_replicates(rc, truth, est, [&](const std::string& msg) { ctx.err << msg << "\n"; });

    std::string csv = "nu,rho,truth,truth_se,bias,rmse,coverage,replicates\n";
    for (std::size_t i = 0; i < table.cells.size(); ++i) {
        const auto& m = table.cells[i];
        csv += fmt(m.cell.nu) + "," + fmt(m.cell.rho) + "," + fmt(m.truth) + "," + fmt(truth[i].se) + "," + fmt(m.bias) +
               "," + fmt(m.rmse) + "," + fmt(m.coverage) + "," + std::to_string(m.used) + "\n";
    }
    write_text(ctx.out_dir / "metrics.csv", csv);
    std::string est_csv = "replicate_index,nu,rho,mean,sd,lower,upper\n";
    for (const auto& m : table.cells)
        for (std::size_t r = 0; r < m.estimates.size(); ++r) {
            const auto& s = m.estimates[r];
            est_csv += std::to_string(r) + "," + fmt(m.cell.nu) + "," + fmt(m.cell.rho) + "," + fmt(s.mean) + "," +
                       fmt(s.sd) + "," + fmt(s.lower) + "," + fmt(s.upper) + "\n";
        }
    write_text(ctx.out_dir / "estimates.csv", est_csv);
    std::string flog;
    for (const auto& f : table.failure_log) flog += f + "\n";
    write_text(ctx.out_dir / "failures.log", flog);
    write_manifest(ctx, {{"failures", table.failures},
                         {"censoring_rate", table.censoring_rate},
                         {"outputs", {"metrics.csv", "estimates.csv", "failures.log"}}});
    ctx.out << csv;
    return 0;
}

// ---- fit ----------------------------------------------------------------------

// User-supplied outcome prior, or the AFT-centered default when a_beta/B_beta are absent.
BaseMeasure base_measure_from(const json& prior, const Dataset& data) {
    const bool has_a = !prior.at("a_beta").is_null(), has_b = !prior.at("B_beta").is_null();
    if (has_a != has_b) throw ConfigError("prior.a_beta and prior.B_beta must be given together");
    BaseMeasure b;
    if (has_a) {
        b.n_binary = static_cast<int>(data.schema().n_binary());
        b.n_continuous = static_cast<int>(data.schema().n_continuous());
        const int p = b.design_dim();
        std::vector<double> a;
        std::vector<std::vector<double>> B;
        try {
            a = prior.at("a_beta").get<std::vector<double>>();
            B = prior.at("B_beta").get<std::vector<std::vector<double>>>();
        } catch (const json::exception&) {
            throw ConfigError("prior.a_beta must be a number array and prior.B_beta a matrix");
        }
        if (static_cast<int>(a.size()) != p || static_cast<int>(B.size()) != p)
            throw ConfigError("prior.a_beta and prior.B_beta must have dimension " + std::to_string(p) +
                              " (intercept, exposure, then binary and continuous covariates)");
        b.a_beta = Eigen::Map<const Vec>(a.data(), p);
        b.B_beta.resize(p, p);
        for (int i = 0; i < p; ++i) {
            if (static_cast<int>(B[i].size()) != p) throw ConfigError("prior.B_beta must be square");
            for (int j = 0; j < p; ++j) b.B_beta(i, j) = B[i][j];
        }
        b.c_beta = static_cast<double>(data.size()) / 5.0;
    } else {
        b = make_base_measure(data);
    }
    if (!prior.at("c_beta").is_null()) b.c_beta = get_as<double>(prior, "c_beta");
    try {
        OutcomePrior check(b);
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    return b;
}

int cmd_fit(RunContext& ctx) {
    const json& c = ctx.cfg;
    const CovariateSchema schema = schema_from(c);
    CsvOptions opt;
    opt.missing_marker = get_as<std::string>(c, "missing_marker");
    const Dataset data = load_dataset(require_string(c, "data"), schema, opt);
    const ModelKind model = [&] {
        try {
            return parse_model(get_as<std::string>(c, "model"));
        } catch (const std::invalid_argument& e) {
            throw ConfigError(e.what());
        }
    }();
    const MCMCConfig mcmc = mcmc_from(c.at("mcmc"), ctx.seed);
    const BaseMeasure base = base_measure_from(c.at("prior"), data);
    const PosteriorSample post = run_model(model, data, base, mcmc);
    save_draws(post, (ctx.out_dir / "draws.jsonl").string());
    write_manifest(ctx, {{"schema_hash", schema.hash()},
                         {"model", model_name(model)},
                         {"n_records", data.size()},
                         {"n_censored", data.n_censored()},
                         {"imputed_entries", data.n_missing_entries()},
                         {"n_draws", post.draws.size()},
                         {"diagnostics",
                          {{"alpha_omega_acceptance", post.diagnostics.alpha_omega_acceptance},
                           {"mean_clusters", post.diagnostics.mean_clusters},
                           {"mean_subclusters", post.diagnostics.mean_subclusters}}},
                         {"outputs", {"draws.jsonl"}}});
    ctx.out << "wrote " << post.draws.size() << " draws to " << (ctx.out_dir / "draws.jsonl").string() << "\n";
    return 0;
}

// ---- estimate / sensitivity ------------------------------------------------------

int cmd_estimate(RunContext& ctx, bool sensitivity) {
    const json& c = ctx.cfg;
    const std::string draws_path = require_string(c, "draws");
    PosteriorSample post;
    try {
        post = load_draws(draws_path);
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    fs::path manifest_path = c.at("manifest").is_null() ? fs::path(draws_path).parent_path() / "manifest.json"
                                                        : fs::path(get_as<std::string>(c, "manifest"));
    if (!c.at("manifest").is_null() || fs::exists(manifest_path)) {
        const json m = read_json_file(manifest_path.string());
        if (!m.contains("schema_hash") || m.at("schema_hash") != post.schema.hash())
            throw ConfigError("schema hash of '" + manifest_path.string() + "' does not match the draw file");
    }

    OsqcRequest req;
    req.seed = ctx.seed;
    req.level = get_as<double>(c, "level");
    req.cohort_size = get_as<int>(c, "cohort_size");
    req.survival_times = get_doubles(c, "survival_times");
    req.subgroups.clear();
    if (get_as<bool>(c, "include_overall")) req.subgroups.push_back(Subgroup{});
    if (!c.at("subgroups").is_array()) throw ConfigError("subgroups must be a list");
    for (const auto& g : c.at("subgroups")) {
        Subgroup sg;
        if (!g.is_object() || !g.contains("fixed") || !g.at("fixed").is_object())
            throw ConfigError("each subgroup needs a 'fixed' object of covariate values");
        sg.label = g.value("label", "");
        for (auto it = g.at("fixed").begin(); it != g.at("fixed").end(); ++it) {
            const auto j = post.schema.index_of(it.key());
            if (!j) throw ConfigError("subgroup covariate '" + it.key() + "' is not in the schema");
            if (!it.value().is_number()) throw ConfigError("subgroup value for '" + it.key() + "' must be a number");
            sg.fixed.emplace_back(static_cast<int>(*j), it.value().get<double>());
            if (g.value("label", "").empty()) sg.label += (sg.label.empty() ? "" : "&") + it.key() + "=" + fmt(it.value().get<double>());
        }
        if (sg.label.empty() || sg.label == "all") throw ConfigError("subgroup label must be non-empty and not 'all'");
        req.subgroups.push_back(sg);
    }
    if (req.subgroups.empty()) throw ConfigError("no subgroups requested");

    std::vector<std::pair<double, double>> psis;
    if (sensitivity) {
        const auto vals = get_doubles(c, "psi_values");
        if (vals.empty()) throw ConfigError("psi_values must not be empty");
        for (double p0 : vals)
            for (double p1 : vals) psis.emplace_back(p0, p1);
    } else {
        if (!c.at("psi").is_array()) throw ConfigError("psi must be a list of [psi0, psi1] pairs");
        for (const auto& p : c.at("psi")) {
            if (!p.is_array() || p.size() != 2 || !p[0].is_number() || !p[1].is_number())
                throw ConfigError("psi must be a list of [psi0, psi1] pairs");
            psis.emplace_back(p[0].get<double>(), p[1].get<double>());
        }
    }
    for (double nu : get_doubles(c, "nu"))
        for (double rho : get_doubles(c, "rho"))
            for (const auto& [p0, p1] : psis) req.cells.push_back({nu, rho, p0, p1});
    try {
        req.validate(&post.schema);
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }

    const OsqcResult res = osqc(post.draws, req);
    std::string csv =
        "subgroup,nu,rho,psi0,psi1,y1_mean,y1_lower,y1_upper,y0_mean,y0_lower,y0_upper,delta_mean,delta_sd,"
        "delta_lower,delta_upper,max_residual\n";
    for (const auto& cell : res.cells) {
        const auto& e = cell.cell;
        csv += req.subgroups[cell.subgroup].label + "," + fmt(e.nu) + "," + fmt(e.rho) + "," + fmt(e.psi0) + "," +
               fmt(e.psi1) + "," + fmt(cell.s1.mean) + "," + fmt(cell.s1.lower) + "," + fmt(cell.s1.upper) + "," +
               fmt(cell.s0.mean) + "," + fmt(cell.s0.lower) + "," + fmt(cell.s0.upper) + "," + fmt(cell.sdelta.mean) +
               "," + fmt(cell.sdelta.sd) + "," + fmt(cell.sdelta.lower) + "," + fmt(cell.sdelta.upper) + "," +
               fmt(cell.max_residual) + "\n";
    }
    const std::string table_name = sensitivity ? "sensitivity.csv" : "osqc.csv";
    write_text(ctx.out_dir / table_name, csv);
    json outputs = json::array({table_name});
    if (!res.survival.empty()) {
        std::string s = "subgroup,arm,time,mean,lower,upper\n";
        for (const auto& p : res.survival)
            s += req.subgroups[p.subgroup].label + "," + std::to_string(p.arm) + "," + fmt(p.time) + "," +
                 fmt(p.summary.mean) + "," + fmt(p.summary.lower) + "," + fmt(p.summary.upper) + "\n";
        write_text(ctx.out_dir / "survival.csv", s);
        outputs.push_back("survival.csv");
    }
    write_manifest(ctx, {{"schema_hash", post.schema.hash()},
                         {"model", model_name(post.model)},
                         {"n_draws", post.draws.size()},
                         {"outputs", outputs}});
    ctx.out << csv;
    return 0;
}

// ---- km -----------------------------------------------------------------------

int cmd_km(RunContext& ctx) {
    const json& c = ctx.cfg;
    const CovariateSchema schema = schema_from(c);
    CsvOptions opt;
    opt.missing_marker = get_as<std::string>(c, "missing_marker");
    const Dataset data = load_dataset(require_string(c, "data"), schema, opt);
    std::string csv = "group,time,survival,at_risk\n";
    auto emit = [&](const std::string& label, int arm) {
        std::vector<double> t;
        std::vector<bool> d;
        for (const auto& r : data.records())
            if (arm < 0 || r.exposure == arm) {
                t.push_back(r.time);
                d.push_back(r.event);
            }
        if (t.empty()) return;
        const StepSurvival km = kaplan_meier(t, d);
        for (std::size_t i = 0; i < km.times.size(); ++i)
            csv += label + "," + fmt(km.times[i]) + "," + fmt(km.values[i]) + "," + std::to_string(km.at_risk[i]) + "\n";
    };
    emit("all", -1);
    if (get_as<bool>(c, "by_exposure")) {
        emit("exposure=0", 0);
        emit("exposure=1", 1);
    }
    write_text(ctx.out_dir / "km.csv", csv);
    write_manifest(ctx, {{"schema_hash", schema.hash()},
                         {"n_records", data.size()},
                         {"imputed_entries", 0},
                         {"outputs", {"km.csv"}}});
    ctx.out << csv;
    return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Bayesian residual-life quantile contrasts for censored survival data", "resqrl"};
    app.require_subcommand(1);
    struct Opts {
        std::string config;
        std::string seed;
        std::string out_dir;
        std::vector<std::string> sets;
    };
    std::map<std::string, Opts> opts;
    std::map<std::string, CLI::App*> subs;
    const std::vector<std::pair<std::string, std::string>> commands = {
        {"simulate", "Run the benchmark simulation study and report bias, RMSE and coverage"},
        {"fit", "Fit the mixture model to a dataset and write posterior draws"},
        {"estimate", "Posterior of residual-life quantile contrasts from a draw file"},
        {"sensitivity", "Quantile contrasts over a grid of arm-specific time shifts"},
        {"km", "Kaplan-Meier curves of a dataset"}};
    for (const auto& [name, help] : commands) {
        auto* sc = app.add_subcommand(name, help);
        auto& o = opts[name];
        sc->add_option("-c,--config", o.config, "JSON configuration file");
        sc->add_option("--seed", o.seed, "Random seed (overrides config and RESQRL_SEED)");
        sc->add_option("-o,--out", o.out_dir, "Output directory");
        sc->add_option("--set", o.sets, "Override a configuration key, e.g. --set mcmc.burn_in=500")->take_all();
        subs[name] = sc;
    }

    std::vector<std::string> rev(args.rbegin(), args.rend());
    try {
        app.parse(rev);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    }

    std::string cmd;
    for (const auto& [name, sc] : subs)
        if (sc->parsed()) cmd = name;
    const Opts& o = opts[cmd];

    try {
        const json defaults = defaults_for(cmd);
        json cfg = defaults;
        if (!o.config.empty()) {
            const json file = read_json_file(o.config);
            if (!file.is_object()) throw ConfigError("configuration file must hold a JSON object");
            check_keys(file, defaults, "");
            cfg.merge_patch(file);
            restore_dropped(cfg, defaults);
        }
        for (const auto& s : o.sets) apply_override(cfg, s);
        if (!o.out_dir.empty()) cfg["out_dir"] = o.out_dir;
        if (!o.seed.empty()) cfg["seed"] = parse_override_value(o.seed);
        if (cfg.at("seed").is_null()) {
            if (const char* env = std::getenv("RESQRL_SEED"); env && *env) cfg["seed"] = parse_override_value(env);
        }
        check_keys(cfg, defaults, "");

        std::uint64_t seed = 0;
        if (cfg.at("seed").is_null()) {
            if (cmd != "km") throw ConfigError("a seed is required (config 'seed', --seed or RESQRL_SEED)");
        } else if (cfg.at("seed").is_number_unsigned()) {
            seed = cfg.at("seed").get<std::uint64_t>();
        } else if (cfg.at("seed").is_number_integer() && cfg.at("seed").get<long long>() >= 0) {
            seed = static_cast<std::uint64_t>(cfg.at("seed").get<long long>());
        } else {
            throw ConfigError("seed must be a non-negative integer");
        }

        const int workers = get_as<int>(cfg, "workers");
        if (workers < 0) throw ConfigError("workers must be >= 0");
        if (workers > 0) omp_set_num_threads(workers);

        RunContext ctx{cmd, cfg, seed, fs::path(get_as<std::string>(cfg, "out_dir")), out, err};
        std::error_code ec;
        fs::create_directories(ctx.out_dir, ec);
        if (ec) throw std::runtime_error("cannot create output directory '" + ctx.out_dir.string() + "'");

        if (cmd == "simulate") return cmd_simulate(ctx);
        if (cmd == "fit") return cmd_fit(ctx);
        if (cmd == "estimate") return cmd_estimate(ctx, false);
        if (cmd == "sensitivity") return cmd_estimate(ctx, true);
        return cmd_km(ctx);
    } catch (const ConfigError& e) {
        err << "configuration error: " << e.what() << "\n";
        return 2;
    } catch (const DataError& e) {
        err << "data error: " << e.what() << "\n";
        return 2;
    } catch (const std::invalid_argument& e) {
        err << "invalid input: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
}

int run_cli(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return run_cli(args, std::cout, std::cerr);
}

}  // namespace resqrl
