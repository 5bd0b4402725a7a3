#include "jcc/experiment.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include <omp.h>

#include "jcc/error.hpp"
#include "jcc/filtering.hpp"
#include "jcc/oracle.hpp"
#include "jcc/rng.hpp"

#ifndef JCC_DATA_DIR
#define JCC_DATA_DIR "data"
#endif

namespace jcc {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const std::set<std::string> kModelKeys{"n_states", "n_controls", "n_symbols", "beta", "kernel", "cost"};
const std::set<std::string> kExperimentKeys{
    "name",        "model",          "scheme",         "sweep",         "mu",
    "iterations",  "seeds",          "tolerance",      "convergence_window",
    "checkpoint_every", "cost_mode", "init_state",     "init_control",  "trace_steps",
    "horizon",     "replications",   "fixed_quantizer", "vi_resolutions", "vi_tolerance",
    "vi_evaluate", "max_window"};

template <class T>
T get_or(const json& j, const char* key, T fallback) {
    return j.contains(key) ? j.at(key).get<T>() : fallback;
}

ModelSpec resolve_model(const json& j, const fs::path& base_dir) {
    if (!j.contains("model")) {
        json m;
        for (const auto& k : kModelKeys)
            if (j.contains(k)) m[k] = j.at(k);
        return model_from_json(m);
    }
    for (const auto& k : kModelKeys)
        if (j.contains(k)) throw ValidationError("config: '" + k + "' given both inline and under 'model'");
    const json& m = j.at("model");
    if (m.is_object()) return model_from_json(m);
    if (!m.is_string()) throw ValidationError("config: 'model' must be an object or a path");
    fs::path p = m.get<std::string>();
    if (p.is_relative()) p = base_dir / p;
    if (!fs::exists(p)) throw ValidationError("config: model file not found: " + p.string());
    std::ifstream in(p);
    json mj;
    try {
        mj = json::parse(in);
    } catch (const json::exception& e) {
        throw ValidationError(p.string() + ": " + e.what());
    }
    // A model path may point at a full experiment file; only its model is taken.
    if (mj.contains("model")) return resolve_model(mj, p.parent_path());
    json inner;
    for (const auto& k : kModelKeys)
        if (mj.contains(k)) inner[k] = mj.at(k);
    return model_from_json(inner);
}

std::string tagged_name(const char* stem, const Scheme& s, std::uint64_t seed, const char* ext) {
    return std::string(stem) + "_" + s.tag() + "_s" + std::to_string(seed) + ext;
}

struct Cell {
    std::size_t sweep_value;
    std::uint64_t seed;
};

std::vector<Cell> cells_of(const ExperimentConfig& cfg, const RunOptions& opts) {
    std::vector<std::uint64_t> seeds = opts.seed ? std::vector<std::uint64_t>{*opts.seed} : cfg.seeds;
    std::vector<Cell> cells;
    for (std::size_t v : cfg.sweep)
        for (std::uint64_t s : seeds) cells.push_back({v, s});
    return cells;
}

// Runs body(i) for every cell, in parallel when jobs > 1. Log text is emitted in
// cell order afterwards and the first failing cell's exception is rethrown.
template <class F>
void run_cells(std::size_t n, int jobs, std::ostream& log, F&& body) {
    std::vector<std::string> logs(n);
    std::vector<std::exception_ptr> errors(n);
    const int threads = std::max(1, jobs);
#pragma omp parallel for schedule(dynamic) num_threads(threads)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) {
        std::ostringstream os;
        try {
            body(static_cast<std::size_t>(i), os);
        } catch (...) {
            errors[i] = std::current_exception();
        }
        logs[i] = os.str();
    }
    for (std::size_t i = 0; i < n; ++i) {
        log << logs[i];
        if (errors[i]) std::rethrow_exception(errors[i]);
    }
}

void check_sweep(const ExperimentConfig& cfg) {
    if (cfg.sweep.empty()) throw ValidationError("config: 'sweep' must be non-empty");
}

} // namespace

ExperimentConfig experiment_from_json(const json& j, const fs::path& base_dir) {
    if (!j.is_object()) throw ValidationError("config: expected a JSON object");
    for (const auto& [k, v] : j.items()) {
        (void)v;
        if (!kModelKeys.contains(k) && !kExperimentKeys.contains(k))
            throw ValidationError("config: unknown key '" + k + "'");
    }
    ExperimentConfig cfg;
    cfg.model = resolve_model(j, base_dir);
    try {
        cfg.name = get_or<std::string>(j, "name", "");
        const std::string scheme = get_or<std::string>(j, "scheme", "quantized");
        if (scheme == "quantized")
            cfg.scheme = Scheme::Kind::Quantized;
        else if (scheme == "window")
            cfg.scheme = Scheme::Kind::Window;
        else
            throw ValidationError("config: scheme must be 'quantized' or 'window'");

        cfg.sweep = get_or<std::vector<std::size_t>>(j, "sweep", {});
        for (std::size_t v : cfg.sweep)
            if (v == 0) throw ValidationError("config: sweep values must be >= 1");

        if (j.contains("mu")) {
            auto mu = j.at("mu").get<std::vector<double>>();
            if (mu.size() != cfg.model.n_states) throw ValidationError("config: 'mu' needs n_states entries");
            cfg.mu = Belief(std::move(mu));
        }
        if (j.contains("fixed_quantizer")) {
            Quantizer q{j.at("fixed_quantizer").get<std::vector<Symbol>>()};
            if (q.map.size() != cfg.model.n_states)
                throw ValidationError("config: 'fixed_quantizer' needs n_states entries");
            for (Symbol s : q.map)
                if (s >= cfg.model.n_symbols) throw ValidationError("config: 'fixed_quantizer' symbol out of range");
            cfg.fixed_quantizer = std::move(q);
        }

        cfg.iterations = get_or<std::uint64_t>(j, "iterations", cfg.iterations);
        if (j.contains("seeds")) cfg.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
        if (cfg.seeds.empty()) throw ValidationError("config: 'seeds' must be non-empty");
        cfg.tolerance = get_or<double>(j, "tolerance", cfg.tolerance);
        cfg.convergence_window = get_or<std::uint64_t>(j, "convergence_window", cfg.convergence_window);
        cfg.checkpoint_every = get_or<std::uint64_t>(j, "checkpoint_every", cfg.checkpoint_every);
        const std::string mode = get_or<std::string>(j, "cost_mode", "effective");
        if (mode == "effective")
            cfg.cost_mode = CostMode::Effective;
        else if (mode == "realized")
            cfg.cost_mode = CostMode::Realized;
        else
            throw ValidationError("config: cost_mode must be 'effective' or 'realized'");
        cfg.init_state = get_or<StateIndex>(j, "init_state", cfg.init_state);
        cfg.init_control = get_or<Control>(j, "init_control", cfg.init_control);
        if (cfg.init_state >= cfg.model.n_states) throw ValidationError("config: init_state out of range");
        if (cfg.init_control >= cfg.model.n_controls) throw ValidationError("config: init_control out of range");
        cfg.trace_steps = get_or<std::uint64_t>(j, "trace_steps", cfg.trace_steps);

        cfg.horizon = get_or<std::size_t>(j, "horizon", cfg.horizon);
        cfg.replications = get_or<std::size_t>(j, "replications", cfg.replications);
        if (cfg.iterations == 0) throw ValidationError("config: iterations must be >= 1");
        if (cfg.replications == 0) throw ValidationError("config: replications must be >= 1");
        if (!(cfg.tolerance > 0.0)) throw ValidationError("config: tolerance must be > 0");

        cfg.vi_resolutions = get_or<std::vector<std::size_t>>(j, "vi_resolutions", {});
        cfg.vi_tolerance = get_or<double>(j, "vi_tolerance", cfg.vi_tolerance);
        cfg.vi_evaluate = get_or<bool>(j, "vi_evaluate", cfg.vi_evaluate);
        cfg.max_window = get_or<std::size_t>(j, "max_window", cfg.max_window);
    } catch (const json::exception& e) {
        throw ValidationError(std::string("config: ") + e.what());
    }
    return cfg;
}

ExperimentConfig load_experiment(const std::string& path_or_preset) {
    fs::path p = path_or_preset;
    if (!fs::exists(p) && p.extension().empty() && !p.has_parent_path())
        p = fs::path(JCC_DATA_DIR) / (path_or_preset + ".json");
    if (!fs::exists(p)) throw ValidationError("config not found: " + path_or_preset);
    std::ifstream in(p);
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw ValidationError(p.string() + ": " + e.what());
    }
    return experiment_from_json(j, p.parent_path());
}

std::uint64_t evaluation_seed(std::uint64_t training_seed) { return derive_seed(training_seed, 0xE7A1); }

ActionSpace action_space_for(const ExperimentConfig& cfg) {
    return cfg.fixed_quantizer ? ActionSpace::with_fixed_quantizer(cfg.model, *cfg.fixed_quantizer)
                               : ActionSpace::enumerate(cfg.model);
}

Scheme scheme_for(const ExperimentConfig& cfg, std::size_t sweep_value) {
    if (cfg.scheme == Scheme::Kind::Quantized) return Scheme::quantized(sweep_value);
    return Scheme::window(sweep_value, cfg.mu ? *cfg.mu : Belief::uniform(cfg.model.n_states));
}

void write_file_atomic(const fs::path& path, const std::string& contents) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error("cannot write " + tmp.string());
        out << contents;
        out.flush();
        if (!out) throw Error("write failed: " + tmp.string());
    }
    fs::rename(tmp, path);
}

LearnConfig learn_config_for(const ExperimentConfig& cfg, std::size_t sweep_value, std::uint64_t seed) {
    LearnConfig lc;
    lc.iterations = cfg.iterations;
    lc.seed = seed;
    lc.scheme = scheme_for(cfg, sweep_value);
    lc.convergence_window = cfg.convergence_window;
    lc.tolerance = cfg.tolerance;
    lc.checkpoint_every = cfg.checkpoint_every;
    lc.cost_mode = cfg.cost_mode;
    lc.init_state = cfg.init_state;
    lc.init_control = cfg.init_control;
    lc.trace_steps = cfg.trace_steps;
    return lc;
}

EvalConfig eval_config_for(const ExperimentConfig& cfg, std::uint64_t training_seed) {
    EvalConfig ec;
    ec.horizon = cfg.horizon;
    ec.replications = cfg.replications;
    ec.seed = evaluation_seed(training_seed);
    ec.cost_mode = cfg.cost_mode;
    ec.init_state = cfg.init_state;
    ec.init_control = cfg.init_control;
    return ec;
}

int cmd_learn(const ExperimentConfig& cfg, const RunOptions& opts, std::ostream& log) {
    check_sweep(cfg);
    const ActionSpace actions = action_space_for(cfg);
    const std::uint64_t hash = model_hash(cfg.model);
    const auto cells = cells_of(cfg, opts);

    run_cells(cells.size(), opts.jobs, log, [&](std::size_t i, std::ostream& out) {
        const Cell& cell = cells[i];
        LearnConfig lc = learn_config_for(cfg, cell.sweep_value, cell.seed);
        std::ostringstream trace;
        if (opts.trace) lc.trace = &trace;

        const LearnResult r = run_qlearning(cfg.model, actions, lc);
        const auto& d = r.diagnostics;

        json qj = qtable_to_json(r.table, lc.scheme, hash);
        qj["seed"] = cell.seed;
        qj["diagnostics"] = {{"iterations_run", d.iterations_run},
                             {"visited_states", d.visited_states},
                             {"early_stopped", d.early_stopped},
                             {"max_q_change", d.max_q_change},
                             {"reseed_events", d.reseed_events},
                             {"final_residual", d.final_residual}};
        json pj = policy_to_json(r.policy, hash);
        pj["seed"] = cell.seed;
        std::ostringstream curve;
        write_curve_csv(d.curve, curve);

        write_file_atomic(opts.out_dir / tagged_name("qtable", lc.scheme, cell.seed, ".json"), qj.dump(1) + "\n");
        write_file_atomic(opts.out_dir / tagged_name("policy", lc.scheme, cell.seed, ".json"), pj.dump(1) + "\n");
        write_file_atomic(opts.out_dir / tagged_name("curve", lc.scheme, cell.seed, ".csv"), curve.str());
        if (opts.trace)
            write_file_atomic(opts.out_dir / tagged_name("trace", lc.scheme, cell.seed, ".csv"), trace.str());

        out << "learn " << lc.scheme.tag() << " seed " << cell.seed << ": " << d.iterations_run << " iterations, "
            << d.visited_states << " states, residual " << d.final_residual
            << (d.early_stopped ? ", converged" : "") << "\n";
    });
    return kExitOk;
}

int cmd_evaluate(const ExperimentConfig& cfg, const RunOptions& opts, const std::vector<fs::path>& policy_files,
                 std::ostream& log) {
    std::vector<fs::path> files = policy_files;
    if (files.empty()) {
        check_sweep(cfg);
        for (const Cell& cell : cells_of(cfg, opts)) {
            const fs::path p = opts.out_dir / tagged_name("policy", scheme_for(cfg, cell.sweep_value), cell.seed, ".json");
            if (fs::exists(p)) files.push_back(p);
        }
    }
    if (files.empty()) throw ValidationError("no policy files to evaluate");

    const ActionSpace actions = action_space_for(cfg);
    const std::uint64_t hash = model_hash(cfg.model);

    struct Row {
        std::size_t sweep_value;
        std::uint64_t seed;
        EvalResult result;
    };
    std::vector<Row> rows(files.size());
    run_cells(files.size(), opts.jobs, log, [&](std::size_t i, std::ostream& out) {
        std::ifstream in(files[i]);
        if (!in) throw ValidationError("cannot open policy file " + files[i].string());
        json pj;
        try {
            pj = json::parse(in);
        } catch (const json::exception& e) {
            throw ValidationError(files[i].string() + ": " + e.what());
        }
        const Policy policy = policy_from_json(pj);
        if (pj.contains("model_hash") && pj.at("model_hash").get<std::string>() != hash_hex(hash))
            throw IncompatiblePolicy("incompatible policy/scheme: " + files[i].string() +
                                     " was trained on a different model");
        if (policy.scheme().kind != cfg.scheme)
            throw IncompatiblePolicy("incompatible policy/scheme: " + files[i].string() + " is " +
                                     policy.scheme().tag());
        const std::uint64_t seed = pj.value("seed", std::uint64_t{0});
        const EvalConfig ec = eval_config_for(cfg, seed);
        const Scheme scheme = scheme_for(cfg, policy.scheme().sweep_value());
        rows[i] = {scheme.sweep_value(), seed, monte_carlo_cost(policy, scheme, cfg.model, actions, ec)};
        out << "evaluate " << scheme.tag() << " seed " << seed << ": mean " << rows[i].result.mean << " +- "
            << rows[i].result.std_error << "\n";
    });

    std::ostringstream csv;
    write_eval_header(csv);
    for (const Row& r : rows) write_eval_row(csv, r.sweep_value, r.seed, r.result);
    write_file_atomic(opts.out_dir / "results.csv", csv.str());
    return kExitOk;
}

int cmd_diagnose(const ExperimentConfig& cfg, const RunOptions& opts, std::ostream& log) {
    const ModelSpec& spec = cfg.model;
    const StabilityReport sr = stability_report(spec, cfg.max_window);
    log << std::setprecision(12);
    log << "dobrushin coefficients:\n";
    for (std::size_t u = 0; u < sr.delta_per_control.size(); ++u)
        log << "  u=" << u << " delta=" << sr.delta_per_control[u] << "\n";
    log << "delta_min=" << sr.delta_min << "\n";
    log << "contraction condition (delta_min >= 1/2): "
        << (sr.contraction_guaranteed ? "satisfied" : "not guaranteed") << "\n";
    log << "bounds (N, loss_bound, value_bound):\n";
    for (std::size_t n = 0; n < sr.loss_bound_per_N.size(); ++n)
        log << "  " << n << " " << sr.loss_bound_per_N[n] << " " << sr.value_bound_per_N[n] << "\n";

    const ErgodicityReport er = check_ergodicity(spec);
    for (std::size_t u = 0; u < er.irreducible_per_control.size(); ++u)
        log << "u=" << u << " irreducible=" << (er.irreducible_per_control[u] ? "yes" : "no")
            << " aperiodic=" << (er.aperiodic_per_control[u] ? "yes" : "no") << "\n";
    log << "averaged kernel irreducible=" << (er.averaged_irreducible ? "yes" : "no")
        << " aperiodic=" << (er.averaged_aperiodic ? "yes" : "no") << "\n";
    if (er.ok()) {
        const auto zeta = stationary_distribution(spec);
        log << "ergodicity: ok\ninvariant distribution:";
        for (double z : zeta) log << " " << z;
        log << "\n";
    } else {
        log << "ergodicity: FAILED (" << er.explanation << ")\n";
    }

    std::ostringstream delta_csv, bounds_csv;
    write_delta_csv(sr, delta_csv);
    write_bounds_csv(sr, bounds_csv);
    write_file_atomic(opts.out_dir / "stability_delta.csv", delta_csv.str());
    write_file_atomic(opts.out_dir / "stability_bounds.csv", bounds_csv.str());
    return kExitOk;
}

int cmd_value_iterate(const ExperimentConfig& cfg, const RunOptions& opts, std::ostream& log) {
    std::vector<std::size_t> resolutions = cfg.vi_resolutions;
    if (resolutions.empty() && cfg.scheme == Scheme::Kind::Quantized) resolutions = cfg.sweep;
    if (resolutions.empty()) throw ValidationError("config: value-iterate needs 'vi_resolutions'");
    for (std::size_t n : resolutions)
        if (n == 0) throw ValidationError("config: grid resolution must be >= 1");

    const ActionSpace actions = action_space_for(cfg);
    const std::uint64_t hash = model_hash(cfg.model);
    const std::uint64_t seed = opts.seed ? *opts.seed : cfg.seeds.front();
    std::vector<EvalResult> evals(resolutions.size());

    run_cells(resolutions.size(), opts.jobs, log, [&](std::size_t i, std::ostream& out) {
        const std::size_t n = resolutions[i];
        const BeliefGrid grid = build_grid(n, cfg.model.n_states);
        const ValueFunction vf = value_iterate_grid(grid, cfg.model, actions, cfg.vi_tolerance);
        const Policy policy = policy_from_value_function(vf, n, actions.size());
        const std::string tag = "n" + std::to_string(n);

        std::ostringstream value_csv, grid_csv;
        write_value_csv(vf, value_csv);
        write_grid_csv(grid, grid_csv);
        json pj = policy_to_json(policy, hash);
        pj["seed"] = seed;
        write_file_atomic(opts.out_dir / ("value_" + tag + ".csv"), value_csv.str());
        write_file_atomic(opts.out_dir / ("grid_" + tag + ".csv"), grid_csv.str());
        write_file_atomic(opts.out_dir / ("policy_vi_" + tag + ".json"), pj.dump(1) + "\n");
        out << "value-iterate " << tag << ": " << grid.size() << " points, " << vf.sweeps << " sweeps\n";

        if (cfg.vi_evaluate) {
            const EvalConfig ec = eval_config_for(cfg, seed);
            evals[i] = monte_carlo_cost(policy, Scheme::quantized(n), cfg.model, actions, ec);
            out << "  greedy policy cost " << evals[i].mean << " +- " << evals[i].std_error << "\n";
        }
    });

    if (cfg.vi_evaluate) {
        std::ostringstream csv;
        write_eval_header(csv);
        for (std::size_t i = 0; i < resolutions.size(); ++i) write_eval_row(csv, resolutions[i], seed, evals[i]);
        write_file_atomic(opts.out_dir / "results_vi.csv", csv.str());
    }
    return kExitOk;
}

int report_error(const std::exception& e, std::ostream& err) {
    err << "error: " << e.what() << "\n";
    if (dynamic_cast<const CapExceeded*>(&e)) return kExitResourceCap;
    if (dynamic_cast<const ValidationError*>(&e) || dynamic_cast<const IncompatiblePolicy*>(&e) ||
        dynamic_cast<const json::exception*>(&e))
        return kExitValidation;
    return kExitFailure;
}

} // namespace jcc
