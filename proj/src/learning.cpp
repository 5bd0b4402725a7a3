#include "jcc/learning.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <optional>

#include "jcc/error.hpp"

namespace jcc {

std::string Scheme::tag() const {
    return (kind == Kind::Quantized ? "n" : "N") + std::to_string(sweep_value());
}

nlohmann::json scheme_to_json(const Scheme& s) {
    if (s.kind == Scheme::Kind::Quantized) return {{"kind", "quantized"}, {"resolution", s.resolution}};
    nlohmann::json j = {{"kind", "window"}, {"length", s.length}};
    if (s.mu) {
        const auto p = s.mu->probs();
        j["mu"] = std::vector<double>(p.begin(), p.end());
    }
    return j;
}

Scheme scheme_from_json(const nlohmann::json& j) {
    try {
        const auto kind = j.at("kind").get<std::string>();
        if (kind == "quantized") return Scheme::quantized(j.at("resolution").get<std::size_t>());
        if (kind == "window") {
            Scheme s{Scheme::Kind::Window, 1, j.at("length").get<std::size_t>(), std::nullopt};
            if (j.contains("mu")) s.mu = Belief(j.at("mu").get<std::vector<double>>());
            return s;
        }
        throw ValidationError("unknown scheme kind '" + kind + "'");
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("scheme: ") + e.what());
    }
}

const std::vector<QEntry>* QTable::row(StateKey s) const {
    auto it = rows_.find(s);
    return it == rows_.end() ? nullptr : &it->second;
}

std::vector<QEntry>& QTable::row_mut(StateKey s) {
    auto it = rows_.find(s);
    if (it == rows_.end()) it = rows_.emplace(s, std::vector<QEntry>(n_actions_)).first;
    return it->second;
}

double QTable::q(StateKey s, ActionIndex a) const {
    const auto* r = row(s);
    return r ? (*r)[a].q : 0.0;
}

std::uint64_t QTable::visits(StateKey s, ActionIndex a) const {
    const auto* r = row(s);
    return r ? (*r)[a].visits : 0;
}

double QTable::min_q(StateKey s) const {
    const auto* r = row(s);
    if (!r) return 0.0;
    double m = (*r)[0].q;
    for (const auto& e : *r) m = std::min(m, e.q);
    return m;
}

std::vector<StateKey> QTable::sorted_keys() const {
    std::vector<StateKey> keys;
    keys.reserve(rows_.size());
    for (const auto& [k, _] : rows_) keys.push_back(k);
    std::sort(keys.begin(), keys.end());
    return keys;
}

double q_update(QTable& table, StateKey s, ActionIndex a, double cost, StateKey s_next, double beta) {
    // Read the bootstrap target before row_mut(s) can rehash the table.
    const double target = cost + beta * table.min_q(s_next);
    QEntry& e = table.row_mut(s)[a];
    const double alpha = 1.0 / (1.0 + static_cast<double>(e.visits));
    const double old = e.q;
    e.q = (1.0 - alpha) * e.q + alpha * target;
    ++e.visits;
    return std::abs(e.q - old);
}

Policy::Policy(Scheme scheme, std::size_t n_actions, ActionIndex fallback)
    : scheme_(std::move(scheme)), n_actions_(n_actions), fallback_(fallback) {
    if (fallback >= n_actions) throw ValidationError("fallback action out of range");
}

void Policy::set(StateKey s, ActionIndex a) {
    if (a >= n_actions_) throw ValidationError("policy action out of range");
    map_[s] = a;
}

ActionIndex Policy::action(StateKey s) const {
    auto it = map_.find(s);
    return it == map_.end() ? fallback_ : it->second;
}

std::vector<StateKey> Policy::sorted_keys() const {
    std::vector<StateKey> keys;
    keys.reserve(map_.size());
    for (const auto& [k, _] : map_) keys.push_back(k);
    std::sort(keys.begin(), keys.end());
    return keys;
}

Policy extract_policy(const QTable& table, const Scheme& scheme, ActionIndex fallback) {
    Policy p(scheme, table.n_actions(), fallback);
    for (StateKey s : table.sorted_keys()) {
        const auto& r = *table.row(s);
        // Untried actions read as 0 only for bootstrapping; they are not estimates.
        std::optional<ActionIndex> best;
        for (ActionIndex a = 0; a < r.size(); ++a) {
            if (r[a].visits == 0) continue;
            if (!best || r[a].q < r[*best].q) best = a;
        }
        if (best) p.set(s, *best);
    }
    return p;
}

ActionIndex pooled_best_action(const QTable& table) {
    std::vector<double> sum(table.n_actions(), 0.0);
    std::vector<double> weight(table.n_actions(), 0.0);
    for (StateKey s : table.sorted_keys()) {
        const auto& r = *table.row(s);
        for (ActionIndex a = 0; a < r.size(); ++a) {
            sum[a] += r[a].q * static_cast<double>(r[a].visits);
            weight[a] += static_cast<double>(r[a].visits);
        }
    }
    ActionIndex best = 0;
    double best_v = std::numeric_limits<double>::infinity();
    for (ActionIndex a = 0; a < sum.size(); ++a) {
        if (weight[a] == 0.0) continue;
        const double v = sum[a] / weight[a];
        if (v < best_v) {
            best_v = v;
            best = a;
        }
    }
    return best;
}

void EmpiricalModel::record(StateKey s, ActionIndex a, double cost, StateKey s_next) {
    Stats& st = stats_[{s, a}];
    ++st.count;
    st.cost_sum += cost;
    ++st.next[s_next];
}

double dcoe_residual(const QTable& table, const EmpiricalModel& model, double beta) {
    double worst = 0.0;
    model.for_each([&](StateKey s, ActionIndex a, const EmpiricalModel::Stats& st) {
        const double n = static_cast<double>(st.count);
        double bootstrap = 0.0;
        for (const auto& [next, cnt] : st.next) bootstrap += static_cast<double>(cnt) / n * table.min_q(next);
        const double r = std::abs(table.q(s, a) - st.cost_sum / n - beta * bootstrap);
        worst = std::max(worst, r);
    });
    return worst;
}

Belief recurrent_predictor(const ModelSpec& spec, StateIndex x, Control u) {
    if (x >= spec.n_states || u >= spec.n_controls) throw ValidationError("recurrent predictor index out of range");
    const auto r = spec.row(x, u);
    return Belief::normalized(std::vector<double>(r.begin(), r.end()));
}

namespace {

/// Bookkeeping shared by both learners: early stop, curve, diagnostics.
class Tracker {
public:
    Tracker(const LearnConfig& config, LearnDiagnostics& diag) : config_(config), diag_(diag) {}

    /// Returns false when training should stop.
    bool after_update(std::uint64_t t, double change, const QTable& table, const EmpiricalModel& model,
                      double beta) {
        block_max_ = std::max(block_max_, change);
        curve_max_ = std::max(curve_max_, change);
        const std::uint64_t done = t + 1;
        if (config_.checkpoint_every > 0 && done % config_.checkpoint_every == 0) {
            diag_.curve.push_back({done, curve_max_, table.n_states(), dcoe_residual(table, model, beta)});
            curve_max_ = 0.0;
        }
        if (config_.convergence_window > 0 && done % config_.convergence_window == 0) {
            diag_.max_q_change = block_max_;
            const bool converged = block_max_ < config_.tolerance;
            block_max_ = 0.0;
            if (converged) {
                diag_.early_stopped = true;
                return false;
            }
        }
        return true;
    }

private:
    const LearnConfig& config_;
    LearnDiagnostics& diag_;
    double block_max_ = 0.0;
    double curve_max_ = 0.0;
};

void check_config(const LearnConfig& config, const ActionSpace& actions) {
    if (config.iterations == 0) throw ValidationError("iterations must be >= 1");
    if (!(config.tolerance > 0.0)) throw ValidationError("tolerance must be > 0");
    if (actions.size() == 0) throw ValidationError("empty action space");
}

LearnResult finish(QTable table, EmpiricalModel model, LearnDiagnostics diag, const Scheme& scheme, double beta) {
    diag.visited_states = table.n_states();
    diag.final_residual = dcoe_residual(table, model, beta);
    Policy policy = extract_policy(table, scheme, pooled_best_action(table));
    return {std::move(table), std::move(policy), std::move(diag), std::move(model)};
}

} // namespace

LearnResult run_quantized_qlearning(const ModelSpec& spec, const ActionSpace& actions, const LearnConfig& config) {
    check_config(config, actions);
    if (config.scheme.kind != Scheme::Kind::Quantized) throw ValidationError("expected a quantized scheme");
    const BeliefGrid grid = build_grid(config.scheme.resolution, spec.n_states);

    Rng rng(config.seed);
    QTable table(actions.size());
    EmpiricalModel model;
    LearnDiagnostics diag;
    Tracker tracker(config, diag);
    std::optional<TraceWriter> trace;
    if (config.trace) trace.emplace(*config.trace, spec.n_states);

    EnvState state{0, recurrent_predictor(spec, config.init_state, config.init_control)};
    state.x = sample_discrete(state.pi.probs(), rng);
    StateKey s = nearest_grid(state.pi, grid);
    std::uint64_t t = 0;
    for (; t < config.iterations; ++t) {
        const ActionIndex a = uniform_index(rng, actions.size());
        EnvStep step = env_step(state, actions[a], spec, rng, config.cost_mode);
        if (trace && t < config.trace_steps) trace->row(t, state.x, step.q, step.u, step.stage_cost, state.pi);
        const StateKey s_next = nearest_grid(step.next.pi, grid);
        const double change = q_update(table, s, a, step.stage_cost, s_next, spec.beta);
        model.record(s, a, step.stage_cost, s_next);
        state = std::move(step.next);
        s = s_next;
        if (!tracker.after_update(t, change, table, model, spec.beta)) {
            ++t;
            break;
        }
    }
    diag.iterations_run = t;
    return finish(std::move(table), std::move(model), std::move(diag), config.scheme, spec.beta);
}

LearnResult run_window_qlearning(const ModelSpec& spec, const ActionSpace& actions, const LearnConfig& config) {
    check_config(config, actions);
    if (config.scheme.kind != Scheme::Kind::Window) throw ValidationError("expected a window scheme");
    if (config.scheme.length == 0) throw ValidationError("window length must be >= 1");
    const Belief mu = config.scheme.mu.value_or(Belief::uniform(spec.n_states));
    if (mu.size() != spec.n_states) throw ValidationError("window prior has wrong size");
    if (config.init_state >= spec.n_states) throw ValidationError("init_state out of range");

    Rng rng(config.seed);
    QTable table(actions.size());
    EmpiricalModel model;
    LearnDiagnostics diag;
    Tracker tracker(config, diag);
    PsiCache cache(spec, actions, mu, config.scheme.length);
    const WindowCodec& codec = cache.codec();
    std::optional<TraceWriter> trace;
    if (config.trace) trace.emplace(*config.trace, spec.n_states);

    WarmUp w = warm_up(config.init_state, mu, config.scheme.length, spec, actions, rng);
    StateIndex x = w.x;
    StateKey s = codec.encode(w.window.history());
    std::uint64_t t = 0;
    for (; t < config.iterations; ++t) {
        const ActionIndex a = uniform_index(rng, actions.size());
        const JointAction& ja = actions[a];
        const Belief& approx = cache.get(s);
        const auto [q, u] = act(ja, x);
        if (!(channel_output_dist(approx, ja.quantizer, spec.n_symbols)[q] > 0.0)) ++diag.reseed_events;
        const double cost = config.cost_mode == CostMode::Effective ? effective_cost(approx, ja, spec) : spec.c(x, u);
        if (trace && t < config.trace_steps) trace->row(t, x, q, u, cost, approx);
        const StateKey s_next = codec.shift(s, q, a);
        const double change = q_update(table, s, a, cost, s_next, spec.beta);
        model.record(s, a, cost, s_next);
        x = sample_next_state(spec, x, u, rng);
        s = s_next;
        if (!tracker.after_update(t, change, table, model, spec.beta)) {
            ++t;
            break;
        }
    }
    diag.iterations_run = t;
    return finish(std::move(table), std::move(model), std::move(diag), config.scheme, spec.beta);
}

LearnResult run_qlearning(const ModelSpec& spec, const ActionSpace& actions, const LearnConfig& config) {
    return config.scheme.kind == Scheme::Kind::Quantized ? run_quantized_qlearning(spec, actions, config)
                                                         : run_window_qlearning(spec, actions, config);
}

std::string hash_hex(std::uint64_t h) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

nlohmann::json qtable_to_json(const QTable& table, const Scheme& scheme, std::uint64_t model_hash) {
    nlohmann::json entries = nlohmann::json::array();
    for (StateKey s : table.sorted_keys()) {
        const auto& r = *table.row(s);
        for (ActionIndex a = 0; a < r.size(); ++a) {
            if (r[a].visits == 0) continue;
            entries.push_back({{"state_key", s}, {"action", a}, {"q", r[a].q}, {"visits", r[a].visits}});
        }
    }
    return {{"scheme", scheme_to_json(scheme)},
            {"model_hash", hash_hex(model_hash)},
            {"n_actions", table.n_actions()},
            {"entries", std::move(entries)}};
}

nlohmann::json policy_to_json(const Policy& policy, std::uint64_t model_hash) {
    nlohmann::json entries = nlohmann::json::array();
    for (StateKey s : policy.sorted_keys()) entries.push_back({{"state_key", s}, {"action", policy.action(s)}});
    return {{"scheme", scheme_to_json(policy.scheme())},
            {"model_hash", hash_hex(model_hash)},
            {"n_actions", policy.n_actions()},
            {"fallback", policy.fallback()},
            {"entries", std::move(entries)}};
}

Policy policy_from_json(const nlohmann::json& j) {
    try {
        Policy p(scheme_from_json(j.at("scheme")), j.at("n_actions").get<std::size_t>(),
                 j.at("fallback").get<ActionIndex>());
        for (const auto& e : j.at("entries")) p.set(e.at("state_key").get<StateKey>(), e.at("action").get<ActionIndex>());
        return p;
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("policy: ") + e.what());
    }
}

void write_curve_csv(const std::vector<CurvePoint>& curve, std::ostream& os) {
    os.precision(17);
    os << "iteration,max_q_change,visited_states,residual\n";
    for (const auto& c : curve) {
        os << c.iteration << ',' << c.max_q_change << ',' << c.visited_states << ',' << c.residual << '\n';
    }
}

} // namespace jcc
