#include "jcc/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <tuple>

#include "jcc/error.hpp"

namespace jcc {

namespace {

void fill_grid_point(GridModel& m, std::size_t i, const BeliefGrid& grid, const ModelSpec& spec,
                     const ActionSpace& actions) {
    const Belief& pi = grid[i];
    for (ActionIndex a = 0; a < actions.size(); ++a) {
        const JointAction& ja = actions[a];
        const std::size_t idx = i * m.n_actions + a;
        m.cost[idx] = effective_cost(pi, ja, spec);
        const auto dist = channel_output_dist(pi, ja.quantizer, spec.n_symbols);
        auto& succ = m.successors[idx];
        for (Symbol q = 0; q < dist.size(); ++q) {
            if (!(dist[q] > 0.0)) continue;
            const std::size_t j = nearest_grid(predictor_update(pi, ja, q, spec), grid);
            auto it = std::find_if(succ.begin(), succ.end(), [j](const auto& s) { return s.next == j; });
            if (it == succ.end()) {
                succ.push_back({j, dist[q]});
            } else {
                it->p += dist[q];
            }
        }
    }
}

GridModel empty_grid_model(const BeliefGrid& grid, const ActionSpace& actions) {
    GridModel m;
    m.n_points = grid.size();
    m.n_actions = actions.size();
    m.cost.assign(m.n_points * m.n_actions, 0.0);
    m.successors.assign(m.n_points * m.n_actions, {});
    return m;
}

double backup(const GridModel& m, const std::vector<double>& v, std::size_t i, ActionIndex a, double beta) {
    const std::size_t idx = i * m.n_actions + a;
    double expect = 0.0;
    for (const auto& s : m.successors[idx]) expect += s.p * v[s.next];
    return m.cost[idx] + beta * expect;
}

double sweep_point(const GridModel& m, const std::vector<double>& v, std::size_t i, double beta) {
    double best = std::numeric_limits<double>::infinity();
    for (ActionIndex a = 0; a < m.n_actions; ++a) best = std::min(best, backup(m, v, i, a, beta));
    return best;
}

struct ReplicationCost {
    double cost = 0.0;
    double model_cost = 0.0;
};

ReplicationCost replicate_quantized(const Policy& policy, const BeliefGrid& grid, const ModelSpec& spec,
                                    const ActionSpace& actions, const EvalConfig& cfg, std::uint64_t seed) {
    Rng rng(seed);
    EnvState state{0, recurrent_predictor(spec, cfg.init_state, cfg.init_control)};
    state.x = sample_discrete(state.pi.probs(), rng);
    ReplicationCost r;
    double discount = 1.0;
    for (std::size_t t = 0; t < cfg.horizon; ++t) {
        const ActionIndex a = policy.action(nearest_grid(state.pi, grid));
        EnvStep step = env_step(state, actions[a], spec, rng, cfg.cost_mode);
        r.cost += discount * step.stage_cost;
        discount *= spec.beta;
        state = std::move(step.next);
    }
    r.model_cost = r.cost;
    return r;
}

ReplicationCost replicate_window(const Policy& policy, PsiCache& cache, const Belief& mu, const ModelSpec& spec,
                                 const ActionSpace& actions, const EvalConfig& cfg, std::uint64_t seed) {
    Rng rng(seed);
    const WindowCodec& codec = cache.codec();
    WarmUp w = warm_up(cfg.init_state, mu, codec.length(), spec, actions, rng);
    StateIndex x = w.x;
    Belief pi = std::move(w.true_predictor);
    WindowKey key = codec.encode(w.window.history());
    ReplicationCost r;
    double discount = 1.0;
    for (std::size_t t = 0; t < cfg.horizon; ++t) {
        const ActionIndex a = policy.action(key);
        const JointAction& ja = actions[a];
        const auto [q, u] = act(ja, x);
        const double c = cfg.cost_mode == CostMode::Effective ? effective_cost(pi, ja, spec) : spec.c(x, u);
        r.cost += discount * c;
        r.model_cost += discount * effective_cost(cache.get(key), ja, spec);
        discount *= spec.beta;
        pi = predictor_update(pi, ja, q, spec);
        key = codec.shift(key, q, a);
        x = sample_next_state(spec, x, u, rng);
    }
    return r;
}

/// Mean and standard error; shifting by the first sample makes identical samples give stderr 0 exactly.
std::pair<double, double> mean_stderr(const std::vector<double>& xs) {
    const double n = static_cast<double>(xs.size());
    const double x0 = xs.front();
    double shifted = 0.0;
    for (double x : xs) shifted += x - x0;
    const double mean = x0 + shifted / n;
    if (xs.size() < 2) return {mean, 0.0};
    double ss = 0.0;
    for (double x : xs) ss += (x - mean) * (x - mean);
    return {mean, std::sqrt(ss / (n - 1.0) / n)};
}

EvalResult reduce(const std::vector<ReplicationCost>& reps, const EvalConfig& cfg) {
    std::vector<double> c, m;
    c.reserve(reps.size());
    m.reserve(reps.size());
    for (const auto& r : reps) {
        c.push_back(r.cost);
        m.push_back(r.model_cost);
    }
    EvalResult out;
    std::tie(out.mean, out.std_error) = mean_stderr(c);
    std::tie(out.model_mean, out.model_std_error) = mean_stderr(m);
    out.replications = reps.size();
    out.horizon = cfg.horizon;
    return out;
}

void check_eval(const Policy& policy, const Scheme& scheme, const ModelSpec& spec, const ActionSpace& actions,
                const EvalConfig& cfg) {
    if (!(policy.scheme() == scheme)) {
        throw IncompatiblePolicy("incompatible policy/scheme: policy is " + policy.scheme().tag() +
                                 ", evaluation expects " + scheme.tag());
    }
    if (policy.n_actions() != actions.size()) throw IncompatiblePolicy("incompatible policy/scheme: action count");
    if (cfg.replications == 0) throw ValidationError("replications must be >= 1");
    if (cfg.init_state >= spec.n_states || cfg.init_control >= spec.n_controls) {
        throw ValidationError("initial state/control out of range");
    }
}

EvalResult monte_carlo_impl(const Policy& policy, const Scheme& scheme, const ModelSpec& spec,
                            const ActionSpace& actions, const EvalConfig& cfg, bool parallel) {
    check_eval(policy, scheme, spec, actions, cfg);
    std::vector<ReplicationCost> reps(cfg.replications);
    const auto n = static_cast<std::int64_t>(cfg.replications);
    if (scheme.kind == Scheme::Kind::Quantized) {
        const BeliefGrid grid = build_grid(scheme.resolution, spec.n_states);
#pragma omp parallel for schedule(dynamic, 8) if (parallel)
        for (std::int64_t r = 0; r < n; ++r) {
            reps[r] = replicate_quantized(policy, grid, spec, actions, cfg, derive_seed(cfg.seed, r));
        }
    } else {
        const Belief mu = scheme.mu.value_or(Belief::uniform(spec.n_states));
#pragma omp parallel if (parallel)
        {
            // psi is a pure function of the key, so per-thread caches do not affect results.
            PsiCache cache(spec, actions, mu, scheme.length);
#pragma omp for schedule(dynamic, 8)
            for (std::int64_t r = 0; r < n; ++r) {
                reps[r] = replicate_window(policy, cache, mu, spec, actions, cfg, derive_seed(cfg.seed, r));
            }
        }
    }
    return reduce(reps, cfg);
}

class ExactWalker {
public:
    ExactWalker(const ModelSpec& spec, const ActionSpace& actions, std::size_t horizon, std::uint64_t cap)
        : spec_(spec), actions_(actions), horizon_(horizon), cap_(cap) {}

    void count_node() {
        if (++result.nodes > cap_) throw CapExceeded("tree too large: more than " + std::to_string(cap_) + " nodes");
    }

    void quantized(const Policy& policy, const BeliefGrid& grid, const Belief& pi, std::size_t t, double weight) {
        if (t == horizon_) return;
        count_node();
        const JointAction& a = actions_[policy.action(nearest_grid(pi, grid))];
        result.value += weight * effective_cost(pi, a, spec_);
        const auto dist = channel_output_dist(pi, a.quantizer, spec_.n_symbols);
        for (Symbol q = 0; q < dist.size(); ++q) {
            if (!(dist[q] > 0.0)) continue;
            quantized(policy, grid, predictor_update(pi, a, q, spec_), t + 1, weight * dist[q] * spec_.beta);
        }
    }

    void window(const Policy& policy, PsiCache& cache, const Belief& pi, WindowKey key, std::size_t t,
                double weight) {
        if (t == horizon_) return;
        count_node();
        const ActionIndex ai = policy.action(key);
        const JointAction& a = actions_[ai];
        result.value += weight * effective_cost(pi, a, spec_);
        result.model_value += weight * effective_cost(cache.get(key), a, spec_);
        const auto dist = channel_output_dist(pi, a.quantizer, spec_.n_symbols);
        for (Symbol q = 0; q < dist.size(); ++q) {
            if (!(dist[q] > 0.0)) continue;
            window(policy, cache, predictor_update(pi, a, q, spec_), cache.codec().shift(key, q, ai), t + 1,
                   weight * dist[q] * spec_.beta);
        }
    }

    ExactResult result;

private:
    const ModelSpec& spec_;
    const ActionSpace& actions_;
    std::size_t horizon_;
    std::uint64_t cap_;
};

} // namespace

GridModel build_grid_model(const BeliefGrid& grid, const ModelSpec& spec, const ActionSpace& actions) {
    GridModel m = empty_grid_model(grid, actions);
    const auto n = static_cast<std::int64_t>(grid.size());
#pragma omp parallel for schedule(dynamic)
    for (std::int64_t i = 0; i < n; ++i) fill_grid_point(m, i, grid, spec, actions);
    return m;
}

GridModel build_grid_model_serial(const BeliefGrid& grid, const ModelSpec& spec, const ActionSpace& actions) {
    GridModel m = empty_grid_model(grid, actions);
    for (std::size_t i = 0; i < grid.size(); ++i) fill_grid_point(m, i, grid, spec, actions);
    return m;
}

ValueFunction value_iterate(const GridModel& m, double beta, double tol, bool parallel) {
    if (!(tol > 0.0)) throw ValidationError("value iteration tolerance must be > 0");
    constexpr std::size_t kMaxSweeps = 1000000;
    const double threshold = tol * (1.0 - beta) / (2.0 * beta);
    const auto n = static_cast<std::int64_t>(m.n_points);
    ValueFunction vf;
    std::vector<double> v(m.n_points, 0.0), next(m.n_points, 0.0);
    while (vf.sweeps < kMaxSweeps) {
        double change = 0.0;
#pragma omp parallel for reduction(max : change) schedule(static) if (parallel)
        for (std::int64_t i = 0; i < n; ++i) {
            next[i] = sweep_point(m, v, i, beta);
            change = std::max(change, std::abs(next[i] - v[i]));
        }
        v.swap(next);
        ++vf.sweeps;
        vf.sweep_changes.push_back(change);
        if (change < threshold) break;
    }
    vf.values = v;
    vf.policy.assign(m.n_points, 0);
    for (std::size_t i = 0; i < m.n_points; ++i) {
        double best = std::numeric_limits<double>::infinity();
        for (ActionIndex a = 0; a < m.n_actions; ++a) {
            const double b = backup(m, v, i, a, beta);
            if (b < best) {
                best = b;
                vf.policy[i] = a;
            }
        }
    }
    return vf;
}

ValueFunction value_iterate_grid(const BeliefGrid& grid, const ModelSpec& spec, const ActionSpace& actions,
                                 double tol) {
    return value_iterate(build_grid_model(grid, spec, actions), spec.beta, tol, true);
}

ValueFunction value_iterate_grid_serial(const BeliefGrid& grid, const ModelSpec& spec, const ActionSpace& actions,
                                        double tol) {
    return value_iterate(build_grid_model_serial(grid, spec, actions), spec.beta, tol, false);
}

Policy policy_from_value_function(const ValueFunction& vf, std::size_t resolution, std::size_t n_actions) {
    Policy p(Scheme::quantized(resolution), n_actions, vf.policy.empty() ? 0 : vf.policy.front());
    for (std::size_t i = 0; i < vf.policy.size(); ++i) p.set(i, vf.policy[i]);
    return p;
}

void write_value_csv(const ValueFunction& vf, std::ostream& os) {
    os.precision(17);
    os << "state_key,value,greedy_action\n";
    for (std::size_t i = 0; i < vf.values.size(); ++i) os << i << ',' << vf.values[i] << ',' << vf.policy[i] << '\n';
}

ExactResult exact_discounted_cost(const Policy& policy, const Belief& pi0, const ModelSpec& spec,
                                  const ActionSpace& actions, std::size_t horizon, std::uint64_t node_cap) {
    if (policy.scheme().kind != Scheme::Kind::Quantized) throw IncompatiblePolicy("expected a quantized policy");
    const BeliefGrid grid = build_grid(policy.scheme().resolution, spec.n_states);
    ExactWalker walker(spec, actions, horizon, node_cap);
    walker.quantized(policy, grid, pi0, 0, 1.0);
    walker.result.model_value = walker.result.value;
    walker.result.tail_bound = std::pow(spec.beta, static_cast<double>(horizon)) * spec.cost_sup() / (1.0 - spec.beta);
    return walker.result;
}

ExactResult exact_discounted_cost_window(const Policy& policy, const WindowState& w0, const Belief& pi0,
                                         const ModelSpec& spec, const ActionSpace& actions, std::size_t horizon,
                                         std::uint64_t node_cap) {
    if (policy.scheme().kind != Scheme::Kind::Window || policy.scheme().length != w0.length()) {
        throw IncompatiblePolicy("expected a window policy of length " + std::to_string(w0.length()));
    }
    PsiCache cache(spec, actions, w0.mu(), w0.length());
    ExactWalker walker(spec, actions, horizon, node_cap);
    walker.window(policy, cache, pi0, cache.codec().encode(w0.history()), 0, 1.0);
    walker.result.tail_bound = std::pow(spec.beta, static_cast<double>(horizon)) * spec.cost_sup() / (1.0 - spec.beta);
    return walker.result;
}

EvalResult monte_carlo_cost(const Policy& policy, const Scheme& scheme, const ModelSpec& spec,
                            const ActionSpace& actions, const EvalConfig& config) {
    return monte_carlo_impl(policy, scheme, spec, actions, config, true);
}

EvalResult monte_carlo_cost_serial(const Policy& policy, const Scheme& scheme, const ModelSpec& spec,
                                   const ActionSpace& actions, const EvalConfig& config) {
    return monte_carlo_impl(policy, scheme, spec, actions, config, false);
}

void write_eval_header(std::ostream& os) { os << "sweep_value,seed,mean_cost,stderr,replications,horizon\n"; }

void write_eval_row(std::ostream& os, std::size_t sweep_value, std::uint64_t seed, const EvalResult& r) {
    os.precision(17);
    os << sweep_value << ',' << seed << ',' << r.mean << ',' << r.std_error << ',' << r.replications << ','
       << r.horizon << '\n';
}

std::vector<double> averaged_kernel(const ModelSpec& spec) {
    const std::size_t n = spec.n_states;
    std::vector<double> m(n * n, 0.0);
    for (Control u = 0; u < spec.n_controls; ++u) {
        for (StateIndex x = 0; x < n; ++x) {
            for (StateIndex y = 0; y < n; ++y) m[x * n + y] += spec.p(x, u, y) / static_cast<double>(spec.n_controls);
        }
    }
    return m;
}

bool is_irreducible(const std::vector<double>& matrix, std::size_t n) {
    for (std::size_t start = 0; start < n; ++start) {
        std::vector<bool> seen(n, false);
        std::vector<std::size_t> stack{start};
        seen[start] = true;
        while (!stack.empty()) {
            const std::size_t i = stack.back();
            stack.pop_back();
            for (std::size_t j = 0; j < n; ++j) {
                if (matrix[i * n + j] > 0.0 && !seen[j]) {
                    seen[j] = true;
                    stack.push_back(j);
                }
            }
        }
        if (std::find(seen.begin(), seen.end(), false) != seen.end()) return false;
    }
    return true;
}

bool is_aperiodic(const std::vector<double>& matrix, std::size_t n) {
    std::vector<char> base(n * n), power(n * n);
    for (std::size_t i = 0; i < n * n; ++i) base[i] = power[i] = matrix[i] > 0.0;
    const std::size_t limit = (n - 1) * (n - 1) + 1;
    for (std::size_t k = 1; k <= limit; ++k) {
        if (std::all_of(power.begin(), power.end(), [](char c) { return c != 0; })) return true;
        std::vector<char> next(n * n, 0);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t l = 0; l < n; ++l) {
                if (!power[i * n + l]) continue;
                for (std::size_t j = 0; j < n; ++j) next[i * n + j] |= base[l * n + j];
            }
        }
        power.swap(next);
    }
    return false;
}

ErgodicityReport check_ergodicity(const ModelSpec& spec) {
    ErgodicityReport r;
    const std::size_t n = spec.n_states;
    for (Control u = 0; u < spec.n_controls; ++u) {
        std::vector<double> m(spec.kernel.begin() + u * n * n, spec.kernel.begin() + (u + 1) * n * n);
        const bool irr = is_irreducible(m, n);
        r.irreducible_per_control.push_back(irr);
        r.aperiodic_per_control.push_back(irr && is_aperiodic(m, n));
    }
    const auto avg = averaged_kernel(spec);
    r.averaged_irreducible = is_irreducible(avg, n);
    r.averaged_aperiodic = r.averaged_irreducible && is_aperiodic(avg, n);
    if (!r.averaged_irreducible) {
        r.explanation = "uniform-action kernel is reducible: some state cannot reach another";
    } else if (!r.averaged_aperiodic) {
        r.explanation = "uniform-action kernel is periodic: no power of it is strictly positive";
    } else {
        r.explanation = "uniform-action kernel is irreducible and aperiodic";
    }
    return r;
}

std::vector<double> stationary_distribution(const ModelSpec& spec) {
    const ErgodicityReport er = check_ergodicity(spec);
    if (!er.ok()) throw NotErgodic("kernel not irreducible/aperiodic under uniform actions: " + er.explanation);
    const std::size_t n = spec.n_states;
    const auto m = averaged_kernel(spec);
    std::vector<double> z(n, 1.0 / static_cast<double>(n)), next(n);
    constexpr std::size_t kMaxIterations = 10000000;
    for (std::size_t it = 0; it < kMaxIterations; ++it) {
        std::fill(next.begin(), next.end(), 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < n; ++j) next[j] += z[i] * m[i * n + j];
        }
        double sum = 0.0;
        for (double v : next) sum += v;
        double diff = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            next[j] /= sum;
            diff += std::abs(next[j] - z[j]);
        }
        z.swap(next);
        if (diff < 1e-12) break;
    }
    return z;
}

} // namespace jcc
