#include "jcc/filtering.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "jcc/error.hpp"

namespace jcc {

namespace {

constexpr double kSumTolerance = 1e-12;

std::vector<double> trial_gaps(const ModelSpec& spec, const ActionSpace& actions, const Belief& mu,
                               const Belief& nu, std::size_t horizon, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<double> gaps(horizon + 1);
    StateIndex x = sample_discrete(mu.probs(), rng);
    Belief a = mu;
    Belief b = nu;
    for (std::size_t t = 0;; ++t) {
        gaps[t] = tv_distance(a, b);
        if (t == horizon) break;
        const ActionIndex ai = uniform_index(rng, actions.size());
        const auto [q, u] = act(actions[ai], x);
        a = predictor_update(a, actions[ai], q, spec);
        b = predictor_update(b, actions[ai], q, spec);
        x = sample_next_state(spec, x, u, rng);
    }
    return gaps;
}

void check_loss_inputs(const Belief& mu, const Belief& nu, const LossConfig& config) {
    if (mu.size() != nu.size()) throw ValidationError("priors have different sizes");
    for (std::size_t i = 0; i < mu.size(); ++i) {
        if (mu[i] > 0.0 && nu[i] <= 0.0) {
            throw AbsoluteContinuityViolated("absolute continuity violated: mu charges state " +
                                             std::to_string(i) + " where nu has no mass");
        }
    }
    if (config.trials == 0) throw ValidationError("empirical_loss needs at least one trial");
}

LossEstimate reduce_gaps(const std::vector<std::vector<double>>& per_trial, const LossConfig& config) {
    LossEstimate est;
    est.trials = per_trial.size();
    est.mean.assign(config.horizon + 1, 0.0);
    est.std_error.assign(config.horizon + 1, 0.0);
    const double n = static_cast<double>(per_trial.size());
    // Moments are taken about the first trial so that identical samples give exactly zero spread.
    for (std::size_t t = 0; t <= config.horizon; ++t) {
        const double shift = per_trial.front()[t];
        double s = 0.0, ss = 0.0;
        for (const auto& g : per_trial) {
            const double d = g[t] - shift;
            s += d;
            ss += d * d;
        }
        est.mean[t] = shift + s / n;
        if (per_trial.size() > 1) {
            const double var = std::max(0.0, (ss - s * s / n) / (n - 1.0));
            est.std_error[t] = std::sqrt(var / n);
        }
    }
    est.at_window = config.window <= config.horizon ? est.mean[config.window] : 0.0;
    return est;
}

} // namespace

Belief::Belief(std::vector<double> probs) : p_(std::move(probs)) {
    double sum = 0.0;
    for (double v : p_) {
        if (!(v >= 0.0) || !std::isfinite(v)) throw ValidationError("belief entry must be finite and >= 0");
        sum += v;
    }
    if (p_.empty() || std::abs(sum - 1.0) > kSumTolerance) {
        throw ValidationError("belief must sum to 1");
    }
}

Belief Belief::uniform(std::size_t n_states) {
    return normalized(std::vector<double>(n_states, 1.0));
}

Belief Belief::point_mass(std::size_t n_states, StateIndex x) {
    std::vector<double> p(n_states, 0.0);
    p.at(x) = 1.0;
    return Belief(std::move(p));
}

Belief Belief::normalized(std::vector<double> weights) {
    double sum = 0.0;
    for (double w : weights) sum += w;
    if (!(sum > 0.0)) throw ValidationError("cannot normalize zero mass");
    for (double& w : weights) w /= sum;
    Belief b;
    b.p_ = std::move(weights);
    return b;
}

std::vector<double> channel_output_dist(const Belief& pi, const Quantizer& Q, std::size_t n_symbols) {
    std::vector<double> out(n_symbols, 0.0);
    for (StateIndex x = 0; x < pi.size(); ++x) out[Q(x)] += pi[x];
    return out;
}

Belief filter_update(const Belief& pi, const Quantizer& Q, Symbol q) {
    std::vector<double> w(pi.size(), 0.0);
    double mass = 0.0;
    for (StateIndex x = 0; x < pi.size(); ++x) {
        if (Q(x) == q) {
            w[x] = pi[x];
            mass += pi[x];
        }
    }
    if (!(mass > 0.0)) throw UnreachableSymbol("unreachable symbol " + std::to_string(q));
    return Belief::normalized(std::move(w));
}

Belief push_forward(const Belief& pi, const ModelSpec& spec, Control u) {
    std::vector<double> out(spec.n_states, 0.0);
    for (StateIndex x = 0; x < spec.n_states; ++x) {
        if (pi[x] == 0.0) continue;
        const auto row = spec.row(x, u);
        for (StateIndex y = 0; y < spec.n_states; ++y) out[y] += row[y] * pi[x];
    }
    return Belief::normalized(std::move(out));
}

Belief predictor_update(const Belief& pi, const JointAction& a, Symbol q, const ModelSpec& spec) {
    const Control u = a.control(q);
    std::vector<double> out(spec.n_states, 0.0);
    double mass = 0.0;
    for (StateIndex x = 0; x < spec.n_states; ++x) {
        if (a.quantizer(x) != q || pi[x] == 0.0) continue;
        mass += pi[x];
        const auto row = spec.row(x, u);
        for (StateIndex y = 0; y < spec.n_states; ++y) out[y] += row[y] * pi[x];
    }
    if (!(mass > 0.0)) throw UnreachableSymbol("unreachable symbol " + std::to_string(q));
    // Dividing by the exact sum (rather than by mass) keeps drift from compounding.
    return Belief::normalized(std::move(out));
}

double tv_distance(const Belief& a, const Belief& b) {
    double d = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) d += std::abs(a[i] - b[i]);
    return d;
}

double dobrushin(const ModelSpec& spec, Control u) {
    if (spec.n_states < 2) return 1.0;
    double best = 1.0;
    for (StateIndex i = 0; i < spec.n_states; ++i) {
        for (StateIndex k = i + 1; k < spec.n_states; ++k) {
            double overlap = 0.0;
            for (StateIndex j = 0; j < spec.n_states; ++j) overlap += std::min(spec.p(i, u, j), spec.p(k, u, j));
            best = std::min(best, overlap);
        }
    }
    return best;
}

StabilityReport stability_report(const ModelSpec& spec, std::size_t max_N) {
    StabilityReport r;
    for (Control u = 0; u < spec.n_controls; ++u) r.delta_per_control.push_back(dobrushin(spec, u));
    r.delta_min = *std::min_element(r.delta_per_control.begin(), r.delta_per_control.end());
    r.contraction_guaranteed = r.delta_min >= 0.5;
    const double rate = 2.0 * (1.0 - r.delta_min);
    const double scale = 2.0 * spec.cost_sup() / ((1.0 - spec.beta) * (1.0 - spec.beta));
    double power = 1.0;
    for (std::size_t n = 0; n <= max_N; ++n) {
        r.loss_bound_per_N.push_back(2.0 * power);
        r.value_bound_per_N.push_back(scale * power);
        power *= rate;
    }
    return r;
}

void write_delta_csv(const StabilityReport& r, std::ostream& os) {
    os.precision(17);
    os << "u,delta\n";
    for (std::size_t u = 0; u < r.delta_per_control.size(); ++u) os << u << ',' << r.delta_per_control[u] << '\n';
}

void write_bounds_csv(const StabilityReport& r, std::ostream& os) {
    os.precision(17);
    os << "N,loss_bound,value_bound\n";
    for (std::size_t n = 0; n < r.loss_bound_per_N.size(); ++n) {
        os << n << ',' << r.loss_bound_per_N[n] << ',' << r.value_bound_per_N[n] << '\n';
    }
}

LossEstimate empirical_loss(const ModelSpec& spec, const ActionSpace& actions, const Belief& mu,
                            const Belief& nu, const LossConfig& config) {
    check_loss_inputs(mu, nu, config);
    std::vector<std::vector<double>> per_trial(config.trials);
    const auto trials = static_cast<std::int64_t>(config.trials);
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < trials; ++i) {
        per_trial[i] = trial_gaps(spec, actions, mu, nu, config.horizon, derive_seed(config.seed, i));
    }
    return reduce_gaps(per_trial, config);
}

LossEstimate empirical_loss_serial(const ModelSpec& spec, const ActionSpace& actions, const Belief& mu,
                                   const Belief& nu, const LossConfig& config) {
    check_loss_inputs(mu, nu, config);
    std::vector<std::vector<double>> per_trial;
    per_trial.reserve(config.trials);
    for (std::size_t i = 0; i < config.trials; ++i) {
        per_trial.push_back(trial_gaps(spec, actions, mu, nu, config.horizon, derive_seed(config.seed, i)));
    }
    return reduce_gaps(per_trial, config);
}

} // namespace jcc
