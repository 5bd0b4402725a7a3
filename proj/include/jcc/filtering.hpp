#pragma once

#include <cstdint>
#include <ostream>
#include <span>
#include <vector>

#include "jcc/model.hpp"

namespace jcc {

/// Probability vector over the source states. Used for predictors, filters and priors.
class Belief {
public:
    Belief() = default;
    /// Throws ValidationError unless entries are >= 0 and sum to 1 within 1e-12.
    explicit Belief(std::vector<double> probs);

    static Belief uniform(std::size_t n_states);
    static Belief point_mass(std::size_t n_states, StateIndex x);
    /// Divides nonnegative weights by their exact sum. Throws on zero total mass.
    static Belief normalized(std::vector<double> weights);

    std::size_t size() const { return p_.size(); }
    double operator[](StateIndex x) const { return p_[x]; }
    std::span<const double> probs() const { return p_; }

    friend bool operator==(const Belief&, const Belief&) = default;

private:
    std::vector<double> p_;
};

/// Law of the channel symbol: entry q is pi(Q^{-1}(q)).
std::vector<double> channel_output_dist(const Belief& pi, const Quantizer& Q, std::size_t n_symbols);

/// pi restricted to Q^{-1}(q) and renormalized. Throws UnreachableSymbol when pi(Q^{-1}(q)) = 0.
Belief filter_update(const Belief& pi, const Quantizer& Q, Symbol q);

/// sum_x P(.|x,u) pi(x).
Belief push_forward(const Belief& pi, const ModelSpec& spec, Control u);

/// Next predictor after emitting symbol q under action a:
///   pi'(x') = sum_{x in Q^{-1}(q)} P(x'|x, g(q)) pi(x) / pi(Q^{-1}(q)).
/// Throws UnreachableSymbol when pi(Q^{-1}(q)) = 0.
Belief predictor_update(const Belief& pi, const JointAction& a, Symbol q, const ModelSpec& spec);

/// sum_i |a_i - b_i|, in [0, 2].
double tv_distance(const Belief& a, const Belief& b);

/// min over state pairs (i,k) of sum_j min(P(j|i,u), P(j|k,u)).
double dobrushin(const ModelSpec& spec, Control u);

struct StabilityReport {
    std::vector<double> delta_per_control;
    double delta_min = 0.0;
    /// Index N = 0..max_N.
    std::vector<double> loss_bound_per_N;
    std::vector<double> value_bound_per_N;
    /// False when delta_min < 1/2 and the contraction argument does not apply.
    bool contraction_guaranteed = false;
};

/// loss_bound[N] = 2 (2(1-delta_min))^N,
/// value_bound[N] = 2 ||c|| / (1-beta)^2 * (2(1-delta_min))^N.
StabilityReport stability_report(const ModelSpec& spec, std::size_t max_N);

/// CSV with header `u,delta`.
void write_delta_csv(const StabilityReport& r, std::ostream& os);
/// CSV with header `N,loss_bound,value_bound`.
void write_bounds_csv(const StabilityReport& r, std::ostream& os);

struct LossEstimate {
    /// Index t = 0..horizon.
    std::vector<double> mean;
    std::vector<double> std_error;
    std::size_t trials = 0;
    /// mean[N] for the window length the estimate was requested for (0 if N > horizon).
    double at_window = 0.0;
};

struct LossConfig {
    std::size_t window = 0;
    std::size_t trials = 10000;
    std::size_t horizon = 10;
    std::uint64_t seed = 0;
};

/// Monte-Carlo estimate of E||pi_t^mu - pi_t^nu||_TV for t = 0..horizon, where the
/// source starts from x_0 ~ mu, actions are uniform over `actions`, and both predictor
/// recursions are driven by the same realized (q, a) path.
/// Trial i uses seed derive_seed(config.seed, i); results do not depend on thread count.
/// Throws AbsoluteContinuityViolated unless supp(mu) is contained in supp(nu).
LossEstimate empirical_loss(const ModelSpec& spec, const ActionSpace& actions, const Belief& mu,
                            const Belief& nu, const LossConfig& config);

/// Single-threaded reference for empirical_loss; identical output.
LossEstimate empirical_loss_serial(const ModelSpec& spec, const ActionSpace& actions, const Belief& mu,
                                   const Belief& nu, const LossConfig& config);

} // namespace jcc
