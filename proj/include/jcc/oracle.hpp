#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "jcc/belief_mdp.hpp"
#include "jcc/filtering.hpp"
#include "jcc/learning.hpp"
#include "jcc/model.hpp"
#include "jcc/window.hpp"

namespace jcc {

// ---------------------------------------------------------------------------
// Value iteration on the grid model
// ---------------------------------------------------------------------------

/// Finite MDP on the grid: from point i under action a the cost is c~(grid[i], a) and,
/// for each symbol q with grid[i](Q^{-1}(q)) > 0, the chain moves with that probability
/// to nearest_grid(predictor_update(grid[i], a, q)).
struct GridModel {
    struct Successor {
        std::size_t next;
        double p;
    };
    std::size_t n_points = 0;
    std::size_t n_actions = 0;
    /// Indexed [i * n_actions + a].
    std::vector<double> cost;
    std::vector<std::vector<Successor>> successors;
};

GridModel build_grid_model(const BeliefGrid& grid, const ModelSpec& spec, const ActionSpace& actions);
GridModel build_grid_model_serial(const BeliefGrid& grid, const ModelSpec& spec, const ActionSpace& actions);

struct ValueFunction {
    std::vector<double> values;
    std::vector<ActionIndex> policy;
    std::size_t sweeps = 0;
    /// Sup-norm change of each sweep.
    std::vector<double> sweep_changes;
};

/// Bellman iteration on the grid model until the sup-norm change drops below
/// tol (1 - beta) / (2 beta), which bounds the distance to the fixed point by tol / 2.
ValueFunction value_iterate_grid(const BeliefGrid& grid, const ModelSpec& spec, const ActionSpace& actions,
                                 double tol);
ValueFunction value_iterate_grid_serial(const BeliefGrid& grid, const ModelSpec& spec, const ActionSpace& actions,
                                        double tol);

/// Same iteration on a prebuilt model; `parallel` selects the OpenMP sweep.
ValueFunction value_iterate(const GridModel& model, double beta, double tol, bool parallel);

/// Greedy policy of a value function as a quantized-scheme policy keyed by grid index.
Policy policy_from_value_function(const ValueFunction& vf, std::size_t resolution, std::size_t n_actions);

/// CSV `state_key,value,greedy_action`.
void write_value_csv(const ValueFunction& vf, std::ostream& os);

// ---------------------------------------------------------------------------
// Exact evaluation by exhaustive expectation
// ---------------------------------------------------------------------------

struct ExactResult {
    /// Expected sum_{t<T} beta^t c~(pi_t, a_t) under the exact predictor.
    double value = 0.0;
    /// beta^T ||c|| / (1 - beta).
    double tail_bound = 0.0;
    /// Window scheme only: the same sum with the approximate cost c~(psi(w_t), a_t).
    double model_value = 0.0;
    std::uint64_t nodes = 0;
};

/// Quantized-scheme policy from initial predictor pi0: branches over every symbol with
/// positive probability, the action at each node being policy(nearest_grid(pi)).
/// Throws CapExceeded ("tree too large") past node_cap nodes.
ExactResult exact_discounted_cost(const Policy& policy, const Belief& pi0, const ModelSpec& spec,
                                  const ActionSpace& actions, std::size_t horizon,
                                  std::uint64_t node_cap = 1u << 24);

/// Window-scheme policy from exact predictor pi0 and initial window w0.
ExactResult exact_discounted_cost_window(const Policy& policy, const WindowState& w0, const Belief& pi0,
                                         const ModelSpec& spec, const ActionSpace& actions, std::size_t horizon,
                                         std::uint64_t node_cap = 1u << 24);

// ---------------------------------------------------------------------------
// Monte-Carlo evaluation
// ---------------------------------------------------------------------------

struct EvalConfig {
    std::size_t horizon = 1000;
    std::size_t replications = 1000;
    std::uint64_t seed = 0;
    CostMode cost_mode = CostMode::Effective;
    /// Quantized scheme: pi_0 = P(.|init_state, init_control), x_0 ~ pi_0.
    /// Window scheme: x_{-N} = init_state, then N uniform warm-up steps.
    StateIndex init_state = 0;
    Control init_control = 0;
};

struct EvalResult {
    double mean = 0.0;
    double std_error = 0.0;
    std::size_t replications = 0;
    std::size_t horizon = 0;
    /// Window scheme only: discounted cost the window model assigns, c~(psi(w_t), a_t).
    double model_mean = 0.0;
    double model_std_error = 0.0;
};

/// Replication r uses seed derive_seed(config.seed, r); the result does not depend on thread count.
/// The per-step cost is c~(pi_t, a_t) with the exact predictor pi_t (or c(x_t,u_t) in realized mode).
/// Throws IncompatiblePolicy when policy.scheme() does not match `scheme`.
EvalResult monte_carlo_cost(const Policy& policy, const Scheme& scheme, const ModelSpec& spec,
                            const ActionSpace& actions, const EvalConfig& config);
EvalResult monte_carlo_cost_serial(const Policy& policy, const Scheme& scheme, const ModelSpec& spec,
                                   const ActionSpace& actions, const EvalConfig& config);

/// CSV header `sweep_value,seed,mean_cost,stderr,replications,horizon`.
void write_eval_header(std::ostream& os);
void write_eval_row(std::ostream& os, std::size_t sweep_value, std::uint64_t seed, const EvalResult& r);

// ---------------------------------------------------------------------------
// Ergodicity under uniform actions
// ---------------------------------------------------------------------------

/// Under uniformly drawn (Q, g) the control is uniform on U for every state, so the
/// source evolves by the averaged kernel (1/|U|) sum_u P(.|x,u).
std::vector<double> averaged_kernel(const ModelSpec& spec);

struct ErgodicityReport {
    std::vector<bool> irreducible_per_control;
    std::vector<bool> aperiodic_per_control;
    bool averaged_irreducible = false;
    bool averaged_aperiodic = false;
    std::string explanation;

    bool ok() const { return averaged_irreducible && averaged_aperiodic; }
};

bool is_irreducible(const std::vector<double>& matrix, std::size_t n);
/// Primitive check for an irreducible matrix: some power up to (n-1)^2 + 1 is strictly positive.
bool is_aperiodic(const std::vector<double>& matrix, std::size_t n);
ErgodicityReport check_ergodicity(const ModelSpec& spec);

/// Invariant distribution of the averaged kernel by power iteration (L1 step < 1e-12).
/// Throws NotErgodic unless the averaged kernel is irreducible and aperiodic.
std::vector<double> stationary_distribution(const ModelSpec& spec);

} // namespace jcc
