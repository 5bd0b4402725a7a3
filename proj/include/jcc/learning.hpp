#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "jcc/belief_mdp.hpp"
#include "jcc/filtering.hpp"
#include "jcc/model.hpp"
#include "jcc/window.hpp"

namespace jcc {

using StateKey = std::uint64_t;

/// Which finite approximation a Q-table or policy is keyed on.
struct Scheme {
    enum class Kind { Quantized, Window };

    Kind kind = Kind::Quantized;
    /// Grid resolution n (quantized scheme).
    std::size_t resolution = 1;
    /// Window length N and fixed prior mu (window scheme).
    std::size_t length = 1;
    std::optional<Belief> mu;

    static Scheme quantized(std::size_t n) { return {Kind::Quantized, n, 1, std::nullopt}; }
    static Scheme window(std::size_t N, Belief mu) { return {Kind::Window, 1, N, std::move(mu)}; }

    /// Short tag used in file names: "n5" or "N3".
    std::string tag() const;
    std::size_t sweep_value() const { return kind == Kind::Quantized ? resolution : length; }

    friend bool operator==(const Scheme&, const Scheme&) = default;
};

nlohmann::json scheme_to_json(const Scheme& s);
Scheme scheme_from_json(const nlohmann::json& j);

struct QEntry {
    double q = 0.0;
    std::uint64_t visits = 0;
};

/// Q-factors over (state key, action). Unvisited entries read as 0.
class QTable {
public:
    explicit QTable(std::size_t n_actions) : n_actions_(n_actions) {}

    std::size_t n_actions() const { return n_actions_; }
    std::size_t n_states() const { return rows_.size(); }

    /// nullptr if the state was never visited.
    const std::vector<QEntry>* row(StateKey s) const;
    std::vector<QEntry>& row_mut(StateKey s);
    double q(StateKey s, ActionIndex a) const;
    std::uint64_t visits(StateKey s, ActionIndex a) const;
    /// min_a Q(s, a), 0 for an unvisited state.
    double min_q(StateKey s) const;

    std::vector<StateKey> sorted_keys() const;

private:
    std::size_t n_actions_;
    std::unordered_map<StateKey, std::vector<QEntry>> rows_;
};

/// Q(s,a) <- (1-alpha) Q(s,a) + alpha (cost + beta min_a' Q(s_next, a')),
/// alpha = 1 / (1 + previous visits of (s,a)). Returns |change of Q(s,a)|.
double q_update(QTable& table, StateKey s, ActionIndex a, double cost, StateKey s_next, double beta);

class Policy {
public:
    Policy(Scheme scheme, std::size_t n_actions, ActionIndex fallback);

    const Scheme& scheme() const { return scheme_; }
    std::size_t n_actions() const { return n_actions_; }
    ActionIndex fallback() const { return fallback_; }

    void set(StateKey s, ActionIndex a);
    ActionIndex action(StateKey s) const;
    bool contains(StateKey s) const { return map_.contains(s); }
    std::size_t size() const { return map_.size(); }
    std::vector<StateKey> sorted_keys() const;

private:
    Scheme scheme_;
    std::size_t n_actions_;
    ActionIndex fallback_;
    std::unordered_map<StateKey, ActionIndex> map_;
};

/// Greedy policy over the visited states; ties go to the lowest action index.
Policy extract_policy(const QTable& table, const Scheme& scheme, ActionIndex fallback);

/// Action minimizing the visit-weighted mean Q-value over all visited states.
ActionIndex pooled_best_action(const QTable& table);

/// Visit-weighted stage-cost means c* and transition frequencies P* per (state, action).
class EmpiricalModel {
public:
    struct Stats {
        std::uint64_t count = 0;
        double cost_sum = 0.0;
        std::unordered_map<StateKey, std::uint64_t> next;
    };

    void record(StateKey s, ActionIndex a, double cost, StateKey s_next);

    template <class F>
    void for_each(F&& f) const {
        for (const auto& [key, stats] : stats_) f(key.first, key.second, stats);
    }
    std::size_t size() const { return stats_.size(); }

private:
    struct KeyHash {
        std::size_t operator()(const std::pair<StateKey, ActionIndex>& k) const {
            return std::hash<std::uint64_t>{}(k.first * 0x9e3779b97f4a7c15ULL ^ k.second);
        }
    };
    std::unordered_map<std::pair<StateKey, ActionIndex>, Stats, KeyHash> stats_;
};

/// max over recorded (s,a) of |Q(s,a) - c*(s,a) - beta sum_s' P*(s'|s,a) min_a' Q(s',a')|.
double dcoe_residual(const QTable& table, const EmpiricalModel& model, double beta);

struct LearnConfig {
    std::uint64_t iterations = 1000000;
    std::uint64_t seed = 0;
    Scheme scheme;
    /// Early stop once the largest |Q change| over a block of this many updates is below tolerance.
    std::uint64_t convergence_window = 10000;
    double tolerance = 1e-9;
    /// Spacing of training-curve points; 0 disables the curve.
    std::uint64_t checkpoint_every = 10000;
    CostMode cost_mode = CostMode::Effective;
    /// Quantized scheme: training starts from the recurrent predictor P(.|init_state, init_control).
    /// Window scheme: the source starts at x = init_state before warm-up.
    StateIndex init_state = 0;
    Control init_control = 0;
    /// Number of initial steps written to `trace` (if set).
    std::uint64_t trace_steps = 1000;
    std::ostream* trace = nullptr;
};

struct CurvePoint {
    std::uint64_t iteration = 0;
    double max_q_change = 0.0;
    std::size_t visited_states = 0;
    double residual = 0.0;
};

struct LearnDiagnostics {
    std::uint64_t iterations_run = 0;
    std::size_t visited_states = 0;
    bool early_stopped = false;
    /// Largest |Q change| over the final convergence window.
    double max_q_change = 0.0;
    /// Window scheme: steps where the approximate belief gave the realized symbol zero mass.
    std::uint64_t reseed_events = 0;
    double final_residual = 0.0;
    std::vector<CurvePoint> curve;
};

struct LearnResult {
    QTable table;
    Policy policy;
    LearnDiagnostics diagnostics;
    EmpiricalModel model;
};

/// Q-learning on the grid-quantized predictor MDP. The exact predictor recursion drives
/// the system; only the Q-table key is quantized (nearest grid point). Actions uniform.
LearnResult run_quantized_qlearning(const ModelSpec& spec, const ActionSpace& actions, const LearnConfig& config);

/// Q-learning on the sliding-window MDP with fixed prior mu.
LearnResult run_window_qlearning(const ModelSpec& spec, const ActionSpace& actions, const LearnConfig& config);

/// Dispatches on config.scheme.kind.
LearnResult run_qlearning(const ModelSpec& spec, const ActionSpace& actions, const LearnConfig& config);

/// Recurrent predictor P(.|x, u): the belief after a symbol that reveals x exactly.
Belief recurrent_predictor(const ModelSpec& spec, StateIndex x, Control u);

std::string hash_hex(std::uint64_t h);

nlohmann::json qtable_to_json(const QTable& table, const Scheme& scheme, std::uint64_t model_hash);
nlohmann::json policy_to_json(const Policy& policy, std::uint64_t model_hash);
Policy policy_from_json(const nlohmann::json& j);

/// CSV `iteration,max_q_change,visited_states,residual`.
void write_curve_csv(const std::vector<CurvePoint>& curve, std::ostream& os);

} // namespace jcc
