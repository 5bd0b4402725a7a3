#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "jcc/rng.hpp"

namespace jcc {

using StateIndex = std::size_t;
using Symbol = std::size_t;
using Control = std::size_t;
using ActionIndex = std::size_t;

/// Controlled finite Markov source with a finite-rate noiseless channel.
///
/// States, controls and channel symbols are the 0-based ranges
/// [0, n_states), [0, n_controls), [0, n_symbols).
struct ModelSpec {
    std::size_t n_states = 0;
    std::size_t n_controls = 0;
    std::size_t n_symbols = 0;
    double beta = 0.0;
    /// Row-major P(x'|x,u), indexed [u][x][x'].
    std::vector<double> kernel;
    /// Stage cost c(x,u), indexed [x][u].
    std::vector<double> cost;

    double p(StateIndex x, Control u, StateIndex next) const {
        return kernel[(u * n_states + x) * n_states + next];
    }
    std::span<const double> row(StateIndex x, Control u) const {
        return {kernel.data() + (u * n_states + x) * n_states, n_states};
    }
    double c(StateIndex x, Control u) const { return cost[x * n_controls + u]; }

    /// ||c||_inf, the largest cost entry.
    double cost_sup() const;
};

/// Every violated invariant of `spec`, one human-readable line each. Empty iff valid.
std::vector<std::string> validate_model(const ModelSpec& spec);

/// Reads the model keys (`n_states`, `n_controls`, `n_symbols`, `beta`,
/// `kernel[u][x][x']`, `cost[x][u]`). Throws ValidationError listing every violation.
ModelSpec model_from_json(const nlohmann::json& j);
nlohmann::json model_to_json(const ModelSpec& spec);
ModelSpec load_model(const std::filesystem::path& path);

/// FNV-1a over the canonical JSON dump; identifies the model a Q-table was trained on.
std::uint64_t model_hash(const ModelSpec& spec);

struct Quantizer {
    std::vector<Symbol> map;

    Symbol operator()(StateIndex x) const { return map[x]; }
    std::vector<StateIndex> preimage(Symbol q) const;

    friend bool operator==(const Quantizer&, const Quantizer&) = default;
};

struct ControlMap {
    std::vector<Control> map;

    Control operator()(Symbol q) const { return map[q]; }

    friend bool operator==(const ControlMap&, const ControlMap&) = default;
};

/// A quantizer paired with the map from received symbol to control.
struct JointAction {
    Quantizer quantizer;
    ControlMap control;

    friend bool operator==(const JointAction&, const JointAction&) = default;
};

/// (q, u) = (Q(x), g(Q(x))).
inline std::pair<Symbol, Control> act(const JointAction& a, StateIndex x) {
    const Symbol q = a.quantizer(x);
    return {q, a.control(q)};
}

/// The ordered set of joint actions available to the coder/controller.
///
/// Canonical order: the quantizer read as a base-|M| integer (entry for state 0
/// most significant), then the control map read as a base-|U| integer (entry for
/// symbol 0 most significant). Index = quantizer_rank * |U|^|M| + control_rank.
class ActionSpace {
public:
    static constexpr std::uint64_t kDefaultCap = 1u << 20;

    /// All |M|^|X| * |U|^|M| actions. Throws CapExceeded ("action space too large").
    static ActionSpace enumerate(const ModelSpec& spec, std::uint64_t cap = kDefaultCap);

    /// Only the actions using `fixed`, in canonical order; reduces the problem to
    /// a POMDP with a fixed measurement channel.
    static ActionSpace with_fixed_quantizer(const ModelSpec& spec, const Quantizer& fixed);

    /// Number of actions in the full canonical enumeration.
    static std::uint64_t full_count(const ModelSpec& spec);

    /// The canonical-index-th action of the full enumeration.
    static JointAction decode(const ModelSpec& spec, std::uint64_t canonical_index);
    static std::uint64_t encode(const ModelSpec& spec, const JointAction& a);

    std::size_t size() const { return actions_.size(); }
    const JointAction& operator[](ActionIndex i) const { return actions_[i]; }
    /// Canonical (full-enumeration) index of local action i.
    std::uint64_t canonical_index(ActionIndex i) const { return canonical_[i]; }

    auto begin() const { return actions_.begin(); }
    auto end() const { return actions_.end(); }

private:
    std::vector<JointAction> actions_;
    std::vector<std::uint64_t> canonical_;
};

/// x' drawn from P(.|x,u) by inverse CDF over the canonical state order.
StateIndex sample_next_state(const ModelSpec& spec, StateIndex x, Control u, Rng& rng);

} // namespace jcc
