#pragma once

#include <cstdint>
#include <unordered_map>
#include <vector>

#include "jcc/belief_mdp.hpp"
#include "jcc/filtering.hpp"
#include "jcc/model.hpp"

namespace jcc {

struct WindowEntry {
    Symbol q = 0;
    ActionIndex action = 0;

    friend bool operator==(const WindowEntry&, const WindowEntry&) = default;
};

/// A fixed prior standing in for the predictor N steps back, plus the last N
/// (symbol, action) pairs, oldest first.
class WindowState {
public:
    WindowState(Belief mu, std::vector<WindowEntry> history)
        : mu_(std::move(mu)), history_(std::move(history)) {}

    const Belief& mu() const { return mu_; }
    const std::vector<WindowEntry>& history() const { return history_; }
    std::size_t length() const { return history_.size(); }

    friend bool operator==(const WindowState&, const WindowState&) = default;

private:
    Belief mu_;
    std::vector<WindowEntry> history_;
};

using WindowKey = std::uint64_t;

/// Integer identity of a window history.
///
/// Digits run oldest to newest; each entry contributes a symbol digit (base |M|)
/// followed by an action digit (base |A|), so
///   key = sum_i (q_i * |A| + a_i) * (|M||A|)^(N-1-i).
class WindowCodec {
public:
    /// Throws CapExceeded when (|M||A|)^N does not fit in 63 bits.
    WindowCodec(std::size_t n_symbols, std::size_t n_actions, std::size_t length);

    WindowKey encode(const std::vector<WindowEntry>& history) const;
    std::vector<WindowEntry> decode(WindowKey key) const;
    /// Key of the window after dropping the oldest entry and appending (q, a).
    WindowKey shift(WindowKey key, Symbol q, ActionIndex a) const;
    /// (|M||A|)^N, the number of distinct keys.
    std::uint64_t key_space() const { return key_space_; }
    std::size_t length() const { return length_; }

private:
    std::size_t n_symbols_;
    std::size_t n_actions_;
    std::size_t length_;
    std::uint64_t digit_base_;
    std::uint64_t key_space_;
    std::uint64_t drop_modulus_;
};

/// Roll mu forward through the window with predictor_update.
/// Throws InfeasibleHistory if some step conditions on a zero-probability symbol.
Belief psi(const WindowState& w, const ModelSpec& spec, const ActionSpace& actions);

struct PsiResult {
    Belief belief;
    /// Number of steps that had to be re-seeded.
    std::size_t reseeds = 0;
};

/// Total version of psi: a step whose symbol has zero probability restarts from mu
/// restricted to Q^{-1}(q) (uniform on Q^{-1}(q) if mu has no mass there either).
PsiResult psi_reseeded(const WindowState& w, const ModelSpec& spec, const ActionSpace& actions);

/// Drop the oldest entry and append (q, a). A length-0 window is returned unchanged.
WindowState window_shift(const WindowState& w, ActionIndex a, Symbol q);

struct WindowStep {
    StateIndex x_next = 0;
    WindowState next;
    Symbol q = 0;
    Control u = 0;
    double stage_cost = 0.0;
    /// The approximate belief gave the realized symbol zero mass.
    bool reseeded = false;
};

/// One step of the finite-window environment. The true state emits q = Q(x); the
/// stage cost is c~(psi(w), a).
WindowStep window_env_step(StateIndex x, const WindowState& w, ActionIndex a, const ModelSpec& spec,
                           const ActionSpace& actions, Rng& rng);

struct WarmUp {
    /// Source state at time 0.
    StateIndex x = 0;
    WindowState window;
    /// Exact predictor of x_0 given the warm-up symbols, started from a point mass at x_start.
    Belief true_predictor;
};

/// Start the source at x_start (time -N) and apply N uniformly drawn actions to fill the window.
WarmUp warm_up(StateIndex x_start, const Belief& mu, std::size_t length, const ModelSpec& spec,
               const ActionSpace& actions, Rng& rng);

/// Lazily populated map from window key to psi, for states visited so far.
class PsiCache {
public:
    PsiCache(const ModelSpec& spec, const ActionSpace& actions, Belief mu, std::size_t length);

    const WindowCodec& codec() const { return codec_; }
    const Belief& get(WindowKey key);
    std::size_t size() const { return cache_.size(); }
    /// Registered window states whose psi needed a re-seed.
    std::size_t reseeded_states() const { return reseeded_; }

private:
    const ModelSpec& spec_;
    const ActionSpace& actions_;
    Belief mu_;
    WindowCodec codec_;
    std::unordered_map<WindowKey, Belief> cache_;
    std::size_t reseeded_ = 0;
};

} // namespace jcc
