#include "jcc/window.hpp"

#include "jcc/error.hpp"

namespace jcc {

namespace {

constexpr std::uint64_t kMaxKeySpace = std::uint64_t{1} << 63;

Belief reseed_step(const Belief& mu, const JointAction& a, Symbol q, const ModelSpec& spec) {
    std::vector<double> w(spec.n_states, 0.0);
    double mass = 0.0;
    for (StateIndex x = 0; x < spec.n_states; ++x) {
        if (a.quantizer(x) == q) {
            w[x] = mu[x];
            mass += mu[x];
        }
    }
    if (!(mass > 0.0)) {
        for (StateIndex x = 0; x < spec.n_states; ++x) w[x] = a.quantizer(x) == q ? 1.0 : 0.0;
    }
    return push_forward(Belief::normalized(std::move(w)), spec, a.control(q));
}

bool charges(const Belief& pi, const Quantizer& Q, Symbol q) {
    for (StateIndex x = 0; x < pi.size(); ++x) {
        if (Q(x) == q && pi[x] > 0.0) return true;
    }
    return false;
}

} // namespace

WindowCodec::WindowCodec(std::size_t n_symbols, std::size_t n_actions, std::size_t length)
    : n_symbols_(n_symbols), n_actions_(n_actions), length_(length) {
    digit_base_ = static_cast<std::uint64_t>(n_symbols) * n_actions;
    key_space_ = 1;
    drop_modulus_ = 1;
    for (std::size_t i = 0; i < length; ++i) {
        if (digit_base_ != 0 && key_space_ > kMaxKeySpace / digit_base_) {
            throw CapExceeded("window key space too large for length " + std::to_string(length));
        }
        key_space_ *= digit_base_;
        if (i + 1 < length) drop_modulus_ *= digit_base_;
    }
}

WindowKey WindowCodec::encode(const std::vector<WindowEntry>& history) const {
    if (history.size() != length_) throw ValidationError("window history has wrong length");
    WindowKey key = 0;
    for (const auto& e : history) {
        if (e.q >= n_symbols_ || e.action >= n_actions_) throw ValidationError("window entry out of range");
        key = key * n_symbols_ + e.q;
        key = key * n_actions_ + e.action;
    }
    return key;
}

std::vector<WindowEntry> WindowCodec::decode(WindowKey key) const {
    if (key >= key_space_) throw ValidationError("window key out of range");
    std::vector<WindowEntry> out(length_);
    for (std::size_t i = length_; i-- > 0;) {
        out[i].action = static_cast<ActionIndex>(key % n_actions_);
        key /= n_actions_;
        out[i].q = static_cast<Symbol>(key % n_symbols_);
        key /= n_symbols_;
    }
    return out;
}

WindowKey WindowCodec::shift(WindowKey key, Symbol q, ActionIndex a) const {
    if (length_ == 0) return 0;
    return (key % drop_modulus_) * digit_base_ + q * n_actions_ + a;
}

Belief psi(const WindowState& w, const ModelSpec& spec, const ActionSpace& actions) {
    Belief pi = w.mu();
    for (std::size_t i = 0; i < w.length(); ++i) {
        const auto& e = w.history()[i];
        const JointAction& a = actions[e.action];
        if (!charges(pi, a.quantizer, e.q)) {
            throw InfeasibleHistory("infeasible history: symbol " + std::to_string(e.q) + " at window position " +
                                    std::to_string(i) + " has zero probability");
        }
        pi = predictor_update(pi, a, e.q, spec);
    }
    return pi;
}

PsiResult psi_reseeded(const WindowState& w, const ModelSpec& spec, const ActionSpace& actions) {
    PsiResult r{w.mu(), 0};
    for (const auto& e : w.history()) {
        const JointAction& a = actions[e.action];
        if (charges(r.belief, a.quantizer, e.q)) {
            r.belief = predictor_update(r.belief, a, e.q, spec);
        } else {
            r.belief = reseed_step(w.mu(), a, e.q, spec);
            ++r.reseeds;
        }
    }
    return r;
}

WindowState window_shift(const WindowState& w, ActionIndex a, Symbol q) {
    if (w.length() == 0) return w;
    std::vector<WindowEntry> h(w.history().begin() + 1, w.history().end());
    h.push_back({q, a});
    return WindowState(w.mu(), std::move(h));
}

WindowStep window_env_step(StateIndex x, const WindowState& w, ActionIndex a, const ModelSpec& spec,
                           const ActionSpace& actions, Rng& rng) {
    if (x >= spec.n_states) throw ValidationError("state out of range");
    const JointAction& ja = actions[a];
    const Belief approx = psi_reseeded(w, spec, actions).belief;
    const auto [q, u] = act(ja, x);
    WindowStep s{0, window_shift(w, a, q), q, u, effective_cost(approx, ja, spec), !charges(approx, ja.quantizer, q)};
    s.x_next = sample_next_state(spec, x, u, rng);
    return s;
}

WarmUp warm_up(StateIndex x_start, const Belief& mu, std::size_t length, const ModelSpec& spec,
               const ActionSpace& actions, Rng& rng) {
    StateIndex x = x_start;
    Belief truth = Belief::point_mass(spec.n_states, x_start);
    std::vector<WindowEntry> h;
    h.reserve(length);
    for (std::size_t t = 0; t < length; ++t) {
        const ActionIndex a = uniform_index(rng, actions.size());
        const auto [q, u] = act(actions[a], x);
        truth = predictor_update(truth, actions[a], q, spec);
        h.push_back({q, a});
        x = sample_next_state(spec, x, u, rng);
    }
    return {x, WindowState(mu, std::move(h)), std::move(truth)};
}

PsiCache::PsiCache(const ModelSpec& spec, const ActionSpace& actions, Belief mu, std::size_t length)
    : spec_(spec), actions_(actions), mu_(std::move(mu)), codec_(spec.n_symbols, actions.size(), length) {}

const Belief& PsiCache::get(WindowKey key) {
    auto it = cache_.find(key);
    if (it != cache_.end()) return it->second;
    PsiResult r = psi_reseeded(WindowState(mu_, codec_.decode(key)), spec_, actions_);
    if (r.reseeds > 0) ++reseeded_;
    return cache_.emplace(key, std::move(r.belief)).first->second;
}

} // namespace jcc
