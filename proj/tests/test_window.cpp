#include <doctest.h>

#include "jcc/error.hpp"
#include "jcc/window.hpp"
#include "support/oracles.hpp"

using namespace jcc;

namespace {

std::vector<WindowEntry> random_history(Rng& rng, std::size_t n, std::size_t n_symbols, std::size_t n_actions) {
    std::vector<WindowEntry> h(n);
    for (auto& e : h) e = {uniform_index(rng, n_symbols), uniform_index(rng, n_actions)};
    return h;
}

// A history drawn by running the source, so every symbol is feasible from mu.
std::vector<WindowEntry> feasible_history(Rng& rng, const ModelSpec& m, const ActionSpace& actions,
                                          const Belief& mu, std::size_t n) {
    StateIndex x = sample_discrete(mu.probs(), rng);
    std::vector<WindowEntry> h;
    for (std::size_t t = 0; t < n; ++t) {
        const ActionIndex a = uniform_index(rng, actions.size());
        const auto [q, u] = act(actions[a], x);
        h.push_back({q, a});
        x = sample_next_state(m, x, u, rng);
    }
    return h;
}

} // namespace

TEST_SUITE("window") {

TEST_CASE("codec digit order and round trip") {
    const WindowCodec c(2, 32, 2);
    CHECK(c.key_space() == 64 * 64);
    // oldest entry is the most significant digit pair, symbol before action
    CHECK(c.encode({{1, 3}, {0, 5}}) == (1 * 32 + 3) * 64 + (0 * 32 + 5));
    Rng rng(8);
    for (std::size_t n = 0; n <= 5; ++n) {
        const WindowCodec codec(3, 7, n);
        for (int i = 0; i < 50; ++i) {
            const auto h = random_history(rng, n, 3, 7);
            const WindowKey k = codec.encode(h);
            CHECK(k < codec.key_space());
            CHECK(codec.decode(k) == h);
            // shift agrees with re-encoding the shifted history
            const Symbol q = uniform_index(rng, 3);
            const ActionIndex a = uniform_index(rng, 7);
            const WindowState shifted = window_shift(WindowState(Belief::uniform(2), h), a, q);
            CHECK(codec.shift(k, q, a) == codec.encode(shifted.history()));
        }
    }
    CHECK_THROWS_AS(WindowCodec(2, 32, 11), CapExceeded);
    CHECK_NOTHROW(WindowCodec(2, 32, 10));
    CHECK_THROWS_AS(c.decode(c.key_space()), ValidationError);
}

TEST_CASE("window shift") {
    const Belief mu = Belief::uniform(3);
    const WindowState w(mu, {{0, 1}, {1, 2}, {0, 3}});
    const WindowState s = window_shift(w, 9, 1);
    CHECK(s.history() == std::vector<WindowEntry>{{1, 2}, {0, 3}, {1, 9}});
    CHECK(s.mu() == mu);
    const WindowState one = window_shift(WindowState(mu, {{0, 4}}), 6, 1);
    CHECK(one.history() == std::vector<WindowEntry>{{1, 6}});
    // N shifts forget the original history entirely
    WindowState x = w, y(mu, {{1, 7}, {1, 8}, {0, 0}});
    for (int i = 0; i < 3; ++i) {
        x = window_shift(x, 10 + i, i % 2);
        y = window_shift(y, 10 + i, i % 2);
    }
    CHECK(x == y);
    const WindowState empty(mu, {});
    CHECK(window_shift(empty, 3, 1) == empty);
}

TEST_CASE("psi base cases") {
    const ModelSpec b = oracle::model_b();
    const ActionSpace actions = ActionSpace::enumerate(b);
    const Belief mu = Belief::uniform(3);
    CHECK(psi(WindowState(mu, {}), b, actions) == mu);
    for (ActionIndex a = 0; a < actions.size(); ++a) {
        for (Symbol q = 0; q < 2; ++q) {
            const auto d = channel_output_dist(mu, actions[a].quantizer, 2);
            if (d[q] == 0.0) {
                CHECK_THROWS_AS(psi(WindowState(mu, {{q, a}}), b, actions), InfeasibleHistory);
                continue;
            }
            CHECK(psi(WindowState(mu, {{q, a}}), b, actions) == predictor_update(mu, actions[a], q, b));
        }
    }
}

TEST_CASE("psi of length two matches the brute-force Bayes oracle on the second model") {
    const ModelSpec b = oracle::model_b();
    const ActionSpace actions = ActionSpace::enumerate(b);
    const Belief mu = Belief::uniform(3);
    const std::vector<double> mu_v(3, 1.0 / 3.0);
    int checked = 0;
    for (ActionIndex a0 = 0; a0 < actions.size(); ++a0)
        for (Symbol q0 = 0; q0 < 2; ++q0)
            for (ActionIndex a1 = 0; a1 < actions.size(); ++a1)
                for (Symbol q1 = 0; q1 < 2; ++q1) {
                    const std::vector<oracle::Step> hist{
                        {actions[a0].quantizer.map, actions[a0].control.map, q0},
                        {actions[a1].quantizer.map, actions[a1].control.map, q1}};
                    const auto ref = oracle::bayes_predictor(b, mu_v, hist);
                    const WindowState w(mu, {{q0, a0}, {q1, a1}});
                    if (ref.empty()) {
                        CHECK_THROWS_AS(psi(w, b, actions), InfeasibleHistory);
                        continue;
                    }
                    CHECK(oracle::l1(ref, psi(w, b, actions).probs()) < 1e-12);
                    ++checked;
                }
    CHECK(checked > 1000);
}

TEST_CASE("psi commutes with one predictor step") {
    const ModelSpec b = oracle::model_b();
    const ActionSpace actions = ActionSpace::enumerate(b);
    const Belief mu = Belief::uniform(3);
    Rng rng(31);
    for (int i = 0; i < 200; ++i) {
        const std::size_t n = 1 + uniform_index(rng, 4);
        const auto h = feasible_history(rng, b, actions, mu, n + 1);
        const WindowState w(mu, {h.begin(), h.begin() + n});
        const WindowState shifted = window_shift(w, h[n].action, h[n].q);
        const WindowState tail(mu, {h.begin() + 1, h.begin() + n});
        // Kernels are positive enough that every symbol stays feasible here.
        const Belief rolled = predictor_update(psi(tail, b, actions), actions[h[n].action], h[n].q, b);
        CHECK(oracle::l1(std::vector<double>(rolled.probs().begin(), rolled.probs().end()),
                         psi(shifted, b, actions).probs()) < 1e-12);
    }
}

TEST_CASE("reseeding makes psi total") {
    const ModelSpec b = oracle::model_b();
    const ActionSpace actions = ActionSpace::enumerate(b);
    const Belief mu = Belief::point_mass(3, 0);
    // action 4 quantizes state 2 alone to symbol 1; mu gives it no mass
    REQUIRE(actions[4].quantizer.map == std::vector<Symbol>{0, 0, 1});
    const WindowState w(mu, {{1, 4}});
    CHECK_THROWS_AS(psi(w, b, actions), InfeasibleHistory);
    const PsiResult r = psi_reseeded(w, b, actions);
    CHECK(r.reseeds == 1);
    CHECK(r.belief == predictor_update(Belief::point_mass(3, 2), actions[4], 1, b));

    const Belief mu2({0.5, 0.0, 0.5});
    const PsiResult r2 = psi_reseeded(WindowState(mu2, {{1, 4}}), b, actions);
    CHECK(r2.reseeds == 0);
}

TEST_CASE("window environment step") {
    const ModelSpec b = oracle::model_b();
    const ActionSpace actions = ActionSpace::enumerate(b);
    const Belief mu = Belief::uniform(3);
    Rng rng(2);
    const WindowState w(mu, {{0, 17}, {1, 22}});
    const WindowStep s = window_env_step(2, w, 9, b, actions, rng);
    CHECK(s.q == actions[9].quantizer(2));
    CHECK(s.u == actions[9].control(s.q));
    CHECK(s.stage_cost == doctest::Approx(effective_cost(psi(w, b, actions), actions[9], b)));
    CHECK(s.next == window_shift(w, 9, s.q));
    CHECK_FALSE(s.reseeded);

    // a zero-length window always prices actions at mu
    const WindowStep z = window_env_step(0, WindowState(mu, {}), 5, b, actions, rng);
    CHECK(z.stage_cost == doctest::Approx(effective_cost(mu, actions[5], b)));
}

TEST_CASE("correct prior gives zero model error") {
    const ModelSpec b = oracle::model_b();
    const ActionSpace actions = ActionSpace::enumerate(b);
    Rng rng(12);
    for (int i = 0; i < 100; ++i) {
        const std::size_t n = 1 + uniform_index(rng, 4);
        const WarmUp wu = warm_up(1, Belief::point_mass(3, 1), n, b, actions, rng);
        CHECK(wu.window.length() == n);
        CHECK(wu.true_predictor[wu.x] > 0.0);
        CHECK(oracle::l1(std::vector<double>(wu.true_predictor.probs().begin(), wu.true_predictor.probs().end()),
                         psi(wu.window, b, actions).probs()) < 1e-12);
    }
}

TEST_CASE("psi cache") {
    const ModelSpec b = oracle::model_b();
    const ActionSpace actions = ActionSpace::enumerate(b);
    const Belief mu = Belief::uniform(3);
    PsiCache cache(b, actions, mu, 2);
    Rng rng(4);
    for (int i = 0; i < 100; ++i) {
        const auto h = feasible_history(rng, b, actions, mu, 2);
        const WindowKey k = cache.codec().encode(h);
        CHECK(cache.get(k) == psi(WindowState(mu, h), b, actions));
    }
    CHECK(cache.size() <= 100);
    CHECK(cache.size() > 50);
    CHECK(cache.reseeded_states() == 0);
}

}
