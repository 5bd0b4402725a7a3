#include "jcc/belief_mdp.hpp"

#include <cmath>
#include <limits>
#include <optional>
#include <tuple>

#include "jcc/error.hpp"

namespace jcc {

double effective_cost(const Belief& pi, const JointAction& a, const ModelSpec& spec) {
    // Accumulated as deviations from the first charged state's cost, so a belief whose
    // support sees a single cost value returns that value exactly.
    std::optional<double> ref;
    double dev = 0.0;
    for (StateIndex x = 0; x < spec.n_states; ++x) {
        if (pi[x] == 0.0) continue;
        const double c = spec.c(x, a.control(a.quantizer(x)));
        if (!ref) ref = c;
        dev += pi[x] * (c - *ref);
    }
    return ref ? *ref + dev : 0.0;
}

EnvStep env_step(const EnvState& state, const JointAction& a, const ModelSpec& spec, Rng& rng, CostMode mode) {
    if (!(state.pi[state.x] > 0.0)) {
        throw BeliefDesync("belief desync: state " + std::to_string(state.x) + " outside predictor support");
    }
    EnvStep s;
    std::tie(s.q, s.u) = act(a, state.x);
    s.stage_cost = mode == CostMode::Effective ? effective_cost(state.pi, a, spec) : spec.c(state.x, s.u);
    s.next.pi = predictor_update(state.pi, a, s.q, spec);
    s.next.x = sample_next_state(spec, state.x, s.u, rng);
    return s;
}

std::uint64_t grid_point_count(std::size_t resolution, std::size_t n_states) {
    if (n_states == 0) return 0;
    // C(n + d - 1, d - 1) computed incrementally; each partial product is itself a binomial.
    const std::uint64_t k = n_states - 1;
    std::uint64_t r = 1;
    for (std::uint64_t i = 1; i <= k; ++i) {
        const std::uint64_t num = resolution + i;
        if (r > std::numeric_limits<std::uint64_t>::max() / num) return std::numeric_limits<std::uint64_t>::max();
        r = r * num / i;
    }
    return r;
}

BeliefGrid::BeliefGrid(std::size_t resolution, std::size_t n_states, std::uint64_t cap)
    : resolution_(resolution), n_states_(n_states) {
    if (resolution == 0) throw ValidationError("grid resolution must be >= 1");
    if (n_states == 0) throw ValidationError("grid needs at least one state");
    const std::uint64_t count = grid_point_count(resolution, n_states);
    if (count > cap) {
        throw CapExceeded("grid too large: " + std::to_string(count) + " points > cap " + std::to_string(cap));
    }
    points_.reserve(count);
    counts_.reserve(count);

    std::vector<std::uint32_t> k(n_states, 0);
    const double inv = 1.0 / static_cast<double>(resolution);
    // Depth-first over the first coordinates in ascending order yields lexicographic order.
    auto emit = [&](auto&& self, std::size_t pos, std::size_t remaining) -> void {
        if (pos + 1 == n_states) {
            k[pos] = static_cast<std::uint32_t>(remaining);
            std::vector<double> p(n_states);
            for (std::size_t i = 0; i < n_states; ++i) p[i] = k[i] * inv;
            points_.push_back(Belief::normalized(std::move(p)));
            counts_.push_back(k);
            return;
        }
        for (std::size_t v = 0; v <= remaining; ++v) {
            k[pos] = static_cast<std::uint32_t>(v);
            self(self, pos + 1, remaining - v);
        }
    };
    emit(emit, 0, resolution);
}

BeliefGrid build_grid(std::size_t resolution, std::size_t n_states, std::uint64_t cap) {
    return BeliefGrid(resolution, n_states, cap);
}

std::size_t nearest_grid(const Belief& pi, const BeliefGrid& grid) {
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const double d = tv_distance(pi, grid[i]);
        // Near-equal distances count as ties so rounding cannot reorder them.
        if (d < best_d - 1e-12) {
            best_d = d;
            best = i;
        }
    }
    return best;
}

void write_grid_csv(const BeliefGrid& grid, std::ostream& os) {
    os.precision(17);
    os << "index";
    for (std::size_t i = 0; i < grid.n_states(); ++i) os << ",p" << i;
    os << '\n';
    for (std::size_t g = 0; g < grid.size(); ++g) {
        os << g;
        for (double v : grid[g].probs()) os << ',' << v;
        os << '\n';
    }
}

TraceWriter::TraceWriter(std::ostream& os, std::size_t n_states) : os_(os) {
    os_.precision(17);
    os_ << "t,x,q,u,cost";
    for (std::size_t i = 0; i < n_states; ++i) os_ << ",p" << i;
    os_ << '\n';
}

void TraceWriter::row(std::size_t t, StateIndex x, Symbol q, Control u, double cost, const Belief& pi) {
    os_ << t << ',' << x << ',' << q << ',' << u << ',' << cost;
    for (double v : pi.probs()) os_ << ',' << v;
    os_ << '\n';
}

} // namespace jcc
