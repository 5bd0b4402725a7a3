#pragma once

#include <cstdint>
#include <ostream>
#include <vector>

#include "jcc/filtering.hpp"
#include "jcc/model.hpp"

namespace jcc {

/// c~(pi, a) = sum_x pi(x) c(x, g(Q(x))).
double effective_cost(const Belief& pi, const JointAction& a, const ModelSpec& spec);

/// Which stage cost the environments report.
enum class CostMode {
    /// c~(pi_t, a_t), the cost of the equivalent belief MDP.
    Effective,
    /// c(x_t, u_t), the realized cost of the underlying source.
    Realized,
};

/// The true source state together with the coder/controller's predictor.
struct EnvState {
    StateIndex x = 0;
    Belief pi;
};

struct EnvStep {
    EnvState next;
    Symbol q = 0;
    Control u = 0;
    double stage_cost = 0.0;
};

/// One step of the coupled source + predictor system: q = Q(x), u = g(q),
/// pi' = predictor_update(pi, a, q), x' ~ P(.|x,u).
/// Throws BeliefDesync if x lies outside supp(pi).
EnvStep env_step(const EnvState& state, const JointAction& a, const ModelSpec& spec, Rng& rng,
                 CostMode mode = CostMode::Effective);

/// Uniform lattice on the belief simplex: all points (k_1/n, ..., k_d/n) with sum k_i = n,
/// in ascending lexicographic order of (k_1, ..., k_d).
class BeliefGrid {
public:
    static constexpr std::uint64_t kDefaultCap = 1u << 22;

    BeliefGrid() = default;
    BeliefGrid(std::size_t resolution, std::size_t n_states, std::uint64_t cap = kDefaultCap);

    std::size_t resolution() const { return resolution_; }
    std::size_t n_states() const { return n_states_; }
    std::size_t size() const { return points_.size(); }
    const Belief& operator[](std::size_t i) const { return points_[i]; }
    /// Integer coordinates k of point i.
    const std::vector<std::uint32_t>& counts(std::size_t i) const { return counts_[i]; }

private:
    std::size_t resolution_ = 0;
    std::size_t n_states_ = 0;
    std::vector<Belief> points_;
    std::vector<std::vector<std::uint32_t>> counts_;
};

/// C(n + d - 1, d - 1), saturating at UINT64_MAX.
std::uint64_t grid_point_count(std::size_t resolution, std::size_t n_states);

/// Throws CapExceeded when the grid would have more than `cap` points.
BeliefGrid build_grid(std::size_t resolution, std::size_t n_states, std::uint64_t cap = BeliefGrid::kDefaultCap);

/// Index of an L1-nearest grid point; ties go to the smallest index.
std::size_t nearest_grid(const Belief& pi, const BeliefGrid& grid);

/// CSV `index,p0,p1,...`.
void write_grid_csv(const BeliefGrid& grid, std::ostream& os);

/// CSV trajectory writer for `--trace`: `t,x,q,u,cost,p0,...`.
class TraceWriter {
public:
    TraceWriter(std::ostream& os, std::size_t n_states);
    void row(std::size_t t, StateIndex x, Symbol q, Control u, double cost, const Belief& pi);

private:
    std::ostream& os_;
};

} // namespace jcc
