#include "jcc/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "jcc/error.hpp"

namespace jcc {

namespace {

constexpr double kRowTolerance = 1e-12;

std::uint64_t checked_pow(std::uint64_t base, std::uint64_t exp, std::uint64_t cap) {
    std::uint64_t r = 1;
    for (std::uint64_t i = 0; i < exp; ++i) {
        if (base != 0 && r > cap / base) return cap + 1;
        r *= base;
    }
    return r;
}

std::string fmt_double(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

} // namespace

double ModelSpec::cost_sup() const {
    double m = 0.0;
    for (double c : cost) m = std::max(m, c);
    return m;
}

std::vector<std::string> validate_model(const ModelSpec& spec) {
    std::vector<std::string> out;
    if (spec.n_states == 0) out.push_back("n_states must be positive");
    if (spec.n_controls == 0) out.push_back("n_controls must be positive");
    if (spec.n_symbols == 0) out.push_back("n_symbols must be positive");
    if (!(spec.beta > 0.0 && spec.beta < 1.0)) {
        out.push_back("beta not in (0,1): " + fmt_double(spec.beta));
    }
    const std::size_t nk = spec.n_controls * spec.n_states * spec.n_states;
    if (spec.kernel.size() != nk) {
        out.push_back("kernel has " + std::to_string(spec.kernel.size()) + " entries, expected " +
                      std::to_string(nk));
    } else {
        for (Control u = 0; u < spec.n_controls; ++u) {
            for (StateIndex x = 0; x < spec.n_states; ++x) {
                double sum = 0.0;
                for (StateIndex y = 0; y < spec.n_states; ++y) {
                    const double p = spec.p(x, u, y);
                    if (!std::isfinite(p) || p < 0.0) {
                        out.push_back("kernel[" + std::to_string(u) + "][" + std::to_string(x) + "][" +
                                      std::to_string(y) + "] invalid probability " + fmt_double(p));
                    }
                    sum += p;
                }
                if (std::abs(sum - 1.0) > kRowTolerance) {
                    out.push_back("kernel[" + std::to_string(u) + "][" + std::to_string(x) + "] row sum " +
                                  fmt_double(sum));
                }
            }
        }
    }
    const std::size_t nc = spec.n_states * spec.n_controls;
    if (spec.cost.size() != nc) {
        out.push_back("cost has " + std::to_string(spec.cost.size()) + " entries, expected " +
                      std::to_string(nc));
    } else {
        for (StateIndex x = 0; x < spec.n_states; ++x) {
            for (Control u = 0; u < spec.n_controls; ++u) {
                const double c = spec.c(x, u);
                if (!std::isfinite(c) || c < 0.0) {
                    out.push_back("cost[" + std::to_string(x) + "][" + std::to_string(u) + "] invalid " +
                                  fmt_double(c));
                }
            }
        }
    }
    return out;
}

ModelSpec model_from_json(const nlohmann::json& j) {
    ModelSpec spec;
    try {
        spec.n_states = j.at("n_states").get<std::size_t>();
        spec.n_controls = j.at("n_controls").get<std::size_t>();
        spec.n_symbols = j.at("n_symbols").get<std::size_t>();
        spec.beta = j.at("beta").get<double>();
        const auto& k = j.at("kernel");
        if (k.size() != spec.n_controls) throw ValidationError("kernel: expected one matrix per control");
        for (std::size_t u = 0; u < k.size(); ++u) {
            if (k[u].size() != spec.n_states) {
                throw ValidationError("kernel[" + std::to_string(u) + "]: expected n_states rows");
            }
            for (std::size_t x = 0; x < k[u].size(); ++x) {
                if (k[u][x].size() != spec.n_states) {
                    throw ValidationError("kernel[" + std::to_string(u) + "][" + std::to_string(x) +
                                          "]: expected n_states entries");
                }
                for (const auto& v : k[u][x]) spec.kernel.push_back(v.get<double>());
            }
        }
        const auto& c = j.at("cost");
        if (c.size() != spec.n_states) throw ValidationError("cost: expected one row per state");
        for (std::size_t x = 0; x < c.size(); ++x) {
            if (c[x].size() != spec.n_controls) {
                throw ValidationError("cost[" + std::to_string(x) + "]: expected n_controls entries");
            }
            for (const auto& v : c[x]) spec.cost.push_back(v.get<double>());
        }
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("model: ") + e.what());
    }
    const auto violations = validate_model(spec);
    if (!violations.empty()) {
        std::string msg = "invalid model:";
        for (const auto& v : violations) msg += "\n  " + v;
        throw ValidationError(msg);
    }
    return spec;
}

nlohmann::json model_to_json(const ModelSpec& spec) {
    nlohmann::json kernel = nlohmann::json::array();
    for (Control u = 0; u < spec.n_controls; ++u) {
        nlohmann::json m = nlohmann::json::array();
        for (StateIndex x = 0; x < spec.n_states; ++x) {
            const auto r = spec.row(x, u);
            m.push_back(std::vector<double>(r.begin(), r.end()));
        }
        kernel.push_back(std::move(m));
    }
    nlohmann::json cost = nlohmann::json::array();
    for (StateIndex x = 0; x < spec.n_states; ++x) {
        cost.push_back(std::vector<double>(spec.cost.begin() + x * spec.n_controls,
                                           spec.cost.begin() + (x + 1) * spec.n_controls));
    }
    return {{"n_states", spec.n_states}, {"n_controls", spec.n_controls}, {"n_symbols", spec.n_symbols},
            {"beta", spec.beta},         {"kernel", kernel},            {"cost", cost}};
}

ModelSpec load_model(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open model file " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(path.string() + ": " + e.what());
    }
    return model_from_json(j);
}

std::uint64_t model_hash(const ModelSpec& spec) {
    const std::string s = model_to_json(spec).dump();
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : s) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::vector<StateIndex> Quantizer::preimage(Symbol q) const {
    std::vector<StateIndex> out;
    for (StateIndex x = 0; x < map.size(); ++x) {
        if (map[x] == q) out.push_back(x);
    }
    return out;
}

std::uint64_t ActionSpace::full_count(const ModelSpec& spec) {
    constexpr std::uint64_t big = std::numeric_limits<std::uint64_t>::max() / 2;
    const std::uint64_t nq = checked_pow(spec.n_symbols, spec.n_states, big);
    const std::uint64_t ng = checked_pow(spec.n_controls, spec.n_symbols, big);
    if (nq > big || ng > big || (ng != 0 && nq > big / ng)) return big + 1;
    return nq * ng;
}

JointAction ActionSpace::decode(const ModelSpec& spec, std::uint64_t canonical_index) {
    const std::uint64_t ng = checked_pow(spec.n_controls, spec.n_symbols, UINT64_MAX);
    std::uint64_t qrank = canonical_index / ng;
    std::uint64_t grank = canonical_index % ng;
    JointAction a;
    a.quantizer.map.assign(spec.n_states, 0);
    a.control.map.assign(spec.n_symbols, 0);
    for (std::size_t i = spec.n_states; i-- > 0;) {
        a.quantizer.map[i] = static_cast<Symbol>(qrank % spec.n_symbols);
        qrank /= spec.n_symbols;
    }
    for (std::size_t i = spec.n_symbols; i-- > 0;) {
        a.control.map[i] = static_cast<Control>(grank % spec.n_controls);
        grank /= spec.n_controls;
    }
    return a;
}

std::uint64_t ActionSpace::encode(const ModelSpec& spec, const JointAction& a) {
    std::uint64_t qrank = 0;
    for (Symbol q : a.quantizer.map) qrank = qrank * spec.n_symbols + q;
    std::uint64_t grank = 0;
    for (Control u : a.control.map) grank = grank * spec.n_controls + u;
    return qrank * checked_pow(spec.n_controls, spec.n_symbols, UINT64_MAX) + grank;
}

ActionSpace ActionSpace::enumerate(const ModelSpec& spec, std::uint64_t cap) {
    const std::uint64_t n = full_count(spec);
    if (n > cap) {
        throw CapExceeded("action space too large: " + std::to_string(n) + " > cap " + std::to_string(cap));
    }
    ActionSpace s;
    s.actions_.reserve(n);
    s.canonical_.reserve(n);
    for (std::uint64_t i = 0; i < n; ++i) {
        s.actions_.push_back(decode(spec, i));
        s.canonical_.push_back(i);
    }
    return s;
}

ActionSpace ActionSpace::with_fixed_quantizer(const ModelSpec& spec, const Quantizer& fixed) {
    if (fixed.map.size() != spec.n_states) throw ValidationError("fixed quantizer has wrong length");
    for (Symbol q : fixed.map) {
        if (q >= spec.n_symbols) throw ValidationError("fixed quantizer symbol out of range");
    }
    const std::uint64_t ng = checked_pow(spec.n_controls, spec.n_symbols, ActionSpace::kDefaultCap);
    if (ng > ActionSpace::kDefaultCap) throw CapExceeded("action space too large");
    ActionSpace s;
    JointAction probe{fixed, ControlMap{std::vector<Control>(spec.n_symbols, 0)}};
    const std::uint64_t base = encode(spec, probe);
    for (std::uint64_t g = 0; g < ng; ++g) {
        s.actions_.push_back(decode(spec, base + g));
        s.canonical_.push_back(base + g);
    }
    return s;
}

StateIndex sample_next_state(const ModelSpec& spec, StateIndex x, Control u, Rng& rng) {
    return sample_discrete(spec.row(x, u), rng);
}

} // namespace jcc
