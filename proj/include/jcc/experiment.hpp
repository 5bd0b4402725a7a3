#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "jcc/belief_mdp.hpp"
#include "jcc/learning.hpp"
#include "jcc/model.hpp"
#include "jcc/oracle.hpp"

namespace jcc {

/// Exit codes of the command-line driver.
enum ExitCode : int {
    kExitOk = 0,
    kExitFailure = 1,
    kExitValidation = 2,
    kExitResourceCap = 3,
};

/// Everything one experiment file describes: the model plus the sweep protocol.
struct ExperimentConfig {
    ModelSpec model;
    Scheme::Kind scheme = Scheme::Kind::Quantized;
    /// Grid resolutions n or window lengths N.
    std::vector<std::size_t> sweep;
    /// Window prior; uniform when absent.
    std::optional<Belief> mu;
    /// Restricts the action set to this quantizer (fixed-channel POMDP).
    std::optional<Quantizer> fixed_quantizer;

    std::uint64_t iterations = 1000000;
    std::vector<std::uint64_t> seeds{0};
    double tolerance = 1e-9;
    std::uint64_t convergence_window = 10000;
    std::uint64_t checkpoint_every = 10000;
    CostMode cost_mode = CostMode::Effective;
    StateIndex init_state = 0;
    Control init_control = 0;
    std::uint64_t trace_steps = 1000;

    std::size_t horizon = 1000;
    std::size_t replications = 1000;

    /// value-iterate: resolutions (defaults to the sweep for the quantized scheme) and tolerance.
    std::vector<std::size_t> vi_resolutions;
    double vi_tolerance = 1e-8;
    bool vi_evaluate = false;

    /// diagnose: largest window length in the bound table.
    std::size_t max_window = 10;

    std::string name;
};

/// Parses an experiment. The model is either inline (the model keys at top level),
/// an object under `model`, or a path under `model` relative to `base_dir`.
ExperimentConfig experiment_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir);

/// Loads an experiment file. A bare preset name (`paper_sim_A`, `paper_sim_B`)
/// resolves to the copy shipped in the data directory.
ExperimentConfig load_experiment(const std::string& path_or_preset);

struct RunOptions {
    std::filesystem::path out_dir = ".";
    /// Replaces the config's seed list with this single seed.
    std::optional<std::uint64_t> seed;
    bool trace = false;
    int jobs = 1;
};

/// Seed of the Monte-Carlo evaluation paired with a training seed. Shared across sweep
/// values so that the cells of one seed see common random numbers.
std::uint64_t evaluation_seed(std::uint64_t training_seed);

ActionSpace action_space_for(const ExperimentConfig& cfg);
Scheme scheme_for(const ExperimentConfig& cfg, std::size_t sweep_value);
LearnConfig learn_config_for(const ExperimentConfig& cfg, std::size_t sweep_value, std::uint64_t seed);
EvalConfig eval_config_for(const ExperimentConfig& cfg, std::uint64_t training_seed);

/// Writes via a temporary file and rename.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);

int cmd_learn(const ExperimentConfig& cfg, const RunOptions& opts, std::ostream& log);
/// With no explicit policy files, evaluates every `policy_<tag>_s<seed>.json` of the sweep found in out_dir.
int cmd_evaluate(const ExperimentConfig& cfg, const RunOptions& opts,
                 const std::vector<std::filesystem::path>& policy_files, std::ostream& log);
int cmd_diagnose(const ExperimentConfig& cfg, const RunOptions& opts, std::ostream& log);
int cmd_value_iterate(const ExperimentConfig& cfg, const RunOptions& opts, std::ostream& log);

/// Maps an exception escaping a command to its exit code and message.
int report_error(const std::exception& e, std::ostream& err);

} // namespace jcc
