#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "jcc/error.hpp"
#include "jcc/experiment.hpp"
#include "support/oracles.hpp"

using namespace jcc;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("jcc_test_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

std::vector<std::vector<std::string>> read_csv(const fs::path& p) {
    std::vector<std::vector<std::string>> rows;
    std::istringstream in(slurp(p));
    std::string line;
    while (std::getline(in, line)) {
        std::vector<std::string> cells;
        std::istringstream ls(line);
        std::string c;
        while (std::getline(ls, c, ',')) cells.push_back(c);
        rows.push_back(cells);
    }
    return rows;
}

// Header must match and every data cell must parse as a number.
void check_csv(const fs::path& p, const std::vector<std::string>& header) {
    const auto rows = read_csv(p);
    REQUIRE(!rows.empty());
    CHECK(rows[0] == header);
    for (std::size_t i = 1; i < rows.size(); ++i) {
        REQUIRE(rows[i].size() == header.size());
        for (const auto& c : rows[i]) {
            char* end = nullptr;
            std::strtod(c.c_str(), &end);
            CHECK(*end == '\0');
        }
    }
}

json small_config() {
    json j = model_to_json(oracle::model_a());
    j["sweep"] = {1, 3};
    j["seeds"] = {0, 5};
    j["iterations"] = 20000;
    j["horizon"] = 80;
    j["replications"] = 40;
    return j;
}

int run_cli(const std::string& args, std::string* err = nullptr) {
    const fs::path errfile = fs::temp_directory_path() / "jcc_cli_stderr.txt";
    const std::string cmd = std::string(JCC_CLI_PATH) + " " + args + " > /dev/null 2> " + errfile.string();
    const int status = std::system(cmd.c_str());
    if (err) *err = slurp(errfile);
    return WEXITSTATUS(status);
}

} // namespace

TEST_SUITE("experiment") {

TEST_CASE("config parsing") {
    const ExperimentConfig c = experiment_from_json(small_config(), ".");
    CHECK(c.sweep == std::vector<std::size_t>{1, 3});
    CHECK(c.seeds == std::vector<std::uint64_t>{0, 5});
    CHECK(c.scheme == Scheme::Kind::Quantized);
    CHECK(c.model.kernel == oracle::model_a().kernel);

    json j = small_config();
    j["itertions"] = 5;
    CHECK_THROWS_WITH_AS(experiment_from_json(j, "."), doctest::Contains("itertions"), ValidationError);
    j = small_config();
    j["scheme"] = "grid";
    CHECK_THROWS_AS(experiment_from_json(j, "."), ValidationError);
    j = small_config();
    j["sweep"] = {0};
    CHECK_THROWS_AS(experiment_from_json(j, "."), ValidationError);
    j = small_config();
    j["mu"] = {0.5, 0.5};
    CHECK_THROWS_AS(experiment_from_json(j, "."), ValidationError);
    j = small_config();
    j["seeds"] = json::array();
    CHECK_THROWS_AS(experiment_from_json(j, "."), ValidationError);
    j = small_config();
    j["init_state"] = 3;
    CHECK_THROWS_AS(experiment_from_json(j, "."), ValidationError);

    // model by path, relative to the config's directory
    json byref = {{"model", "model_only_B.json"}, {"scheme", "window"}, {"sweep", {1}}};
    const ExperimentConfig cb = experiment_from_json(byref, JCC_FIXTURE_DIR);
    CHECK(cb.model.kernel == oracle::model_b().kernel);
    CHECK(scheme_for(cb, 2) == Scheme::window(2, Belief::uniform(3)));
    byref["model"] = "missing.json";
    CHECK_THROWS_AS(experiment_from_json(byref, JCC_FIXTURE_DIR), ValidationError);

    const ExperimentConfig pa = load_experiment("paper_sim_A");
    CHECK(pa.sweep == std::vector<std::size_t>{1, 3, 5, 10, 15});
    CHECK(pa.iterations == 1000000);
    const ExperimentConfig pb = load_experiment("paper_sim_B");
    CHECK(pb.scheme == Scheme::Kind::Window);
    CHECK(pb.iterations == 100000);
    CHECK_THROWS_AS(load_experiment("paper_sim_Z"), ValidationError);

    json fq = small_config();
    fq["fixed_quantizer"] = {0, 1, 1};
    CHECK(action_space_for(experiment_from_json(fq, ".")).size() == 4);
}

TEST_CASE("learn writes one deterministic artifact set per cell") {
    const ExperimentConfig cfg = experiment_from_json(small_config(), ".");
    const fs::path d1 = scratch("learn1"), d2 = scratch("learn2");
    RunOptions o1{d1, std::nullopt, true, 1}, o2{d2, std::nullopt, true, 2};
    std::ostringstream log;
    CHECK(cmd_learn(cfg, o1, log) == kExitOk);
    CHECK(cmd_learn(cfg, o2, log) == kExitOk);
    for (const char* n : {"n1_s0", "n1_s5", "n3_s0", "n3_s5"}) {
        for (const std::string stem : {"qtable_", "policy_", "curve_", "trace_"}) {
            const std::string file = stem + n + (stem == "curve_" || stem == "trace_" ? ".csv" : ".json");
            REQUIRE(fs::exists(d1 / file));
            CHECK(slurp(d1 / file) == slurp(d2 / file));
        }
        check_csv(d1 / (std::string("curve_") + n + ".csv"), {"iteration", "max_q_change", "visited_states", "residual"});
        check_csv(d1 / (std::string("trace_") + n + ".csv"), {"t", "x", "q", "u", "cost", "p0", "p1", "p2"});
        const json q = json::parse(slurp(d1 / (std::string("qtable_") + n + ".json")));
        CHECK(q.contains("scheme"));
        CHECK(q.contains("model_hash"));
        for (const auto& e : q.at("entries")) {
            CHECK(e.contains("state_key"));
            CHECK(e.contains("action"));
            CHECK(e.at("q").get<double>() <= 5.0);
            CHECK(e.at("visits").get<std::uint64_t>() >= 1);
        }
    }
    // no temp files left behind
    for (const auto& e : fs::directory_iterator(d1)) CHECK(e.path().extension() != ".tmp");

    RunOptions single{scratch("learn3"), 5, false, 1};
    CHECK(cmd_learn(cfg, single, log) == kExitOk);
    CHECK(fs::exists(single.out_dir / "policy_n3_s5.json"));
    CHECK_FALSE(fs::exists(single.out_dir / "policy_n3_s0.json"));
    CHECK(slurp(single.out_dir / "qtable_n3_s5.json") == slurp(d1 / "qtable_n3_s5.json"));
}

TEST_CASE("evaluate") {
    const ExperimentConfig cfg = experiment_from_json(small_config(), ".");
    const fs::path d = scratch("eval");
    RunOptions o{d, std::nullopt, false, 1};
    std::ostringstream log;
    CHECK_THROWS_AS(cmd_evaluate(cfg, o, {}, log), ValidationError);
    cmd_learn(cfg, o, log);
    CHECK(cmd_evaluate(cfg, o, {}, log) == kExitOk);
    check_csv(d / "results.csv", {"sweep_value", "seed", "mean_cost", "stderr", "replications", "horizon"});
    const auto rows = read_csv(d / "results.csv");
    REQUIRE(rows.size() == 5);
    CHECK(rows[1][0] == "1");
    CHECK(rows[1][1] == "0");
    CHECK(rows[4][0] == "3");
    CHECK(rows[4][1] == "5");
    CHECK(rows[1][4] == "40");
    CHECK(rows[1][5] == "80");
    const std::string first = slurp(d / "results.csv");
    RunOptions par{d, std::nullopt, false, 3};
    cmd_evaluate(cfg, par, {}, log);
    CHECK(slurp(d / "results.csv") == first);

    // a policy trained on another model or scheme is rejected
    json other = small_config();
    other["beta"] = 0.7;
    CHECK_THROWS_AS(cmd_evaluate(experiment_from_json(other, "."), o, {d / "policy_n1_s0.json"}, log),
                    IncompatiblePolicy);
    json win = small_config();
    win["scheme"] = "window";
    CHECK_THROWS_AS(cmd_evaluate(experiment_from_json(win, "."), o, {d / "policy_n1_s0.json"}, log),
                    IncompatiblePolicy);
}

TEST_CASE("diagnose") {
    const fs::path d = scratch("diag");
    std::ostringstream log;
    RunOptions o{d, std::nullopt, false, 1};
    CHECK(cmd_diagnose(load_experiment("paper_sim_B"), o, log) == kExitOk);
    const std::string s = log.str();
    CHECK(s.find("delta_min=0.55\n") != std::string::npos);
    CHECK(s.find("u=0 delta=0.65") != std::string::npos);
    CHECK(s.find("satisfied") != std::string::npos);
    CHECK(s.find("ergodicity: ok") != std::string::npos);
    check_csv(d / "stability_delta.csv", {"u", "delta"});
    check_csv(d / "stability_bounds.csv", {"N", "loss_bound", "value_bound"});

    std::ostringstream la;
    cmd_diagnose(load_experiment("paper_sim_A"), o, la);
    CHECK(la.str().find("delta_min=0.3\n") != std::string::npos);
    CHECK(la.str().find("not guaranteed") != std::string::npos);

    std::ostringstream li;
    cmd_diagnose(load_experiment(JCC_FIXTURE_DIR "/identity.json"), o, li);
    CHECK(li.str().find("ergodicity: FAILED (") != std::string::npos);
}

TEST_CASE("value iterate") {
    const fs::path d = scratch("vi");
    std::ostringstream log;
    json j = small_config();
    j["sweep"] = {1, 5};
    j["vi_evaluate"] = true;
    RunOptions o{d, std::nullopt, false, 1};
    CHECK(cmd_value_iterate(experiment_from_json(j, "."), o, log) == kExitOk);
    check_csv(d / "value_n5.csv", {"state_key", "value", "greedy_action"});
    check_csv(d / "grid_n5.csv", {"index", "p0", "p1", "p2"});
    check_csv(d / "results_vi.csv", {"sweep_value", "seed", "mean_cost", "stderr", "replications", "horizon"});
    CHECK(read_csv(d / "value_n5.csv").size() == 22);
    CHECK(read_csv(d / "value_n1.csv").size() == 4);
    CHECK(policy_from_json(json::parse(slurp(d / "policy_vi_n5.json"))).size() == 21);

    const fs::path dz = scratch("vi_zero");
    RunOptions oz{dz, std::nullopt, false, 1};
    cmd_value_iterate(load_experiment(JCC_FIXTURE_DIR "/zero_cost.json"), oz, log);
    const auto vz = read_csv(dz / "value_n3.csv");
    REQUIRE(vz.size() == 11);
    for (std::size_t i = 1; i < vz.size(); ++i) CHECK(vz[i][1] == "0");
    const auto rz = read_csv(dz / "results_vi.csv");
    CHECK(rz[1][2] == "0");
    CHECK(rz[1][3] == "0");

    json w = small_config();
    w["scheme"] = "window";
    CHECK_THROWS_AS(cmd_value_iterate(experiment_from_json(w, "."), o, log), ValidationError);
}

TEST_CASE("error mapping") {
    std::ostringstream err;
    CHECK(report_error(ValidationError("x"), err) == kExitValidation);
    CHECK(report_error(IncompatiblePolicy("x"), err) == kExitValidation);
    CHECK(report_error(CapExceeded("x"), err) == kExitResourceCap);
    CHECK(report_error(std::runtime_error("x"), err) == kExitFailure);
    CHECK(err.str().rfind("error: x\n", 0) == 0);
}

TEST_CASE("command-line exit codes") {
    const fs::path d = scratch("cli");
    std::string err;
    CHECK(run_cli("learn --config " JCC_FIXTURE_DIR "/invalid_kernel.json --out " + d.string(), &err) == 2);
    CHECK(err.find("kernel[0][1] row sum") != std::string::npos);
    CHECK(run_cli("learn --config " JCC_FIXTURE_DIR "/too_many_actions.json --out " + d.string(), &err) == 3);
    CHECK(err.find("action space too large") != std::string::npos);
    CHECK(run_cli("evaluate --config paper_sim_A --out " + d.string(), &err) == 2);
    CHECK(run_cli("diagnose --config paper_sim_B --out " + d.string()) == 0);
    CHECK(run_cli("diagnose --config " JCC_FIXTURE_DIR "/identity.json --out " + d.string()) == 0);
    CHECK(run_cli("value-iterate --config " JCC_FIXTURE_DIR "/zero_cost.json --out " + d.string()) == 0);
    CHECK(run_cli("learn --config " JCC_FIXTURE_DIR "/zero_cost.json --seed 3 --jobs 2 --trace --out " +
                  d.string()) == 0);
    CHECK(fs::exists(d / "trace_n3_s3.csv"));
    CHECK(run_cli("evaluate --config " JCC_FIXTURE_DIR "/zero_cost.json --seed 3 --out " + d.string()) == 0);
    CHECK(run_cli("bogus") != 0);
}

}
