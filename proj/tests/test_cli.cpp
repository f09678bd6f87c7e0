#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "voltcast/chaos.hpp"
#include "voltcast/rng.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace fs = std::filesystem;
using namespace voltcast;
using nlohmann::json;

namespace {

struct CommandResult {
    int exit_code;
    std::string output;
};

std::string binary_path() {
    const char* env = std::getenv("VOLTCAST_BIN");
    REQUIRE_MESSAGE(env != nullptr, "VOLTCAST_BIN must point at the CLI binary");
    return env;
}

CommandResult run(const std::string& args) {
    const std::string command = binary_path() + " " + args + " 2>&1";
    std::array<char, 4096> buffer{};
    std::string output;
    FILE* pipe = popen(command.c_str(), "r");
    REQUIRE(pipe != nullptr);
    while (fgets(buffer.data(), buffer.size(), pipe) != nullptr) {
        output += buffer.data();
    }
    const int status = pclose(pipe);
    return {WEXITSTATUS(status), output};
}

std::string slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

fs::path work_dir() {
    static const fs::path dir = [] {
        fs::path d = fs::temp_directory_path() / "voltcast_cli_test";
        fs::remove_all(d);
        fs::create_directories(d);
        return d;
    }();
    return dir;
}

/// Short Henon-map trajectory file: next-step dynamics are exactly a
/// degree-2 Volterra model with two delays.
std::string write_henon(const fs::path& prefix) {
    chaos::Trajectory t;
    t.system = "henon-synthetic";
    t.dt = 1.0;
    t.lambda = 0.42;
    t.seed = 1;
    const int n = 600;
    t.points.resize(n, 1);
    double prev = 0.1, cur = 0.12;
    for (int i = 0; i < n; ++i) {
        t.points(i, 0) = cur;
        const double next = 1.0 - 1.4 * cur * cur + 0.3 * prev;
        prev = cur;
        cur = next;
    }
    t.mean = Eigen::VectorXd::Zero(1);
    t.std_dev = Eigen::VectorXd::Ones(1);
    chaos::save_trajectory(t, prefix.string());
    return prefix.string();
}

}  // namespace

TEST_CASE("generate writes the documented files deterministically") {
    const auto dir = work_dir();
    const std::string out1 = (dir / "lorenz_a").string();
    const std::string out2 = (dir / "lorenz_b").string();

    auto first = run("generate --system lorenz --n 2000 --seed 5 --out " + out1);
    REQUIRE_MESSAGE(first.exit_code == 0, first.output);
    auto second = run("generate --system lorenz --n 2000 --seed 5 --out " + out2);
    REQUIRE(second.exit_code == 0);

    // 2000 rows + header.
    const std::string csv = slurp(out1 + ".csv");
    const auto rows = std::count(csv.begin(), csv.end(), '\n');
    CHECK(rows == 2001);
    CHECK(csv.substr(0, 11) == "t,x1,x2,x3\n");

    CHECK(slurp(out1 + ".csv") == slurp(out2 + ".csv"));
    CHECK(slurp(out1 + ".json") == slurp(out2 + ".json"));

    const json sidecar = json::parse(slurp(out1 + ".json"));
    CHECK(sidecar.at("system") == "lorenz");
    CHECK(sidecar.at("n") == 2000);
}

TEST_CASE("generate rejects unknown systems with exit code 2") {
    const auto result = run("generate --system nosuch --n 100 --seed 1 --out " +
                            (work_dir() / "nosuch").string());
    CHECK(result.exit_code == 2);
    CHECK(result.output.find("unknown system") != std::string::npos);
}

TEST_CASE("fit on exactly representable dynamics reports a tiny residual") {
    const auto dir = work_dir();
    const std::string data = write_henon(dir / "henon");
    const std::string model_path = (dir / "henon_tn.json").string();

    const auto result = run("fit --model tn --data " + data +
                            " --max-delay 2 --degree 2 --n-warmup 0 --n-train 500 --out " +
                            model_path);
    REQUIRE_MESSAGE(result.exit_code == 0, result.output);

    const auto pos = result.output.find("training_residual ");
    REQUIRE(pos != std::string::npos);
    const double residual = std::stod(result.output.substr(pos + 18));
    CHECK(residual <= 1e-8);

    const json model = json::parse(slurp(model_path));
    CHECK(model.at("kind") == "tn");
    CHECK(model.at("config").at("max_delay") == 2);
}

TEST_CASE("fit esn smoke run reports a finite residual") {
    const auto dir = work_dir();
    const std::string data = write_henon(dir / "henon2");
    const auto result = run("fit --model esn --data " + data +
                            " --nr 50 --rho 0.9 --g 0.5 --eps 0.6 --lambda 1e-1"
                            " --n-warmup 50 --n-train 400 --out " +
                            (dir / "henon_esn.json").string());
    REQUIRE_MESSAGE(result.exit_code == 0, result.output);
    const auto pos = result.output.find("training_residual ");
    REQUIRE(pos != std::string::npos);
    const double residual = std::stod(result.output.substr(pos + 18));
    CHECK(std::isfinite(residual));
}

TEST_CASE("fit with a missing data file exits with code 2") {
    const auto result = run("fit --model tn --data /nonexistent/file --out /tmp/never.json");
    CHECK(result.exit_code == 2);
}

TEST_CASE("grid honors custom grid files and marks the selected row") {
    const auto dir = work_dir();
    const std::string data = (dir / "lorenz_grid").string();
    auto gen_result = run("generate --system lorenz --n 11000 --seed 7 --out " + data);
    REQUIRE_MESSAGE(gen_result.exit_code == 0, gen_result.output);

    const std::string grid_file = (dir / "grid.json").string();
    {
        std::ofstream out(grid_file);
        out << R"({"tn": {"delays": [1, 2], "degrees": [2]}})";
    }
    const std::string report = (dir / "tn_grid").string();
    const auto result = run("grid --model tn --data " + data + " --grid " + grid_file +
                            " --jobs 2 --out " + report);
    REQUIRE_MESSAGE(result.exit_code == 0, result.output);

    const std::string csv = slurp(report + ".csv");
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);  // header + 2 trials
    CHECK(csv.find(",1\n") != std::string::npos);          // one selected row

    // Deterministic rerun produces byte-identical reports.
    const std::string report2 = (dir / "tn_grid_rerun").string();
    const auto rerun = run("grid --model tn --data " + data + " --grid " + grid_file +
                           " --jobs 1 --out " + report2);
    REQUIRE(rerun.exit_code == 0);
    CHECK(slurp(report + ".csv") == slurp(report2 + ".csv"));
}

TEST_CASE("eval emits metrics with protocol metadata") {
    const auto dir = work_dir();
    const std::string data = (dir / "lorenz_eval").string();
    auto gen_result = run("generate --system lorenz --n 11000 --seed 8 --out " + data);
    REQUIRE_MESSAGE(gen_result.exit_code == 0, gen_result.output);

    // Perfect-replay stub model file.
    const std::string replay_path = (dir / "replay.json").string();
    {
        std::ofstream out(replay_path);
        out << R"({"schema": "voltcast.model/1", "kind": "replay"})";
    }
    const std::string report = (dir / "replay_eval").string();
    const auto result =
        run("eval --model " + replay_path + " --data " + data + " --n-ics 4 --out " + report);
    REQUIRE_MESSAGE(result.exit_code == 0, result.output);

    const json j = json::parse(slurp(report + ".json"));
    CHECK(j.at("metrics").at("smape").at("mean").get<double>() == 0.0);
    CHECK(j.at("metrics").at("wasserstein").get<double>() == 0.0);
    CHECK(j.at("protocol").at("delta").get<double>() == 0.2);
    CHECK(j.at("protocol").at("n_pred").get<int>() == 4000);
    CHECK(j.at("protocol").at("n_ini").get<int>() == 1000);
    CHECK(j.at("protocol").contains("lambda"));
    CHECK(j.at("protocol").contains("dt"));

    const std::string csv = slurp(report + ".csv");
    CHECK(csv.find("task,model,smape_mean") == 0);

    // Deterministic rerun.
    const std::string report2 = (dir / "replay_eval2").string();
    const auto rerun =
        run("eval --model " + replay_path + " --data " + data + " --n-ics 4 --out " + report2);
    REQUIRE(rerun.exit_code == 0);
    CHECK(slurp(report + ".json") == slurp(report2 + ".json"));
    CHECK(slurp(report + ".csv") == slurp(report2 + ".csv"));
}

TEST_CASE("eval rejects dimension mismatches with exit code 2") {
    const auto dir = work_dir();
    const std::string data = (dir / "lorenz_eval").string();  // P = 3, from previous case
    REQUIRE(fs::exists(data + ".csv"));

    // A P=4 TN model file.
    const std::string model_path = (dir / "p4_model.json").string();
    {
        json model;
        model["schema"] = "voltcast.model/1";
        model["kind"] = "tn";
        model["config"] = {{"max_delay", 1}, {"max_degree", 2}, {"input_dim", 4}, {"output_dim", 4}};
        const int r = 15;  // C(4+2, 2)
        std::vector<std::vector<double>> coeffs(r, std::vector<double>(4, 0.0));
        model["coefficients"] = coeffs;
        std::ofstream out(model_path);
        out << model.dump();
    }
    const auto result = run("eval --model " + model_path + " --data " + data + " --out " +
                            (dir / "mismatch").string());
    CHECK(result.exit_code == 2);
    CHECK(result.output.find("dimension") != std::string::npos);
}

TEST_CASE("rank-study emits the table and singular-value profiles") {
    const auto dir = work_dir();
    const std::string prefix = (dir / "rank_study").string();
    const auto result = run("rank-study --out " + prefix);
    REQUIRE_MESSAGE(result.exit_code == 0, result.output);

    const std::string table = slurp(prefix + "_table.csv");
    CHECK(std::count(table.begin(), table.end(), '\n') == 5);  // header + 4 rows
    CHECK(table.find("input,n,r,rank_u,rank_uut,s") == 0);
    CHECK(table.find("uncorrelated,50,70,50,50,") != std::string::npos);
    CHECK(table.find("uncorrelated,100,70,70,70,") != std::string::npos);

    const std::string svals = slurp(prefix + "_svals.csv");
    std::istringstream in(svals);
    std::string header;
    std::getline(in, header);
    CHECK(std::count(header.begin(), header.end(), ',') == 3);  // 4 columns

    // Deterministic rerun.
    const std::string prefix2 = (dir / "rank_study2").string();
    REQUIRE(run("rank-study --out " + prefix2).exit_code == 0);
    CHECK(slurp(prefix + "_table.csv") == slurp(prefix2 + "_table.csv"));
    CHECK(slurp(prefix + "_svals.csv") == slurp(prefix2 + "_svals.csv"));
}

TEST_CASE("usage errors exit with code 2") {
    CHECK(run("nosuchcommand").exit_code == 2);
    CHECK(run("generate").exit_code == 2);  // missing required --system
}

TEST_CASE("emitted trajectory CSVs round-trip through the own parser") {
    const auto dir = work_dir();
    const std::string prefix = (dir / "lorenz_rt").string();
    REQUIRE(run("generate --system rossler --n 1500 --seed 3 --out " + prefix).exit_code == 0);
    const auto loaded = chaos::load_trajectory(prefix);
    CHECK(loaded.length() == 1500);
    CHECK(loaded.dim() == 3);
    CHECK(loaded.system == "rossler");
    CHECK(loaded.lambda > 0.0);
}
