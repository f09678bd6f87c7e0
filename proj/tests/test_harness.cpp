#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "voltcast/harness.hpp"
#include "voltcast/metrics.hpp"
#include "voltcast/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <vector>

using namespace voltcast;
using harness::SplitSpec;
using Index = harness::Index;

namespace {

const chaos::Trajectory& lorenz_trajectory() {
    static const chaos::Trajectory t =
        chaos::generate_trajectory(chaos::system_by_name("lorenz"), 11000, 1);
    return t;
}

/// Grid-searched Volterra hyperparameters for the shared Lorenz trajectory.
const volterra::VolterraModel& lorenz_tn_model() {
    static const volterra::VolterraModel model = [] {
        const auto grid =
            harness::grid_search_tn(lorenz_trajectory(), harness::TnGrid{}, SplitSpec{}, 2);
        const auto& best = grid.table[grid.best_index].hyperparameters;
        return harness::train_tn(lorenz_trajectory(), SplitSpec{},
                                 best.at("max_delay").get<Index>(),
                                 best.at("max_degree").get<Index>());
    }();
    return model;
}

}  // namespace

TEST_CASE("split produces contiguous segments") {
    const auto& trajectory = lorenz_trajectory();
    const auto parts = harness::split(trajectory, SplitSpec{});
    CHECK(parts.warmup.rows() == 1000);
    CHECK(parts.train.rows() == 5000);
    CHECK(parts.val.rows() == 5000);

    Eigen::MatrixXd rebuilt(11000, 3);
    rebuilt << parts.warmup, parts.train, parts.val;
    CHECK((rebuilt - trajectory.points.topRows(11000)).cwiseAbs().maxCoeff() == 0.0);

    chaos::Trajectory shorty = trajectory;
    shorty.points = trajectory.points.topRows(6000);
    CHECK_THROWS_AS(harness::split(shorty, SplitSpec{}), std::invalid_argument);
}

TEST_CASE("select_best takes the minimum and respects injected winners") {
    std::vector<harness::TrialResult> table(4);
    for (std::size_t i = 0; i < table.size(); ++i) {
        table[i].family = "esn";
        table[i].validation_score = 1.0 + static_cast<double>(i);
    }
    CHECK(harness::select_best(table) == 0);

    table[2].validation_score = -1.0;  // synthetic winner below all others
    CHECK(harness::select_best(table) == 2);

    table[0].validation_score = std::numeric_limits<double>::infinity();
    table[0].divergent = true;
    CHECK(harness::select_best(table) == 2);

    for (auto& t : table) {
        t.divergent = true;
        t.validation_score = std::numeric_limits<double>::infinity();
    }
    CHECK_THROWS_AS(harness::select_best(table), std::runtime_error);
}

TEST_CASE("tn tie-break prefers the cheapest model") {
    std::vector<harness::TrialResult> table(2);
    table[0].family = "tn";
    table[0].hyperparameters = {{"max_delay", 4}, {"max_degree", 4}, {"r", 4845}};
    table[0].validation_score = 0.5;
    table[1].family = "tn";
    table[1].hyperparameters = {{"max_delay", 1}, {"max_degree", 2}, {"r", 10}};
    table[1].validation_score = 0.5;
    CHECK(harness::select_best(table) == 1);
}

TEST_CASE("tn grid has exactly 12 combos and selects deterministically") {
    const auto& trajectory = lorenz_trajectory();
    // Trimmed grid for runtime; the full 12-combo layout is checked by count.
    harness::TnGrid full_grid;
    CHECK(full_grid.delays.size() * full_grid.degrees.size() == 12);

    harness::TnGrid small;
    small.delays = {1, 2};
    small.degrees = {2};
    const auto a = harness::grid_search_tn(trajectory, small, SplitSpec{}, 2);
    const auto b = harness::grid_search_tn(trajectory, small, SplitSpec{}, 1);
    REQUIRE(a.table.size() == 2);
    CHECK(a.best_index == b.best_index);
    for (std::size_t i = 0; i < a.table.size(); ++i) {
        CHECK(a.table[i].validation_score == b.table[i].validation_score);
    }

    // Independent re-evaluation of the selected combo reproduces its score.
    const auto& best = a.table[a.best_index];
    const auto model = harness::train_tn(trajectory, SplitSpec{},
                                         best.hyperparameters.at("max_delay").get<Index>(),
                                         best.hyperparameters.at("max_degree").get<Index>());
    const harness::TnForecaster forecaster(model);
    const auto parts = harness::split(trajectory, SplitSpec{});
    bool diverged = false;
    const Eigen::MatrixXd rollout = harness::rollout_checked(
        forecaster, parts.train.bottomRows(model.config.max_delay), 6000, 5000, diverged);
    REQUIRE_FALSE(diverged);
    CHECK(metrics::wasserstein_score(rollout, parts.val) ==
          doctest::Approx(best.validation_score).epsilon(1e-12));
}

TEST_CASE("esn grid groups share the reservoir and stay deterministic") {
    const auto& trajectory = lorenz_trajectory();
    harness::EsnGrid grid;
    grid.reservoir_size = 60;
    grid.spectral_radii = {0.9};
    grid.input_strengths = {0.4};
    grid.leak_rates = {0.7};
    grid.ridge_lambdas = {1e-7, 1e-4};
    const auto a = harness::grid_search_esn(trajectory, grid, SplitSpec{}, 1, 2);
    const auto b = harness::grid_search_esn(trajectory, grid, SplitSpec{}, 1, 1);
    REQUIRE(a.table.size() == 2);
    CHECK(a.best_index == b.best_index);
    for (std::size_t i = 0; i < a.table.size(); ++i) {
        CHECK(a.table[i].validation_score == b.table[i].validation_score);
    }

    // Selection equals a fresh argmin over the emitted table.
    std::size_t argmin = 0;
    for (std::size_t i = 1; i < a.table.size(); ++i) {
        if (a.table[i].validation_score < a.table[argmin].validation_score) {
            argmin = i;
        }
    }
    CHECK(argmin == a.best_index);

    // A from-scratch single-config run lands on the same attractor quality.
    // Chaotic rollouts amplify rounding, so this is an order-of-magnitude
    // consistency check, not bit equality.
    const auto& chosen = a.table[a.best_index];
    esn::EsnConfig config;
    config.reservoir_size = 60;
    config.spectral_radius = chosen.hyperparameters.at("spectral_radius").get<double>();
    config.input_strength = chosen.hyperparameters.at("input_strength").get<double>();
    config.leak_rate = chosen.hyperparameters.at("leak_rate").get<double>();
    config.ridge_lambda = chosen.hyperparameters.at("ridge_lambda").get<double>();
    config.seed = 1;
    const auto model = harness::train_esn(trajectory, SplitSpec{}, config);

    const auto parts = harness::split(trajectory, SplitSpec{});
    Eigen::MatrixXd series(5999, 3);
    series << parts.warmup, parts.train.topRows(4999);
    const Eigen::MatrixXd states = esn::drive(model, series, 1000, 4999);
    Eigen::VectorXd state = states.row(states.rows() - 1);
    state = esn::esn_step(model, state, parts.train.row(4999));
    const Eigen::MatrixXd rollout = esn::predict_closed_loop(model, state, 5000);
    REQUIRE(rollout.allFinite());
    const double manual = metrics::wasserstein_score(rollout, parts.val);
    CHECK(manual <= 1000.0 * chosen.validation_score);
    CHECK(chosen.validation_score <= 1000.0 * manual);
}

TEST_CASE("replay forecaster scores perfectly") {
    const auto& trajectory = lorenz_trajectory();
    const harness::ReplayForecaster replay(trajectory.points);

    harness::ShortTermParams params;
    params.n_ics = 5;
    const auto stats = harness::evaluate_short_term(replay, trajectory, SplitSpec{}, params);
    CHECK(stats.smape_mean == 0.0);
    CHECK(stats.smape_stderr == 0.0);
    CHECK(stats.censored == 5);
    CHECK(stats.vpt_mean ==
          doctest::Approx(trajectory.lambda * trajectory.dt * 4000.0).epsilon(1e-12));

    const auto climate = harness::evaluate_climate(replay, trajectory, SplitSpec{});
    CHECK_FALSE(climate.divergent);
    CHECK(climate.score == doctest::Approx(0.0).epsilon(1e-14));
}

TEST_CASE("single initial condition has zero standard error") {
    const auto& trajectory = lorenz_trajectory();
    const harness::ReplayForecaster replay(trajectory.points);
    harness::ShortTermParams params;
    params.n_ics = 1;
    const auto stats = harness::evaluate_short_term(replay, trajectory, SplitSpec{}, params);
    CHECK(stats.smape_stderr == 0.0);
    CHECK(stats.vpt_stderr == 0.0);
}

TEST_CASE("smape horizon follows the Lyapunov time") {
    const auto& trajectory = lorenz_trajectory();
    const harness::ReplayForecaster replay(trajectory.points);
    harness::ShortTermParams params;
    params.n_ics = 2;
    const auto stats = harness::evaluate_short_term(replay, trajectory, SplitSpec{}, params);
    CHECK(stats.smape_horizon ==
          static_cast<Index>(std::llround(1.0 / (trajectory.lambda * trajectory.dt))));
}

TEST_CASE("trained TN forecaster reproduces Lorenz short-term behavior") {
    const auto& trajectory = lorenz_trajectory();
    const auto& model = lorenz_tn_model();
    const harness::TnForecaster forecaster(model);

    harness::ShortTermParams params;
    params.n_ics = 8;
    const auto stats = harness::evaluate_short_term(forecaster, trajectory, SplitSpec{}, params);
    CHECK(stats.vpt_mean > 0.5);
    CHECK(stats.smape_mean < 100.0);

    // Climate: the rollout stays on the attractor (bounded by 1.5x the
    // training box) for the whole 5000-step window.
    const auto parts = harness::split(trajectory, SplitSpec{});
    bool diverged = false;
    const Eigen::MatrixXd rollout = harness::rollout_checked(
        forecaster, parts.train.bottomRows(model.config.max_delay), 6000, 5000, diverged);
    REQUIRE_FALSE(diverged);
    const double train_box = parts.train.cwiseAbs().maxCoeff();
    CHECK(rollout.cwiseAbs().maxCoeff() <= 1.5 * train_box);

    const auto climate = harness::evaluate_climate(forecaster, trajectory, SplitSpec{});
    CHECK_FALSE(climate.divergent);
    CHECK(std::isfinite(climate.score));
}

TEST_CASE("ESN forecaster achieves positive VPT on Lorenz") {
    const auto& trajectory = lorenz_trajectory();
    esn::EsnConfig config;
    config.reservoir_size = 200;
    config.spectral_radius = 0.9;
    config.input_strength = 0.4;
    config.leak_rate = 0.7;
    config.ridge_lambda = 1e-7;
    config.seed = 1;
    const auto model = harness::train_esn(trajectory, SplitSpec{}, config);
    const harness::EsnForecaster forecaster(model, 1000);
    harness::ShortTermParams params;
    params.n_ics = 5;
    const auto stats = harness::evaluate_short_term(forecaster, trajectory, SplitSpec{}, params);
    CHECK(stats.vpt_mean > 0.0);
}

TEST_CASE("divergent rollouts are flagged with infinity") {
    const auto& trajectory = lorenz_trajectory();
    // An unstable hand-built model: strong positive feedback on the newest
    // state explodes in closed loop.
    volterra::VolterraConfig config;
    config.max_delay = 1;
    config.max_degree = 2;
    config.input_dim = 3;
    config.output_dim = 3;
    volterra::VolterraModel model;
    model.config = config;
    model.basis = volterra::enumerate_monomials(config.extended_dim(), config.max_degree);
    model.coefficients = Eigen::MatrixXd::Zero(model.basis.size(), 3);
    for (Index j = 0; j < model.basis.size(); ++j) {
        const auto& tuple = model.basis.entries[static_cast<std::size_t>(j)];
        if (tuple == std::vector<tensor::Index>{2, 2}) {
            model.coefficients(j, 0) = 50.0;
            model.coefficients(j, 1) = 50.0;
            model.coefficients(j, 2) = 50.0;
        }
    }
    const harness::TnForecaster forecaster(model);
    const auto climate = harness::evaluate_climate(forecaster, trajectory, SplitSpec{});
    CHECK(climate.divergent);
    CHECK(std::isinf(climate.score));
    CHECK(climate.score > 0.0);
}

TEST_CASE("white-noise rollout scores worse than a trained model") {
    const auto& trajectory = lorenz_trajectory();

    class NoiseForecaster : public harness::Forecaster {
    public:
        Index dim() const override { return 3; }
        Index warmup_length() const override { return 1; }
        Eigen::MatrixXd forecast(const Eigen::MatrixXd&, Index, Index steps) const override {
            auto gen = rng::make_engine(123);
            Eigen::MatrixXd out(steps, 3);
            for (Index i = 0; i < steps; ++i) {
                for (int j = 0; j < 3; ++j) {
                    out(i, j) = rng::uniform_pm1(gen);
                }
            }
            return out;
        }
    };

    const harness::TnForecaster trained(lorenz_tn_model());
    const NoiseForecaster noise;
    const double trained_score =
        harness::evaluate_climate(trained, trajectory, SplitSpec{}).score;
    const double noise_score = harness::evaluate_climate(noise, trajectory, SplitSpec{}).score;
    CHECK(noise_score > trained_score);
}

TEST_CASE("mean and standard error aggregation") {
    const auto stats = harness::mean_stderr({1.0, 2.0, 3.0, 4.0});
    CHECK(stats.mean == doctest::Approx(2.5));
    // sample std = sqrt(5/3), stderr = that / 2
    CHECK(stats.stderr_ == doctest::Approx(std::sqrt(5.0 / 3.0) / 2.0).epsilon(1e-12));
    CHECK(harness::mean_stderr({7.0}).stderr_ == 0.0);
}

TEST_CASE("dropping the worst initial condition cannot raise the mean") {
    auto gen = rng::make_engine(9);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> values(12);
        for (auto& v : values) {
            v = 200.0 * rng::uniform01(gen);
        }
        const double full_mean = harness::mean_stderr(values).mean;
        std::vector<double> trimmed = values;
        trimmed.erase(std::max_element(trimmed.begin(), trimmed.end()));
        CHECK(harness::mean_stderr(trimmed).mean <= full_mean + 1e-12);
    }
}

TEST_CASE("training time is the median of the repeats") {
    int calls = 0;
    const double median = harness::time_training([&]() { ++calls; }, 5);
    CHECK(calls == 5);
    CHECK(median >= 0.0);
    CHECK_THROWS_AS(harness::time_training([]() {}, 0), std::invalid_argument);
}

TEST_CASE("esn fit timing has a narrow spread") {
    const auto& trajectory = lorenz_trajectory();
    esn::EsnConfig config;
    config.reservoir_size = 500;
    config.spectral_radius = 0.9;
    config.input_strength = 0.4;
    config.leak_rate = 0.7;
    config.ridge_lambda = 1e-7;
    config.seed = 1;

    esn::EsnModel model;
    model.config = config;
    model.input_dim = trajectory.dim();
    esn::init_reservoir(config, model.input_dim, model.reservoir, model.input_map);
    const auto parts = harness::split(trajectory, SplitSpec{});
    Eigen::MatrixXd series(5999, 3);
    series << parts.warmup, parts.train.topRows(4999);
    const Eigen::MatrixXd targets = parts.train.middleRows(1, 4999);

    std::vector<double> samples;
    for (int rep = 0; rep < 5; ++rep) {
        samples.push_back(harness::time_training(
            [&]() {
                const Eigen::MatrixXd states = esn::drive(model, series, 1000, 4999);
                esn::fit_ridge(states, targets, config.ridge_lambda, model.readout, model.offset);
            },
            1));
    }
    std::sort(samples.begin(), samples.end());
    const double median = samples[2];
    CHECK(samples.front() >= 0.5 * median);
    CHECK(samples.back() <= 1.5 * median);
}

TEST_CASE("tn training time grows with the degree") {
    const auto& trajectory = lorenz_trajectory();
    const auto cheap = harness::time_training(
        [&]() { harness::train_tn(trajectory, SplitSpec{}, 2, 2); }, 3);
    const auto costly = harness::time_training(
        [&]() { harness::train_tn(trajectory, SplitSpec{}, 2, 4); }, 3);
    CHECK(costly > cheap);
}

TEST_CASE("two seeds share attractor statistics") {
    const auto a = chaos::generate_trajectory(chaos::system_by_name("lorenz"), 6000, 1);
    const auto b = chaos::generate_trajectory(chaos::system_by_name("lorenz"), 6000, 2);
    const auto r = chaos::generate_trajectory(chaos::system_by_name("rossler"), 6000, 1);
    const double same_system =
        metrics::wasserstein_score(a.points.topRows(5000), b.points.topRows(5000));
    const double cross_system =
        metrics::wasserstein_score(a.points.topRows(5000), r.points.topRows(5000));
    CHECK(same_system <= 10.0 * cross_system);
}

TEST_CASE("rank/symmetry study reproduces the rank table") {
    const auto result = harness::rank_symmetry_study({});
    REQUIRE(result.rows.size() == 4);
    REQUIRE(result.singular_values.size() == 4);

    for (const auto& row : result.rows) {
        CHECK(row.r == 70);
    }
    // Row order: (uncorrelated, correlated) x (50, 100).
    CHECK(result.rows[0].input == "uncorrelated");
    CHECK(result.rows[0].n == 50);
    CHECK(result.rows[0].rank_u == 50);
    CHECK(result.rows[0].rank_uut == 50);
    CHECK(result.rows[0].symmetry <= 1e-8);

    CHECK(result.rows[1].input == "correlated");
    CHECK(result.rows[1].rank_u < 50);

    CHECK(result.rows[2].n == 100);
    CHECK(result.rows[2].rank_u == 70);
    CHECK(result.rows[2].rank_uut == 70);
    CHECK(result.rows[2].symmetry <= 1e-8);

    CHECK(result.rows[3].input == "correlated");
    CHECK(result.rows[3].rank_u < 70);
    CHECK(result.rows[3].symmetry > result.rows[2].symmetry * 1e3);
}

TEST_CASE("correlated input signal matches its formula") {
    const double expect =
        0.5 * (1.0 + std::sin(2.0 * std::numbers::pi * 7.0 * 2.11 / 100.0) *
                         std::sin(2.0 * std::numbers::pi * 7.0 * 3.73 / 100.0) *
                         std::sin(2.0 * std::numbers::pi * 7.0 * 4.11 / 100.0));
    CHECK(harness::correlated_input(7) == doctest::Approx(expect).epsilon(1e-15));
}

TEST_CASE("grid report serialization marks the selected row") {
    harness::GridSearchResult result;
    result.table.resize(2);
    result.table[0].family = "tn";
    result.table[0].hyperparameters = {{"max_delay", 1}, {"max_degree", 2}, {"r", 10}};
    result.table[0].validation_score = 0.25;
    result.table[1].family = "tn";
    result.table[1].hyperparameters = {{"max_delay", 2}, {"max_degree", 2}, {"r", 28}};
    result.table[1].validation_score = std::numeric_limits<double>::infinity();
    result.table[1].divergent = true;
    result.best_index = 0;

    const std::string csv = harness::grid_report_csv(result);
    CHECK(csv.find(",0.25,0,1\n") != std::string::npos);
    CHECK(csv.find("inf,1,0") != std::string::npos);

    const auto j = harness::grid_report_json(result, {{"seed", 1}});
    CHECK(j.at("trials").size() == 2);
    CHECK(j.at("trials").at(0).at("selected").get<bool>());
    CHECK(j.at("best_index").get<std::size_t>() == 0);
}
