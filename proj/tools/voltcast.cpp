// Command-line front end: trajectory generation, model fitting, grid
// search, evaluation and the rank/symmetry study.

#include "voltcast/chaos.hpp"
#include "voltcast/esn.hpp"
#include "voltcast/harness.hpp"
#include "voltcast/metrics.hpp"
#include "voltcast/volterra.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

constexpr int kExitOk = 0;
constexpr int kExitComputational = 1;
constexpr int kExitUsage = 2;

std::string format17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string strip_csv_suffix(std::string path) {
    if (path.size() > 4 && path.ends_with(".csv")) {
        path.resize(path.size() - 4);
    }
    return path;
}

std::string default_out(const std::string& explicit_out, const std::string& derived) {
    if (!explicit_out.empty()) {
        return explicit_out;
    }
    const char* dir = std::getenv("VOLTCAST_OUT_DIR");
    return (dir != nullptr ? std::string(dir) : std::string(".")) + "/" + derived;
}

voltcast::chaos::Trajectory load_trajectory_checked(const std::string& data_path) {
    const std::string prefix = strip_csv_suffix(data_path);
    if (!fs::exists(prefix + ".csv") || !fs::exists(prefix + ".json")) {
        throw CLI::ValidationError("--data", "trajectory files not found: " + prefix + ".{csv,json}");
    }
    return voltcast::chaos::load_trajectory(prefix);
}

json load_json_checked(const std::string& path, const char* flag) {
    if (!fs::exists(path)) {
        throw CLI::ValidationError(flag, "file not found: " + path);
    }
    std::ifstream in(path, std::ios::binary);
    json j;
    in >> j;
    return j;
}

void write_text(const std::string& path, const std::string& text) {
    const fs::path parent = fs::path(path).parent_path();
    if (!parent.empty()) {
        fs::create_directories(parent);
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw CLI::ValidationError("--out", "cannot write " + path);
    }
    out << text;
}

struct GenerateArgs {
    std::string system;
    long long n = 11000;
    std::uint64_t seed = 1;
    std::string out;
};

int cmd_generate(const GenerateArgs& args) {
    const auto& system = voltcast::chaos::system_by_name(args.system);
    const auto trajectory = voltcast::chaos::generate_trajectory(system, args.n, args.seed);
    const std::string prefix = strip_csv_suffix(
        default_out(args.out, args.system + "_seed" + std::to_string(args.seed)));
    const fs::path parent = fs::path(prefix).parent_path();
    if (!parent.empty()) {
        std::error_code ec;
        fs::create_directories(parent, ec);
    }
    try {
        voltcast::chaos::save_trajectory(trajectory, prefix);
    } catch (const std::runtime_error& e) {
        throw CLI::ValidationError("--out", e.what());
    }
    std::cout << "wrote " << prefix << ".csv (" << trajectory.length() << " points, dt "
              << format17(trajectory.dt) << ", lambda " << format17(trajectory.lambda) << ")\n";
    return kExitOk;
}

struct FitArgs {
    std::string model;
    std::string data;
    std::string out;
    long long n_warmup = 1000;
    long long n_train = 5000;
    // tn
    long long max_delay = 2;
    long long max_degree = 2;
    std::optional<double> svd_tolerance;
    // esn
    long long reservoir_size = 500;
    double rho = 0.9;
    double g = 0.4;
    double eps = 0.7;
    double lambda = 1e-7;
    std::uint64_t esn_seed = 1;
};

int cmd_fit(const FitArgs& args) {
    const auto trajectory = load_trajectory_checked(args.data);
    if (args.n_warmup < 0 || args.n_train < 2 ||
        trajectory.length() < args.n_warmup + args.n_train) {
        throw CLI::ValidationError("--n-train", "data file too short for the requested split");
    }
    const Eigen::MatrixXd window = trajectory.points.middleRows(args.n_warmup, args.n_train);
    const std::string out = default_out(args.out, args.model + "_model.json");

    if (args.model == "tn") {
        voltcast::volterra::VolterraConfig config;
        config.max_delay = args.max_delay;
        config.max_degree = args.max_degree;
        config.input_dim = trajectory.dim();
        config.output_dim = trajectory.dim();
        config.svd_tolerance = args.svd_tolerance;
        if (args.n_train <= args.max_delay) {
            throw CLI::ValidationError("--n-train", "training window shorter than the delay");
        }
        const Eigen::MatrixXd series = window.topRows(args.n_train - 1);
        const Eigen::MatrixXd targets = window.middleRows(args.max_delay, args.n_train - args.max_delay);

        voltcast::volterra::VolterraModel model;
        const double seconds = voltcast::harness::time_training(
            [&]() { model = voltcast::volterra::fit_symmetric(series, targets, config); }, 1);
        model.trained_on = trajectory.system;
        model.seed = trajectory.seed;
        const double residual = voltcast::volterra::training_residual(model, series, targets);
        write_text(out, voltcast::volterra::to_json(model).dump(2) + "\n");
        std::cout << "wrote " << out << "\n"
                  << "train_time_seconds " << format17(seconds) << "\n"
                  << "training_residual " << format17(residual) << "\n";
        return kExitOk;
    }
    if (args.model == "esn") {
        voltcast::esn::EsnConfig config;
        config.reservoir_size = args.reservoir_size;
        config.spectral_radius = args.rho;
        config.input_strength = args.g;
        config.leak_rate = args.eps;
        config.ridge_lambda = args.lambda;
        config.seed = args.esn_seed;

        voltcast::esn::EsnModel model;
        model.config = config;
        model.input_dim = trajectory.dim();
        voltcast::esn::init_reservoir(config, model.input_dim, model.reservoir, model.input_map);

        const Eigen::MatrixXd series =
            trajectory.points.topRows(args.n_warmup + args.n_train - 1);
        const Eigen::MatrixXd targets = window.middleRows(1, args.n_train - 1);
        Eigen::MatrixXd states;
        const double seconds = voltcast::harness::time_training(
            [&]() {
                states = voltcast::esn::drive(model, series, args.n_warmup, args.n_train - 1);
                voltcast::esn::fit_ridge(states, targets, config.ridge_lambda, model.readout,
                                         model.offset);
            },
            1);
        model.trained_on = trajectory.system;
        model.n_train = args.n_train - 1;
        const double y_norm = targets.norm();
        const double residual =
            ((states * model.readout).rowwise() + model.offset.transpose() - targets).norm() /
            (y_norm > 0.0 ? y_norm : 1.0);
        write_text(out, voltcast::esn::to_json(model).dump(2) + "\n");
        std::cout << "wrote " << out << "\n"
                  << "train_time_seconds " << format17(seconds) << "\n"
                  << "training_residual " << format17(residual) << "\n";
        return kExitOk;
    }
    throw CLI::ValidationError("--model", "unknown model kind: " + args.model);
}

struct GridArgs {
    std::string model;
    std::string data;
    std::string out;
    std::string grid_file;
    std::string format = "csv";
    std::uint64_t seed = 1;
    int jobs = 1;
};

voltcast::harness::GridSpec parse_grid_overrides(const std::string& path) {
    voltcast::harness::GridSpec spec;
    if (path.empty()) {
        return spec;
    }
    const json j = load_json_checked(path, "--grid");
    if (j.contains("tn")) {
        const auto& t = j["tn"];
        if (t.contains("delays")) {
            spec.tn.delays = t["delays"].get<std::vector<voltcast::harness::Index>>();
        }
        if (t.contains("degrees")) {
            spec.tn.degrees = t["degrees"].get<std::vector<voltcast::harness::Index>>();
        }
    }
    if (j.contains("esn")) {
        const auto& e = j["esn"];
        if (e.contains("reservoir_size")) {
            spec.esn.reservoir_size = e["reservoir_size"].get<voltcast::harness::Index>();
        }
        if (e.contains("spectral_radii")) {
            spec.esn.spectral_radii = e["spectral_radii"].get<std::vector<double>>();
        }
        if (e.contains("input_strengths")) {
            spec.esn.input_strengths = e["input_strengths"].get<std::vector<double>>();
        }
        if (e.contains("leak_rates")) {
            spec.esn.leak_rates = e["leak_rates"].get<std::vector<double>>();
        }
        if (e.contains("ridge_lambdas")) {
            spec.esn.ridge_lambdas = e["ridge_lambdas"].get<std::vector<double>>();
        }
    }
    return spec;
}

json grid_conventions(const voltcast::harness::GridSpec& spec, const GridArgs& args,
                      const voltcast::chaos::Trajectory& trajectory) {
    return json{{"split", {{"n_warmup", 1000}, {"n_train", 5000}, {"n_val", 5000}}},
                {"welch", {{"segment", 256}, {"overlap", 128}, {"window", "hann"}}},
                {"score", "wasserstein2_of_welch_psd_channel_mean"},
                {"tie_break", "smallest_r_then_table_order"},
                {"seed", args.seed},
                {"system", trajectory.system},
                {"trajectory_seed", trajectory.seed},
                {"tn_grid", {{"delays", spec.tn.delays}, {"degrees", spec.tn.degrees}}},
                {"esn_grid",
                 {{"reservoir_size", spec.esn.reservoir_size},
                  {"spectral_radii", spec.esn.spectral_radii},
                  {"input_strengths", spec.esn.input_strengths},
                  {"leak_rates", spec.esn.leak_rates},
                  {"ridge_lambdas", spec.esn.ridge_lambdas}}}};
}

int cmd_grid(const GridArgs& args) {
    const auto trajectory = load_trajectory_checked(args.data);
    const auto spec = parse_grid_overrides(args.grid_file);
    const voltcast::harness::SplitSpec split_spec;

    voltcast::harness::GridSearchResult result;
    if (args.model == "tn") {
        result = voltcast::harness::grid_search_tn(trajectory, spec.tn, split_spec, args.jobs);
    } else if (args.model == "esn") {
        result =
            voltcast::harness::grid_search_esn(trajectory, spec.esn, split_spec, args.seed, args.jobs);
    } else {
        throw CLI::ValidationError("--model", "unknown model kind: " + args.model);
    }

    const std::string prefix =
        strip_csv_suffix(default_out(args.out, args.model + "_grid_" + trajectory.system));
    if (args.format == "json") {
        write_text(prefix + ".json",
                   voltcast::harness::grid_report_json(result, grid_conventions(spec, args, trajectory))
                           .dump(2) +
                       "\n");
        std::cout << "wrote " << prefix << ".json\n";
    } else {
        write_text(prefix + ".csv", voltcast::harness::grid_report_csv(result));
        std::cout << "wrote " << prefix << ".csv\n";
    }
    const auto& best = result.table[result.best_index];
    std::cout << "selected " << best.hyperparameters.dump() << " score "
              << format17(best.validation_score) << "\n";
    return kExitOk;
}

struct EvalArgs {
    std::string model;
    std::string data;
    std::string out;
    long long n_ics = 100;
    long long n_ini = 1000;
    double delta = 0.2;
    long long n_pred = 4000;
    int jobs = 1;
    int time_repeats = 0;
};

int cmd_eval(const EvalArgs& args) {
    const auto trajectory = load_trajectory_checked(args.data);
    const json model_json = load_json_checked(args.model, "--model");
    const std::string kind = model_json.value("kind", "");
    const voltcast::harness::SplitSpec split_spec;

    std::unique_ptr<voltcast::harness::Forecaster> forecaster;
    json hyper;
    std::function<void()> fit_once;

    if (kind == "tn") {
        auto stored = voltcast::volterra::model_from_json(model_json);
        if (stored.config.input_dim != trajectory.dim()) {
            throw CLI::ValidationError("--model", "model input dimension " +
                                                      std::to_string(stored.config.input_dim) +
                                                      " does not match data dimension " +
                                                      std::to_string(trajectory.dim()));
        }
        // The evaluation protocol retrains on the test trajectory with the
        // stored hyperparameters.
        auto model = voltcast::harness::train_tn(trajectory, split_spec, stored.config.max_delay,
                                                 stored.config.max_degree, stored.config.svd_tolerance);
        hyper = {{"max_delay", model.config.max_delay},
                 {"max_degree", model.config.max_degree},
                 {"r", model.config.coefficient_count()}};
        fit_once = [=, &trajectory]() {
            voltcast::harness::train_tn(trajectory, split_spec, stored.config.max_delay,
                                        stored.config.max_degree, stored.config.svd_tolerance);
        };
        forecaster = std::make_unique<voltcast::harness::TnForecaster>(std::move(model));
    } else if (kind == "esn") {
        auto stored = voltcast::esn::model_from_json(model_json);
        if (stored.input_dim != trajectory.dim()) {
            throw CLI::ValidationError("--model", "model input dimension " +
                                                      std::to_string(stored.input_dim) +
                                                      " does not match data dimension " +
                                                      std::to_string(trajectory.dim()));
        }
        auto model = voltcast::harness::train_esn(trajectory, split_spec, stored.config);
        hyper = {{"reservoir_size", model.config.reservoir_size},
                 {"spectral_radius", model.config.spectral_radius},
                 {"input_strength", model.config.input_strength},
                 {"leak_rate", model.config.leak_rate},
                 {"ridge_lambda", model.config.ridge_lambda},
                 {"seed", model.config.seed}};
        fit_once = [=, &trajectory]() {
            voltcast::harness::train_esn(trajectory, split_spec, stored.config);
        };
        forecaster =
            std::make_unique<voltcast::harness::EsnForecaster>(std::move(model), args.n_ini);
    } else if (kind == "replay") {
        hyper = {{"kind", "replay"}};
        forecaster = std::make_unique<voltcast::harness::ReplayForecaster>(trajectory.points);
    } else {
        throw CLI::ValidationError("--model", "unknown model kind in file: " + kind);
    }

    voltcast::harness::ShortTermParams st_params;
    st_params.n_ics = args.n_ics;
    st_params.n_ini = args.n_ini;
    st_params.delta = args.delta;
    st_params.n_pred = args.n_pred;
    st_params.jobs = args.jobs;

    const auto short_term =
        voltcast::harness::evaluate_short_term(*forecaster, trajectory, split_spec, st_params);
    const auto climate = voltcast::harness::evaluate_climate(*forecaster, trajectory, split_spec);

    json report;
    report["schema"] = "voltcast.eval/1";
    report["task"] = trajectory.system;
    report["model"] = kind;
    report["hyperparameters"] = hyper;
    report["metrics"] = {
        {"smape", {{"mean", short_term.smape_mean}, {"stderr", short_term.smape_stderr}}},
        {"vpt",
         {{"mean", short_term.vpt_mean},
          {"stderr", short_term.vpt_stderr},
          {"censored", short_term.censored}}},
        {"wasserstein", climate.divergent ? json("inf") : json(climate.score)},
        {"climate_divergent", climate.divergent}};
    report["protocol"] = {{"lambda", trajectory.lambda},
                          {"dt", trajectory.dt},
                          {"delta", args.delta},
                          {"n_pred", args.n_pred},
                          {"n_ini", args.n_ini},
                          {"n_ics", args.n_ics},
                          {"smape_horizon", short_term.smape_horizon},
                          {"e_bar", short_term.e_bar},
                          {"split", {{"n_warmup", 1000}, {"n_train", 5000}, {"n_val", 5000}}},
                          {"welch", {{"segment", 256}, {"overlap", 128}, {"window", "hann"}}}};

    const std::string prefix =
        strip_csv_suffix(default_out(args.out, kind + "_eval_" + trajectory.system));
    write_text(prefix + ".json", report.dump(2) + "\n");

    std::ostringstream csv;
    csv << "task,model,smape_mean,smape_stderr,vpt_mean,vpt_stderr,vpt_censored,wasserstein,"
           "lambda,dt\n";
    csv << trajectory.system << "," << kind << "," << format17(short_term.smape_mean) << ","
        << format17(short_term.smape_stderr) << "," << format17(short_term.vpt_mean) << ","
        << format17(short_term.vpt_stderr) << "," << short_term.censored << ","
        << (climate.divergent ? "inf" : format17(climate.score)) << ","
        << format17(trajectory.lambda) << "," << format17(trajectory.dt) << "\n";
    write_text(prefix + ".csv", csv.str());

    if (args.time_repeats > 0 && fit_once) {
        const double seconds = voltcast::harness::time_training(fit_once, args.time_repeats);
        std::ostringstream timing;
        timing << "task,model,train_time_seconds,repeats\n";
        timing << trajectory.system << "," << kind << "," << format17(seconds) << ","
               << args.time_repeats << "\n";
        write_text(prefix + "_timing.csv", timing.str());
    }

    std::cout << "wrote " << prefix << ".json\n"
              << "smape " << format17(short_term.smape_mean) << " vpt "
              << format17(short_term.vpt_mean) << " wasserstein "
              << (climate.divergent ? "inf" : format17(climate.score)) << "\n";
    return kExitOk;
}

struct RankStudyArgs {
    std::string out;
    std::uint64_t seed = 1;
};

int cmd_rank_study(const RankStudyArgs& args) {
    const voltcast::harness::RankStudyOptions options{.seed = args.seed};
    const auto result = voltcast::harness::rank_symmetry_study(options);

    std::ostringstream table;
    table << "input,n,r,rank_u,rank_uut,s\n";
    for (const auto& row : result.rows) {
        table << row.input << "," << row.n << "," << row.r << "," << row.rank_u << ","
              << row.rank_uut << "," << format17(row.symmetry) << "\n";
    }

    std::size_t max_len = 0;
    for (const auto& [name, values] : result.singular_values) {
        max_len = std::max(max_len, static_cast<std::size_t>(values.size()));
    }
    std::ostringstream svals;
    for (std::size_t c = 0; c < result.singular_values.size(); ++c) {
        svals << (c > 0 ? "," : "") << result.singular_values[c].first;
    }
    svals << "\n";
    for (std::size_t r = 0; r < max_len; ++r) {
        for (std::size_t c = 0; c < result.singular_values.size(); ++c) {
            if (c > 0) {
                svals << ",";
            }
            const auto& values = result.singular_values[c].second;
            if (r < static_cast<std::size_t>(values.size())) {
                svals << format17(values(static_cast<Eigen::Index>(r)));
            }
        }
        svals << "\n";
    }

    const std::string prefix = strip_csv_suffix(default_out(args.out, "rank_study"));
    write_text(prefix + "_table.csv", table.str());
    write_text(prefix + "_svals.csv", svals.str());
    std::cout << "wrote " << prefix << "_table.csv and " << prefix << "_svals.csv\n";
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Truncated-Volterra and echo-state forecasting toolkit"};
    app.require_subcommand(1);

    GenerateArgs gen_args;
    auto* gen = app.add_subcommand("generate", "Integrate a chaotic system and write CSV + sidecar");
    gen->add_option("--system", gen_args.system, "System name")->required();
    gen->add_option("--n", gen_args.n, "Number of samples")->check(CLI::PositiveNumber);
    gen->add_option("--seed", gen_args.seed, "Seed for the initial condition");
    gen->add_option("--out", gen_args.out, "Output path prefix");

    FitArgs fit_args;
    auto* fit = app.add_subcommand("fit", "Train one model on a trajectory file");
    fit->add_option("--model", fit_args.model, "tn or esn")->required();
    fit->add_option("--data", fit_args.data, "Trajectory path prefix or .csv")->required();
    fit->add_option("--out", fit_args.out, "Model file path");
    fit->add_option("--n-warmup", fit_args.n_warmup, "Washout length");
    fit->add_option("--n-train", fit_args.n_train, "Training length");
    fit->add_option("--max-delay", fit_args.max_delay, "TN maximum delay M");
    fit->add_option("--degree", fit_args.max_degree, "TN maximum monomial degree D");
    double svd_tol = 0.0;
    auto* tol_opt = fit->add_option("--svd-tol", svd_tol, "Relative singular-value cutoff");
    fit->add_option("--nr", fit_args.reservoir_size, "ESN reservoir size");
    fit->add_option("--rho", fit_args.rho, "ESN spectral radius");
    fit->add_option("--g", fit_args.g, "ESN input strength");
    fit->add_option("--eps", fit_args.eps, "ESN leak rate");
    fit->add_option("--lambda", fit_args.lambda, "ESN ridge regularizer");
    fit->add_option("--esn-seed", fit_args.esn_seed, "ESN reservoir seed");

    GridArgs grid_args;
    auto* grid = app.add_subcommand("grid", "Hyperparameter grid search on one trajectory");
    grid->add_option("--model", grid_args.model, "tn or esn")->required();
    grid->add_option("--data", grid_args.data, "Trajectory path prefix or .csv")->required();
    grid->add_option("--out", grid_args.out, "Report path prefix");
    grid->add_option("--grid", grid_args.grid_file, "JSON grid override file");
    grid->add_option("--format", grid_args.format, "csv or json")
        ->check(CLI::IsMember({"csv", "json"}));
    grid->add_option("--seed", grid_args.seed, "Reservoir seed for the ESN grid");
    grid->add_option("--jobs", grid_args.jobs, "Concurrent trials")->check(CLI::PositiveNumber);

    EvalArgs eval_args;
    auto* eval = app.add_subcommand("eval", "Retrain with stored hyperparameters and evaluate");
    eval->add_option("--model", eval_args.model, "Model JSON file")->required();
    eval->add_option("--data", eval_args.data, "Test trajectory path prefix or .csv")->required();
    eval->add_option("--out", eval_args.out, "Report path prefix");
    eval->add_option("--n-ics", eval_args.n_ics, "Initial conditions")->check(CLI::PositiveNumber);
    eval->add_option("--n-ini", eval_args.n_ini, "Resynchronization length");
    eval->add_option("--delta", eval_args.delta, "VPT threshold");
    eval->add_option("--n-pred", eval_args.n_pred, "VPT horizon");
    eval->add_option("--jobs", eval_args.jobs, "Concurrent rollouts")->check(CLI::PositiveNumber);
    eval->add_option("--time-repeats", eval_args.time_repeats,
                     "Write a timing CSV from this many fit repeats");

    RankStudyArgs rank_study_args;
    auto* rank_study = app.add_subcommand("rank-study", "Rank/symmetry study tables");
    rank_study->add_option("--out", rank_study_args.out, "Report path prefix");
    rank_study->add_option("--seed", rank_study_args.seed, "Seed for the uncorrelated inputs");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) {
            return app.exit(e);
        }
        app.exit(e);
        return kExitUsage;
    }

    try {
        if (tol_opt->count() > 0) {
            fit_args.svd_tolerance = svd_tol;
        }
        if (gen->parsed()) {
            return cmd_generate(gen_args);
        }
        if (fit->parsed()) {
            return cmd_fit(fit_args);
        }
        if (grid->parsed()) {
            return cmd_grid(grid_args);
        }
        if (eval->parsed()) {
            return cmd_eval(eval_args);
        }
        if (rank_study->parsed()) {
            return cmd_rank_study(rank_study_args);
        }
        std::cerr << "no subcommand\n";
        return kExitUsage;
    } catch (const CLI::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::length_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "computational failure: " << e.what() << "\n";
        return kExitComputational;
    }
}
