#include "voltcast/harness.hpp"

#include "voltcast/rng.hpp"
#include "voltcast/tensor.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace voltcast::harness {

namespace {

constexpr Index kRolloutChunk = 256;

void run_indexed(std::size_t count, int jobs, const std::function<void(std::size_t)>& work) {
    jobs = std::max(1, jobs);
    if (jobs == 1 || count <= 1) {
        for (std::size_t i = 0; i < count; ++i) {
            work(i);
        }
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    const int n_threads = static_cast<int>(std::min<std::size_t>(static_cast<std::size_t>(jobs), count));
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(n_threads));
    for (int t = 0; t < n_threads; ++t) {
        pool.emplace_back([&, t]() {
            try {
                for (std::size_t i = next.fetch_add(1); i < count; i = next.fetch_add(1)) {
                    work(i);
                }
            } catch (...) {
                errors[static_cast<std::size_t>(t)] = std::current_exception();
            }
        });
    }
    for (auto& th : pool) {
        th.join();
    }
    for (const auto& err : errors) {
        if (err) {
            std::rethrow_exception(err);
        }
    }
}

}  // namespace

Split split(const chaos::Trajectory& trajectory, const SplitSpec& spec) {
    if (spec.n_warmup < 1 || spec.n_train < 1 || spec.n_val < 1) {
        throw std::invalid_argument("split: segment lengths must be positive");
    }
    const Index needed = spec.n_warmup + spec.n_train + spec.n_val;
    if (trajectory.length() < needed) {
        throw std::invalid_argument("split: trajectory has " + std::to_string(trajectory.length()) +
                                    " points, needs " + std::to_string(needed));
    }
    Split out;
    out.warmup = trajectory.points.topRows(spec.n_warmup);
    out.train = trajectory.points.middleRows(spec.n_warmup, spec.n_train);
    out.val = trajectory.points.middleRows(spec.n_warmup + spec.n_train, spec.n_val);
    return out;
}

volterra::VolterraModel train_tn(const chaos::Trajectory& trajectory, const SplitSpec& spec,
                                 Index max_delay, Index max_degree,
                                 std::optional<double> svd_tolerance) {
    const Split parts = split(trajectory, spec);
    volterra::VolterraConfig config;
    config.max_delay = max_delay;
    config.max_degree = max_degree;
    config.input_dim = trajectory.dim();
    config.output_dim = trajectory.dim();
    config.svd_tolerance = svd_tolerance;

    const Eigen::MatrixXd series = parts.train.topRows(spec.n_train - 1);
    const Eigen::MatrixXd targets = parts.train.middleRows(max_delay, spec.n_train - max_delay);
    auto model = volterra::fit_symmetric(series, targets, config);
    model.trained_on = trajectory.system;
    model.seed = trajectory.seed;
    return model;
}

esn::EsnModel train_esn(const chaos::Trajectory& trajectory, const SplitSpec& spec,
                        const esn::EsnConfig& config) {
    const Split parts = split(trajectory, spec);

    esn::EsnModel model;
    model.config = config;
    model.input_dim = trajectory.dim();
    esn::init_reservoir(config, model.input_dim, model.reservoir, model.input_map);

    Eigen::MatrixXd series(spec.n_warmup + spec.n_train - 1, trajectory.dim());
    series << parts.warmup, parts.train.topRows(spec.n_train - 1);
    const Eigen::MatrixXd states = esn::drive(model, series, spec.n_warmup, spec.n_train - 1);
    const Eigen::MatrixXd targets = parts.train.middleRows(1, spec.n_train - 1);
    esn::fit_ridge(states, targets, config.ridge_lambda, model.readout, model.offset);
    model.trained_on = trajectory.system;
    model.n_train = spec.n_train - 1;
    return model;
}

std::size_t select_best(const std::vector<TrialResult>& table) {
    if (table.empty()) {
        throw std::invalid_argument("select_best: empty trial table");
    }
    std::size_t best = 0;
    bool any_finite = false;
    for (std::size_t i = 0; i < table.size(); ++i) {
        const TrialResult& cur = table[i];
        if (cur.divergent || !std::isfinite(cur.validation_score)) {
            continue;
        }
        if (!any_finite) {
            best = i;
            any_finite = true;
            continue;
        }
        const TrialResult& sel = table[best];
        if (cur.validation_score < sel.validation_score) {
            best = i;
        } else if (cur.validation_score == sel.validation_score && cur.family == "tn" &&
                   sel.family == "tn" &&
                   cur.hyperparameters.value("r", Index{0}) < sel.hyperparameters.value("r", Index{0})) {
            best = i;
        }
    }
    if (!any_finite) {
        throw std::runtime_error("grid search: every combination diverged");
    }
    return best;
}

Eigen::MatrixXd rollout_checked(const Forecaster& forecaster, const Eigen::MatrixXd& history,
                                Index start_hint, Index steps, bool& diverged) {
    diverged = false;
    if (!forecaster.finite_memory()) {
        // Chunking would restart the internal state; run in one piece.
        Eigen::MatrixXd out = forecaster.forecast(history, start_hint, steps);
        diverged = !out.allFinite();
        return out;
    }
    Eigen::MatrixXd out(steps, forecaster.dim());
    Eigen::MatrixXd window = history;
    Index produced = 0;
    while (produced < steps) {
        const Index chunk = std::min(kRolloutChunk, steps - produced);
        const Eigen::MatrixXd block = forecaster.forecast(window, start_hint + produced, chunk);
        out.middleRows(produced, chunk) = block;
        if (!block.allFinite()) {
            diverged = true;
            out.bottomRows(steps - produced - chunk).setZero();
            return out;
        }
        produced += chunk;
        // Roll the history window forward over the freshly predicted block.
        const Index keep = std::max<Index>(forecaster.warmup_length(), 1);
        Eigen::MatrixXd merged(window.rows() + chunk, window.cols());
        merged << window, block;
        window = merged.bottomRows(std::min(merged.rows(), keep));
    }
    return out;
}

namespace {

/// Validation rollout + spectral score for one trained forecaster.
TrialResult score_validation(const Forecaster& forecaster, const Split& parts,
                             const SplitSpec& spec, TrialResult trial) {
    const Index start = spec.n_warmup + spec.n_train;
    Eigen::MatrixXd history;
    const Index w = forecaster.warmup_length();
    Eigen::MatrixXd full(parts.warmup.rows() + parts.train.rows(), parts.train.cols());
    full << parts.warmup, parts.train;
    history = full.bottomRows(std::min<Index>(w, full.rows()));

    bool diverged = false;
    const Eigen::MatrixXd rollout = rollout_checked(forecaster, history, start, spec.n_val, diverged);
    if (diverged) {
        trial.validation_score = std::numeric_limits<double>::infinity();
        trial.divergent = true;
        return trial;
    }
    try {
        trial.validation_score = metrics::wasserstein_score(rollout, parts.val);
    } catch (const std::exception&) {
        trial.validation_score = std::numeric_limits<double>::infinity();
        trial.divergent = true;
    }
    return trial;
}

}  // namespace

GridSearchResult grid_search_tn(const chaos::Trajectory& trajectory, const TnGrid& grid,
                                const SplitSpec& spec, int jobs) {
    if (grid.delays.empty() || grid.degrees.empty()) {
        throw std::invalid_argument("grid_search_tn: empty grid");
    }
    const Split parts = split(trajectory, spec);

    struct Combo {
        Index m;
        Index d;
    };
    std::vector<Combo> combos;
    for (Index m : grid.delays) {
        for (Index d : grid.degrees) {
            combos.push_back({m, d});
        }
    }

    GridSearchResult result;
    result.table.resize(combos.size());
    run_indexed(combos.size(), jobs, [&](std::size_t i) {
        const Combo combo = combos[i];
        TrialResult trial;
        trial.family = "tn";
        volterra::VolterraConfig probe;
        probe.max_delay = combo.m;
        probe.max_degree = combo.d;
        probe.input_dim = trajectory.dim();
        probe.output_dim = trajectory.dim();
        trial.hyperparameters = {{"max_delay", combo.m},
                                 {"max_degree", combo.d},
                                 {"r", probe.coefficient_count()}};
        try {
            const auto model = train_tn(trajectory, spec, combo.m, combo.d);
            const TnForecaster forecaster(model);
            result.table[i] = score_validation(forecaster, parts, spec, std::move(trial));
        } catch (const std::exception&) {
            trial.validation_score = std::numeric_limits<double>::infinity();
            trial.divergent = true;
            result.table[i] = std::move(trial);
        }
    });
    result.best_index = select_best(result.table);
    return result;
}

namespace {

/// Closed-loop rollout for several readout variants that share one
/// reservoir: column c of the state matrix evolves under readout c.
std::vector<Eigen::MatrixXd> rollout_lambda_group(const esn::EsnModel& base,
                                                  const std::vector<Eigen::MatrixXd>& readouts,
                                                  const std::vector<Eigen::VectorXd>& offsets,
                                                  const Eigen::VectorXd& start_state, Index steps) {
    const Index n_variants = static_cast<Index>(readouts.size());
    const Index p = base.input_dim;
    const double eps = base.config.leak_rate;

    std::vector<Eigen::MatrixXd> out(static_cast<std::size_t>(n_variants), Eigen::MatrixXd(steps, p));
    Eigen::MatrixXd x(base.config.reservoir_size, n_variants);
    for (Index c = 0; c < n_variants; ++c) {
        x.col(c) = start_state;
    }
    Eigen::MatrixXd u(p, n_variants);
    for (Index k = 0; k < steps; ++k) {
        for (Index c = 0; c < n_variants; ++c) {
            u.col(c) = readouts[static_cast<std::size_t>(c)].transpose() * x.col(c) +
                       offsets[static_cast<std::size_t>(c)];
            out[static_cast<std::size_t>(c)].row(k) = u.col(c);
        }
        x = ((1.0 - eps) * x +
             eps * (base.reservoir * x + base.config.input_strength * (base.input_map * u))
                       .array()
                       .tanh()
                       .matrix())
                .eval();
    }
    return out;
}

}  // namespace

GridSearchResult grid_search_esn(const chaos::Trajectory& trajectory, const EsnGrid& grid,
                                 const SplitSpec& spec, std::uint64_t reservoir_seed, int jobs) {
    if (grid.spectral_radii.empty() || grid.input_strengths.empty() || grid.leak_rates.empty() ||
        grid.ridge_lambdas.empty()) {
        throw std::invalid_argument("grid_search_esn: empty grid");
    }
    for (double lambda : grid.ridge_lambdas) {
        if (lambda <= 0.0) {
            throw std::invalid_argument("grid_search_esn: ridge lambdas must be positive");
        }
    }
    const Split parts = split(trajectory, spec);
    const Index p = trajectory.dim();

    // One reservoir per search: drawn once, rescaled per spectral radius.
    esn::EsnConfig draw_config;
    draw_config.reservoir_size = grid.reservoir_size;
    draw_config.seed = reservoir_seed;
    draw_config.spectral_radius = 1.0;
    Eigen::MatrixXd w_unit, input_map;
    esn::init_reservoir(draw_config, p, w_unit, input_map);  // spectral radius exactly 1

    struct Group {
        double rho;
        double g;
        double eps;
    };
    std::vector<Group> groups;
    for (double rho : grid.spectral_radii) {
        for (double g : grid.input_strengths) {
            for (double eps : grid.leak_rates) {
                groups.push_back({rho, g, eps});
            }
        }
    }
    const std::size_t n_lambda = grid.ridge_lambdas.size();

    Eigen::MatrixXd series(spec.n_warmup + spec.n_train - 1, p);
    series << parts.warmup, parts.train.topRows(spec.n_train - 1);
    const Eigen::MatrixXd targets = parts.train.middleRows(1, spec.n_train - 1);

    GridSearchResult result;
    result.table.resize(groups.size() * n_lambda);

    run_indexed(groups.size(), jobs, [&](std::size_t gi) {
        const Group group = groups[gi];
        esn::EsnModel model;
        model.config = draw_config;
        model.config.spectral_radius = group.rho;
        model.config.input_strength = group.g;
        model.config.leak_rate = group.eps;
        model.input_dim = p;
        model.reservoir = group.rho * w_unit;
        model.input_map = input_map;

        // Shared drive and Gram matrix for every lambda in the group.
        const Eigen::MatrixXd states = esn::drive(model, series, spec.n_warmup, spec.n_train - 1);
        const Eigen::RowVectorXd x_mean = states.colwise().mean();
        const Eigen::RowVectorXd y_mean = targets.colwise().mean();
        const Eigen::MatrixXd xc = states.rowwise() - x_mean;
        const Eigen::MatrixXd gram0 = xc.transpose() * xc;
        const Eigen::MatrixXd rhs = xc.transpose() * (targets.rowwise() - y_mean);

        Eigen::VectorXd state_after_train = states.row(states.rows() - 1);
        state_after_train = esn::esn_step(model, state_after_train, parts.train.row(spec.n_train - 1));

        std::vector<Eigen::MatrixXd> readouts(n_lambda);
        std::vector<Eigen::VectorXd> offsets(n_lambda);
        for (std::size_t li = 0; li < n_lambda; ++li) {
            Eigen::MatrixXd gram = gram0;
            gram.diagonal().array() += grid.ridge_lambdas[li];
            Eigen::LDLT<Eigen::MatrixXd> ldlt(gram);
            Eigen::MatrixXd readout = ldlt.solve(rhs);
            for (int sweep = 0; sweep < 2; ++sweep) {
                readout += ldlt.solve(rhs - gram * readout);
            }
            readouts[li] = readout;
            offsets[li] = (y_mean - x_mean * readout).transpose();
        }

        const auto rollouts =
            rollout_lambda_group(model, readouts, offsets, state_after_train, spec.n_val);
        for (std::size_t li = 0; li < n_lambda; ++li) {
            TrialResult trial;
            trial.family = "esn";
            trial.hyperparameters = {{"reservoir_size", grid.reservoir_size},
                                     {"spectral_radius", group.rho},
                                     {"input_strength", group.g},
                                     {"leak_rate", group.eps},
                                     {"ridge_lambda", grid.ridge_lambdas[li]},
                                     {"seed", reservoir_seed}};
            if (!rollouts[li].allFinite()) {
                trial.validation_score = std::numeric_limits<double>::infinity();
                trial.divergent = true;
            } else {
                try {
                    trial.validation_score = metrics::wasserstein_score(rollouts[li], parts.val);
                } catch (const std::exception&) {
                    trial.validation_score = std::numeric_limits<double>::infinity();
                    trial.divergent = true;
                }
            }
            result.table[gi * n_lambda + li] = std::move(trial);
        }
    });
    result.best_index = select_best(result.table);
    return result;
}

std::vector<Eigen::MatrixXd> Forecaster::forecast_many(const std::vector<Eigen::MatrixXd>& histories,
                                                       const std::vector<Index>& start_hints,
                                                       Index steps, int jobs) const {
    std::vector<Eigen::MatrixXd> out(histories.size());
    run_indexed(histories.size(), jobs,
                [&](std::size_t i) { out[i] = forecast(histories[i], start_hints[i], steps); });
    return out;
}

Eigen::MatrixXd TnForecaster::forecast(const Eigen::MatrixXd& history, Index /*start_hint*/,
                                       Index steps) const {
    return volterra::predict_closed_loop(model_, history, steps);
}

Eigen::MatrixXd EsnForecaster::forecast(const Eigen::MatrixXd& history, Index /*start_hint*/,
                                        Index steps) const {
    const Eigen::VectorXd state = esn::resynchronize(model_, history);
    return esn::predict_closed_loop(model_, state, steps);
}

std::vector<Eigen::MatrixXd> EsnForecaster::forecast_many(const std::vector<Eigen::MatrixXd>& histories,
                                                          const std::vector<Index>& /*start_hints*/,
                                                          Index steps, int /*jobs*/) const {
    const Eigen::MatrixXd states = esn::resynchronize_batch(model_, histories);
    return esn::predict_closed_loop_batch(model_, states, steps);
}

Eigen::MatrixXd ReplayForecaster::forecast(const Eigen::MatrixXd& /*history*/, Index start_hint,
                                           Index steps) const {
    if (start_hint < 0 || start_hint + steps > reference_.rows()) {
        throw std::out_of_range("ReplayForecaster: window outside the reference trajectory");
    }
    return reference_.middleRows(start_hint, steps);
}

Stats mean_stderr(const std::vector<double>& values) {
    Stats stats;
    if (values.empty()) {
        return stats;
    }
    double sum = 0.0;
    for (double v : values) {
        sum += v;
    }
    stats.mean = sum / static_cast<double>(values.size());
    if (values.size() == 1) {
        return stats;
    }
    double sq = 0.0;
    for (double v : values) {
        sq += (v - stats.mean) * (v - stats.mean);
    }
    const double variance = sq / static_cast<double>(values.size() - 1);
    stats.stderr_ = std::sqrt(variance / static_cast<double>(values.size()));
    return stats;
}

ShortTermStats evaluate_short_term(const Forecaster& forecaster, const chaos::Trajectory& trajectory,
                                   const SplitSpec& spec, const ShortTermParams& params) {
    if (params.n_ics < 1) {
        throw std::invalid_argument("evaluate_short_term: need at least one initial condition");
    }
    if (trajectory.lambda <= 0.0 || trajectory.dt <= 0.0) {
        throw std::invalid_argument("evaluate_short_term: trajectory needs positive lambda and dt");
    }
    if (forecaster.dim() != trajectory.dim()) {
        throw std::invalid_argument("evaluate_short_term: dimension mismatch");
    }

    ShortTermStats stats;
    stats.smape_horizon =
        std::max<Index>(1, static_cast<Index>(std::llround(1.0 / (trajectory.lambda * trajectory.dt))));
    const Index horizon = std::max<Index>(params.n_pred, stats.smape_horizon);

    const Index test_start = spec.n_warmup + spec.n_train;
    const Index slack = trajectory.length() - test_start - horizon;
    if (slack < 1) {
        throw std::invalid_argument("evaluate_short_term: test segment too short for the horizon");
    }
    const Index w = forecaster.warmup_length();
    if (test_start < w) {
        throw std::invalid_argument("evaluate_short_term: not enough history before the test segment");
    }

    stats.e_bar =
        metrics::mean_pairwise_distance(trajectory.points.topRows(spec.n_warmup + spec.n_train));

    std::vector<Index> starts(static_cast<std::size_t>(params.n_ics));
    for (Index k = 0; k < params.n_ics; ++k) {
        starts[static_cast<std::size_t>(k)] =
            test_start + (k * slack) / params.n_ics;
    }

    std::vector<Eigen::MatrixXd> histories;
    histories.reserve(starts.size());
    for (Index s : starts) {
        histories.push_back(trajectory.points.middleRows(s - w, w));
    }

    const auto rollouts = forecaster.forecast_many(histories, starts, horizon, params.jobs);

    metrics::VptParams vpt_params;
    vpt_params.delta = params.delta;
    vpt_params.n_ini = params.n_ini;
    vpt_params.n_pred = params.n_pred;
    vpt_params.e_bar = stats.e_bar;
    vpt_params.lambda = trajectory.lambda;
    vpt_params.dt = trajectory.dt;

    stats.smape_values.resize(starts.size());
    stats.vpt_values.resize(starts.size());
    for (std::size_t i = 0; i < starts.size(); ++i) {
        const Index s = starts[i];
        const Eigen::MatrixXd& rollout = rollouts[i];
        const Eigen::MatrixXd target = trajectory.points.middleRows(s, horizon);

        // First non-finite row, if any: divergence point of the rollout.
        Index first_bad = rollout.rows();
        for (Index r0 = 0; r0 < rollout.rows(); ++r0) {
            if (!rollout.row(r0).allFinite()) {
                first_bad = r0;
                break;
            }
        }

        if (first_bad >= stats.smape_horizon) {
            stats.smape_values[i] = metrics::smape(rollout.topRows(stats.smape_horizon),
                                                   target.topRows(stats.smape_horizon));
        } else {
            stats.smape_values[i] = 200.0;
        }

        if (first_bad >= params.n_pred) {
            const auto vr = metrics::vpt(rollout.topRows(params.n_pred), target.topRows(params.n_pred),
                                         vpt_params);
            stats.vpt_values[i] = vr.value;
            if (vr.censored) {
                ++stats.censored;
            }
        } else {
            // Divergence: score the finite prefix; a non-finite step always
            // exceeds the threshold.
            double value = trajectory.lambda * trajectory.dt * static_cast<double>(params.n_pred);
            for (Index k = 0; k < std::min(first_bad, params.n_pred); ++k) {
                const double err = (target.row(k) - rollout.row(k)).norm() / stats.e_bar;
                if (err > params.delta) {
                    value = trajectory.lambda * trajectory.dt * static_cast<double>(k);
                    break;
                }
                if (k + 1 == std::min(first_bad, params.n_pred)) {
                    value = trajectory.lambda * trajectory.dt * static_cast<double>(first_bad);
                }
            }
            if (first_bad == 0) {
                value = 0.0;
            }
            stats.vpt_values[i] = value;
        }
    }

    const Stats smape_stats = mean_stderr(stats.smape_values);
    const Stats vpt_stats = mean_stderr(stats.vpt_values);
    stats.smape_mean = smape_stats.mean;
    stats.smape_stderr = smape_stats.stderr_;
    stats.vpt_mean = vpt_stats.mean;
    stats.vpt_stderr = vpt_stats.stderr_;
    return stats;
}

ClimateResult evaluate_climate(const Forecaster& forecaster, const chaos::Trajectory& trajectory,
                               const SplitSpec& spec) {
    const Index test_start = spec.n_warmup + spec.n_train;
    if (trajectory.length() < test_start + spec.n_val) {
        throw std::invalid_argument("evaluate_climate: trajectory too short");
    }
    const Index w = forecaster.warmup_length();
    if (test_start < w) {
        throw std::invalid_argument("evaluate_climate: not enough history before the test segment");
    }
    const Eigen::MatrixXd history = trajectory.points.middleRows(test_start - w, w);
    bool diverged = false;
    const Eigen::MatrixXd rollout =
        rollout_checked(forecaster, history, test_start, spec.n_val, diverged);
    ClimateResult result;
    if (diverged) {
        result.score = std::numeric_limits<double>::infinity();
        result.divergent = true;
        return result;
    }
    const Eigen::MatrixXd target = trajectory.points.middleRows(test_start, spec.n_val);
    try {
        result.score = metrics::wasserstein_score(rollout, target);
    } catch (const std::exception&) {
        result.score = std::numeric_limits<double>::infinity();
        result.divergent = true;
    }
    return result;
}

double time_training(const std::function<void()>& fit, int repeats) {
    if (repeats < 1) {
        throw std::invalid_argument("time_training: repeats must be >= 1");
    }
    std::vector<double> samples(static_cast<std::size_t>(repeats));
    for (int r = 0; r < repeats; ++r) {
        const auto start = std::chrono::steady_clock::now();
        fit();
        const auto stop = std::chrono::steady_clock::now();
        samples[static_cast<std::size_t>(r)] =
            std::chrono::duration<double>(stop - start).count();
    }
    std::sort(samples.begin(), samples.end());
    const std::size_t mid = samples.size() / 2;
    if (samples.size() % 2 == 1) {
        return samples[mid];
    }
    return 0.5 * (samples[mid - 1] + samples[mid]);
}

double correlated_input(Index n) {
    const double x = static_cast<double>(n);
    return 0.5 * (1.0 + std::sin(2.0 * std::numbers::pi * x * 2.11 / 100.0) *
                            std::sin(2.0 * std::numbers::pi * x * 3.73 / 100.0) *
                            std::sin(2.0 * std::numbers::pi * x * 4.11 / 100.0));
}

namespace {

Index count_above(const Eigen::VectorXd& values, double cutoff) {
    Index count = 0;
    for (Eigen::Index i = 0; i < values.size(); ++i) {
        if (values(i) >= cutoff) {
            ++count;
        }
    }
    return count;
}

}  // namespace

RankStudyResult rank_symmetry_study(const RankStudyOptions& options) {
    constexpr Index kDelay = 4;
    constexpr Index kDegree = 4;

    RankStudyResult result;
    for (const Index n : {Index{50}, Index{100}}) {
        for (const bool correlated : {false, true}) {
            const Index series_len = kDelay + n - 1;
            Eigen::MatrixXd series(series_len, 1);
            if (correlated) {
                for (Index i = 0; i < series_len; ++i) {
                    series(i, 0) = correlated_input(i + 1);
                }
            } else {
                auto gen = rng::make_engine(rng::derive_seed(options.seed, 0xA11E'17ULL + n));
                for (Index i = 0; i < series_len; ++i) {
                    series(i, 0) = rng::uniform01(gen);
                }
            }
            // Memory task: recall the previous input.
            Eigen::MatrixXd targets(n, 1);
            for (Index r = 0; r < n; ++r) {
                targets(r, 0) = series(kDelay + r - 2, 0);
            }

            volterra::VolterraConfig config;
            config.max_delay = kDelay;
            config.max_degree = kDegree;
            config.input_dim = 1;
            config.output_dim = 1;
            const double eps = std::numeric_limits<double>::epsilon();
            config.svd_tolerance =
                options.pinv_tolerance.value_or(static_cast<double>(n) * eps);

            const auto fit = volterra::fit_naive_detailed(series, targets, config);
            const double rank_tol =
                options.rank_tolerance.value_or(1e-10 * std::sqrt(static_cast<double>(n)));

            RankStudyRow row;
            row.input = correlated ? "correlated" : "uncorrelated";
            row.n = n;
            row.r = config.coefficient_count();
            row.rank_u = count_above(fit.singular_values, rank_tol * fit.singular_values(0));

            const Eigen::MatrixXd u_full = volterra::build_feature_matrix_full(series, config);
            const Eigen::MatrixXd uut = u_full * u_full.transpose();
            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(uut, Eigen::EigenvaluesOnly);
            Eigen::VectorXd uut_singular = eig.eigenvalues().cwiseAbs();
            std::sort(uut_singular.data(), uut_singular.data() + uut_singular.size(),
                      std::greater<double>());
            row.rank_uut = count_above(uut_singular, rank_tol * uut_singular(0));

            const Index i_dim = config.extended_dim();
            const std::vector<tensor::Index> shape(static_cast<std::size_t>(kDegree), i_dim);
            std::vector<double> column(fit.full_coefficients.col(0).begin(),
                                       fit.full_coefficients.col(0).end());
            row.symmetry = tensor::symmetry_metric(tensor::DenseTensor(shape, std::move(column)));

            result.rows.push_back(row);
            result.singular_values.emplace_back(
                row.input + "_n" + std::to_string(n), fit.singular_values);
        }
    }
    return result;
}

namespace {

/// RFC-4180 quoted field: embedded quotes are doubled.
std::string csv_quote(const std::string& field) {
    std::string quoted = "\"";
    for (char ch : field) {
        quoted += ch;
        if (ch == '"') {
            quoted += '"';
        }
    }
    quoted += '"';
    return quoted;
}

}  // namespace

std::string grid_report_csv(const GridSearchResult& result) {
    std::ostringstream out;
    out << "index,family,hyperparameters,score,divergent,selected\n";
    for (std::size_t i = 0; i < result.table.size(); ++i) {
        const TrialResult& t = result.table[i];
        char score[40];
        if (std::isfinite(t.validation_score)) {
            std::snprintf(score, sizeof(score), "%.17g", t.validation_score);
        } else {
            std::snprintf(score, sizeof(score), "inf");
        }
        out << i << "," << t.family << "," << csv_quote(t.hyperparameters.dump()) << "," << score
            << "," << (t.divergent ? 1 : 0) << "," << (i == result.best_index ? 1 : 0) << "\n";
    }
    return out.str();
}

nlohmann::json grid_report_json(const GridSearchResult& result, const nlohmann::json& conventions) {
    nlohmann::json j;
    j["schema"] = "voltcast.grid/1";
    j["conventions"] = conventions;
    j["trials"] = nlohmann::json::array();
    for (std::size_t i = 0; i < result.table.size(); ++i) {
        const TrialResult& t = result.table[i];
        nlohmann::json trial = {{"index", i},
                                {"family", t.family},
                                {"hyperparameters", t.hyperparameters},
                                {"divergent", t.divergent},
                                {"selected", i == result.best_index}};
        if (std::isfinite(t.validation_score)) {
            trial["score"] = t.validation_score;
        } else {
            trial["score"] = "inf";
        }
        j["trials"].push_back(std::move(trial));
    }
    j["best_index"] = result.best_index;
    return j;
}

}  // namespace voltcast::harness
