#pragma once

#include "voltcast/chaos.hpp"
#include "voltcast/esn.hpp"
#include "voltcast/metrics.hpp"
#include "voltcast/volterra.hpp"

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace voltcast::harness {

using Index = Eigen::Index;

/// Contiguous trajectory splits: washout, training, validation/testing.
struct SplitSpec {
    Index n_warmup = 1000;
    Index n_train = 5000;
    Index n_val = 5000;
};

struct Split {
    Eigen::MatrixXd warmup;
    Eigen::MatrixXd train;
    Eigen::MatrixXd val;
};

Split split(const chaos::Trajectory& trajectory, const SplitSpec& spec);

/// Hyperparameter grids. The Volterra grid is the full delay/degree cross
/// product; the ESN grid crosses spectral radius, input strength, leak rate
/// and ridge regularizer at a fixed reservoir size.
struct TnGrid {
    std::vector<Index> delays = {1, 2, 3, 4};
    std::vector<Index> degrees = {2, 3, 4};
};

struct EsnGrid {
    Index reservoir_size = 500;
    std::vector<double> spectral_radii = {0.8, 0.9, 1.0, 1.1, 1.2};
    std::vector<double> input_strengths = {0.1, 0.4, 0.7, 1.0};
    std::vector<double> leak_rates = {0.1, 0.4, 0.7, 1.0};
    std::vector<double> ridge_lambdas = {1e-13, 1e-10, 1e-7, 1e-4, 1e-1};
};

struct GridSpec {
    TnGrid tn;
    EsnGrid esn;
};

/// One grid-search trial: hyperparameters plus the validation score
/// (channel-averaged spectral transport distance of the closed-loop run).
struct TrialResult {
    std::string family;
    nlohmann::json hyperparameters;
    double validation_score = 0.0;
    bool divergent = false;
};

struct GridSearchResult {
    std::vector<TrialResult> table;
    std::size_t best_index = 0;
};

/// Index of the selected trial: minimal score, ties broken by the cheapest
/// model (smallest R) for the Volterra family and by table order otherwise.
std::size_t select_best(const std::vector<TrialResult>& table);

/// Train a truncated Volterra model on the training split (the washout
/// segment is discarded for this family). Targets are the next states.
volterra::VolterraModel train_tn(const chaos::Trajectory& trajectory, const SplitSpec& spec,
                                 Index max_delay, Index max_degree,
                                 std::optional<double> svd_tolerance = {});

/// Train an ESN with washout: drive through warmup + train, ridge-fit the
/// readout on next-state targets.
esn::EsnModel train_esn(const chaos::Trajectory& trajectory, const SplitSpec& spec,
                        const esn::EsnConfig& config);

GridSearchResult grid_search_tn(const chaos::Trajectory& trajectory, const TnGrid& grid,
                                const SplitSpec& spec, int jobs = 1);

/// The reservoir seed is fixed across all grid combinations so the search
/// isolates hyperparameter effects. Trials sharing (rho, g, eps) reuse one
/// reservoir drive; rollouts for the lambda variants run batched.
GridSearchResult grid_search_esn(const chaos::Trajectory& trajectory, const EsnGrid& grid,
                                 const SplitSpec& spec, std::uint64_t reservoir_seed, int jobs = 1);

/// Closed-loop prediction interface used by the evaluation protocol.
/// `history` holds the rows immediately before the first predicted point
/// (oldest first); `start_hint` is that point's row index in the evaluated
/// trajectory, used only by diagnostic stand-ins such as the replay model.
class Forecaster {
public:
    virtual ~Forecaster() = default;
    virtual Index dim() const = 0;
    virtual Index warmup_length() const = 0;
    /// True when warmup_length() rows of history fully determine the
    /// continuation, so rollouts may be split into chunks exactly.
    virtual bool finite_memory() const { return true; }
    virtual Eigen::MatrixXd forecast(const Eigen::MatrixXd& history, Index start_hint,
                                     Index steps) const = 0;
    /// Batched rollouts; the default runs forecast() per history, spread
    /// over `jobs` threads.
    virtual std::vector<Eigen::MatrixXd> forecast_many(const std::vector<Eigen::MatrixXd>& histories,
                                                       const std::vector<Index>& start_hints,
                                                       Index steps, int jobs) const;
};

class TnForecaster : public Forecaster {
public:
    explicit TnForecaster(volterra::VolterraModel model) : model_(std::move(model)) {}
    Index dim() const override { return model_.config.input_dim; }
    Index warmup_length() const override { return model_.config.max_delay; }
    Eigen::MatrixXd forecast(const Eigen::MatrixXd& history, Index start_hint,
                             Index steps) const override;
    const volterra::VolterraModel& model() const { return model_; }

private:
    volterra::VolterraModel model_;
};

class EsnForecaster : public Forecaster {
public:
    EsnForecaster(esn::EsnModel model, Index resync_length)
        : model_(std::move(model)), resync_length_(resync_length) {}
    Index dim() const override { return model_.input_dim; }
    Index warmup_length() const override { return resync_length_; }
    bool finite_memory() const override { return false; }
    Eigen::MatrixXd forecast(const Eigen::MatrixXd& history, Index start_hint,
                             Index steps) const override;
    /// Columns of one batched state matrix evolve together; `jobs` is
    /// irrelevant for this path.
    std::vector<Eigen::MatrixXd> forecast_many(const std::vector<Eigen::MatrixXd>& histories,
                                               const std::vector<Index>& start_hints, Index steps,
                                               int jobs) const override;
    const esn::EsnModel& model() const { return model_; }

private:
    esn::EsnModel model_;
    Index resync_length_;
};

/// Diagnostic forecaster that replays the reference trajectory; a perfect
/// predictor for plumbing tests.
class ReplayForecaster : public Forecaster {
public:
    explicit ReplayForecaster(Eigen::MatrixXd reference) : reference_(std::move(reference)) {}
    Index dim() const override { return reference_.cols(); }
    Index warmup_length() const override { return 1; }
    Eigen::MatrixXd forecast(const Eigen::MatrixXd& history, Index start_hint,
                             Index steps) const override;

private:
    Eigen::MatrixXd reference_;
};

struct ShortTermParams {
    Index n_ics = 100;
    Index n_ini = 1000;  ///< ESN resynchronization length
    double delta = 0.2;
    Index n_pred = 4000;
    int jobs = 1;
};

struct ShortTermStats {
    double smape_mean = 0.0;
    double smape_stderr = 0.0;
    double vpt_mean = 0.0;
    double vpt_stderr = 0.0;
    Index censored = 0;
    Index smape_horizon = 0;
    double e_bar = 0.0;
    std::vector<double> smape_values;
    std::vector<double> vpt_values;
};

/// Short-term evaluation over evenly displaced initial conditions inside
/// the test segment. sMAPE runs over one Lyapunov time of steps; VPT over
/// n_pred steps with the threshold normalized by the mean pairwise distance
/// of the warmup + train states.
ShortTermStats evaluate_short_term(const Forecaster& forecaster, const chaos::Trajectory& trajectory,
                                   const SplitSpec& spec, const ShortTermParams& params);

struct ClimateResult {
    double score = 0.0;
    bool divergent = false;
};

/// Single-rollout climate score: n_val closed-loop steps against the test
/// segment, compared by channel-averaged spectral transport distance.
ClimateResult evaluate_climate(const Forecaster& forecaster, const chaos::Trajectory& trajectory,
                               const SplitSpec& spec);

/// Median wall-clock seconds of `fit` over `repeats` runs. The callable
/// must contain only the training work (feature construction and solve, or
/// reservoir drive and ridge).
double time_training(const std::function<void()>& fit, int repeats = 5);

/// Closed-loop rollout with divergence detection: runs in chunks and stops
/// as soon as a non-finite value appears. Returns what was produced.
Eigen::MatrixXd rollout_checked(const Forecaster& forecaster, const Eigen::MatrixXd& history,
                                Index start_hint, Index steps, bool& diverged);

struct RankStudyRow {
    std::string input;  ///< "uncorrelated" or "correlated"
    Index n = 0;
    Index r = 0;
    Index rank_u = 0;
    Index rank_uut = 0;
    double symmetry = 0.0;
};

struct RankStudyResult {
    std::vector<RankStudyRow> rows;
    /// Singular-value profile of the feature matrix per case, keyed like
    /// "uncorrelated_n50".
    std::vector<std::pair<std::string, Eigen::VectorXd>> singular_values;
};

struct RankStudyOptions {
    std::uint64_t seed = 1;
    /// Pseudoinverse cutoff used for the coefficient solve; defaults to the
    /// machine-precision convention rows * eps.
    std::optional<double> pinv_tolerance;
    /// Relative cutoff used to count numerical ranks; defaults to the
    /// solver default 1e-10 * sqrt(N).
    std::optional<double> rank_tolerance;
};

/// Memory-task rank/symmetry study: P=1, M=D=4 features from uncorrelated
/// uniform inputs and from a correlated sinusoid, N in {50, 100}; reports
/// numerical ranks of U and U U^T and the symmetry defect of the fitted
/// coefficient tensor, plus the singular-value profiles.
RankStudyResult rank_symmetry_study(const RankStudyOptions& options = {});

/// The correlated input signal of the rank/symmetry study (1-based n).
double correlated_input(Index n);

/// Sample mean and standard error.
struct Stats {
    double mean = 0.0;
    double stderr_ = 0.0;
};
Stats mean_stderr(const std::vector<double>& values);

/// Grid report serialization: one row per trial plus the selected row,
/// with every protocol convention embedded for reproducibility.
std::string grid_report_csv(const GridSearchResult& result);
nlohmann::json grid_report_json(const GridSearchResult& result, const nlohmann::json& conventions);

}  // namespace voltcast::harness
