#pragma once

#include <Eigen/Core>
#include <nlohmann/json_fwd.hpp>

#include <cstdint>
#include <string>
#include <vector>

namespace voltcast::esn {

using Index = Eigen::Index;

/// Leaky echo state network hyperparameters.
struct EsnConfig {
    Index reservoir_size = 500;   ///< N_r
    double spectral_radius = 0.9; ///< rho, applied to the reservoir matrix
    double input_strength = 0.5;  ///< g
    double leak_rate = 0.5;       ///< eps in [0, 1]
    double ridge_lambda = 1e-7;   ///< Tikhonov regularizer, > 0
    std::uint64_t seed = 1;

    void validate() const;
};

/// Reservoir plus trained readout. The reservoir matrices are a pure
/// function of (seed, N_r, rho, P), so model files may store just the seed.
struct EsnModel {
    EsnConfig config;
    Index input_dim = 0;       ///< P
    Eigen::MatrixXd reservoir; ///< W, N_r x N_r, scaled to spectral radius rho
    Eigen::MatrixXd input_map; ///< v, N_r x P
    Eigen::MatrixXd readout;   ///< W_out, N_r x L
    Eigen::VectorXd offset;    ///< b, length L

    std::string trained_on;
    Index n_train = 0;

    Index output_dim() const { return readout.cols(); }
};

/// Exact spectral radius of a dense matrix (largest eigenvalue modulus).
double spectral_radius(const Eigen::MatrixXd& matrix);

/// Draw the reservoir and input matrices from i.i.d. uniform [-1, 1] with
/// the config seed and rescale the reservoir to the target spectral radius.
/// Deterministic across platforms.
void init_reservoir(const EsnConfig& config, Index input_dim, Eigen::MatrixXd& reservoir,
                    Eigen::MatrixXd& input_map);

/// Leaky state update x' = (1-eps) x + eps tanh(W x + g v u).
Eigen::VectorXd esn_step(const EsnModel& model, const Eigen::VectorXd& state,
                         const Eigen::VectorXd& input);

/// Drive the reservoir from the zero state through the first
/// n_warmup + n_train rows of `series`, discarding the warmup states.
/// Row k of the result is the state after consuming series row
/// n_warmup + k, so it pairs with whatever target the caller aligns there.
Eigen::MatrixXd drive(const EsnModel& model, const Eigen::MatrixXd& series, Index n_warmup,
                      Index n_train);

/// Ridge regression with a mean offset:
///   W_out = (X^T A X + lambda I)^-1 X^T A Y,  b = mean(Y - X W_out),
/// where A centers the rows. Solved on centered data with iterative
/// refinement so the normal equations hold tightly even for tiny lambda.
void fit_ridge(const Eigen::MatrixXd& states, const Eigen::MatrixXd& targets, double lambda,
               Eigen::MatrixXd& readout, Eigen::VectorXd& offset);

/// Autonomous rollout: alternate readout y = x^T W_out + b^T and the state
/// update with u = y. Requires L == P.
Eigen::MatrixXd predict_closed_loop(const EsnModel& model, const Eigen::VectorXd& state,
                                    Index steps);

/// Batched variant: each column of `states` evolves independently with its
/// own feedback loop. Returns one steps x P block per initial state.
std::vector<Eigen::MatrixXd> predict_closed_loop_batch(const EsnModel& model,
                                                       const Eigen::MatrixXd& states, Index steps);

/// Reservoir state after driving the zero state through the given window.
Eigen::VectorXd resynchronize(const EsnModel& model, const Eigen::MatrixXd& window);

/// Batched resynchronization: window k lives in windows[k] (rows oldest
/// first); states come back as columns.
Eigen::MatrixXd resynchronize_batch(const EsnModel& model,
                                    const std::vector<Eigen::MatrixXd>& windows);

/// Model file IO. By default only the seed and the trained readout are
/// stored; `store_matrices` embeds the full reservoir too.
nlohmann::json to_json(const EsnModel& model, bool store_matrices = false);
EsnModel model_from_json(const nlohmann::json& j);

}  // namespace voltcast::esn
