#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <vector>

namespace voltcast::metrics {

/// Normalized one-sided power spectrum on a uniform frequency grid
/// (cycles per sample), treated as a discrete probability distribution.
struct SpectralDistribution {
    std::vector<double> frequencies;
    std::vector<double> mass;        ///< nonnegative, sums to 1
    std::vector<double> cumulative;  ///< running sums, last value 1
};

/// Welch estimator settings, fixed project-wide so validation and test
/// scores are computed by the identical code path.
struct WelchParams {
    std::size_t segment_length = 256;
    std::size_t overlap = 128;
};

/// Valid-prediction-time parameters.
struct VptParams {
    double delta = 0.2;        ///< normalized error threshold
    std::int64_t n_ini = 1000;   ///< resynchronization length
    std::int64_t n_pred = 4000;  ///< evaluation horizon in steps
    double e_bar = 1.0;        ///< mean pairwise distance of reference states
    double lambda = 1.0;       ///< largest Lyapunov exponent, 1/time
    double dt = 1.0;           ///< sampling step, time units
};

struct VptResult {
    double value = 0.0;    ///< Lyapunov time units
    bool censored = false; ///< no step exceeded the threshold
};

/// Symmetric mean absolute percentage error in [0, 200]. Steps where both
/// vectors are zero contribute 0.
double smape(const Eigen::MatrixXd& prediction, const Eigen::MatrixXd& target);

/// Valid prediction time in Lyapunov time units. The inputs hold the
/// n_pred steps immediately after the resynchronization point, so row k
/// (0-based) corresponds to time index N_ini + k + 1.
VptResult vpt(const Eigen::MatrixXd& prediction, const Eigen::MatrixXd& target,
              const VptParams& params);

/// Mean Euclidean distance over all unordered pairs of rows.
double mean_pairwise_distance(const Eigen::MatrixXd& states);

/// Welch power spectral density: Hann-windowed, mean-detrended segments
/// with 50% overlap, averaged and normalized to unit mass over the
/// nonnegative frequencies.
SpectralDistribution welch_psd(const Eigen::VectorXd& channel, const WelchParams& params = {});

/// Squared-quantile transport cost between two discrete distributions:
/// the integral of |F1^-1 - F2^-1|^2 over (0, 1), evaluated exactly on the
/// merged cumulative breakpoints.
double wasserstein2(const SpectralDistribution& a, const SpectralDistribution& b);

/// Channel-averaged spectral transport distance between two trajectories.
double wasserstein_score(const Eigen::MatrixXd& prediction, const Eigen::MatrixXd& target,
                         const WelchParams& params = {});

}  // namespace voltcast::metrics
