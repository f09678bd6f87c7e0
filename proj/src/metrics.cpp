#include "voltcast/metrics.hpp"

#include "voltcast/fft.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace voltcast::metrics {

double smape(const Eigen::MatrixXd& prediction, const Eigen::MatrixXd& target) {
    if (prediction.rows() != target.rows() || prediction.cols() != target.cols()) {
        throw std::invalid_argument("smape: shape mismatch");
    }
    if (prediction.rows() < 1) {
        throw std::invalid_argument("smape: need at least one step");
    }
    double sum = 0.0;
    for (Eigen::Index j = 0; j < prediction.rows(); ++j) {
        const double num = (target.row(j) - prediction.row(j)).norm();
        const double den = target.row(j).norm() + prediction.row(j).norm();
        if (den > 0.0) {
            sum += num / den;
        }
    }
    return 200.0 / static_cast<double>(prediction.rows()) * sum;
}

VptResult vpt(const Eigen::MatrixXd& prediction, const Eigen::MatrixXd& target,
              const VptParams& params) {
    if (params.e_bar <= 0.0) {
        throw std::invalid_argument("vpt: e_bar must be positive");
    }
    if (prediction.rows() < params.n_pred || target.rows() < params.n_pred) {
        throw std::invalid_argument("vpt: sequences must cover the n_pred horizon");
    }
    if (prediction.cols() != target.cols()) {
        throw std::invalid_argument("vpt: channel mismatch");
    }
    const double scale = params.lambda * params.dt;
    for (std::int64_t k = 0; k < params.n_pred; ++k) {
        const double err = (target.row(k) - prediction.row(k)).norm() / params.e_bar;
        if (err > params.delta) {
            return {scale * static_cast<double>(k), false};
        }
    }
    return {scale * static_cast<double>(params.n_pred), true};
}

double mean_pairwise_distance(const Eigen::MatrixXd& states) {
    const Eigen::Index n = states.rows();
    if (n < 2) {
        throw std::invalid_argument("mean_pairwise_distance: need at least two states");
    }
    double sum = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
        for (Eigen::Index k = j + 1; k < n; ++k) {
            sum += (states.row(j) - states.row(k)).norm();
        }
    }
    return sum / (static_cast<double>(n) * static_cast<double>(n - 1) / 2.0);
}

SpectralDistribution welch_psd(const Eigen::VectorXd& channel, const WelchParams& params) {
    const std::size_t seg = params.segment_length;
    const std::size_t hop = seg - params.overlap;
    if (!fft::is_power_of_two(seg) || params.overlap >= seg || hop == 0) {
        throw std::invalid_argument("welch_psd: invalid segment/overlap parameters");
    }
    const std::size_t n = static_cast<std::size_t>(channel.size());
    if (n < seg) {
        throw std::invalid_argument("welch_psd: series shorter than one segment (" +
                                    std::to_string(n) + " < " + std::to_string(seg) + ")");
    }

    std::vector<double> window(seg);
    for (std::size_t k = 0; k < seg; ++k) {
        window[k] = 0.5 * (1.0 - std::cos(2.0 * std::numbers::pi * static_cast<double>(k) /
                                          static_cast<double>(seg)));
    }

    const std::size_t n_segments = (n - seg) / hop + 1;
    const std::size_t n_bins = seg / 2 + 1;
    std::vector<double> averaged(n_bins, 0.0);
    std::vector<double> buffer(seg);
    for (std::size_t s = 0; s < n_segments; ++s) {
        const std::size_t start = s * hop;
        double mean = 0.0;
        for (std::size_t k = 0; k < seg; ++k) {
            mean += channel(static_cast<Eigen::Index>(start + k));
        }
        mean /= static_cast<double>(seg);
        for (std::size_t k = 0; k < seg; ++k) {
            buffer[k] = (channel(static_cast<Eigen::Index>(start + k)) - mean) * window[k];
        }
        const std::vector<double> power = fft::power_spectrum(buffer);
        for (std::size_t k = 0; k < n_bins; ++k) {
            const double one_sided = (k == 0 || k == seg / 2) ? power[k] : 2.0 * power[k];
            averaged[k] += one_sided;
        }
    }

    SpectralDistribution dist;
    dist.frequencies.resize(n_bins);
    dist.mass.resize(n_bins);
    dist.cumulative.resize(n_bins);
    double total = 0.0;
    for (std::size_t k = 0; k < n_bins; ++k) {
        total += averaged[k];
    }
    if (total <= 0.0) {
        throw std::runtime_error("welch_psd: zero spectral mass (constant input)");
    }
    double running = 0.0;
    for (std::size_t k = 0; k < n_bins; ++k) {
        dist.frequencies[k] = static_cast<double>(k) / static_cast<double>(seg);
        dist.mass[k] = averaged[k] / total;
        running += dist.mass[k];
        dist.cumulative[k] = running;
    }
    dist.cumulative.back() = 1.0;
    return dist;
}

namespace {

void check_normalized(const SpectralDistribution& dist, const char* name) {
    if (dist.mass.empty() || dist.mass.size() != dist.frequencies.size()) {
        throw std::invalid_argument(std::string("wasserstein2: malformed distribution ") + name);
    }
    double total = 0.0;
    for (double m : dist.mass) {
        if (m < 0.0) {
            throw std::invalid_argument(std::string("wasserstein2: negative mass in ") + name);
        }
        total += m;
    }
    if (std::abs(total - 1.0) > 1e-9) {
        throw std::invalid_argument(std::string("wasserstein2: unnormalized distribution ") + name);
    }
}

}  // namespace

double wasserstein2(const SpectralDistribution& a, const SpectralDistribution& b) {
    check_normalized(a, "a");
    check_normalized(b, "b");

    // Both quantile functions are right-continuous steps; integrate the
    // squared difference piecewise between merged cumulative levels.
    std::size_t i = 0;
    std::size_t j = 0;
    double level = 0.0;
    double cost = 0.0;
    double cum_a = a.mass[0];
    double cum_b = b.mass[0];
    while (true) {
        while (i + 1 < a.mass.size() && cum_a <= level) {
            cum_a += a.mass[++i];
        }
        while (j + 1 < b.mass.size() && cum_b <= level) {
            cum_b += b.mass[++j];
        }
        const double next = std::min({cum_a, cum_b, 1.0});
        if (next > level) {
            const double diff = a.frequencies[i] - b.frequencies[j];
            cost += (next - level) * diff * diff;
            level = next;
        }
        if (level >= 1.0 - 1e-15) {
            break;
        }
        if (cum_a <= level && i + 1 == a.mass.size()) {
            break;
        }
        if (cum_b <= level && j + 1 == b.mass.size()) {
            break;
        }
    }
    return cost;
}

double wasserstein_score(const Eigen::MatrixXd& prediction, const Eigen::MatrixXd& target,
                         const WelchParams& params) {
    if (prediction.cols() != target.cols()) {
        throw std::invalid_argument("wasserstein_score: channel-count mismatch");
    }
    double sum = 0.0;
    for (Eigen::Index c = 0; c < prediction.cols(); ++c) {
        sum += wasserstein2(welch_psd(prediction.col(c), params), welch_psd(target.col(c), params));
    }
    return sum / static_cast<double>(prediction.cols());
}

}  // namespace voltcast::metrics
