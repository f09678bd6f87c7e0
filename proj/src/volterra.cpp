#include "voltcast/volterra.hpp"

#include <Eigen/SVD>
#include <lapacke.h>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <stdexcept>
#include <string>

namespace voltcast::volterra {

namespace {

/// Keep singular values >= rel_tol * sigma_max; error out on rank 0.
Index truncation_rank(const Eigen::VectorXd& singular_values, double rel_tol) {
    if (singular_values.size() == 0 || singular_values(0) <= 0.0) {
        throw std::runtime_error("least-squares solve: feature matrix is zero");
    }
    const double cutoff = rel_tol * singular_values(0);
    Index rank = 0;
    for (Eigen::Index i = 0; i < singular_values.size(); ++i) {
        if (singular_values(i) >= cutoff) {
            ++rank;
        }
    }
    if (rank == 0) {
        throw std::runtime_error("least-squares solve: cutoff removed all singular values");
    }
    return rank;
}

void check_finite(const Eigen::MatrixXd& m, const char* what) {
    if (!m.allFinite()) {
        throw std::invalid_argument(std::string(what) + " contains non-finite values");
    }
}

struct ThinSvd {
    Eigen::MatrixXd u;
    Eigen::VectorXd singular_values;
    Eigen::MatrixXd vt;
};

/// Thin SVD through LAPACK's divide-and-conquer routine. The brute-force
/// solver uses it so its pseudoinverse has the standard dense-LAPACK
/// numerical behavior.
ThinSvd svd_lapack(const Eigen::MatrixXd& matrix) {
    const lapack_int rows = static_cast<lapack_int>(matrix.rows());
    const lapack_int cols = static_cast<lapack_int>(matrix.cols());
    const lapack_int k = std::min(rows, cols);
    ThinSvd out;
    out.u.resize(rows, k);
    out.singular_values.resize(k);
    out.vt.resize(k, cols);
    Eigen::MatrixXd work = matrix;
    const lapack_int info =
        LAPACKE_dgesdd(LAPACK_COL_MAJOR, 'S', rows, cols, work.data(), rows,
                       out.singular_values.data(), out.u.data(), rows, out.vt.data(), k);
    if (info != 0) {
        throw std::runtime_error("SVD failed to converge (dgesdd info=" + std::to_string(info) + ")");
    }
    return out;
}

void check_training_inputs(const Eigen::MatrixXd& series, const Eigen::MatrixXd& targets,
                           const VolterraConfig& config) {
    config.validate();
    check_finite(series, "series");
    check_finite(targets, "targets");
    if (series.cols() != config.input_dim) {
        throw std::invalid_argument("series has " + std::to_string(series.cols()) +
                                    " channels, config expects " + std::to_string(config.input_dim));
    }
    const Index n_rows = series.rows() - config.max_delay + 1;
    if (n_rows < 1) {
        throw std::invalid_argument("series shorter than the maximum delay");
    }
    if (targets.rows() != n_rows || targets.cols() != config.output_dim) {
        throw std::invalid_argument("targets must be " + std::to_string(n_rows) + " x " +
                                    std::to_string(config.output_dim));
    }
}

}  // namespace

Index VolterraConfig::coefficient_count() const {
    const std::uint64_t pm = static_cast<std::uint64_t>(input_dim * max_delay);
    return static_cast<Index>(binomial(pm + static_cast<std::uint64_t>(max_degree), pm));
}

void VolterraConfig::validate() const {
    if (max_delay < 1 || max_degree < 1 || input_dim < 1 || output_dim < 1) {
        throw std::invalid_argument("VolterraConfig: M, D, P, L must all be >= 1");
    }
    if (svd_tolerance && (*svd_tolerance <= 0.0 || *svd_tolerance >= 1.0)) {
        throw std::invalid_argument("VolterraConfig: svd_tolerance must lie in (0, 1)");
    }
    coefficient_count();  // overflow guard on R
}

double VolterraConfig::resolve_svd_tolerance(Index n_train) const {
    if (svd_tolerance) {
        return *svd_tolerance;
    }
    return 1e-10 * std::sqrt(static_cast<double>(std::max<Index>(n_train, 1)));
}

std::uint64_t binomial(std::uint64_t n, std::uint64_t k) {
    if (k > n) {
        return 0;
    }
    k = std::min(k, n - k);
    std::uint64_t result = 1;
    for (std::uint64_t i = 1; i <= k; ++i) {
        const std::uint64_t factor = n - k + i;
        // result * factor / i is exact at every step; guard the product.
        if (result > std::numeric_limits<std::uint64_t>::max() / factor) {
            throw std::overflow_error("binomial coefficient overflows");
        }
        result = result * factor / i;
    }
    return result;
}

MonomialBasis enumerate_monomials(Index extended_dim, Index degree) {
    if (extended_dim < 1 || degree < 1) {
        throw std::invalid_argument("enumerate_monomials: I and D must be >= 1");
    }
    const std::uint64_t expected =
        binomial(static_cast<std::uint64_t>(extended_dim - 1 + degree), static_cast<std::uint64_t>(degree));
    if (expected > (std::uint64_t{1} << 32)) {
        throw std::overflow_error("monomial basis too large");
    }

    MonomialBasis basis;
    basis.extended_dim = extended_dim;
    basis.degree = degree;
    basis.entries.reserve(static_cast<std::size_t>(expected));

    std::uint64_t d_factorial = 1;
    for (Index d = 2; d <= degree; ++d) {
        d_factorial *= static_cast<std::uint64_t>(d);
    }

    // Non-decreasing tuples in lexicographic order via odometer increment.
    std::vector<Index> tuple(static_cast<std::size_t>(degree), 1);
    while (true) {
        basis.entries.push_back(tuple);

        std::uint64_t repeats = d_factorial;
        std::size_t run = 1;
        for (std::size_t d = 1; d <= tuple.size(); ++d) {
            if (d < tuple.size() && tuple[d] == tuple[d - 1]) {
                ++run;
            } else {
                for (std::uint64_t r = 2; r <= run; ++r) {
                    repeats /= r;
                }
                run = 1;
            }
        }
        basis.multiplicities.push_back(repeats);

        std::size_t pos = tuple.size();
        while (pos > 0 && tuple[pos - 1] == extended_dim) {
            --pos;
        }
        if (pos == 0) {
            break;
        }
        const Index next = tuple[pos - 1] + 1;
        for (std::size_t d = pos - 1; d < tuple.size(); ++d) {
            tuple[d] = next;
        }
    }

    if (basis.entries.size() != expected) {
        throw std::logic_error("monomial enumeration does not match the rank bound");
    }
    return basis;
}

Eigen::VectorXd build_extended_input(const Eigen::MatrixXd& series, Index n, Index max_delay) {
    if (max_delay < 1) {
        throw std::invalid_argument("build_extended_input: max_delay must be >= 1");
    }
    if (n < max_delay || n > series.rows()) {
        throw std::out_of_range("build_extended_input: need n in [M, N], got n=" + std::to_string(n));
    }
    const Index p = series.cols();
    Eigen::VectorXd u(p * max_delay + 1);
    u(0) = 1.0;
    for (Index m = 0; m < max_delay; ++m) {
        u.segment(1 + m * p, p) = series.row(n - 1 - m);
    }
    return u;
}

namespace {

Eigen::MatrixXd extended_input_matrix(const Eigen::MatrixXd& series, const VolterraConfig& config) {
    const Index n_rows = series.rows() - config.max_delay + 1;
    Eigen::MatrixXd u_tilde(n_rows, config.extended_dim());
    for (Index r = 0; r < n_rows; ++r) {
        u_tilde.row(r) = build_extended_input(series, config.max_delay + r, config.max_delay);
    }
    return u_tilde;
}

void check_full_budget(Index rows, Index cols_pow, Index element_budget) {
    if (cols_pow > element_budget || rows * cols_pow > element_budget) {
        throw std::length_error("full feature matrix exceeds the element budget");
    }
}

Index ipow_checked(Index base, Index exp, Index cap) {
    Index result = 1;
    for (Index d = 0; d < exp; ++d) {
        if (result > cap / base) {
            throw std::length_error("full feature matrix exceeds the element budget");
        }
        result *= base;
    }
    return result;
}

}  // namespace

Eigen::MatrixXd build_feature_matrix_full(const Eigen::MatrixXd& series, const VolterraConfig& config,
                                          Index element_budget) {
    config.validate();
    const Index cols = ipow_checked(config.extended_dim(), config.max_degree, element_budget);
    const Index n_rows = series.rows() - config.max_delay + 1;
    if (n_rows < 1) {
        throw std::invalid_argument("series shorter than the maximum delay");
    }
    check_full_budget(n_rows, cols, element_budget);

    Eigen::MatrixXd u_full(n_rows, cols);
    for (Index r = 0; r < n_rows; ++r) {
        const Eigen::VectorXd u = build_extended_input(series, config.max_delay + r, config.max_delay);
        Eigen::VectorXd row = u;
        for (Index d = 2; d <= config.max_degree; ++d) {
            row = tensor::kron(row, u);
        }
        u_full.row(r) = row;
    }
    return u_full;
}

Eigen::MatrixXd build_feature_matrix_khatri_rao(const Eigen::MatrixXd& series,
                                                const VolterraConfig& config, Index element_budget) {
    config.validate();
    const Index cols = ipow_checked(config.extended_dim(), config.max_degree, element_budget);
    const Eigen::MatrixXd u_tilde = extended_input_matrix(series, config);
    check_full_budget(u_tilde.rows(), cols, element_budget);

    Eigen::MatrixXd u_full = u_tilde;
    for (Index d = 2; d <= config.max_degree; ++d) {
        u_full = tensor::khatri_rao_rowwise(u_full, u_tilde);
    }
    return u_full;
}

Eigen::MatrixXd build_feature_matrix_compressed(const Eigen::MatrixXd& series,
                                                const VolterraConfig& config,
                                                const MonomialBasis& basis) {
    config.validate();
    const Eigen::MatrixXd u_tilde = extended_input_matrix(series, config);
    Eigen::MatrixXd uc(u_tilde.rows(), basis.size());
    for (Eigen::Index j = 0; j < basis.size(); ++j) {
        const auto& tuple = basis.entries[static_cast<std::size_t>(j)];
        uc.col(j) = u_tilde.col(tuple[0] - 1);
        for (std::size_t d = 1; d < tuple.size(); ++d) {
            uc.col(j).array() *= u_tilde.col(tuple[d] - 1).array();
        }
    }
    return uc;
}

NaiveFit fit_naive_detailed(const Eigen::MatrixXd& series, const Eigen::MatrixXd& targets,
                            const VolterraConfig& config, Index element_budget) {
    check_training_inputs(series, targets, config);
    const Eigen::MatrixXd u_full = build_feature_matrix_full(series, config, element_budget);

    const ThinSvd svd = svd_lapack(u_full);
    const Eigen::VectorXd& sigma = svd.singular_values;

    Eigen::MatrixXd full_h;
    if (targets.isZero(0.0)) {
        full_h = Eigen::MatrixXd::Zero(u_full.cols(), targets.cols());
    } else {
        const Index rank = truncation_rank(sigma, config.resolve_svd_tolerance(u_full.rows()));
        // Form the pseudoinverse explicitly and multiply, exactly as a
        // dense pinv call would.
        const Eigen::MatrixXd pinv = svd.vt.topRows(rank).transpose() *
                                     sigma.head(rank).cwiseInverse().asDiagonal() *
                                     svd.u.leftCols(rank).transpose();
        full_h = pinv * targets;
    }

    NaiveFit fit;
    fit.model.config = config;
    fit.model.basis = enumerate_monomials(config.extended_dim(), config.max_degree);
    fit.model.coefficients = compress_full(full_h, config, fit.model.basis);
    fit.model.n_train = u_full.rows();
    fit.full_coefficients = std::move(full_h);
    fit.singular_values = sigma;
    return fit;
}

VolterraModel fit_naive(const Eigen::MatrixXd& series, const Eigen::MatrixXd& targets,
                        const VolterraConfig& config, Index element_budget) {
    return fit_naive_detailed(series, targets, config, element_budget).model;
}

VolterraModel fit_symmetric(const Eigen::MatrixXd& series, const Eigen::MatrixXd& targets,
                            const VolterraConfig& config) {
    check_training_inputs(series, targets, config);

    VolterraModel model;
    model.config = config;
    model.basis = enumerate_monomials(config.extended_dim(), config.max_degree);

    const Eigen::MatrixXd uc = build_feature_matrix_compressed(series, config, model.basis);
    model.n_train = uc.rows();

    Eigen::VectorXd sqrt_mult(model.basis.size());
    for (Eigen::Index j = 0; j < sqrt_mult.size(); ++j) {
        sqrt_mult(j) = std::sqrt(static_cast<double>(model.basis.multiplicities[static_cast<std::size_t>(j)]));
    }

    if (targets.isZero(0.0)) {
        model.coefficients = Eigen::MatrixXd::Zero(model.basis.size(), config.output_dim);
        return model;
    }

    // The sqrt(c) column scaling makes the compressed minimal-norm solution
    // agree with the minimal-norm solution of the full exponential system.
    const Eigen::MatrixXd w_matrix = uc * sqrt_mult.asDiagonal();
    Eigen::BDCSVD<Eigen::MatrixXd> svd(w_matrix, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Index rank = truncation_rank(svd.singularValues(), config.resolve_svd_tolerance(uc.rows()));

    const Eigen::MatrixXd w = svd.matrixV().leftCols(rank) *
                              svd.singularValues().head(rank).cwiseInverse().asDiagonal() *
                              (svd.matrixU().leftCols(rank).transpose() * targets);
    model.coefficients = sqrt_mult.cwiseInverse().asDiagonal() * w;
    return model;
}

double training_residual(const VolterraModel& model, const Eigen::MatrixXd& series,
                         const Eigen::MatrixXd& targets) {
    const Eigen::MatrixXd uc = build_feature_matrix_compressed(series, model.config, model.basis);
    Eigen::VectorXd mult(model.basis.size());
    for (Eigen::Index j = 0; j < mult.size(); ++j) {
        mult(j) = static_cast<double>(model.basis.multiplicities[static_cast<std::size_t>(j)]);
    }
    const double y_norm = targets.norm();
    const double err = (uc * mult.asDiagonal() * model.coefficients - targets).norm();
    return y_norm > 0.0 ? err / y_norm : err;
}

Eigen::MatrixXd expand_full(const VolterraModel& model, Index element_budget) {
    const Index i_dim = model.config.extended_dim();
    const Index degree = model.config.max_degree;
    const Index cols = ipow_checked(i_dim, degree, element_budget);
    check_full_budget(model.config.output_dim, cols, element_budget);

    std::map<std::vector<Index>, Index> lookup;
    for (Index j = 0; j < model.basis.size(); ++j) {
        lookup.emplace(model.basis.entries[static_cast<std::size_t>(j)], j);
    }

    const std::vector<Index> extents(static_cast<std::size_t>(degree), i_dim);
    Eigen::MatrixXd full(cols, model.config.output_dim);
    for (Index k = 1; k <= cols; ++k) {
        auto idx = tensor::multi_index_decode(k, extents);
        std::sort(idx.begin(), idx.end());
        full.row(k - 1) = model.coefficients.row(lookup.at(idx));
    }
    return full;
}

Eigen::MatrixXd compress_full(const Eigen::MatrixXd& full, const VolterraConfig& config,
                              const MonomialBasis& basis) {
    const Index i_dim = config.extended_dim();
    const Index degree = config.max_degree;
    const std::vector<Index> extents(static_cast<std::size_t>(degree), i_dim);
    if (full.rows() != tensor::element_count(extents)) {
        throw std::invalid_argument("compress_full: row count must be I^D");
    }

    std::map<std::vector<Index>, Index> lookup;
    for (Index j = 0; j < basis.size(); ++j) {
        lookup.emplace(basis.entries[static_cast<std::size_t>(j)], j);
    }

    Eigen::MatrixXd compressed = Eigen::MatrixXd::Zero(basis.size(), full.cols());
    for (Index k = 1; k <= full.rows(); ++k) {
        auto idx = tensor::multi_index_decode(k, extents);
        std::sort(idx.begin(), idx.end());
        compressed.row(lookup.at(idx)) += full.row(k - 1);
    }
    for (Index j = 0; j < basis.size(); ++j) {
        compressed.row(j) /= static_cast<double>(basis.multiplicities[static_cast<std::size_t>(j)]);
    }
    return compressed;
}

namespace {

Eigen::VectorXd compressed_feature_row(const VolterraModel& model, const Eigen::VectorXd& u) {
    Eigen::VectorXd row(model.basis.size());
    for (Index j = 0; j < model.basis.size(); ++j) {
        const auto& tuple = model.basis.entries[static_cast<std::size_t>(j)];
        double value = 1.0;
        for (Index slot : tuple) {
            value *= u(slot - 1);
        }
        row(j) = value * static_cast<double>(model.basis.multiplicities[static_cast<std::size_t>(j)]);
    }
    return row;
}

}  // namespace

Eigen::VectorXd predict_open_loop(const VolterraModel& model, const Eigen::MatrixXd& series, Index n) {
    const Eigen::VectorXd u = build_extended_input(series, n, model.config.max_delay);
    return model.coefficients.transpose() * compressed_feature_row(model, u);
}

Eigen::MatrixXd predict_closed_loop(const VolterraModel& model, const Eigen::MatrixXd& warmup,
                                    Index steps) {
    if (model.config.output_dim != model.config.input_dim) {
        throw std::invalid_argument("closed-loop prediction requires L == P");
    }
    if (steps < 0) {
        throw std::invalid_argument("closed-loop prediction: steps must be >= 0");
    }
    const Index m = model.config.max_delay;
    const Index p = model.config.input_dim;
    if (warmup.rows() < m || warmup.cols() != p) {
        throw std::invalid_argument("closed-loop prediction: warmup window must hold M states");
    }

    // Delay buffer, newest state last.
    Eigen::MatrixXd buffer = warmup.bottomRows(m);
    Eigen::MatrixXd out(steps, p);
    for (Index k = 0; k < steps; ++k) {
        Eigen::VectorXd u(p * m + 1);
        u(0) = 1.0;
        for (Index d = 0; d < m; ++d) {
            u.segment(1 + d * p, p) = buffer.row(m - 1 - d);
        }
        const Eigen::VectorXd y = model.coefficients.transpose() * compressed_feature_row(model, u);
        out.row(k) = y;
        if (m > 1) {
            buffer.topRows(m - 1) = buffer.bottomRows(m - 1).eval();
        }
        buffer.row(m - 1) = y;
    }
    return out;
}

nlohmann::json to_json(const VolterraModel& model) {
    nlohmann::json j;
    j["schema"] = "voltcast.model/1";
    j["kind"] = "tn";
    j["config"] = {{"max_delay", model.config.max_delay},
                   {"max_degree", model.config.max_degree},
                   {"input_dim", model.config.input_dim},
                   {"output_dim", model.config.output_dim}};
    if (model.config.svd_tolerance) {
        j["config"]["svd_tolerance"] = *model.config.svd_tolerance;
    }
    std::vector<std::vector<double>> coeffs(static_cast<std::size_t>(model.coefficients.rows()));
    for (Eigen::Index r = 0; r < model.coefficients.rows(); ++r) {
        coeffs[static_cast<std::size_t>(r)].assign(model.coefficients.row(r).begin(),
                                                   model.coefficients.row(r).end());
    }
    j["coefficients"] = coeffs;
    j["training"] = {{"system", model.trained_on}, {"seed", model.seed}, {"n_train", model.n_train}};
    return j;
}

VolterraModel model_from_json(const nlohmann::json& j) {
    if (j.value("kind", "") != "tn") {
        throw std::invalid_argument("model file is not a truncated-Volterra model");
    }
    VolterraModel model;
    const auto& c = j.at("config");
    model.config.max_delay = c.at("max_delay").get<Index>();
    model.config.max_degree = c.at("max_degree").get<Index>();
    model.config.input_dim = c.at("input_dim").get<Index>();
    model.config.output_dim = c.at("output_dim").get<Index>();
    if (c.contains("svd_tolerance")) {
        model.config.svd_tolerance = c.at("svd_tolerance").get<double>();
    }
    model.config.validate();
    model.basis = enumerate_monomials(model.config.extended_dim(), model.config.max_degree);

    const auto& coeffs = j.at("coefficients");
    if (static_cast<Index>(coeffs.size()) != model.basis.size()) {
        throw std::invalid_argument("model file: coefficient row count does not match the basis");
    }
    model.coefficients.resize(model.basis.size(), model.config.output_dim);
    for (Index r = 0; r < model.basis.size(); ++r) {
        const auto& row = coeffs.at(static_cast<std::size_t>(r));
        if (static_cast<Index>(row.size()) != model.config.output_dim) {
            throw std::invalid_argument("model file: coefficient column count mismatch");
        }
        for (Index l = 0; l < model.config.output_dim; ++l) {
            model.coefficients(r, l) = row.at(static_cast<std::size_t>(l)).get<double>();
        }
    }
    if (j.contains("training")) {
        model.trained_on = j["training"].value("system", "");
        model.seed = j["training"].value("seed", std::uint64_t{0});
        model.n_train = j["training"].value("n_train", Index{0});
    }
    return model;
}

}  // namespace voltcast::volterra
