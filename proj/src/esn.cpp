#include "voltcast/esn.hpp"

#include "voltcast/rng.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <nlohmann/json.hpp>

#include <cmath>
#include <stdexcept>
#include <string>

namespace voltcast::esn {

void EsnConfig::validate() const {
    if (reservoir_size < 1) {
        throw std::invalid_argument("EsnConfig: reservoir size must be >= 1");
    }
    if (leak_rate < 0.0 || leak_rate > 1.0) {
        throw std::invalid_argument("EsnConfig: leak rate must lie in [0, 1]");
    }
    if (ridge_lambda <= 0.0) {
        throw std::invalid_argument("EsnConfig: ridge lambda must be > 0");
    }
    if (spectral_radius <= 0.0 || input_strength <= 0.0) {
        throw std::invalid_argument("EsnConfig: rho and g must be > 0");
    }
}

double spectral_radius(const Eigen::MatrixXd& matrix) {
    // Schur-based eigenvalues: plain power iteration stalls when the
    // dominant eigenvalue is a complex pair, which is common for random
    // reservoirs.
    Eigen::EigenSolver<Eigen::MatrixXd> solver(matrix, /*computeEigenvectors=*/false);
    return solver.eigenvalues().cwiseAbs().maxCoeff();
}

void init_reservoir(const EsnConfig& config, Index input_dim, Eigen::MatrixXd& reservoir,
                    Eigen::MatrixXd& input_map) {
    config.validate();
    if (input_dim < 1) {
        throw std::invalid_argument("init_reservoir: input dimension must be >= 1");
    }

    const Index n = config.reservoir_size;
    for (int attempt = 0; attempt < 3; ++attempt) {
        auto gen = rng::make_engine(
            rng::derive_seed(config.seed, 0x7265'7365'7276'0000ULL + static_cast<std::uint64_t>(attempt)));
        reservoir.resize(n, n);
        for (Index i = 0; i < n; ++i) {
            for (Index j = 0; j < n; ++j) {
                reservoir(i, j) = rng::uniform_pm1(gen);
            }
        }
        input_map.resize(n, input_dim);
        for (Index i = 0; i < n; ++i) {
            for (Index j = 0; j < input_dim; ++j) {
                input_map(i, j) = rng::uniform_pm1(gen);
            }
        }
        const double raw_radius = spectral_radius(reservoir);
        if (raw_radius > 1e-12) {
            reservoir *= config.spectral_radius / raw_radius;
            return;
        }
    }
    throw std::runtime_error("init_reservoir: raw reservoir has zero spectral radius");
}

Eigen::VectorXd esn_step(const EsnModel& model, const Eigen::VectorXd& state,
                         const Eigen::VectorXd& input) {
    if (state.size() != model.config.reservoir_size || input.size() != model.input_dim) {
        throw std::invalid_argument("esn_step: dimension mismatch");
    }
    const double eps = model.config.leak_rate;
    return (1.0 - eps) * state +
           eps * (model.reservoir * state + model.config.input_strength * (model.input_map * input))
                     .array()
                     .tanh()
                     .matrix();
}

Eigen::MatrixXd drive(const EsnModel& model, const Eigen::MatrixXd& series, Index n_warmup,
                      Index n_train) {
    if (n_warmup < 0 || n_train < 0) {
        throw std::invalid_argument("drive: negative segment length");
    }
    if (series.rows() < n_warmup + n_train) {
        throw std::invalid_argument("drive: series shorter than warmup + train");
    }
    if (series.cols() != model.input_dim) {
        throw std::invalid_argument("drive: channel mismatch");
    }
    Eigen::VectorXd state = Eigen::VectorXd::Zero(model.config.reservoir_size);
    for (Index n = 0; n < n_warmup; ++n) {
        state = esn_step(model, state, series.row(n));
    }
    Eigen::MatrixXd states(n_train, model.config.reservoir_size);
    for (Index n = 0; n < n_train; ++n) {
        state = esn_step(model, state, series.row(n_warmup + n));
        states.row(n) = state;
    }
    return states;
}

void fit_ridge(const Eigen::MatrixXd& states, const Eigen::MatrixXd& targets, double lambda,
               Eigen::MatrixXd& readout, Eigen::VectorXd& offset) {
    if (states.rows() != targets.rows() || states.rows() < 1) {
        throw std::invalid_argument("fit_ridge: need matching, nonempty states and targets");
    }
    if (!states.allFinite() || !targets.allFinite()) {
        throw std::invalid_argument("fit_ridge: non-finite inputs");
    }
    if (lambda <= 0.0) {
        throw std::invalid_argument("fit_ridge: lambda must be > 0");
    }

    const Eigen::RowVectorXd x_mean = states.colwise().mean();
    const Eigen::RowVectorXd y_mean = targets.colwise().mean();
    const Eigen::MatrixXd xc = states.rowwise() - x_mean;
    const Eigen::MatrixXd yc = targets.rowwise() - y_mean;

    Eigen::MatrixXd gram = xc.transpose() * xc;
    gram.diagonal().array() += lambda;
    const Eigen::MatrixXd rhs = xc.transpose() * yc;

    Eigen::LDLT<Eigen::MatrixXd> ldlt(gram);
    readout = ldlt.solve(rhs);
    // Two refinement sweeps tighten the normal-equation residual when
    // lambda is tiny and the Gram matrix is nearly singular.
    for (int sweep = 0; sweep < 2; ++sweep) {
        const Eigen::MatrixXd residual = rhs - gram * readout;
        readout += ldlt.solve(residual);
    }
    offset = (y_mean - x_mean * readout).transpose();
}

Eigen::MatrixXd predict_closed_loop(const EsnModel& model, const Eigen::VectorXd& state,
                                    Index steps) {
    const auto blocks = predict_closed_loop_batch(model, state, steps);
    return blocks.front();
}

std::vector<Eigen::MatrixXd> predict_closed_loop_batch(const EsnModel& model,
                                                       const Eigen::MatrixXd& states, Index steps) {
    if (model.output_dim() != model.input_dim) {
        throw std::invalid_argument("closed-loop prediction requires L == P");
    }
    if (steps < 0) {
        throw std::invalid_argument("closed-loop prediction: steps must be >= 0");
    }
    if (states.rows() != model.config.reservoir_size) {
        throw std::invalid_argument("closed-loop prediction: state dimension mismatch");
    }

    const Index n_batch = states.cols();
    const double eps = model.config.leak_rate;
    std::vector<Eigen::MatrixXd> out(static_cast<std::size_t>(n_batch),
                                     Eigen::MatrixXd(steps, model.input_dim));
    Eigen::MatrixXd x = states;
    for (Index k = 0; k < steps; ++k) {
        // y = x^T W_out + b^T, one column per batch member.
        Eigen::MatrixXd y = model.readout.transpose() * x;
        y.colwise() += model.offset;
        for (Index c = 0; c < n_batch; ++c) {
            out[static_cast<std::size_t>(c)].row(k) = y.col(c);
        }
        x = ((1.0 - eps) * x +
             eps * (model.reservoir * x + model.config.input_strength * (model.input_map * y))
                       .array()
                       .tanh()
                       .matrix())
                .eval();
    }
    return out;
}

Eigen::VectorXd resynchronize(const EsnModel& model, const Eigen::MatrixXd& window) {
    Eigen::VectorXd state = Eigen::VectorXd::Zero(model.config.reservoir_size);
    for (Index n = 0; n < window.rows(); ++n) {
        state = esn_step(model, state, window.row(n));
    }
    return state;
}

Eigen::MatrixXd resynchronize_batch(const EsnModel& model,
                                    const std::vector<Eigen::MatrixXd>& windows) {
    if (windows.empty()) {
        throw std::invalid_argument("resynchronize_batch: no windows");
    }
    const Index length = windows.front().rows();
    const Index n_batch = static_cast<Index>(windows.size());
    for (const auto& w : windows) {
        if (w.rows() != length || w.cols() != model.input_dim) {
            throw std::invalid_argument("resynchronize_batch: ragged windows");
        }
    }
    const double eps = model.config.leak_rate;
    Eigen::MatrixXd x = Eigen::MatrixXd::Zero(model.config.reservoir_size, n_batch);
    Eigen::MatrixXd u(model.input_dim, n_batch);
    for (Index n = 0; n < length; ++n) {
        for (Index c = 0; c < n_batch; ++c) {
            u.col(c) = windows[static_cast<std::size_t>(c)].row(n);
        }
        x = ((1.0 - eps) * x +
             eps * (model.reservoir * x + model.config.input_strength * (model.input_map * u))
                       .array()
                       .tanh()
                       .matrix())
                .eval();
    }
    return x;
}

nlohmann::json to_json(const EsnModel& model, bool store_matrices) {
    nlohmann::json j;
    j["schema"] = "voltcast.model/1";
    j["kind"] = "esn";
    j["config"] = {{"reservoir_size", model.config.reservoir_size},
                   {"spectral_radius", model.config.spectral_radius},
                   {"input_strength", model.config.input_strength},
                   {"leak_rate", model.config.leak_rate},
                   {"ridge_lambda", model.config.ridge_lambda},
                   {"seed", model.config.seed}};
    j["input_dim"] = model.input_dim;

    std::vector<std::vector<double>> readout(static_cast<std::size_t>(model.readout.rows()));
    for (Index r = 0; r < model.readout.rows(); ++r) {
        readout[static_cast<std::size_t>(r)].assign(model.readout.row(r).begin(),
                                                    model.readout.row(r).end());
    }
    j["readout"] = readout;
    j["offset"] = std::vector<double>(model.offset.begin(), model.offset.end());

    if (store_matrices) {
        std::vector<std::vector<double>> w(static_cast<std::size_t>(model.reservoir.rows()));
        for (Index r = 0; r < model.reservoir.rows(); ++r) {
            w[static_cast<std::size_t>(r)].assign(model.reservoir.row(r).begin(),
                                                  model.reservoir.row(r).end());
        }
        std::vector<std::vector<double>> v(static_cast<std::size_t>(model.input_map.rows()));
        for (Index r = 0; r < model.input_map.rows(); ++r) {
            v[static_cast<std::size_t>(r)].assign(model.input_map.row(r).begin(),
                                                  model.input_map.row(r).end());
        }
        j["reservoir"] = w;
        j["input_map"] = v;
    }
    j["training"] = {{"system", model.trained_on}, {"n_train", model.n_train}};
    return j;
}

EsnModel model_from_json(const nlohmann::json& j) {
    if (j.value("kind", "") != "esn") {
        throw std::invalid_argument("model file is not an ESN model");
    }
    EsnModel model;
    const auto& c = j.at("config");
    model.config.reservoir_size = c.at("reservoir_size").get<Index>();
    model.config.spectral_radius = c.at("spectral_radius").get<double>();
    model.config.input_strength = c.at("input_strength").get<double>();
    model.config.leak_rate = c.at("leak_rate").get<double>();
    model.config.ridge_lambda = c.at("ridge_lambda").get<double>();
    model.config.seed = c.at("seed").get<std::uint64_t>();
    model.config.validate();
    model.input_dim = j.at("input_dim").get<Index>();

    auto load_matrix = [](const nlohmann::json& rows) {
        Eigen::MatrixXd m(rows.size(), rows.empty() ? 0 : rows.front().size());
        for (std::size_t r = 0; r < rows.size(); ++r) {
            const auto& row = rows.at(r);
            for (std::size_t cidx = 0; cidx < row.size(); ++cidx) {
                m(static_cast<Index>(r), static_cast<Index>(cidx)) = row.at(cidx).get<double>();
            }
        }
        return m;
    };

    model.readout = load_matrix(j.at("readout"));
    const auto off = j.at("offset").get<std::vector<double>>();
    model.offset = Eigen::Map<const Eigen::VectorXd>(off.data(), static_cast<Index>(off.size()));

    if (j.contains("reservoir")) {
        model.reservoir = load_matrix(j.at("reservoir"));
        model.input_map = load_matrix(j.at("input_map"));
    } else {
        init_reservoir(model.config, model.input_dim, model.reservoir, model.input_map);
    }
    if (j.contains("training")) {
        model.trained_on = j["training"].value("system", "");
        model.n_train = j["training"].value("n_train", Index{0});
    }
    return model;
}

}  // namespace voltcast::esn
