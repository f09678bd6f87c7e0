#include "voltcast/chaos.hpp"

#include "voltcast/fft.hpp"
#include "voltcast/rng.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace voltcast::chaos {

namespace {

// Integration finer than the sampling grid keeps RK4 accurate for systems
// whose dominant period is long relative to their fastest timescale.
constexpr double kMaxInternalStep = 0.005;

int substeps_for(double dt) {
    return std::max(1, static_cast<int>(std::ceil(dt / kMaxInternalStep)));
}

Eigen::VectorXd advance(const OdeSystem& system, Eigen::VectorXd state, double dt, int substeps) {
    const double h = dt / substeps;
    for (int s = 0; s < substeps; ++s) {
        state = rk4_step(system, state, h);
    }
    return state;
}

}  // namespace

Eigen::VectorXd OdeSystem::eval_rhs(const Eigen::VectorXd& state) const {
    Eigen::VectorXd out = Eigen::VectorXd::Zero(dim);
    for (int c = 0; c < dim; ++c) {
        double value = 0.0;
        for (const PolyTerm& term : rhs[static_cast<std::size_t>(c)]) {
            double mono = term.coefficient;
            for (int v = 0; v < dim; ++v) {
                for (int e = 0; e < term.exponents[static_cast<std::size_t>(v)]; ++e) {
                    mono *= state(v);
                }
            }
            value += mono;
        }
        out(c) = value;
    }
    return out;
}

void OdeSystem::validate() const {
    if (dim != 3 && dim != 4) {
        throw std::invalid_argument("OdeSystem: dimension must be 3 or 4");
    }
    if (static_cast<int>(rhs.size()) != dim) {
        throw std::invalid_argument("OdeSystem: rhs must have one term list per component");
    }
    for (const auto& component : rhs) {
        for (const PolyTerm& term : component) {
            if (static_cast<int>(term.exponents.size()) != dim) {
                throw std::invalid_argument("OdeSystem: exponent list length mismatch");
            }
            int degree = 0;
            for (int e : term.exponents) {
                if (e < 0) {
                    throw std::invalid_argument("OdeSystem: exponents must be nonnegative");
                }
                degree += e;
            }
            if (degree > 4) {
                throw std::invalid_argument("OdeSystem: polynomial degree must be <= 4");
            }
        }
    }
    if (anchor.size() != dim) {
        throw std::invalid_argument("OdeSystem: anchor dimension mismatch");
    }
}

Eigen::VectorXd Trajectory::destandardize(const Eigen::VectorXd& standardized) const {
    return (standardized.array() * std_dev.array() + mean.array()).matrix();
}

Eigen::VectorXd rk4_step(const OdeSystem& system, const Eigen::VectorXd& state, double dt) {
    const Eigen::VectorXd k1 = system.eval_rhs(state);
    const Eigen::VectorXd k2 = system.eval_rhs(state + 0.5 * dt * k1);
    const Eigen::VectorXd k3 = system.eval_rhs(state + 0.5 * dt * k2);
    const Eigen::VectorXd k4 = system.eval_rhs(state + dt * k3);
    Eigen::VectorXd next = state + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    if (!next.allFinite()) {
        throw std::runtime_error("rk4_step: integration of " + system.name + " blew up");
    }
    return next;
}

namespace {

constexpr std::size_t kPilotSamples = 1 << 14;
constexpr double kPilotSampleStep = 0.02;
constexpr double kPilotTransient = 200.0;  // time units

/// Returns 0 when the spectrum has no peak above DC (fixed-point dynamics).
double period_from_pilot_or_zero(const OdeSystem& system) {
    const int substeps = substeps_for(kPilotSampleStep);
    Eigen::VectorXd state = system.anchor;
    const int transient_steps = static_cast<int>(kPilotTransient / kPilotSampleStep);
    for (int s = 0; s < transient_steps; ++s) {
        state = advance(system, state, kPilotSampleStep, substeps);
    }

    Eigen::MatrixXd samples(kPilotSamples, system.dim);
    for (std::size_t n = 0; n < kPilotSamples; ++n) {
        samples.row(static_cast<Eigen::Index>(n)) = state;
        state = advance(system, state, kPilotSampleStep, substeps);
    }

    std::vector<double> averaged(kPilotSamples, 0.0);
    std::vector<double> buffer(kPilotSamples);
    for (int c = 0; c < system.dim; ++c) {
        const double mean = samples.col(c).mean();
        for (std::size_t n = 0; n < kPilotSamples; ++n) {
            buffer[n] = samples(static_cast<Eigen::Index>(n), c) - mean;
        }
        const std::vector<double> power = fft::power_spectrum(buffer);
        for (std::size_t n = 0; n < kPilotSamples; ++n) {
            averaged[n] += power[n];
        }
    }

    std::size_t peak = 0;
    double peak_power = 0.0;
    double total = 0.0;
    for (std::size_t k = 1; k <= kPilotSamples / 2; ++k) {
        total += averaged[k];
        if (averaged[k] > peak_power) {
            peak_power = averaged[k];
            peak = k;
        }
    }
    if (peak == 0 || peak_power <= 1e-12 || total <= 1e-12) {
        return 0.0;
    }

    // Parabolic refinement of the peak bin on log power.
    double refined = static_cast<double>(peak);
    if (peak > 1 && peak < kPilotSamples / 2 && averaged[peak - 1] > 0.0 && averaged[peak + 1] > 0.0) {
        const double lm = std::log(averaged[peak - 1]);
        const double l0 = std::log(averaged[peak]);
        const double lp = std::log(averaged[peak + 1]);
        const double denom = lm - 2.0 * l0 + lp;
        if (denom < 0.0) {
            refined += 0.5 * (lm - lp) / denom;
        }
    }
    const double frequency = refined / (static_cast<double>(kPilotSamples) * kPilotSampleStep);
    return 1.0 / frequency;
}

double lyapunov_with_period(const OdeSystem& system, double period) {
    constexpr double kDelta0 = 1e-8;
    constexpr int kSettleRenorms = 50;
    constexpr int kMeasuredRenorms = 600;
    constexpr int kStepsPerPeriod = 100;

    const double dt = period / kStepsPerPeriod;
    const int substeps = substeps_for(dt);

    Eigen::VectorXd reference = system.anchor;
    const int settle_steps = 100 * kStepsPerPeriod;
    for (int s = 0; s < settle_steps; ++s) {
        reference = advance(system, reference, dt, substeps);
    }

    Eigen::VectorXd offset = Eigen::VectorXd::Ones(system.dim);
    offset.normalize();
    Eigen::VectorXd companion = reference + kDelta0 * offset;

    double log_growth = 0.0;
    for (int r = 0; r < kSettleRenorms + kMeasuredRenorms; ++r) {
        for (int s = 0; s < kStepsPerPeriod; ++s) {
            reference = advance(system, reference, dt, substeps);
            companion = advance(system, companion, dt, substeps);
        }
        const double distance = (companion - reference).norm();
        if (distance <= 0.0) {
            throw std::runtime_error("estimate_lyapunov: perturbation collapsed for " + system.name);
        }
        if (r >= kSettleRenorms) {
            log_growth += std::log(distance / kDelta0);
        }
        companion = reference + (kDelta0 / distance) * (companion - reference);
    }
    return log_growth / (static_cast<double>(kMeasuredRenorms) * period);
}

}  // namespace

double estimate_period(const OdeSystem& system) {
    system.validate();
    const double period = period_from_pilot_or_zero(system);
    if (period <= 0.0) {
        throw std::runtime_error("estimate_period: no spectral peak above DC for " + system.name);
    }
    return period;
}

double estimate_lyapunov(const OdeSystem& system) {
    system.validate();
    // Fixed-point dynamics have no period; renormalize on a unit interval.
    const double period = period_from_pilot_or_zero(system);
    return lyapunov_with_period(system, period > 0.0 ? period : 1.0);
}

Trajectory generate_trajectory(const OdeSystem& system, Eigen::Index n_points, std::uint64_t seed) {
    system.validate();
    if (n_points < 2) {
        throw std::invalid_argument("generate_trajectory: need at least two points");
    }

    const double period = estimate_period(system);
    const double dt = period / 100.0;
    const int substeps = substeps_for(dt);

    auto gen = rng::make_engine(rng::derive_seed(seed, 0x7261'6a65'6374'6f72ULL));
    Eigen::VectorXd state = system.anchor;
    for (int c = 0; c < system.dim; ++c) {
        state(c) += system.perturbation * rng::uniform_pm1(gen);
    }

    const int transient_steps = 1000 * 100;
    for (int s = 0; s < transient_steps; ++s) {
        state = advance(system, state, dt, substeps);
    }

    Eigen::MatrixXd raw(n_points, system.dim);
    for (Eigen::Index n = 0; n < n_points; ++n) {
        raw.row(n) = state;
        state = advance(system, state, dt, substeps);
    }

    Trajectory trajectory;
    trajectory.system = system.name;
    trajectory.dt = dt;
    trajectory.lambda = lyapunov_with_period(system, period);
    trajectory.seed = seed;
    trajectory.parameters = system.parameters;
    trajectory.mean = raw.colwise().mean();
    Eigen::VectorXd variance =
        ((raw.rowwise() - trajectory.mean.transpose()).array().square().colwise().sum() /
         static_cast<double>(n_points))
            .matrix();
    trajectory.std_dev = variance.cwiseSqrt();
    for (int c = 0; c < system.dim; ++c) {
        if (trajectory.std_dev(c) <= 0.0) {
            throw std::runtime_error("generate_trajectory: degenerate channel " + std::to_string(c));
        }
    }
    trajectory.points = (raw.rowwise() - trajectory.mean.transpose()).array().rowwise() /
                        trajectory.std_dev.transpose().array();
    return trajectory;
}

namespace {

OdeSystem make_lorenz() {
    OdeSystem s;
    s.name = "lorenz";
    s.dim = 3;
    const double sigma = 10.0, rho = 28.0, beta = 8.0 / 3.0;
    s.parameters = {{"sigma", sigma}, {"rho", rho}, {"beta", beta}};
    s.rhs = {
        {{sigma, {0, 1, 0}}, {-sigma, {1, 0, 0}}},
        {{rho, {1, 0, 0}}, {-1.0, {1, 0, 1}}, {-1.0, {0, 1, 0}}},
        {{1.0, {1, 1, 0}}, {-beta, {0, 0, 1}}},
    };
    s.anchor = Eigen::Vector3d(-9.7869288, -15.038528, 20.5339774);
    s.perturbation = 0.5;
    s.reference_lambda = 0.9056;
    return s;
}

OdeSystem make_rossler() {
    OdeSystem s;
    s.name = "rossler";
    s.dim = 3;
    const double a = 0.2, b = 0.2, c = 5.7;
    s.parameters = {{"a", a}, {"b", b}, {"c", c}};
    s.rhs = {
        {{-1.0, {0, 1, 0}}, {-1.0, {0, 0, 1}}},
        {{1.0, {1, 0, 0}}, {a, {0, 1, 0}}},
        {{b, {0, 0, 0}}, {1.0, {1, 0, 1}}, {-c, {0, 0, 1}}},
    };
    s.anchor = Eigen::Vector3d(0.0, -6.78, 0.02);
    s.perturbation = 0.5;
    s.reference_lambda = 0.0714;
    return s;
}

OdeSystem make_chen() {
    OdeSystem s;
    s.name = "chen";
    s.dim = 3;
    const double a = 35.0, b = 3.0, c = 28.0;
    s.parameters = {{"a", a}, {"b", b}, {"c", c}};
    s.rhs = {
        {{a, {0, 1, 0}}, {-a, {1, 0, 0}}},
        {{c - a, {1, 0, 0}}, {-1.0, {1, 0, 1}}, {c, {0, 1, 0}}},
        {{1.0, {1, 1, 0}}, {-b, {0, 0, 1}}},
    };
    s.anchor = Eigen::Vector3d(-3.0, 2.0, 20.0);
    s.perturbation = 0.5;
    s.reference_lambda = 2.03;
    return s;
}

OdeSystem make_halvorsen() {
    OdeSystem s;
    s.name = "halvorsen";
    s.dim = 3;
    const double a = 1.4;
    s.parameters = {{"a", a}};
    s.rhs = {
        {{-a, {1, 0, 0}}, {-4.0, {0, 1, 0}}, {-4.0, {0, 0, 1}}, {-1.0, {0, 2, 0}}},
        {{-a, {0, 1, 0}}, {-4.0, {0, 0, 1}}, {-4.0, {1, 0, 0}}, {-1.0, {0, 0, 2}}},
        {{-a, {0, 0, 1}}, {-4.0, {1, 0, 0}}, {-4.0, {0, 1, 0}}, {-1.0, {2, 0, 0}}},
    };
    s.anchor = Eigen::Vector3d(-5.0, 0.0, 0.0);
    s.perturbation = 0.3;
    s.reference_lambda = 0.69;
    return s;
}

OdeSystem make_dadras() {
    OdeSystem s;
    s.name = "dadras";
    s.dim = 3;
    const double p = 3.0, o = 2.7, r = 1.7, c = 2.0, e = 9.0;
    s.parameters = {{"p", p}, {"o", o}, {"r", r}, {"c", c}, {"e", e}};
    s.rhs = {
        {{1.0, {0, 1, 0}}, {-p, {1, 0, 0}}, {o, {0, 1, 1}}},
        {{r, {0, 1, 0}}, {-1.0, {1, 0, 1}}, {1.0, {0, 0, 1}}},
        {{c, {1, 1, 0}}, {-e, {0, 0, 1}}},
    };
    s.anchor = Eigen::Vector3d(1.1, 2.1, -2.0);
    s.perturbation = 0.3;
    s.reference_lambda = 0.38;
    return s;
}

OdeSystem make_nosehoover() {
    OdeSystem s;
    s.name = "nosehoover";
    s.dim = 3;
    const double a = 1.5;
    s.parameters = {{"a", a}};
    s.rhs = {
        {{1.0, {0, 1, 0}}},
        {{-1.0, {1, 0, 0}}, {1.0, {0, 1, 1}}},
        {{a, {0, 0, 0}}, {-1.0, {0, 2, 0}}},
    };
    s.anchor = Eigen::Vector3d(1.0, 0.0, 3.0);
    s.perturbation = 0.2;
    s.reference_lambda = 0.042;
    return s;
}

OdeSystem make_henonheiles() {
    OdeSystem s;
    s.name = "henonheiles";
    s.dim = 4;
    s.parameters = {};
    // State ordering (x, y, px, py) for the standard two-well Hamiltonian.
    s.rhs = {
        {{1.0, {0, 0, 1, 0}}},
        {{1.0, {0, 0, 0, 1}}},
        {{-1.0, {1, 0, 0, 0}}, {-2.0, {1, 1, 0, 0}}},
        {{-1.0, {0, 1, 0, 0}}, {-1.0, {2, 0, 0, 0}}, {1.0, {0, 2, 0, 0}}},
    };
    s.anchor = Eigen::Vector4d(0.0, 0.0, 0.5568, 0.0);  // energy ~ 0.155
    s.perturbation = 0.01;
    s.reference_lambda = 0.0;
    return s;
}

OdeSystem make_hyperrossler() {
    OdeSystem s;
    s.name = "hyperrossler";
    s.dim = 4;
    const double a = 0.25, b = 3.0, c = 0.5, d = 0.05;
    s.parameters = {{"a", a}, {"b", b}, {"c", c}, {"d", d}};
    s.rhs = {
        {{-1.0, {0, 1, 0, 0}}, {-1.0, {0, 0, 1, 0}}},
        {{1.0, {1, 0, 0, 0}}, {a, {0, 1, 0, 0}}, {1.0, {0, 0, 0, 1}}},
        {{b, {0, 0, 0, 0}}, {1.0, {1, 0, 1, 0}}},
        {{-c, {0, 0, 1, 0}}, {d, {0, 0, 0, 1}}},
    };
    s.anchor = Eigen::Vector4d(-10.0, -6.0, 0.0, 10.0);
    s.perturbation = 0.5;
    s.reference_lambda = 0.11;
    return s;
}

OdeSystem make_sprott_a() {
    OdeSystem s;
    s.name = "sprotta";
    s.dim = 3;
    s.parameters = {};
    s.rhs = {
        {{1.0, {0, 1, 0}}},
        {{-1.0, {1, 0, 0}}, {1.0, {0, 1, 1}}},
        {{1.0, {0, 0, 0}}, {-1.0, {0, 2, 0}}},
    };
    s.anchor = Eigen::Vector3d(0.5, 5.5, 0.0);
    s.perturbation = 0.2;
    s.reference_lambda = 0.014;
    return s;
}

OdeSystem make_sprott_b() {
    OdeSystem s;
    s.name = "sprottb";
    s.dim = 3;
    s.parameters = {};
    s.rhs = {
        {{1.0, {0, 1, 1}}},
        {{1.0, {1, 0, 0}}, {-1.0, {0, 1, 0}}},
        {{1.0, {0, 0, 0}}, {-1.0, {1, 1, 0}}},
    };
    s.anchor = Eigen::Vector3d(0.05, 0.4, 1.0);
    s.perturbation = 0.2;
    s.reference_lambda = 0.21;
    return s;
}

}  // namespace

const std::vector<OdeSystem>& systems() {
    static const std::vector<OdeSystem> all = {
        make_lorenz(),      make_rossler(),  make_chen(),    make_halvorsen(),
        make_dadras(),      make_nosehoover(), make_henonheiles(), make_hyperrossler(),
        make_sprott_a(),    make_sprott_b(),
    };
    return all;
}

const OdeSystem& system_by_name(const std::string& name) {
    for (const OdeSystem& s : systems()) {
        if (s.name == name) {
            return s;
        }
    }
    throw std::invalid_argument("unknown system: " + name);
}

namespace {

std::string format_value(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace

std::string to_csv(const Trajectory& trajectory) {
    std::ostringstream out;
    out << "t";
    for (Eigen::Index c = 0; c < trajectory.dim(); ++c) {
        out << ",x" << (c + 1);
    }
    out << "\n";
    for (Eigen::Index n = 0; n < trajectory.length(); ++n) {
        out << format_value(static_cast<double>(n) * trajectory.dt);
        for (Eigen::Index c = 0; c < trajectory.dim(); ++c) {
            out << "," << format_value(trajectory.points(n, c));
        }
        out << "\n";
    }
    return out.str();
}

nlohmann::json sidecar_json(const Trajectory& trajectory) {
    nlohmann::json j;
    j["schema"] = "voltcast.trajectory/1";
    j["system"] = trajectory.system;
    j["params"] = trajectory.parameters;
    j["dt"] = trajectory.dt;
    j["lambda"] = trajectory.lambda;
    j["seed"] = trajectory.seed;
    j["n"] = trajectory.length();
    j["mean"] = std::vector<double>(trajectory.mean.begin(), trajectory.mean.end());
    j["std"] = std::vector<double>(trajectory.std_dev.begin(), trajectory.std_dev.end());
    return j;
}

Trajectory trajectory_from_files(const std::string& csv_text, const nlohmann::json& sidecar) {
    Trajectory trajectory;
    trajectory.system = sidecar.value("system", "");
    trajectory.dt = sidecar.at("dt").get<double>();
    trajectory.lambda = sidecar.value("lambda", 0.0);
    trajectory.seed = sidecar.value("seed", std::uint64_t{0});
    if (sidecar.contains("params")) {
        trajectory.parameters = sidecar.at("params").get<std::map<std::string, double>>();
    }

    std::istringstream in(csv_text);
    std::string line;
    if (!std::getline(in, line)) {
        throw std::invalid_argument("trajectory CSV is empty");
    }
    Eigen::Index dim = 0;
    for (char ch : line) {
        if (ch == ',') {
            ++dim;
        }
    }
    if (dim < 1) {
        throw std::invalid_argument("trajectory CSV header must be t,x1..xP");
    }

    std::vector<double> values;
    Eigen::Index rows = 0;
    while (std::getline(in, line)) {
        if (line.empty()) {
            continue;
        }
        std::istringstream row(line);
        std::string cell;
        Eigen::Index col = 0;
        while (std::getline(row, cell, ',')) {
            if (col > 0) {
                values.push_back(std::stod(cell));
            }
            ++col;
        }
        if (col != dim + 1) {
            throw std::invalid_argument("trajectory CSV row has wrong column count");
        }
        ++rows;
    }
    trajectory.points.resize(rows, dim);
    for (Eigen::Index n = 0; n < rows; ++n) {
        for (Eigen::Index c = 0; c < dim; ++c) {
            trajectory.points(n, c) = values[static_cast<std::size_t>(n * dim + c)];
        }
    }

    trajectory.mean = Eigen::VectorXd::Zero(dim);
    trajectory.std_dev = Eigen::VectorXd::Ones(dim);
    if (sidecar.contains("mean")) {
        const auto m = sidecar.at("mean").get<std::vector<double>>();
        const auto s = sidecar.at("std").get<std::vector<double>>();
        if (static_cast<Eigen::Index>(m.size()) != dim || static_cast<Eigen::Index>(s.size()) != dim) {
            throw std::invalid_argument("trajectory sidecar moments have wrong dimension");
        }
        trajectory.mean = Eigen::Map<const Eigen::VectorXd>(m.data(), dim);
        trajectory.std_dev = Eigen::Map<const Eigen::VectorXd>(s.data(), dim);
    }
    return trajectory;
}

void save_trajectory(const Trajectory& trajectory, const std::string& path_prefix) {
    std::ofstream csv(path_prefix + ".csv", std::ios::binary);
    if (!csv) {
        throw std::runtime_error("cannot write " + path_prefix + ".csv");
    }
    csv << to_csv(trajectory);
    std::ofstream side(path_prefix + ".json", std::ios::binary);
    if (!side) {
        throw std::runtime_error("cannot write " + path_prefix + ".json");
    }
    side << sidecar_json(trajectory).dump(2) << "\n";
}

Trajectory load_trajectory(const std::string& path_prefix) {
    std::ifstream csv(path_prefix + ".csv", std::ios::binary);
    if (!csv) {
        throw std::runtime_error("cannot read " + path_prefix + ".csv");
    }
    std::stringstream csv_text;
    csv_text << csv.rdbuf();
    std::ifstream side(path_prefix + ".json", std::ios::binary);
    if (!side) {
        throw std::runtime_error("cannot read " + path_prefix + ".json");
    }
    nlohmann::json sidecar;
    side >> sidecar;
    return trajectory_from_files(csv_text.str(), sidecar);
}

}  // namespace voltcast::chaos
