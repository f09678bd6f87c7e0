#pragma once

#include <Eigen/Core>
#include <nlohmann/json_fwd.hpp>

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace voltcast::chaos {

/// One monomial term of a polynomial vector field: coefficient times the
/// product of state variables raised to small integer exponents.
struct PolyTerm {
    double coefficient;
    std::vector<int> exponents;  ///< length P, total degree <= 4
};

/// Autonomous ODE with polynomial right-hand side of degree at most four
/// and phase-space dimension three or four.
struct OdeSystem {
    std::string name;
    int dim = 3;
    std::vector<std::vector<PolyTerm>> rhs;  ///< one term list per component
    std::map<std::string, double> parameters;
    Eigen::VectorXd anchor;        ///< a point on (or near) the attractor
    double perturbation = 0.1;     ///< seed-dependent initial displacement
    double reference_lambda = 0.0; ///< literature value of the largest
                                   ///< Lyapunov exponent, 0 when unknown

    Eigen::VectorXd eval_rhs(const Eigen::VectorXd& state) const;
    void validate() const;
};

/// Standardized trajectory of a chaotic system.
struct Trajectory {
    std::string system;
    double dt = 0.0;          ///< sampling step, time units
    double lambda = 0.0;      ///< largest Lyapunov exponent, 1/time
    std::uint64_t seed = 0;
    Eigen::MatrixXd points;   ///< N x P, standardized per channel
    Eigen::VectorXd mean;     ///< per-channel standardization offset
    Eigen::VectorXd std_dev;  ///< per-channel standardization scale
    std::map<std::string, double> parameters;

    Eigen::Index length() const { return points.rows(); }
    Eigen::Index dim() const { return points.cols(); }

    /// Undo the standardization of a single state row.
    Eigen::VectorXd destandardize(const Eigen::VectorXd& standardized) const;
};

/// Classical 4th-order Runge-Kutta update. Throws on non-finite results.
Eigen::VectorXd rk4_step(const OdeSystem& system, const Eigen::VectorXd& state, double dt);

/// Dominant period from the spectral peak of a pilot run: 2^14 samples
/// after a transient discard, per-channel power spectra averaged.
double estimate_period(const OdeSystem& system);

/// Largest Lyapunov exponent by two-trajectory renormalization: a
/// reference and a 1e-8-displaced companion evolve for one estimated
/// period between renormalizations; the log growth is averaged over the
/// renormalizations that follow a settling phase. Negative estimates are
/// returned as-is (they flag a non-chaotic regime).
double estimate_lyapunov(const OdeSystem& system);

/// Generate a standardized trajectory: dt is one hundredth of the dominant
/// period, a 1000-period transient is discarded, and the per-channel
/// moments of the sampled window are removed. The seed displaces the
/// initial condition around the system's anchor point.
Trajectory generate_trajectory(const OdeSystem& system, Eigen::Index n_points, std::uint64_t seed);

/// The shipped system set. All entries have polynomial degree <= 4,
/// dimension 3 or 4, and a positive Lyapunov exponent at the default
/// parameters.
const std::vector<OdeSystem>& systems();

/// Look up a shipped system by name (case-sensitive). Throws on unknown names.
const OdeSystem& system_by_name(const std::string& name);

/// Trajectory file IO: CSV with a "t,x1..xP" header and 17-significant-digit
/// values, plus a JSON sidecar holding dt, lambda, seed and the
/// standardization moments.
std::string to_csv(const Trajectory& trajectory);
nlohmann::json sidecar_json(const Trajectory& trajectory);
Trajectory trajectory_from_files(const std::string& csv_text, const nlohmann::json& sidecar);
void save_trajectory(const Trajectory& trajectory, const std::string& path_prefix);
Trajectory load_trajectory(const std::string& path_prefix);

}  // namespace voltcast::chaos
