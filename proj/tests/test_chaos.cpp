#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "voltcast/chaos.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <numbers>

using namespace voltcast;
using chaos::OdeSystem;

namespace {

OdeSystem constant_rhs_system() {
    OdeSystem s;
    s.name = "still";
    s.dim = 3;
    s.rhs = {{}, {}, {}};
    s.anchor = Eigen::Vector3d(1.0, 2.0, 3.0);
    return s;
}

OdeSystem scalar_growth_system() {
    // x' = x on every component (decoupled).
    OdeSystem s;
    s.name = "growth";
    s.dim = 3;
    s.rhs = {
        {{1.0, {1, 0, 0}}},
        {{1.0, {0, 1, 0}}},
        {{1.0, {0, 0, 1}}},
    };
    s.anchor = Eigen::Vector3d(1.0, 1.0, 1.0);
    return s;
}

OdeSystem contraction_system() {
    // x' = -x: contracting everywhere, definitely not chaotic.
    OdeSystem s;
    s.name = "stable";
    s.dim = 3;
    s.rhs = {
        {{-1.0, {1, 0, 0}}, {0.4, {0, 0, 0}}},
        {{-1.0, {0, 1, 0}}, {0.9, {0, 0, 0}}},
        {{-1.0, {0, 0, 1}}, {1.0, {1, 0, 0}}},
    };
    s.anchor = Eigen::Vector3d(0.4, 0.9, 0.4);
    return s;
}

OdeSystem harmonic_system(double omega) {
    // x' = omega*y, y' = -omega*x, z' = decoupled contraction toward a cycle
    // companion so the trajectory is not constant in any channel.
    OdeSystem s;
    s.name = "harmonic";
    s.dim = 3;
    s.rhs = {
        {{omega, {0, 1, 0}}},
        {{-omega, {1, 0, 0}}},
        {{omega, {0, 1, 0}}},
    };
    s.anchor = Eigen::Vector3d(1.0, 0.0, 0.0);
    return s;
}

}  // namespace

TEST_CASE("rk4 trivia") {
    const auto still = constant_rhs_system();
    const Eigen::VectorXd state = still.anchor;
    CHECK((chaos::rk4_step(still, state, 0.3) - state).norm() == 0.0);

    const auto growth = scalar_growth_system();
    CHECK((chaos::rk4_step(growth, state, 0.0) - state).norm() == 0.0);
}

TEST_CASE("rk4 single-step accuracy on exponential growth") {
    const auto growth = scalar_growth_system();
    Eigen::VectorXd state = Eigen::Vector3d(1.0, 1.0, 1.0);
    state = chaos::rk4_step(growth, state, 0.1);
    const double expect = std::exp(0.1);
    CHECK(std::abs(state(0) - expect) / expect <= 1e-7);
}

TEST_CASE("rk4 is globally 4th order") {
    const auto growth = scalar_growth_system();
    auto endpoint_error = [&](double dt) {
        Eigen::VectorXd state = Eigen::Vector3d(1.0, 1.0, 1.0);
        const int steps = static_cast<int>(std::llround(1.0 / dt));
        for (int i = 0; i < steps; ++i) {
            state = chaos::rk4_step(growth, state, dt);
        }
        return std::abs(state(0) - std::numbers::e);
    };
    const double coarse = endpoint_error(0.02);
    const double fine = endpoint_error(0.01);
    const double factor = coarse / fine;
    CHECK(factor >= 8.0);
    CHECK(factor <= 32.0);
}

TEST_CASE("rk4 reports blow-up") {
    // x' = x^2 from x=1 diverges in finite time.
    OdeSystem s;
    s.name = "blowup";
    s.dim = 3;
    s.rhs = {
        {{1.0, {2, 0, 0}}},
        {{0.0, {0, 0, 0}}},
        {{0.0, {0, 0, 0}}},
    };
    s.anchor = Eigen::Vector3d(1.0, 0.0, 0.0);
    Eigen::VectorXd state = s.anchor;
    CHECK_THROWS_AS(
        [&]() {
            for (int i = 0; i < 100000; ++i) {
                state = chaos::rk4_step(s, state, 0.05);
            }
        }(),
        std::runtime_error);
}

TEST_CASE("estimate_period recovers a pure oscillation") {
    const double omega = 2.0 * std::numbers::pi / 1.6;  // period 1.6
    const double period = chaos::estimate_period(harmonic_system(omega));
    // one frequency bin of the pilot run is 1/(2^14 * 0.02)
    const double f0 = 1.0 / 1.6;
    const double bin = 1.0 / (16384.0 * 0.02);
    CHECK(std::abs(1.0 / period - f0) <= bin);
}

TEST_CASE("estimate_period on Lorenz lands in the known band") {
    const double period = chaos::estimate_period(chaos::system_by_name("lorenz"));
    CHECK(period >= 0.7);
    CHECK(period <= 0.8);
}

TEST_CASE("estimate_period rejects constant trajectories") {
    CHECK_THROWS_AS(chaos::estimate_period(constant_rhs_system()), std::runtime_error);
}

TEST_CASE("lyapunov estimates for the classic systems") {
    const double lorenz = chaos::estimate_lyapunov(chaos::system_by_name("lorenz"));
    CHECK(lorenz == doctest::Approx(0.906).epsilon(0.055));

    const double rossler = chaos::estimate_lyapunov(chaos::system_by_name("rossler"));
    CHECK(rossler == doctest::Approx(0.071).epsilon(0.15));
}

TEST_CASE("contracting dynamics give a negative exponent") {
    CHECK(chaos::estimate_lyapunov(contraction_system()) < 0.0);
}

TEST_CASE("every shipped system is chaotic at its defaults") {
    for (const auto& system : chaos::systems()) {
        CAPTURE(system.name);
        CHECK(chaos::estimate_lyapunov(system) > 0.0);
    }
}

TEST_CASE("generated trajectories are standardized and bounded") {
    const auto trajectory =
        chaos::generate_trajectory(chaos::system_by_name("lorenz"), 11000, 1);
    CHECK(trajectory.length() == 11000);
    CHECK(trajectory.dim() == 3);
    for (int c = 0; c < 3; ++c) {
        CHECK(std::abs(trajectory.points.col(c).mean()) <= 1e-10);
        const double var = trajectory.points.col(c).squaredNorm() / 11000.0;
        CHECK(std::abs(std::sqrt(var) - 1.0) <= 1e-10);
    }
    CHECK(trajectory.points.cwiseAbs().maxCoeff() <= 6.0);
    CHECK(trajectory.lambda > 0.0);
    CHECK(trajectory.dt > 0.0);
}

TEST_CASE("standardization is invertible") {
    const auto trajectory =
        chaos::generate_trajectory(chaos::system_by_name("rossler"), 2000, 3);
    const Eigen::VectorXd row = trajectory.points.row(100);
    const Eigen::VectorXd raw = trajectory.destandardize(row);
    const Eigen::VectorXd back =
        ((raw - trajectory.mean).array() / trajectory.std_dev.array()).matrix();
    CHECK((back - row).norm() <= 1e-12);
}

TEST_CASE("same seed reproduces identical bytes, new seeds move the start") {
    const auto& system = chaos::system_by_name("lorenz");
    const auto a = chaos::generate_trajectory(system, 1200, 9);
    const auto b = chaos::generate_trajectory(system, 1200, 9);
    CHECK(chaos::to_csv(a) == chaos::to_csv(b));
    CHECK(chaos::sidecar_json(a).dump() == chaos::sidecar_json(b).dump());

    const auto c = chaos::generate_trajectory(system, 1200, 10);
    CHECK(chaos::to_csv(a) != chaos::to_csv(c));
}

TEST_CASE("trajectory files round-trip through the parser") {
    const auto trajectory =
        chaos::generate_trajectory(chaos::system_by_name("sprottb"), 600, 4);
    const std::string csv = chaos::to_csv(trajectory);
    const nlohmann::json sidecar = chaos::sidecar_json(trajectory);
    const auto restored = chaos::trajectory_from_files(csv, sidecar);
    CHECK(restored.system == trajectory.system);
    CHECK(restored.dt == trajectory.dt);
    CHECK(restored.lambda == trajectory.lambda);
    CHECK(restored.length() == trajectory.length());
    CHECK((restored.points - trajectory.points).cwiseAbs().maxCoeff() == 0.0);
    CHECK((restored.mean - trajectory.mean).norm() == 0.0);
}

TEST_CASE("unknown system names are rejected") {
    CHECK_THROWS_AS(chaos::system_by_name("nosuch"), std::invalid_argument);
}

TEST_CASE("system validation") {
    OdeSystem bad = constant_rhs_system();
    bad.dim = 5;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);

    OdeSystem high_degree = constant_rhs_system();
    high_degree.rhs[0].push_back({1.0, {3, 2, 0}});
    CHECK_THROWS_AS(high_degree.validate(), std::invalid_argument);
}

TEST_CASE("shipped systems have valid polynomial tables") {
    for (const auto& system : chaos::systems()) {
        CAPTURE(system.name);
        CHECK_NOTHROW(system.validate());
        CHECK((system.dim == 3 || system.dim == 4));
    }
}
