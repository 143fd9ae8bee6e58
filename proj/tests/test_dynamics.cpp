#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "tsrkoop/dynamics.hpp"
#include "tsrkoop/errors.hpp"

using namespace tsrkoop;

namespace {

// Hand-written vector field, independent of the library code path.
Eigen::Vector4d field_oracle(const Eigen::Vector4d& x, double u) {
  const double l = x(2) + 1.0;
  return {x(1), -2.0 * x(3) / l * (x(1) + 1.0) - 3.0 * std::sin(x(0)) * std::cos(x(0)), x(3),
          l * ((x(1) + 1.0) * (x(1) + 1.0) + 3.0 * std::cos(x(0)) * std::cos(x(0)) - 1.0) - u};
}

// Global error at tau = 1 from x0 under u = 2 against a fine reference.
double global_error(double h, const TsrState& reference, const TsrState& x0) {
  TsrState x = x0;
  const int n = static_cast<int>(std::lround(1.0 / h));
  for (int i = 0; i < n; ++i) x = rk4_step(x, 2.0, {h});
  return (x - reference).norm();
}

}  // namespace

TEST_CASE("vector field matches hand-evaluated fixtures") {
  CHECK((tsr_vector_field(TsrState::Zero(), 3.0)).norm() == 0.0);

  const TsrDerivative a = tsr_vector_field(TsrState(0, 0, -0.5, 0), 0.0);
  CHECK((a - TsrDerivative(0, 0, 0, 1.5)).cwiseAbs().maxCoeff() <= 1e-12);

  const TsrDerivative b = tsr_vector_field(TsrState(std::numbers::pi / 4, 0, -0.5, 0.1), 1.0);
  CHECK((b - TsrDerivative(0, -1.9, 0.1, -0.25)).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("vector field agrees with an independent evaluation and is control affine") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> d(-1.0, 1.0);
  for (int i = 0; i < 200; ++i) {
    const TsrState x(2.5 * d(rng), d(rng), 0.49 * d(rng) - 0.5, d(rng));
    const double u = 2.5 + 2.5 * d(rng);
    CHECK((tsr_vector_field(x, u) - field_oracle(x, u)).norm() <= 1e-13);
    const TsrDerivative affine = tsr_vector_field(x, 0.0) + TsrDerivative(0, 0, 0, -1) * u;
    CHECK((tsr_vector_field(x, u) - affine).norm() <= 1e-13);
  }
  CHECK(tsr_input_direction() == TsrDerivative(0, 0, 0, -1));
}

TEST_CASE("equilibrium tension is derived from the vector field") {
  CHECK(equilibrium_tension() == kEquilibriumTension);
  CHECK(kEquilibriumTension == 3.0);
}

TEST_CASE("vector field rejects nonpositive tether length") {
  CHECK_THROWS_AS(tsr_vector_field(TsrState(0, 0, -1.0, 0), 1.0), DomainError);
  CHECK_THROWS_AS(tsr_vector_field(TsrState(0, 0, -1.5, 0), 1.0), DomainError);
  CHECK_THROWS_AS(rk4_step(TsrState(0, 0, -1.2, 0), 1.0), DomainError);
}

TEST_CASE("rk4 on y' = -y reproduces the fourth-order expansion") {
  const Eigen::Matrix<double, 1, 1> y0(1.0);
  const auto y = rk4(y0, 0.01, [](const Eigen::Matrix<double, 1, 1>& v) {
    return Eigen::Matrix<double, 1, 1>(-v);
  });
  CHECK(std::abs(y(0) - 0.99004983375) <= 1e-11);
  CHECK(std::abs(y(0) - std::exp(-0.01)) <= 1e-11);
}

TEST_CASE("rk4 global error drops by about 16 when h is halved") {
  const TsrState x0(0.1, 0.05, -0.5, 0.2);
  TsrState ref = x0;
  for (int i = 0; i < 20000; ++i) ref = rk4_step(ref, 2.0, {1e-4 / 2});
  const double e1 = global_error(0.1, ref, x0);
  const double e2 = global_error(0.05, ref, x0);
  const double ratio = e1 / e2;
  CHECK(ratio >= 12.0);
  CHECK(ratio <= 20.0);
}

TEST_CASE("equilibrium is a fixed point of rk4 and of simulate") {
  CHECK(rk4_step(TsrState::Zero(), 3.0) == TsrState::Zero());
  const auto t = simulate(TsrState::Zero(), [](int, const TsrState&) { return 3.0; }, 100);
  CHECK(t.steps() == 100);
  CHECK(t.states.cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("simulate equals repeated rk4 steps bit for bit") {
  const TsrState x0(0, 0, -0.99, 0.5);
  const auto t = simulate(x0, [](int, const TsrState&) { return 3.0; }, 10);
  TsrState x = x0;
  for (int k = 0; k < 10; ++k) {
    CHECK(t.state(k) == x);
    CHECK(t.control(k) == 3.0);
    x = rk4_step(x, 3.0);
  }
}

TEST_CASE("simulate aligns policy inputs with states") {
  const auto t = simulate(TsrState(0.1, 0, -0.3, 0.1),
                          [](int k, const TsrState& x) { return 1.0 + 0.1 * k + 0.0 * x(0); }, 7);
  CHECK(t.steps() == 7);
  CHECK(t.controls.cols() == 7);
  for (int k = 0; k < 7; ++k) CHECK(t.control(k) == doctest::Approx(1.0 + 0.1 * k));
  CHECK(t.state(1) == rk4_step(t.state(0), t.control(0)));
  CHECK_THROWS_AS(simulate(TsrState::Zero(), [](int, const TsrState&) { return 3.0; }, 0),
                  ConfigError);
}

TEST_CASE("simulate reports the failing step") {
  try {
    simulate(TsrState(0, 0, -0.9, -5.0), [](int, const TsrState&) { return 5.0; }, 200);
    FAIL("expected an integration failure");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("step ") != std::string::npos);
    CHECK(e.module() == "dynamics");
  }
}

TEST_CASE("physical scale is metadata") {
  CHECK(PhysicalScale::orbit_rate == doctest::Approx(1.1804e-3));
  CHECK(PhysicalScale::tether_length == doctest::Approx(1e5));
}
