#pragma once

#include <Eigen/Dense>

#include <functional>

namespace tsrkoop {

inline constexpr int kStateDim = 4;
inline constexpr int kControlDim = 1;

/// Dimensionless in-plane deployment state [theta, theta_dot, l - 1, l_dot].
using TsrState = Eigen::Vector4d;
using TsrDerivative = Eigen::Vector4d;

/// Orbit rate (rad/s) and total tether length (m) of the reference mission.
/// Kept as metadata; every computation in this library is dimensionless.
struct PhysicalScale {
  static constexpr double orbit_rate = 1.1804e-3;
  static constexpr double tether_length = 100.0e3;
};

struct StepConfig {
  double h = 0.01;
};

/// Right-hand side f(x) + b*u of the in-plane deployment dynamics.
/// Throws DomainError when x(2) <= -1 (zero or negative tether length).
TsrDerivative tsr_vector_field(const TsrState& x, double u);

/// Control-independent drift f(x) and the constant input direction b.
TsrDerivative tsr_drift(const TsrState& x);
TsrDerivative tsr_input_direction();

/// Tension that holds the fully deployed equilibrium x = 0:
/// 1 * ((0 + 1)^2 + 3 - 1) - u = 0.
inline constexpr double kEquilibriumTension = 3.0;

/// Solves the x4 row of the vector field at x = 0 for u.
double equilibrium_tension();

/// One classical Runge-Kutta step of `field` with step h.
template <typename Vec, typename Field>
Vec rk4(const Vec& x, double h, Field&& field) {
  const Vec k1 = field(x);
  const Vec k2 = field(Vec(x + 0.5 * h * k1));
  const Vec k3 = field(Vec(x + 0.5 * h * k2));
  const Vec k4 = field(Vec(x + h * k3));
  return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

/// RK4 step of the deployment dynamics with u held constant over the step.
/// Throws DomainError from the vector field, IntegrationError if the result
/// is not finite.
TsrState rk4_step(const TsrState& x, double u, StepConfig cfg = {});

/// States and applied controls of a rollout; column k of `controls` is the
/// input applied between state k and state k + 1.
struct Trajectory {
  Eigen::Matrix<double, kStateDim, Eigen::Dynamic> states;
  Eigen::Matrix<double, kControlDim, Eigen::Dynamic> controls;

  int steps() const { return static_cast<int>(states.cols()); }
  TsrState state(int k) const { return states.col(k); }
  double control(int k) const { return controls(0, k); }

  bool operator==(const Trajectory& other) const;
};

/// Control law evaluated at (step index, current state).
using Policy = std::function<double(int, const TsrState&)>;

/// Rolls out `steps` states from x0. Integration failures are rethrown with
/// the failing step index in the message.
Trajectory simulate(const TsrState& x0, const Policy& policy, int steps,
                    StepConfig cfg = {});

}  // namespace tsrkoop
