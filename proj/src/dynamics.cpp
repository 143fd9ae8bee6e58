#include "tsrkoop/dynamics.hpp"

#include <cmath>
#include <string>

#include "tsrkoop/errors.hpp"

namespace tsrkoop {

TsrDerivative tsr_drift(const TsrState& x) {
  const double l = x(2) + 1.0;
  if (!(l > 0.0)) {
    throw DomainError("tether length ratio must be positive, got x3 = " +
                      std::to_string(x(2)));
  }
  const double s = std::sin(x(0));
  const double c = std::cos(x(0));
  const double w = x(1) + 1.0;
  TsrDerivative f;
  f << x(1), -2.0 * x(3) / l * w - 3.0 * s * c, x(3), l * (w * w + 3.0 * c * c - 1.0);
  return f;
}

TsrDerivative tsr_input_direction() { return TsrDerivative(0.0, 0.0, 0.0, -1.0); }

TsrDerivative tsr_vector_field(const TsrState& x, double u) {
  TsrDerivative f = tsr_drift(x);
  f(3) -= u;
  return f;
}

double equilibrium_tension() {
  // The x4 row is affine in u with slope -1, so the root is the drift value.
  return tsr_drift(TsrState::Zero())(3);
}

TsrState rk4_step(const TsrState& x, double u, StepConfig cfg) {
  const TsrState next =
      rk4(x, cfg.h, [u](const TsrState& s) -> TsrDerivative { return tsr_vector_field(s, u); });
  if (!next.allFinite()) {
    throw IntegrationError("RK4 step produced a non-finite state");
  }
  return next;
}

bool Trajectory::operator==(const Trajectory& other) const {
  return states.cols() == other.states.cols() && controls.cols() == other.controls.cols() &&
         states == other.states && controls == other.controls;
}

Trajectory simulate(const TsrState& x0, const Policy& policy, int steps, StepConfig cfg) {
  if (steps < 1) {
    throw ConfigError("dynamics", "simulate needs at least one step");
  }
  Trajectory traj;
  traj.states.resize(kStateDim, steps);
  traj.controls.resize(kControlDim, steps);
  TsrState x = x0;
  for (int k = 0; k < steps; ++k) {
    traj.states.col(k) = x;
    const double u = policy(k, x);
    traj.controls(0, k) = u;
    if (k + 1 == steps) break;
    try {
      x = rk4_step(x, u, cfg);
    } catch (const DomainError& e) {
      throw DomainError("step " + std::to_string(k) + ": " + e.what());
    } catch (const IntegrationError& e) {
      throw IntegrationError("step " + std::to_string(k) + ": " + e.what());
    }
  }
  return traj;
}

}  // namespace tsrkoop
