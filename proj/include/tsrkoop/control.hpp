#pragma once

#include <Eigen/Dense>

#include <optional>
#include <string>

#include "tsrkoop/dynamics.hpp"
#include "tsrkoop/koopman.hpp"
#include "tsrkoop/metrics.hpp"

namespace tsrkoop {

/// Physical-state weights; the lifted weight is either C^T Q C or I_N.
struct LqrWeights {
  Eigen::MatrixXd Q = Eigen::MatrixXd::Identity(kStateDim, kStateDim);
  Eigen::MatrixXd R = Eigen::MatrixXd::Constant(1, 1, 15.0);
};

enum class LiftedWeighting {
  identity,  ///< Q' = I_N
  selector,  ///< Q' = C^T Q C
};

/// Q' for an N-dimensional lifted model.
Eigen::MatrixXd lifted_state_weight(const LqrWeights& w, int lifted_dim, LiftedWeighting mode);

struct DareOptions {
  /// Stop when |P_{i+1} - P_i|_F falls below max(tolerance, 16 eps |P|_F),
  /// or when steps below 1e-10 |P|_F stop shrinking (the round-off floor of
  /// the update for large |P|).
  double tolerance = 1e-12;
  long max_iterations = 100000;
};

struct DareSolution {
  Eigen::MatrixXd P;
  long iterations = 0;
  double residual = 0.0;  ///< Frobenius DARE residual of P
};

/// Stabilising solution of P = Q + A'PA - A'PB (R + B'PB)^-1 B'PA by
/// fixed-point iteration from P0 = Q. Every returned P has residual < 1e-8
/// and a stabilising gain; otherwise (divergence, stalling, max_iterations,
/// non-stabilising fixed point) NoConvergenceError. ConditioningError if
/// R + B'PB is numerically singular.
DareSolution solve_dare(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B,
                        const Eigen::MatrixXd& Q, const Eigen::MatrixXd& R,
                        const DareOptions& opts = {});

double dare_residual(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B, const Eigen::MatrixXd& Q,
                     const Eigen::MatrixXd& R, const Eigen::MatrixXd& P);

/// K = (R + B'PB)^-1 B'PA; the applied control is u = u_d - K (z - z_d).
Eigen::MatrixXd lqr_gain(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B,
                         const Eigen::MatrixXd& R, const Eigen::MatrixXd& P);

double closed_loop_spectral_radius(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B,
                                   const Eigen::MatrixXd& K);

struct DeployConfig {
  TsrState x0{0.0, 0.0, -0.99, 0.5};
  TsrState x_d = TsrState::Zero();
  double u_d = kEquilibriumTension;
  int steps = 2000;
  double h = 0.01;
  double zone = kPrecisionZone;
};

struct DeploymentResult {
  std::string controller;
  double h = 0.01;
  Eigen::MatrixXd states;     ///< 4 x steps, state at the start of each step
  Eigen::RowVectorXd u;       ///< applied tension
  Eigen::RowVectorXd u_hat;   ///< lifted control (equals u for the proxy)
  std::optional<double> settling_time;
  double overshoot = 0.0;     ///< of x3 above 0
  Interval x1{};
  bool success = false;       ///< settled inside the zone by the end

  int steps() const { return static_cast<int>(states.cols()); }
};

/// Closed loop of the lifted LQR on the true dynamics: z = lift(x),
/// u_hat = u_hat_d - K (z - z_d), u = recover_control(x, u_hat), x <- rk4.
/// Errors carry the failing step index.
DeploymentResult deploy(const KoopmanModel& model, const Eigen::MatrixXd& K,
                        const DeployConfig& cfg = {});

/// Jacobians of the vector field with respect to x and u.
Eigen::Matrix4d tsr_state_jacobian(const TsrState& x, double u);
Eigen::Vector4d tsr_input_jacobian();

/// RK4 discretisation of x' = J x + b u with zero-order hold:
/// Ad = sum_{k<=4} (hJ)^k / k!, Bd = h sum_{k<=3} (hJ)^k / (k+1)! b.
struct DiscreteLinear {
  Eigen::Matrix4d A;
  Eigen::Vector4d B;
};
DiscreteLinear rk4_discretize(const Eigen::Matrix4d& J, const Eigen::Vector4d& b, double h);

/// Proxy comparator: LQR on the equilibrium linearisation with the same Q, R,
/// u = u_d - K x clamped at u >= 0, applied to the true dynamics.
DeploymentResult linearized_baseline(const LqrWeights& weights, const DeployConfig& cfg = {});

/// Deployment CSV: tau, x1..x4, u_hat, u; one row per step.
void write_deployment_csv(const DeploymentResult& r, const std::string& path,
                          const std::vector<std::string>& comments = {});

}  // namespace tsrkoop
