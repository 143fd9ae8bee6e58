#include "tsrkoop/control.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <cstdio>
#include <limits>
#include <string>

#include "tsrkoop/csv.hpp"
#include "tsrkoop/errors.hpp"

namespace tsrkoop {

namespace {

constexpr double kEps = std::numeric_limits<double>::epsilon();
constexpr double kMaxDareResidual = 1e-8;
constexpr long kStallWindow = 1000;

std::string sci(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

void check_shapes(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B, const Eigen::MatrixXd& Q,
                  const Eigen::MatrixXd& R) {
  const auto N = A.rows();
  if (A.cols() != N || B.rows() != N || Q.rows() != N || Q.cols() != N || R.rows() != B.cols() ||
      R.cols() != B.cols()) {
    throw ShapeError("control", "DARE operands have inconsistent shapes");
  }
}

// Cholesky of R + B'PB with a reciprocal-condition guard.
Eigen::LDLT<Eigen::MatrixXd> factor_gain_denominator(const Eigen::MatrixXd& S) {
  Eigen::LDLT<Eigen::MatrixXd> ldlt(S);
  if (!S.allFinite() || ldlt.info() != Eigen::Success || !ldlt.isPositive()) {
    throw ConditioningError("R + B'PB is not positive definite");
  }
  if (!(ldlt.rcond() > 1e3 * kEps)) {
    throw ConditioningError("R + B'PB is numerically singular (rcond " +
                            sci(ldlt.rcond()) + ")");
  }
  return ldlt;
}

void finish(DeploymentResult& r, double zone) {
  r.settling_time = settling_time(r.states, r.h, zone);
  r.overshoot = x3_overshoot(r.states);
  r.x1 = x1_range(r.states);
  r.success = r.settling_time.has_value();
}

}  // namespace

Eigen::MatrixXd lifted_state_weight(const LqrWeights& w, int lifted_dim, LiftedWeighting mode) {
  if (mode == LiftedWeighting::identity) return Eigen::MatrixXd::Identity(lifted_dim, lifted_dim);
  const Eigen::MatrixXd C = selector(kStateDim, lifted_dim);
  return C.transpose() * w.Q * C;
}

double dare_residual(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B, const Eigen::MatrixXd& Q,
                     const Eigen::MatrixXd& R, const Eigen::MatrixXd& P) {
  const Eigen::MatrixXd PA = P * A;
  const Eigen::MatrixXd BtPA = B.transpose() * PA;
  const Eigen::MatrixXd S = R + B.transpose() * P * B;
  const Eigen::MatrixXd rhs = Q + A.transpose() * PA - BtPA.transpose() * S.ldlt().solve(BtPA);
  return (P - rhs).norm();
}

DareSolution solve_dare(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B,
                        const Eigen::MatrixXd& Q, const Eigen::MatrixXd& R,
                        const DareOptions& opts) {
  check_shapes(A, B, Q, R);
  factor_gain_denominator(R);
  DareSolution sol;
  Eigen::MatrixXd P = Q;
  double best_step = std::numeric_limits<double>::infinity();
  long since_best = 0;
  for (long it = 1; it <= opts.max_iterations; ++it) {
    const Eigen::MatrixXd PA = P * A;
    const Eigen::MatrixXd BtPA = B.transpose() * PA;
    // Once |P| eps exceeds |R| the denominator is round-off: the iterate is
    // running away rather than converging.
    if (P.stableNorm() * kEps > R.norm()) {
      throw NoConvergenceError("Riccati iterate diverged (|P| = " + sci(P.stableNorm()) +
                               " at iteration " + std::to_string(it) +
                               "); the pair (A, B) is not numerically stabilisable");
    }
    const auto ldlt = factor_gain_denominator(R + B.transpose() * P * B);
    Eigen::MatrixXd next = Q + A.transpose() * PA - BtPA.transpose() * ldlt.solve(BtPA);
    next = 0.5 * (next + next.transpose()).eval();
    if (!next.allFinite()) {
      throw NoConvergenceError("Riccati iteration diverged at iteration " + std::to_string(it) +
                               "; the pair (A, B) is likely not stabilisable");
    }
    // stableNorm: a plain norm overflows near 1e154 and would fake convergence
    const double step = (next - P).stableNorm();
    P = std::move(next);
    const double p_norm = P.stableNorm();
    if (step < best_step) {
      best_step = step;
      since_best = 0;
    } else {
      ++since_best;
    }
    // Below the tolerance, or stuck at the round-off floor of the update
    // (tiny relative steps that stopped shrinking); the residual check
    // below decides whether that floor is good enough.
    const bool floor_reached = since_best >= kStallWindow && best_step <= 1e-10 * p_norm;
    if (step <= std::max(opts.tolerance, 16.0 * kEps * p_norm) || floor_reached) {
      sol.P = std::move(P);
      sol.iterations = it;
      sol.residual = dare_residual(A, B, Q, R, sol.P);
      if (!(sol.residual < kMaxDareResidual)) {
        throw NoConvergenceError("Riccati iteration stalled at |P| = " + sci(p_norm) +
                                 " with residual " + sci(sol.residual) +
                                 ", above the 1e-8 bound");
      }
      const double radius = closed_loop_spectral_radius(A, B, lqr_gain(A, B, R, sol.P));
      if (!(radius < 1.0)) {
        throw NoConvergenceError("Riccati fixed point is not stabilising (closed-loop radius " +
                                 std::to_string(radius) + ")");
      }
      return sol;
    }
  }
  throw NoConvergenceError("Riccati iteration did not converge in " +
                           std::to_string(opts.max_iterations) +
                           " iterations; the pair (A, B) is likely not stabilisable");
}

Eigen::MatrixXd lqr_gain(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B,
                         const Eigen::MatrixXd& R, const Eigen::MatrixXd& P) {
  check_shapes(A, B, P, R);
  const auto ldlt = factor_gain_denominator(R + B.transpose() * P * B);
  return ldlt.solve(B.transpose() * P * A);
}

double closed_loop_spectral_radius(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B,
                                   const Eigen::MatrixXd& K) {
  const Eigen::MatrixXd Acl = A - B * K;
  Eigen::EigenSolver<Eigen::MatrixXd> es(Acl, false);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

DeploymentResult deploy(const KoopmanModel& model, const Eigen::MatrixXd& K,
                        const DeployConfig& cfg) {
  model.check_shapes();
  if (K.rows() != kControlDim || K.cols() != model.lifted_dim()) {
    throw ShapeError("control", "LQR gain must be 1 x N");
  }
  const Eigen::VectorXd z_d = lift(model, cfg.x_d);
  const double u_hat_d = embed_control(model, cfg.x_d, cfg.u_d);

  DeploymentResult r;
  r.controller = "koopman-lqr";
  r.h = cfg.h;
  r.u_hat.resize(cfg.steps);
  const Policy policy = [&](int k, const TsrState& x) {
    const double u_hat = u_hat_d - (K * (lift(model, x) - z_d))(0);
    r.u_hat(k) = u_hat;
    try {
      return recover_control(model, x, u_hat);
    } catch (const GateError& e) {
      throw GateError("control", "step " + std::to_string(k) + ": " + e.what());
    }
  };
  const Trajectory t = simulate(cfg.x0, policy, cfg.steps, StepConfig{cfg.h});
  r.states = t.states;
  r.u = t.controls.row(0);
  finish(r, cfg.zone);
  return r;
}

Eigen::Matrix4d tsr_state_jacobian(const TsrState& x, double) {
  if (!(x(2) + 1.0 > 0.0)) throw DomainError("Jacobian undefined for x3 <= -1");
  const double l = x(2) + 1.0;
  const double w = x(1) + 1.0;
  const double s = std::sin(x(0));
  const double c = std::cos(x(0));
  Eigen::Matrix4d J = Eigen::Matrix4d::Zero();
  J(0, 1) = 1.0;
  J(1, 0) = -3.0 * (c * c - s * s);
  J(1, 1) = -2.0 * x(3) / l;
  J(1, 2) = 2.0 * x(3) * w / (l * l);
  J(1, 3) = -2.0 * w / l;
  J(2, 3) = 1.0;
  J(3, 0) = -6.0 * l * s * c;
  J(3, 1) = 2.0 * l * w;
  J(3, 2) = w * w + 3.0 * c * c - 1.0;
  return J;
}

Eigen::Vector4d tsr_input_jacobian() { return tsr_input_direction(); }

DiscreteLinear rk4_discretize(const Eigen::Matrix4d& J, const Eigen::Vector4d& b, double h) {
  const Eigen::Matrix4d M = h * J;
  const Eigen::Matrix4d I = Eigen::Matrix4d::Identity();
  const Eigen::Matrix4d M2 = M * M;
  const Eigen::Matrix4d M3 = M2 * M;
  DiscreteLinear d;
  d.A = I + M + M2 / 2.0 + M3 / 6.0 + M3 * M / 24.0;
  d.B = h * (I + M / 2.0 + M2 / 6.0 + M3 / 24.0) * b;
  return d;
}

DeploymentResult linearized_baseline(const LqrWeights& weights, const DeployConfig& cfg) {
  const auto d = rk4_discretize(tsr_state_jacobian(cfg.x_d, cfg.u_d), tsr_input_jacobian(), cfg.h);
  const Eigen::MatrixXd A = d.A;
  const Eigen::MatrixXd B = d.B;
  const auto sol = solve_dare(A, B, weights.Q, weights.R);
  const Eigen::MatrixXd K = lqr_gain(A, B, weights.R, sol.P);

  DeploymentResult r;
  r.controller = "linearized-proxy";
  r.h = cfg.h;
  const Policy policy = [&](int, const TsrState& x) {
    return std::max(0.0, cfg.u_d - (K * (x - cfg.x_d))(0));
  };
  const Trajectory t = simulate(cfg.x0, policy, cfg.steps, StepConfig{cfg.h});
  r.states = t.states;
  r.u = t.controls.row(0);
  r.u_hat = r.u;
  finish(r, cfg.zone);
  return r;
}

void write_deployment_csv(const DeploymentResult& r, const std::string& path,
                          const std::vector<std::string>& comments) {
  CsvTable t;
  t.comments = comments;
  t.comments.push_back("controller " + r.controller);
  t.columns = {"tau", "x1", "x2", "x3", "x4", "u_hat", "u"};
  for (int k = 0; k < r.steps(); ++k) {
    t.add_row({cell(k * r.h), cell(r.states(0, k)), cell(r.states(1, k)), cell(r.states(2, k)),
               cell(r.states(3, k)), cell(r.u_hat(k)), cell(r.u(k))});
  }
  write_csv(t, path);
}

}  // namespace tsrkoop
