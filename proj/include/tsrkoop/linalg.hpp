#pragma once

#include <Eigen/Dense>

namespace tsrkoop::linalg {

/// [B, AB, ..., A^(N-1) B] for N = A.rows().
Eigen::MatrixXd controllability_matrix(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B);

/// Number of singular values above sigma_max * max(rows, cols) * eps.
int svd_rank(const Eigen::MatrixXd& M);

/// Largest eigenvalue modulus of a square matrix.
double spectral_radius(const Eigen::MatrixXd& M);

/// Orthogonal Krylov (staircase) analysis of a single-input pair (A, b).
///
/// Builds an orthonormal basis of span{b, Ab, A^2 b, ...} by Arnoldi with two
/// passes of modified Gram-Schmidt. `subdiagonal(0)` is |b| and
/// `subdiagonal(k)` is the distance of A q_{k-1} from the first k basis
/// vectors. The dimension of the controllable subspace is the number of leading
/// entries above `tolerance`. This is the rank of the controllability matrix,
/// computed without forming the (severely ill-conditioned) power sequence.
struct KrylovStaircase {
  int rank = 0;
  double tolerance = 0.0;
  Eigen::VectorXd subdiagonal;  ///< computed entries only, size min(rank + 1, N)
};

KrylovStaircase krylov_staircase(const Eigen::MatrixXd& A, const Eigen::VectorXd& b);

/// Hinge penalty sum_k max(0, delta - h_k) / delta over the N staircase
/// entries (entries never reached count as h_k = 0), with its gradient.
/// Zero exactly when every h_k >= delta, which implies full rank whenever
/// delta exceeds the staircase tolerance.
struct ControllabilityPenalty {
  double value = 0.0;
  int rank = 0;
  Eigen::MatrixXd dA;
  Eigen::VectorXd db;
};

ControllabilityPenalty controllability_penalty(const Eigen::MatrixXd& A, const Eigen::VectorXd& b,
                                               double delta, bool want_gradient = true);

}  // namespace tsrkoop::linalg
