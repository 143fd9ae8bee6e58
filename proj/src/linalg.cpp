#include "tsrkoop/linalg.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include <algorithm>
#include <limits>
#include <vector>

#include "tsrkoop/errors.hpp"

namespace tsrkoop::linalg {

Eigen::MatrixXd controllability_matrix(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B) {
  if (A.rows() != A.cols() || A.rows() != B.rows()) {
    throw ShapeError("linalg", "controllability_matrix: A must be square and match B's rows");
  }
  const Eigen::Index n = A.rows();
  const Eigen::Index p = B.cols();
  Eigen::MatrixXd C(n, n * p);
  if (n == 0) return C;
  C.leftCols(p) = B;
  for (Eigen::Index i = 1; i < n; ++i) {
    C.middleCols(i * p, p) = A * C.middleCols((i - 1) * p, p);
  }
  return C;
}

int svd_rank(const Eigen::MatrixXd& M) {
  if (M.size() == 0) return 0;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(M);
  const auto& s = svd.singularValues();
  const double tol = s(0) * static_cast<double>(std::max(M.rows(), M.cols())) *
                     std::numeric_limits<double>::epsilon();
  return static_cast<int>((s.array() > tol).count());
}

double spectral_radius(const Eigen::MatrixXd& M) {
  if (M.rows() != M.cols()) throw ShapeError("linalg", "spectral_radius needs a square matrix");
  if (M.size() == 0) return 0.0;
  Eigen::EigenSolver<Eigen::MatrixXd> es(M, false);
  if (es.info() != Eigen::Success) throw ConditioningError("linalg", "eigenvalue solver failed");
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

namespace {

constexpr int kGramSchmidtPasses = 2;

// Forward record of the staircase so that the reverse pass can replay it.
struct ArnoldiTape {
  Eigen::MatrixXd Q;              // basis vectors, one per column
  Eigen::VectorXd h;              // subdiagonal entries actually computed
  std::vector<Eigen::MatrixXd> w;  // per step: w before each projection, then final w
  int rank = 0;
  double tolerance = 0.0;
};

ArnoldiTape run_arnoldi(const Eigen::MatrixXd& A, const Eigen::VectorXd& b) {
  if (A.rows() != A.cols() || A.rows() != b.size()) {
    throw ShapeError("linalg", "krylov_staircase: A must be square and match b");
  }
  const Eigen::Index n = A.rows();
  ArnoldiTape tape;
  tape.tolerance = static_cast<double>(n) * std::numeric_limits<double>::epsilon() *
                   std::max(A.norm(), b.norm());
  tape.Q.resize(n, n);
  tape.w.resize(static_cast<std::size_t>(n));
  std::vector<double> h;
  if (n == 0) return tape;

  h.push_back(b.norm());
  if (!(h[0] > tape.tolerance)) {
    tape.h = Eigen::Map<Eigen::VectorXd>(h.data(), 1);
    return tape;
  }
  tape.Q.col(0) = b / h[0];
  tape.rank = 1;
  for (Eigen::Index k = 1; k < n; ++k) {
    auto& rec = tape.w[static_cast<std::size_t>(k)];
    rec.resize(n, kGramSchmidtPasses * k + 1);
    Eigen::VectorXd w = A * tape.Q.col(k - 1);
    Eigen::Index slot = 0;
    for (int pass = 0; pass < kGramSchmidtPasses; ++pass) {
      for (Eigen::Index j = 0; j < k; ++j) {
        rec.col(slot++) = w;
        w -= tape.Q.col(j).dot(w) * tape.Q.col(j);
      }
    }
    rec.col(slot) = w;
    const double hk = w.norm();
    h.push_back(hk);
    if (!(hk > tape.tolerance)) break;
    tape.Q.col(k) = w / hk;
    tape.rank = static_cast<int>(k) + 1;
  }
  tape.h = Eigen::Map<Eigen::VectorXd>(h.data(), static_cast<Eigen::Index>(h.size()));
  return tape;
}

}  // namespace

KrylovStaircase krylov_staircase(const Eigen::MatrixXd& A, const Eigen::VectorXd& b) {
  ArnoldiTape tape = run_arnoldi(A, b);
  return {tape.rank, tape.tolerance, std::move(tape.h)};
}

ControllabilityPenalty controllability_penalty(const Eigen::MatrixXd& A, const Eigen::VectorXd& b,
                                               double delta, bool want_gradient) {
  if (!(delta > 0.0)) throw ConfigError("linalg", "hinge margin must be positive");
  const ArnoldiTape tape = run_arnoldi(A, b);
  const Eigen::Index n = A.rows();
  const auto computed = tape.h.size();

  ControllabilityPenalty out;
  out.rank = tape.rank;
  Eigen::VectorXd h_bar = Eigen::VectorXd::Zero(computed);
  for (Eigen::Index k = 0; k < computed; ++k) {
    if (tape.h(k) < delta) {
      out.value += (delta - tape.h(k)) / delta;
      h_bar(k) = -1.0 / delta;
    }
  }
  out.value += static_cast<double>(n - computed);  // entries never reached
  if (!want_gradient) return out;

  out.dA = Eigen::MatrixXd::Zero(n, n);
  out.db = Eigen::VectorXd::Zero(n);
  if (n == 0) return out;
  Eigen::MatrixXd Q_bar = Eigen::MatrixXd::Zero(n, n);

  // Gradient of h = |w| and q = w / h with respect to w.
  auto normalize_bar = [](const Eigen::VectorXd& w, double h, bool has_q,
                          const Eigen::VectorXd& q_bar, double hb) -> Eigen::VectorXd {
    if (!(h > 0.0)) return Eigen::VectorXd::Zero(w.size());
    const Eigen::VectorXd q = w / h;
    Eigen::VectorXd w_bar = hb * q;
    if (has_q) w_bar += (q_bar - q * q.dot(q_bar)) / h;
    return w_bar;
  };

  for (Eigen::Index k = computed - 1; k >= 1; --k) {
    const auto& rec = tape.w[static_cast<std::size_t>(k)];
    const Eigen::Index slots = kGramSchmidtPasses * k;
    const bool has_q = k < tape.rank;
    Eigen::VectorXd w_bar =
        normalize_bar(rec.col(slots), tape.h(k), has_q, Q_bar.col(k), h_bar(k));
    Eigen::Index slot = slots;
    for (int pass = kGramSchmidtPasses - 1; pass >= 0; --pass) {
      for (Eigen::Index j = k - 1; j >= 0; --j) {
        --slot;
        const auto q = tape.Q.col(j);
        const Eigen::VectorXd& w_in = rec.col(slot);
        const double c = q.dot(w_in);
        const double c_bar = -q.dot(w_bar);
        Q_bar.col(j) += c_bar * w_in - c * w_bar;
        w_bar += c_bar * q;
      }
    }
    out.dA.noalias() += w_bar * tape.Q.col(k - 1).transpose();
    Q_bar.col(k - 1).noalias() += A.transpose() * w_bar;
  }
  out.db = normalize_bar(b, tape.h(0), tape.rank > 0, Q_bar.col(0), h_bar(0));
  return out;
}

}  // namespace tsrkoop::linalg
