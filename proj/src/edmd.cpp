#include "tsrkoop/edmd.hpp"

#include <Eigen/Cholesky>

#include <cmath>
#include <limits>
#include <random>

#include "tsrkoop/errors.hpp"
#include "tsrkoop/koopman.hpp"
#include "tsrkoop/parallel.hpp"

namespace tsrkoop {

namespace {

constexpr std::size_t kChunkTrajectories = 64;

struct Normal {
  Eigen::MatrixXd gram;   // Phi Phi^T, Phi = [Z; U]
  Eigen::MatrixXd cross;  // Z+ Phi^T
  long pairs = 0;
};

void add_trajectory(const RbfDictionary& dict, const Trajectory& t, Normal& acc) {
  const int N = dict.lifted_dim();
  const int m = t.steps();
  if (m < 2) return;
  Eigen::MatrixXd lifted(N, m);
  for (int j = 0; j < m; ++j) lifted.col(j) = rbf_lift(dict, t.state(j));
  Eigen::MatrixXd phi(N + kControlDim, m - 1);
  phi.topRows(N) = lifted.leftCols(m - 1);
  phi.bottomRows(kControlDim) = t.controls.leftCols(m - 1);
  acc.gram.noalias() += phi * phi.transpose();
  acc.cross.noalias() += lifted.rightCols(m - 1) * phi.transpose();
  acc.pairs += m - 1;
}

LinearFit solve_normal(const Normal& acc, int N, int p, double ridge) {
  const int unknowns = N + p;
  if (acc.pairs < unknowns) {
    throw RankDeficiencyError("EDMD needs at least " + std::to_string(unknowns) +
                              " one-step pairs, got " + std::to_string(acc.pairs));
  }
  Eigen::MatrixXd G = acc.gram;
  G.diagonal().array() += ridge;
  Eigen::LDLT<Eigen::MatrixXd> ldlt(G);
  const double rcond = ldlt.rcond();
  if (ldlt.info() != Eigen::Success || !(rcond > std::numeric_limits<double>::epsilon())) {
    throw RankDeficiencyError("EDMD Gram matrix is numerically singular (rcond " +
                              std::to_string(rcond) + ")");
  }
  // [A B] = Z+ Phi^T G^-1, solved as G X^T = (Z+ Phi^T)^T
  const Eigen::MatrixXd AB = ldlt.solve(acc.cross.transpose()).transpose();
  return {AB.leftCols(N), AB.rightCols(p)};
}

}  // namespace

double thin_plate(double r) { return r > 0.0 ? r * r * std::log(r) : 0.0; }

RbfDictionary make_rbf_dictionary(int K, const SampleConfig& sampling, std::uint64_t seed) {
  if (K < 1) throw ConfigError("edmd", "RBF dictionary needs at least one center");
  std::mt19937_64 rng(seed);
  RbfDictionary dict;
  dict.centers.reserve(static_cast<std::size_t>(K));
  while (dict.size() < K) {
    TsrState c;
    for (int i = 0; i < kStateDim; ++i) {
      const auto& r = sampling.state_ranges[i];
      c(i) = r.lo + (r.hi - r.lo) * (static_cast<double>(rng() >> 11) * 0x1.0p-53);
    }
    bool distinct = true;
    for (const auto& other : dict.centers) distinct = distinct && other != c;
    if (distinct) dict.centers.push_back(c);
  }
  return dict;
}

Eigen::VectorXd rbf_lift(const RbfDictionary& dict, const TsrState& x) {
  const int off = dict.includes_state ? kStateDim : 0;
  Eigen::VectorXd z(dict.lifted_dim());
  if (dict.includes_state) z.head(kStateDim) = x;
  for (int i = 0; i < dict.size(); ++i) {
    z(off + i) = thin_plate((x - dict.centers[static_cast<std::size_t>(i)]).norm());
  }
  return z;
}

bool EdmdModel::operator==(const EdmdModel& o) const {
  return dictionary == o.dictionary && ridge == o.ridge && A.rows() == o.A.rows() &&
         A.cols() == o.A.cols() && B.rows() == o.B.rows() && B.cols() == o.B.cols() &&
         A == o.A && B == o.B;
}

LinearFit fit_lifted_pairs(const Eigen::MatrixXd& Z, const Eigen::MatrixXd& U,
                           const Eigen::MatrixXd& Z_next, double ridge) {
  if (Z.cols() != U.cols() || Z.cols() != Z_next.cols() || Z.rows() != Z_next.rows()) {
    throw ShapeError("edmd", "fit_lifted_pairs: snapshot matrices disagree in shape");
  }
  const auto N = static_cast<int>(Z.rows());
  const auto p = static_cast<int>(U.rows());
  Eigen::MatrixXd phi(N + p, Z.cols());
  phi << Z, U;
  Normal acc{phi * phi.transpose(), Z_next * phi.transpose(), static_cast<long>(Z.cols())};
  return solve_normal(acc, N, p, ridge);
}

EdmdModel edmd_fit(const Dataset& dataset, const RbfDictionary& dict, double ridge, int workers) {
  const int N = dict.lifted_dim();
  const int dim = N + kControlDim;
  const auto chunks = fixed_chunks(dataset.size(), kChunkTrajectories);
  std::vector<Normal> partials(chunks.size());
  const int threads = resolve_workers(workers);
  const auto count = static_cast<long>(chunks.size());

#pragma omp parallel for schedule(dynamic, 1) num_threads(threads) if (threads > 1)
  for (long c = 0; c < count; ++c) {
    Normal& acc = partials[static_cast<std::size_t>(c)];
    acc.gram = Eigen::MatrixXd::Zero(dim, dim);
    acc.cross = Eigen::MatrixXd::Zero(N, dim);
    const auto& r = chunks[static_cast<std::size_t>(c)];
    for (std::size_t i = r.begin; i < r.end; ++i) add_trajectory(dict, dataset.trajectories[i], acc);
  }

  Normal total{Eigen::MatrixXd::Zero(dim, dim), Eigen::MatrixXd::Zero(N, dim), 0};
  for (const auto& part : partials) {
    total.gram += part.gram;
    total.cross += part.cross;
    total.pairs += part.pairs;
  }
  auto fit = solve_normal(total, N, kControlDim, ridge);
  return {dict, std::move(fit.A), std::move(fit.B), ridge};
}

EdmdModel edmd_fit_serial(const Dataset& dataset, const RbfDictionary& dict, double ridge) {
  const int N = dict.lifted_dim();
  long pairs = 0;
  for (const auto& t : dataset.trajectories) pairs += std::max(0, t.steps() - 1);
  Eigen::MatrixXd Z(N, pairs), U(kControlDim, pairs), Z_next(N, pairs);
  long col = 0;
  for (const auto& t : dataset.trajectories) {
    for (int j = 0; j + 1 < t.steps(); ++j, ++col) {
      Z.col(col) = rbf_lift(dict, t.state(j));
      U(0, col) = t.control(j);
      Z_next.col(col) = rbf_lift(dict, t.state(j + 1));
    }
  }
  auto fit = fit_lifted_pairs(Z, U, Z_next, ridge);
  return {dict, std::move(fit.A), std::move(fit.B), ridge};
}

Eigen::MatrixXd edmd_rollout(const EdmdModel& model, const TsrState& x0,
                             std::span<const double> u) {
  return rollout_lifted(model.A, model.B, rbf_lift(model.dictionary, x0), u);
}

}  // namespace tsrkoop
