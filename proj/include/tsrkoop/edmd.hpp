#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "tsrkoop/dynamics.hpp"
#include "tsrkoop/sampler.hpp"

namespace tsrkoop {

/// Thin-plate spline dictionary phi_i(x) = r^2 log r, r = |x - c_i|.
struct RbfDictionary {
  std::vector<TsrState> centers;
  bool includes_state = true;  ///< lifted vector is [x; rbf(x)]

  int size() const { return static_cast<int>(centers.size()); }
  int lifted_dim() const { return size() + (includes_state ? kStateDim : 0); }
  bool operator==(const RbfDictionary&) const = default;
};

/// K centers drawn uniformly from the state ranges of `sampling` with `seed`.
RbfDictionary make_rbf_dictionary(int K, const SampleConfig& sampling, std::uint64_t seed);

/// r^2 log r with the continuous extension 0 at r = 0.
double thin_plate(double r);

Eigen::VectorXd rbf_lift(const RbfDictionary& dict, const TsrState& x);

struct EdmdModel {
  RbfDictionary dictionary;
  Eigen::MatrixXd A;
  Eigen::MatrixXd B;
  double ridge = 1e-10;

  int lifted_dim() const { return static_cast<int>(A.rows()); }
  bool operator==(const EdmdModel& o) const;
};

inline constexpr double kEdmdRidge = 1e-10;

/// Least-squares [A B] = argmin |Z+ - A Z - B U|_F over pooled one-step pairs
/// (lifted snapshots as columns), with Tikhonov ridge on the normal equations.
/// Throws RankDeficiencyError for fewer pairs than unknowns or a numerically
/// singular Gram matrix.
struct LinearFit {
  Eigen::MatrixXd A;
  Eigen::MatrixXd B;
};
LinearFit fit_lifted_pairs(const Eigen::MatrixXd& Z, const Eigen::MatrixXd& U,
                           const Eigen::MatrixXd& Z_next, double ridge = kEdmdRidge);

/// Lifts every snapshot of `dataset` with `dict` and fits (A, B). The Gram
/// matrix is assembled from fixed trajectory chunks on up to `workers`
/// threads and reduced in chunk order.
EdmdModel edmd_fit(const Dataset& dataset, const RbfDictionary& dict, double ridge = kEdmdRidge,
                   int workers = 1);
/// Reference: stacks all pairs into one regressor matrix.
EdmdModel edmd_fit_serial(const Dataset& dataset, const RbfDictionary& dict,
                          double ridge = kEdmdRidge);

/// z_{j+1} = A z_j + B u_j from rbf_lift(x0); returns N x (len + 1).
Eigen::MatrixXd edmd_rollout(const EdmdModel& model, const TsrState& x0,
                             std::span<const double> u);

void save_edmd(const EdmdModel& model, const std::string& path);
EdmdModel load_edmd(const std::string& path);

}  // namespace tsrkoop
