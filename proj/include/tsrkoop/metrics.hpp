#pragma once

#include <Eigen/Dense>

#include <optional>
#include <span>
#include <vector>

#include "tsrkoop/dynamics.hpp"
#include "tsrkoop/edmd.hpp"
#include "tsrkoop/koopman.hpp"

namespace tsrkoop {

/// Predicted physical states (4 x m) for a recorded trajectory: roll out
/// from the first state under the recorded controls and read x through C.
Eigen::MatrixXd predict_states(const KoopmanModel& model, const Trajectory& traj);
Eigen::MatrixXd predict_states(const EdmdModel& model, const Trajectory& traj);

/// mean((X - Xhat)^2) over all n x m entries.
double trajectory_mse(const Eigen::MatrixXd& states, const Eigen::MatrixXd& predicted);

struct PredictionError {
  double sum = 0.0;   ///< sum over trajectories of MSE(X_i, Xhat_i)
  double mean = 0.0;  ///< sum / number of trajectories
};

/// Parallel over fixed trajectory chunks, reduced in chunk order.
PredictionError prediction_error(const KoopmanModel& model, std::span<const Trajectory> trajs,
                                 int workers = 1);
PredictionError prediction_error(const EdmdModel& model, std::span<const Trajectory> trajs,
                                 int workers = 1);
/// Plain loop references.
PredictionError prediction_error_serial(const KoopmanModel& model,
                                        std::span<const Trajectory> trajs);
PredictionError prediction_error_serial(const EdmdModel& model, std::span<const Trajectory> trajs);

/// Entry j: mean over trajectories of the mean squared state error at step j.
std::vector<double> per_step_error(const KoopmanModel& model, std::span<const Trajectory> trajs,
                                   int workers = 1);
std::vector<double> per_step_error(const EdmdModel& model, std::span<const Trajectory> trajs,
                                   int workers = 1);

inline constexpr double kPrecisionZone = 0.01;

/// Earliest time k*h after which |x1| <= zone and |x3| <= zone for every
/// remaining sample; nullopt if the last sample is outside the zone.
std::optional<double> settling_time(const Eigen::MatrixXd& states, double h,
                                    double zone = kPrecisionZone);
/// Step index form of settling_time.
std::optional<int> settling_step(const Eigen::MatrixXd& states, double zone = kPrecisionZone);

/// How far x3 rises above its target 0 (0 when it never does).
double x3_overshoot(const Eigen::MatrixXd& states);

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};
Interval x1_range(const Eigen::MatrixXd& states);

}  // namespace tsrkoop
