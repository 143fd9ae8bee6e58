#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "tsrkoop/control.hpp"
#include "tsrkoop/koopman.hpp"
#include "tsrkoop/sampler.hpp"

namespace tsrkoop {

enum class ExperimentKind { sample_sweep, dim_sweep, method_compare, deploy, all };

ExperimentKind parse_experiment_kind(const std::string& name);
std::string to_string(ExperimentKind kind);

/// One study or the whole set. Each (seed, dataset size, K) model is trained
/// once and shared between the studies that need it.
struct ExperimentSpec {
  ExperimentKind kind = ExperimentKind::all;
  std::vector<int> sizes{1000, 2000, 5000};           ///< sample-sweep dataset sizes
  std::vector<int> latent_dims{8, 16, 24, 36, 48};     ///< dim-sweep K values
  int trajectories = 5000;                             ///< dataset size for the other studies
  std::vector<std::uint64_t> seeds{0};
  SampleConfig sampling{};
  TrainConfig training{};
  DeployConfig deployment{};
  LqrWeights weights{};
  LiftedWeighting weighting = LiftedWeighting::identity;
  /// Use this trained model for method-compare and deploy instead of training.
  std::optional<std::string> model_path;
  std::string output_dir = "results";
  int workers = 1;

  void validate() const;
};

/// Runs the requested studies, writes their CSVs into spec.output_dir and
/// returns the written paths. Progress goes to `log` when given.
std::vector<std::string> run_experiment(const ExperimentSpec& spec, std::ostream* log = nullptr);

/// Solves the lifted DARE for `model` and returns the gain; P is optional output.
Eigen::MatrixXd koopman_lqr_gain(const KoopmanModel& model, const LqrWeights& weights,
                                 LiftedWeighting weighting, Eigen::MatrixXd* P = nullptr);

}  // namespace tsrkoop
