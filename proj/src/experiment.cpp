#include "tsrkoop/experiment.hpp"

#include <filesystem>
#include <map>
#include <ostream>
#include <sstream>
#include <tuple>

#include "tsrkoop/binary_io.hpp"
#include "tsrkoop/csv.hpp"
#include "tsrkoop/edmd.hpp"
#include "tsrkoop/errors.hpp"
#include "tsrkoop/metrics.hpp"

namespace tsrkoop {

namespace {

constexpr std::uint64_t kDictionarySalt = 0x5851f42d4c957f2dULL;

struct Trained {
  KoopmanModel model;
  EdmdModel edmd;
  Dataset validation;
};

std::string weighting_name(LiftedWeighting w) {
  return w == LiftedWeighting::identity ? "identity" : "selector";
}

class Runner {
 public:
  Runner(const ExperimentSpec& spec, std::ostream* log) : spec_(spec), log_(log) {}

  std::vector<std::string> run() {
    std::filesystem::create_directories(spec_.output_dir);
    const auto k = spec_.kind;
    const bool all = k == ExperimentKind::all;
    if (all || k == ExperimentKind::sample_sweep) sample_sweep();
    if (all || k == ExperimentKind::dim_sweep) dim_sweep();
    if (all || k == ExperimentKind::method_compare) method_compare();
    if (all || k == ExperimentKind::deploy) deploy_study();
    return written_;
  }

 private:
  const ExperimentSpec& spec_;
  std::ostream* log_;
  std::vector<std::string> written_;
  std::map<std::tuple<std::uint64_t, int, int>, Trained> cache_;
  std::optional<KoopmanModel> loaded_;

  void note(const std::string& s) {
    if (log_ != nullptr) *log_ << s << std::endl;
  }

  std::vector<std::string> provenance(std::uint64_t seed) const {
    const auto& s = spec_.sampling;
    const auto& t = spec_.training;
    std::ostringstream samp, train, dep;
    samp << "sampling steps=" << s.steps << " h=" << io::format_exact(s.h)
         << " rate_limit=" << io::format_exact(s.rate_limit);
    train << "training alpha=" << io::format_exact(t.alpha) << " beta=" << io::format_exact(t.beta)
          << " eta=" << io::format_exact(t.eta) << " gamma=" << io::format_exact(t.gamma)
          << " hidden=" << t.hidden_layers << "x" << t.hidden_width << " epochs=" << t.epochs
          << " batch=" << t.batch_size << " lr=" << io::format_exact(t.adam.lr)
          << " final_lr=" << io::format_exact(t.final_lr)
          << " validation_fraction=" << io::format_exact(t.validation_fraction);
    dep << "deploy steps=" << spec_.deployment.steps << " h=" << io::format_exact(spec_.deployment.h)
        << " x0=" << io::format_exact(spec_.deployment.x0(0)) << ";"
        << io::format_exact(spec_.deployment.x0(1)) << ";"
        << io::format_exact(spec_.deployment.x0(2)) << ";"
        << io::format_exact(spec_.deployment.x0(3)) << " R=" << io::format_exact(spec_.weights.R(0, 0))
        << " lifted_weight=" << weighting_name(spec_.weighting);
    return {"seed " + std::to_string(seed), samp.str(), train.str(), dep.str()};
  }

  void emit(CsvTable& t, const std::string& name, std::uint64_t seed) {
    auto c = provenance(seed);
    c.insert(c.end(), t.comments.begin(), t.comments.end());
    t.comments = std::move(c);
    const auto path = (std::filesystem::path(spec_.output_dir) / name).string();
    write_csv(t, path);
    written_.push_back(path);
  }

  const Trained& trained(std::uint64_t seed, int size, int K) {
    const auto key = std::make_tuple(seed, size, K);
    if (auto it = cache_.find(key); it != cache_.end()) return it->second;
    SampleConfig sc = spec_.sampling;
    sc.seed = seed;
    sc.workers = spec_.workers;
    note("sampling " + std::to_string(size) + " trajectories (seed " + std::to_string(seed) + ")");
    const Dataset ds = sample_dataset(sc, size);
    TrainConfig tc = spec_.training;
    tc.seed = seed;
    tc.latent_dim = K;
    tc.workers = spec_.workers;
    note("training K=" + std::to_string(K) + " for " + std::to_string(tc.epochs) + " epochs");
    auto result = train(ds, tc, [this](const EpochRecord& r) {
      std::ostringstream s;
      s << "  epoch " << r.epoch << " L=" << r.train.total << " val_error=" << r.validation_error
        << " exact_L3=" << r.train.controllability_exact;
      note(s.str());
    });
    auto [train_set, val_set] = split_validation(ds, tc.validation_fraction);
    const auto dict = make_rbf_dictionary(K, sc, seed ^ kDictionarySalt);
    note("fitting EDMD with " + std::to_string(K) + " thin-plate centers");
    auto edmd = edmd_fit(train_set, dict, kEdmdRidge, spec_.workers);
    return cache_.emplace(key, Trained{std::move(result.model), std::move(edmd), std::move(val_set)})
        .first->second;
  }

  void sample_sweep() {
    for (auto seed : spec_.seeds) {
      CsvTable t;
      t.columns = {"trajectories", "koopman_mean", "koopman_sum", "edmd_mean", "edmd_sum",
                   "exact_L3"};
      for (int size : spec_.sizes) {
        const auto& tr = trained(seed, size, spec_.training.latent_dim);
        const auto kp = prediction_error(tr.model, tr.validation.trajectories, spec_.workers);
        const auto ed = prediction_error(tr.edmd, tr.validation.trajectories, spec_.workers);
        const auto l3 = loss_controllability(tr.model.A, tr.model.B, spec_.training.hinge_margin);
        t.add_row({cell(size), cell(kp.mean), cell(kp.sum), cell(ed.mean), cell(ed.sum),
                   cell(l3.exact)});
      }
      emit(t, "sample_sweep_seed" + std::to_string(seed) + ".csv", seed);
    }
  }

  void dim_sweep() {
    for (auto seed : spec_.seeds) {
      CsvTable t;
      t.comments = {"trajectories " + std::to_string(spec_.trajectories)};
      t.columns = {"K", "koopman_mean", "edmd_mean", "exact_L3"};
      for (int K : spec_.latent_dims) {
        const auto& tr = trained(seed, spec_.trajectories, K);
        const auto kp = prediction_error(tr.model, tr.validation.trajectories, spec_.workers);
        const auto ed = prediction_error(tr.edmd, tr.validation.trajectories, spec_.workers);
        const auto l3 = loss_controllability(tr.model.A, tr.model.B, spec_.training.hinge_margin);
        t.add_row({cell(K), cell(kp.mean), cell(ed.mean), cell(l3.exact)});
      }
      emit(t, "dim_sweep_seed" + std::to_string(seed) + ".csv", seed);
    }
  }

  const KoopmanModel& model_for(std::uint64_t seed) {
    if (spec_.model_path) {
      if (!loaded_) loaded_ = load_model(*spec_.model_path);
      return *loaded_;
    }
    return trained(seed, spec_.trajectories, spec_.training.latent_dim).model;
  }

  void method_compare() {
    for (auto seed : spec_.seeds) {
      const auto& tr = trained(seed, spec_.trajectories, spec_.training.latent_dim);
      const KoopmanModel& model = spec_.model_path ? model_for(seed) : tr.model;
      const auto kp = per_step_error(model, tr.validation.trajectories, spec_.workers);
      const auto ed = per_step_error(tr.edmd, tr.validation.trajectories, spec_.workers);
      CsvTable t;
      t.comments = {"trajectories " + std::to_string(spec_.trajectories)};
      t.columns = {"step", "koopman", "edmd"};
      for (std::size_t j = 0; j < kp.size(); ++j) t.add_row({cell(j), cell(kp[j]), cell(ed[j])});
      emit(t, "method_compare_seed" + std::to_string(seed) + ".csv", seed);
    }
  }

  void deploy_study() {
    for (auto seed : spec_.seeds) {
      const KoopmanModel& model = model_for(seed);
      CsvTable summary;
      summary.columns = {"controller", "settled", "settling_time", "overshoot_x3", "x1_min",
                         "x1_max", "u_min", "closed_loop_radius"};
      const auto add = [&summary](const DeploymentResult& r, double radius) {
        summary.add_row({r.controller, cell(r.success ? 1 : 0),
                         r.settling_time ? cell(*r.settling_time) : std::string("not-settled"),
                         cell(r.overshoot), cell(r.x1.lo), cell(r.x1.hi), cell(r.u.minCoeff()),
                         cell(radius)});
      };
      const std::string tag = "_seed" + std::to_string(seed) + ".csv";

      try {
        note("solving lifted Riccati equation");
        const Eigen::MatrixXd K = koopman_lqr_gain(model, spec_.weights, spec_.weighting);
        const double radius = closed_loop_spectral_radius(model.A, model.B, K);
        const auto r = deploy(model, K, spec_.deployment);
        write_path(r, "deploy_koopman" + tag, seed);
        add(r, radius);
      } catch (const Error& e) {
        note(std::string("koopman deployment failed: ") + e.what());
        summary.comments.push_back("koopman-lqr failed (" + e.module() + "): " + e.what());
      }
      const auto base = linearized_baseline(spec_.weights, spec_.deployment);
      write_path(base, "deploy_linearized" + tag, seed);
      add(base, std::numeric_limits<double>::quiet_NaN());
      emit(summary, "deploy_summary" + tag, seed);
    }
  }

  void write_path(const DeploymentResult& r, const std::string& name, std::uint64_t seed) {
    const auto path = (std::filesystem::path(spec_.output_dir) / name).string();
    write_deployment_csv(r, path, provenance(seed));
    written_.push_back(path);
  }
};

}  // namespace

ExperimentKind parse_experiment_kind(const std::string& name) {
  if (name == "sample-sweep") return ExperimentKind::sample_sweep;
  if (name == "dim-sweep") return ExperimentKind::dim_sweep;
  if (name == "method-compare") return ExperimentKind::method_compare;
  if (name == "deploy") return ExperimentKind::deploy;
  if (name == "all") return ExperimentKind::all;
  throw ConfigError("harness", "unknown experiment kind '" + name +
                                   "' (sample-sweep|dim-sweep|method-compare|deploy|all)");
}

std::string to_string(ExperimentKind kind) {
  switch (kind) {
    case ExperimentKind::sample_sweep: return "sample-sweep";
    case ExperimentKind::dim_sweep: return "dim-sweep";
    case ExperimentKind::method_compare: return "method-compare";
    case ExperimentKind::deploy: return "deploy";
    case ExperimentKind::all: return "all";
  }
  return "all";
}

void ExperimentSpec::validate() const {
  if (sizes.empty() || latent_dims.empty() || seeds.empty()) {
    throw ConfigError("harness", "experiment parameter lists must be nonempty");
  }
  for (int s : sizes) {
    if (s < 2) throw ConfigError("harness", "dataset sizes must be >= 2");
  }
  for (int k : latent_dims) {
    if (k < 1) throw ConfigError("harness", "K values must be >= 1");
  }
  if (trajectories < 2) throw ConfigError("harness", "trajectories must be >= 2");
  if (output_dir.empty()) throw ConfigError("harness", "output directory must be given");
  if (deployment.steps < 1) throw ConfigError("harness", "deployment steps must be >= 1");
  sampling.validate();
  training.validate();
}

Eigen::MatrixXd koopman_lqr_gain(const KoopmanModel& model, const LqrWeights& weights,
                                 LiftedWeighting weighting, Eigen::MatrixXd* P) {
  const Eigen::MatrixXd Q = lifted_state_weight(weights, model.lifted_dim(), weighting);
  auto sol = solve_dare(model.A, model.B, Q, weights.R);
  Eigen::MatrixXd K = lqr_gain(model.A, model.B, weights.R, sol.P);
  if (P != nullptr) *P = std::move(sol.P);
  return K;
}

std::vector<std::string> run_experiment(const ExperimentSpec& spec, std::ostream* log) {
  spec.validate();
  try {
    return Runner(spec, log).run();
  } catch (const Error& e) {
    throw Error(e.module(), to_string(spec.kind) + " experiment: " + e.what());
  } catch (const std::filesystem::filesystem_error& e) {
    throw IoError("harness", e.what());
  }
}

}  // namespace tsrkoop
