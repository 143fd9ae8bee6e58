#include "cli.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <iostream>

#include "tsrkoop/control.hpp"
#include "tsrkoop/csv.hpp"
#include "tsrkoop/edmd.hpp"
#include "tsrkoop/errors.hpp"
#include "tsrkoop/experiment.hpp"
#include "tsrkoop/koopman.hpp"
#include "tsrkoop/metrics.hpp"
#include "tsrkoop/parallel.hpp"
#include "tsrkoop/sampler.hpp"

namespace tsrkoop {

namespace {

void add_sampling_flags(CLI::App* cmd, SampleConfig& s) {
  cmd->add_option("--steps", s.steps, "States per trajectory (m)")->check(CLI::Range(2, 1 << 20));
  cmd->add_option("--dt", s.h, "Integration step in dimensionless time")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--rate-limit", s.rate_limit,
                  "Reject trajectories with |x2| or |x4| above this bound")
      ->check(CLI::PositiveNumber);
}

void add_training_flags(CLI::App* cmd, TrainConfig& t) {
  cmd->add_option("--k", t.latent_dim, "Learned observables K (lifted dimension K + 4)")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--alpha", t.alpha, "Weight of the reconstruction loss L1")
      ->check(CLI::NonNegativeNumber);
  cmd->add_option("--beta", t.beta, "Weight of the prediction loss L2")
      ->check(CLI::NonNegativeNumber);
  cmd->add_option("--eta", t.eta, "Weight of the controllability surrogate L3")
      ->check(CLI::NonNegativeNumber);
  cmd->add_option("--gamma", t.gamma, "Per-step prediction decay, in (0, 1)")
      ->check(CLI::Range(0.0, 1.0));
  cmd->add_option("--epochs", t.epochs, "Training epochs")->check(CLI::NonNegativeNumber);
  cmd->add_option("--batch", t.batch_size, "Mini-batch size")->check(CLI::PositiveNumber);
  cmd->add_option("--lr", t.adam.lr, "Initial Adam learning rate")->check(CLI::PositiveNumber);
  cmd->add_option("--final-lr", t.final_lr,
                  "Learning rate at the last epoch (cosine schedule)")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--hidden-width", t.hidden_width, "Units per hidden layer")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--hidden-layers", t.hidden_layers, "Hidden tanh layers")
      ->check(CLI::NonNegativeNumber);
  cmd->add_option("--validation-fraction", t.validation_fraction,
                  "Fraction of trajectories held out for validation")
      ->check(CLI::Range(0.0, 0.99));
  cmd->add_option("--hinge-margin", t.hinge_margin,
                  "Staircase margin of the controllability surrogate")
      ->check(CLI::PositiveNumber);
}

LiftedWeighting parse_weighting(const std::string& s) {
  if (s == "identity") return LiftedWeighting::identity;
  if (s == "selector") return LiftedWeighting::selector;
  throw ConfigError("harness", "unknown weighting '" + s + "' (identity|selector)");
}

const std::map<std::string, LiftedWeighting> kWeightings{
    {"identity", LiftedWeighting::identity}, {"selector", LiftedWeighting::selector}};

void print_deployment(const DeploymentResult& r) {
  std::cout << r.controller << ": ";
  if (r.settling_time) {
    std::cout << "settled at tau=" << *r.settling_time;
  } else {
    std::cout << "not settled";
  }
  std::cout << ", x3 overshoot " << r.overshoot << ", x1 in [" << r.x1.lo << ", " << r.x1.hi
            << "], min u " << r.u.minCoeff() << '\n';
}

}  // namespace

int cli_main(int argc, char** argv) {
  CLI::App app{"Learned Koopman models and lifted LQR for tethered space robot deployment"};
  app.option_defaults()->always_capture_default();
  app.require_subcommand(1);
  app.set_version_flag("--version", "tsrkoop 1.0");

  int workers = 1;
  app.add_option("--workers", workers,
                 std::string("Worker threads (0 = OpenMP default); ") + kWorkersEnv +
                     " overrides")
      ->check(CLI::NonNegativeNumber);

  // sample
  auto* sample = app.add_subcommand("sample", "Generate a randomly excited trajectory dataset");
  SampleConfig scfg;
  int trajectories = 5000;
  std::string sample_out;
  sample->add_option("--trajectories", trajectories, "Number of trajectories")
      ->check(CLI::PositiveNumber);
  sample->add_option("--seed", scfg.seed, "Dataset seed");
  sample->add_option("--out", sample_out, "Output dataset (KPDS1)")->required();
  add_sampling_flags(sample, scfg);

  // train
  auto* trn = app.add_subcommand("train", "Train the lifting network, gate, A and B");
  TrainConfig tcfg;
  std::string train_data, train_out, history_out;
  trn->add_option("--data", train_data, "Training dataset (KPDS1)")->required();
  trn->add_option("--out", train_out, "Output model (KPKM1)")->required();
  trn->add_option("--history", history_out, "Per-epoch history CSV");
  trn->add_option("--seed", tcfg.seed, "Initialisation and shuffling seed");
  add_training_flags(trn, tcfg);

  // edmd
  auto* edmd = app.add_subcommand("edmd", "Fit the thin-plate-spline EDMD baseline");
  std::string edmd_data, edmd_out;
  int edmd_k = 36;
  std::uint64_t edmd_seed = 0;
  double ridge = kEdmdRidge;
  double edmd_val = 0.1;
  edmd->add_option("--data", edmd_data, "Training dataset (KPDS1)")->required();
  edmd->add_option("--out", edmd_out, "Output model (KPKM1, method edmd)")->required();
  edmd->add_option("--k", edmd_k, "Number of RBF centers")->check(CLI::PositiveNumber);
  edmd->add_option("--seed", edmd_seed, "Center seed");
  edmd->add_option("--ridge", ridge, "Tikhonov ridge")->check(CLI::NonNegativeNumber);
  edmd->add_option("--validation-fraction", edmd_val,
                   "Held-out fraction excluded from the fit (matches train)")
      ->check(CLI::Range(0.0, 0.99));

  // eval
  auto* eval = app.add_subcommand("eval", "Prediction error of a model on a dataset");
  std::string eval_model, eval_data, per_step_out;
  double eval_val = 0.0;
  eval->add_option("--model", eval_model, "Model file (learned or EDMD)")->required();
  eval->add_option("--data", eval_data, "Dataset (KPDS1)")->required();
  eval->add_option("--validation-fraction", eval_val,
                   "Evaluate only the trailing held-out fraction (0 = whole dataset)")
      ->check(CLI::Range(0.0, 0.99));
  eval->add_option("--per-step", per_step_out, "Per-step error CSV");

  // deploy
  auto* dep = app.add_subcommand("deploy", "Closed-loop deployment with the lifted LQR");
  DeployConfig dcfg;
  LqrWeights weights;
  double r_weight = 15.0;
  LiftedWeighting weighting = LiftedWeighting::identity;
  std::string dep_model, dep_out = "deploy.csv", baseline_out;
  std::vector<double> x0{dcfg.x0(0), dcfg.x0(1), dcfg.x0(2), dcfg.x0(3)};
  dep->add_option("--model", dep_model, "Learned model (KPKM1)")->required();
  dep->add_option("--steps", dcfg.steps, "Simulation steps")->check(CLI::PositiveNumber);
  dep->add_option("--dt", dcfg.h, "Step size")->check(CLI::PositiveNumber);
  dep->add_option("--x0", x0, "Initial state x1 x2 x3 x4")->expected(4);
  dep->add_option("--r", r_weight, "Control weight R' = R")->check(CLI::PositiveNumber);
  dep->add_option("--weighting", weighting,
                  "Lifted state weight: identity (Q' = I_N) or selector (Q' = C^T C)")
      ->transform(CLI::CheckedTransformer(kWeightings, CLI::ignore_case));
  dep->add_option("--out", dep_out, "Deployment CSV (tau, x1..x4, u_hat, u)");
  dep->add_option("--baseline", baseline_out, "Also run the linearized proxy, writing this CSV");

  // experiment
  auto* exp = app.add_subcommand("experiment", "Run the prediction and deployment studies");
  ExperimentSpec spec;
  std::string kind = "all";
  std::string exp_weighting = "identity";
  std::string exp_model;
  exp->add_option("--kind", kind, "sample-sweep | dim-sweep | method-compare | deploy | all")
      ->check(CLI::IsMember({"sample-sweep", "dim-sweep", "method-compare", "deploy", "all"}));
  exp->add_option("--sizes", spec.sizes, "Dataset sizes for the sample sweep")
      ->check(CLI::PositiveNumber);
  exp->add_option("--k-values", spec.latent_dims, "K values for the dimension sweep")
      ->check(CLI::PositiveNumber);
  exp->add_option("--trajectories", spec.trajectories,
                  "Dataset size for the other studies (paper scale: 40000)")
      ->check(CLI::PositiveNumber);
  exp->add_option("--seeds", spec.seeds, "Seeds; every study runs once per seed");
  exp->add_option("--out-dir", spec.output_dir, "Directory for the CSV artifacts");
  exp->add_option("--model", exp_model, "Use this trained model for method-compare and deploy");
  exp->add_option("--deploy-steps", spec.deployment.steps, "Deployment simulation steps")
      ->check(CLI::PositiveNumber);
  exp->add_option("--weighting", exp_weighting, "Lifted state weight: identity | selector")
      ->check(CLI::IsMember({"identity", "selector"}));
  add_training_flags(exp, spec.training);
  add_sampling_flags(exp, spec.sampling);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*sample) {
      scfg.workers = workers;
      const auto t0 = std::chrono::steady_clock::now();
      const Dataset ds = sample_dataset(scfg, trajectories);
      save_dataset(ds, sample_out);
      const std::chrono::duration<double> dt = std::chrono::steady_clock::now() - t0;
      std::cout << "wrote " << ds.size() << " trajectories of " << ds.steps() << " steps to "
                << sample_out << " (" << dt.count() << " s)\n";
    } else if (*trn) {
      tcfg.workers = workers;
      const Dataset ds = load_dataset(train_data);
      const auto result = train(ds, tcfg, [](const EpochRecord& r) {
        std::cout << "epoch " << r.epoch << " lr " << r.learning_rate << " L " << r.train.total
                  << " L1 " << r.train.reconstruction << " L2 " << r.train.prediction
                  << " L3 " << r.train.controllability_exact << " val_error "
                  << r.validation_error << std::endl;
      });
      save_model(result.model, train_out);
      if (!history_out.empty()) write_history_csv(result.history, history_out);
      std::cout << "wrote " << train_out << '\n';
    } else if (*edmd) {
      const Dataset ds = load_dataset(edmd_data);
      const auto split = split_validation(ds, edmd_val);
      const auto dict = make_rbf_dictionary(edmd_k, ds.config, edmd_seed);
      const auto model = edmd_fit(split.first, dict, ridge, workers);
      save_edmd(model, edmd_out);
      std::cout << "wrote " << edmd_out << " (N = " << model.lifted_dim() << ")\n";
    } else if (*eval) {
      const Dataset ds = load_dataset(eval_data);
      const Dataset held = eval_val > 0.0 ? split_validation(ds, eval_val).second : ds;
      PredictionError err;
      std::vector<double> steps;
      if (model_method(eval_model) == "edmd") {
        const auto m = load_edmd(eval_model);
        err = prediction_error(m, held.trajectories, workers);
        steps = per_step_error(m, held.trajectories, workers);
      } else {
        const auto m = load_model(eval_model);
        err = prediction_error(m, held.trajectories, workers);
        steps = per_step_error(m, held.trajectories, workers);
      }
      std::cout << "trajectories " << held.size() << "\nerror_sum " << err.sum
                << "\nerror_mean " << err.mean << '\n';
      if (!per_step_out.empty()) {
        CsvTable t;
        t.comments = {"model " + eval_model, "data " + eval_data};
        t.columns = {"step", "error"};
        for (std::size_t j = 0; j < steps.size(); ++j) t.add_row({cell(j), cell(steps[j])});
        write_csv(t, per_step_out);
      }
    } else if (*dep) {
      weights.R(0, 0) = r_weight;
      dcfg.x0 = TsrState(x0[0], x0[1], x0[2], x0[3]);
      const auto model = load_model(dep_model);
      Eigen::MatrixXd P;
      const Eigen::MatrixXd K = koopman_lqr_gain(model, weights, weighting, &P);
      std::cout << "closed-loop spectral radius " << closed_loop_spectral_radius(model.A, model.B, K)
                << '\n';
      if (!baseline_out.empty()) {
        const auto base = linearized_baseline(weights, dcfg);
        write_deployment_csv(base, baseline_out);
        print_deployment(base);
      }
      const auto r = deploy(model, K, dcfg);
      write_deployment_csv(r, dep_out);
      print_deployment(r);
    } else if (*exp) {
      spec.kind = parse_experiment_kind(kind);
      spec.weighting = parse_weighting(exp_weighting);
      spec.workers = workers;
      if (!exp_model.empty()) spec.model_path = exp_model;
      for (const auto& path : run_experiment(spec, &std::cout)) std::cout << "wrote " << path << '\n';
    }
  } catch (const Error& e) {
    std::cerr << "error [" << e.module() << "]: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

}  // namespace tsrkoop
