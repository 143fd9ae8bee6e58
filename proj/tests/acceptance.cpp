// End-to-end acceptance run: one PASS/FAIL line per criterion, exit status 0
// only if all of them pass. Criteria 5-7 share one desk-scale training run.

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "tsrkoop/control.hpp"
#include "tsrkoop/edmd.hpp"
#include "tsrkoop/errors.hpp"
#include "tsrkoop/experiment.hpp"
#include "tsrkoop/koopman.hpp"
#include "tsrkoop/metrics.hpp"
#include "tsrkoop/nn.hpp"
#include "tsrkoop/parallel.hpp"
#include "tsrkoop/sampler.hpp"

using namespace tsrkoop;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

struct Verdict {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << "[failed: " << what << "] ";
    }
  }
};

void report(int id, const Verdict& v) {
  std::cout << "AC" << id << ' ' << (v.pass ? "PASS" : "FAIL") << "  " << v.detail.str() << std::endl;
}

void progress(const std::string& msg) { std::cerr << "... " << msg << std::endl; }

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

double rel_err(double a, double b) {
  return std::abs(a - b) / std::max(1e-8, std::abs(a) + std::abs(b));
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// ---------------------------------------------------------------------------

Verdict dynamics_fixtures() {
  Verdict v;
  const TsrDerivative a = tsr_vector_field(TsrState(0, 0, -0.5, 0), 0.0);
  const TsrDerivative b = tsr_vector_field(TsrState(std::numbers::pi / 4, 0, -0.5, 0.1), 1.0);
  const TsrDerivative e = tsr_vector_field(TsrState::Zero(), 3.0);
  const double ea = (a - TsrDerivative(0, 0, 0, 1.5)).cwiseAbs().maxCoeff();
  const double eb = (b - TsrDerivative(0, -1.9, 0.1, -0.25)).cwiseAbs().maxCoeff();
  const double ee = e.cwiseAbs().maxCoeff();
  v.require(ea <= 1e-12 && eb <= 1e-12 && ee <= 1e-12, "hand-evaluated vector field");
  v.require(ee == 0.0, "equilibrium residual exactly zero");

  // global error at tau = 1 against a much finer reference
  const TsrState x0(0.1, 0.05, -0.5, 0.2);
  auto run = [&](double h) {
    TsrState x = x0;
    const auto n = std::lround(1.0 / h);
    for (long i = 0; i < n; ++i) x = rk4_step(x, 2.0, {h});
    return x;
  };
  const TsrState ref = run(1e-4);
  const double ratio = (run(0.1) - ref).norm() / (run(0.05) - ref).norm();
  v.require(ratio >= 12.0 && ratio <= 20.0, "rk4 halving ratio in [12, 20]");
  v.detail << "fixture err " << std::max(ea, eb) << ", equilibrium " << ee << ", rk4 ratio " << ratio;
  return v;
}

// ---------------------------------------------------------------------------

double mlp_gradient_error(const std::vector<int>& dims, std::uint64_t seed) {
  nn::Mlp net = nn::init_mlp(std::span<const int>(dims), seed);
  std::mt19937_64 rng(seed + 100);
  std::normal_distribution<double> nd;
  for (auto& l : net.layers) l.b = l.b.unaryExpr([&](double) { return 0.3 * nd(rng); });
  const Eigen::MatrixXd X = Eigen::MatrixXd::NullaryExpr(dims.front(), 3, [&] { return nd(rng); });
  const Eigen::MatrixXd C = Eigen::MatrixXd::NullaryExpr(dims.back(), 3, [&] { return nd(rng); });
  auto loss = [&](const nn::Mlp& n) { return nn::forward(n, X).output().cwiseProduct(C).sum(); };

  const nn::Gradients g = nn::backward(net, nn::forward(net, X), C, true);
  const double eps = 1e-5;
  double worst = 0.0;
  auto probe = [&](double& p, double analytic) {
    const double keep = p;
    p = keep + eps;
    const double lp = loss(net);
    p = keep - eps;
    const double lm = loss(net);
    p = keep;
    worst = std::max(worst, rel_err((lp - lm) / (2 * eps), analytic));
  };
  for (std::size_t li = 0; li < net.layers.size(); ++li) {
    for (Eigen::Index i = 0; i < net.layers[li].W.size(); ++i) {
      probe(net.layers[li].W.data()[i], g.layers[li].W.data()[i]);
    }
    for (Eigen::Index i = 0; i < net.layers[li].b.size(); ++i) {
      probe(net.layers[li].b.data()[i], g.layers[li].b.data()[i]);
    }
  }
  return worst;
}

double model_gradient_error() {
  SampleConfig s;
  s.steps = 6;  // five predicted steps
  s.seed = 41;
  const Dataset ds = sample_dataset(s, 3);

  TrainConfig cfg;
  cfg.latent_dim = 2;
  cfg.hidden_width = 6;
  cfg.hidden_layers = 2;
  cfg.seed = 42;
  cfg.hinge_margin = 0.3;  // keeps the hinge active so its gradient is checked too
  KoopmanModel m = init_koopman(cfg);
  std::mt19937_64 rng(43);
  std::normal_distribution<double> nd;
  const auto N = m.lifted_dim();
  m.A = Eigen::MatrixXd::Identity(N, N) + 0.1 * Eigen::MatrixXd::NullaryExpr(N, N, [&] { return nd(rng); });
  m.B = 0.2 * Eigen::MatrixXd::NullaryExpr(N, 1, [&] { return nd(rng); });
  for (auto* net : {&m.phi, &m.gate_net}) {
    for (auto& l : net->layers) l.b = l.b.unaryExpr([&](double) { return 0.2 * nd(rng); });
  }

  std::vector<const Trajectory*> batch;
  for (const auto& t : ds.trajectories) batch.push_back(&t);
  ModelGradients g;
  loss_and_gradient(m, batch, cfg, g);

  const double eps = 1e-5;
  double worst = 0.0;
  auto probe = [&](double& p, double analytic) {
    const double keep = p;
    p = keep + eps;
    const double lp = total_loss(m, ds.trajectories, cfg).total;
    p = keep - eps;
    const double lm = total_loss(m, ds.trajectories, cfg).total;
    p = keep;
    worst = std::max(worst, rel_err((lp - lm) / (2 * eps), analytic));
  };
  auto sweep = [&](Eigen::MatrixXd& param, const Eigen::MatrixXd& grad) {
    for (Eigen::Index i = 0; i < param.size(); ++i) probe(param.data()[i], grad.data()[i]);
  };
  auto sweep_vec = [&](Eigen::VectorXd& param, const Eigen::VectorXd& grad) {
    for (Eigen::Index i = 0; i < param.size(); ++i) probe(param.data()[i], grad.data()[i]);
  };
  sweep(m.A, g.A);
  sweep(m.B, g.B);
  for (std::size_t i = 0; i < m.phi.layers.size(); ++i) {
    sweep(m.phi.layers[i].W, g.phi.layers[i].W);
    sweep_vec(m.phi.layers[i].b, g.phi.layers[i].b);
  }
  for (std::size_t i = 0; i < m.gate_net.layers.size(); ++i) {
    sweep(m.gate_net.layers[i].W, g.gate_net.layers[i].W);
    sweep_vec(m.gate_net.layers[i].b, g.gate_net.layers[i].b);
  }
  return worst;
}

Verdict gradient_integrity() {
  Verdict v;
  double mlp = 0.0;
  mlp = std::max(mlp, mlp_gradient_error({3, 2}, 1));
  mlp = std::max(mlp, mlp_gradient_error({4, 7, 5, 3}, 2));
  mlp = std::max(mlp, mlp_gradient_error({4, 6, 6, 6, 6, 2}, 3));
  const double model = model_gradient_error();
  v.require(mlp < 1e-5, "MLP relative error < 1e-5");
  v.require(model < 1e-4, "total-loss relative error < 1e-4");
  v.detail << "mlp " << mlp << ", total loss " << model;
  return v;
}

// ---------------------------------------------------------------------------

// Trajectories of the discretised equilibrium linearisation, an exactly
// linear 4-state system driven by uniform inputs.
Dataset linear_dataset(const DiscreteLinear& sys, int count, std::uint64_t seed) {
  Dataset ds;
  ds.config.state_ranges = {{{-1, 1}, {-1, 1}, {-1, 1}, {-1, 1}}};
  ds.config.control_range = {-1, 1};
  ds.config.seed = seed;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  for (int i = 0; i < count; ++i) {
    Trajectory t;
    t.states.resize(kStateDim, ds.config.steps);
    t.controls.resize(kControlDim, ds.config.steps);
    Eigen::Vector4d x(U(rng), U(rng), U(rng), U(rng));
    for (int j = 0; j < ds.config.steps; ++j) {
      t.states.col(j) = x;
      t.controls(0, j) = U(rng);
      x = sys.A * x + sys.B * t.controls(0, j);
    }
    ds.trajectories.push_back(std::move(t));
  }
  return ds;
}

Verdict linear_oracle() {
  Verdict v;
  const auto sys = rk4_discretize(tsr_state_jacobian(TsrState::Zero(), kEquilibriumTension),
                                  tsr_input_jacobian(), 0.01);
  const Dataset ds = linear_dataset(sys, 1000, 5);

  // (a) the state rows of the EDMD operator are the true system
  const auto dict = make_rbf_dictionary(8, ds.config, 6);
  const auto edmd = edmd_fit(ds, dict);
  Eigen::MatrixXd A_true = Eigen::MatrixXd::Zero(kStateDim, edmd.lifted_dim());
  A_true.leftCols(kStateDim) = sys.A;
  const double ea = (edmd.A.topRows(kStateDim) - A_true).norm();
  const double eb = (edmd.B.topRows(kStateDim) - sys.B).norm();
  v.require(ea < 1e-8 && eb < 1e-8, "EDMD recovery < 1e-8");

  // (b) the learned model; a single observable suffices for a linear system
  TrainConfig cfg;
  cfg.latent_dim = 1;
  cfg.hidden_width = 16;
  cfg.hidden_layers = 1;
  cfg.epochs = 600;
  cfg.batch_size = 64;
  cfg.adam.lr = 1e-3;
  cfg.final_lr = 1e-6;
  cfg.seed = 0;
  cfg.workers = resolve_workers(0);
  const auto t0 = Clock::now();
  const auto trained = train(ds, cfg);
  const double secs = seconds_since(t0);
  const auto val = split_validation(ds, cfg.validation_fraction).second;
  const double mse = prediction_error(trained.model, val.trajectories, cfg.workers).mean;
  v.require(mse < 1e-6, "validation MSE < 1e-6");
  v.require(secs < 300.0, "training under 5 min");
  v.detail << "EDMD |dA| " << ea << " |dB| " << eb << ", learned val MSE " << mse << " in " << secs
           << " s";
  return v;
}

// ---------------------------------------------------------------------------

bool solve_is_sound(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B, const Eigen::MatrixXd& Q,
                    const Eigen::MatrixXd& R, double* residual, double* radius) {
  const auto sol = solve_dare(A, B, Q, R);
  const auto K = lqr_gain(A, B, R, sol.P);
  *residual = dare_residual(A, B, Q, R, sol.P);
  *radius = closed_loop_spectral_radius(A, B, K);
  return *residual < 1e-8 && *radius < 1.0;
}

Verdict riccati(const KoopmanModel* lifted) {
  Verdict v;
  const Eigen::MatrixXd one = Eigen::MatrixXd::Ones(1, 1);
  const auto sol = solve_dare(one, one, one, one);
  const auto K = lqr_gain(one, one, one, sol.P);
  const double golden = (1.0 + std::sqrt(5.0)) / 2.0;
  const double eP = std::abs(sol.P(0, 0) - golden);
  const double eK = std::abs(K(0, 0) - 0.6180339887498949);
  v.require(eP <= 1e-10 && eK <= 1e-10, "scalar P and K within 1e-10");

  // The bound applies to every solve that succeeds. The fixtures must
  // succeed; other systems may be refused when no binary64 P meets the
  // residual bound, and refusals are listed.
  double worst_res = 0.0, worst_rad = 0.0;
  int solves = 0;
  std::vector<std::string> refused;
  auto check = [&](const Eigen::MatrixXd& A, const Eigen::MatrixXd& B, const Eigen::MatrixXd& Q,
                   const Eigen::MatrixXd& R, const std::string& name, bool required) {
    double res = 0.0, rad = 0.0;
    try {
      v.require(solve_is_sound(A, B, Q, R, &res, &rad), name + " residual/radius");
      worst_res = std::max(worst_res, res);
      worst_rad = std::max(worst_rad, rad);
      ++solves;
    } catch (const NoConvergenceError& e) {
      if (required) v.require(false, name + ": " + e.what());
      refused.push_back(name + " (" + e.what() + ")");
    } catch (const std::exception& e) {
      v.require(false, name + ": " + e.what());
    }
  };
  check(one, one, one, one, "scalar", true);

  const auto lin = rk4_discretize(tsr_state_jacobian(TsrState::Zero(), kEquilibriumTension),
                                  tsr_input_jacobian(), 0.01);
  const LqrWeights w;
  check(lin.A, lin.B, w.Q, w.R, "linearised TSR", true);

  std::mt19937_64 rng(11);
  std::normal_distribution<double> nd;
  for (int i = 0; i < 10; ++i) {
    const int n = 3 + i % 5;
    const Eigen::MatrixXd A = 0.5 * Eigen::MatrixXd::NullaryExpr(n, n, [&] { return nd(rng); });
    const Eigen::MatrixXd B = Eigen::MatrixXd::NullaryExpr(n, 1 + i % 2, [&] { return nd(rng); });
    check(A, B, Eigen::MatrixXd::Identity(n, n), Eigen::MatrixXd::Identity(B.cols(), B.cols()),
          "random system " + std::to_string(i), false);
  }
  if (lifted != nullptr) {
    check(lifted->A, lifted->B, lifted_state_weight(w, lifted->lifted_dim(), LiftedWeighting::identity),
          w.R, "lifted TSR model", false);
  }
  v.detail << "|dP| " << eP << " |dK| " << eK << ", " << solves << " sound solves: max residual "
           << worst_res << ", max radius " << worst_rad << "; refused " << refused.size();
  for (const auto& r : refused) v.detail << " [" << r << "]";
  return v;
}

// ---------------------------------------------------------------------------

struct DeskRun {
  Dataset train_set;
  Dataset val_set;
  KoopmanModel model;
  std::optional<double> final_exact_l3;  // from the history when trained here
  std::optional<double> train_seconds;  // unset for a loaded model
};

Verdict desk_training(const DeskRun& run, std::uint64_t seed) {
  Verdict v;
  const int workers = resolve_workers(0);
  const double err = prediction_error(run.model, run.val_set.trajectories, workers).mean;
  v.require(err <= 1e-2, "validation error <= 1e-2");

  const double exact = loss_controllability(run.model.A, run.model.B).exact;
  v.require(exact == 0.0 && run.final_exact_l3.value_or(0.0) == 0.0, "exact L3 = 0");

  const auto dict = make_rbf_dictionary(run.model.latent_dim(), run.train_set.config,
                                        seed ^ 0x5851f42d4c957f2dULL);
  const auto edmd = edmd_fit(run.train_set, dict, kEdmdRidge, workers);
  const auto ours = per_step_error(run.model, run.val_set.trajectories, workers);
  const auto theirs = per_step_error(edmd, run.val_set.trajectories, workers);
  int worse = 0;
  for (std::size_t j = 0; j < ours.size(); ++j) worse += ours[j] > theirs[j] ? 1 : 0;
  v.require(worse == 0, std::to_string(worse) + " horizon steps worse than EDMD");
  v.require(run.train_seconds.value_or(0.0) <= 1800.0, "training within 30 min");
  v.detail << "val error " << err << ", exact L3 " << exact << ", last-step error " << ours.back()
           << " vs EDMD " << theirs.back();
  if (run.train_seconds) {
    v.detail << ", trained in " << *run.train_seconds << " s";
  } else {
    v.detail << ", loaded model (training time not measured)";
  }
  return v;
}

Verdict deployment(const KoopmanModel& model, std::optional<DeploymentResult>& out) {
  Verdict v;
  try {
    const LqrWeights w;  // Q' = I_N, R' = 15
    const auto K = koopman_lqr_gain(model, w, LiftedWeighting::identity);
    const DeployConfig cfg;  // x0 = [0, 0, -0.99, 0.5], 2000 steps, h = 0.01
    out = deploy(model, K, cfg);
  } catch (const std::exception& e) {
    v.require(false, e.what());
    return v;
  }
  const auto& r = *out;
  v.require(r.steps() == 2000, "2000 steps");
  v.require(r.success && r.settling_time && *r.settling_time <= 10.0, "settles by tau = 10");
  v.require(r.x1.lo >= -0.4 && r.x1.hi <= 0.05, "x1 within [-0.4, 0.05]");
  v.require(r.overshoot <= 0.02, "x3 overshoot <= 0.02");
  v.require(r.u.minCoeff() >= 0.0, "u >= 0");
  v.detail << "tau_s " << (r.settling_time ? std::to_string(*r.settling_time) : "none") << ", x1 in ["
           << r.x1.lo << ", " << r.x1.hi << "], overshoot " << r.overshoot << ", min u "
           << r.u.minCoeff();
  return v;
}

Verdict baseline_contrast(const std::optional<DeploymentResult>& koopman) {
  Verdict v;
  const auto base = linearized_baseline(LqrWeights{}, DeployConfig{});
  v.require(koopman.has_value(), "Koopman deployment available");
  if (koopman) v.require(base.overshoot > koopman->overshoot, "baseline overshoot > Koopman overshoot");
  v.detail << "baseline overshoot " << base.overshoot;
  if (koopman) v.detail << " vs Koopman " << koopman->overshoot;
  return v;
}

// ---------------------------------------------------------------------------

Verdict determinism(const fs::path& dir) {
  Verdict v;
  SampleConfig s;
  s.seed = 17;
  s.workers = 1;
  const Dataset d1 = sample_dataset(s, 64);
  const Dataset d2 = sample_dataset(s, 64);
  s.workers = 4;
  const Dataset d4 = sample_dataset(s, 64);
  save_dataset(d1, (dir / "a.kpds").string());
  save_dataset(d2, (dir / "b.kpds").string());
  v.require(slurp(dir / "a.kpds") == slurp(dir / "b.kpds"), "dataset bytes");
  v.require(d4.trajectories == d1.trajectories, "multi-worker sampling");
  const Dataset back = load_dataset((dir / "a.kpds").string());
  v.require(back == d1, "dataset round trip");

  TrainConfig cfg;
  cfg.latent_dim = 4;
  cfg.hidden_width = 16;
  cfg.hidden_layers = 2;
  cfg.epochs = 3;
  cfg.batch_size = 16;
  cfg.workers = 1;
  const auto m1 = train(d1, cfg).model;
  const auto m2 = train(d1, cfg).model;
  save_model(m1, (dir / "a.kpkm").string());
  save_model(m2, (dir / "b.kpkm").string());
  v.require(slurp(dir / "a.kpkm") == slurp(dir / "b.kpkm"), "model bytes");
  const auto loaded = load_model((dir / "a.kpkm").string());
  v.require(loaded == m1, "model round trip");
  const Eigen::Vector4d x(0.3, -0.2, -0.4, 0.7);
  v.require(lift(loaded, x) == lift(m1, x), "lift after reload");

  auto experiment = [&](const std::string& sub) {
    ExperimentSpec spec;
    spec.kind = ExperimentKind::method_compare;
    spec.trajectories = 64;
    spec.sampling.seed = 3;
    spec.training = cfg;
    spec.training.latent_dim = 2;
    spec.workers = 1;
    spec.output_dir = (dir / sub).string();
    return run_experiment(spec);
  };
  const auto e1 = experiment("run1");
  const auto e2 = experiment("run2");
  bool same = e1.size() == e2.size() && !e1.empty();
  for (std::size_t i = 0; same && i < e1.size(); ++i) same = slurp(e1[i]) == slurp(e2[i]);
  v.require(same, "experiment CSV bytes");
  v.detail << "datasets, models and " << e1.size() << " experiment CSV(s) reproduced";
  return v;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance run for the tsrkoop artifact"};
  std::string model_path;
  std::string save_path;
  std::string work_dir;
  std::uint64_t seed = 0;
  app.add_option("--model", model_path,
                 "Use this trained model (desk-scale TSR, same seed) instead of training");
  app.add_option("--save-model", save_path, "Keep the trained desk-scale model here");
  app.add_option("--seed", seed, "Dataset and training seed for criteria 5-7")->capture_default_str();
  app.add_option("--work-dir", work_dir, "Scratch directory (default: a fresh temp directory)");
  CLI11_PARSE(app, argc, argv);

  const fs::path dir = work_dir.empty()
                           ? fs::temp_directory_path() / ("tsrkoop_acceptance_" + std::to_string(seed))
                           : fs::path(work_dir);
  fs::remove_all(dir / "run1");
  fs::remove_all(dir / "run2");
  fs::create_directories(dir);

  std::vector<Verdict> verdicts(9);
  auto guarded = [](auto&& fn) {
    try {
      return fn();
    } catch (const std::exception& e) {
      Verdict v;
      v.require(false, e.what());
      return v;
    }
  };

  progress("dynamics fixtures");
  verdicts[1] = guarded(dynamics_fixtures);
  progress("gradient checks");
  verdicts[2] = guarded(gradient_integrity);
  progress("linear-system oracle (trains a small model)");
  verdicts[3] = guarded(linear_oracle);

  DeskRun run;
  bool have_model = false;
  try {
    SampleConfig s;
    s.seed = seed;
    s.workers = resolve_workers(0);
    progress("sampling 5000 TSR trajectories");
    const Dataset ds = sample_dataset(s, 5000);
    TrainConfig cfg;  // K = 36 and the reference loss weights
    cfg.seed = seed;
    cfg.workers = resolve_workers(0);
    std::tie(run.train_set, run.val_set) = split_validation(ds, cfg.validation_fraction);
    if (!model_path.empty()) {
      progress("loading " + model_path);
      run.model = load_model(model_path);
    } else {
      progress("training the desk-scale model (" + std::to_string(cfg.epochs) + " epochs)");
      const auto t0 = Clock::now();
      auto result = train(ds, cfg, [&](const EpochRecord& r) {
        if (r.epoch % 10 == 0 || r.epoch == cfg.epochs) {
          progress("epoch " + std::to_string(r.epoch) + " val error " +
                   std::to_string(r.validation_error) + " t " +
                   std::to_string(static_cast<int>(seconds_since(t0))) + " s");
        }
      });
      run.train_seconds = seconds_since(t0);
      run.final_exact_l3 = result.history.epochs.back().train.controllability_exact;
      run.model = std::move(result.model);
      if (!save_path.empty()) save_model(run.model, save_path);
    }
    have_model = true;
  } catch (const std::exception& e) {
    for (int id : {5, 6, 7}) verdicts[id].require(false, std::string("training: ") + e.what());
  }

  progress("Riccati fixtures");
  verdicts[4] = guarded([&] { return riccati(have_model ? &run.model : nullptr); });
  std::optional<DeploymentResult> closed_loop;
  if (have_model) {
    progress("desk-scale prediction and EDMD comparison");
    verdicts[5] = guarded([&] { return desk_training(run, seed); });
    progress("closed-loop deployment");
    verdicts[6] = guarded([&] { return deployment(run.model, closed_loop); });
    verdicts[7] = guarded([&] { return baseline_contrast(closed_loop); });
  }
  progress("determinism and persistence");
  verdicts[8] = guarded([&] { return determinism(dir); });

  bool all = true;
  for (int id = 1; id <= 8; ++id) {
    report(id, verdicts[id]);
    all = all && verdicts[id].pass;
  }
  std::cout << (all ? "ALL PASS" : "SOME CRITERIA FAILED") << std::endl;
  return all ? 0 : 1;
}
