#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <random>

#include "tsrkoop/binary_io.hpp"
#include "tsrkoop/errors.hpp"
#include "tsrkoop/koopman.hpp"
#include "tsrkoop/metrics.hpp"

namespace tsrkoop {

namespace {

double cosine_lr(const TrainConfig& cfg, int epoch) {
  if (cfg.epochs <= 1) return cfg.adam.lr;
  const double progress = static_cast<double>(epoch) / static_cast<double>(cfg.epochs - 1);
  return cfg.final_lr + 0.5 * (cfg.adam.lr - cfg.final_lr) * (1.0 + std::cos(std::numbers::pi * progress));
}

// Fisher-Yates with 64-bit draws; std::shuffle's output is library-specific.
void shuffle(std::vector<std::size_t>& v, std::mt19937_64& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(v[i - 1], v[j]);
  }
}

bool finite(const LossBreakdown& l) {
  return std::isfinite(l.total) && std::isfinite(l.reconstruction) && std::isfinite(l.prediction);
}

// The controllability hinge is zero most of the time and ~eta/margin when it
// fires. Sharing Adam moments with the data-fit gradient would inflate the
// second-moment estimate of A and B for thousands of steps and all but freeze
// them, so the surrogate share gets its own moments and step count.
struct Optimizer {
  nn::AdamState phi;
  nn::AdamState gate;
  nn::AdamMoments A;
  nn::AdamMoments B;
  nn::AdamMoments surrogate_A;
  nn::AdamMoments surrogate_B;
  long surrogate_t = 0;

  explicit Optimizer(const KoopmanModel& m, const nn::AdamConfig& cfg)
      : phi(nn::AdamState::for_network(m.phi, cfg)),
        gate(nn::AdamState::for_network(m.gate_net, cfg)),
        A(nn::zero_moments(m.A.rows(), m.A.cols())),
        B(nn::zero_moments(m.B.rows(), m.B.cols())),
        surrogate_A(nn::zero_moments(m.A.rows(), m.A.cols())),
        surrogate_B(nn::zero_moments(m.B.rows(), m.B.cols())) {}

  void step(KoopmanModel& m, const ModelGradients& g, double lr) {
    phi.config.lr = gate.config.lr = lr;
    nn::adam_step(phi, m.phi, g.phi);
    nn::adam_step(gate, m.gate_net, g.gate_net);
    nn::adam_update(m.A, g.A - g.surrogate_A, A, phi.config, phi.t);
    nn::adam_update(m.B, g.B - g.surrogate_B, B, phi.config, phi.t);
    if (!g.surrogate_A.isZero(0.0) || !g.surrogate_B.isZero(0.0)) {
      ++surrogate_t;
      nn::adam_update(m.A, g.surrogate_A, surrogate_A, phi.config, surrogate_t);
      nn::adam_update(m.B, g.surrogate_B, surrogate_B, phi.config, surrogate_t);
    }
  }
};

}  // namespace

TrainResult train(const Dataset& dataset, const TrainConfig& cfg, const EpochCallback& on_epoch) {
  cfg.validate();
  if (dataset.size() < 2 || dataset.steps() < 2) {
    throw ConfigError("koopman", "training needs at least two trajectories with m >= 2");
  }
  const auto [train_set, val_set] = split_validation(dataset, cfg.validation_fraction);

  TrainResult result;
  KoopmanModel& model = result.model;
  model = init_koopman(cfg, dataset.config);
  Optimizer opt(model, cfg.adam);

  std::mt19937_64 rng(cfg.seed ^ 0xd1b54a32d192ed03ULL);
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<const Trajectory*> batch;
  ModelGradients grad;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = cosine_lr(cfg, epoch);
    shuffle(order, rng);
    EpochRecord rec;
    rec.epoch = epoch + 1;
    rec.learning_rate = lr;
    double weight = 0.0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      batch.clear();
      for (std::size_t i = start; i < stop; ++i) batch.push_back(&train_set.trajectories[order[i]]);
      const LossBreakdown l = loss_and_gradient(model, batch, cfg, grad, cfg.workers);
      if (!finite(l) || !grad.A.allFinite() || !grad.B.allFinite()) {
        throw DivergenceError("loss became non-finite in epoch " + std::to_string(epoch + 1));
      }
      opt.step(model, grad, lr);
      const double w = static_cast<double>(stop - start);
      rec.train.total += w * l.total;
      rec.train.reconstruction += w * l.reconstruction;
      rec.train.prediction += w * l.prediction;
      rec.train.controllability_surrogate += w * l.controllability_surrogate;
      weight += w;
    }
    rec.train.total /= weight;
    rec.train.reconstruction /= weight;
    rec.train.prediction /= weight;
    rec.train.controllability_surrogate /= weight;
    const auto l3 = loss_controllability(model.A, model.B, cfg.hinge_margin);
    rec.train.controllability_exact = l3.exact;

    if (!val_set.trajectories.empty()) {
      rec.validation = total_loss(model, val_set.trajectories, cfg);
      rec.validation_error = prediction_error(model, val_set.trajectories, cfg.workers).mean;
    }
    if (!finite(rec.train) || !model.phi.all_finite() || !model.A.allFinite()) {
      throw DivergenceError("model became non-finite in epoch " + std::to_string(epoch + 1));
    }
    result.history.epochs.push_back(rec);
    if (on_epoch) on_epoch(rec);
  }
  return result;
}

void write_history_csv(const TrainingHistory& history, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("koopman", "cannot open '" + path + "' for writing");
  out << "epoch,lr,L,L1,L2,exact_L3,surrogate_L3,val_L,val_L1,val_L2,val_error\n";
  for (const auto& r : history.epochs) {
    out << r.epoch << ',' << io::format_exact(r.learning_rate) << ','
        << io::format_exact(r.train.total) << ',' << io::format_exact(r.train.reconstruction)
        << ',' << io::format_exact(r.train.prediction) << ','
        << io::format_exact(r.train.controllability_exact) << ','
        << io::format_exact(r.train.controllability_surrogate) << ','
        << io::format_exact(r.validation.total) << ','
        << io::format_exact(r.validation.reconstruction) << ','
        << io::format_exact(r.validation.prediction) << ','
        << io::format_exact(r.validation_error) << '\n';
  }
  if (!out) throw IoError("koopman", "write to '" + path + "' failed");
}

}  // namespace tsrkoop
