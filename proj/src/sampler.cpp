#include "tsrkoop/sampler.hpp"

#include <omp.h>

#include <cmath>
#include <fstream>
#include <optional>
#include <random>
#include <sstream>

#include "tsrkoop/binary_io.hpp"
#include "tsrkoop/errors.hpp"
#include "tsrkoop/parallel.hpp"

namespace tsrkoop {

namespace {

constexpr const char* kDatasetMagic = "KPDS1";
constexpr const char* kRangeNames[] = {"x1", "x2", "x3", "x4"};

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Independent engine per (seed, trajectory, attempt).
std::mt19937_64 substream(std::uint64_t seed, std::uint64_t index, std::uint64_t attempt) {
  std::seed_seq seq{splitmix64(seed), splitmix64(index ^ 0x5851f42d4c957f2dULL),
                    splitmix64(attempt + 0x14057b7ef767814fULL)};
  return std::mt19937_64(seq);
}

// 53 random bits mapped onto [lo, hi]; independent of the standard library's
// distribution implementation.
double uniform(std::mt19937_64& rng, Range r) {
  const double unit = static_cast<double>(rng() >> 11) * 0x1.0p-53;
  return r.lo + (r.hi - r.lo) * unit;
}

bool inside_envelope(const SampleConfig& cfg, const TsrState& x) {
  return x(2) >= cfg.state_ranges[2].lo && std::abs(x(1)) <= cfg.rate_limit &&
         std::abs(x(3)) <= cfg.rate_limit;
}

std::optional<Trajectory> attempt_trajectory(const SampleConfig& cfg, std::uint64_t index,
                                             std::uint64_t attempt) {
  auto rng = substream(cfg.seed, index, attempt);
  TsrState x;
  for (int i = 0; i < kStateDim; ++i) x(i) = uniform(rng, cfg.state_ranges[i]);

  Trajectory traj;
  traj.states.resize(kStateDim, cfg.steps);
  traj.controls.resize(kControlDim, cfg.steps);
  const StepConfig step{cfg.h};
  for (int k = 0; k < cfg.steps; ++k) {
    traj.states.col(k) = x;
    const double u = uniform(rng, cfg.control_range);
    traj.controls(0, k) = u;
    if (k + 1 == cfg.steps) break;
    try {
      x = rk4_step(x, u, step);
    } catch (const DomainError&) {
      return std::nullopt;
    } catch (const IntegrationError&) {
      return std::nullopt;
    }
    if (!inside_envelope(cfg, x)) return std::nullopt;
  }
  return traj;
}

}  // namespace

void SampleConfig::validate() const {
  for (int i = 0; i < kStateDim; ++i) {
    if (!(state_ranges[i].lo <= state_ranges[i].hi)) {
      throw ConfigError("sampler", std::string("empty range for ") + kRangeNames[i]);
    }
  }
  if (!(control_range.lo <= control_range.hi)) throw ConfigError("sampler", "empty control range");
  if (control_range.lo < 0.0) throw ConfigError("sampler", "control range must be nonnegative");
  if (state_ranges[2].lo <= -1.0) throw ConfigError("sampler", "x3 range must stay above -1");
  if (steps < 2) throw ConfigError("sampler", "steps per trajectory must be >= 2");
  if (!(h > 0.0)) throw ConfigError("sampler", "step h must be positive");
  if (workers < 1) throw ConfigError("sampler", "workers must be >= 1");
  if (!(rate_limit > 0.0)) throw ConfigError("sampler", "rate limit must be positive");
}

bool Dataset::operator==(const Dataset& other) const {
  SampleConfig a = config;
  SampleConfig b = other.config;
  a.workers = b.workers = 1;  // execution detail, not part of the data
  return a == b && trajectories == other.trajectories;
}

Trajectory sample_trajectory(const SampleConfig& cfg, std::uint64_t index) {
  for (int attempt = 0; attempt <= kMaxResamples; ++attempt) {
    if (auto traj = attempt_trajectory(cfg, index, static_cast<std::uint64_t>(attempt))) {
      return std::move(*traj);
    }
  }
  throw RejectionLimit("trajectory " + std::to_string(index) + " rejected more than " +
                       std::to_string(kMaxResamples) + " times");
}

Dataset sample_dataset_serial(const SampleConfig& cfg, int num_trajectories) {
  cfg.validate();
  if (num_trajectories < 1) throw ConfigError("sampler", "need at least one trajectory");
  Dataset ds;
  ds.config = cfg;
  ds.trajectories.reserve(static_cast<std::size_t>(num_trajectories));
  for (int i = 0; i < num_trajectories; ++i) {
    ds.trajectories.push_back(sample_trajectory(cfg, static_cast<std::uint64_t>(i)));
  }
  return ds;
}

Dataset sample_dataset(const SampleConfig& cfg, int num_trajectories) {
  cfg.validate();
  if (num_trajectories < 1) throw ConfigError("sampler", "need at least one trajectory");
  Dataset ds;
  ds.config = cfg;
  ds.trajectories.resize(static_cast<std::size_t>(num_trajectories));

  const int workers = resolve_workers(cfg.workers);
  std::vector<std::string> failures(static_cast<std::size_t>(num_trajectories));
#pragma omp parallel for schedule(dynamic, 16) num_threads(workers)
  for (int i = 0; i < num_trajectories; ++i) {
    try {
      ds.trajectories[static_cast<std::size_t>(i)] =
          sample_trajectory(cfg, static_cast<std::uint64_t>(i));
    } catch (const RejectionLimit& e) {
      failures[static_cast<std::size_t>(i)] = e.what();
    }
  }
  for (const auto& f : failures) {
    if (!f.empty()) throw RejectionLimit(f);
  }
  return ds;
}

std::pair<Dataset, Dataset> split_validation(const Dataset& ds, double fraction) {
  if (!(fraction >= 0.0 && fraction < 1.0)) {
    throw ConfigError("sampler", "validation fraction must lie in [0, 1)");
  }
  const auto total = ds.trajectories.size();
  auto n_val = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(total)));
  if (n_val >= total) n_val = total - 1;
  Dataset train, val;
  train.config = val.config = ds.config;
  train.trajectories.assign(ds.trajectories.begin(),
                            ds.trajectories.end() - static_cast<std::ptrdiff_t>(n_val));
  val.trajectories.assign(ds.trajectories.end() - static_cast<std::ptrdiff_t>(n_val),
                          ds.trajectories.end());
  return {std::move(train), std::move(val)};
}

void save_dataset(const Dataset& ds, const std::string& path) {
  const int m = ds.steps();
  for (const auto& t : ds.trajectories) {
    if (t.steps() != m || t.controls.cols() != m) {
      throw FormatError("sampler", "all trajectories must share the same step count");
    }
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("sampler", "cannot open '" + path + "' for writing");
  const auto& c = ds.config;
  out << kDatasetMagic << '\n'
      << "n " << kStateDim << '\n'
      << "p " << kControlDim << '\n'
      << "m " << m << '\n'
      << "k " << ds.trajectories.size() << '\n'
      << "h " << io::format_exact(c.h) << '\n'
      << "seed " << c.seed << '\n'
      << "rate_limit " << io::format_exact(c.rate_limit) << '\n';
  for (int i = 0; i < kStateDim; ++i) {
    out << "range " << kRangeNames[i] << ' ' << io::format_exact(c.state_ranges[i].lo) << ' '
        << io::format_exact(c.state_ranges[i].hi) << '\n';
  }
  out << "range u " << io::format_exact(c.control_range.lo) << ' '
      << io::format_exact(c.control_range.hi) << '\n'
      << "data\n";
  std::vector<double> row(static_cast<std::size_t>(m));
  for (const auto& t : ds.trajectories) {
    for (int r = 0; r < kStateDim; ++r) {
      Eigen::Map<Eigen::RowVectorXd>(row.data(), m) = t.states.row(r);
      io::write_f64_le(out, row);
    }
    for (int r = 0; r < kControlDim; ++r) {
      Eigen::Map<Eigen::RowVectorXd>(row.data(), m) = t.controls.row(r);
      io::write_f64_le(out, row);
    }
  }
  if (!out) throw IoError("sampler", "write to '" + path + "' failed");
}

Dataset load_dataset(const std::string& path) {
  const std::vector<char> bytes = io::read_file(path);
  std::istringstream in(std::string(bytes.begin(), bytes.end()));

  std::string line;
  if (!std::getline(in, line) || line != kDatasetMagic) {
    throw FormatError("sampler", "'" + path + "' is not a KPDS1 dataset (bad magic)");
  }
  Dataset ds;
  long long n = -1, p = -1, m = -1, k = -1;
  while (std::getline(in, line) && line != "data") {
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    std::string a, b, c;
    ls >> a >> b >> c;
    if (key == "n") n = io::parse_int(a, "KPDS1 header");
    else if (key == "p") p = io::parse_int(a, "KPDS1 header");
    else if (key == "m") m = io::parse_int(a, "KPDS1 header");
    else if (key == "k") k = io::parse_int(a, "KPDS1 header");
    else if (key == "h") ds.config.h = io::parse_double(a, "KPDS1 header");
    else if (key == "seed") ds.config.seed = static_cast<std::uint64_t>(std::stoull(a));
    else if (key == "rate_limit") ds.config.rate_limit = io::parse_double(a, "KPDS1 header");
    else if (key == "range") {
      Range r{io::parse_double(b, "KPDS1 range"), io::parse_double(c, "KPDS1 range")};
      if (a == "u") {
        ds.config.control_range = r;
      } else {
        bool found = false;
        for (int i = 0; i < kStateDim; ++i) {
          if (a == kRangeNames[i]) {
            ds.config.state_ranges[i] = r;
            found = true;
          }
        }
        if (!found) throw FormatError("sampler", "unknown range '" + a + "' in KPDS1 header");
      }
    } else {
      throw FormatError("sampler", "unknown KPDS1 header key '" + key + "'");
    }
  }
  if (line != "data") throw FormatError("sampler", "KPDS1 header is not terminated");
  if (n != kStateDim) {
    throw FormatError("sampler", "KPDS1 state dimension n=" + std::to_string(n) +
                                     " does not match expected n=" + std::to_string(kStateDim));
  }
  if (p != kControlDim) {
    throw FormatError("sampler", "KPDS1 control dimension p=" + std::to_string(p) +
                                     " does not match expected p=" + std::to_string(kControlDim));
  }
  if (m < 1 || k < 0) throw FormatError("sampler", "KPDS1 header has invalid m or k");
  ds.config.steps = static_cast<int>(m);

  const auto offset = static_cast<std::size_t>(in.tellg());
  const std::size_t expected = static_cast<std::size_t>(k * (n + p) * m) * sizeof(double);
  const std::size_t actual = bytes.size() - offset;
  if (actual != expected) {
    throw FormatError("sampler", "KPDS1 payload has " + std::to_string(actual) +
                                     " bytes, expected " + std::to_string(expected));
  }
  ds.trajectories.resize(static_cast<std::size_t>(k));
  std::vector<double> row(static_cast<std::size_t>(m));
  for (auto& t : ds.trajectories) {
    t.states.resize(kStateDim, m);
    t.controls.resize(kControlDim, m);
    for (int r = 0; r < kStateDim; ++r) {
      io::read_f64_le(in, row);
      t.states.row(r) = Eigen::Map<const Eigen::RowVectorXd>(row.data(), m);
    }
    for (int r = 0; r < kControlDim; ++r) {
      io::read_f64_le(in, row);
      t.controls.row(r) = Eigen::Map<const Eigen::RowVectorXd>(row.data(), m);
    }
  }
  return ds;
}

}  // namespace tsrkoop
