#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <functional>
#include <limits>
#include <mutex>
#include <thread>
#include <utility>
#include <vector>

#include "randobs/bandit.hpp"
#include "randobs/config.hpp"
#include "randobs/csv.hpp"
#include "randobs/dynamics.hpp"
#include "randobs/enkbf.hpp"
#include "randobs/letkf.hpp"
#include "randobs/localization.hpp"
#include "randobs/observation.hpp"
#include "randobs/rng.hpp"

namespace randobs {

// Stream roles. Streams are derived as (seed, rep, role) with counter-based
// splits, so appending new roles never perturbs existing streams.
enum class StreamRole : std::uint64_t {
  TruthInit = 0,
  TruthNoise = 1,
  EnsembleInit = 2,
  ObsNoise = 3,
  Subset = 4,
  Switch = 5,
  BanditEnv = 6,
};

inline RngStream stream_for(const ExperimentConfig& cfg, int rep,
                            StreamRole role) {
  return RngStream::derive(cfg.seed, static_cast<std::uint64_t>(rep),
                           static_cast<std::uint64_t>(role));
}

// Runs task indices [0, n_tasks) on `threads` workers (0 = hardware
// concurrency). Tasks must only write to their own slots; the first
// exception, if any, is rethrown after all workers join.
inline void parallel_for(int n_tasks, int threads,
                         const std::function<void(int)>& task) {
  int n_workers = threads > 0
                      ? threads
                      : static_cast<int>(std::thread::hardware_concurrency());
  n_workers = std::max(1, std::min(n_workers, n_tasks));
  if (n_workers == 1) {
    for (int i = 0; i < n_tasks; ++i) task(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto worker = [&]() {
    for (;;) {
      const int i = next.fetch_add(1);
      if (i >= n_tasks) return;
      try {
        task(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) error = std::current_exception();
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(n_workers));
  for (int w = 0; w < n_workers; ++w) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

// Least-squares slope of log(y) against log(x), skipping non-positive or
// non-finite points.
inline double fit_loglog_slope(const std::vector<double>& x,
                               const std::vector<double>& y) {
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int n = 0;
  for (std::size_t i = 0; i < x.size() && i < y.size(); ++i) {
    if (!(x[i] > 0.0) || !(y[i] > 0.0) || !std::isfinite(y[i])) continue;
    const double lx = std::log(x[i]);
    const double ly = std::log(y[i]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
    ++n;
  }
  if (n < 2) return std::numeric_limits<double>::quiet_NaN();
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

// Truth initialization: nominal state plus unit Gaussian perturbation,
// then a fixed 1000-step RK4 spin-up (dt = 0.01) onto the attractor.
inline Vector initial_truth(const DriftModel& model, RngStream& rng) {
  Vector x(model.dim);
  const double base = model.kind == ModelKind::Lorenz63 ? 1.0 : model.forcing;
  for (int i = 0; i < model.dim; ++i) x(i) = base + rng.gauss();
  for (int s = 0; s < 1000; ++s) x = rk4_step(model, x, 0.01);
  return x;
}

// Members are the truth plus independent N(0, I) perturbations.
inline Ensemble initial_ensemble(const Vector& truth, int m, RngStream& rng) {
  Ensemble e(truth.size(), m);
  for (int i = 0; i < m; ++i) {
    for (Eigen::Index k = 0; k < truth.size(); ++k) {
      e(k, i) = truth(k) + rng.gauss();
    }
  }
  return e;
}

// ---------------------------------------------------------------------------
// Continuous-filter run (l-EnKBF driven by observation increments)
// ---------------------------------------------------------------------------

enum class SwitchMode { Fixed, EveryStep, Poisson };

struct ContinuousRunResult {
  std::vector<RunRecord> records;
  bool diverged = false;
  long diverged_at = -1;
  double second_half_mean_rmse = std::numeric_limits<double>::infinity();
  // Time average of ||e||^2 / n_x over post-burn-in steps; NaN if diverged.
  double post_burn_in_mse = std::numeric_limits<double>::quiet_NaN();
  long steps_completed = 0;
  long spread_cap_hits = 0;
};

// One repetition of the continuous experiment. The truth is an SDE
// integrated with Euler-Maruyama; the ensemble follows the l-EnKBF with the
// continuous noise convention R = eps I. Observation sets are fixed,
// redrawn every step, or redrawn at Poisson jumps. `truth_out`, when given,
// receives the truth at every recorded step.
inline ContinuousRunResult run_continuous_filter(
    const ExperimentConfig& cfg, int rep, SwitchMode mode, int n_j,
    int fixed_index = -1,
    std::vector<std::pair<RunRecord, Vector>>* truth_out = nullptr) {
  const DriftModel model = cfg.drift_model();
  const LocalizationMatrix phi = build_phi(cfg.localization_spec(), cfg.n_x);
  const DiffusionConfig diffusion(cfg.noise_amplitude);

  RngStream truth_init = stream_for(cfg, rep, StreamRole::TruthInit);
  RngStream truth_noise = stream_for(cfg, rep, StreamRole::TruthNoise);
  RngStream ens_init = stream_for(cfg, rep, StreamRole::EnsembleInit);
  RngStream obs_noise = stream_for(cfg, rep, StreamRole::ObsNoise);
  RngStream subset = stream_for(cfg, rep, StreamRole::Subset);
  PoissonSwitcher switcher(cfg.lambda, stream_for(cfg, rep, StreamRole::Switch));

  Vector truth = initial_truth(model, truth_init);
  Ensemble ensemble = initial_ensemble(truth, cfg.m, ens_init);

  auto make_op = [&](std::vector<int> J) {
    return ObservationOperator::make(std::move(J), cfg.n_x, cfg.eps);
  };
  ObservationOperator h =
      mode == SwitchMode::Fixed
          ? make_op({fixed_index})
          : make_op(sample_subset_uniform(cfg.n_x, n_j, subset));

  ContinuousRunResult out;
  EnkbfStepStats step_stats;
  const long half_start = cfg.n_steps / 2;  // steps > half_start
  const long burn_in =
      static_cast<long>(std::floor(cfg.burn_in_frac * cfg.n_steps));
  double sum_second_half = 0.0;
  long n_second_half = 0;
  double sum_mse = 0.0;
  long n_mse = 0;

  auto record_row = [&](long step, double rmse, bool switched,
                        bool force) -> void {
    if (!force && step % cfg.record_every != 0) return;
    RunRecord r;
    r.cycle = step;
    r.time = static_cast<double>(step) * cfg.dt;
    r.rmse = rmse;
    r.trace_p = std::isfinite(rmse)
                    ? ensemble_covariance(ensemble).trace()
                    : 0.0;
    r.n_j = h.size();
    r.j_indices = h.indices;
    r.switched = switched;
    out.records.push_back(r);
    if (truth_out != nullptr) truth_out->emplace_back(out.records.back(), truth);
  };

  record_row(0, (truth - ensemble_mean(ensemble)).norm(), false, true);

  for (long step = 1; step <= cfg.n_steps; ++step) {
    bool switched = false;
    if (mode == SwitchMode::EveryStep && step > 1) {
      h = make_op(sample_subset_uniform(cfg.n_x, n_j, subset));
      switched = true;
    } else if (mode == SwitchMode::Poisson) {
      auto sw = maybe_switch(switcher, h, n_j);
      switched = sw.switched;
      h = std::move(sw.op);
    }
    double rmse;
    try {
      const Vector dY = observation_increment(h, truth, cfg.dt, obs_noise);
      ensemble = enkbf_step(ensemble, model, phi, h, dY, cfg.dt, cfg.floor,
                            &step_stats);
      truth = euler_maruyama_step(model, truth, cfg.dt, diffusion, truth_noise);
      rmse = (truth - ensemble_mean(ensemble)).norm();
    } catch (const blow_up_error&) {
      out.diverged = true;
      out.diverged_at = step;
      record_row(step, std::numeric_limits<double>::infinity(), switched,
                 true);
      break;
    }
    out.steps_completed = step;
    if (step > half_start) {
      sum_second_half += rmse;
      ++n_second_half;
    }
    if (step > burn_in) {
      sum_mse += (truth - ensemble_mean(ensemble)).squaredNorm() /
                 static_cast<double>(cfg.n_x);
      ++n_mse;
    }
    if (rmse > cfg.divergence_rmse) {
      out.diverged = true;
      out.diverged_at = step;
      record_row(step, rmse, switched, true);
      break;
    }
    record_row(step, rmse, switched, false);
  }

  out.spread_cap_hits = step_stats.spread_cap_hits;
  if (!out.diverged) {
    if (n_second_half > 0) {
      out.second_half_mean_rmse =
          sum_second_half / static_cast<double>(n_second_half);
    }
    if (n_mse > 0) {
      out.post_burn_in_mse = sum_mse / static_cast<double>(n_mse);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// E1: fixed vs per-step-random single-component observation of L63
// ---------------------------------------------------------------------------

struct E1RepResult {
  ContinuousRunResult fixed_run;
  ContinuousRunResult random_run;
  std::vector<std::pair<RunRecord, Vector>> truth;  // shared by both runs
};

struct E1Result {
  std::vector<E1RepResult> reps;
  double fixed_diverged_fraction = 0.0;
  double random_tracking_fraction = 0.0;
  double tracking_rmse_threshold = 5.0;
};

inline E1Result run_experiment_E1(const ExperimentConfig& cfg,
                                  double tracking_rmse_threshold = 5.0) {
  E1Result out;
  out.tracking_rmse_threshold = tracking_rmse_threshold;
  out.reps.resize(static_cast<std::size_t>(cfg.n_reps));
  parallel_for(cfg.n_reps, cfg.threads, [&](int rep) {
    auto& r = out.reps[static_cast<std::size_t>(rep)];
    r.fixed_run = run_continuous_filter(cfg, rep, SwitchMode::Fixed, 1,
                                        cfg.observed_index(), &r.truth);
    r.random_run =
        run_continuous_filter(cfg, rep, SwitchMode::EveryStep, cfg.n_j);
  });
  int n_fixed_diverged = 0;
  int n_random_tracking = 0;
  for (const auto& r : out.reps) {
    if (r.fixed_run.diverged) ++n_fixed_diverged;
    if (!r.random_run.diverged &&
        r.random_run.second_half_mean_rmse < tracking_rmse_threshold) {
      ++n_random_tracking;
    }
  }
  out.fixed_diverged_fraction =
      static_cast<double>(n_fixed_diverged) / cfg.n_reps;
  out.random_tracking_fraction =
      static_cast<double>(n_random_tracking) / cfg.n_reps;
  return out;
}

// ---------------------------------------------------------------------------
// E2: doubly-averaged MSE against the observation error order
// ---------------------------------------------------------------------------

struct E2Result {
  struct Row {
    double eps = 0.0;
    double mse = std::numeric_limits<double>::quiet_NaN();
    int reps_used = 0;
    int reps_diverged = 0;
  };
  std::vector<Row> rows;
  double slope = std::numeric_limits<double>::quiet_NaN();
  // Per (eps, rep) run results kept for optional per-run CSV output.
  std::vector<std::vector<ContinuousRunResult>> runs;
};

inline E2Result run_experiment_E2(const ExperimentConfig& cfg) {
  const int n_eps = static_cast<int>(cfg.eps_list.size());
  E2Result out;
  out.runs.assign(static_cast<std::size_t>(n_eps),
                  std::vector<ContinuousRunResult>(
                      static_cast<std::size_t>(cfg.n_reps)));
  const int n_tasks = n_eps * cfg.n_reps;
  parallel_for(n_tasks, cfg.threads, [&](int task) {
    const int ei = task / cfg.n_reps;
    const int rep = task % cfg.n_reps;
    ExperimentConfig local = cfg;
    local.eps = cfg.eps_list[static_cast<std::size_t>(ei)];
    out.runs[static_cast<std::size_t>(ei)][static_cast<std::size_t>(rep)] =
        run_continuous_filter(local, rep, SwitchMode::EveryStep, cfg.n_j);
  });
  std::vector<double> xs, ys;
  for (int ei = 0; ei < n_eps; ++ei) {
    E2Result::Row row;
    row.eps = cfg.eps_list[static_cast<std::size_t>(ei)];
    double sum = 0.0;
    for (const auto& run : out.runs[static_cast<std::size_t>(ei)]) {
      if (run.diverged || !std::isfinite(run.post_burn_in_mse)) {
        ++row.reps_diverged;
        continue;
      }
      sum += run.post_burn_in_mse;
      ++row.reps_used;
    }
    if (row.reps_used > 0) row.mse = sum / row.reps_used;
    xs.push_back(row.eps);
    ys.push_back(row.mse);
    out.rows.push_back(row);
  }
  out.slope = fit_loglog_slope(xs, ys);
  return out;
}

// ---------------------------------------------------------------------------
// E3: sequential learning of N_J on L96 (one forecast-analysis cycle)
// ---------------------------------------------------------------------------

struct DaCycleState {
  DriftModel model;
  LocalizationMatrix phi;
  AnalysisConfig analysis;
  RewardParams rewards;
  Vector truth;
  Ensemble ensemble;
  BanditState bandit;
  PoissonSwitcher switcher;
  RngStream obs_rng;
  RngStream subset_rng;
  ObservationOperator h;
  bool has_op = false;
  int active_arm = -1;
  long cycle = 0;
  double time = 0.0;
};

inline DaCycleState make_da_state(const ExperimentConfig& cfg, int rep) {
  RngStream truth_init = stream_for(cfg, rep, StreamRole::TruthInit);
  RngStream ens_init = stream_for(cfg, rep, StreamRole::EnsembleInit);
  const DriftModel model = cfg.drift_model();
  Vector truth = initial_truth(model, truth_init);
  Ensemble ensemble = initial_ensemble(truth, cfg.m, ens_init);
  return DaCycleState{
      model,
      build_phi(cfg.localization_spec(), cfg.n_x),
      cfg.analysis_config(),
      cfg.reward_params(),
      std::move(truth),
      std::move(ensemble),
      BanditState::make(cfg.arms, cfg.ucb_coeff),
      PoissonSwitcher(cfg.lambda, stream_for(cfg, rep, StreamRole::Switch)),
      stream_for(cfg, rep, StreamRole::ObsNoise),
      stream_for(cfg, rep, StreamRole::Subset),
      ObservationOperator{{}, cfg.n_x, cfg.eps},
      false,
      -1,
      0,
      0.0};
}

// One forecast-analysis cycle: Poisson switch decision, UCB arm choice and
// subset resample on a switch, N_Inner RK4 forecast steps for reference and
// ensemble, multiplicative inflation, observation synthesis with
// R = eps^2 I, LETKF analysis, then coverage/reward/bandit bookkeeping.
inline RunRecord da_cycle(DaCycleState& s, const ExperimentConfig& cfg) {
  const bool jump = s.switcher.jump();
  const bool switched = !s.has_op || jump;
  if (switched) {
    s.active_arm = choose_arm(s.bandit);
    const int n_j = s.bandit.arms[static_cast<std::size_t>(s.active_arm)];
    s.h = ObservationOperator::make(
        sample_subset_uniform(cfg.n_x, n_j, s.subset_rng), cfg.n_x, cfg.eps);
    s.has_op = true;
  }
  record_play(s.bandit, s.active_arm);

  for (int inner = 0; inner < cfg.n_inner; ++inner) {
    s.truth = rk4_step(s.model, s.truth, cfg.dt);
    for (int i = 0; i < cfg.m; ++i) {
      s.ensemble.col(i) = rk4_step(s.model, Vector(s.ensemble.col(i)), cfg.dt);
    }
  }

  s.ensemble = inflate(s.ensemble, cfg.inflation);
  const Vector y = discrete_observation(s.h, s.truth, s.obs_rng);
  s.ensemble = letkf_analysis(s.ensemble, y, s.h, s.analysis);

  const Matrix p = ensemble_covariance(s.ensemble);
  const double kappa = coverage(s.h.indices, cfg.r_loc, p, cfg.tau_corr);
  const double rwd = reward(kappa, s.h.size(), cfg.n_x, p.trace(), s.rewards);
  update_arm(s.bandit, s.active_arm, rwd);

  ++s.cycle;
  s.time += cfg.n_inner * cfg.dt;
  RunRecord r;
  r.cycle = s.cycle;
  r.time = s.time;
  r.rmse = (s.truth - ensemble_mean(s.ensemble)).norm();
  r.trace_p = p.trace();
  r.kappa = kappa;
  r.reward = rwd;
  r.n_j = s.h.size();
  r.j_indices = s.h.indices;
  r.switched = switched;
  return r;
}

struct E3RepResult {
  std::vector<RunRecord> records;
  std::vector<long> plays;
  int nj_star = -1;  // most-played arm value; ties toward the smaller N_J
  bool diverged = false;
  long diverged_at = -1;
  long cycles_completed = 0;
};

struct E3Result {
  std::vector<int> arms;
  std::vector<E3RepResult> reps;
  std::vector<long> total_plays;    // per arm, summed over reps
  std::vector<int> nj_star_counts;  // per arm, reps where it was most played
  int mode_nj_star = -1;
};

inline E3RepResult run_learn_nj_rep(const ExperimentConfig& cfg, int rep) {
  E3RepResult out;
  DaCycleState state = make_da_state(cfg, rep);
  for (long c = 1; c <= cfg.cycles; ++c) {
    RunRecord r;
    try {
      r = da_cycle(state, cfg);
    } catch (const blow_up_error&) {
      r.cycle = c;
      r.time = state.time;
      r.rmse = std::numeric_limits<double>::infinity();
      r.n_j = state.h.size();
      r.j_indices = state.h.indices;
      out.records.push_back(r);
      out.diverged = true;
      out.diverged_at = c;
      break;
    }
    out.cycles_completed = c;
    if (c % cfg.record_every == 0) out.records.push_back(r);
    if (r.rmse > cfg.divergence_rmse) {
      if (c % cfg.record_every != 0) out.records.push_back(r);
      out.diverged = true;
      out.diverged_at = c;
      break;
    }
  }
  out.plays = state.bandit.plays;
  int best = 0;
  for (int a = 1; a < state.bandit.num_arms(); ++a) {
    if (out.plays[static_cast<std::size_t>(a)] >
        out.plays[static_cast<std::size_t>(best)]) {
      best = a;
    }
  }
  out.nj_star = state.bandit.arms[static_cast<std::size_t>(best)];
  return out;
}

inline E3Result run_experiment_E3(const ExperimentConfig& cfg) {
  E3Result out;
  out.arms = cfg.arms;
  out.reps.resize(static_cast<std::size_t>(cfg.n_reps));
  parallel_for(cfg.n_reps, cfg.threads, [&](int rep) {
    out.reps[static_cast<std::size_t>(rep)] = run_learn_nj_rep(cfg, rep);
  });
  out.total_plays.assign(cfg.arms.size(), 0);
  out.nj_star_counts.assign(cfg.arms.size(), 0);
  for (const auto& rep : out.reps) {
    for (std::size_t a = 0; a < cfg.arms.size(); ++a) {
      out.total_plays[a] += rep.plays[a];
    }
    for (std::size_t a = 0; a < cfg.arms.size(); ++a) {
      if (cfg.arms[a] == rep.nj_star) {
        ++out.nj_star_counts[a];
        break;
      }
    }
  }
  int mode_arm = 0;
  for (std::size_t a = 1; a < cfg.arms.size(); ++a) {
    if (out.nj_star_counts[a] >
        out.nj_star_counts[static_cast<std::size_t>(mode_arm)]) {
      mode_arm = static_cast<int>(a);
    }
  }
  out.mode_nj_star = cfg.arms[static_cast<std::size_t>(mode_arm)];
  return out;
}

// Across-rep mode of nj_star over a slice of repetitions (smallest on tie).
inline int mode_nj_star_over(const E3Result& e3, std::size_t begin,
                             std::size_t end) {
  std::vector<int> counts(e3.arms.size(), 0);
  for (std::size_t r = begin; r < end && r < e3.reps.size(); ++r) {
    for (std::size_t a = 0; a < e3.arms.size(); ++a) {
      if (e3.arms[a] == e3.reps[r].nj_star) {
        ++counts[a];
        break;
      }
    }
  }
  std::size_t best = 0;
  for (std::size_t a = 1; a < counts.size(); ++a) {
    if (counts[a] > counts[best]) best = a;
  }
  return e3.arms[best];
}

// ---------------------------------------------------------------------------
// Synthetic Bernoulli bandit self-test
// ---------------------------------------------------------------------------

struct BanditSelftestResult {
  struct Row {
    int seed_index = 0;
    double best_arm_fraction = 0.0;
    double regret = 0.0;
    long pulls = 0;
  };
  std::vector<Row> rows;
  double mean_best_arm_fraction = 0.0;
  double mean_regret = 0.0;
};

inline BanditSelftestResult run_bandit_selftest(const ExperimentConfig& cfg) {
  const int n_arms = static_cast<int>(cfg.bandit_means.size());
  std::vector<int> arm_values;
  for (int a = 1; a <= n_arms; ++a) arm_values.push_back(a);
  int best_arm = 0;
  for (int a = 1; a < n_arms; ++a) {
    if (cfg.bandit_means[static_cast<std::size_t>(a)] >
        cfg.bandit_means[static_cast<std::size_t>(best_arm)]) {
      best_arm = a;
    }
  }
  BanditSelftestResult out;
  out.rows.resize(static_cast<std::size_t>(cfg.bandit_seeds));
  parallel_for(cfg.bandit_seeds, cfg.threads, [&](int s) {
    RngStream rng = stream_for(cfg, s, StreamRole::BanditEnv);
    BanditState b = BanditState::make(arm_values, cfg.ucb_coeff);
    for (long pull = 0; pull < cfg.bandit_pulls; ++pull) {
      const int arm = choose_arm(b);
      record_play(b, arm);
      const double r =
          rng.uniform() < cfg.bandit_means[static_cast<std::size_t>(arm)]
              ? 1.0
              : 0.0;
      update_arm(b, arm, r);
    }
    auto& row = out.rows[static_cast<std::size_t>(s)];
    row.seed_index = s;
    row.pulls = cfg.bandit_pulls;
    row.best_arm_fraction =
        static_cast<double>(b.plays[static_cast<std::size_t>(best_arm)]) /
        static_cast<double>(cfg.bandit_pulls);
    for (int a = 0; a < n_arms; ++a) {
      row.regret += static_cast<double>(b.plays[static_cast<std::size_t>(a)]) *
                    (cfg.bandit_means[static_cast<std::size_t>(best_arm)] -
                     cfg.bandit_means[static_cast<std::size_t>(a)]);
    }
  });
  for (const auto& row : out.rows) {
    out.mean_best_arm_fraction += row.best_arm_fraction;
    out.mean_regret += row.regret;
  }
  out.mean_best_arm_fraction /= cfg.bandit_seeds;
  out.mean_regret /= cfg.bandit_seeds;
  return out;
}

}  // namespace randobs
