// randobs command-line driver: reproduces the fixed-vs-random observation
// comparison (trajectory), the MSE-vs-eps sweep (mse-sweep), the sequential
// learning of the observation-set size (learn-nj), and a synthetic UCB1
// regret check (bandit-selftest). Every run writes a manifest that fully
// resolves the configuration; rerunning the same subcommand with that
// manifest reproduces the outputs byte for byte.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "randobs/config.hpp"
#include "randobs/csv.hpp"
#include "randobs/harness.hpp"

namespace fs = std::filesystem;
using namespace randobs;

namespace {

std::string read_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open config file '" + path + "'");
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open '" + path.string() + "'");
  os << content;
  os.flush();
  if (!os) throw std::runtime_error("write failed for '" + path.string() + "'");
}

std::string rep_tag(int rep) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "rep%03d", rep);
  return buf;
}

void write_truth_csv(const fs::path& path,
                     const std::vector<std::pair<RunRecord, Vector>>& rows,
                     int n_x) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open '" + path.string() + "'");
  os << "cycle,time";
  for (int k = 0; k < n_x; ++k) os << ",x" << k;
  os << '\n';
  for (const auto& [rec, x] : rows) {
    os << rec.cycle << ',' << format_double(rec.time);
    for (int k = 0; k < n_x; ++k) os << ',' << format_double(x(k));
    os << '\n';
  }
}

fs::path prepare_out_dir(const std::string& out_opt, ExperimentKind kind,
                         bool with_runs) {
  fs::path dir = out_opt.empty() ? fs::path("out") / to_string(kind)
                                 : fs::path(out_opt);
  fs::create_directories(dir);
  if (with_runs) fs::create_directories(dir / "runs");
  return dir;
}

void write_summary(const fs::path& dir,
                   const std::vector<std::pair<std::string, std::string>>& kv) {
  std::vector<std::string> rows;
  for (const auto& [k, v] : kv) rows.push_back(k + "," + v);
  write_table((dir / "summary.csv").string(), "key,value", rows);
}

int run_trajectory(const ExperimentConfig& cfg, const fs::path& dir) {
  const E1Result res = run_experiment_E1(cfg);
  std::vector<std::string> rows;
  for (int rep = 0; rep < cfg.n_reps; ++rep) {
    const auto& r = res.reps[static_cast<std::size_t>(rep)];
    if (cfg.write_runs) {
      emit_csv(r.fixed_run.records,
               (dir / "runs" / (rep_tag(rep) + "_fixed.csv")).string());
      emit_csv(r.random_run.records,
               (dir / "runs" / (rep_tag(rep) + "_random.csv")).string());
      write_truth_csv(dir / "runs" / (rep_tag(rep) + "_truth.csv"), r.truth,
                      cfg.n_x);
    }
    for (const char* variant : {"fixed", "random"}) {
      const auto& run =
          variant[0] == 'f' ? r.fixed_run : r.random_run;
      rows.push_back(std::to_string(rep) + "," + variant + "," +
                     (run.diverged ? "1" : "0") + "," +
                     std::to_string(run.diverged_at) + "," +
                     format_double(run.second_half_mean_rmse) + "," +
                     std::to_string(run.steps_completed));
    }
  }
  write_table((dir / "trajectory_summary.csv").string(),
              "rep,variant,diverged,diverged_at,second_half_mean_rmse,"
              "steps_completed",
              rows);
  write_summary(
      dir,
      {{"fixed_diverged_fraction", format_double(res.fixed_diverged_fraction)},
       {"random_tracking_fraction",
        format_double(res.random_tracking_fraction)},
       {"tracking_rmse_threshold",
        format_double(res.tracking_rmse_threshold)}});
  std::cout << "trajectory: fixed diverged fraction "
            << res.fixed_diverged_fraction << ", random tracking fraction "
            << res.random_tracking_fraction << "\n";
  return 0;
}

int run_mse_sweep(const ExperimentConfig& cfg, const fs::path& dir) {
  const E2Result res = run_experiment_E2(cfg);
  if (cfg.write_runs) {
    for (std::size_t ei = 0; ei < cfg.eps_list.size(); ++ei) {
      for (int rep = 0; rep < cfg.n_reps; ++rep) {
        const auto& run = res.runs[ei][static_cast<std::size_t>(rep)];
        emit_csv(run.records,
                 (dir / "runs" /
                  ("eps" + format_double(cfg.eps_list[ei]) + "_" +
                   rep_tag(rep) + ".csv"))
                     .string());
      }
    }
  }
  std::vector<std::string> rows;
  for (const auto& row : res.rows) {
    rows.push_back(format_double(row.eps) + "," + format_double(row.mse) +
                   "," + std::to_string(row.reps_used) + "," +
                   std::to_string(row.reps_diverged));
  }
  write_table((dir / "mse_sweep.csv").string(),
              "eps,mse,reps_used,reps_diverged", rows);
  write_summary(dir, {{"loglog_slope", format_double(res.slope)},
                      {"burn_in_frac", format_double(cfg.burn_in_frac)}});
  std::cout << "mse-sweep: log-log slope " << res.slope << "\n";
  for (const auto& row : res.rows) {
    std::cout << "  eps " << row.eps << " -> mse " << row.mse << " ("
              << row.reps_used << " reps used, " << row.reps_diverged
              << " diverged)\n";
  }
  return 0;
}

int run_learn_nj(const ExperimentConfig& cfg, const fs::path& dir) {
  const E3Result res = run_experiment_E3(cfg);
  std::vector<std::string> hist_rows;
  for (std::size_t a = 0; a < res.arms.size(); ++a) {
    hist_rows.push_back(std::to_string(res.arms[a]) + "," +
                        std::to_string(res.total_plays[a]) + "," +
                        std::to_string(res.nj_star_counts[a]));
  }
  write_table((dir / "nj_histogram.csv").string(),
              "n_j,total_plays,nj_star_count", hist_rows);
  std::vector<std::string> rep_rows;
  int n_interior = 0;
  for (int rep = 0; rep < cfg.n_reps; ++rep) {
    const auto& r = res.reps[static_cast<std::size_t>(rep)];
    if (cfg.write_runs) {
      emit_csv(r.records, (dir / "runs" / (rep_tag(rep) + ".csv")).string());
    }
    long total_pulls = 0;
    for (long p : r.plays) total_pulls += p;
    if (r.nj_star > 1 && r.nj_star < cfg.n_x) ++n_interior;
    rep_rows.push_back(std::to_string(rep) + "," + std::to_string(r.nj_star) +
                       "," + (r.diverged ? "1" : "0") + "," +
                       std::to_string(r.cycles_completed) + "," +
                       std::to_string(total_pulls));
  }
  write_table((dir / "learn_nj_reps.csv").string(),
              "rep,nj_star,diverged,cycles_completed,total_pulls", rep_rows);
  const std::size_t half = static_cast<std::size_t>(cfg.n_reps) / 2;
  write_summary(
      dir,
      {{"mode_nj_star", std::to_string(res.mode_nj_star)},
       {"interior_fraction",
        format_double(static_cast<double>(n_interior) / cfg.n_reps)},
       {"mode_nj_star_first_half",
        std::to_string(mode_nj_star_over(res, 0, half))},
       {"mode_nj_star_second_half",
        std::to_string(mode_nj_star_over(
            res, half, static_cast<std::size_t>(cfg.n_reps)))}});
  std::cout << "learn-nj: mode N_J* = " << res.mode_nj_star
            << ", interior fraction "
            << static_cast<double>(n_interior) / cfg.n_reps << "\n";
  return 0;
}

int run_selftest(const ExperimentConfig& cfg, const fs::path& dir) {
  const BanditSelftestResult res = run_bandit_selftest(cfg);
  std::vector<std::string> rows;
  for (const auto& row : res.rows) {
    rows.push_back(std::to_string(row.seed_index) + "," +
                   format_double(row.best_arm_fraction) + "," +
                   format_double(row.regret) + "," +
                   std::to_string(row.pulls));
  }
  write_table((dir / "bandit_selftest.csv").string(),
              "seed_index,best_arm_fraction,regret,pulls", rows);
  write_summary(dir, {{"mean_best_arm_fraction",
                       format_double(res.mean_best_arm_fraction)},
                      {"mean_regret", format_double(res.mean_regret)}});
  std::cout << "bandit-selftest: mean best-arm fraction "
            << res.mean_best_arm_fraction << ", mean regret "
            << res.mean_regret << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "Ensemble Kalman filtering of chaotic systems under fixed, randomized, "
      "and Poisson-switched partial observations, with UCB1 learning of the "
      "observation-set size"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  std::string out_dir;
  std::uint64_t seed = 0;
  int reps = 0;
  int threads = -1;
  bool paper_scale = false;
  std::vector<std::string> sets;
  app.add_option("--config", config_path, "flat key=value config file");
  app.add_option("--out", out_dir, "output directory (default out/<cmd>)");
  auto* seed_opt = app.add_option("--seed", seed, "master RNG seed");
  auto* reps_opt = app.add_option("--reps", reps, "number of repetitions");
  auto* threads_opt =
      app.add_option("--threads", threads, "worker threads (0 = all cores)");
  app.add_flag("--paper-scale", paper_scale,
               "paper-scale settings where desk scale differs (mse-sweep)");
  app.add_option("--set", sets, "extra key=value overrides")
      ->take_all()
      ->expected(-1);

  auto* traj = app.add_subcommand(
      "trajectory", "L63: fixed third-component vs per-step random "
                    "single-component observation (continuous filter)");
  auto* sweep = app.add_subcommand(
      "mse-sweep", "L63 continuous filter: doubly-averaged MSE vs eps");
  std::string eps_list;
  sweep->add_option("--eps-list", eps_list,
                    "comma-separated observation error orders");
  auto* learn = app.add_subcommand(
      "learn-nj", "L96 LETKF: sequential learning of N_J via UCB1");
  int nx = 0;
  auto* nx_opt = learn->add_option("--nx", nx, "state dimension");
  auto* selftest = app.add_subcommand(
      "bandit-selftest", "synthetic Bernoulli-arm UCB1 regret check");

  CLI11_PARSE(app, argc, argv);

  try {
    ExperimentKind kind = ExperimentKind::Trajectory;
    if (sweep->parsed()) kind = ExperimentKind::MseSweep;
    if (learn->parsed()) kind = ExperimentKind::LearnNj;
    if (selftest->parsed()) kind = ExperimentKind::BanditSelftest;
    (void)traj;

    std::vector<std::string> overrides;
    if (seed_opt->count() > 0) {
      overrides.push_back("seed=" + std::to_string(seed));
    }
    if (reps_opt->count() > 0) {
      overrides.push_back("n_reps=" + std::to_string(reps));
    }
    if (threads_opt->count() > 0) {
      overrides.push_back("threads=" + std::to_string(threads));
    }
    if (paper_scale) overrides.push_back("paper_scale=true");
    if (!eps_list.empty()) overrides.push_back("eps_list=" + eps_list);
    if (nx_opt->count() > 0) overrides.push_back("n_x=" + std::to_string(nx));
    for (const auto& s : sets) overrides.push_back(s);

    const std::string text =
        config_path.empty() ? std::string() : read_file(config_path);
    const ExperimentConfig cfg = parse_config(text, kind, overrides);

    const bool with_runs =
        cfg.write_runs && kind != ExperimentKind::BanditSelftest;
    const fs::path dir = prepare_out_dir(out_dir, kind, with_runs);
    write_file(dir / "manifest", render_manifest(cfg));

    switch (kind) {
      case ExperimentKind::Trajectory: return run_trajectory(cfg, dir);
      case ExperimentKind::MseSweep: return run_mse_sweep(cfg, dir);
      case ExperimentKind::LearnNj: return run_learn_nj(cfg, dir);
      case ExperimentKind::BanditSelftest: return run_selftest(cfg, dir);
    }
  } catch (const std::exception& e) {
    std::cerr << "randobs: error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
