#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "randobs/dynamics.hpp"
#include "randobs/localization.hpp"

namespace randobs {

// UCB1 state over candidate observation-set sizes N_J. `t` counts reward
// updates (DA cycles), `plays` the updates credited to each arm.
struct BanditState {
  std::vector<int> arms;       // candidate N_J values, strictly increasing
  std::vector<double> mu_hat;  // empirical mean reward per arm
  std::vector<long> plays;
  long t = 0;
  double ucb_coeff = 1.0;

  static BanditState make(std::vector<int> arms, double ucb_coeff = 1.0) {
    if (arms.empty()) {
      throw std::invalid_argument("BanditState: arm list must be non-empty");
    }
    for (std::size_t i = 0; i < arms.size(); ++i) {
      if (arms[i] <= 0 || (i > 0 && arms[i] <= arms[i - 1])) {
        throw std::invalid_argument(
            "BanditState: arms must be positive and strictly increasing");
      }
    }
    BanditState b;
    b.mu_hat.assign(arms.size(), 0.0);
    b.plays.assign(arms.size(), 0);
    b.arms = std::move(arms);
    b.ucb_coeff = ucb_coeff;
    return b;
  }

  int num_arms() const { return static_cast<int>(arms.size()); }
};

// Arm selection: any unplayed arm is returned first (play-each-once
// initialization, lowest N_J first); afterwards the UCB1 index
//   mu_hat_a + c sqrt(2 ln t / plays_a)
// is maximized, ties broken toward the smaller N_J.
inline int choose_arm(const BanditState& b) {
  if (b.arms.empty()) {
    throw std::invalid_argument("choose_arm: empty arm list");
  }
  for (int a = 0; a < b.num_arms(); ++a) {
    if (b.plays[static_cast<std::size_t>(a)] == 0) return a;
  }
  int best = 0;
  double best_index = -std::numeric_limits<double>::infinity();
  const double log_t = std::log(static_cast<double>(b.t));
  for (int a = 0; a < b.num_arms(); ++a) {
    const double bonus =
        b.ucb_coeff *
        std::sqrt(2.0 * log_t /
                  static_cast<double>(b.plays[static_cast<std::size_t>(a)]));
    const double index = b.mu_hat[static_cast<std::size_t>(a)] + bonus;
    if (index > best_index) {
      best_index = index;
      best = a;
    }
  }
  return best;
}

// n[N_J] <- n[N_J] + 1 (and the global cycle counter); run before the
// reward update of the same cycle.
inline void record_play(BanditState& b, int arm) {
  if (arm < 0 || arm >= b.num_arms()) {
    throw std::invalid_argument("record_play: arm index out of range");
  }
  ++b.plays[static_cast<std::size_t>(arm)];
  ++b.t;
}

// Incremental mean update mu <- mu + (r - mu)/plays; expects the play
// already recorded, so mu_hat stays the arithmetic mean of the rewards the
// arm has received.
inline void update_arm(BanditState& b, int arm, double reward) {
  if (arm < 0 || arm >= b.num_arms()) {
    throw std::invalid_argument("update_arm: arm index out of range");
  }
  const long n = b.plays[static_cast<std::size_t>(arm)];
  if (n < 1) {
    throw std::invalid_argument("update_arm: record_play must run first");
  }
  double& mu = b.mu_hat[static_cast<std::size_t>(arm)];
  mu += (reward - mu) / static_cast<double>(n);
}

// Approximate coverage ratio kappa: the fraction of state indices k with at
// least one observed j within the localisation radius whose squared-entry
// correlation proxy P[k,j]^2 / (P[k,k]^2 + 1e-12) clears tau_corr.
inline double coverage(const std::vector<int>& J, double r_loc,
                       const Matrix& P, double tau_corr) {
  if (P.rows() != P.cols() || P.rows() < 1) {
    throw std::invalid_argument("coverage: P must be square and non-empty");
  }
  const int n_x = static_cast<int>(P.rows());
  for (int j : J) {
    if (j < 0 || j >= n_x) {
      throw std::invalid_argument("coverage: index out of range");
    }
  }
  int covered = 0;
  for (int k = 0; k < n_x; ++k) {
    for (int j : J) {
      if (cyclic_distance(k, j, n_x) > r_loc) continue;
      const double c = (P(k, j) * P(k, j)) / (P(k, k) * P(k, k) + 1e-12);
      if (c >= tau_corr) {
        ++covered;
        break;
      }
    }
  }
  return static_cast<double>(covered) / static_cast<double>(n_x);
}

struct RewardParams {
  double alpha = 3.2;     // weight of the N_J/N_x size penalty
  double beta = 2.5;      // weight of the coverage term
  double gamma = 0.25;    // weight of the trace(P)/N_x spread penalty
  double tau_corr = 0.30;
  double r_loc = 10.0;

  void validate() const {
    if (!(alpha >= 0.0) || !(beta >= 0.0) || !(gamma >= 0.0)) {
      throw std::invalid_argument("RewardParams: weights must be >= 0");
    }
    if (!(tau_corr > 0.0) || !(tau_corr < 1.0)) {
      throw std::invalid_argument("RewardParams: tau_corr must be in (0,1)");
    }
    if (!(r_loc > 0.0)) {
      throw std::invalid_argument("RewardParams: r_loc must be positive");
    }
  }
};

// R = beta kappa - alpha N_J/N_x - gamma trace(P)/N_x.
inline double reward(double kappa, int n_j, int n_x, double trace_p,
                     const RewardParams& params) {
  if (n_x <= 0) {
    throw std::invalid_argument("reward: n_x must be positive");
  }
  return params.beta * kappa -
         params.alpha * static_cast<double>(n_j) / static_cast<double>(n_x) -
         params.gamma * trace_p / static_cast<double>(n_x);
}

}  // namespace randobs
