#pragma once

#include <algorithm>
#include <cstdint>
#include <deque>
#include <limits>
#include <optional>
#include <stdexcept>

#include "okfeb/subspace.hpp"

namespace okfeb {

enum class CensorMode { fixed, adaptive };

/// Censors samples whose LS fit falls below epsilon. Adaptive mode tracks a
/// moving window of fits/decisions and steers epsilon toward a target update
/// rate with a clipped proportional correction.
class CensorPolicy {
 public:
  CensorMode mode = CensorMode::fixed;
  double epsilon = 0.0;
  int window = 100;
  double target_rate = 0.5;  // desired fraction of samples used for updates

  static CensorPolicy fixed(double eps) {
    CensorPolicy p;
    p.mode = CensorMode::fixed;
    p.epsilon = eps;
    return p;
  }
  static CensorPolicy adaptive(double target, int window = 100) {
    CensorPolicy p;
    p.mode = CensorMode::adaptive;
    p.epsilon = 0.0;  // "may be initialized at zero"
    p.window = window;
    p.target_rate = target;
    return p;
  }

  /// True (skip the update) iff fit < epsilon.
  bool decide(double fit) {
    const bool censored = fit < epsilon;
    if (mode == CensorMode::adaptive) {
      history_.push_back({fit, !censored});
      while (static_cast<int>(history_.size()) > window) history_.pop_front();
    }
    return censored;
  }

  /// New epsilon = windowed mean fit scaled by observed/target update rate,
  /// clipped to [0.5, 2] x the previous value once epsilon is nonzero.
  double adapt() {
    if (mode != CensorMode::adaptive) throw std::logic_error("adapt() requires adaptive mode");
    if (history_.empty()) {
      epsilon = 0.0;
      return epsilon;
    }
    double mean = 0.0;
    double updates = 0.0;
    for (const auto& h : history_) {
      mean += h.fit;
      if (h.updated) updates += 1.0;
    }
    mean /= static_cast<double>(history_.size());
    const double observed = updates / static_cast<double>(history_.size());
    const double target = std::max(target_rate, 1e-6);
    double next = mean * (observed / target);
    if (epsilon > 0.0) next = std::clamp(next, 0.5 * epsilon, 2.0 * epsilon);
    epsilon = next;
    return epsilon;
  }

  double observed_update_rate() const {
    if (history_.empty()) return 1.0;
    double updates = 0.0;
    for (const auto& h : history_)
      if (h.updated) updates += 1.0;
    return updates / static_cast<double>(history_.size());
  }

 private:
  struct Entry {
    double fit;
    bool updated;
  };
  std::deque<Entry> history_;
};

enum class BudgetRule { recency_min_norm, brute_force, fifo };

struct BudgetPolicy {
  static constexpr std::int64_t kUnbounded = std::numeric_limits<std::int64_t>::max();

  std::int64_t B = kUnbounded;  // max support size
  double beta = 1.0;            // recency forgetting factor in (0, 1]
  BudgetRule rule = BudgetRule::recency_min_norm;

  void validate() const {
    if (B < 1) throw std::invalid_argument("budget B must be >= 1");
    if (!(beta > 0.0) || beta > 1.0) throw std::invalid_argument("beta must be in (0, 1]");
  }
};

struct StepResult {
  FeatureVector q;
  double fit = 0.0;
  bool censored = false;
  std::optional<Eigen::Index> removed_index;
  Eigen::Index sv_count = 0;
};

/// Subspace distortion caused by dropping support vector i,
///   tr{A^T K A - 2 A_i'^T K(S\i, S) A + A_i'^T K(S\i, S\i) A_i'}.
/// The dropped basis contribution is the rank-one term phi_i a_i^T, so the
/// trace collapses to K_ii |a_i|^2.
inline double distortion_of_removal(const SubspaceModel& model, Eigen::Index i) {
  if (i < 0 || i >= model.support_size()) throw std::out_of_range("support index out of range");
  return model.K_S()(i, i) * model.A().row(i).squaredNorm();
}

/// Removes one support vector according to the policy rule and returns its
/// index. Requires the budget to be exceeded. Ties break to the smallest
/// (oldest) index.
inline Eigen::Index maintain_budget(SubspaceModel& model, const BudgetPolicy& policy) {
  policy.validate();
  const Eigen::Index s = model.support_size();
  if (s <= policy.B) throw std::invalid_argument("maintain_budget requires |S| > B");

  Eigen::Index pick = 0;
  switch (policy.rule) {
    case BudgetRule::fifo:
      pick = 0;
      break;
    case BudgetRule::recency_min_norm: {
      double best = std::numeric_limits<double>::infinity();
      for (Eigen::Index i = 0; i < s; ++i) {
        const double score = model.etas()[static_cast<std::size_t>(i)] * model.A().row(i).norm();
        if (score < best) {
          best = score;
          pick = i;
        }
      }
      break;
    }
    case BudgetRule::brute_force: {
      double best = std::numeric_limits<double>::infinity();
      for (Eigen::Index i = 0; i < s; ++i) {
        const double score = distortion_of_removal(model, i);
        if (score < best) {
          best = score;
          pick = i;
        }
      }
      break;
    }
  }
  model.remove_support(pick);
  return pick;
}

/// One OK-FEB step: extract the feature, censor on the LS fit, otherwise
/// admit the sample via the nonparametric update (degrading prior recency
/// weights) and restore the budget. The sample counter always advances.
inline StepResult okfeb_step(SubspaceModel& model, const Vec& x, CensorPolicy& censor,
                             const BudgetPolicy& budget, const StepSchedule& schedule) {
  budget.validate();
  StepResult res;
  res.q = model.extract_feature(x);
  res.fit = model.ls_fit(x, res.q);
  res.censored = censor.decide(res.fit);
  if (res.censored) {
    model.bump_counter();
  } else {
    const double mu = schedule.step(model.sample_count() + 1, res.q);
    model.degrade_recency(budget.beta);
    model.nonparametric_update(x, res.q, mu);
    if (model.support_size() > budget.B) res.removed_index = maintain_budget(model, budget);
  }
  res.sv_count = model.support_size();
  if (censor.mode == CensorMode::adaptive) censor.adapt();
  return res;
}

}  // namespace okfeb
