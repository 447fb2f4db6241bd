#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "hetdecomp/common.hpp"
#include "hetdecomp/learners.hpp"
#include "hetdecomp/model.hpp"

namespace hetdecomp {

struct FoldAssignment {
  std::vector<int> fold_of;
  int k = 0;

  std::vector<int> fold_rows(int fold) const {
    std::vector<int> out;
    for (std::size_t i = 0; i < fold_of.size(); ++i)
      if (fold_of[i] == fold) out.push_back(static_cast<int>(i));
    return out;
  }

  std::vector<int> train_rows(int fold) const {
    std::vector<int> out;
    for (std::size_t i = 0; i < fold_of.size(); ++i)
      if (fold_of[i] != fold) out.push_back(static_cast<int>(i));
    return out;
  }
};

// Seeded permutation dealt round-robin: fold sizes differ by at most one.
inline FoldAssignment assign_folds(std::size_t n, int k, std::uint64_t seed) {
  require(k >= 2 && static_cast<std::size_t>(k) <= n, errc::invalid_fold_count,
          "fold count must satisfy 2 <= K <= n");
  std::vector<int> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  std::mt19937_64 rng(mix_seed(seed, 0x666f6c64ULL));
  std::shuffle(perm.begin(), perm.end(), rng);
  FoldAssignment fa;
  fa.k = k;
  fa.fold_of.resize(n);
  for (std::size_t r = 0; r < n; ++r)
    fa.fold_of[static_cast<std::size_t>(perm[r])] = static_cast<int>(r % static_cast<std::size_t>(k));
  return fa;
}

struct CrossFitOptions {
  int folds = 5;
  std::uint64_t seed = 1;
  double clip_floor = 0.0;  // <= 0 resolves to max(1e-4, 1/(2n))
  int threads = 1;
  LearnerSpec propensity = LearnerSpec::cell_frequency_spec();
  LearnerSpec outcome = LearnerSpec::cell_frequency_spec();
};

inline double resolve_clip_floor(double requested, std::size_t n) {
  if (requested > 0.0) return requested;
  return std::max(1e-4, 1.0 / (2.0 * static_cast<double>(n)));
}

struct NuisanceEstimates {
  Eigen::MatrixXd e;   // n x T cross-fitted propensities, clipped and renormalized
  Eigen::MatrixXd mu;  // n x T cross-fitted outcome regressions
  FoldAssignment folds;
  double clip_floor = 0.0;
  long clip_count = 0;
  double max_clip_shift = 0.0;
};

// K-fold cross-fitting of the granular nuisances. Every treatment label
// must appear in every training split; propensity rows are clipped to
// [floor, 1-floor] and renormalized.
inline NuisanceEstimates fit_granular(const Dataset& data, const CrossFitOptions& opt) {
  const std::size_t n = data.n();
  const int n_t = data.n_treatments();
  NuisanceEstimates out;
  out.folds = assign_folds(n, opt.folds, opt.seed);
  out.clip_floor = resolve_clip_floor(opt.clip_floor, n);
  out.e.setZero(static_cast<Eigen::Index>(n), n_t);
  out.mu.setZero(static_cast<Eigen::Index>(n), n_t);

  // label presence per training split
  std::vector<std::vector<long>> fold_count(static_cast<std::size_t>(opt.folds),
                                            std::vector<long>(static_cast<std::size_t>(n_t), 0));
  std::vector<long> total(static_cast<std::size_t>(n_t), 0);
  for (std::size_t i = 0; i < n; ++i) {
    fold_count[static_cast<std::size_t>(out.folds.fold_of[i])][static_cast<std::size_t>(data.t[i])]++;
    total[static_cast<std::size_t>(data.t[i])]++;
  }
  for (int f = 0; f < opt.folds; ++f)
    for (int t = 0; t < n_t; ++t)
      require(total[static_cast<std::size_t>(t)] -
                      fold_count[static_cast<std::size_t>(f)][static_cast<std::size_t>(t)] >
                  0,
              errc::label_absent_in_fold,
              "treatment '" + data.treatment_labels[static_cast<std::size_t>(t)] +
                  "' absent from the training split of fold " + std::to_string(f));

  GenericPropensityLearner p_learner(opt.propensity);
  GenericOutcomeLearner y_learner(opt.outcome);

  parallel_for(static_cast<std::size_t>(opt.folds), opt.threads, [&](std::size_t f) {
    const int fold = static_cast<int>(f);
    auto train = out.folds.train_rows(fold);
    auto held = out.folds.fold_rows(fold);
    auto pm = p_learner.fit(data, train, mix_seed(opt.seed, 2 * f));
    auto ym = y_learner.fit(data, train, mix_seed(opt.seed, 2 * f + 1));
    pm->predict(data, held, out.e);
    ym->predict(data, held, out.mu);
  });

  // learner contract: rows are distributions, predictions finite
  long clip_count = 0;
  double max_shift = 0.0;
  for (Eigen::Index i = 0; i < out.e.rows(); ++i) {
    double row_sum = out.e.row(i).sum();
    require(std::isfinite(row_sum) && std::abs(row_sum - 1.0) < 1e-8, errc::learner_failure,
            "propensity row " + std::to_string(i) + " does not sum to one");
    for (Eigen::Index t = 0; t < out.e.cols(); ++t) {
      require(std::isfinite(out.mu(i, t)), errc::learner_failure,
              "outcome prediction non-finite at row " + std::to_string(i));
      double pre = out.e(i, t);
      double post = std::clamp(pre, out.clip_floor, 1.0 - out.clip_floor);
      if (post != pre) {
        ++clip_count;
        max_shift = std::max(max_shift, std::abs(post - pre));
        out.e(i, t) = post;
      }
    }
    out.e.row(i) /= out.e.row(i).sum();
  }
  out.clip_count = clip_count;
  out.max_clip_shift = max_shift;
  return out;
}

// Frozen aggregate nuisances: every entry is the closed-form solution of its
// own linear moment given the cross-fitted granular inputs. These are the
// plug-ins used by all downstream influence functions.
struct AggregateNuisances {
  Eigen::VectorXd p_g;          // per group
  Eigen::VectorXd e_arm;        // per arm
  Eigen::MatrixXd e_ag;         // arm x group: P(T in arm, X in group)
  Eigen::MatrixXd e_arm_g;      // arm x group: P(T in arm | X in group)
  Eigen::MatrixXd m_a_g;        // arm x group: raw cell outcome means
  Eigen::VectorXd e_t;          // per treatment
  Eigen::VectorXd mu_t;         // per treatment
  Eigen::MatrixXd e_t_g;        // T x G
  Eigen::MatrixXd mu_t_g;       // T x G
  Eigen::VectorXd e_ta;         // per treatment within its own arm (NaN if unreferenced)
  Eigen::MatrixXd e_ta_g;       // T x G
  Eigen::MatrixXd e_ta_mean_g;  // T x G
};

inline AggregateNuisances fit_aggregates(const Dataset& data, const AggregationScheme& scheme,
                                         const std::vector<int>& unit_group,
                                         const NuisanceEstimates& nuis) {
  const std::size_t n = data.n();
  const int n_t = data.n_treatments();
  const int n_arm = scheme.n_arms();
  const int n_g = scheme.group_count;
  const double dn = static_cast<double>(n);
  const double nan = std::numeric_limits<double>::quiet_NaN();

  AggregateNuisances agg;
  agg.p_g.setZero(n_g);
  agg.e_arm.setZero(n_arm);
  agg.e_ag.setZero(n_arm, n_g);
  agg.e_arm_g.setZero(n_arm, n_g);
  agg.m_a_g.setZero(n_arm, n_g);
  agg.e_t.setZero(n_t);
  agg.mu_t.setZero(n_t);
  agg.e_t_g.setZero(n_t, n_g);
  agg.mu_t_g.setZero(n_t, n_g);
  agg.e_ta = Eigen::VectorXd::Constant(n_t, nan);
  agg.e_ta_g = Eigen::MatrixXd::Constant(n_t, n_g, nan);
  agg.e_ta_mean_g = Eigen::MatrixXd::Constant(n_t, n_g, nan);

  Eigen::MatrixXi counts = Eigen::MatrixXi::Zero(n_t, n_g);  // treatment x group
  Eigen::MatrixXd y_sum_ag = Eigen::MatrixXd::Zero(n_arm, n_g);
  for (std::size_t i = 0; i < n; ++i) {
    counts(data.t[i], unit_group[i])++;
    int a = scheme.arm_of[static_cast<std::size_t>(data.t[i])];
    if (a >= 0) y_sum_ag(a, unit_group[i]) += data.y[static_cast<Eigen::Index>(i)];
  }

  for (int g = 0; g < n_g; ++g) agg.p_g[g] = static_cast<double>(counts.col(g).sum()) / dn;
  for (int t = 0; t < n_t; ++t) agg.e_t[t] = static_cast<double>(counts.row(t).sum()) / dn;
  for (int a = 0; a < n_arm; ++a) {
    long arm_n = 0;
    for (int t : scheme.arm_members(a)) arm_n += counts.row(t).sum();
    require(arm_n > 0, errc::empty_arm, "arm '" + scheme.arm_names[a] + "' contains no units");
    agg.e_arm[a] = static_cast<double>(arm_n) / dn;
    for (int g = 0; g < n_g; ++g) {
      long cell_n = 0;
      for (int t : scheme.arm_members(a)) cell_n += counts(t, g);
      require(cell_n > 0, errc::empty_cell,
              "empty cell (arm=" + scheme.arm_names[a] + ", group=" + scheme.group_name(g) + ")");
      agg.e_ag(a, g) = static_cast<double>(cell_n) / dn;
      agg.e_arm_g(a, g) = static_cast<double>(cell_n) /
                          static_cast<double>(counts.col(g).sum());
      agg.m_a_g(a, g) = y_sum_ag(a, g) / static_cast<double>(cell_n);
      for (int t : scheme.arm_members(a)) {
        agg.e_ta[t] = static_cast<double>(counts.row(t).sum()) / static_cast<double>(arm_n);
        require(counts(t, g) > 0, errc::empty_cell,
                "empty cell (t=" + data.treatment_labels[static_cast<std::size_t>(t)] +
                    ", group=" + scheme.group_name(g) + ")");
        agg.e_ta_g(t, g) = static_cast<double>(counts(t, g)) / static_cast<double>(cell_n);
      }
    }
  }

  // group shares of granular propensities and AIPW outcome means
  std::vector<double> buf(n), buf_g(n);
  for (int t = 0; t < n_t; ++t) {
    const int a = scheme.arm_of[static_cast<std::size_t>(t)];
    for (std::size_t i = 0; i < n; ++i) {
      const Eigen::Index ii = static_cast<Eigen::Index>(i);
      const double score = (data.t[i] == t ? (data.y[ii] - nuis.mu(ii, t)) / nuis.e(ii, t) : 0.0) +
                           nuis.mu(ii, t);
      buf[i] = score;
    }
    agg.mu_t[t] = pairwise_sum(buf) / dn;
    for (int g = 0; g < n_g; ++g) {
      const double n_gd = agg.p_g[g] * dn;
      for (std::size_t i = 0; i < n; ++i) buf_g[i] = unit_group[i] == g ? buf[i] : 0.0;
      agg.mu_t_g(t, g) = pairwise_sum(buf_g) / n_gd;
      agg.e_t_g(t, g) = static_cast<double>(counts(t, g)) / n_gd;
    }
    if (a >= 0) {
      for (int g = 0; g < n_g; ++g) {
        const double n_gd = agg.p_g[g] * dn;
        for (std::size_t i = 0; i < n; ++i) {
          if (unit_group[i] != g) {
            buf_g[i] = 0.0;
            continue;
          }
          const Eigen::Index ii = static_cast<Eigen::Index>(i);
          double e_arm_x = 0.0;
          for (int tt : scheme.arm_members(a)) e_arm_x += nuis.e(ii, tt);
          require(e_arm_x > 1e-6, errc::degenerate_denominator,
                  "granular arm propensity below 1e-6 at row " + std::to_string(i));
          const double eta_x = nuis.e(ii, t) / e_arm_x;
          const double ind_arm =
              scheme.arm_of[static_cast<std::size_t>(data.t[i])] == a ? 1.0 : 0.0;
          const double ind_t = data.t[i] == t ? 1.0 : 0.0;
          buf_g[i] = ind_arm * (ind_t - eta_x) / e_arm_x + eta_x;
        }
        agg.e_ta_mean_g(t, g) = pairwise_sum(buf_g) / n_gd;
      }
    }
  }
  return agg;
}

}  // namespace hetdecomp
