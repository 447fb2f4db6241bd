#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "hetdecomp/common.hpp"
#include "hetdecomp/decomp.hpp"
#include "hetdecomp/hypothesis.hpp"
#include "hetdecomp/model.hpp"
#include "hetdecomp/moment_kernel.hpp"
#include "hetdecomp/moments.hpp"
#include "hetdecomp/nuisance.hpp"
#include "hetdecomp/oracle.hpp"
#include "hetdecomp/stats.hpp"

// Samplers for benchmark designs plus Monte Carlo study harnesses: finite
// sample power/size of the strong-null tests, confidence-interval coverage
// of decomposition parameters, and the discretization bias of a partitioned
// continuous dose.
namespace hetdecomp::sim {

// ---------------------------------------------------------------------------
// A finite DGP together with the aggregation used to analyze draws from it.
// ---------------------------------------------------------------------------
struct DgpBundle {
  oracle::DiscreteDgp dgp;
  std::vector<int> arm_of;      // treatment code -> arm index
  std::vector<int> group_of_x;  // support point -> group index
  std::vector<std::string> arm_names;
  std::vector<std::string> group_names;
  int group_count = 2;
  // When >= 0, covariate column holding the group id directly; otherwise the
  // scheme looks the group up by support index stored in covariate column 0.
  int group_column = -1;

  oracle::PopulationView view() const { return oracle::PopulationView(dgp, arm_of, group_of_x); }

  AggregationScheme scheme() const {
    AggregationScheme s;
    s.arm_of = arm_of;
    s.arm_names = arm_names;
    s.group_count = group_count;
    s.group_names = group_names;
    if (group_column >= 0) {
      s.group_rule.kind = GroupRule::Kind::column;
      s.group_rule.column = group_column;
    } else {
      s.group_rule.kind = GroupRule::Kind::callback;
      std::vector<int> map = group_of_x;
      s.group_rule.fn = [map](const Eigen::Ref<const Eigen::RowVectorXd>& row) {
        const int k = static_cast<int>(std::llround(row[0]));
        require(k >= 0 && k < static_cast<int>(map.size()), errc::invalid_config,
                "covariate row does not index the DGP support");
        return map[static_cast<std::size_t>(k)];
      };
    }
    return s;
  }
};

// ---------------------------------------------------------------------------
// Sampling
// ---------------------------------------------------------------------------
inline Dataset sample(const oracle::DiscreteDgp& dgp, std::size_t n, std::uint64_t seed) {
  dgp.check();
  require(n > 0, errc::invalid_config, "sample size must be positive");
  const int S = dgp.n_support();
  const int T = dgp.n_treatments();

  Dataset out;
  out.y.resize(static_cast<Eigen::Index>(n));
  out.t.resize(n);
  out.treatment_labels = dgp.treatment_labels;
  out.x.resize(static_cast<Eigen::Index>(n), dgp.x_points.cols());
  for (Eigen::Index c = 0; c < dgp.x_points.cols(); ++c)
    out.covariate_names.push_back("x" + std::to_string(c));

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    const double ux = unif(rng);
    int k = S - 1;
    double acc = 0.0;
    for (int s = 0; s < S; ++s) {
      acc += dgp.x_prob[s];
      if (ux < acc) {
        k = s;
        break;
      }
    }
    const double ut = unif(rng);
    int t = T - 1;
    acc = 0.0;
    for (int c = 0; c < T; ++c) {
      acc += dgp.e(k, c);
      if (ut < acc) {
        t = c;
        break;
      }
    }
    const double eps = gauss(rng);
    out.x.row(static_cast<Eigen::Index>(i)) = dgp.x_points.row(k);
    out.t[i] = t;
    out.y[static_cast<Eigen::Index>(i)] = dgp.mu(k, t) + dgp.sd(k, t) * eps;
  }
  return out;
}

inline Dataset sample(const DgpBundle& bundle, std::size_t n, std::uint64_t seed) {
  return sample(bundle.dgp, n, seed);
}

// ---------------------------------------------------------------------------
// Benchmark designs
// ---------------------------------------------------------------------------

// Randomized access to a two-version treatment whose version mix depends on
// the (binary) group while per-version outcome means do not. The whole
// group contrast of arm means is targeting: Delta[2] = -1/3, all other
// components zero, for the comparison (arm "bundled" vs "none", group g1 vs
// g0).
inline DgpBundle interacted_example(double noise_sd = 1.0) {
  DgpBundle b;
  b.dgp.x_points.resize(2, 1);
  b.dgp.x_points << 0, 1;  // column 0 holds the group id
  b.dgp.x_prob.resize(2);
  b.dgp.x_prob << 0.5, 0.5;
  b.dgp.e.resize(2, 3);
  b.dgp.e.row(0) << 0.5, 1.0 / 6.0, 1.0 / 3.0;  // g0: version 2 favored
  b.dgp.e.row(1) << 0.5, 1.0 / 3.0, 1.0 / 6.0;  // g1: version 1 favored
  b.dgp.mu.resize(2, 3);
  b.dgp.mu.row(0) << 0.0, 1.0, 2.0;
  b.dgp.mu.row(1) << 0.0, 1.0, 2.0;
  b.dgp.noise_sd = Eigen::MatrixXd::Constant(2, 3, noise_sd);
  b.dgp.treatment_labels = {"none", "v1", "v2"};
  b.arm_of = {1, 0, 0};  // arm 0 bundles the two versions, arm 1 is "none"
  b.arm_names = {"bundled", "none"};
  b.group_of_x = {0, 1};
  b.group_names = {"g0", "g1"};
  b.group_column = 0;
  return b;
}

// Randomized treatment versions whose within-group mix covaries with a
// second covariate that also shifts the version-2 effect. For (arm
// "bundled" vs "none", group g1 vs g0): Delta[4] = Delta[4adj] = -1/12,
// all other components zero.
inline DgpBundle covariance_example(double noise_sd = 1.0) {
  DgpBundle b;
  b.dgp.x_points.resize(4, 2);  // columns: (x1, group id)
  b.dgp.x_points << 0, 0, 1, 0, 0, 1, 1, 1;
  b.dgp.x_prob = Eigen::VectorXd::Constant(4, 0.25);
  b.dgp.e.resize(4, 3);
  b.dgp.e.row(0) << 0.5, 0.25, 0.25;             // g0, x1=0
  b.dgp.e.row(1) << 0.5, 0.25, 0.25;             // g0, x1=1
  b.dgp.e.row(2) << 0.5, 1.0 / 6.0, 1.0 / 3.0;   // g1, x1=0
  b.dgp.e.row(3) << 0.5, 1.0 / 3.0, 1.0 / 6.0;   // g1, x1=1
  b.dgp.mu.resize(4, 3);
  b.dgp.mu.row(0) << 0.0, 0.0, -0.5;
  b.dgp.mu.row(1) << 0.0, 0.0, 0.5;
  b.dgp.mu.row(2) << 0.0, 0.0, -0.5;
  b.dgp.mu.row(3) << 0.0, 0.0, 0.5;
  b.dgp.noise_sd = Eigen::MatrixXd::Constant(4, 3, noise_sd);
  b.dgp.treatment_labels = {"none", "v1", "v2"};
  b.arm_of = {1, 0, 0};
  b.arm_names = {"bundled", "none"};
  b.group_of_x = {0, 0, 1, 1};
  b.group_names = {"g0", "g1"};
  b.group_column = 1;
  return b;
}

// Variant of interacted_example whose treated-version means are uniformly
// `shift` higher in group g1, so the aggregate-contrast test has a signal
// with Delta[1] = shift.
inline DgpBundle group_effect_example(double shift = 0.5, double noise_sd = 1.0) {
  DgpBundle b = interacted_example(noise_sd);
  b.dgp.mu(1, 1) += shift;
  b.dgp.mu(1, 2) += shift;
  return b;
}

// Variant whose per-version group contrasts are +delta and -delta with
// equal aggregate version shares, so they cancel in the aggregate contrast:
// Delta[1] = 0 although per-version contrasts are nonzero.
inline DgpBundle offsetting_example(double delta = 0.5, double noise_sd = 1.0) {
  DgpBundle b = interacted_example(noise_sd);
  b.dgp.mu(1, 1) += delta;
  b.dgp.mu(1, 2) -= delta;
  return b;
}

// Finite-sample power design: versions 1..J of a bundled treatment vs an
// untreated arm, binary covariate that is also the group, version means
// rising in the version index for x=1 and lowered by xi_j for x=0 with
// xi_j = effect_size for j <= round(J^support_exponent), else 0.
inline DgpBundle power_design(int j_count, double support_exponent, double effect_size,
                              double noise_sd = 1.0) {
  require(j_count >= 1, errc::invalid_config, "need at least one treated version");
  const int boosted =
      std::min(j_count, std::max(0, static_cast<int>(std::llround(
                                        std::pow(static_cast<double>(j_count), support_exponent)))));
  DgpBundle b;
  b.dgp.x_points.resize(2, 1);
  b.dgp.x_points << 0, 1;
  b.dgp.x_prob.resize(2);
  b.dgp.x_prob << 0.5, 0.5;
  b.dgp.e.resize(2, j_count + 1);
  b.dgp.mu.resize(2, j_count + 1);
  b.dgp.e.col(0).setConstant(0.5);
  b.dgp.mu.col(0).setZero();
  b.dgp.treatment_labels.push_back("none");
  for (int j = 1; j <= j_count; ++j) {
    b.dgp.e.col(j).setConstant(0.5 / static_cast<double>(j_count));
    const double mu1 =
        j_count > 1 ? static_cast<double>(j - 1) / static_cast<double>(j_count - 1) : 0.0;
    const double xi = j <= boosted ? effect_size : 0.0;
    b.dgp.mu(1, j) = mu1;
    b.dgp.mu(0, j) = mu1 - xi;
    b.dgp.treatment_labels.push_back("v" + std::to_string(j));
  }
  b.dgp.noise_sd = Eigen::MatrixXd::Constant(2, j_count + 1, noise_sd);
  b.arm_of.assign(static_cast<std::size_t>(j_count) + 1, 0);
  b.arm_of[0] = 1;
  b.arm_names = {"bundled", "none"};
  b.group_of_x = {0, 1};
  b.group_names = {"g0", "g1"};
  b.group_column = 0;
  return b;
}

// Random small design for property tests. Two arms and two groups over a
// random support; when `randomized_treatment` the granular propensities do
// not depend on the covariate.
inline DgpBundle random_example(std::uint64_t seed, bool randomized_treatment = false) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> s_draw(2, 4);
  std::uniform_int_distribution<int> t_draw(2, 5);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const int S = s_draw(rng);
  const int T = t_draw(rng);

  DgpBundle b;
  b.dgp.x_points.resize(S, 1);
  for (int k = 0; k < S; ++k) b.dgp.x_points(k, 0) = k;
  b.dgp.x_prob.resize(S);
  for (int k = 0; k < S; ++k) b.dgp.x_prob[k] = 0.2 + unif(rng);
  b.dgp.x_prob /= b.dgp.x_prob.sum();

  b.dgp.e.resize(S, T);
  for (int k = 0; k < S; ++k) {
    const int src = randomized_treatment ? 0 : k;
    if (src == k) {
      for (int t = 0; t < T; ++t) b.dgp.e(k, t) = 0.1 + unif(rng);
      b.dgp.e.row(k) /= b.dgp.e.row(k).sum();
    } else {
      b.dgp.e.row(k) = b.dgp.e.row(src);
    }
  }
  b.dgp.mu.resize(S, T);
  b.dgp.noise_sd.resize(S, T);
  for (int k = 0; k < S; ++k)
    for (int t = 0; t < T; ++t) {
      b.dgp.mu(k, t) = -2.0 + 4.0 * unif(rng);
      b.dgp.noise_sd(k, t) = 0.2 + 0.8 * unif(rng);
    }
  for (int t = 0; t < T; ++t) b.dgp.treatment_labels.push_back("t" + std::to_string(t));

  b.arm_of.assign(static_cast<std::size_t>(T), 0);
  for (int t = 0; t < T; ++t) b.arm_of[static_cast<std::size_t>(t)] = unif(rng) < 0.5 ? 0 : 1;
  b.arm_of[0] = 1;  // keep both arms populated
  b.arm_of[1] = 0;
  b.arm_names = {"treated", "reference"};

  b.group_of_x.assign(static_cast<std::size_t>(S), 0);
  for (int k = 0; k < S; ++k) b.group_of_x[static_cast<std::size_t>(k)] = unif(rng) < 0.5 ? 0 : 1;
  b.group_of_x[0] = 0;
  b.group_of_x[S - 1] = 1;
  b.group_names = {"g0", "g1"};
  b.group_column = -1;  // covariate column 0 holds the support index
  return b;
}

// ---------------------------------------------------------------------------
// Population values for the strong-null contrast vector
// ---------------------------------------------------------------------------
namespace detail {

// Moment-kernel inputs evaluated at population truth for a unit at support
// point k with observed treatment t_obs and outcome y, for the slot triple
// (arm a, group g, treatment t). Unreachable propensities are padded so the
// kernels stay finite when the matching indicator is zero.
inline MomentInputs population_inputs(const oracle::PopulationView& pop, int k, int t_obs,
                                      double y, int a, int g, int t) {
  const auto& dgp = pop.dgp();
  MomentInputs in;
  in.y = y;
  if (t >= 0) {
    in.ind_t = t_obs == t ? 1.0 : 0.0;
    const double e = dgp.e(k, t);
    in.e_t_x = e > 0.0 ? e : 1.0;
    in.mu_t_x = dgp.mu(k, t);
  }
  if (a >= 0) {
    in.ind_arm = pop.arm_of(t_obs) == a ? 1.0 : 0.0;
    const double ea = pop.e_arm_x(k, a);
    in.e_arm_x = ea > 0.0 ? ea : 1.0;
    in.e_arm = pop.e_arm(a);
    if (t >= 0) in.e_ta = pop.e_ta(t, a);
  }
  if (g >= 0) {
    in.ind_g = pop.in_group(k, g) ? 1.0 : 0.0;
    in.p_g = pop.p_g(g);
    if (t >= 0) {
      in.mu_t_g = pop.mu_t_g(t, g);
      in.e_t_group = pop.e_t_g(t, g);
    }
    if (a >= 0) {
      in.e_arm_given_g = pop.e_arm_given_g(a, g);
      in.e_arm_and_g = pop.e_ag(a, g);
      if (t >= 0) {
        in.e_ta_g = pop.e_ta_g(t, a, g);
        in.e_ta_mean_g = pop.e_ta_mean_g(t, a, g);
      }
    }
  }
  if (t >= 0) in.mu_t = pop.mu_t(t);
  return in;
}

inline double moment_column(AggregateId id, const MomentInputs& in, double theta) {
  const MomentTriple tr = aggregate_moment(id, in);
  return tr.psi_x * (tr.psi_y - theta * tr.psi_t);
}

}  // namespace detail

// Population targets, score covariance, and aggregate-contrast scale for
// the per-version strong-null contrasts of arm a vs arm a_ref between
// groups g and g_ref.
struct StrongNullPopulation {
  std::vector<int> members;          // treated-arm versions, contrast order
  std::vector<std::string> labels;   // their treatment labels
  Eigen::VectorXd m;                 // population contrast values
  Eigen::MatrixXd sigma;             // covariance of the per-unit scores
  Eigen::VectorXd e_ta;              // population version shares within the arm
  double delta1 = 0.0;               // e_ta . m
  double delta1_sd = 0.0;            // sd of sqrt(n) * (estimator - delta1)
};

inline StrongNullPopulation population_strong_null(const DgpBundle& bundle, int a, int a_ref,
                                                   int g, int g_ref) {
  require(a != a_ref, errc::invalid_config, "arms must differ");
  require(g != g_ref, errc::invalid_config, "groups must differ");
  const oracle::PopulationView pop = bundle.view();
  const auto& dgp = pop.dgp();
  StrongNullPopulation out;
  out.members = pop.arm_members(a);
  const std::vector<int> ref_members = pop.arm_members(a_ref);
  const int J = static_cast<int>(out.members.size());

  double ref_shift = 0.0;
  for (int t : ref_members) ref_shift += pop.e_ta(t, a_ref) * (pop.mu_t_g(t, g) - pop.mu_t_g(t, g_ref));

  out.m.resize(J);
  out.e_ta.resize(J);
  for (int j = 0; j < J; ++j) {
    const int t = out.members[static_cast<std::size_t>(j)];
    out.labels.push_back(dgp.treatment_labels[static_cast<std::size_t>(t)]);
    out.m[j] = pop.mu_t_g(t, g) - pop.mu_t_g(t, g_ref) - ref_shift;
    out.e_ta[j] = pop.e_ta(t, a);
  }
  out.delta1 = out.e_ta.dot(out.m);

  // Per-unit scores are affine in the outcome noise, so the covariance over
  // the population follows from the score at the cell mean plus the noise
  // slope: col = A + B * eps with E[eps] = 0, E[eps^2] = 1.
  const auto cols_at = [&](int k, int t_obs, double y) {
    Eigen::VectorXd cols = Eigen::VectorXd::Zero(J + 1);
    // reference-arm shift shared by every contrast (frozen weights)
    double ref_col = 0.0;
    for (int t : ref_members) {
      const MomentInputs in_g = detail::population_inputs(pop, k, t_obs, y, a_ref, g, t);
      const MomentInputs in_gr = detail::population_inputs(pop, k, t_obs, y, a_ref, g_ref, t);
      ref_col += pop.e_ta(t, a_ref) *
                 (detail::moment_column(AggregateId::mu_t_g, in_g, pop.mu_t_g(t, g)) -
                  detail::moment_column(AggregateId::mu_t_g, in_gr, pop.mu_t_g(t, g_ref)));
    }
    for (int j = 0; j < J; ++j) {
      const int t = out.members[static_cast<std::size_t>(j)];
      const MomentInputs in_g = detail::population_inputs(pop, k, t_obs, y, a, g, t);
      const MomentInputs in_gr = detail::population_inputs(pop, k, t_obs, y, a, g_ref, t);
      cols[j] = detail::moment_column(AggregateId::mu_t_g, in_g, pop.mu_t_g(t, g)) -
                detail::moment_column(AggregateId::mu_t_g, in_gr, pop.mu_t_g(t, g_ref)) - ref_col;
    }
    // aggregate contrast adds version-share variation with frozen contrasts
    double agg = out.e_ta.dot(cols.head(J));
    for (int j = 0; j < J; ++j) {
      const int t = out.members[static_cast<std::size_t>(j)];
      const MomentInputs in = detail::population_inputs(pop, k, t_obs, y, a, g, t);
      agg += out.m[j] * detail::moment_column(AggregateId::e_ta, in, pop.e_ta(t, a));
    }
    cols[J] = agg;
    return cols;
  };

  Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(J + 1, J + 1);
  for (int k = 0; k < dgp.n_support(); ++k)
    for (int t_obs = 0; t_obs < dgp.n_treatments(); ++t_obs) {
      const double w = dgp.x_prob[k] * dgp.e(k, t_obs);
      if (w <= 0.0) continue;
      const Eigen::VectorXd base = cols_at(k, t_obs, dgp.mu(k, t_obs));
      const Eigen::VectorXd slope = cols_at(k, t_obs, dgp.mu(k, t_obs) + 1.0) - base;
      const double s2 = dgp.sd(k, t_obs) * dgp.sd(k, t_obs);
      acc += w * (base * base.transpose() + s2 * (slope * slope.transpose()));
    }
  out.sigma = acc.topLeftCorner(J, J);
  out.delta1_sd = std::sqrt(std::max(0.0, acc(J, J)));
  return out;
}

// ---------------------------------------------------------------------------
// Finite-sample power/size study
// ---------------------------------------------------------------------------
struct PowerStudyConfig {
  std::vector<int> j_grid{2, 4, 8, 16, 32, 64};
  std::size_t n = 1000;
  int replications = 2000;
  double alpha = 0.05;
  double support_exponent = 1.0;  // dense: 1, sparse: 1/2
  double effect_size = 0.4;       // dense: 2/5, sparse: 1/2
  double noise_sd = 1.0;
  bool include_size_rows = true;  // re-run each design with zero effect
  std::uint64_t seed = 1;
  int threads = 0;
  std::string design_name = "dense";
};

struct PowerRow {
  int j_count = 0;
  std::string method;       // "wald", "supremum", "delta1"
  bool null_effect = false; // size row (effect scaled to zero)
  double rejection_rate = 0.0;
  double mc_se = 0.0;
  double analytic = 0.0;  // closed-form local power at the population drift
};

struct PowerStudyResult {
  PowerStudyConfig config;
  std::vector<PowerRow> rows;
};

namespace detail {

// One design's rejection indicators, computed with the true granular
// nuisances (the sampling experiment isolates test behavior from nuisance
// fitting, which separate coverage studies exercise).
struct DesignRates {
  double wald = 0.0, supremum = 0.0, delta1 = 0.0;
};

inline DesignRates power_rates(const DgpBundle& bundle, const StrongNullPopulation& pop_sn,
                               std::size_t n, int reps, double alpha, std::uint64_t seed,
                               int threads) {
  const oracle::PopulationView pop = bundle.view();
  const auto& dgp = pop.dgp();
  const int S = dgp.n_support();
  const int T = dgp.n_treatments();
  const int J = static_cast<int>(pop_sn.members.size());
  const int a = 0, a_ref = 1;
  const int g = 1, g_ref = 0;
  const std::vector<int> ref_members = pop.arm_members(a_ref);

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(pop_sn.sigma);
  require(eig.info() == Eigen::Success, errc::singular_covariance,
          "population covariance eigendecomposition failed");
  const Eigen::VectorXd evals = eig.eigenvalues();
  require(evals.minCoeff() > 1e-12 * std::max(1.0, evals.maxCoeff()), errc::singular_covariance,
          "population contrast covariance is singular");
  const Eigen::MatrixXd evecs = eig.eigenvectors();
  const Eigen::VectorXd scales = pop_sn.sigma.diagonal().cwiseSqrt();

  const double cv_wald = chi2_quantile(1.0 - alpha, J);
  double cv_sup;
  if (J == 1) {
    cv_sup = normal_quantile(1.0 - alpha / 2.0);
  } else {
    const GumbelConstants gc = gumbel_constants(static_cast<std::size_t>(J));
    cv_sup = gc.a + gc.b * gumbel_quantile(1.0 - alpha);
  }
  const double cv_delta1 = normal_quantile(1.0 - alpha / 2.0);

  std::vector<std::uint8_t> rej_wald(static_cast<std::size_t>(reps)),
      rej_sup(static_cast<std::size_t>(reps)), rej_d1(static_cast<std::size_t>(reps));

  parallel_for(static_cast<std::size_t>(reps), threads, [&](std::size_t rep) {
    std::mt19937_64 rng(mix_seed(seed, rep));
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::normal_distribution<double> gauss(0.0, 1.0);

    std::vector<int> uk(n), ut(n);
    std::vector<double> uy(n);
    std::vector<long> count_t(static_cast<std::size_t>(T), 0);
    long n_g = 0, n_gref = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const double ux = unif(rng);
      int k = S - 1;
      double acc = 0.0;
      for (int s = 0; s < S; ++s) {
        acc += dgp.x_prob[s];
        if (ux < acc) {
          k = s;
          break;
        }
      }
      const double utr = unif(rng);
      int t = T - 1;
      acc = 0.0;
      for (int c = 0; c < T; ++c) {
        acc += dgp.e(k, c);
        if (utr < acc) {
          t = c;
          break;
        }
      }
      uk[i] = k;
      ut[i] = t;
      uy[i] = dgp.mu(k, t) + dgp.sd(k, t) * gauss(rng);
      ++count_t[static_cast<std::size_t>(t)];
      if (pop.in_group(k, g)) ++n_g;
      if (pop.in_group(k, g_ref)) ++n_gref;
    }
    require(n_g > 0 && n_gref > 0, errc::empty_group, "a group drew no units");
    long n_arm = 0, n_arm_ref = 0;
    for (int t = 0; t < T; ++t) {
      if (pop.arm_of(t) == a) n_arm += count_t[static_cast<std::size_t>(t)];
      if (pop.arm_of(t) == a_ref) n_arm_ref += count_t[static_cast<std::size_t>(t)];
    }
    require(n_arm > 0 && n_arm_ref > 0, errc::empty_arm, "an arm drew no units");

    // group means of the doubly robust per-version scores
    const auto score = [&](int k, int t_obs, double y, int t) {
      const double mu = dgp.mu(k, t);
      if (t_obs != t) return mu;
      return (y - mu) / dgp.e(k, t) + mu;
    };
    Eigen::MatrixXd mu_hat = Eigen::MatrixXd::Zero(T, 2);  // columns: g, g_ref
    for (std::size_t i = 0; i < n; ++i) {
      const int col = pop.in_group(uk[i], g) ? 0 : (pop.in_group(uk[i], g_ref) ? 1 : -1);
      if (col < 0) continue;
      for (int t = 0; t < T; ++t) {
        if (pop.arm_of(t) != a && pop.arm_of(t) != a_ref) continue;
        mu_hat(t, col) += score(uk[i], ut[i], uy[i], t);
      }
    }
    mu_hat.col(0) /= static_cast<double>(n_g);
    mu_hat.col(1) /= static_cast<double>(n_gref);

    double ref_shift = 0.0;
    for (int t : ref_members)
      ref_shift += static_cast<double>(count_t[static_cast<std::size_t>(t)]) /
                   static_cast<double>(n_arm_ref) * (mu_hat(t, 0) - mu_hat(t, 1));
    Eigen::VectorXd m_hat(J), w_hat(J);
    for (int j = 0; j < J; ++j) {
      const int t = pop_sn.members[static_cast<std::size_t>(j)];
      m_hat[j] = mu_hat(t, 0) - mu_hat(t, 1) - ref_shift;
      w_hat[j] = static_cast<double>(count_t[static_cast<std::size_t>(t)]) /
                 static_cast<double>(n_arm);
    }

    // Wald and supremum statistics against the population covariance
    const Eigen::VectorXd rot = evecs.transpose() * m_hat;
    double wald_stat = 0.0;
    for (int j = 0; j < J; ++j) wald_stat += rot[j] * rot[j] / evals[j];
    wald_stat *= static_cast<double>(n);
    double sup_stat = 0.0;
    for (int j = 0; j < J; ++j)
      sup_stat = std::max(sup_stat, std::sqrt(static_cast<double>(n)) * std::abs(m_hat[j]) /
                                        scales[j]);

    // aggregate contrast with its estimated influence-function variance
    const double delta1_hat = w_hat.dot(m_hat);
    const double p_g_hat = static_cast<double>(n_g) / static_cast<double>(n);
    const double p_gref_hat = static_cast<double>(n_gref) / static_cast<double>(n);
    const double e_arm_hat = static_cast<double>(n_arm) / static_cast<double>(n);
    double sum_col = 0.0, sum_col2 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const int memb = pop.in_group(uk[i], g) ? 0 : (pop.in_group(uk[i], g_ref) ? 1 : -1);
      double col = 0.0;
      double ref_col = 0.0;
      for (int t : ref_members) {
        const double sc = score(uk[i], ut[i], uy[i], t);
        const double wr = static_cast<double>(count_t[static_cast<std::size_t>(t)]) /
                          static_cast<double>(n_arm_ref);
        const double own = memb == 0   ? (sc - mu_hat(t, 0)) / p_g_hat
                           : memb == 1 ? -(sc - mu_hat(t, 1)) / p_gref_hat
                                       : 0.0;
        ref_col += wr * own;
      }
      for (int j = 0; j < J; ++j) {
        const int t = pop_sn.members[static_cast<std::size_t>(j)];
        const double sc = score(uk[i], ut[i], uy[i], t);
        const double own = memb == 0   ? (sc - mu_hat(t, 0)) / p_g_hat
                           : memb == 1 ? -(sc - mu_hat(t, 1)) / p_gref_hat
                                       : 0.0;
        col += w_hat[j] * (own - ref_col);
        const double ind_arm = pop.arm_of(ut[i]) == a ? 1.0 : 0.0;
        const double ind_t = ut[i] == t ? 1.0 : 0.0;
        col += m_hat[j] * (ind_arm / e_arm_hat) * (ind_t - w_hat[j]);
      }
      sum_col += col;
      sum_col2 += col * col;
    }
    const double dn = static_cast<double>(n);
    const double var_col = std::max(0.0, sum_col2 / dn - (sum_col / dn) * (sum_col / dn));
    require(var_col > 0.0, errc::singular_covariance, "aggregate contrast variance vanished");
    const double z = delta1_hat / std::sqrt(var_col / dn);

    rej_wald[rep] = wald_stat > cv_wald ? 1 : 0;
    rej_sup[rep] = sup_stat > cv_sup ? 1 : 0;
    rej_d1[rep] = std::abs(z) > cv_delta1 ? 1 : 0;
  });

  DesignRates out;
  long cw = 0, cs = 0, cd = 0;
  for (int r = 0; r < reps; ++r) {
    cw += rej_wald[static_cast<std::size_t>(r)];
    cs += rej_sup[static_cast<std::size_t>(r)];
    cd += rej_d1[static_cast<std::size_t>(r)];
  }
  out.wald = static_cast<double>(cw) / static_cast<double>(reps);
  out.supremum = static_cast<double>(cs) / static_cast<double>(reps);
  out.delta1 = static_cast<double>(cd) / static_cast<double>(reps);
  return out;
}

}  // namespace detail

inline PowerStudyResult power_study(const PowerStudyConfig& cfg) {
  require(cfg.replications >= 1, errc::invalid_config, "need at least one replication");
  require(cfg.alpha > 0.0 && cfg.alpha < 1.0, errc::invalid_alpha, "alpha must lie in (0,1)");
  PowerStudyResult out;
  out.config = cfg;
  for (std::size_t ji = 0; ji < cfg.j_grid.size(); ++ji) {
    const int J = cfg.j_grid[ji];
    for (int null_effect = 0; null_effect <= (cfg.include_size_rows ? 1 : 0); ++null_effect) {
      const double c = null_effect ? 0.0 : cfg.effect_size;
      const DgpBundle bundle = power_design(J, cfg.support_exponent, c, cfg.noise_sd);
      const StrongNullPopulation pop_sn = population_strong_null(bundle, 0, 1, 1, 0);

      // closed-form comparison values at the population drift
      const double sqrt_n = std::sqrt(static_cast<double>(cfg.n));
      PowerSpec per_version;  // per-version standardized drift
      per_version.alpha = cfg.alpha;
      per_version.e_ta = pop_sn.e_ta;
      per_version.xi =
          std::sqrt(static_cast<double>(J)) *
          (sqrt_n * pop_sn.m.array() / pop_sn.sigma.diagonal().array().sqrt()).matrix();
      PowerSpec aggregate;  // drift on the aggregate-contrast scale
      aggregate.alpha = cfg.alpha;
      aggregate.e_ta = pop_sn.e_ta;
      aggregate.xi = pop_sn.delta1_sd > 0.0
                         ? Eigen::VectorXd(sqrt_n * pop_sn.m / pop_sn.delta1_sd)
                         : Eigen::VectorXd::Zero(pop_sn.m.size());
      const AnalyticPower per_version_power = analytic_power(per_version);
      const AnalyticPower aggregate_power = analytic_power(aggregate);

      const std::uint64_t design_seed =
          mix_seed(cfg.seed, static_cast<std::uint64_t>(J) * 2 + static_cast<std::uint64_t>(null_effect));
      const detail::DesignRates rates = detail::power_rates(
          bundle, pop_sn, cfg.n, cfg.replications, cfg.alpha, design_seed, cfg.threads);

      const auto mc_se = [&](double p) {
        return std::sqrt(std::max(0.0, p * (1.0 - p)) / static_cast<double>(cfg.replications));
      };
      out.rows.push_back({J, "wald", null_effect != 0, rates.wald, mc_se(rates.wald),
                          per_version_power.wald});
      out.rows.push_back({J, "supremum", null_effect != 0, rates.supremum, mc_se(rates.supremum),
                          per_version_power.supremum});
      out.rows.push_back({J, "delta1", null_effect != 0, rates.delta1, mc_se(rates.delta1),
                          aggregate_power.delta1});
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Confidence-interval coverage study
// ---------------------------------------------------------------------------
struct CoverageStudyConfig {
  DgpBundle bundle;
  std::vector<std::string> targets;  // parameter names; empty -> Delta[1] and the d[0] cell
  std::size_t n = 2000;
  int replications = 1000;
  double alpha = 0.05;
  int folds = 5;
  std::uint64_t seed = 1;
  int threads = 0;
  int arm = 0, arm_ref = 1, group = 1, group_ref = 0;
};

struct CoverageRow {
  std::string parameter;
  double truth = 0.0;
  double coverage = 0.0;
  double mc_se = 0.0;
  double ks_distance = 0.0;  // centered p-values against uniform
  double mean_error = 0.0;
  int replication_count = 0;
  int failure_count = 0;
};

struct CoverageStudyResult {
  std::vector<CoverageRow> rows;
};

namespace detail {

inline double population_truth(const oracle::PopulationView& pop, const ParameterId& id, int arm,
                               int arm_ref, int group, int group_ref) {
  const auto delta = [&](int j, int g) {
    return pop.d_components(arm, g)[j] - pop.d_components(arm_ref, g)[j];
  };
  switch (id.level) {
    case ParameterId::Level::cell:
      return pop.d_components(id.arm, id.group)[id.j];
    case ParameterId::Level::arm_contrast:
      return delta(id.j, id.group);
    case ParameterId::Level::group_contrast:
      return delta(id.j, group) - delta(id.j, group_ref);
    case ParameterId::Level::dim_total: {
      double s = 0.0;
      for (int j : {1, 2, 3, 4}) s += delta(j, group) - delta(j, group_ref);
      return s;
    }
    case ParameterId::Level::adim_total: {
      double s = 0.0;
      for (int j : {1, 2, 3, 5, 6}) s += delta(j, group) - delta(j, group_ref);
      return s;
    }
  }
  fail(errc::invalid_config, "unknown parameter level");
}

// Every parameter id the decomposition reports for this comparison, keyed
// by its display name.
inline std::vector<std::pair<std::string, ParameterId>> enumerate_parameters(
    const AggregationScheme& scheme, int arm, int arm_ref, int group, int group_ref) {
  std::vector<std::pair<std::string, ParameterId>> out;
  const int arms[2] = {arm, arm_ref};
  const int groups[2] = {group, group_ref};
  for (int ai = 0; ai < 2; ++ai)
    for (int gi = 0; gi < 2; ++gi)
      for (int j = 0; j < kNumComponents; ++j) {
        ParameterId id{ParameterId::Level::cell, j, arms[ai], groups[gi]};
        out.emplace_back(parameter_name(id, scheme), id);
      }
  for (int gi = 0; gi < 2; ++gi)
    for (int j = 0; j < kNumComponents; ++j) {
      ParameterId id{ParameterId::Level::arm_contrast, j, -1, groups[gi]};
      out.emplace_back(parameter_name(id, scheme), id);
    }
  for (int j = 0; j < kNumComponents; ++j) {
    ParameterId id{ParameterId::Level::group_contrast, j, -1, -1};
    out.emplace_back(parameter_name(id, scheme), id);
  }
  out.emplace_back("dim_total", ParameterId{ParameterId::Level::dim_total, -1, -1, -1});
  out.emplace_back("adim_total", ParameterId{ParameterId::Level::adim_total, -1, -1, -1});
  return out;
}

}  // namespace detail

inline CoverageStudyResult coverage_study(const CoverageStudyConfig& cfg) {
  require(cfg.replications >= 1, errc::invalid_config, "need at least one replication");
  require(cfg.alpha > 0.0 && cfg.alpha < 1.0, errc::invalid_alpha, "alpha must lie in (0,1)");
  const AggregationScheme scheme = cfg.bundle.scheme();
  const oracle::PopulationView pop = cfg.bundle.view();

  std::vector<std::string> targets = cfg.targets;
  if (targets.empty()) {
    targets.push_back(parameter_name(
        ParameterId{ParameterId::Level::group_contrast, 1, -1, -1}, scheme));
    targets.push_back(parameter_name(
        ParameterId{ParameterId::Level::cell, 0, cfg.arm, cfg.group}, scheme));
  }
  const auto ids = detail::enumerate_parameters(scheme, cfg.arm, cfg.arm_ref, cfg.group,
                                                cfg.group_ref);
  std::vector<double> truth(targets.size());
  for (std::size_t k = 0; k < targets.size(); ++k) {
    const auto it = std::find_if(ids.begin(), ids.end(),
                                 [&](const auto& p) { return p.first == targets[k]; });
    require(it != ids.end(), errc::invalid_config,
            "unknown coverage target '" + targets[k] + "'");
    truth[k] = detail::population_truth(pop, it->second, cfg.arm, cfg.arm_ref, cfg.group,
                                        cfg.group_ref);
  }

  const std::size_t n_targets = targets.size();
  const std::size_t reps = static_cast<std::size_t>(cfg.replications);
  Eigen::MatrixXd est(reps, n_targets), se(reps, n_targets);
  std::vector<std::uint8_t> ok(reps, 0);

  parallel_for(reps, cfg.threads, [&](std::size_t rep) {
    try {
      const Dataset data = sample(cfg.bundle, cfg.n, mix_seed(cfg.seed, rep));
      DecompositionOptions opt;
      opt.crossfit.folds = cfg.folds;
      opt.crossfit.seed = mix_seed(mix_seed(cfg.seed, rep), 0x9d5f);
      opt.crossfit.threads = 1;
      opt.arm = cfg.arm;
      opt.arm_ref = cfg.arm_ref;
      opt.group = cfg.group;
      opt.group_ref = cfg.group_ref;
      const DecompositionReport rep_out = run_decomposition(data, scheme, opt);
      for (std::size_t k = 0; k < n_targets; ++k) {
        const ReportEntry& e = rep_out.entry(targets[k]);
        est(static_cast<Eigen::Index>(rep), static_cast<Eigen::Index>(k)) = e.estimate;
        se(static_cast<Eigen::Index>(rep), static_cast<Eigen::Index>(k)) = e.se;
      }
      ok[rep] = 1;
    } catch (const Error&) {
      ok[rep] = 0;
    }
  });

  const double zcrit = normal_quantile(1.0 - cfg.alpha / 2.0);
  CoverageStudyResult out;
  for (std::size_t k = 0; k < n_targets; ++k) {
    CoverageRow row;
    row.parameter = targets[k];
    row.truth = truth[k];
    long covered = 0, used = 0;
    std::vector<double> pvals;
    std::vector<double> errors;
    for (std::size_t r = 0; r < reps; ++r) {
      if (!ok[r]) continue;
      const double e = est(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(k));
      const double s = se(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(k));
      if (!(s > 0.0)) continue;
      ++used;
      errors.push_back(e - truth[k]);
      const double z = (e - truth[k]) / s;
      if (std::abs(z) <= zcrit) ++covered;
      pvals.push_back(two_sided_normal_p(z));
    }
    require(used > 0, errc::invalid_config,
            "no successful replications for target '" + targets[k] + "'");
    row.replication_count = static_cast<int>(used);
    row.failure_count = static_cast<int>(reps) - static_cast<int>(used);
    row.coverage = static_cast<double>(covered) / static_cast<double>(used);
    row.mc_se = std::sqrt(std::max(0.0, row.coverage * (1.0 - row.coverage)) /
                          static_cast<double>(used));
    row.ks_distance = ks_uniform_distance(pvals);
    row.mean_error = pairwise_sum(errors) / static_cast<double>(used);
    out.rows.push_back(std::move(row));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Continuous-dose designs and the partition bias study
// ---------------------------------------------------------------------------

// Dose on [0,1] with conditional density 1 + tilt_x (2t - 1), optional
// shared point masses, and outcome mean offset_x + scale_x * t^2.
struct ContinuousDgp {
  double p_x1 = 0.5;
  double tilt0 = -0.8;
  double tilt1 = 0.8;
  double offset0 = 0.0;
  double offset1 = 0.0;
  double scale0 = 1.0;
  double scale1 = 4.0;
  double noise_sd = 0.5;
  std::vector<double> atom_points;
  std::vector<double> atom_mass;

  double tilt(int x) const { return x == 0 ? tilt0 : tilt1; }
  double mu(double t, int x) const {
    return (x == 0 ? offset0 : offset1) + (x == 0 ? scale0 : scale1) * t * t;
  }
  double density(double t, int x) const { return 1.0 + tilt(x) * (2.0 * t - 1.0); }
  double atom_total() const {
    double s = 0.0;
    for (double m : atom_mass) s += m;
    return s;
  }
  // continuous-part CDF at t (before scaling by 1 - atom mass)
  double cont_cdf(double t, int x) const { return t + tilt(x) * (t * t - t); }

  void check() const {
    require(p_x1 > 0.0 && p_x1 < 1.0, errc::invalid_config, "covariate share must be interior");
    require(std::abs(tilt0) <= 1.0 && std::abs(tilt1) <= 1.0, errc::invalid_config,
            "density tilt must keep the density nonnegative");
    require(atom_points.size() == atom_mass.size(), errc::invalid_config,
            "atom points and masses must pair up");
    double total = 0.0;
    for (std::size_t r = 0; r < atom_points.size(); ++r) {
      require(atom_points[r] > 0.0 && atom_points[r] < 1.0, errc::invalid_config,
              "atoms must lie inside the dose interval");
      require(atom_mass[r] > 0.0, errc::invalid_config, "atom masses must be positive");
      total += atom_mass[r];
    }
    require(total < 1.0, errc::invalid_config, "atom masses must leave continuous mass");
    // quadrature check that each conditional density integrates to one
    for (int x = 0; x < 2; ++x) {
      const int nodes = 4096;
      double acc = 0.0;
      for (int i = 0; i < nodes; ++i) {
        const double lo = static_cast<double>(i) / nodes;
        const double hi = static_cast<double>(i + 1) / nodes;
        acc += 0.5 * (density(lo, x) + density(hi, x)) * (hi - lo);
      }
      require(std::abs(acc * (1.0 - total) + total - 1.0) < 1e-6, errc::invalid_config,
              "dose distribution does not integrate to one");
    }
  }

  double sample_dose(double u, int x) const {
    double acc = 0.0;
    for (std::size_t r = 0; r < atom_points.size(); ++r) {
      acc += atom_mass[r];
      if (u < acc) return atom_points[r];
    }
    const double total = atom_total();
    const double v = std::min(1.0, std::max(0.0, (u - total) / (1.0 - total)));
    const double k = tilt(x);
    if (std::abs(k) < 1e-12) return v;
    const double b = 1.0 - k;
    const double t = (-b + std::sqrt(b * b + 4.0 * k * v)) / (2.0 * k);
    return std::min(1.0, std::max(0.0, t));
  }
};

inline Dataset sample(const ContinuousDgp& dgp, std::size_t n, std::uint64_t seed) {
  dgp.check();
  require(n > 0, errc::invalid_config, "sample size must be positive");
  Dataset out;
  out.y.resize(static_cast<Eigen::Index>(n));
  out.dose.resize(static_cast<Eigen::Index>(n));
  out.x.resize(static_cast<Eigen::Index>(n), 1);
  out.covariate_names = {"x0"};
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    const int x = unif(rng) < dgp.p_x1 ? 1 : 0;
    const double dose = dgp.sample_dose(unif(rng), x);
    out.x(static_cast<Eigen::Index>(i), 0) = x;
    out.dose[static_cast<Eigen::Index>(i)] = dose;
    out.y[static_cast<Eigen::Index>(i)] = dgp.mu(dose, x) + dgp.noise_sd * gauss(rng);
  }
  return out;
}

// Continuous-limit value of the all-dose average (marginal dose density
// paired with the marginal outcome profile), by composite Simpson
// quadrature plus the exact atom part.
inline double true_d0(const ContinuousDgp& dgp) {
  dgp.check();
  const double p0 = 1.0 - dgp.p_x1, p1 = dgp.p_x1;
  const auto integrand = [&](double t) {
    const double fbar = p0 * dgp.density(t, 0) + p1 * dgp.density(t, 1);
    const double mubar = p0 * dgp.mu(t, 0) + p1 * dgp.mu(t, 1);
    return fbar * mubar;
  };
  const int intervals = 1 << 14;
  double acc = integrand(0.0) + integrand(1.0);
  for (int i = 1; i < intervals; ++i) {
    const double t = static_cast<double>(i) / intervals;
    acc += (i % 2 == 1 ? 4.0 : 2.0) * integrand(t);
  }
  double value = (1.0 - dgp.atom_total()) * acc / (3.0 * intervals);
  for (std::size_t r = 0; r < dgp.atom_points.size(); ++r) {
    const double t = dgp.atom_points[r];
    value += dgp.atom_mass[r] * (p0 * dgp.mu(t, 0) + p1 * dgp.mu(t, 1));
  }
  return value;
}

// Exact population value of the same average after replacing the dose by
// partition labels (closed-form per-bin integrals of the polynomial
// density and outcome mean).
inline double population_d0_partitioned(const ContinuousDgp& dgp, const PartitionScheme& part) {
  dgp.check();
  part.check();
  const double p0 = 1.0 - dgp.p_x1, p1 = dgp.p_x1;
  const double cont_scale = 1.0 - dgp.atom_total();
  double value = 0.0;
  for (std::size_t r = 0; r < part.atoms.size(); ++r) {
    const double t = part.atoms[r];
    double mass = 0.0;
    for (std::size_t s = 0; s < dgp.atom_points.size(); ++s)
      if (dgp.atom_points[s] == t) mass += dgp.atom_mass[s];
    if (mass <= 0.0) continue;  // label unused by this DGP
    value += mass * (p0 * dgp.mu(t, 0) + p1 * dgp.mu(t, 1));
  }
  const auto mass_x = [&](double lo, double hi, int x) {
    return dgp.cont_cdf(hi, x) - dgp.cont_cdf(lo, x);
  };
  const auto moment_x = [&](double lo, double hi, int x) {
    // integral of density * (offset + scale t^2) over [lo, hi]
    const double k = dgp.tilt(x);
    const double off = x == 0 ? dgp.offset0 : dgp.offset1;
    const double sc = x == 0 ? dgp.scale0 : dgp.scale1;
    const auto anti = [&](double t) {
      const double quad = t * t * t / 3.0 + k * (t * t * t * t / 2.0 - t * t * t / 3.0);
      return off * dgp.cont_cdf(t, x) + sc * quad;
    };
    return anti(hi) - anti(lo);
  };
  for (int b = 0; b < part.n_bins(); ++b) {
    const double lo = part.edges[static_cast<std::size_t>(b)];
    const double hi = part.edges[static_cast<std::size_t>(b) + 1];
    const double m0 = mass_x(lo, hi, 0), m1 = mass_x(lo, hi, 1);
    const double share = cont_scale * (p0 * m0 + p1 * m1);
    if (share <= 0.0) continue;
    const double mu0 = m0 > 0.0 ? moment_x(lo, hi, 0) / m0 : 0.0;
    const double mu1 = m1 > 0.0 ? moment_x(lo, hi, 1) / m1 : 0.0;
    // marginal-covariate average of the per-bin conditional means
    const double mubar = p0 * (m0 > 0.0 ? mu0 : 0.0) + p1 * (m1 > 0.0 ? mu1 : 0.0);
    value += share * mubar;
  }
  return value;
}

// Equal-mass edges of the population marginal continuous dose law.
inline PartitionScheme population_equal_mass_partition(const ContinuousDgp& dgp, int n_bins) {
  require(n_bins >= 1, errc::invalid_partition, "need at least one bin");
  const double kbar = (1.0 - dgp.p_x1) * dgp.tilt0 + dgp.p_x1 * dgp.tilt1;
  PartitionScheme part;
  part.atoms = dgp.atom_points;
  part.edges.resize(static_cast<std::size_t>(n_bins) + 1);
  part.edges.front() = 0.0;
  part.edges.back() = 1.0;
  for (int k = 1; k < n_bins; ++k) {
    const double v = static_cast<double>(k) / n_bins;
    if (std::abs(kbar) < 1e-12) {
      part.edges[static_cast<std::size_t>(k)] = v;
    } else {
      const double b = 1.0 - kbar;
      part.edges[static_cast<std::size_t>(k)] =
          (-b + std::sqrt(b * b + 4.0 * kbar * v)) / (2.0 * kbar);
    }
  }
  return part;
}

struct PartitionStudyConfig {
  ContinuousDgp dgp;
  std::vector<int> level_grid{2, 4, 8, 16, 32};
  std::size_t n = 100000;
  int replications = 200;
  int folds = 5;
  double clip_floor = 0.0;  // 0 -> default floor
  std::uint64_t seed = 1;
  int threads = 0;
};

struct PartitionRow {
  int levels = 0;
  double abs_mean_gap = 0.0;   // |mean signed gap|: the discretization-bias estimate
  double mean_abs_gap = 0.0;   // mean |gap|, includes per-replication sampling noise
  double mc_se = 0.0;          // standard error of the mean signed gap
  double population_gap = 0.0; // exact bias at population equal-mass edges
};

struct PartitionStudyResult {
  PartitionStudyConfig config;
  double true_value = 0.0;
  double fitted_slope = 0.0;  // log(abs_mean_gap) regressed on log(levels)
  std::vector<PartitionRow> rows;
};

// Estimate of the all-dose average from a discretized dataset via the
// debiased moment pipeline (single arm holding every label, single group).
inline double estimate_all_dose_average(const Dataset& disc, int folds, double clip_floor,
                                        std::uint64_t seed) {
  AggregationScheme scheme;
  scheme.arm_of.assign(static_cast<std::size_t>(disc.n_treatments()), 0);
  scheme.arm_names = {"all"};
  scheme.group_count = 1;
  scheme.group_names = {"all"};
  scheme.group_rule.kind = GroupRule::Kind::callback;
  scheme.group_rule.fn = [](const Eigen::Ref<const Eigen::RowVectorXd>&) { return 0; };

  const ValidationReport val = validate(disc, scheme);
  CrossFitOptions cf;
  cf.folds = folds;
  cf.seed = seed;
  cf.clip_floor = clip_floor;
  cf.threads = 1;
  const NuisanceEstimates nuis = fit_granular(disc, cf);
  const AggregateNuisances agg = fit_aggregates(disc, scheme, val.unit_group, nuis);
  const MomentContext ctx{disc, scheme, val.unit_group, nuis, agg};
  std::vector<double> parts;
  for (int t = 0; t < disc.n_treatments(); ++t)
    parts.push_back(solve_primitive(ctx, 0, 0, t, 8).theta);
  return pairwise_sum(parts);
}

inline PartitionStudyResult partition_study(const PartitionStudyConfig& cfg) {
  require(cfg.replications >= 1, errc::invalid_config, "need at least one replication");
  cfg.dgp.check();
  PartitionStudyResult out;
  out.config = cfg;
  out.true_value = true_d0(cfg.dgp);

  const std::size_t reps = static_cast<std::size_t>(cfg.replications);
  const std::size_t n_levels = cfg.level_grid.size();
  Eigen::MatrixXd gap(reps, n_levels);

  parallel_for(reps, cfg.threads, [&](std::size_t rep) {
    const Dataset base = sample(cfg.dgp, cfg.n, mix_seed(cfg.seed, rep));
    for (std::size_t li = 0; li < n_levels; ++li) {
      const int levels = cfg.level_grid[li];
      const PartitionScheme part =
          equal_mass_partition(base.dose, levels, cfg.dgp.atom_points);
      const Dataset disc = discretize(base, part);
      const double d0 = estimate_all_dose_average(
          disc, cfg.folds, cfg.clip_floor,
          mix_seed(mix_seed(cfg.seed, rep), 0x70617274 + static_cast<std::uint64_t>(levels)));
      gap(static_cast<Eigen::Index>(rep), static_cast<Eigen::Index>(li)) = d0 - out.true_value;
    }
  });

  std::vector<double> log_l, log_gap;
  for (std::size_t li = 0; li < n_levels; ++li) {
    PartitionRow row;
    row.levels = cfg.level_grid[li];
    std::vector<double> signed_gaps, abs_gaps;
    for (std::size_t r = 0; r < reps; ++r) {
      const double v = gap(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(li));
      signed_gaps.push_back(v);
      abs_gaps.push_back(std::abs(v));
    }
    const double mean = pairwise_sum(signed_gaps) / static_cast<double>(reps);
    row.abs_mean_gap = std::abs(mean);
    row.mean_abs_gap = pairwise_sum(abs_gaps) / static_cast<double>(reps);
    std::vector<double> sq;
    for (double v : signed_gaps) sq.push_back((v - mean) * (v - mean));
    const double var = reps > 1 ? pairwise_sum(sq) / static_cast<double>(reps - 1) : 0.0;
    row.mc_se = std::sqrt(var / static_cast<double>(reps));
    row.population_gap =
        population_d0_partitioned(cfg.dgp, population_equal_mass_partition(cfg.dgp, row.levels)) -
        out.true_value;
    if (row.abs_mean_gap > 0.0) {
      log_l.push_back(std::log(static_cast<double>(row.levels)));
      log_gap.push_back(std::log(row.abs_mean_gap));
    }
    out.rows.push_back(row);
  }

  if (log_l.size() >= 2) {
    const double npts = static_cast<double>(log_l.size());
    const double mx = pairwise_sum(log_l) / npts;
    const double my = pairwise_sum(log_gap) / npts;
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < log_l.size(); ++i) {
      sxx += (log_l[i] - mx) * (log_l[i] - mx);
      sxy += (log_l[i] - mx) * (log_gap[i] - my);
    }
    out.fitted_slope = sxy / sxx;
  } else {
    out.fitted_slope = std::numeric_limits<double>::quiet_NaN();
  }
  return out;
}

// ---------------------------------------------------------------------------
// Named study presets
// ---------------------------------------------------------------------------
struct StudyPreset {
  std::string name;
  std::string kind;  // "power" | "coverage" | "partition"
  PowerStudyConfig power;
  CoverageStudyConfig coverage;
  PartitionStudyConfig partition;
};

inline StudyPreset study_preset(const std::string& name, std::uint64_t seed = 20260814,
                                bool full_scale = false) {
  StudyPreset p;
  p.name = name;
  if (name == "figure2-dense" || name == "figure2-sparse") {
    p.kind = "power";
    p.power.seed = seed;
    p.power.replications = full_scale ? 10000 : 2000;
    if (name == "figure2-dense") {
      p.power.support_exponent = 1.0;
      p.power.effect_size = 0.4;
      p.power.design_name = "dense";
    } else {
      p.power.support_exponent = 0.5;
      p.power.effect_size = 0.5;
      p.power.design_name = "sparse";
    }
    return p;
  }
  if (name == "coverage-null") {
    p.kind = "coverage";
    p.coverage.bundle = power_design(4, 1.0, 0.0);
    p.coverage.n = 2000;
    p.coverage.replications = 1000;
    p.coverage.seed = seed;
    return p;
  }
  if (name == "partition-smooth") {
    p.kind = "partition";
    p.partition.seed = seed;
    return p;
  }
  fail(errc::unknown_preset,
       "unknown preset '" + name +
           "' (available: figure2-dense, figure2-sparse, coverage-null, partition-smooth)");
}

}  // namespace hetdecomp::sim
