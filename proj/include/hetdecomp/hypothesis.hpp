#pragma once

#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "hetdecomp/common.hpp"
#include "hetdecomp/decomp.hpp"
#include "hetdecomp/moments.hpp"
#include "hetdecomp/stats.hpp"

namespace hetdecomp {

struct StrongNullResult {
  std::string method;  // "wald", "supremum", or "delta1"
  double statistic = 0.0;
  double critical_value = 0.0;
  double p_value = 1.0;
  int J = 0;
  double alpha = 0.05;
  bool reject = false;
};

// Per-version between-group mean differences, net of the reference arm's
// share-weighted difference, with the joint covariance of their influence
// columns. These are the inputs of the strong-homogeneity tests.
struct StrongNullInputs {
  Eigen::VectorXd m;      // J contrasts, one per treatment in the tested arm
  Eigen::MatrixXd sigma;  // J x J, E_n[col col']
  std::size_t n = 0;
  std::vector<std::string> labels;
};

inline StrongNullInputs strong_null_contrasts(const MomentContext& ctx, int a, int a_ref, int g,
                                              int g_ref) {
  require(a != a_ref, errc::invalid_config, "strong-null test needs two distinct arms");
  require(g != g_ref, errc::invalid_config, "strong-null test needs two distinct groups");
  const std::size_t n = ctx.n();
  const auto members = ctx.scheme.arm_members(a);
  const auto ref_members = ctx.scheme.arm_members(a_ref);
  const int J = static_cast<int>(members.size());

  // reference-arm aggregate: share-weighted between-group difference
  double ref_value = 0.0;
  Eigen::VectorXd ref_col = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
  for (int t : ref_members) {
    const double w = ctx.agg.e_ta[t];
    LinearMomentResult hi = solve_aggregate(ctx, AggregateId::mu_t_g, -1, g, t);
    LinearMomentResult lo = solve_aggregate(ctx, AggregateId::mu_t_g, -1, g_ref, t);
    ref_value += w * (hi.theta - lo.theta);
    ref_col += w * (hi.col - lo.col);
  }

  StrongNullInputs out;
  out.n = n;
  out.m.resize(J);
  out.labels.reserve(static_cast<std::size_t>(J));
  Eigen::MatrixXd cols(static_cast<Eigen::Index>(n), J);
  for (int k = 0; k < J; ++k) {
    const int t = members[static_cast<std::size_t>(k)];
    out.labels.push_back(ctx.data.treatment_labels[static_cast<std::size_t>(t)]);
    LinearMomentResult hi = solve_aggregate(ctx, AggregateId::mu_t_g, -1, g, t);
    LinearMomentResult lo = solve_aggregate(ctx, AggregateId::mu_t_g, -1, g_ref, t);
    out.m[k] = (hi.theta - lo.theta) - ref_value;
    cols.col(k) = (hi.col - lo.col) - ref_col;
  }

  out.sigma.resize(J, J);
  std::vector<double> prod(n);
  for (int p = 0; p < J; ++p)
    for (int q = p; q < J; ++q) {
      for (std::size_t i = 0; i < n; ++i)
        prod[i] = cols(static_cast<Eigen::Index>(i), p) * cols(static_cast<Eigen::Index>(i), q);
      const double v = pairwise_sum(prod) / static_cast<double>(n);
      out.sigma(p, q) = v;
      out.sigma(q, p) = v;
    }
  return out;
}

// Quadratic-form test: n * m' sigma^{-1} m against the chi-square(J) quantile.
inline StrongNullResult wald_test(const Eigen::VectorXd& m, const Eigen::MatrixXd& sigma,
                                  std::size_t n, double alpha) {
  require(alpha > 0.0 && alpha < 1.0, errc::invalid_alpha, "alpha must lie in (0,1)");
  const int J = static_cast<int>(m.size());
  require(J >= 1 && sigma.rows() == J && sigma.cols() == J, errc::invalid_config,
          "covariance must be J x J");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sigma);
  const double max_ev = eig.eigenvalues().maxCoeff();
  require(max_ev > 0.0 && eig.eigenvalues().minCoeff() > 1e-10 * max_ev,
          errc::singular_covariance, "contrast covariance is numerically singular");
  const Eigen::VectorXd w = eig.eigenvectors().transpose() * m;
  StrongNullResult r;
  r.method = "wald";
  r.J = J;
  r.alpha = alpha;
  r.statistic = static_cast<double>(n) * (w.array().square() / eig.eigenvalues().array()).sum();
  r.critical_value = chi2_quantile(1.0 - alpha, J);
  r.p_value = 1.0 - chi2_cdf(r.statistic, J);
  r.reject = r.statistic > r.critical_value;
  return r;
}

// Maximum-statistic test with extreme-value calibration; exact normal
// reference when only one contrast is tested.
inline StrongNullResult supremum_test(const Eigen::VectorXd& m, const Eigen::VectorXd& scales,
                                      std::size_t n, double alpha) {
  require(alpha > 0.0 && alpha < 1.0, errc::invalid_alpha, "alpha must lie in (0,1)");
  const int J = static_cast<int>(m.size());
  require(J >= 1 && scales.size() == J, errc::invalid_config,
          "need one positive scale per contrast");
  require(scales.minCoeff() > 0.0, errc::singular_covariance,
          "supremum test needs positive scales");
  StrongNullResult r;
  r.method = "supremum";
  r.J = J;
  r.alpha = alpha;
  const double sqrt_n = std::sqrt(static_cast<double>(n));
  r.statistic = (sqrt_n * m.array().abs() / scales.array()).maxCoeff();
  if (J == 1) {
    r.critical_value = normal_quantile(1.0 - alpha / 2.0);
    r.p_value = two_sided_normal_p(r.statistic);
  } else {
    const GumbelConstants gc = gumbel_constants(J);
    r.critical_value = gc.a + gc.b * gumbel_quantile(1.0 - alpha);
    r.p_value = 1.0 - gumbel_cdf((r.statistic - gc.a) / gc.b);
  }
  r.reject = r.statistic > r.critical_value;
  return r;
}

inline StrongNullResult wald_test(const StrongNullInputs& in, double alpha) {
  return wald_test(in.m, in.sigma, in.n, alpha);
}

inline StrongNullResult supremum_test(const StrongNullInputs& in, double alpha) {
  return supremum_test(in.m, in.sigma.diagonal().array().sqrt().matrix(), in.n, alpha);
}

// Two-sided z-test of the leading group-contrast component.
inline StrongNullResult delta1_test(const DecompositionReport& rep, double alpha) {
  require(alpha > 0.0 && alpha < 1.0, errc::invalid_alpha, "alpha must lie in (0,1)");
  const ReportEntry& e = rep.entry("Delta[1]");
  StrongNullResult r;
  r.method = "delta1";
  r.J = 1;
  r.alpha = alpha;
  r.statistic = std::abs(e.z);
  r.critical_value = normal_quantile(1.0 - alpha / 2.0);
  r.p_value = e.p;
  r.reject = r.statistic > r.critical_value;
  return r;
}

// Closed-form local power at standardized alternatives xi.
struct PowerSpec {
  Eigen::VectorXd xi;    // length J, standardized local alternatives
  Eigen::VectorXd e_ta;  // length J, within-arm share weights
  double alpha = 0.05;
};

struct AnalyticPower {
  double wald = 0.0;
  double supremum = 0.0;
  double delta1 = 0.0;
};

inline AnalyticPower analytic_power(const PowerSpec& spec) {
  require(spec.alpha > 0.0 && spec.alpha < 1.0, errc::invalid_alpha, "alpha must lie in (0,1)");
  const int J = static_cast<int>(spec.xi.size());
  require(J >= 1, errc::invalid_config, "power spec needs at least one contrast");
  require(spec.e_ta.size() == J, errc::invalid_config, "share weights must match xi length");
  const double dJ = static_cast<double>(J);
  AnalyticPower out;

  const double s2 = spec.xi.squaredNorm();
  const double scale = std::sqrt(1.0 + 2.0 * s2 / dJ);
  out.wald = 1.0 - normal_cdf(normal_quantile(1.0 - spec.alpha) / scale -
                              (1.0 / std::sqrt(2.0 * dJ)) * (s2 / dJ) / scale);

  const double xmax = J > 0 ? spec.xi.cwiseAbs().maxCoeff() : 0.0;
  if (J == 1) {
    out.supremum = 1.0 - normal_cdf(normal_quantile(1.0 - spec.alpha / 2.0) - xmax) +
                   normal_cdf(normal_quantile(spec.alpha / 2.0) - xmax);
  } else {
    out.supremum = 1.0 - gumbel_cdf(gumbel_quantile(1.0 - spec.alpha) -
                                    std::sqrt(2.0 * std::log(dJ) / dJ) * xmax);
  }

  const double shift = spec.e_ta.dot(spec.xi);
  out.delta1 = 1.0 - normal_cdf(normal_quantile(1.0 - spec.alpha / 2.0) - shift) +
               normal_cdf(normal_quantile(spec.alpha / 2.0) - shift);
  return out;
}

}  // namespace hetdecomp
