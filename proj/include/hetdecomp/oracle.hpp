#pragma once

#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "hetdecomp/common.hpp"

namespace hetdecomp::oracle {

// Finite-support data generating process: covariate support points with
// probabilities, granular treatment probabilities and outcome means per
// cell, and a mean-zero noise scale per cell. Only the means enter the
// population estimands; the noise scale is used by samplers and by the
// population influence-variance evaluator.
struct DiscreteDgp {
  Eigen::MatrixXd x_points;  // S x d covariate support
  Eigen::VectorXd x_prob;    // S
  Eigen::MatrixXd e;         // S x T, rows sum to 1
  Eigen::MatrixXd mu;        // S x T
  Eigen::MatrixXd noise_sd;  // S x T
  std::vector<std::string> treatment_labels;

  int n_support() const { return static_cast<int>(x_prob.size()); }
  int n_treatments() const { return static_cast<int>(e.cols()); }

  void check() const {
    require(x_prob.size() > 0, errc::invalid_config, "dgp needs covariate support");
    require(std::abs(x_prob.sum() - 1.0) < 1e-12, errc::invalid_config,
            "covariate probabilities must sum to 1");
    require(x_prob.minCoeff() > 0.0, errc::invalid_config,
            "covariate probabilities must be positive");
    require(e.rows() == x_prob.size() && mu.rows() == x_prob.size(), errc::invalid_config,
            "dgp tables must match the covariate support");
    require(e.cols() == mu.cols() && e.cols() > 0, errc::invalid_config,
            "dgp tables must share the treatment alphabet");
    for (Eigen::Index k = 0; k < e.rows(); ++k)
      require(std::abs(e.row(k).sum() - 1.0) < 1e-12 && e.row(k).minCoeff() >= 0.0,
              errc::invalid_config, "propensity rows must be distributions");
    if (noise_sd.size() > 0)
      require(noise_sd.rows() == e.rows() && noise_sd.cols() == e.cols(), errc::invalid_config,
              "noise table must match e/mu tables");
  }

  double sd(int k, int t) const { return noise_sd.size() == 0 ? 0.0 : noise_sd(k, t); }
};

// Component index within a decomposition: the stratified-experiment levels
// 0..3, the raw covariance remainder (4), its adjusted counterpart (4'),
// and the aggregation-weighting remainder (5).
enum class DIndex : int { d0 = 0, d1, d2, d3, d4, d4adj, d5 };
inline constexpr int kNumD = kNumComponents;
inline const char* d_index_name(int j) { return component_label(j); }

// Exact population aggregates for a finite DGP under an arm map over
// treatment codes and a group map over covariate support points.
class PopulationView {
 public:
  PopulationView(const DiscreteDgp& dgp, std::vector<int> arm_of, std::vector<int> group_of_x)
      : dgp_(dgp), arm_of_(std::move(arm_of)), gx_(std::move(group_of_x)) {
    dgp_.check();
    require(static_cast<int>(arm_of_.size()) == dgp_.n_treatments(), errc::invalid_config,
            "arm map must cover the treatment alphabet");
    require(static_cast<int>(gx_.size()) == dgp_.n_support(), errc::invalid_config,
            "group map must cover the covariate support");
  }

  const DiscreteDgp& dgp() const { return dgp_; }
  int arm_of(int t) const { return arm_of_[static_cast<std::size_t>(t)]; }
  int group_of_x(int k) const { return gx_[static_cast<std::size_t>(k)]; }

  std::vector<int> arm_members(int a) const {
    std::vector<int> out;
    for (int t = 0; t < dgp_.n_treatments(); ++t)
      if (arm_of_[static_cast<std::size_t>(t)] == a) out.push_back(t);
    require(!out.empty(), errc::empty_arm, "arm has no member treatments");
    return out;
  }

  bool in_group(int k, int g) const { return gx_[static_cast<std::size_t>(k)] == g; }

  double p_g(int g) const {
    double s = 0.0;
    for (int k = 0; k < dgp_.n_support(); ++k)
      if (in_group(k, g)) s += dgp_.x_prob[k];
    require(s > 0.0, errc::empty_group, "group has zero probability");
    return s;
  }

  double e_arm_x(int k, int a) const {
    double s = 0.0;
    for (int t : arm_members(a)) s += dgp_.e(k, t);
    return s;
  }

  double e_t(int t) const {
    double s = 0.0;
    for (int k = 0; k < dgp_.n_support(); ++k) s += dgp_.x_prob[k] * dgp_.e(k, t);
    return s;
  }

  double e_arm(int a) const {
    double s = 0.0;
    for (int t : arm_members(a)) s += e_t(t);
    return s;
  }

  double mu_t(int t) const {
    double s = 0.0;
    for (int k = 0; k < dgp_.n_support(); ++k) s += dgp_.x_prob[k] * dgp_.mu(k, t);
    return s;
  }

  double e_t_g(int t, int g) const {  // E[e_t(X) | X in group]
    double s = 0.0;
    for (int k = 0; k < dgp_.n_support(); ++k)
      if (in_group(k, g)) s += dgp_.x_prob[k] * dgp_.e(k, t);
    return s / p_g(g);
  }

  double mu_t_g(int t, int g) const {  // E[mu_t(X) | X in group]
    double s = 0.0;
    for (int k = 0; k < dgp_.n_support(); ++k)
      if (in_group(k, g)) s += dgp_.x_prob[k] * dgp_.mu(k, t);
    return s / p_g(g);
  }

  double e_ag(int a, int g) const {  // P(T in arm, X in group)
    double s = 0.0;
    for (int k = 0; k < dgp_.n_support(); ++k)
      if (in_group(k, g)) s += dgp_.x_prob[k] * e_arm_x(k, a);
    return s;
  }

  double e_arm_given_g(int a, int g) const { return e_ag(a, g) / p_g(g); }

  double e_ta(int t, int a) const { return e_t(t) / e_arm(a); }  // P(T=t | T in arm)

  double e_ta_g(int t, int a, int g) const {  // P(T=t | T in arm, X in group)
    return e_t_g(t, g) * p_g(g) / e_ag(a, g);
  }

  double e_ta_mean_g(int t, int a, int g) const {  // E[e_ta(X) | X in group]
    double s = 0.0;
    for (int k = 0; k < dgp_.n_support(); ++k)
      if (in_group(k, g)) s += dgp_.x_prob[k] * dgp_.e(k, t) / e_arm_x(k, a);
    return s / p_g(g);
  }

  double m_a_g(int a, int g) const {  // E[Y | T in arm, X in group]
    double s = 0.0;
    for (int k = 0; k < dgp_.n_support(); ++k)
      if (in_group(k, g))
        for (int t : arm_members(a)) s += dgp_.x_prob[k] * dgp_.e(k, t) * dgp_.mu(k, t);
    return s / e_ag(a, g);
  }

  double m_adj_a_g(int a, int g) const {  // E[ E[Y | T in arm, X] | X in group]
    double s = 0.0;
    for (int k = 0; k < dgp_.n_support(); ++k)
      if (in_group(k, g))
        for (int t : arm_members(a))
          s += dgp_.x_prob[k] * dgp_.mu(k, t) * dgp_.e(k, t) / e_arm_x(k, a);
    return s / p_g(g);
  }

  // The eight primitive parameters theta_{a,g,t,1..8}.
  double theta(int a, int g, int t, int p) const {
    switch (p) {
      case 1: return e_ta_g(t, a, g) * mu_t_g(t, g);
      case 2: return e_ta_mean_g(t, a, g) * mu_t_g(t, g);
      case 3: {
        double s = 0.0;
        for (int k = 0; k < dgp_.n_support(); ++k)
          if (in_group(k, g))
            s += dgp_.x_prob[k] * (dgp_.e(k, t) / e_arm_x(k, a)) * dgp_.mu(k, t);
        return s / p_g(g);
      }
      case 4: return e_ta(t, a) * mu_t_g(t, g);
      case 5: return e_ta_g(t, a, g) * mu_t(t);
      case 6: return e_t_g(t, g) * mu_t_g(t, g);
      case 7: {
        double s = 0.0;
        for (int k = 0; k < dgp_.n_support(); ++k)
          if (in_group(k, g)) s += dgp_.x_prob[k] * dgp_.e(k, t) * dgp_.mu(k, t);
        return s / p_g(g);
      }
      case 8: return e_ta(t, a) * mu_t(t);
      default: fail(errc::invalid_config, "primitive index must be 1..8");
    }
  }

  // Definitional component values (not assembled from primitives).
  Eigen::VectorXd d_components(int a, int g) const {
    Eigen::VectorXd d = Eigen::VectorXd::Zero(kNumD);
    const double pa_g = e_arm_given_g(a, g);
    for (int t : arm_members(a)) {
      const double eta = e_ta(t, a);
      const double eta_gv = e_ta_g(t, a, g);
      const double eta_mean = e_ta_mean_g(t, a, g);
      const double mt = mu_t(t);
      const double mtg = mu_t_g(t, g);
      d[0] += eta * mt;
      d[1] += eta * (mtg - mt);
      d[2] += (eta_gv - eta) * mt;
      d[3] += (eta_gv - eta) * (mtg - mt);
      // conditional covariances over the group
      double cov_e_mu = 0.0, cov_eta_mu = 0.0;
      for (int k = 0; k < dgp_.n_support(); ++k) {
        if (!in_group(k, g)) continue;
        const double w = dgp_.x_prob[k] / p_g(g);
        cov_e_mu += w * (dgp_.e(k, t) - e_t_g(t, g)) * (dgp_.mu(k, t) - mtg);
        cov_eta_mu += w * (dgp_.e(k, t) / e_arm_x(k, a) - eta_mean) * (dgp_.mu(k, t) - mtg);
      }
      d[4] += cov_e_mu / pa_g;
      d[5] += cov_eta_mu;
      d[6] += (eta_mean - eta_gv) * mtg;
    }
    return d;
  }

 private:
  DiscreteDgp dgp_;
  std::vector<int> arm_of_;
  std::vector<int> gx_;
};

// Full population decomposition for one (arm, reference arm, group,
// reference group) comparison.
struct PopulationDecomposition {
  Eigen::VectorXd d_ag, d_ag_ref, d_refg, d_refg_ref;  // kNumD each
  Eigen::VectorXd delta_g, delta_g_ref;                // d_j(a,.) - d_j(a_ref,.)
  Eigen::VectorXd Delta;                               // delta_g - delta_g_ref
  double dim = 0.0;       // four-cell contrast of m_a(group)
  double adim = 0.0;      // four-cell contrast of adjusted means
  double dim_sum = 0.0;   // Delta_1 + Delta_2 + Delta_3 + Delta_4
  double adim_sum = 0.0;  // Delta_1 + Delta_2 + Delta_3 + Delta_4' + Delta_5
};

inline PopulationDecomposition population_decomposition(const PopulationView& pop, int a,
                                                        int a_ref, int g, int g_ref) {
  PopulationDecomposition out;
  out.d_ag = pop.d_components(a, g);
  out.d_ag_ref = pop.d_components(a, g_ref);
  out.d_refg = pop.d_components(a_ref, g);
  out.d_refg_ref = pop.d_components(a_ref, g_ref);
  out.delta_g = out.d_ag - out.d_refg;
  out.delta_g_ref = out.d_ag_ref - out.d_refg_ref;
  out.Delta = out.delta_g - out.delta_g_ref;
  out.dim = pop.m_a_g(a, g) - pop.m_a_g(a_ref, g) - pop.m_a_g(a, g_ref) + pop.m_a_g(a_ref, g_ref);
  out.adim = pop.m_adj_a_g(a, g) - pop.m_adj_a_g(a_ref, g) - pop.m_adj_a_g(a, g_ref) +
             pop.m_adj_a_g(a_ref, g_ref);
  const auto& D = out.Delta;
  out.dim_sum = D[1] + D[2] + D[3] + D[4];
  out.adim_sum = D[1] + D[2] + D[3] + D[5] + D[6];
  return out;
}

inline PopulationDecomposition population_decomposition(const DiscreteDgp& dgp,
                                                        const std::vector<int>& arm_of,
                                                        const std::vector<int>& group_of_x, int a,
                                                        int a_ref, int g, int g_ref) {
  PopulationView pop(dgp, arm_of, group_of_x);
  return population_decomposition(pop, a, a_ref, g, g_ref);
}

// Interaction coefficient of the population projection of Y on
// (1, arm indicator, group indicator, interaction), restricted to units in
// either arm. The design is saturated, so the coefficient equals the
// four-cell mean contrast.
inline double population_regression_beta3(const PopulationView& pop, int a, int a_ref, int g,
                                          int g_ref) {
  return pop.m_a_g(a, g) - pop.m_a_g(a_ref, g) - pop.m_a_g(a, g_ref) + pop.m_a_g(a_ref, g_ref);
}

}  // namespace hetdecomp::oracle
