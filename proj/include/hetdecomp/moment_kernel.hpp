#pragma once

#include "hetdecomp/common.hpp"

namespace hetdecomp {

// One observation's ingredients for the linear moment components of the
// eight primitive parameters and the aggregate nuisance parameters. All
// plug-in scalars are frozen solutions of their own moment equations.
struct MomentInputs {
  // observation-level values
  double ind_t = 0.0;    // 1(T = t)
  double ind_arm = 0.0;  // 1(T in arm)
  double ind_g = 0.0;    // 1(X in group)
  double y = 0.0;
  double e_t_x = 1.0;    // granular propensity of t at X
  double e_arm_x = 1.0;  // granular arm propensity at X
  double mu_t_x = 0.0;   // granular outcome regression of t at X
  // frozen aggregate plug-ins
  double p_g = 1.0;
  double e_arm = 1.0;
  double e_arm_given_g = 1.0;  // P(T in arm | X in group)
  double e_arm_and_g = 1.0;    // P(T in arm, X in group)
  double mu_t = 0.0;
  double mu_t_g = 0.0;
  double e_ta = 0.0;         // P(T=t | T in arm)
  double e_ta_g = 0.0;       // P(T=t | T in arm, X in group)
  double e_ta_mean_g = 0.0;  // E[e_ta(X) | X in group]
  double e_t_group = 0.0;    // E[e_t(X) | X in group]
};

struct MomentTriple {
  double psi_x;
  double psi_y;
  double psi_t;
};

// Uncentered outcome score: AIPW component whose conditional mean given X
// is mu_t(X).
inline double outcome_score(const MomentInputs& in) {
  return in.ind_t * (in.y - in.mu_t_x) / in.e_t_x + in.mu_t_x;
}

// Uncentered score for E[e_ta(X) | X in group]: conditional mean given X is
// e_ta(X) = e_t(X) / e_arm(X).
inline double arm_share_score(const MomentInputs& in) {
  const double eta_x = in.e_t_x / in.e_arm_x;
  return in.ind_arm * (in.ind_t - eta_x) / in.e_arm_x + eta_x;
}

// Components (psi_x, psi_y, psi_t) of the linear moment
// psi_x * (psi_y - theta * psi_t) for primitive p in 1..8.
inline MomentTriple primitive_moment(int p, const MomentInputs& in) {
  const double score = outcome_score(in);
  switch (p) {
    case 1:
      return {in.ind_g / in.p_g,
              in.ind_arm * in.ind_t / in.e_arm_given_g * in.mu_t_g + in.e_ta_g * score,
              1.0 + in.ind_arm / in.e_arm_given_g};
    case 2:
      return {in.ind_g / in.p_g,
              arm_share_score(in) * in.mu_t_g + in.e_ta_mean_g * score, 2.0};
    case 3: {
      const double eta_x = in.e_t_x / in.e_arm_x;
      return {in.ind_g / in.p_g,
              in.ind_arm * (in.ind_t - eta_x) / in.e_arm_x * in.mu_t_x + eta_x * score, 1.0};
    }
    case 4:
      return {1.0,
              in.ind_arm * in.ind_t / in.e_arm * in.mu_t_g + in.e_ta * (in.ind_g / in.p_g) * score,
              in.ind_arm / in.e_arm + in.ind_g / in.p_g};
    case 5:
      return {1.0,
              in.ind_arm * in.ind_g / in.e_arm_and_g * in.ind_t * in.mu_t + in.e_ta_g * score,
              in.ind_arm * in.ind_g / in.e_arm_and_g + 1.0};
    case 6:
      return {in.ind_g / in.p_g, in.ind_t * in.mu_t_g + in.e_t_group * score, 2.0};
    case 7:
      return {in.ind_g / in.p_g, in.ind_t * in.y, 1.0};
    case 8:
      return {1.0, in.ind_arm * in.ind_t / in.e_arm * in.mu_t + in.e_ta * score,
              in.ind_arm / in.e_arm + 1.0};
    default:
      fail(errc::invalid_config, "primitive index must be 1..8");
  }
}

// Aggregate nuisance parameters solved from the same linear moment shape.
enum class AggregateId {
  e_arm,         // P(T in arm)
  p_group,       // P(X in group)
  e_t,           // P(T = t)
  mu_t,          // E[mu_t(X)]
  e_ta,          // P(T = t | T in arm)
  e_t_g,         // E[e_t(X) | X in group]
  mu_t_g,        // E[mu_t(X) | X in group]
  e_arm_and_g,   // P(T in arm, X in group)
  e_arm_g,       // P(T in arm | X in group)
  m_arm_g,       // E[Y | T in arm, X in group]
  e_ta_g,        // P(T = t | T in arm, X in group)
  e_ta_mean_g,   // E[e_ta(X) | X in group]
};

inline MomentTriple aggregate_moment(AggregateId id, const MomentInputs& in) {
  switch (id) {
    case AggregateId::e_arm: return {1.0, in.ind_arm, 1.0};
    case AggregateId::p_group: return {1.0, in.ind_g, 1.0};
    case AggregateId::e_t: return {1.0, in.ind_t, 1.0};
    case AggregateId::mu_t: return {1.0, outcome_score(in), 1.0};
    case AggregateId::e_ta: return {in.ind_arm / in.e_arm, in.ind_t, 1.0};
    case AggregateId::e_t_g: return {in.ind_g / in.p_g, in.ind_t, 1.0};
    case AggregateId::mu_t_g: return {in.ind_g / in.p_g, outcome_score(in), 1.0};
    case AggregateId::e_arm_and_g: return {1.0, in.ind_arm * in.ind_g, 1.0};
    case AggregateId::e_arm_g: return {in.ind_g / in.p_g, in.ind_arm, 1.0};
    case AggregateId::m_arm_g:
      return {in.ind_arm * in.ind_g / in.e_arm_and_g, in.y, 1.0};
    case AggregateId::e_ta_g:
      return {in.ind_arm * in.ind_g / in.e_arm_and_g, in.ind_t, 1.0};
    case AggregateId::e_ta_mean_g:
      return {in.ind_g / in.p_g, arm_share_score(in), 1.0};
  }
  fail(errc::invalid_config, "unknown aggregate id");
}

}  // namespace hetdecomp
