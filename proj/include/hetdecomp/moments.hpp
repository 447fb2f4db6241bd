#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "hetdecomp/common.hpp"
#include "hetdecomp/model.hpp"
#include "hetdecomp/moment_kernel.hpp"
#include "hetdecomp/nuisance.hpp"

namespace hetdecomp {

// Everything a per-row moment evaluation needs, bundled by reference.
struct MomentContext {
  const Dataset& data;
  const AggregationScheme& scheme;
  const std::vector<int>& unit_group;
  const NuisanceEstimates& nuis;
  const AggregateNuisances& agg;

  std::size_t n() const { return data.n(); }
};

// Assemble the kernel inputs for row i evaluated at (arm a, group g, treatment t).
// Indices may be -1 when a slot is not referenced by the moment being solved;
// the corresponding fields keep safe defaults.
inline MomentInputs build_inputs(const MomentContext& ctx, std::size_t i, int a, int g, int t) {
  const Eigen::Index ii = static_cast<Eigen::Index>(i);
  MomentInputs in;
  in.y = ctx.data.y[ii];
  const int t_i = ctx.data.t[i];
  if (t >= 0) {
    in.ind_t = t_i == t ? 1.0 : 0.0;
    in.e_t_x = ctx.nuis.e(ii, t);
    in.mu_t_x = ctx.nuis.mu(ii, t);
    in.mu_t = ctx.agg.mu_t[t];
    require(in.e_t_x > 1e-6, errc::degenerate_denominator,
            "granular propensity below 1e-6 at row " + std::to_string(i));
  }
  if (a >= 0) {
    in.ind_arm = ctx.scheme.arm_of[static_cast<std::size_t>(t_i)] == a ? 1.0 : 0.0;
    in.e_arm = ctx.agg.e_arm[a];
    double e_arm_x = 0.0;
    for (int tt : ctx.scheme.arm_members(a)) e_arm_x += ctx.nuis.e(ii, tt);
    in.e_arm_x = e_arm_x;
    require(in.e_arm_x > 1e-6, errc::degenerate_denominator,
            "granular arm propensity below 1e-6 at row " + std::to_string(i));
    if (t >= 0) in.e_ta = ctx.agg.e_ta[t];
  }
  if (g >= 0) {
    in.ind_g = ctx.unit_group[i] == g ? 1.0 : 0.0;
    in.p_g = ctx.agg.p_g[g];
    if (t >= 0) {
      in.mu_t_g = ctx.agg.mu_t_g(t, g);
      in.e_t_group = ctx.agg.e_t_g(t, g);
    }
    if (a >= 0) {
      in.e_arm_given_g = ctx.agg.e_arm_g(a, g);
      in.e_arm_and_g = ctx.agg.e_ag(a, g);
      if (t >= 0) {
        in.e_ta_g = ctx.agg.e_ta_g(t, g);
        in.e_ta_mean_g = ctx.agg.e_ta_mean_g(t, g);
      }
    }
  }
  return in;
}

struct LinearMomentResult {
  double theta = 0.0;
  Eigen::VectorXd col;  // psi_x * (psi_y - theta * psi_t); mean-zero by construction
};

// Solve E_n[psi_x (psi_y - theta psi_t)] = 0 for theta and return the
// evaluated influence column. `triple_of(i)` supplies the row moment.
template <class TripleFn>
LinearMomentResult solve_linear_moment(std::size_t n, TripleFn&& triple_of) {
  std::vector<double> xy(n), xt(n), px(n), py(n), pt(n);
  for (std::size_t i = 0; i < n; ++i) {
    MomentTriple tr = triple_of(i);
    px[i] = tr.psi_x;
    py[i] = tr.psi_y;
    pt[i] = tr.psi_t;
    xy[i] = tr.psi_x * tr.psi_y;
    xt[i] = tr.psi_x * tr.psi_t;
  }
  const double num = pairwise_sum(xy);
  const double den = pairwise_sum(xt);
  require(std::abs(den) > 1e-6 * static_cast<double>(n), errc::degenerate_denominator,
          "linear moment has a near-zero denominator");
  LinearMomentResult out;
  out.theta = num / den;
  out.col.resize(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i)
    out.col[static_cast<Eigen::Index>(i)] = px[i] * (py[i] - out.theta * pt[i]);
  require(out.col.allFinite() && std::isfinite(out.theta), errc::non_finite,
          "linear moment produced non-finite values");
  return out;
}

inline LinearMomentResult solve_primitive(const MomentContext& ctx, int a, int g, int t, int p) {
  return solve_linear_moment(ctx.n(), [&](std::size_t i) {
    return primitive_moment(p, build_inputs(ctx, i, a, g, t));
  });
}

// All eight primitives of one (arm, group, treatment) triple, sharing input builds.
inline std::array<LinearMomentResult, 8> solve_primitives(const MomentContext& ctx, int a, int g,
                                                          int t) {
  const std::size_t n = ctx.n();
  std::vector<MomentInputs> inputs(n);
  for (std::size_t i = 0; i < n; ++i) inputs[i] = build_inputs(ctx, i, a, g, t);
  std::array<LinearMomentResult, 8> out;
  for (int p = 1; p <= 8; ++p)
    out[static_cast<std::size_t>(p - 1)] =
        solve_linear_moment(n, [&](std::size_t i) { return primitive_moment(p, inputs[i]); });
  return out;
}

inline LinearMomentResult solve_aggregate(const MomentContext& ctx, AggregateId id, int a, int g,
                                          int t) {
  return solve_linear_moment(ctx.n(), [&](std::size_t i) {
    return aggregate_moment(id, build_inputs(ctx, i, a, g, t));
  });
}

}  // namespace hetdecomp
