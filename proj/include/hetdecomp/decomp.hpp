#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "hetdecomp/common.hpp"
#include "hetdecomp/model.hpp"
#include "hetdecomp/moments.hpp"
#include "hetdecomp/nuisance.hpp"
#include "hetdecomp/stats.hpp"

namespace hetdecomp {

// One reported parameter: a component of a cell-level decomposition, of an
// arm contrast within a group, of the cross-group contrast, or one of the two
// component totals.
struct ParameterId {
  enum class Level { cell, arm_contrast, group_contrast, dim_total, adim_total };
  Level level = Level::cell;
  int j = 0;       // component index, see component_label()
  int arm = -1;    // Level::cell only
  int group = -1;  // Level::cell and Level::arm_contrast
};

inline std::string parameter_name(const ParameterId& id, const AggregationScheme& scheme) {
  switch (id.level) {
    case ParameterId::Level::cell:
      return "d[" + std::string(component_label(id.j)) + "](" + scheme.arm_names[static_cast<std::size_t>(id.arm)] +
             "," + scheme.group_name(id.group) + ")";
    case ParameterId::Level::arm_contrast:
      return "delta[" + std::string(component_label(id.j)) + "](" + scheme.group_name(id.group) + ")";
    case ParameterId::Level::group_contrast:
      return "Delta[" + std::string(component_label(id.j)) + "]";
    case ParameterId::Level::dim_total:
      return "dim_total";
    case ParameterId::Level::adim_total:
      return "adim_total";
  }
  return "";
}

// Estimates plus per-unit influence columns for a set of parameters, with the
// scaled covariance block used for joint inference.
struct InfluenceMatrix {
  std::vector<ParameterId> ids;
  std::vector<std::string> names;
  Eigen::VectorXd theta;  // P
  Eigen::MatrixXd cols;   // n x P
  Eigen::MatrixXd sigma;  // P x P, E_n[col_p col_q]

  std::size_t n() const { return static_cast<std::size_t>(cols.rows()); }

  int find(const std::string& name) const {
    for (std::size_t p = 0; p < names.size(); ++p)
      if (names[p] == name) return static_cast<int>(p);
    fail(errc::invalid_config, "unknown parameter '" + name + "'");
  }
};

struct Inference {
  double estimate = 0.0;
  double se = 0.0;
  double z = 0.0;
  double p = 1.0;
};

// Normal inference for the linear contrast c'theta; throws on zero variance.
inline Inference infer(const Eigen::VectorXd& c, const InfluenceMatrix& m) {
  require(c.size() == m.theta.size(), errc::invalid_config,
          "contrast length does not match the parameter count");
  require(c.allFinite() && c.squaredNorm() > 0.0, errc::invalid_config,
          "contrast must be finite and nonzero");
  Inference out;
  out.estimate = c.dot(m.theta);
  const double var = c.dot(m.sigma * c) / static_cast<double>(m.n());
  require(var > 1e-24, errc::singular_covariance, "contrast has zero variance");
  out.se = std::sqrt(var);
  out.z = out.estimate / out.se;
  out.p = two_sided_normal_p(out.z);
  return out;
}

// The seven components of one (arm, group) cell with their influence columns.
struct ComponentSet {
  Eigen::VectorXd d;     // kNumComponents
  Eigen::MatrixXd cols;  // n x kNumComponents
};

// Assemble the cell-level components from the eight primitives of each
// treatment in the arm. Indices: 0 baseline, 1 group mean shift, 2 average
// share shift, 3 share-mean interaction, 4 within-group share/outcome
// covariance (ratio form, influence by the quotient chain rule), 5 its
// regression-adjusted counterpart, 6 the aggregation-weighting remainder.
inline ComponentSet assemble_components(const MomentContext& ctx, int a, int g, int threads = 1) {
  const std::size_t n = ctx.n();
  const auto members = ctx.scheme.arm_members(a);
  ComponentSet cs;
  cs.d = Eigen::VectorXd::Zero(kNumComponents);
  cs.cols = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), kNumComponents);

  const LinearMomentResult denom = solve_aggregate(ctx, AggregateId::e_arm_g, a, g, -1);
  const double pa_g = denom.theta;
  require(pa_g > 1e-12, errc::degenerate_denominator,
          "arm share within group is numerically zero");

  std::vector<std::array<LinearMomentResult, 8>> per_t(members.size());
  parallel_for(members.size(), threads,
               [&](std::size_t m) { per_t[m] = solve_primitives(ctx, a, g, members[m]); });

  double cov_sum = 0.0;
  Eigen::VectorXd cov_col = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
  for (std::size_t m = 0; m < members.size(); ++m) {
    const auto& th = per_t[m];
    auto v = [&](int p) { return th[static_cast<std::size_t>(p - 1)].theta; };
    auto c = [&](int p) -> const Eigen::VectorXd& { return th[static_cast<std::size_t>(p - 1)].col; };
    cs.d[0] += v(8);
    cs.cols.col(0) += c(8);
    cs.d[1] += v(4) - v(8);
    cs.cols.col(1) += c(4) - c(8);
    cs.d[2] += v(5) - v(8);
    cs.cols.col(2) += c(5) - c(8);
    cs.d[3] += v(1) - v(5) - v(4) + v(8);
    cs.cols.col(3) += c(1) - c(5) - c(4) + c(8);
    cov_sum += v(7) - v(6);
    cov_col += c(7) - c(6);
    cs.d[5] += v(3) - v(2);
    cs.cols.col(5) += c(3) - c(2);
    cs.d[6] += v(2) - v(1);
    cs.cols.col(6) += c(2) - c(1);
  }
  cs.d[4] = cov_sum / pa_g;
  cs.cols.col(4) = cov_col / pa_g - (cov_sum / (pa_g * pa_g)) * denom.col;
  return cs;
}

struct IdentityDiagnostics {
  double dim_components = 0.0;  // Delta[1..4] total
  double dim_plain = 0.0;       // raw four-cell mean contrast
  double dim_gap = 0.0;
  double adim_components = 0.0;  // Delta[1..3,4adj,5] total
  double adim_plugin = 0.0;      // composition-weighted plug-in contrast
  double adim_gap = 0.0;
  bool dim_flag = false;
  bool adim_flag = false;
};

struct RunDiagnostics {
  double clip_floor = 0.0;
  long clip_count = 0;
  double max_clip_shift = 0.0;
  long min_cell_count = 0;
  std::vector<std::string> warnings;
};

struct ReportEntry {
  ParameterId id;
  std::string name;
  double estimate = 0.0;
  double se = 0.0;
  double z = 0.0;
  double p = 1.0;
};

struct DecompositionReport {
  std::vector<ReportEntry> entries;
  InfluenceMatrix matrix;  // full covariance block for post-hoc contrasts
  IdentityDiagnostics identity;
  RunDiagnostics diagnostics;
  std::size_t n = 0;
  std::uint64_t seed = 0;
  int arm = 0, arm_ref = 1, group = 0, group_ref = 1;

  const ReportEntry& entry(const std::string& name) const {
    for (const auto& e : entries)
      if (e.name == name) return e;
    fail(errc::invalid_config, "unknown parameter '" + name + "'");
  }
};

struct DecompositionOptions {
  CrossFitOptions crossfit;
  ValidationOptions validation;
  int arm = 0, arm_ref = 1;
  int group = 0, group_ref = 1;
};

namespace detail {

// Composition-weighted plug-in mean of arm a within group g: the average over
// group members of sum_t granular-share-weighted outcome predictions.
inline double plugin_arm_mean(const MomentContext& ctx, int a, int g) {
  const std::size_t n = ctx.n();
  std::vector<double> buf(n, 0.0);
  double count = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (ctx.unit_group[i] != g) continue;
    count += 1.0;
    const Eigen::Index ii = static_cast<Eigen::Index>(i);
    double e_arm_x = 0.0;
    for (int t : ctx.scheme.arm_members(a)) e_arm_x += ctx.nuis.e(ii, t);
    double acc = 0.0;
    for (int t : ctx.scheme.arm_members(a)) acc += ctx.nuis.e(ii, t) / e_arm_x * ctx.nuis.mu(ii, t);
    buf[i] = acc;
  }
  return pairwise_sum(buf) / count;
}

}  // namespace detail

// Full pipeline: validation, cross-fitted granular nuisances, frozen
// aggregates, all cell/contrast components with joint covariance, identity
// diagnostics.
inline DecompositionReport run_decomposition(const Dataset& data, const AggregationScheme& scheme,
                                             const DecompositionOptions& opt) {
  ValidationReport val = validate(data, scheme, opt.validation);
  require(opt.arm >= 0 && opt.arm < scheme.n_arms() && opt.arm_ref >= 0 &&
              opt.arm_ref < scheme.n_arms() && opt.arm != opt.arm_ref,
          errc::invalid_config, "decomposition needs two distinct arms");
  require(opt.group >= 0 && opt.group < scheme.group_count && opt.group_ref >= 0 &&
              opt.group_ref < scheme.group_count,
          errc::invalid_config, "decomposition group indices out of range");

  NuisanceEstimates nuis = fit_granular(data, opt.crossfit);
  AggregateNuisances agg = fit_aggregates(data, scheme, val.unit_group, nuis);
  MomentContext ctx{data, scheme, val.unit_group, nuis, agg};
  const std::size_t n = data.n();

  const int arms[2] = {opt.arm, opt.arm_ref};
  const int groups[2] = {opt.group, opt.group_ref};
  const int threads = resolve_threads(opt.crossfit.threads);
  ComponentSet cells[2][2];
  for (int ai = 0; ai < 2; ++ai)
    for (int gi = 0; gi < 2; ++gi) {
      if (gi == 1 && groups[1] == groups[0]) {
        cells[ai][1] = cells[ai][0];
        continue;
      }
      cells[ai][gi] = assemble_components(ctx, arms[ai], groups[gi], threads);
    }

  // Parameter layout: 4 cells x 7, then 2 arm contrasts x 7, then 7 group
  // contrasts, then the two totals.
  const int P = 4 * kNumComponents + 2 * kNumComponents + kNumComponents + 2;
  InfluenceMatrix mat;
  mat.ids.reserve(static_cast<std::size_t>(P));
  mat.theta.resize(P);
  mat.cols.resize(static_cast<Eigen::Index>(n), P);

  auto push = [&](const ParameterId& id, double value, const Eigen::VectorXd& col) {
    const int p = static_cast<int>(mat.ids.size());
    mat.ids.push_back(id);
    mat.theta[p] = value;
    mat.cols.col(p) = col;
  };

  for (int ai = 0; ai < 2; ++ai)
    for (int gi = 0; gi < 2; ++gi)
      for (int j = 0; j < kNumComponents; ++j)
        push({ParameterId::Level::cell, j, arms[ai], groups[gi]}, cells[ai][gi].d[j],
             cells[ai][gi].cols.col(j));
  // Per-group arm contrasts first, then their difference: when the two groups
  // coincide this yields exact zeros rather than floating-point residue.
  Eigen::MatrixXd delta(kNumComponents, 2);
  std::vector<Eigen::MatrixXd> delta_cols(2);
  for (int gi = 0; gi < 2; ++gi) {
    delta_cols[static_cast<std::size_t>(gi)].resize(static_cast<Eigen::Index>(n), kNumComponents);
    for (int j = 0; j < kNumComponents; ++j) {
      delta(j, gi) = cells[0][gi].d[j] - cells[1][gi].d[j];
      delta_cols[static_cast<std::size_t>(gi)].col(j) =
          cells[0][gi].cols.col(j) - cells[1][gi].cols.col(j);
      push({ParameterId::Level::arm_contrast, j, -1, groups[gi]}, delta(j, gi),
           delta_cols[static_cast<std::size_t>(gi)].col(j));
    }
  }
  Eigen::VectorXd Delta(kNumComponents);
  Eigen::MatrixXd Delta_cols(static_cast<Eigen::Index>(n), kNumComponents);
  for (int j = 0; j < kNumComponents; ++j) {
    Delta[j] = delta(j, 0) - delta(j, 1);
    Delta_cols.col(j) = delta_cols[0].col(j) - delta_cols[1].col(j);
    push({ParameterId::Level::group_contrast, j, -1, -1}, Delta[j], Delta_cols.col(j));
  }
  push({ParameterId::Level::dim_total, -1, -1, -1}, Delta[1] + Delta[2] + Delta[3] + Delta[4],
       Delta_cols.col(1) + Delta_cols.col(2) + Delta_cols.col(3) + Delta_cols.col(4));
  push({ParameterId::Level::adim_total, -1, -1, -1},
       Delta[1] + Delta[2] + Delta[3] + Delta[5] + Delta[6],
       Delta_cols.col(1) + Delta_cols.col(2) + Delta_cols.col(3) + Delta_cols.col(5) +
           Delta_cols.col(6));

  mat.names.resize(mat.ids.size());
  for (std::size_t p = 0; p < mat.ids.size(); ++p) mat.names[p] = parameter_name(mat.ids[p], scheme);

  // joint covariance via deterministic pairwise reduction per entry
  mat.sigma.resize(P, P);
  parallel_for(static_cast<std::size_t>(P), threads, [&](std::size_t p) {
    std::vector<double> prod(n);
    for (int q = static_cast<int>(p); q < P; ++q) {
      for (std::size_t i = 0; i < n; ++i)
        prod[i] = mat.cols(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(p)) *
                  mat.cols(static_cast<Eigen::Index>(i), q);
      const double v = pairwise_sum(prod) / static_cast<double>(n);
      mat.sigma(static_cast<Eigen::Index>(p), q) = v;
      mat.sigma(q, static_cast<Eigen::Index>(p)) = v;
    }
  });

  DecompositionReport rep;
  rep.matrix = std::move(mat);
  rep.n = n;
  rep.seed = opt.crossfit.seed;
  rep.arm = opt.arm;
  rep.arm_ref = opt.arm_ref;
  rep.group = opt.group;
  rep.group_ref = opt.group_ref;

  rep.entries.resize(rep.matrix.ids.size());
  for (std::size_t p = 0; p < rep.matrix.ids.size(); ++p) {
    ReportEntry& e = rep.entries[p];
    e.id = rep.matrix.ids[p];
    e.name = rep.matrix.names[p];
    const double est = rep.matrix.theta[static_cast<Eigen::Index>(p)];
    const double var =
        rep.matrix.sigma(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(p)) /
        static_cast<double>(n);
    if (var <= 1e-24 && std::abs(est) <= 1e-12) {
      // structural zero (e.g. identical groups): report exactly that
      e.estimate = 0.0;
      e.se = 0.0;
      e.z = 0.0;
      e.p = 1.0;
      continue;
    }
    require(var > 1e-24, errc::singular_covariance,
            "parameter '" + e.name + "' has zero variance but nonzero estimate");
    e.estimate = est;
    e.se = std::sqrt(var);
    e.z = est / e.se;
    e.p = two_sided_normal_p(e.z);
  }

  // identity diagnostics: component totals against direct comparators
  const ReportEntry& dim = rep.entry("dim_total");
  const ReportEntry& adim = rep.entry("adim_total");
  rep.identity.dim_components = dim.estimate;
  rep.identity.dim_plain = agg.m_a_g(opt.arm, opt.group) - agg.m_a_g(opt.arm_ref, opt.group) -
                           agg.m_a_g(opt.arm, opt.group_ref) +
                           agg.m_a_g(opt.arm_ref, opt.group_ref);
  rep.identity.dim_gap = rep.identity.dim_components - rep.identity.dim_plain;
  rep.identity.adim_components = adim.estimate;
  rep.identity.adim_plugin = detail::plugin_arm_mean(ctx, opt.arm, opt.group) -
                             detail::plugin_arm_mean(ctx, opt.arm_ref, opt.group) -
                             detail::plugin_arm_mean(ctx, opt.arm, opt.group_ref) +
                             detail::plugin_arm_mean(ctx, opt.arm_ref, opt.group_ref);
  rep.identity.adim_gap = rep.identity.adim_components - rep.identity.adim_plugin;
  rep.identity.dim_flag = dim.se > 0.0 && std::abs(rep.identity.dim_gap) > 5.0 * dim.se;
  rep.identity.adim_flag = adim.se > 0.0 && std::abs(rep.identity.adim_gap) > 5.0 * adim.se;

  rep.diagnostics.clip_floor = nuis.clip_floor;
  rep.diagnostics.clip_count = nuis.clip_count;
  rep.diagnostics.max_clip_shift = nuis.max_clip_shift;
  long min_count = val.cells.total();
  for (int a : arms)
    for (int g : groups)
      for (int t : scheme.arm_members(a))
        min_count = std::min(min_count, static_cast<long>(val.cells.counts(t, g)));
  rep.diagnostics.min_cell_count = min_count;
  rep.diagnostics.warnings = val.warnings;
  return rep;
}

}  // namespace hetdecomp
