// Acceptance gate for the decomposition library.
//
// Runs eight end-to-end checks and prints exactly one PASS/FAIL line per
// criterion (prefixed "CRITERION k"), with indented detail lines above each
// verdict. Exits nonzero if any criterion fails. No timestamps are printed;
// elapsed durations only.

#include <hetdecomp/hetdecomp.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

namespace hd = hetdecomp;
using hd::sim::DgpBundle;

namespace {

struct Gate {
  int failures = 0;

  void verdict(int idx, const std::string& title, bool ok, const std::string& detail,
               double seconds) {
    if (!ok) ++failures;
    std::printf("CRITERION %d [%s]: %s (%s; %.1fs)\n", idx, title.c_str(), ok ? "PASS" : "FAIL",
                detail.c_str(), seconds);
    std::fflush(stdout);
  }
};

void note(const std::string& s) {
  std::printf("  %s\n", s.c_str());
  std::fflush(stdout);
}

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof(buf), f, a);
  return buf;
}

double seconds_since(const std::chrono::steady_clock::time_point& t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// --------------------------------------------------------------------------
// 1. Population identities on randomized discrete designs.
// --------------------------------------------------------------------------
bool criterion1(std::string& detail) {
  double worst_sum = 0.0;     // component sums vs direct four-cell contrasts
  double worst_strat = 0.0;   // d0+d1+d2+d3 vs the share-weighted stratified value
  double worst_random = 0.0;  // randomized assignment kills the share components
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const DgpBundle b = hd::sim::random_example(seed);
    const hd::oracle::PopulationView pop = b.view();
    const hd::oracle::PopulationDecomposition pd =
        hd::oracle::population_decomposition(pop, 0, 1, 1, 0);
    worst_sum = std::max(worst_sum, std::abs(pd.dim_sum - pd.dim));
    worst_sum = std::max(worst_sum, std::abs(pd.adim_sum - pd.adim));
    for (int a = 0; a < 2; ++a)
      for (int g = 0; g < 2; ++g) {
        const Eigen::VectorXd d = pop.d_components(a, g);
        double strat = 0.0;
        for (int t : pop.arm_members(a)) strat += pop.e_ta_g(t, a, g) * pop.mu_t_g(t, g);
        worst_strat = std::max(worst_strat, std::abs(d[0] + d[1] + d[2] + d[3] - strat));
      }
  }
  for (std::uint64_t seed = 100; seed < 120; ++seed) {
    const DgpBundle b = hd::sim::random_example(seed, /*randomized_treatment=*/true);
    const hd::oracle::PopulationView pop = b.view();
    for (int a = 0; a < 2; ++a)
      for (int g = 0; g < 2; ++g) {
        const Eigen::VectorXd d = pop.d_components(a, g);
        worst_random = std::max(worst_random, std::abs(d[4] - d[5]));
        worst_random = std::max(worst_random, std::abs(d[6]));
      }
  }
  note("identity sums worst " + fmt("%.3e", worst_sum) + ", stratified worst " +
       fmt("%.3e", worst_strat) + ", randomized worst " + fmt("%.3e", worst_random));
  detail = "max deviation " +
           fmt("%.3e", std::max({worst_sum, worst_strat, worst_random})) + " vs 1e-12";
  return worst_sum < 1e-12 && worst_strat < 1e-12 && worst_random < 1e-12;
}

// --------------------------------------------------------------------------
// 2. Benchmark designs: exact population components and estimator recovery.
// --------------------------------------------------------------------------
bool criterion2(std::string& detail) {
  bool ok = true;

  {  // interacted design: only the share-composition component is active
    const DgpBundle b = hd::sim::interacted_example();
    const hd::oracle::PopulationDecomposition pd =
        hd::oracle::population_decomposition(b.view(), 0, 1, 1, 0);
    double worst = std::abs(pd.Delta[2] - (-1.0 / 3.0));
    for (int j : {1, 3, 4, 5, 6}) worst = std::max(worst, std::abs(pd.Delta[j]));
    worst = std::max(worst, std::abs(pd.dim - (-1.0 / 3.0)));
    worst = std::max(worst, std::abs(pd.adim - (-1.0 / 3.0)));
    note("interacted oracle deviation " + fmt("%.3e", worst));
    ok = ok && worst < 1e-12;
  }
  {  // covariance design: both covariance forms equal -Var(X1|A=1,G=1)/3
    const DgpBundle b = hd::sim::covariance_example();
    const hd::oracle::PopulationDecomposition pd =
        hd::oracle::population_decomposition(b.view(), 0, 1, 1, 0);
    double worst = std::abs(pd.Delta[4] - (-1.0 / 12.0));
    worst = std::max(worst, std::abs(pd.Delta[5] - (-1.0 / 12.0)));
    for (int j : {1, 2, 3, 6}) worst = std::max(worst, std::abs(pd.Delta[j]));
    note("covariance oracle deviation " + fmt("%.3e", worst));
    ok = ok && worst < 1e-12;
  }

  const auto estimator_hits = [&](const DgpBundle& b, std::uint64_t seed,
                                  const std::vector<std::string>& names, double target) {
    const hd::Dataset data = hd::sim::sample(b, 100000, seed);
    hd::DecompositionOptions opt;
    opt.arm = 0;
    opt.arm_ref = 1;
    opt.group = 1;
    opt.group_ref = 0;
    opt.crossfit.seed = seed + 1;
    opt.crossfit.threads = 0;
    const hd::DecompositionReport rep = hd::run_decomposition(data, b.scheme(), opt);
    bool hit = true;
    for (const auto& nm : names) {
      const hd::ReportEntry& e = rep.entry(nm);
      const double z = (e.estimate - target) / e.se;
      note(nm + " = " + fmt("%.5f", e.estimate) + " (target " + fmt("%.5f", target) +
           ", z-gap " + fmt("%.2f", z) + ")");
      hit = hit && std::abs(z) <= 3.0;
    }
    return hit;
  };
  ok = ok && estimator_hits(hd::sim::interacted_example(), 424242, {"Delta[2]"}, -1.0 / 3.0);
  ok = ok && estimator_hits(hd::sim::covariance_example(), 535353, {"Delta[4]", "Delta[4adj]"},
                            -1.0 / 12.0);
  detail = ok ? "oracle components exact, estimates within 3 SE at n=100000"
              : "an oracle or estimator check missed";
  return ok;
}

// --------------------------------------------------------------------------
// 3. Component total equals the saturated interaction regression coefficient.
// --------------------------------------------------------------------------
bool criterion3(std::string& detail) {
  bool ok = true;
  const DgpBundle b = hd::sim::interacted_example();
  const hd::AggregationScheme scheme = b.scheme();
  for (std::size_t n : {std::size_t{10000}, std::size_t{100000}}) {
    const hd::Dataset data = hd::sim::sample(b, n, 515151 + n);
    const hd::ValidationReport val = hd::validate(data, scheme);
    hd::DecompositionOptions opt;
    opt.arm = 0;
    opt.arm_ref = 1;
    opt.group = 1;
    opt.group_ref = 0;
    opt.crossfit.seed = 99;
    opt.crossfit.threads = 0;
    const hd::DecompositionReport rep = hd::run_decomposition(data, scheme, opt);

    // Saturated least squares of y on (1, arm, group, arm x group) over the
    // two compared arms, with its interaction influence column.
    Eigen::Matrix4d xtx = Eigen::Matrix4d::Zero();
    Eigen::Vector4d xty = Eigen::Vector4d::Zero();
    std::vector<int> in_sample(n, 0);
    std::size_t n_s = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const int arm = scheme.arm_of[static_cast<std::size_t>(data.t[i])];
      if (arm != opt.arm && arm != opt.arm_ref) continue;
      in_sample[i] = 1;
      ++n_s;
      const double ai = arm == opt.arm ? 1.0 : 0.0;
      const double gi = val.unit_group[i] == opt.group ? 1.0 : 0.0;
      const Eigen::Vector4d xi(1.0, ai, gi, ai * gi);
      xtx += xi * xi.transpose();
      xty += xi * data.y[static_cast<Eigen::Index>(i)];
    }
    const Eigen::Vector4d beta = xtx.colPivHouseholderQr().solve(xty);
    const Eigen::Matrix4d minv =
        (xtx / static_cast<double>(n_s)).colPivHouseholderQr().solve(Eigen::Matrix4d::Identity());

    const int idx = rep.matrix.find("dim_total");
    const double gap = rep.matrix.theta[idx] - beta[3];
    double mean_d = 0.0, meansq_d = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double ols_col = 0.0;
      if (in_sample[i]) {
        const int arm = scheme.arm_of[static_cast<std::size_t>(data.t[i])];
        const double ai = arm == opt.arm ? 1.0 : 0.0;
        const double gi = val.unit_group[i] == opt.group ? 1.0 : 0.0;
        const Eigen::Vector4d xi(1.0, ai, gi, ai * gi);
        const double resid = data.y[static_cast<Eigen::Index>(i)] - xi.dot(beta);
        ols_col = static_cast<double>(n) / static_cast<double>(n_s) *
                  (minv.row(3) * xi).value() * resid;
      }
      const double d = rep.matrix.cols(static_cast<Eigen::Index>(i), idx) - ols_col;
      mean_d += d;
      meansq_d += d * d;
    }
    mean_d /= static_cast<double>(n);
    meansq_d /= static_cast<double>(n);
    const double se_diff = std::sqrt(std::max(0.0, meansq_d - mean_d * mean_d) /
                                     static_cast<double>(n));
    const bool hit = std::abs(gap) <= std::max(3.0 * se_diff, 1e-12);
    note("n=" + std::to_string(n) + ": total " + fmt("%.6f", rep.matrix.theta[idx]) +
         ", regression " + fmt("%.6f", beta[3]) + ", gap " + fmt("%.2e", gap) + " vs 3*SE " +
         fmt("%.2e", 3.0 * se_diff));
    // the regression coefficient and the report's plain four-cell contrast
    // are the same statistic computed two ways
    const double plain_gap = std::abs(beta[3] - rep.identity.dim_plain);
    if (plain_gap > 1e-9) {
      note("saturated coefficient disagrees with the four-cell mean contrast by " +
           fmt("%.2e", plain_gap));
      ok = false;
    }
    ok = ok && hit;
  }
  detail = ok ? "component total within 3 SE of the interaction coefficient at both n"
              : "totals and regression coefficient disagree";
  return ok;
}

// --------------------------------------------------------------------------
// 4. Confidence-interval coverage and p-value uniformity on the null design.
// --------------------------------------------------------------------------
bool criterion4(std::string& detail) {
  const hd::sim::StudyPreset preset = hd::sim::study_preset("coverage-null");
  const hd::sim::CoverageStudyResult res = hd::sim::coverage_study(preset.coverage);
  bool ok = !res.rows.empty();
  for (const auto& row : res.rows) {
    note(row.parameter + ": coverage " + fmt("%.3f", row.coverage) + ", KS " +
         fmt("%.3f", row.ks_distance) + ", failures " + std::to_string(row.failure_count));
    ok = ok && row.coverage >= 0.93 && row.coverage <= 0.97 && row.ks_distance < 0.05;
  }
  detail = ok ? "coverage within [0.93,0.97] and p-value KS < 0.05 on both targets"
              : "coverage or p-value uniformity out of band";
  return ok;
}

// --------------------------------------------------------------------------
// 5. Finite-sample power ordering and size across the J grid.
// --------------------------------------------------------------------------
bool criterion5(std::string& detail) {
  bool ok = true;
  std::vector<std::string> misses;

  for (const std::string name : {std::string("figure2-dense"), std::string("figure2-sparse")}) {
    const hd::sim::StudyPreset preset = hd::sim::study_preset(name);
    const hd::sim::PowerStudyResult res = hd::sim::power_study(preset.power);
    const bool dense = name == "figure2-dense";

    const auto rate = [&](int J, const char* method, bool null_row) {
      for (const auto& row : res.rows)
        if (row.j_count == J && row.method == method && row.null_effect == null_row)
          return row.rejection_rate;
      return -1.0;
    };
    const auto se = [&](int J, const char* method, bool null_row) {
      for (const auto& row : res.rows)
        if (row.j_count == J && row.method == method && row.null_effect == null_row)
          return row.mc_se;
      return 0.0;
    };

    if (dense) {
      double lo = 1.0, hi = 0.0;
      for (int J : preset.power.j_grid) {
        lo = std::min(lo, rate(J, "delta1", false));
        hi = std::max(hi, rate(J, "delta1", false));
      }
      note(name + ": aggregate-test power range [" + fmt("%.3f", lo) + ", " + fmt("%.3f", hi) +
           "]");
      if (hi - lo > 0.10) {
        misses.push_back("dense aggregate power not flat");
        ok = false;
      }
      const double d64 = rate(64, "delta1", false), w64 = rate(64, "wald", false),
                   s64 = rate(64, "supremum", false);
      note(name + ": power at J=64 aggregate " + fmt("%.3f", d64) + ", wald " + fmt("%.3f", w64) +
           ", supremum " + fmt("%.3f", s64));
      if (!(d64 > w64 && d64 > s64)) {
        misses.push_back("dense aggregate power not dominant at J=64");
        ok = false;
      }
    } else {
      for (int J : {2, 4, 8}) {
        const double s = rate(J, "supremum", false), d = rate(J, "delta1", false);
        note(name + ": J=" + std::to_string(J) + " supremum " + fmt("%.3f", s) + " vs aggregate " +
             fmt("%.3f", d));
        if (s < d) {
          misses.push_back("sparse supremum below aggregate at J=" + std::to_string(J));
          ok = false;
        }
      }
    }

    for (int J : preset.power.j_grid) {
      const double w = rate(J, "wald", true), s = rate(J, "supremum", true),
                   d = rate(J, "delta1", true);
      note(name + ": size at J=" + std::to_string(J) + " wald " + fmt("%.4f", w) + ", supremum " +
           fmt("%.4f", s) + ", aggregate " + fmt("%.4f", d));
      if (std::abs(w - 0.05) > 3.0 * se(J, "wald", true)) {
        misses.push_back(name + " wald size off at J=" + std::to_string(J) + " (" +
                         fmt("%.4f", w) + ")");
        ok = false;
      }
      if (std::abs(d - 0.05) > 3.0 * se(J, "delta1", true)) {
        misses.push_back(name + " aggregate size off at J=" + std::to_string(J) + " (" +
                         fmt("%.4f", d) + ")");
        ok = false;
      }
      if (s < 0.02 || s > 0.08) {
        misses.push_back(name + " supremum size outside [0.02,0.08] at J=" + std::to_string(J) +
                         " (" + fmt("%.4f", s) + ")");
        ok = false;
      }
    }
  }

  if (ok) {
    detail = "power ordering and all size rows within their bands";
  } else {
    detail = std::to_string(misses.size()) + " size/power rows out of band: ";
    for (std::size_t i = 0; i < misses.size(); ++i)
      detail += (i ? "; " : "") + misses[i];
  }
  return ok;
}

// --------------------------------------------------------------------------
// 6. Closed-form power functions: exact level, dimension invariance,
//    agreement with simulation for the aggregate test.
// --------------------------------------------------------------------------
bool criterion6(std::string& detail) {
  bool ok = true;
  for (int J : {1, 2, 10, 64}) {
    hd::PowerSpec spec;
    spec.alpha = 0.05;
    spec.xi = Eigen::VectorXd::Zero(J);
    spec.e_ta = Eigen::VectorXd::Constant(J, 1.0 / J);
    const hd::AnalyticPower p = hd::analytic_power(spec);
    const double worst = std::max({std::abs(p.wald - 0.05), std::abs(p.supremum - 0.05),
                                   std::abs(p.delta1 - 0.05)});
    if (worst > 1e-12) {
      note("null level deviates by " + fmt("%.3e", worst) + " at J=" + std::to_string(J));
      ok = false;
    }
  }

  double first = -1.0;
  for (int J : {5, 50, 500}) {
    hd::PowerSpec spec;
    spec.alpha = 0.05;
    spec.xi = Eigen::VectorXd::Constant(J, 1.7);
    spec.e_ta = Eigen::VectorXd::Constant(J, 1.0 / J);
    const double p = hd::analytic_power(spec).delta1;
    if (first < 0.0)
      first = p;
    else if (std::abs(p - first) > 1e-12) {
      note("aggregate power varies with dimension: " + fmt("%.12f", p) + " vs " +
           fmt("%.12f", first));
      ok = false;
    }
  }
  note("aggregate analytic power at drift 1.7: " + fmt("%.4f", first));

  hd::sim::PowerStudyConfig cfg;
  cfg.j_grid = {10};
  cfg.n = 1000;
  cfg.replications = 10000;
  cfg.support_exponent = 1.0;
  cfg.effect_size = 0.4;
  cfg.include_size_rows = false;
  cfg.seed = 616161;
  const hd::sim::PowerStudyResult res = hd::sim::power_study(cfg);
  for (const auto& row : res.rows)
    if (row.method == "delta1") {
      note("aggregate test at J=10: simulated " + fmt("%.4f", row.rejection_rate) +
           " vs analytic " + fmt("%.4f", row.analytic));
      if (std::abs(row.rejection_rate - row.analytic) > 0.08) {
        note("simulated/analytic gap exceeds 0.08");
        ok = false;
      }
    }
  detail = ok ? "exact level, dimension-invariant aggregate power, simulation within 0.08"
              : "a closed-form power check missed";
  return ok;
}

// --------------------------------------------------------------------------
// 7. Discretization bias shrinks quadratically; point masses are exact.
// --------------------------------------------------------------------------
bool criterion7(std::string& detail) {
  const hd::sim::StudyPreset preset = hd::sim::study_preset("partition-smooth");
  const hd::sim::PartitionStudyResult res = hd::sim::partition_study(preset.partition);
  for (const auto& row : res.rows)
    note("levels " + std::to_string(row.levels) + ": |mean gap| " +
         fmt("%.3e", row.abs_mean_gap) + " (population " + fmt("%.3e", row.population_gap) +
         ", mc se " + fmt("%.3e", row.mc_se) + ")");
  note("fitted log-log slope " + fmt("%.3f", res.fitted_slope));
  bool ok = std::isfinite(res.fitted_slope) && res.fitted_slope <= -1.5;

  // Point masses enter exactly: adding an atom rescales the continuous
  // discretization bias by the remaining continuous mass, identically.
  hd::sim::ContinuousDgp smooth;  // defaults match the study preset
  hd::sim::ContinuousDgp with_atom = smooth;
  with_atom.atom_points = {0.5};
  with_atom.atom_mass = {0.2};
  double worst_atom = 0.0;
  for (int levels : {4, 8}) {
    const double gap_c =
        hd::sim::population_d0_partitioned(
            smooth, hd::sim::population_equal_mass_partition(smooth, levels)) -
        hd::sim::true_d0(smooth);
    const double gap_a =
        hd::sim::population_d0_partitioned(
            with_atom, hd::sim::population_equal_mass_partition(with_atom, levels)) -
        hd::sim::true_d0(with_atom);
    worst_atom = std::max(worst_atom, std::abs(gap_a - 0.8 * gap_c));
  }
  note("atom-exactness deviation " + fmt("%.3e", worst_atom));
  ok = ok && worst_atom < 1e-12;
  detail = "slope " + fmt("%.3f", res.fitted_slope) + " vs -1.5, atom deviation " +
           fmt("%.2e", worst_atom);
  return ok;
}

// --------------------------------------------------------------------------
// 8. Orthogonality: the debiased primitive responds quadratically, not
//    linearly, to joint perturbation of the granular nuisances.
// --------------------------------------------------------------------------
bool criterion8(std::string& detail) {
  const DgpBundle b = hd::sim::interacted_example();
  const hd::AggregationScheme scheme = b.scheme();
  const std::size_t n = 1000000;
  const hd::Dataset data = hd::sim::sample(b, n, 909090);
  const hd::ValidationReport val = hd::validate(data, scheme);
  hd::CrossFitOptions cf;
  cf.folds = 5;
  cf.seed = 909091;
  cf.threads = 0;
  const hd::NuisanceEstimates nuis = hd::fit_granular(data, cf);

  const int target_t = 0;  // first version of the treated arm
  const std::vector<double> eps = {-0.10, -0.05, -0.02, 0.0, 0.02, 0.05, 0.1};
  Eigen::VectorXd theta(static_cast<Eigen::Index>(eps.size()));
  for (std::size_t k = 0; k < eps.size(); ++k) {
    hd::NuisanceEstimates pert = nuis;
    pert.e.col(target_t) *= (1.0 + 3.0 * eps[k]);
    pert.mu.col(target_t).array() += 3.0 * eps[k];
    const hd::AggregateNuisances agg = hd::fit_aggregates(data, scheme, val.unit_group, pert);
    const hd::MomentContext ctx{data, scheme, val.unit_group, pert, agg};
    theta[static_cast<Eigen::Index>(k)] = hd::solve_primitive(ctx, 0, 1, target_t, 8).theta;
  }

  Eigen::MatrixXd V(static_cast<Eigen::Index>(eps.size()), 4);
  for (std::size_t k = 0; k < eps.size(); ++k) {
    const double e = eps[k];
    V(static_cast<Eigen::Index>(k), 0) = 1.0;
    V(static_cast<Eigen::Index>(k), 1) = e;
    V(static_cast<Eigen::Index>(k), 2) = e * e;
    V(static_cast<Eigen::Index>(k), 3) = e * e * e;
  }
  const Eigen::VectorXd coef = V.colPivHouseholderQr().solve(theta);
  note("perturbation response: theta(0) " + fmt("%.6f", coef[0]) + ", linear " +
       fmt("%.3e", coef[1]) + ", quadratic " + fmt("%.4f", coef[2]));
  const double swing = std::abs(theta[theta.size() - 1] - theta[3]);
  bool ok = swing > 1e-6;  // the perturbation must actually bite
  if (!ok) note("perturbation did not move the estimate");
  ok = ok && std::abs(coef[1]) < 0.05 * std::abs(coef[2]) * 0.1;
  detail = "|linear| " + fmt("%.3e", std::abs(coef[1])) + " vs threshold " +
           fmt("%.3e", 0.005 * std::abs(coef[2]));
  return ok;
}

}  // namespace

int main() {
  Gate gate;
  const struct {
    int idx;
    const char* title;
    bool (*fn)(std::string&);
  } checks[] = {
      {1, "population identities", criterion1},
      {2, "benchmark components and recovery", criterion2},
      {3, "regression equivalence", criterion3},
      {4, "null coverage", criterion4},
      {5, "power ordering and size", criterion5},
      {6, "closed-form power", criterion6},
      {7, "partition refinement", criterion7},
      {8, "nuisance orthogonality", criterion8},
  };
  for (const auto& c : checks) {
    const auto t0 = std::chrono::steady_clock::now();
    std::string detail;
    bool ok = false;
    try {
      ok = c.fn(detail);
    } catch (const hd::Error& e) {
      detail = std::string("error: ") + e.what();
    } catch (const std::exception& e) {
      detail = std::string("unexpected error: ") + e.what();
    }
    gate.verdict(c.idx, c.title, ok, detail, seconds_since(t0));
  }
  std::printf("ACCEPTANCE: %d of 8 criteria passed\n", 8 - gate.failures);
  return gate.failures == 0 ? 0 : 1;
}
