#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <string>
#include <vector>

#include "hetdecomp/simulate.hpp"

using namespace hetdecomp;

TEST_CASE("discrete sampling matches design frequencies", "[simulate][slow]") {
  const sim::DgpBundle b = sim::power_design(4, 1.0, 0.0);
  const std::size_t n = 100000;
  const Dataset data = sim::sample(b, n, 777);
  REQUIRE(data.n() == n);
  REQUIRE(data.treatment_labels ==
          std::vector<std::string>{"none", "v1", "v2", "v3", "v4"});
  REQUIRE(data.covariate_names == std::vector<std::string>{"x0"});

  std::vector<double> share(5, 0.0);
  double group1 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    share[static_cast<std::size_t>(data.t[i])] += 1.0;
    group1 += data.x(static_cast<Eigen::Index>(i), 0);
  }
  for (double& s : share) s /= static_cast<double>(n);
  group1 /= static_cast<double>(n);

  CHECK(share[0] == Catch::Approx(0.5).margin(0.01));
  for (int t = 1; t <= 4; ++t) CHECK(share[static_cast<std::size_t>(t)] ==
                                     Catch::Approx(0.125).margin(0.008));
  CHECK(group1 == Catch::Approx(0.5).margin(0.01));
  CHECK(data.y.allFinite());

  // identical seed reproduces the draw bit-exactly
  const Dataset again = sim::sample(b, 1000, 31);
  const Dataset again2 = sim::sample(b, 1000, 31);
  CHECK(again.y == again2.y);
  CHECK(again.t == again2.t);
}

TEST_CASE("population strong-null summaries expose the designed contrasts", "[simulate]") {
  const sim::StrongNullPopulation null_pop =
      sim::population_strong_null(sim::interacted_example(), 0, 1, 1, 0);
  REQUIRE(null_pop.m.size() == 2);
  CHECK(null_pop.m.cwiseAbs().maxCoeff() < 1e-14);
  CHECK(null_pop.labels == std::vector<std::string>{"v1", "v2"});
  CHECK(null_pop.e_ta.sum() == Catch::Approx(1.0));
  CHECK(null_pop.delta1_sd > 0.0);
  // covariance is symmetric positive definite
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(null_pop.sigma);
  CHECK(eig.eigenvalues().minCoeff() > 0.0);

  CHECK_THROWS_AS(sim::population_strong_null(sim::interacted_example(), 0, 0, 1, 0), Error);
}

TEST_CASE("power study is reproducible and thread-count invariant", "[simulate][slow]") {
  sim::PowerStudyConfig cfg;
  cfg.j_grid = {2};
  cfg.n = 400;
  cfg.replications = 60;
  cfg.seed = 99;
  cfg.threads = 1;
  const sim::PowerStudyResult one = sim::power_study(cfg);
  cfg.threads = 4;
  const sim::PowerStudyResult four = sim::power_study(cfg);

  REQUIRE(one.rows.size() == 6);  // {effect,null} x {wald,supremum,delta1}
  REQUIRE(four.rows.size() == one.rows.size());
  for (std::size_t i = 0; i < one.rows.size(); ++i) {
    CHECK(one.rows[i].method == four.rows[i].method);
    CHECK(one.rows[i].null_effect == four.rows[i].null_effect);
    CHECK(one.rows[i].rejection_rate == four.rows[i].rejection_rate);  // bit-exact
    CHECK(one.rows[i].mc_se == four.rows[i].mc_se);
    CHECK(one.rows[i].analytic == four.rows[i].analytic);
  }
  for (const sim::PowerRow& row : one.rows) {
    CHECK(row.rejection_rate >= 0.0);
    CHECK(row.rejection_rate <= 1.0);
    CHECK(row.analytic > 0.0);
    CHECK(row.analytic < 1.0);
    if (row.null_effect) CHECK(row.rejection_rate < 0.3);
  }
}

TEST_CASE("coverage study is reproducible and thread-count invariant", "[simulate][slow]") {
  sim::CoverageStudyConfig cfg;
  cfg.bundle = sim::interacted_example();
  cfg.n = 500;
  cfg.replications = 24;
  cfg.seed = 7;
  cfg.threads = 1;
  const sim::CoverageStudyResult one = sim::coverage_study(cfg);
  cfg.threads = 3;
  const sim::CoverageStudyResult three = sim::coverage_study(cfg);

  REQUIRE(one.rows.size() == 2);  // default targets: Delta[1] and the d[0] cell
  CHECK(one.rows[0].parameter == "Delta[1]");
  CHECK(one.rows[0].truth == 0.0);  // no group effect in this design
  REQUIRE(three.rows.size() == one.rows.size());
  for (std::size_t k = 0; k < one.rows.size(); ++k) {
    CHECK(one.rows[k].parameter == three.rows[k].parameter);
    CHECK(one.rows[k].truth == three.rows[k].truth);
    CHECK(one.rows[k].coverage == three.rows[k].coverage);  // bit-exact
    CHECK(one.rows[k].ks_distance == three.rows[k].ks_distance);
    CHECK(one.rows[k].mean_error == three.rows[k].mean_error);
    CHECK(one.rows[k].replication_count + one.rows[k].failure_count == 24);
    CHECK(one.rows[k].coverage >= 0.75);  // loose sanity at 24 replications
  }

  // explicit unknown target is rejected by name
  cfg.targets = {"no_such_parameter"};
  CHECK_THROWS_AS(sim::coverage_study(cfg), Error);
}

TEST_CASE("continuous dose law validates and samples its designed moments",
          "[simulate][slow]") {
  sim::ContinuousDgp dgp;  // tilt -0.8 / +0.8, no atoms
  dgp.check();

  sim::ContinuousDgp bad = dgp;
  bad.tilt1 = 1.5;
  CHECK_THROWS_AS(bad.check(), Error);
  bad = dgp;
  bad.atom_points = {0.0};
  bad.atom_mass = {0.1};
  CHECK_THROWS_AS(bad.check(), Error);
  bad = dgp;
  bad.atom_points = {0.4, 0.6};
  bad.atom_mass = {0.7, 0.5};
  CHECK_THROWS_AS(bad.check(), Error);

  const std::size_t n = 60000;
  const Dataset data = sim::sample(dgp, n, 123);
  REQUIRE(data.dose.size() == static_cast<Eigen::Index>(n));
  double sum0 = 0.0, sum1 = 0.0;
  long n0 = 0, n1 = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = data.dose[static_cast<Eigen::Index>(i)];
    REQUIRE(d >= 0.0);
    REQUIRE(d <= 1.0);
    if (data.x(static_cast<Eigen::Index>(i), 0) < 0.5) {
      sum0 += d;
      ++n0;
    } else {
      sum1 += d;
      ++n1;
    }
  }
  // E[t | x] = 1/2 + tilt/6 for the linear density
  CHECK(sum0 / n0 == Catch::Approx(0.5 - 0.8 / 6.0).margin(0.01));
  CHECK(sum1 / n1 == Catch::Approx(0.5 + 0.8 / 6.0).margin(0.01));

  sim::ContinuousDgp withatom = dgp;
  withatom.atom_points = {0.5};
  withatom.atom_mass = {0.2};
  const Dataset atomdata = sim::sample(withatom, n, 124);
  long hits = 0;
  for (std::size_t i = 0; i < n; ++i)
    if (atomdata.dose[static_cast<Eigen::Index>(i)] == 0.5) ++hits;
  CHECK(static_cast<double>(hits) / n == Catch::Approx(0.2).margin(0.01));
}

TEST_CASE("continuous-limit average has the closed-form value", "[simulate]") {
  sim::ContinuousDgp dgp;  // mixture density is uniform, mean curve 2.5 t^2
  CHECK(sim::true_d0(dgp) == Catch::Approx(2.5 / 3.0).margin(1e-9));

  sim::ContinuousDgp withatom = dgp;
  withatom.atom_points = {0.5};
  withatom.atom_mass = {0.2};
  CHECK(sim::true_d0(withatom) ==
        Catch::Approx(0.8 * 2.5 / 3.0 + 0.2 * 2.5 * 0.25).margin(1e-9));
}

TEST_CASE("partitioning is exact when the outcome ignores the dose", "[simulate]") {
  sim::ContinuousDgp dgp;
  dgp.offset0 = 0.3;
  dgp.offset1 = -0.2;
  dgp.scale0 = 0.0;
  dgp.scale1 = 0.0;
  const double truth = sim::true_d0(dgp);
  CHECK(truth == Catch::Approx(0.5 * 0.3 - 0.5 * 0.2).margin(1e-12));
  for (int levels : {2, 7}) {
    const PartitionScheme part = sim::population_equal_mass_partition(dgp, levels);
    CHECK(sim::population_d0_partitioned(dgp, part) == Catch::Approx(truth).margin(1e-12));
  }
}

TEST_CASE("partitioned population value matches an explicit discrete construction",
          "[simulate]") {
  sim::ContinuousDgp dgp;
  dgp.p_x1 = 0.4;
  dgp.offset0 = 0.3;
  dgp.offset1 = -0.2;
  dgp.atom_points = {0.25, 0.75};
  dgp.atom_mass = {0.1, 0.2};

  PartitionScheme part;
  part.atoms = {0.25, 0.75};
  part.edges = {0.0, 1.0};  // one continuous bin

  // Build the implied three-label discrete population by hand: labels are
  // atom(0.25), atom(0.75), then the full bin, whose conditional mean is
  // offset + scale * (1/3 + tilt/6).
  oracle::DiscreteDgp d;
  d.x_points.resize(2, 1);
  d.x_points << 0, 1;
  d.x_prob.resize(2);
  d.x_prob << 1.0 - dgp.p_x1, dgp.p_x1;
  d.e.resize(2, 3);
  d.mu.resize(2, 3);
  for (int x = 0; x < 2; ++x) {
    d.e(x, 0) = 0.1;
    d.e(x, 1) = 0.2;
    d.e(x, 2) = 0.7;
    d.mu(x, 0) = dgp.mu(0.25, x);
    d.mu(x, 1) = dgp.mu(0.75, x);
    const double off = x == 0 ? dgp.offset0 : dgp.offset1;
    const double sc = x == 0 ? dgp.scale0 : dgp.scale1;
    d.mu(x, 2) = off + sc * (1.0 / 3.0 + dgp.tilt(x) / 6.0);
  }
  d.noise_sd = Eigen::MatrixXd::Constant(2, 3, 0.5);
  d.treatment_labels = part.labels();

  const oracle::PopulationView pop(d, {0, 0, 0}, {0, 0});
  const double via_discrete = pop.d_components(0, 0)[0];
  const double via_partition = sim::population_d0_partitioned(dgp, part);
  CHECK(via_partition == Catch::Approx(via_discrete).margin(1e-12));
}

TEST_CASE("population equal-mass edges split the mixture dose law evenly", "[simulate]") {
  sim::ContinuousDgp dgp;
  dgp.tilt0 = -0.5;
  dgp.tilt1 = 0.1;
  dgp.atom_points = {0.5};
  dgp.atom_mass = {0.1};
  const double kbar = 0.5 * dgp.tilt0 + 0.5 * dgp.tilt1;
  const auto cdf = [&](double t) { return t + kbar * (t * t - t); };
  const int bins = 5;
  const PartitionScheme part = sim::population_equal_mass_partition(dgp, bins);
  REQUIRE(part.atoms == std::vector<double>{0.5});
  REQUIRE(part.edges.size() == static_cast<std::size_t>(bins) + 1);
  CHECK(part.edges.front() == 0.0);
  CHECK(part.edges.back() == 1.0);
  for (int k = 0; k < bins; ++k) {
    const double mass = cdf(part.edges[static_cast<std::size_t>(k) + 1]) -
                        cdf(part.edges[static_cast<std::size_t>(k)]);
    CHECK(mass == Catch::Approx(1.0 / bins).margin(1e-12));
  }
}

TEST_CASE("population discretization bias shrinks quadratically in the bin count",
          "[simulate]") {
  const sim::ContinuousDgp dgp;
  const double truth = sim::true_d0(dgp);
  std::vector<double> logl, logg;
  for (int levels : {4, 8, 16, 32}) {
    const double gap =
        sim::population_d0_partitioned(dgp, sim::population_equal_mass_partition(dgp, levels)) -
        truth;
    REQUIRE(gap != 0.0);
    logl.push_back(std::log(static_cast<double>(levels)));
    logg.push_back(std::log(std::abs(gap)));
  }
  const double mx = (logl[0] + logl[1] + logl[2] + logl[3]) / 4.0;
  const double my = (logg[0] + logg[1] + logg[2] + logg[3]) / 4.0;
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < logl.size(); ++i) {
    sxx += (logl[i] - mx) * (logl[i] - mx);
    sxy += (logl[i] - mx) * (logg[i] - my);
  }
  const double slope = sxy / sxx;
  CHECK(slope < -1.7);
  CHECK(slope > -2.3);
}

TEST_CASE("partition study runs end to end and is thread-count invariant",
          "[simulate][slow]") {
  sim::PartitionStudyConfig cfg;
  cfg.level_grid = {2, 4, 8};
  cfg.n = 4000;
  cfg.replications = 3;
  cfg.seed = 5;
  cfg.threads = 1;
  const sim::PartitionStudyResult one = sim::partition_study(cfg);
  cfg.threads = 4;
  const sim::PartitionStudyResult four = sim::partition_study(cfg);

  CHECK(one.true_value == Catch::Approx(2.5 / 3.0).margin(1e-6));
  REQUIRE(one.rows.size() == 3);
  REQUIRE(four.rows.size() == 3);
  CHECK(std::isfinite(one.fitted_slope));
  CHECK(one.fitted_slope == four.fitted_slope);  // bit-exact
  for (std::size_t i = 0; i < one.rows.size(); ++i) {
    CHECK(one.rows[i].abs_mean_gap == four.rows[i].abs_mean_gap);
    CHECK(one.rows[i].population_gap == four.rows[i].population_gap);
    CHECK(one.rows[i].mc_se >= 0.0);
  }
  // the exact bias column must shrink even when sampling noise dominates
  CHECK(std::abs(one.rows[0].population_gap) > std::abs(one.rows[1].population_gap));
  CHECK(std::abs(one.rows[1].population_gap) > std::abs(one.rows[2].population_gap));
}

TEST_CASE("study presets resolve by name", "[simulate]") {
  const sim::StudyPreset dense = sim::study_preset("figure2-dense", 42, false);
  CHECK(dense.kind == "power");
  CHECK(dense.power.support_exponent == 1.0);
  CHECK(dense.power.effect_size == Catch::Approx(0.4));
  CHECK(dense.power.replications == 2000);
  CHECK(dense.power.seed == 42);

  const sim::StudyPreset sparse = sim::study_preset("figure2-sparse", 42, true);
  CHECK(sparse.power.support_exponent == 0.5);
  CHECK(sparse.power.effect_size == Catch::Approx(0.5));
  CHECK(sparse.power.replications == 10000);  // full-scale replication count

  const sim::StudyPreset cov = sim::study_preset("coverage-null");
  CHECK(cov.kind == "coverage");
  CHECK(cov.coverage.n == 2000);
  CHECK(cov.coverage.replications == 1000);

  CHECK(sim::study_preset("partition-smooth").kind == "partition");

  try {
    sim::study_preset("no-such-preset");
    FAIL("expected unknown_preset");
  } catch (const Error& e) {
    CHECK(e.code() == errc::unknown_preset);
    CHECK(std::string(e.what()).find("figure2-dense") != std::string::npos);
  }
}
