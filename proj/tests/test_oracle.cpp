#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "hetdecomp/oracle.hpp"
#include "hetdecomp/simulate.hpp"

using namespace hetdecomp;
using oracle::PopulationDecomposition;
using oracle::PopulationView;

namespace {

// Assemble the component vector of one (arm, group) cell from the eight
// primitive parameters — an independent path from PopulationView::d_components,
// which integrates covariances directly.
Eigen::VectorXd components_from_primitives(const PopulationView& pop, int a, int g) {
  Eigen::VectorXd d = Eigen::VectorXd::Zero(kNumComponents);
  const double pa_g = pop.e_arm_given_g(a, g);
  for (int t : pop.arm_members(a)) {
    auto th = [&](int p) { return pop.theta(a, g, t, p); };
    d[0] += th(8);
    d[1] += th(4) - th(8);
    d[2] += th(5) - th(8);
    d[3] += th(1) - th(5) - th(4) + th(8);
    d[4] += (th(7) - th(6)) / pa_g;
    d[5] += th(3) - th(2);
    d[6] += th(2) - th(1);
  }
  return d;
}

}  // namespace

TEST_CASE("two-point interacted population isolates the share-shift component",
          "[oracle]") {
  const sim::DgpBundle b = sim::interacted_example();
  const PopulationView pop = b.view();
  const PopulationDecomposition pd = oracle::population_decomposition(pop, 0, 1, 1, 0);

  CHECK(std::abs(pd.Delta[2] - (-1.0 / 3.0)) < 1e-14);
  for (int j : {0, 1, 3, 4, 5, 6}) CHECK(std::abs(pd.Delta[j]) < 1e-14);
  CHECK(std::abs(pd.dim - (-1.0 / 3.0)) < 1e-14);
  CHECK(std::abs(pd.adim - (-1.0 / 3.0)) < 1e-14);
  CHECK(std::abs(pd.dim_sum - pd.dim) < 1e-14);
  CHECK(std::abs(pd.adim_sum - pd.adim) < 1e-14);
  CHECK(std::abs(oracle::population_regression_beta3(pop, 0, 1, 1, 0) - pd.dim) < 1e-15);
}

TEST_CASE("within-group targeting population isolates the covariance components",
          "[oracle]") {
  const sim::DgpBundle b = sim::covariance_example();
  const PopulationView pop = b.view();
  const PopulationDecomposition pd = oracle::population_decomposition(pop, 0, 1, 1, 0);

  CHECK(std::abs(pd.Delta[4] - (-1.0 / 12.0)) < 1e-14);
  CHECK(std::abs(pd.Delta[5] - (-1.0 / 12.0)) < 1e-14);
  for (int j : {0, 1, 2, 3, 6}) CHECK(std::abs(pd.Delta[j]) < 1e-14);
  CHECK(std::abs(pd.dim - (-1.0 / 12.0)) < 1e-14);
  CHECK(std::abs(pd.adim - (-1.0 / 12.0)) < 1e-14);
}

TEST_CASE("group mean shift moves only the effect-heterogeneity component",
          "[oracle]") {
  const double shift = 0.5;
  const sim::DgpBundle b = sim::group_effect_example(shift);
  const PopulationDecomposition pd = oracle::population_decomposition(b.view(), 0, 1, 1, 0);
  CHECK(std::abs(pd.Delta[1] - shift) < 1e-14);
  CHECK(std::abs(pd.Delta[2] - (-1.0 / 3.0)) < 1e-14);  // inherited composition shift
  for (int j : {0, 3, 4, 5, 6}) CHECK(std::abs(pd.Delta[j]) < 1e-14);

  const sim::StrongNullPopulation sn = sim::population_strong_null(b, 0, 1, 1, 0);
  REQUIRE(sn.m.size() == 2);
  CHECK(std::abs(sn.m[0] - shift) < 1e-14);
  CHECK(std::abs(sn.m[1] - shift) < 1e-14);
  CHECK(std::abs(sn.delta1 - shift) < 1e-14);
}

TEST_CASE("offsetting version effects cancel in the aggregate but not per version",
          "[oracle]") {
  const sim::DgpBundle b = sim::offsetting_example(0.5);
  const PopulationDecomposition pd = oracle::population_decomposition(b.view(), 0, 1, 1, 0);
  CHECK(std::abs(pd.Delta[1]) < 1e-14);

  const sim::StrongNullPopulation sn = sim::population_strong_null(b, 0, 1, 1, 0);
  CHECK(sn.m.cwiseAbs().maxCoeff() > 0.4);
  CHECK(std::abs(sn.delta1) < 1e-14);
}

TEST_CASE("population identities hold on randomized discrete populations", "[oracle]") {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    CAPTURE(seed);
    const sim::DgpBundle b = sim::random_example(seed);
    const PopulationView pop = b.view();
    const PopulationDecomposition pd = oracle::population_decomposition(pop, 0, 1, 1, 0);

    // component sums equal the direct population contrasts
    CHECK(std::abs(pd.dim_sum - pd.dim) < 1e-12);
    CHECK(std::abs(pd.adim_sum - pd.adim) < 1e-12);

    for (int a : {0, 1})
      for (int g : {0, 1}) {
        const Eigen::VectorXd d = pop.d_components(a, g);
        // first four components assemble the synthetic stratified experiment
        double strat = 0.0;
        for (int t : pop.arm_members(a)) strat += pop.e_ta_g(t, a, g) * pop.mu_t_g(t, g);
        CHECK(std::abs(d[0] + d[1] + d[2] + d[3] - strat) < 1e-12);
        // covariance-form components match the primitive-parameter assembly
        const Eigen::VectorXd d_prim = components_from_primitives(pop, a, g);
        CHECK((d - d_prim).cwiseAbs().maxCoeff() < 1e-12);
      }
  }
}

TEST_CASE("randomized effective treatment kills the targeting components", "[oracle]") {
  for (std::uint64_t seed = 100; seed < 120; ++seed) {
    CAPTURE(seed);
    const sim::DgpBundle b = sim::random_example(seed, /*randomized_treatment=*/true);
    const PopulationView pop = b.view();
    for (int a : {0, 1})
      for (int g : {0, 1}) {
        const Eigen::VectorXd d = pop.d_components(a, g);
        CHECK(std::abs(d[4] - d[5]) < 1e-12);  // raw and adjusted covariances coincide
        CHECK(std::abs(d[4]) < 1e-12);
        CHECK(std::abs(d[6]) < 1e-12);
      }
  }
}

TEST_CASE("population view rejects malformed inputs", "[oracle]") {
  sim::DgpBundle b = sim::interacted_example();
  CHECK_THROWS_AS(PopulationView(b.dgp, {1, 0}, b.group_of_x), Error);   // arm map short
  CHECK_THROWS_AS(PopulationView(b.dgp, b.arm_of, {0}), Error);          // group map short
  oracle::DiscreteDgp bad = b.dgp;
  bad.e(0, 0) = 0.9;  // row no longer a distribution
  CHECK_THROWS_AS(PopulationView(bad, b.arm_of, b.group_of_x), Error);
}
