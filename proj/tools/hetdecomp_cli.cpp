// Command-line front end: decompose group contrasts from tabular data, run
// strong-homogeneity tests, evaluate analytic power, and drive the sampling
// studies (power curves, interval coverage, partition refinement).
#include <cstdint>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "hetdecomp/hetdecomp.hpp"

namespace hd = hetdecomp;
using nlohmann::json;

namespace {

struct CommonFlags {
  std::string input;
  std::string config;
  std::string preset;
  std::string out_dir = ".";
  std::uint64_t seed = 0;
  int folds = 0;
  double alpha = 0.0;
  int threads = -1;
  long reps = 0;
  bool full_scale = false;
  bool have_seed = false, have_folds = false, have_alpha = false, have_threads = false,
       have_reps = false;
};

void add_common(CLI::App* cmd, CommonFlags& f, bool wants_data) {
  if (wants_data) {
    cmd->add_option("--input", f.input, "input CSV with a header row")->required();
    cmd->add_option("--config", f.config, "JSON run configuration")->required();
  } else {
    cmd->add_option("--preset", f.preset, "named study preset");
  }
  cmd->add_option("--seed", f.seed, "root RNG seed (wins over config)");
  cmd->add_option("--folds", f.folds, "cross-fitting fold count (wins over config)");
  cmd->add_option("--alpha", f.alpha, "test level in (0,1)");
  cmd->add_option("--threads", f.threads,
                  "worker threads; 0 = HETDECOMP_THREADS or all logical cores");
  cmd->add_option("--out-dir", f.out_dir, "directory for report files");
  if (!wants_data) {
    cmd->add_option("--reps", f.reps, "replication count (wins over the preset)");
    cmd->add_flag("--full-scale", f.full_scale, "full-size replication counts");
  }
}

void capture_counts(CLI::App* cmd, CommonFlags& f) {
  f.have_seed = cmd->count("--seed") > 0;
  f.have_folds = cmd->count("--folds") > 0;
  f.have_alpha = cmd->count("--alpha") > 0;
  f.have_threads = cmd->count("--threads") > 0;
  if (cmd->get_option_no_throw("--reps")) f.have_reps = cmd->count("--reps") > 0;
}

std::string join_args(int argc, char** argv) {
  std::string s;
  for (int i = 0; i < argc; ++i) {
    if (i) s.push_back(' ');
    s += argv[i];
  }
  return s;
}

void write_outputs(const CommonFlags& f, const std::string& command, const json& config_echo,
                   std::uint64_t seed, int threads,
                   const std::vector<std::pair<std::string, std::string>>& files) {
  std::filesystem::create_directories(f.out_dir);
  std::vector<std::string> names;
  for (const auto& [name, _] : files) names.push_back(name);
  names.push_back("manifest.json");
  for (const auto& [name, content] : files)
    hd::io::write_text_file((std::filesystem::path(f.out_dir) / name).string(), content);
  const json manifest = hd::io::manifest_json(command, config_echo, seed, threads, names);
  hd::io::write_text_file((std::filesystem::path(f.out_dir) / "manifest.json").string(),
                          manifest.dump(2) + "\n");
  for (const auto& name : names)
    std::cout << "wrote " << (std::filesystem::path(f.out_dir) / name).string() << "\n";
}

// Merge command-line overrides into an assembled problem's options.
void apply_overrides(const CommonFlags& f, hd::DecompositionOptions& opt) {
  if (f.have_seed) opt.crossfit.seed = f.seed;
  if (f.have_folds) opt.crossfit.folds = f.folds;
  if (f.have_threads) opt.crossfit.threads = f.threads;
  opt.crossfit.threads = hd::resolve_threads(opt.crossfit.threads == 1 && !f.have_threads
                                                 ? 0
                                                 : opt.crossfit.threads);
}

double effective_alpha(const CommonFlags& f) {
  const double a = f.have_alpha ? f.alpha : 0.05;
  hd::require(a > 0.0 && a < 1.0, hd::errc::invalid_alpha, "alpha must lie in (0,1)");
  return a;
}

void print_report(const hd::DecompositionReport& rep, const hd::AggregationScheme& scheme,
                  double alpha) {
  const double zc = hd::normal_quantile(1.0 - alpha / 2.0);
  std::printf("n = %zu, comparison: %s vs %s, %s vs %s\n", rep.n,
              scheme.arm_names[static_cast<std::size_t>(rep.arm)].c_str(),
              scheme.arm_names[static_cast<std::size_t>(rep.arm_ref)].c_str(),
              scheme.group_name(rep.group).c_str(), scheme.group_name(rep.group_ref).c_str());
  std::printf("%-14s %12s %12s %8s %10s  [%3.0f%% CI]\n", "parameter", "estimate", "se", "z", "p",
              100.0 * (1.0 - alpha));
  for (const auto& e : rep.entries) {
    if (e.id.level == hd::ParameterId::Level::cell) continue;
    if (e.id.level == hd::ParameterId::Level::arm_contrast) continue;
    std::printf("%-14s %12.6f %12.6f %8.3f %10.3g  [%.6f, %.6f]\n", e.name.c_str(), e.estimate,
                e.se, e.z, e.p, e.estimate - zc * e.se, e.estimate + zc * e.se);
  }
  std::printf("identity check: raw-contrast gap %.3g (%s), adjusted-contrast gap %.3g (%s)\n",
              rep.identity.dim_gap, rep.identity.dim_flag ? "FLAGGED" : "ok",
              rep.identity.adim_gap, rep.identity.adim_flag ? "FLAGGED" : "ok");
  for (const auto& w : rep.diagnostics.warnings) std::printf("warning: %s\n", w.c_str());
}

int run_decompose(const CommonFlags& f, const std::string& command) {
  hd::io::RunConfig cfg = hd::io::load_config(f.config);
  hd::io::CsvTable csv = hd::io::read_csv(f.input);
  hd::io::AssembledProblem prob = hd::io::assemble_problem(csv, cfg);
  apply_overrides(f, prob.options);
  const double alpha = effective_alpha(f);

  hd::DecompositionReport rep = hd::run_decomposition(prob.data, prob.scheme, prob.options);
  print_report(rep, prob.scheme, alpha);

  json report = hd::io::report_to_json(rep, prob.scheme);
  report["alpha"] = alpha;
  write_outputs(f, command, cfg.raw, prob.options.crossfit.seed, prob.options.crossfit.threads,
                {{"report.json", report.dump(2) + "\n"},
                 {"plot_data.csv", hd::io::plot_table(rep, prob.scheme)}});
  return 0;
}

int run_test(const CommonFlags& f, const std::string& command) {
  hd::io::RunConfig cfg = hd::io::load_config(f.config);
  hd::io::CsvTable csv = hd::io::read_csv(f.input);
  hd::io::AssembledProblem prob = hd::io::assemble_problem(csv, cfg);
  apply_overrides(f, prob.options);
  const double alpha = effective_alpha(f);
  const auto& opt = prob.options;

  // shared pipeline: validation, cross-fitted nuisances, frozen aggregates
  hd::ValidationReport val = hd::validate(prob.data, prob.scheme, opt.validation);
  hd::NuisanceEstimates nuis = hd::fit_granular(prob.data, opt.crossfit);
  hd::AggregateNuisances agg = hd::fit_aggregates(prob.data, prob.scheme, val.unit_group, nuis);
  hd::MomentContext ctx{prob.data, prob.scheme, val.unit_group, nuis, agg};
  hd::StrongNullInputs inputs =
      hd::strong_null_contrasts(ctx, opt.arm, opt.arm_ref, opt.group, opt.group_ref);
  const hd::StrongNullResult wald = hd::wald_test(inputs, alpha);
  const hd::StrongNullResult sup = hd::supremum_test(inputs, alpha);
  hd::DecompositionReport rep = hd::run_decomposition(prob.data, prob.scheme, opt);
  const hd::StrongNullResult d1 = hd::delta1_test(rep, alpha);

  std::printf("strong homogeneity tests (J = %d, alpha = %g)\n", wald.J, alpha);
  std::printf("%-10s %12s %14s %10s %7s\n", "method", "statistic", "critical value", "p", "reject");
  for (const auto* r : {&wald, &sup, &d1})
    std::printf("%-10s %12.6f %14.6f %10.3g %7s\n", r->method.c_str(), r->statistic,
                r->critical_value, r->p_value, r->reject ? "yes" : "no");

  json out = hd::io::tests_to_json(wald, sup, d1);
  out["n"] = static_cast<std::uint64_t>(prob.data.n());
  out["alpha"] = alpha;
  write_outputs(f, command, cfg.raw, opt.crossfit.seed, opt.crossfit.threads,
                {{"tests.json", out.dump(2) + "\n"}});
  return 0;
}

hd::sim::StudyPreset load_preset(const CommonFlags& f) {
  hd::require(!f.preset.empty(), hd::errc::unknown_preset,
              "this subcommand needs --preset (figure2-dense, figure2-sparse, coverage-null, "
              "partition-smooth)");
  hd::sim::StudyPreset preset =
      hd::sim::study_preset(f.preset, f.have_seed ? f.seed : 20260814ull, f.full_scale);
  if (f.have_reps) {
    preset.power.replications = f.reps;
    preset.coverage.replications = f.reps;
    preset.partition.replications = f.reps;
  }
  if (f.have_alpha) {
    preset.power.alpha = f.alpha;
    preset.coverage.alpha = f.alpha;
  }
  const int threads = hd::resolve_threads(f.have_threads ? f.threads : 0);
  preset.power.threads = threads;
  preset.coverage.threads = threads;
  preset.partition.threads = threads;
  if (f.have_folds) {
    preset.coverage.folds = f.folds;
    preset.partition.folds = f.folds;
  }
  return preset;
}

json preset_echo(const hd::sim::StudyPreset& p, const CommonFlags& f) {
  json j;
  j["preset"] = p.name;
  j["kind"] = p.kind;
  j["full_scale"] = f.full_scale;
  if (p.kind == "power") {
    j["replications"] = p.power.replications;
    j["n"] = p.power.n;
    j["alpha"] = p.power.alpha;
  } else if (p.kind == "coverage") {
    j["replications"] = p.coverage.replications;
    j["n"] = p.coverage.n;
    j["alpha"] = p.coverage.alpha;
    j["folds"] = p.coverage.folds;
  } else {
    j["replications"] = p.partition.replications;
    j["n"] = p.partition.n;
    j["folds"] = p.partition.folds;
  }
  return j;
}

int run_power_study(const hd::sim::StudyPreset& preset, const CommonFlags& f,
                    const std::string& command) {
  const hd::sim::PowerStudyResult res = hd::sim::power_study(preset.power);
  std::printf("%-8s %4s %-10s %6s %10s %10s %10s\n", "design", "J", "method", "null",
              "rejection", "mc_se", "analytic");
  for (const auto& r : res.rows)
    std::printf("%-8s %4d %-10s %6d %10.4f %10.4f %10.4f\n", res.config.design_name.c_str(),
                r.j_count, r.method.c_str(), r.null_effect ? 1 : 0, r.rejection_rate, r.mc_se,
                r.analytic);
  write_outputs(f, command, preset_echo(preset, f), preset.power.seed, preset.power.threads,
                {{"power_table.csv", hd::io::power_table_csv(res)}});
  return 0;
}

int run_coverage_study(const hd::sim::StudyPreset& preset, const CommonFlags& f,
                       const std::string& command) {
  const hd::sim::CoverageStudyResult res = hd::sim::coverage_study(preset.coverage);
  std::printf("%-28s %12s %10s %8s %8s %8s\n", "parameter", "truth", "coverage", "mc_se", "ks",
              "fails");
  for (const auto& r : res.rows)
    std::printf("%-28s %12.6f %10.4f %8.4f %8.4f %8d\n", r.parameter.c_str(), r.truth,
                r.coverage, r.mc_se, r.ks_distance, r.failure_count);
  write_outputs(f, command, preset_echo(preset, f), preset.coverage.seed, preset.coverage.threads,
                {{"coverage_table.csv", hd::io::coverage_table_csv(res)}});
  return 0;
}

int run_partition_study(const hd::sim::StudyPreset& preset, const CommonFlags& f,
                        const std::string& command) {
  const hd::sim::PartitionStudyResult res = hd::sim::partition_study(preset.partition);
  std::printf("true all-dose average = %.6f\n", res.true_value);
  std::printf("%-8s %14s %14s %10s %14s\n", "levels", "abs_mean_gap", "mean_abs_gap", "mc_se",
              "population");
  for (const auto& r : res.rows)
    std::printf("%-8d %14.6g %14.6g %10.3g %14.6g\n", r.levels, r.abs_mean_gap, r.mean_abs_gap,
                r.mc_se, r.population_gap);
  std::printf("fitted log-log slope of |mean gap| on levels: %.3f\n", res.fitted_slope);
  write_outputs(f, command, preset_echo(preset, f), preset.partition.seed,
                preset.partition.threads,
                {{"partition_table.csv", hd::io::partition_table_csv(res)}});
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Decomposition of group-level treatment-effect contrasts under aggregation"};
  app.require_subcommand(1);
  const std::string command = join_args(argc, argv);

  CommonFlags decompose_f, test_f, power_f, simulate_f, partition_f;
  CLI::App* decompose = app.add_subcommand(
      "decompose", "estimate the component decomposition with joint inference");
  add_common(decompose, decompose_f, true);
  CLI::App* test_cmd =
      app.add_subcommand("test", "strong-homogeneity tests of a between-group contrast");
  add_common(test_cmd, test_f, true);
  CLI::App* power = app.add_subcommand("power", "power sampling study or closed-form power");
  add_common(power, power_f, false);
  bool analytic = false;
  int analytic_j = 0;
  double xi_dense = 0.0;
  power->add_flag("--analytic", analytic, "closed-form power instead of a sampling study");
  power->add_option("--J", analytic_j, "contrast count for --analytic");
  power->add_option("--xi-dense", xi_dense,
                    "standardized alternative applied to every contrast (--analytic)");
  CLI::App* simulate = app.add_subcommand("simulate", "run any named study preset");
  add_common(simulate, simulate_f, false);
  CLI::App* partition =
      app.add_subcommand("partition", "partition-refinement bias study for a continuous dose");
  add_common(partition, partition_f, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (decompose->parsed()) {
      capture_counts(decompose, decompose_f);
      return run_decompose(decompose_f, command);
    }
    if (test_cmd->parsed()) {
      capture_counts(test_cmd, test_f);
      return run_test(test_f, command);
    }
    if (power->parsed()) {
      capture_counts(power, power_f);
      if (analytic) {
        hd::require(analytic_j >= 1, hd::errc::invalid_config,
                    "--analytic needs --J >= 1");
        hd::PowerSpec spec;
        spec.alpha = effective_alpha(power_f);
        spec.xi = Eigen::VectorXd::Constant(analytic_j, xi_dense);
        spec.e_ta = Eigen::VectorXd::Constant(analytic_j, 1.0 / analytic_j);
        const hd::AnalyticPower p = hd::analytic_power(spec);
        std::printf("wald      %.6f\nsupremum  %.6f\ndelta1    %.6f\n", p.wald, p.supremum,
                    p.delta1);
        return 0;
      }
      hd::sim::StudyPreset preset = load_preset(power_f);
      hd::require(preset.kind == "power", hd::errc::unknown_preset,
                  "preset '" + preset.name + "' is not a power study");
      return run_power_study(preset, power_f, command);
    }
    if (simulate->parsed()) {
      capture_counts(simulate, simulate_f);
      hd::sim::StudyPreset preset = load_preset(simulate_f);
      if (preset.kind == "power") return run_power_study(preset, simulate_f, command);
      if (preset.kind == "coverage") return run_coverage_study(preset, simulate_f, command);
      return run_partition_study(preset, simulate_f, command);
    }
    if (partition->parsed()) {
      capture_counts(partition, partition_f);
      hd::sim::StudyPreset preset = load_preset(partition_f);
      hd::require(preset.kind == "partition", hd::errc::unknown_preset,
                  "preset '" + preset.name + "' is not a partition study");
      return run_partition_study(preset, partition_f, command);
    }
  } catch (const hd::Error& e) {
    std::cerr << "error [" << hd::errc_name(e.code()) << "]: " << e.what() << "\n";
    return e.input_side() ? 2 : 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
