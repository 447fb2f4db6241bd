#pragma once

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "hetdecomp/common.hpp"
#include "hetdecomp/decomp.hpp"
#include "hetdecomp/hypothesis.hpp"
#include "hetdecomp/model.hpp"
#include "hetdecomp/simulate.hpp"

// Delimited-text ingestion, JSON configuration, and serialization of
// reports, plot tables, study tables, and run manifests.
namespace hetdecomp::io {

inline constexpr const char* kLibraryVersion = "0.1.0";

using nlohmann::json;

// ---------------------------------------------------------------------------
// Delimited text
// ---------------------------------------------------------------------------
struct CsvTable {
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;

  int column_index(const std::string& name) const {
    for (std::size_t i = 0; i < columns.size(); ++i)
      if (columns[i] == name) return static_cast<int>(i);
    return -1;
  }
  int require_column(const std::string& name) const {
    const int idx = column_index(name);
    require(idx >= 0, errc::invalid_config, "unknown column '" + name + "'");
    return idx;
  }
};

// Comma-separated with a header row; double quotes guard embedded commas
// and doubled quotes escape themselves.
inline CsvTable parse_csv(const std::string& text, const std::string& origin) {
  CsvTable out;
  std::vector<std::string> row;
  std::string cell;
  bool quoted = false;
  bool header_done = false;
  const auto end_cell = [&]() {
    row.push_back(cell);
    cell.clear();
  };
  const auto end_row = [&]() {
    end_cell();
    if (!header_done) {
      out.columns = row;
      require(!out.columns.empty(), errc::io_error, origin + ": empty header row");
      header_done = true;
    } else {
      require(row.size() == out.columns.size(), errc::io_error,
              origin + ": row " + std::to_string(out.rows.size() + 1) + " has " +
                  std::to_string(row.size()) + " cells, expected " +
                  std::to_string(out.columns.size()));
      out.rows.push_back(row);
    }
    row.clear();
  };
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          cell.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cell.push_back(c);
      }
      continue;
    }
    switch (c) {
      case '"':
        quoted = true;
        break;
      case ',':
        end_cell();
        break;
      case '\r':
        break;
      case '\n':
        end_row();
        break;
      default:
        cell.push_back(c);
    }
  }
  if (!cell.empty() || !row.empty()) end_row();
  require(header_done, errc::io_error, origin + ": no header row");
  return out;
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), errc::io_error, "cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  require(!in.bad(), errc::io_error, "read failed for '" + path + "'");
  return ss.str();
}

inline CsvTable read_csv(const std::string& path) { return parse_csv(read_text_file(path), path); }

inline void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  require(static_cast<bool>(out), errc::io_error, "cannot write '" + path + "'");
  out << content;
  out.flush();
  require(!out.bad(), errc::io_error, "write failed for '" + path + "'");
}

namespace detail {

inline std::string trimmed(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

inline bool missing_token(const std::string& s) {
  return s.empty() || s == "NA" || s == "na" || s == "N/A" || s == "NaN" || s == "nan" ||
         s == "null" || s == "NULL" || s == ".";
}

inline double parse_cell(const std::string& raw, const std::string& column, std::size_t row) {
  const std::string s = trimmed(raw);
  require(!missing_token(s), errc::missing_value,
          "column '" + column + "' row " + std::to_string(row + 1) + " is missing");
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  require(end == s.c_str() + s.size() && std::isfinite(v), errc::invalid_config,
          "column '" + column + "' row " + std::to_string(row + 1) + " is not numeric: '" + s +
              "'");
  return v;
}

inline std::string format_number(double v) {
  // Shortest decimal string that parses back to the same double, so emitted
  // tables stay both readable and bit-exactly reproducible.
  char buf[40];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Run configuration
// ---------------------------------------------------------------------------
struct ColumnBindings {
  std::string outcome;
  std::string treatment;              // label column; empty when a dose is bound
  std::string dose;                   // continuous dose column
  std::vector<std::string> covariates;
  std::string group;                  // optional explicit group-label column
};

struct GroupSettings {
  // either a label column (bound via ColumnBindings::group) ...
  std::vector<std::string> labels;  // optional fixed label -> id order
  // ... or a threshold rule on one covariate
  std::string covariate;
  double threshold = 0.0;
  bool use_threshold = false;
  std::vector<std::string> names;  // display names (threshold rule)
};

struct PartitionSettings {
  int bins = 0;                 // equal-mass bin count (0 = use explicit edges)
  std::vector<double> edges;    // explicit edges
  std::vector<double> atoms;
};

struct ComparisonSettings {
  std::string arm, arm_ref, group, group_ref;  // names; empty -> defaults
};

struct RunConfig {
  ColumnBindings columns;
  std::vector<std::pair<std::string, std::vector<std::string>>> arms;
  GroupSettings groups;
  std::optional<PartitionSettings> partition;
  ComparisonSettings comparison;
  DecompositionOptions options;
  double share_floor = 0.01;
  json raw;  // config echo for manifests
};

namespace detail {

inline LearnerSpec parse_learner(const json& j, const std::string& where) {
  LearnerSpec spec;
  require(j.is_object(), errc::invalid_config, where + " must be an object");
  const std::string kind = j.value("kind", "cell_frequency");
  if (kind == "cell_frequency") {
    spec.kind = LearnerSpec::Kind::cell_frequency;
  } else if (kind == "multinomial_ridge") {
    spec.kind = LearnerSpec::Kind::multinomial_ridge;
  } else if (kind == "per_treatment_ridge") {
    spec.kind = LearnerSpec::Kind::per_treatment_ridge;
  } else if (kind == "knn") {
    spec.kind = LearnerSpec::Kind::knn;
  } else {
    fail(errc::invalid_config, where + ": unknown learner kind '" + kind + "'");
  }
  spec.lambda = j.value("lambda", spec.lambda);
  spec.k = j.value("k", spec.k);
  return spec;
}

}  // namespace detail

inline RunConfig parse_config(const json& j) {
  require(j.is_object(), errc::invalid_config, "config root must be an object");
  RunConfig cfg;
  cfg.raw = j;

  if (j.contains("columns")) {
    const json& c = j.at("columns");
    cfg.columns.outcome = c.value("outcome", "");
    cfg.columns.treatment = c.value("treatment", "");
    cfg.columns.dose = c.value("dose", "");
    cfg.columns.group = c.value("group", "");
    if (c.contains("covariates"))
      for (const auto& v : c.at("covariates")) cfg.columns.covariates.push_back(v.get<std::string>());
  }

  if (j.contains("arms")) {
    const json& a = j.at("arms");
    if (a.is_array()) {
      for (const auto& entry : a) {
        require(entry.contains("name") && entry.contains("labels"), errc::invalid_config,
                "each arm needs 'name' and 'labels'");
        std::vector<std::string> labels;
        for (const auto& l : entry.at("labels")) labels.push_back(l.get<std::string>());
        cfg.arms.emplace_back(entry.at("name").get<std::string>(), std::move(labels));
      }
    } else if (a.is_object()) {
      for (auto it = a.begin(); it != a.end(); ++it) {
        std::vector<std::string> labels;
        for (const auto& l : it.value()) labels.push_back(l.get<std::string>());
        cfg.arms.emplace_back(it.key(), std::move(labels));
      }
    } else {
      fail(errc::invalid_config, "'arms' must be an array or object");
    }
  }

  if (j.contains("groups")) {
    const json& g = j.at("groups");
    if (g.contains("covariate")) {
      cfg.groups.use_threshold = true;
      cfg.groups.covariate = g.at("covariate").get<std::string>();
      require(g.contains("threshold"), errc::invalid_config,
              "threshold group rule needs 'threshold'");
      cfg.groups.threshold = g.at("threshold").get<double>();
      if (g.contains("names"))
        for (const auto& nm : g.at("names")) cfg.groups.names.push_back(nm.get<std::string>());
    }
    if (g.contains("column")) cfg.columns.group = g.at("column").get<std::string>();
    if (g.contains("labels"))
      for (const auto& l : g.at("labels")) cfg.groups.labels.push_back(l.get<std::string>());
  }

  if (j.contains("partition")) {
    const json& p = j.at("partition");
    PartitionSettings ps;
    ps.bins = p.value("bins", 0);
    if (p.contains("edges"))
      for (const auto& e : p.at("edges")) ps.edges.push_back(e.get<double>());
    if (p.contains("atoms"))
      for (const auto& a : p.at("atoms")) ps.atoms.push_back(a.get<double>());
    require(ps.bins > 0 || ps.edges.size() >= 2, errc::invalid_config,
            "'partition' needs either a positive 'bins' count or at least two 'edges'");
    cfg.partition = std::move(ps);
  }

  if (j.contains("comparison")) {
    const json& c = j.at("comparison");
    cfg.comparison.arm = c.value("arm", "");
    cfg.comparison.arm_ref = c.value("arm_ref", "");
    if (c.contains("group")) {
      if (c.at("group").is_number_integer())
        cfg.comparison.group = std::to_string(c.at("group").get<int>());
      else
        cfg.comparison.group = c.at("group").get<std::string>();
    }
    if (c.contains("group_ref")) {
      if (c.at("group_ref").is_number_integer())
        cfg.comparison.group_ref = std::to_string(c.at("group_ref").get<int>());
      else
        cfg.comparison.group_ref = c.at("group_ref").get<std::string>();
    }
  }

  if (j.contains("estimation")) {
    const json& e = j.at("estimation");
    cfg.options.crossfit.folds = e.value("folds", cfg.options.crossfit.folds);
    cfg.options.crossfit.seed = e.value("seed", cfg.options.crossfit.seed);
    cfg.options.crossfit.clip_floor = e.value("clip_floor", cfg.options.crossfit.clip_floor);
    cfg.options.crossfit.threads = e.value("threads", cfg.options.crossfit.threads);
    if (e.contains("propensity_learner"))
      cfg.options.crossfit.propensity =
          detail::parse_learner(e.at("propensity_learner"), "estimation.propensity_learner");
    if (e.contains("outcome_learner"))
      cfg.options.crossfit.outcome =
          detail::parse_learner(e.at("outcome_learner"), "estimation.outcome_learner");
  }
  if (j.contains("validation"))
    cfg.share_floor = j.at("validation").value("share_floor", cfg.share_floor);
  cfg.options.validation.share_floor = cfg.share_floor;
  return cfg;
}

inline RunConfig load_config(const std::string& path) {
  json j;
  try {
    j = json::parse(read_text_file(path));
  } catch (const json::exception& e) {
    fail(errc::invalid_config, "config '" + path + "' is not valid JSON: " + e.what());
  }
  return parse_config(j);
}

// ---------------------------------------------------------------------------
// Dataset + scheme assembly from a delimited table and a configuration
// ---------------------------------------------------------------------------
struct AssembledProblem {
  Dataset data;
  AggregationScheme scheme;
  DecompositionOptions options;
};

inline AssembledProblem assemble_problem(const CsvTable& csv, const RunConfig& cfg) {
  require(!cfg.columns.outcome.empty(), errc::invalid_config, "config must bind an outcome column");
  require(!cfg.columns.treatment.empty() || !cfg.columns.dose.empty(), errc::invalid_config,
          "config must bind a treatment or dose column");
  require(cfg.columns.treatment.empty() || cfg.columns.dose.empty(), errc::invalid_config,
          "bind either a treatment column or a dose column, not both");
  require(!cfg.arms.empty() || !cfg.columns.dose.empty(), errc::invalid_config,
          "config must declare arms");

  const std::size_t n = csv.rows.size();
  require(n > 0, errc::invalid_config, "input table has no data rows");

  AssembledProblem out;
  out.options = cfg.options;

  const int y_idx = csv.require_column(cfg.columns.outcome);
  out.data.y.resize(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i)
    out.data.y[static_cast<Eigen::Index>(i)] =
        detail::parse_cell(csv.rows[i][static_cast<std::size_t>(y_idx)], cfg.columns.outcome, i);

  // covariates (group label column, when present, is appended as a coded column)
  std::vector<int> cov_idx;
  for (const std::string& cname : cfg.columns.covariates)
    cov_idx.push_back(csv.require_column(cname));
  const bool group_by_column = !cfg.columns.group.empty();
  const int extra = group_by_column ? 1 : 0;
  out.data.x.resize(static_cast<Eigen::Index>(n),
                    static_cast<Eigen::Index>(cov_idx.size()) + extra);
  out.data.covariate_names = cfg.columns.covariates;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < cov_idx.size(); ++c)
      out.data.x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) =
          detail::parse_cell(csv.rows[i][static_cast<std::size_t>(cov_idx[c])],
                             cfg.columns.covariates[c], i);

  // groups
  std::vector<std::string> group_names;
  if (group_by_column) {
    const int g_idx = csv.require_column(cfg.columns.group);
    group_names = cfg.groups.labels;
    const bool fixed = !group_names.empty();
    std::vector<int> codes(n);
    for (std::size_t i = 0; i < n; ++i) {
      const std::string label = detail::trimmed(csv.rows[i][static_cast<std::size_t>(g_idx)]);
      require(!detail::missing_token(label), errc::missing_value,
              "column '" + cfg.columns.group + "' row " + std::to_string(i + 1) + " is missing");
      auto it = std::find(group_names.begin(), group_names.end(), label);
      if (it == group_names.end()) {
        require(!fixed, errc::invalid_config,
                "group label '" + label + "' not in the configured label list");
        group_names.push_back(label);
        it = group_names.end() - 1;
      }
      codes[i] = static_cast<int>(it - group_names.begin());
    }
    require(group_names.size() >= 1, errc::invalid_config, "no group labels found");
    const Eigen::Index gcol = out.data.x.cols() - 1;
    for (std::size_t i = 0; i < n; ++i)
      out.data.x(static_cast<Eigen::Index>(i), gcol) = codes[i];
    out.data.covariate_names.push_back(cfg.columns.group);
    out.scheme.group_rule.kind = GroupRule::Kind::column;
    out.scheme.group_rule.column = static_cast<int>(gcol);
    out.scheme.group_count = static_cast<int>(group_names.size());
    out.scheme.group_names = group_names;
  } else if (cfg.groups.use_threshold) {
    const auto it = std::find(cfg.columns.covariates.begin(), cfg.columns.covariates.end(),
                              cfg.groups.covariate);
    require(it != cfg.columns.covariates.end(), errc::invalid_config,
            "threshold group covariate '" + cfg.groups.covariate +
                "' is not among the bound covariates");
    out.scheme.group_rule.kind = GroupRule::Kind::threshold;
    out.scheme.group_rule.column = static_cast<int>(it - cfg.columns.covariates.begin());
    out.scheme.group_rule.cut = cfg.groups.threshold;
    out.scheme.group_count = 2;
    group_names = cfg.groups.names;
    if (group_names.size() != 2) {
      group_names = {cfg.groups.covariate + "<" + detail::format_number(cfg.groups.threshold),
                     cfg.groups.covariate + ">=" + detail::format_number(cfg.groups.threshold)};
    }
    out.scheme.group_names = group_names;
  } else {
    fail(errc::invalid_config,
         "config must define groups (a label column or a covariate threshold)");
  }

  // treatments: arm-declared labels first, then any unreferenced data labels
  if (!cfg.columns.treatment.empty()) {
    const int t_idx = csv.require_column(cfg.columns.treatment);
    std::vector<std::string> alphabet;
    for (const auto& arm : cfg.arms)
      for (const std::string& label : arm.second) {
        require(std::find(alphabet.begin(), alphabet.end(), label) == alphabet.end(),
                errc::overlapping_arms, "treatment label '" + label + "' listed twice");
        alphabet.push_back(label);
      }
    out.data.t.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      const std::string label = detail::trimmed(csv.rows[i][static_cast<std::size_t>(t_idx)]);
      require(!detail::missing_token(label), errc::missing_value,
              "column '" + cfg.columns.treatment + "' row " + std::to_string(i + 1) +
                  " is missing");
      auto it = std::find(alphabet.begin(), alphabet.end(), label);
      if (it == alphabet.end()) {
        alphabet.push_back(label);  // present in data but outside every arm
        it = alphabet.end() - 1;
      }
      out.data.t[i] = static_cast<int>(it - alphabet.begin());
    }
    out.data.treatment_labels = alphabet;
    out.scheme.arm_of.assign(alphabet.size(), -1);
    for (std::size_t a = 0; a < cfg.arms.size(); ++a) {
      out.scheme.arm_names.push_back(cfg.arms[a].first);
      for (const std::string& label : cfg.arms[a].second) {
        const auto it = std::find(alphabet.begin(), alphabet.end(), label);
        out.scheme.arm_of[static_cast<std::size_t>(it - alphabet.begin())] =
            static_cast<int>(a);
      }
    }
  } else {
    // continuous dose: read, partition, then label bins as treatments
    const int d_idx = csv.require_column(cfg.columns.dose);
    out.data.dose.resize(static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i)
      out.data.dose[static_cast<Eigen::Index>(i)] =
          detail::parse_cell(csv.rows[i][static_cast<std::size_t>(d_idx)], cfg.columns.dose, i);
    require(cfg.partition.has_value(), errc::invalid_config,
            "a dose column needs a 'partition' config entry");
    PartitionScheme part;
    if (!cfg.partition->edges.empty()) {
      part.edges = cfg.partition->edges;
      part.atoms = cfg.partition->atoms;
      part.check();
    } else {
      part = equal_mass_partition(out.data.dose, cfg.partition->bins, cfg.partition->atoms);
    }
    Dataset keep = std::move(out.data);
    out.data = discretize(keep, part);
    out.data.dose = std::move(keep.dose);
    // every partition label lands in one arm unless arms say otherwise
    if (cfg.arms.empty()) {
      out.scheme.arm_of.assign(out.data.treatment_labels.size(), 0);
      out.scheme.arm_names = {"all"};
      out.options.arm = 0;
      out.options.arm_ref = 0;
    } else {
      out.scheme.arm_of.assign(out.data.treatment_labels.size(), -1);
      for (std::size_t a = 0; a < cfg.arms.size(); ++a) {
        out.scheme.arm_names.push_back(cfg.arms[a].first);
        for (const std::string& label : cfg.arms[a].second) {
          bool found = false;
          for (std::size_t t = 0; t < out.data.treatment_labels.size(); ++t)
            if (out.data.treatment_labels[t] == label) {
              require(out.scheme.arm_of[t] < 0, errc::overlapping_arms,
                      "partition label '" + label + "' listed twice");
              out.scheme.arm_of[t] = static_cast<int>(a);
              found = true;
            }
          require(found, errc::invalid_config,
                  "arm references unknown partition label '" + label + "'");
        }
      }
    }
  }

  // resolve the requested comparison
  const auto arm_index = [&](const std::string& name, int fallback) {
    if (name.empty()) return fallback;
    for (std::size_t a = 0; a < out.scheme.arm_names.size(); ++a)
      if (out.scheme.arm_names[a] == name) return static_cast<int>(a);
    fail(errc::invalid_config, "unknown arm '" + name + "'");
  };
  const auto group_index = [&](const std::string& name, int fallback) {
    if (name.empty()) return fallback;
    for (std::size_t g = 0; g < out.scheme.group_names.size(); ++g)
      if (out.scheme.group_names[g] == name) return static_cast<int>(g);
    // also accept a plain group id
    char* end = nullptr;
    const long v = std::strtol(name.c_str(), &end, 10);
    if (end == name.c_str() + name.size() && v >= 0 && v < out.scheme.group_count)
      return static_cast<int>(v);
    fail(errc::invalid_config, "unknown group '" + name + "'");
  };
  out.options.arm = arm_index(cfg.comparison.arm, out.options.arm);
  out.options.arm_ref = arm_index(cfg.comparison.arm_ref, out.options.arm_ref);
  out.options.group = group_index(cfg.comparison.group, out.options.group);
  out.options.group_ref = group_index(cfg.comparison.group_ref, out.options.group_ref);
  return out;
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------
namespace detail {

inline const char* level_name(ParameterId::Level level) {
  switch (level) {
    case ParameterId::Level::cell: return "cell";
    case ParameterId::Level::arm_contrast: return "arm_contrast";
    case ParameterId::Level::group_contrast: return "group_contrast";
    case ParameterId::Level::dim_total: return "dim_total";
    case ParameterId::Level::adim_total: return "adim_total";
  }
  return "unknown";
}

}  // namespace detail

inline json report_to_json(const DecompositionReport& rep, const AggregationScheme& scheme) {
  json out;
  out["n"] = rep.n;
  out["seed"] = rep.seed;
  out["comparison"] = {{"arm", scheme.arm_names[static_cast<std::size_t>(rep.arm)]},
                       {"arm_ref", scheme.arm_names[static_cast<std::size_t>(rep.arm_ref)]},
                       {"group", scheme.group_name(rep.group)},
                       {"group_ref", scheme.group_name(rep.group_ref)}};
  json params = json::array();
  for (std::size_t p = 0; p < rep.entries.size(); ++p) {
    const ReportEntry& e = rep.entries[p];
    const ParameterId& id = rep.matrix.ids[p];
    json jp;
    jp["name"] = e.name;
    jp["level"] = detail::level_name(id.level);
    if (id.j >= 0) jp["component"] = component_label(id.j);
    if (id.arm >= 0) jp["arm"] = scheme.arm_names[static_cast<std::size_t>(id.arm)];
    if (id.group >= 0) jp["group"] = scheme.group_name(id.group);
    jp["estimate"] = e.estimate;
    jp["se"] = e.se;
    jp["z"] = e.z;
    jp["p"] = e.p;
    params.push_back(std::move(jp));
  }
  out["parameters"] = std::move(params);

  json cov;
  cov["parameters"] = rep.matrix.names;
  json mat = json::array();
  for (Eigen::Index r = 0; r < rep.matrix.sigma.rows(); ++r) {
    json rowj = json::array();
    for (Eigen::Index c = 0; c < rep.matrix.sigma.cols(); ++c) rowj.push_back(rep.matrix.sigma(r, c));
    mat.push_back(std::move(rowj));
  }
  cov["matrix"] = std::move(mat);
  out["covariance"] = std::move(cov);

  out["identity_check"] = {{"dim_components", rep.identity.dim_components},
                           {"dim_plain", rep.identity.dim_plain},
                           {"dim_gap", rep.identity.dim_gap},
                           {"dim_flag", rep.identity.dim_flag},
                           {"adim_components", rep.identity.adim_components},
                           {"adim_plugin", rep.identity.adim_plugin},
                           {"adim_gap", rep.identity.adim_gap},
                           {"adim_flag", rep.identity.adim_flag}};
  out["diagnostics"] = {{"clip_floor", rep.diagnostics.clip_floor},
                        {"clip_count", rep.diagnostics.clip_count},
                        {"max_clip_shift", rep.diagnostics.max_clip_shift},
                        {"min_cell_count", rep.diagnostics.min_cell_count},
                        {"warnings", rep.diagnostics.warnings}};
  return out;
}

// Long-format plot data: per-group component contributions plus their
// cross-group differences.
inline std::string plot_table(const DecompositionReport& rep, const AggregationScheme& scheme) {
  std::ostringstream ss;
  ss << "component,group,value,p\n";
  for (std::size_t p = 0; p < rep.entries.size(); ++p) {
    const ParameterId& id = rep.matrix.ids[p];
    const ReportEntry& e = rep.entries[p];
    if (id.level == ParameterId::Level::arm_contrast) {
      ss << component_label(id.j) << "," << scheme.group_name(id.group) << ","
         << detail::format_number(e.estimate) << "," << detail::format_number(e.p) << "\n";
    } else if (id.level == ParameterId::Level::group_contrast) {
      ss << component_label(id.j) << ",difference," << detail::format_number(e.estimate) << ","
         << detail::format_number(e.p) << "\n";
    }
  }
  return ss.str();
}

inline json tests_to_json(const StrongNullResult& wald, const StrongNullResult& supremum,
                          const StrongNullResult& delta1) {
  const auto one = [](const StrongNullResult& r) {
    return json{{"method", r.method},
                {"statistic", r.statistic},
                {"critical_value", r.critical_value},
                {"p_value", r.p_value},
                {"contrast_count", r.J},
                {"alpha", r.alpha},
                {"reject", r.reject}};
  };
  return json{{"tests", json::array({one(wald), one(supremum), one(delta1)})}};
}

inline std::string power_table_csv(const sim::PowerStudyResult& res) {
  std::ostringstream ss;
  ss << "design,J,method,null_effect,rejection_rate,mc_se,analytic\n";
  for (const auto& r : res.rows)
    ss << res.config.design_name << "," << r.j_count << "," << r.method << ","
       << (r.null_effect ? 1 : 0) << "," << detail::format_number(r.rejection_rate) << ","
       << detail::format_number(r.mc_se) << "," << detail::format_number(r.analytic) << "\n";
  return ss.str();
}

inline std::string coverage_table_csv(const sim::CoverageStudyResult& res) {
  std::ostringstream ss;
  ss << "parameter,truth,coverage,mc_se,ks_distance,mean_error,replications,failures\n";
  for (const auto& r : res.rows)
    ss << '"' << r.parameter << "\"," << detail::format_number(r.truth) << ","
       << detail::format_number(r.coverage) << "," << detail::format_number(r.mc_se) << ","
       << detail::format_number(r.ks_distance) << "," << detail::format_number(r.mean_error)
       << "," << r.replication_count << "," << r.failure_count << "\n";
  return ss.str();
}

inline std::string partition_table_csv(const sim::PartitionStudyResult& res) {
  std::ostringstream ss;
  ss << "levels,abs_mean_gap,mean_abs_gap,mc_se,population_gap\n";
  for (const auto& r : res.rows)
    ss << r.levels << "," << detail::format_number(r.abs_mean_gap) << ","
       << detail::format_number(r.mean_abs_gap) << "," << detail::format_number(r.mc_se) << ","
       << detail::format_number(r.population_gap) << "\n";
  return ss.str();
}

inline std::string dataset_to_csv(const Dataset& data) {
  std::ostringstream ss;
  ss << "y,t";
  for (std::size_t c = 0; c < static_cast<std::size_t>(data.x.cols()); ++c)
    ss << ","
       << (c < data.covariate_names.size() ? data.covariate_names[c] : "x" + std::to_string(c));
  if (data.dose.size() > 0) ss << ",dose";
  ss << "\n";
  for (std::size_t i = 0; i < data.n(); ++i) {
    ss << detail::format_number(data.y[static_cast<Eigen::Index>(i)]) << ",";
    if (!data.t.empty())
      ss << data.treatment_labels[static_cast<std::size_t>(data.t[i])];
    for (Eigen::Index c = 0; c < data.x.cols(); ++c)
      ss << "," << detail::format_number(data.x(static_cast<Eigen::Index>(i), c));
    if (data.dose.size() > 0)
      ss << "," << detail::format_number(data.dose[static_cast<Eigen::Index>(i)]);
    ss << "\n";
  }
  return ss.str();
}

inline json manifest_json(const std::string& command, const json& config_echo,
                          std::uint64_t seed, int threads,
                          const std::vector<std::string>& outputs) {
  json m;
  m["command"] = command;
  m["config"] = config_echo;
  m["seed"] = seed;
  m["threads"] = threads;
  m["outputs"] = outputs;
  m["versions"] = {{"library", kLibraryVersion},
                   {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." +
                                 std::to_string(EIGEN_MAJOR_VERSION) + "." +
                                 std::to_string(EIGEN_MINOR_VERSION)},
#if defined(__VERSION__)
                   {"compiler", __VERSION__}
#else
                   {"compiler", "unknown"}
#endif
  };
  return m;
}

}  // namespace hetdecomp::io
