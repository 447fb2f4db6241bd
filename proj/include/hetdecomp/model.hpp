#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "hetdecomp/common.hpp"

namespace hetdecomp {

// Unit-level data. `t` holds dense codes into `treatment_labels`; `dose`
// is only populated for continuous effective treatments awaiting
// discretization (in which case `t` is empty).
struct Dataset {
  Eigen::VectorXd y;
  std::vector<int> t;
  std::vector<std::string> treatment_labels;
  Eigen::MatrixXd x;
  std::vector<std::string> covariate_names;
  Eigen::VectorXd dose;

  std::size_t n() const { return static_cast<std::size_t>(y.size()); }
  int n_treatments() const { return static_cast<int>(treatment_labels.size()); }
};

// Deterministic map from a covariate row to a group id.
struct GroupRule {
  enum class Kind { column, threshold, callback };
  Kind kind = Kind::column;
  int column = -1;
  double cut = 0.0;  // threshold rule: x[column] >= cut -> group 1
  std::function<int(const Eigen::Ref<const Eigen::RowVectorXd>&)> fn;

  int group_of(const Eigen::Ref<const Eigen::RowVectorXd>& row, int group_count) const {
    int g = -1;
    switch (kind) {
      case Kind::column: {
        double v = row[column];
        require(std::isfinite(v) && v == std::floor(v), errc::invalid_config,
                "group column must hold integer codes");
        g = static_cast<int>(v);
        break;
      }
      case Kind::threshold:
        g = row[column] >= cut ? 1 : 0;
        break;
      case Kind::callback:
        g = fn(row);
        break;
    }
    require(g >= 0 && g < group_count, errc::invalid_config,
            "group id " + std::to_string(g) + " outside [0," + std::to_string(group_count) + ")");
    return g;
  }
};

// Mutually exclusive treatment arms plus a group rule. arm_of[t] is the arm
// index of treatment code t, or -1 when the label is not referenced.
struct AggregationScheme {
  std::vector<int> arm_of;
  std::vector<std::string> arm_names;
  GroupRule group_rule;
  int group_count = 2;
  std::vector<std::string> group_names;

  int n_arms() const { return static_cast<int>(arm_names.size()); }

  std::vector<int> arm_members(int arm) const {
    std::vector<int> out;
    for (int t = 0; t < static_cast<int>(arm_of.size()); ++t)
      if (arm_of[t] == arm) out.push_back(t);
    return out;
  }

  std::string group_name(int g) const {
    if (g < static_cast<int>(group_names.size())) return group_names[g];
    return "g" + std::to_string(g);
  }
};

inline std::vector<int> groups_of(const Dataset& data, const AggregationScheme& scheme) {
  std::vector<int> g(data.n());
  for (std::size_t i = 0; i < data.n(); ++i)
    g[i] = scheme.group_rule.group_of(data.x.row(static_cast<Eigen::Index>(i)),
                                      scheme.group_count);
  return g;
}

// Joint counts of treatments by groups with marginals.
struct CellTable {
  Eigen::MatrixXi counts;  // n_treatments x n_groups
  std::vector<std::string> treatment_labels;
  std::vector<std::string> group_names;

  int treatment_total(int t) const { return counts.row(t).sum(); }
  int group_total(int g) const { return counts.col(g).sum(); }
  int total() const { return counts.sum(); }
  double share(int t, int g) const {
    return static_cast<double>(counts(t, g)) / static_cast<double>(total());
  }
};

struct ValidationOptions {
  double share_floor = 0.01;  // warn when an arm or group share drops below this
};

struct ValidationReport {
  CellTable cells;
  std::vector<int> unit_group;
  std::vector<std::string> warnings;
};

inline ValidationReport validate(const Dataset& data, const AggregationScheme& scheme,
                                 const ValidationOptions& opt = {}) {
  require(data.n() > 0, errc::invalid_config, "dataset is empty");
  require(data.t.size() == data.n(), errc::invalid_config,
          "treatment column length does not match outcome length");
  require(data.x.rows() == static_cast<Eigen::Index>(data.n()), errc::invalid_config,
          "covariate rows do not match outcome length");
  require(static_cast<int>(scheme.arm_of.size()) == data.n_treatments(), errc::invalid_config,
          "arm map size does not match the treatment alphabet");

  for (std::size_t i = 0; i < data.n(); ++i) {
    require(std::isfinite(data.y[static_cast<Eigen::Index>(i)]), errc::missing_value,
            "outcome missing or non-finite at row " + std::to_string(i));
    require(data.t[i] >= 0 && data.t[i] < data.n_treatments(), errc::unknown_treatment_label,
            "treatment code out of range at row " + std::to_string(i));
  }
  for (Eigen::Index i = 0; i < data.x.rows(); ++i)
    for (Eigen::Index j = 0; j < data.x.cols(); ++j)
      require(std::isfinite(data.x(i, j)), errc::missing_value,
              "covariate '" +
                  (j < static_cast<Eigen::Index>(data.covariate_names.size())
                       ? data.covariate_names[static_cast<std::size_t>(j)]
                       : ("x" + std::to_string(j))) +
                  "' missing at row " + std::to_string(i));

  ValidationReport rep;
  rep.unit_group = groups_of(data, scheme);

  CellTable cells;
  cells.counts = Eigen::MatrixXi::Zero(data.n_treatments(), scheme.group_count);
  cells.treatment_labels = data.treatment_labels;
  cells.group_names = scheme.group_names;
  for (std::size_t i = 0; i < data.n(); ++i) cells.counts(data.t[i], rep.unit_group[i])++;

  const double n = static_cast<double>(data.n());
  for (int a = 0; a < scheme.n_arms(); ++a) {
    auto members = scheme.arm_members(a);
    require(!members.empty(), errc::empty_arm,
            "arm '" + scheme.arm_names[a] + "' references no treatment label");
    long count = 0;
    for (int t : members) count += cells.treatment_total(t);
    require(count > 0, errc::empty_arm, "arm '" + scheme.arm_names[a] + "' contains no units");
    if (static_cast<double>(count) / n < opt.share_floor)
      rep.warnings.push_back("arm '" + scheme.arm_names[a] + "' share below floor");
  }
  for (int g = 0; g < scheme.group_count; ++g) {
    int count = cells.group_total(g);
    require(count > 0, errc::empty_group, "group '" + scheme.group_name(g) + "' contains no units");
    if (static_cast<double>(count) / n < opt.share_floor)
      rep.warnings.push_back("group '" + scheme.group_name(g) + "' share below floor");
  }
  for (int t = 0; t < data.n_treatments(); ++t) {
    if (scheme.arm_of[t] < 0) continue;
    for (int g = 0; g < scheme.group_count; ++g)
      if (cells.counts(t, g) == 0)
        rep.warnings.push_back("empty cell (t=" + data.treatment_labels[t] + ", group=" +
                               scheme.group_name(g) + ")");
  }
  rep.cells = std::move(cells);
  return rep;
}

// Dose partition: optional exact-valued atoms followed by interval bins.
// Bins are left-closed/right-open except the last, which is closed.
struct PartitionScheme {
  std::vector<double> edges;
  std::vector<double> atoms;

  int n_bins() const { return static_cast<int>(edges.size()) - 1; }
  int n_labels() const { return static_cast<int>(atoms.size()) + n_bins(); }

  void check() const {
    require(edges.size() >= 2, errc::invalid_partition, "partition needs at least two edges");
    for (std::size_t i = 0; i + 1 < edges.size(); ++i)
      require(edges[i] < edges[i + 1], errc::invalid_partition,
              "partition edges must be strictly increasing");
    for (double a : atoms)
      require(std::isfinite(a), errc::invalid_partition, "atom values must be finite");
  }

  // Label index: atoms first (by position), then bins.
  int label_of(double dose) const {
    for (std::size_t k = 0; k < atoms.size(); ++k)
      if (dose == atoms[k]) return static_cast<int>(k);
    require(dose >= edges.front() && dose <= edges.back(), errc::invalid_partition,
            "dose " + std::to_string(dose) + " outside partition range");
    auto it = std::upper_bound(edges.begin(), edges.end(), dose);
    int bin = static_cast<int>(it - edges.begin()) - 1;
    bin = std::min(bin, n_bins() - 1);
    return static_cast<int>(atoms.size()) + bin;
  }

  std::vector<std::string> labels() const {
    std::vector<std::string> out;
    char buf[64];
    for (double a : atoms) {
      std::snprintf(buf, sizeof(buf), "atom(%g)", a);
      out.emplace_back(buf);
    }
    for (int b = 0; b < n_bins(); ++b) {
      std::snprintf(buf, sizeof(buf), "[%g,%g%c", edges[static_cast<std::size_t>(b)],
                    edges[static_cast<std::size_t>(b) + 1], b + 1 == n_bins() ? ']' : ')');
      out.emplace_back(buf);
    }
    return out;
  }
};

// Equal-mass bin edges from the observed non-atom doses.
inline PartitionScheme equal_mass_partition(const Eigen::VectorXd& doses, int n_bins,
                                            std::vector<double> atoms = {}) {
  require(n_bins >= 1, errc::invalid_partition, "need at least one bin");
  std::vector<double> cont;
  cont.reserve(static_cast<std::size_t>(doses.size()));
  for (Eigen::Index i = 0; i < doses.size(); ++i) {
    double d = doses[i];
    require(std::isfinite(d), errc::missing_value, "dose missing at row " + std::to_string(i));
    if (std::find(atoms.begin(), atoms.end(), d) == atoms.end()) cont.push_back(d);
  }
  require(cont.size() >= static_cast<std::size_t>(n_bins) + 1, errc::invalid_partition,
          "too few continuous doses for the requested bin count");
  std::sort(cont.begin(), cont.end());
  PartitionScheme part;
  part.atoms = std::move(atoms);
  part.edges.resize(static_cast<std::size_t>(n_bins) + 1);
  part.edges.front() = cont.front();
  part.edges.back() = cont.back();
  for (int k = 1; k < n_bins; ++k) {
    double q = static_cast<double>(k) / static_cast<double>(n_bins);
    double pos = q * static_cast<double>(cont.size() - 1);
    std::size_t lo = static_cast<std::size_t>(pos);
    double w = pos - static_cast<double>(lo);
    double e = (1.0 - w) * cont[lo] + w * cont[std::min(lo + 1, cont.size() - 1)];
    part.edges[static_cast<std::size_t>(k)] = e;
  }
  for (std::size_t i = 0; i + 1 < part.edges.size(); ++i)
    require(part.edges[i] < part.edges[i + 1], errc::invalid_partition,
            "degenerate equal-mass edges (too many ties in doses)");
  return part;
}

// Replaces a continuous dose with partition labels.
inline Dataset discretize(const Dataset& data, const PartitionScheme& part) {
  part.check();
  require(data.dose.size() == static_cast<Eigen::Index>(data.n()), errc::invalid_config,
          "discretize needs a dataset with a continuous dose column");
  Dataset out;
  out.y = data.y;
  out.x = data.x;
  out.covariate_names = data.covariate_names;
  out.treatment_labels = part.labels();
  out.t.resize(data.n());
  for (std::size_t i = 0; i < data.n(); ++i)
    out.t[i] = part.label_of(data.dose[static_cast<Eigen::Index>(i)]);
  return out;
}

}  // namespace hetdecomp
