#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <numeric>
#include <vector>

#include <Eigen/Dense>

#include "hetdecomp/common.hpp"
#include "hetdecomp/model.hpp"

namespace hetdecomp {

// Learners are pure functions of (training rows, hyperparameters, seed).
// fit() returns a model that fills granular predictions for requested rows.

class PropensityModel {
 public:
  virtual ~PropensityModel() = default;
  // Fill e_out(row, t) = P(T=t | X = x_row) for each requested row.
  virtual void predict(const Dataset& data, const std::vector<int>& rows,
                       Eigen::MatrixXd& e_out) const = 0;
};

class OutcomeModel {
 public:
  virtual ~OutcomeModel() = default;
  virtual void predict(const Dataset& data, const std::vector<int>& rows,
                       Eigen::MatrixXd& mu_out) const = 0;
};

class PropensityLearner {
 public:
  virtual ~PropensityLearner() = default;
  virtual std::unique_ptr<PropensityModel> fit(const Dataset& data,
                                               const std::vector<int>& train_rows,
                                               std::uint64_t seed) const = 0;
};

class OutcomeLearner {
 public:
  virtual ~OutcomeLearner() = default;
  virtual std::unique_ptr<OutcomeModel> fit(const Dataset& data,
                                            const std::vector<int>& train_rows,
                                            std::uint64_t seed) const = 0;
};

namespace detail {

inline std::vector<double> row_key(const Dataset& data, int i) {
  std::vector<double> key(static_cast<std::size_t>(data.x.cols()));
  for (Eigen::Index j = 0; j < data.x.cols(); ++j)
    key[static_cast<std::size_t>(j)] = data.x(i, j);
  return key;
}

struct Standardizer {
  Eigen::RowVectorXd mean;
  Eigen::RowVectorXd scale;

  void fit(const Dataset& data, const std::vector<int>& rows) {
    const Eigen::Index d = data.x.cols();
    mean = Eigen::RowVectorXd::Zero(d);
    scale = Eigen::RowVectorXd::Ones(d);
    for (int i : rows) mean += data.x.row(i);
    mean /= static_cast<double>(rows.size());
    Eigen::RowVectorXd var = Eigen::RowVectorXd::Zero(d);
    for (int i : rows) var += (data.x.row(i) - mean).array().square().matrix();
    var /= static_cast<double>(rows.size());
    for (Eigen::Index j = 0; j < d; ++j) scale[j] = var[j] > 1e-12 ? std::sqrt(var[j]) : 1.0;
  }

  Eigen::RowVectorXd apply(const Eigen::Ref<const Eigen::RowVectorXd>& row) const {
    return (row - mean).array() / scale.array();
  }
};

}  // namespace detail

// ---- cell frequency: exact match on discrete covariate rows ----

class CellFrequencyPropensity final : public PropensityModel {
 public:
  CellFrequencyPropensity(const Dataset& data, const std::vector<int>& rows) {
    n_t_ = data.n_treatments();
    marginal_ = Eigen::VectorXd::Zero(n_t_);
    for (int i : rows) {
      auto [it, inserted] = cells_.try_emplace(detail::row_key(data, i),
                                               Eigen::VectorXd::Zero(n_t_));
      it->second[data.t[static_cast<std::size_t>(i)]] += 1.0;
      marginal_[data.t[static_cast<std::size_t>(i)]] += 1.0;
    }
    marginal_ /= marginal_.sum();
    for (auto& [key, counts] : cells_) counts /= counts.sum();
  }

  void predict(const Dataset& data, const std::vector<int>& rows,
               Eigen::MatrixXd& e_out) const override {
    for (int i : rows) {
      auto it = cells_.find(detail::row_key(data, i));
      e_out.row(i) = (it == cells_.end() ? marginal_ : it->second).transpose();
    }
  }

 private:
  int n_t_;
  std::map<std::vector<double>, Eigen::VectorXd> cells_;
  Eigen::VectorXd marginal_;
};

class CellFrequencyOutcome final : public OutcomeModel {
 public:
  CellFrequencyOutcome(const Dataset& data, const std::vector<int>& rows) {
    const int n_t = data.n_treatments();
    global_sum_ = Eigen::VectorXd::Zero(n_t);
    global_count_ = Eigen::VectorXd::Zero(n_t);
    for (int i : rows) {
      auto [it, inserted] = cells_.try_emplace(
          detail::row_key(data, i),
          std::pair<Eigen::VectorXd, Eigen::VectorXd>{Eigen::VectorXd::Zero(n_t),
                                                      Eigen::VectorXd::Zero(n_t)});
      const int t = data.t[static_cast<std::size_t>(i)];
      it->second.first[t] += data.y[i];
      it->second.second[t] += 1.0;
      global_sum_[t] += data.y[i];
      global_count_[t] += 1.0;
    }
    for (int t = 0; t < n_t; ++t)
      require(global_count_[t] > 0.0, errc::learner_failure,
              "no training outcomes for treatment '" +
                  data.treatment_labels[static_cast<std::size_t>(t)] + "'");
  }

  void predict(const Dataset& data, const std::vector<int>& rows,
               Eigen::MatrixXd& mu_out) const override {
    const int n_t = static_cast<int>(global_sum_.size());
    for (int i : rows) {
      auto it = cells_.find(detail::row_key(data, i));
      for (int t = 0; t < n_t; ++t) {
        if (it != cells_.end() && it->second.second[t] > 0.0)
          mu_out(i, t) = it->second.first[t] / it->second.second[t];
        else
          mu_out(i, t) = global_sum_[t] / global_count_[t];
      }
    }
  }

 private:
  std::map<std::vector<double>, std::pair<Eigen::VectorXd, Eigen::VectorXd>> cells_;
  Eigen::VectorXd global_sum_, global_count_;
};

// ---- multinomial logistic regression with an L2 penalty on slopes ----

class MultinomialRidgePropensity final : public PropensityModel {
 public:
  MultinomialRidgePropensity(const Dataset& data, const std::vector<int>& rows, double lambda) {
    n_t_ = data.n_treatments();
    std_.fit(data, rows);
    const Eigen::Index d = data.x.cols();
    const int n_free = n_t_ - 1;  // class 0 is the reference
    const Eigen::Index p = d + 1;
    beta_ = Eigen::MatrixXd::Zero(n_free, p);
    if (n_free == 0) return;

    const int n = static_cast<int>(rows.size());
    Eigen::MatrixXd z(n, p);
    Eigen::VectorXi lab(n);
    for (int r = 0; r < n; ++r) {
      z(r, 0) = 1.0;
      z.row(r).tail(d) = std_.apply(data.x.row(rows[static_cast<std::size_t>(r)]));
      lab[r] = data.t[static_cast<std::size_t>(rows[static_cast<std::size_t>(r)])];
    }

    auto loss_of = [&](const Eigen::MatrixXd& beta) {
      double loss = 0.0;
      for (int r = 0; r < n; ++r) {
        Eigen::VectorXd eta = beta * z.row(r).transpose();
        double mx = std::max(0.0, eta.maxCoeff());
        double lse = std::exp(-mx);
        for (int c = 0; c < n_free; ++c) lse += std::exp(eta[c] - mx);
        loss += mx + std::log(lse);
        if (lab[r] > 0) loss -= eta[lab[r] - 1];
      }
      loss += 0.5 * lambda * beta.rightCols(d).squaredNorm();
      return loss;
    };

    const Eigen::Index dim = static_cast<Eigen::Index>(n_free) * p;
    double loss = loss_of(beta_);
    for (int iter = 0; iter < 100; ++iter) {
      Eigen::VectorXd grad = Eigen::VectorXd::Zero(dim);
      Eigen::MatrixXd hess = Eigen::MatrixXd::Zero(dim, dim);
      Eigen::VectorXd prob(n_free);
      for (int r = 0; r < n; ++r) {
        Eigen::VectorXd eta = beta_ * z.row(r).transpose();
        double mx = std::max(0.0, eta.maxCoeff());
        double denom = std::exp(-mx);
        for (int c = 0; c < n_free; ++c) denom += std::exp(eta[c] - mx);
        for (int c = 0; c < n_free; ++c) prob[c] = std::exp(eta[c] - mx) / denom;
        for (int c = 0; c < n_free; ++c) {
          double resid = prob[c] - (lab[r] == c + 1 ? 1.0 : 0.0);
          grad.segment(c * p, p) += resid * z.row(r).transpose();
          for (int c2 = 0; c2 < n_free; ++c2) {
            double w = prob[c] * ((c == c2 ? 1.0 : 0.0) - prob[c2]);
            if (w != 0.0)
              hess.block(c * p, c2 * p, p, p) += w * z.row(r).transpose() * z.row(r);
          }
        }
      }
      for (int c = 0; c < n_free; ++c) {
        grad.segment(c * p + 1, d) += lambda * beta_.row(c).tail(d).transpose();
        hess.block(c * p + 1, c * p + 1, d, d).diagonal().array() += lambda;
      }
      hess.diagonal().array() += 1e-10 * static_cast<double>(n);
      if (grad.lpNorm<Eigen::Infinity>() < 1e-9 * static_cast<double>(n)) break;
      Eigen::VectorXd step = hess.ldlt().solve(grad);
      double scale = 1.0;
      Eigen::MatrixXd cand;
      double cand_loss = loss;
      for (int h = 0; h < 30; ++h) {
        cand = beta_;
        for (int c = 0; c < n_free; ++c) cand.row(c) -= scale * step.segment(c * p, p).transpose();
        cand_loss = loss_of(cand);
        if (cand_loss <= loss + 1e-12) break;
        scale *= 0.5;
      }
      if (cand_loss > loss + 1e-12) break;
      beta_ = cand;
      if (loss - cand_loss < 1e-12 * (1.0 + std::abs(loss))) {
        loss = cand_loss;
        break;
      }
      loss = cand_loss;
    }
  }

  void predict(const Dataset& data, const std::vector<int>& rows,
               Eigen::MatrixXd& e_out) const override {
    const Eigen::Index d = data.x.cols();
    const int n_free = n_t_ - 1;
    Eigen::VectorXd z(d + 1);
    for (int i : rows) {
      z[0] = 1.0;
      z.tail(d) = std_.apply(data.x.row(i)).transpose();
      if (n_free == 0) {
        e_out(i, 0) = 1.0;
        continue;
      }
      Eigen::VectorXd eta = beta_ * z;
      double mx = std::max(0.0, eta.maxCoeff());
      double denom = std::exp(-mx);
      for (int c = 0; c < n_free; ++c) denom += std::exp(eta[c] - mx);
      e_out(i, 0) = std::exp(-mx) / denom;
      for (int c = 0; c < n_free; ++c) e_out(i, c + 1) = std::exp(eta[c] - mx) / denom;
    }
  }

 private:
  int n_t_;
  detail::Standardizer std_;
  Eigen::MatrixXd beta_;  // (T-1) x (d+1)
};

// ---- one ridge regression per treatment level ----

class PerTreatmentRidgeOutcome final : public OutcomeModel {
 public:
  PerTreatmentRidgeOutcome(const Dataset& data, const std::vector<int>& rows, double lambda) {
    const int n_t = data.n_treatments();
    const Eigen::Index d = data.x.cols();
    std_.fit(data, rows);
    beta_ = Eigen::MatrixXd::Zero(n_t, d + 1);
    for (int t = 0; t < n_t; ++t) {
      std::vector<int> sub;
      for (int i : rows)
        if (data.t[static_cast<std::size_t>(i)] == t) sub.push_back(i);
      require(!sub.empty(), errc::learner_failure,
              "no training outcomes for treatment '" +
                  data.treatment_labels[static_cast<std::size_t>(t)] + "'");
      Eigen::MatrixXd z(sub.size(), d + 1);
      Eigen::VectorXd y(sub.size());
      for (std::size_t r = 0; r < sub.size(); ++r) {
        z(static_cast<Eigen::Index>(r), 0) = 1.0;
        z.row(static_cast<Eigen::Index>(r)).tail(d) = std_.apply(data.x.row(sub[r]));
        y[static_cast<Eigen::Index>(r)] = data.y[sub[r]];
      }
      Eigen::MatrixXd gram = z.transpose() * z;
      gram.diagonal().tail(d).array() += lambda;  // intercept unpenalized
      gram.diagonal().array() += 1e-12 * static_cast<double>(sub.size());
      beta_.row(t) = gram.ldlt().solve(z.transpose() * y).transpose();
    }
  }

  void predict(const Dataset& data, const std::vector<int>& rows,
               Eigen::MatrixXd& mu_out) const override {
    const Eigen::Index d = data.x.cols();
    Eigen::VectorXd z(d + 1);
    for (int i : rows) {
      z[0] = 1.0;
      z.tail(d) = std_.apply(data.x.row(i)).transpose();
      mu_out.row(i) = (beta_ * z).transpose();
    }
  }

 private:
  detail::Standardizer std_;
  Eigen::MatrixXd beta_;
};

// ---- k-nearest neighbors on standardized covariates ----

namespace detail {

inline std::vector<int> nearest(const Eigen::MatrixXd& train_z, const Eigen::RowVectorXd& q,
                                int k) {
  const int n = static_cast<int>(train_z.rows());
  k = std::min(k, n);
  std::vector<std::pair<double, int>> dist(static_cast<std::size_t>(n));
  for (int r = 0; r < n; ++r)
    dist[static_cast<std::size_t>(r)] = {(train_z.row(r) - q).squaredNorm(), r};
  std::partial_sort(dist.begin(), dist.begin() + k, dist.end());
  std::vector<int> out(static_cast<std::size_t>(k));
  for (int r = 0; r < k; ++r) out[static_cast<std::size_t>(r)] = dist[static_cast<std::size_t>(r)].second;
  return out;
}

}  // namespace detail

class KnnPropensity final : public PropensityModel {
 public:
  KnnPropensity(const Dataset& data, const std::vector<int>& rows, int k) : k_(k) {
    std_.fit(data, rows);
    z_.resize(rows.size(), data.x.cols());
    lab_.resize(rows.size());
    for (std::size_t r = 0; r < rows.size(); ++r) {
      z_.row(static_cast<Eigen::Index>(r)) = std_.apply(data.x.row(rows[r]));
      lab_[r] = data.t[static_cast<std::size_t>(rows[r])];
    }
  }

  void predict(const Dataset& data, const std::vector<int>& rows,
               Eigen::MatrixXd& e_out) const override {
    for (int i : rows) {
      auto nb = detail::nearest(z_, std_.apply(data.x.row(i)), k_);
      Eigen::VectorXd counts = Eigen::VectorXd::Zero(data.n_treatments());
      for (int r : nb) counts[lab_[static_cast<std::size_t>(r)]] += 1.0;
      e_out.row(i) = (counts / static_cast<double>(nb.size())).transpose();
    }
  }

 private:
  int k_;
  detail::Standardizer std_;
  Eigen::MatrixXd z_;
  std::vector<int> lab_;
};

class KnnOutcome final : public OutcomeModel {
 public:
  KnnOutcome(const Dataset& data, const std::vector<int>& rows, int k) : k_(k) {
    std_.fit(data, rows);
    const int n_t = data.n_treatments();
    z_by_t_.resize(static_cast<std::size_t>(n_t));
    y_by_t_.resize(static_cast<std::size_t>(n_t));
    std::vector<std::vector<int>> rows_by_t(static_cast<std::size_t>(n_t));
    for (int i : rows) rows_by_t[static_cast<std::size_t>(data.t[static_cast<std::size_t>(i)])].push_back(i);
    for (int t = 0; t < n_t; ++t) {
      const auto& sub = rows_by_t[static_cast<std::size_t>(t)];
      require(!sub.empty(), errc::learner_failure,
              "no training outcomes for treatment '" +
                  data.treatment_labels[static_cast<std::size_t>(t)] + "'");
      auto& z = z_by_t_[static_cast<std::size_t>(t)];
      auto& y = y_by_t_[static_cast<std::size_t>(t)];
      z.resize(sub.size(), data.x.cols());
      y.resize(sub.size());
      for (std::size_t r = 0; r < sub.size(); ++r) {
        z.row(static_cast<Eigen::Index>(r)) = std_.apply(data.x.row(sub[r]));
        y[static_cast<Eigen::Index>(r)] = data.y[sub[r]];
      }
    }
  }

  void predict(const Dataset& data, const std::vector<int>& rows,
               Eigen::MatrixXd& mu_out) const override {
    for (int i : rows) {
      Eigen::RowVectorXd q = std_.apply(data.x.row(i));
      for (std::size_t t = 0; t < z_by_t_.size(); ++t) {
        auto nb = detail::nearest(z_by_t_[t], q, k_);
        double s = 0.0;
        for (int r : nb) s += y_by_t_[t][r];
        mu_out(i, static_cast<Eigen::Index>(t)) = s / static_cast<double>(nb.size());
      }
    }
  }

 private:
  int k_;
  detail::Standardizer std_;
  std::vector<Eigen::MatrixXd> z_by_t_;
  std::vector<Eigen::VectorXd> y_by_t_;
};

// ---- user-supplied hooks (also used to inject known nuisances in studies) ----

using PropensityFn = std::function<void(const Dataset&, const std::vector<int>& train_rows,
                                        const std::vector<int>& predict_rows, Eigen::MatrixXd&)>;
using OutcomeFn = PropensityFn;

class CustomPropensityModel final : public PropensityModel {
 public:
  CustomPropensityModel(PropensityFn fn, std::vector<int> train) : fn_(std::move(fn)), train_(std::move(train)) {}
  void predict(const Dataset& data, const std::vector<int>& rows,
               Eigen::MatrixXd& e_out) const override {
    fn_(data, train_, rows, e_out);
  }

 private:
  PropensityFn fn_;
  std::vector<int> train_;
};

class CustomOutcomeModel final : public OutcomeModel {
 public:
  CustomOutcomeModel(OutcomeFn fn, std::vector<int> train) : fn_(std::move(fn)), train_(std::move(train)) {}
  void predict(const Dataset& data, const std::vector<int>& rows,
               Eigen::MatrixXd& mu_out) const override {
    fn_(data, train_, rows, mu_out);
  }

 private:
  OutcomeFn fn_;
  std::vector<int> train_;
};

// ---- configuration-facing learner specification ----

struct LearnerSpec {
  enum class Kind { cell_frequency, multinomial_ridge, per_treatment_ridge, knn, custom };
  Kind kind = Kind::cell_frequency;
  double lambda = 1e-3;  // ridge penalty
  int k = 50;            // neighbor count
  PropensityFn custom_propensity;
  OutcomeFn custom_outcome;

  static LearnerSpec cell_frequency_spec() { return {}; }
  static LearnerSpec multinomial(double lambda) {
    LearnerSpec s;
    s.kind = Kind::multinomial_ridge;
    s.lambda = lambda;
    return s;
  }
  static LearnerSpec ridge(double lambda) {
    LearnerSpec s;
    s.kind = Kind::per_treatment_ridge;
    s.lambda = lambda;
    return s;
  }
  static LearnerSpec knn_spec(int k) {
    LearnerSpec s;
    s.kind = Kind::knn;
    s.k = k;
    return s;
  }
  static LearnerSpec custom_p(PropensityFn fn) {
    LearnerSpec s;
    s.kind = Kind::custom;
    s.custom_propensity = std::move(fn);
    return s;
  }
  static LearnerSpec custom_y(OutcomeFn fn) {
    LearnerSpec s;
    s.kind = Kind::custom;
    s.custom_outcome = std::move(fn);
    return s;
  }
};

class GenericPropensityLearner final : public PropensityLearner {
 public:
  explicit GenericPropensityLearner(LearnerSpec spec) : spec_(std::move(spec)) {}
  std::unique_ptr<PropensityModel> fit(const Dataset& data, const std::vector<int>& train_rows,
                                       std::uint64_t) const override {
    switch (spec_.kind) {
      case LearnerSpec::Kind::cell_frequency:
        return std::make_unique<CellFrequencyPropensity>(data, train_rows);
      case LearnerSpec::Kind::multinomial_ridge:
        return std::make_unique<MultinomialRidgePropensity>(data, train_rows, spec_.lambda);
      case LearnerSpec::Kind::knn:
        return std::make_unique<KnnPropensity>(data, train_rows, spec_.k);
      case LearnerSpec::Kind::custom:
        require(static_cast<bool>(spec_.custom_propensity), errc::invalid_config,
                "custom propensity learner missing its hook");
        return std::make_unique<CustomPropensityModel>(spec_.custom_propensity, train_rows);
      default:
        fail(errc::invalid_config, "learner kind not usable for propensities");
    }
  }

 private:
  LearnerSpec spec_;
};

class GenericOutcomeLearner final : public OutcomeLearner {
 public:
  explicit GenericOutcomeLearner(LearnerSpec spec) : spec_(std::move(spec)) {}
  std::unique_ptr<OutcomeModel> fit(const Dataset& data, const std::vector<int>& train_rows,
                                    std::uint64_t) const override {
    switch (spec_.kind) {
      case LearnerSpec::Kind::cell_frequency:
        return std::make_unique<CellFrequencyOutcome>(data, train_rows);
      case LearnerSpec::Kind::per_treatment_ridge:
        return std::make_unique<PerTreatmentRidgeOutcome>(data, train_rows, spec_.lambda);
      case LearnerSpec::Kind::knn:
        return std::make_unique<KnnOutcome>(data, train_rows, spec_.k);
      case LearnerSpec::Kind::custom:
        require(static_cast<bool>(spec_.custom_outcome), errc::invalid_config,
                "custom outcome learner missing its hook");
        return std::make_unique<CustomOutcomeModel>(spec_.custom_outcome, train_rows);
      default:
        fail(errc::invalid_config, "learner kind not usable for outcomes");
    }
  }

 private:
  LearnerSpec spec_;
};

}  // namespace hetdecomp
