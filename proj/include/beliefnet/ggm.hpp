#pragma once

// Gaussian graphical model parameterized as Sigma = D (I - Omega)^{-1} D with
// D = diag(delta): couplings Omega are partial correlations and delta are
// per-belief scalings whose mean acts as the network temperature.

#include <array>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "beliefnet/error.hpp"
#include "beliefnet/panel.hpp"

namespace beliefnet {

/// Number of unordered pairs among `p` beliefs.
constexpr std::size_t edge_count(std::size_t p) { return p * (p - 1) / 2; }

/// Row-major enumeration of the strict upper triangle: (0,1), (0,2), ..., (1,2), ...
struct Edge {
  std::size_t i = 0;
  std::size_t j = 0;
};

inline std::vector<Edge> enumerate_edges(std::size_t p) {
  std::vector<Edge> edges;
  edges.reserve(edge_count(p));
  for (std::size_t i = 0; i < p; ++i)
    for (std::size_t j = i + 1; j < p; ++j) edges.push_back({i, j});
  return edges;
}

/// Throws `model_domain` unless `omega` is a valid coupling matrix:
/// symmetric, zero diagonal, |w| < 1, and I - Omega positive definite.
inline void validate_coupling(const Eigen::MatrixXd& omega) {
  const auto p = omega.rows();
  if (omega.cols() != p) throw Error(ErrorKind::dimension, "coupling matrix must be square");
  for (Eigen::Index i = 0; i < p; ++i) {
    if (omega(i, i) != 0.0) throw Error(ErrorKind::model_domain, "coupling matrix needs a zero diagonal");
    for (Eigen::Index j = i + 1; j < p; ++j) {
      if (std::abs(omega(i, j) - omega(j, i)) > 1e-12)
        throw Error(ErrorKind::model_domain, "coupling matrix is not symmetric");
    }
  }
  const Eigen::MatrixXd m = Eigen::MatrixXd::Identity(p, p) - omega;
  Eigen::LLT<Eigen::MatrixXd> llt(m);
  if (llt.info() != Eigen::Success || llt.matrixLLT().diagonal().minCoeff() <= 1e-12)
    throw Error(ErrorKind::model_domain, "I - Omega is singular or not positive definite");
}

/// Sigma = D (I - Omega)^{-1} D.
inline Eigen::MatrixXd implied_covariance(const Eigen::MatrixXd& omega, const Eigen::VectorXd& delta) {
  if (delta.size() != omega.rows()) throw Error(ErrorKind::dimension, "delta and Omega disagree in size");
  if (delta.size() > 0 && !(delta.minCoeff() > 0.0))
    throw Error(ErrorKind::model_domain, "scaling values must be positive");
  validate_coupling(omega);
  const auto p = omega.rows();
  const Eigen::MatrixXd inv = (Eigen::MatrixXd::Identity(p, p) - omega).llt().solve(Eigen::MatrixXd::Identity(p, p));
  Eigen::MatrixXd sigma = delta.asDiagonal() * inv * delta.asDiagonal();
  return 0.5 * (sigma + sigma.transpose());
}

/// Inverse of `implied_covariance`: Omega_ij = -K_ij / sqrt(K_ii K_jj) and
/// delta_i = K_ii^{-1/2} with K = Sigma^{-1}.
struct NetworkParameters {
  Eigen::MatrixXd omega;
  Eigen::VectorXd delta;
};

inline NetworkParameters network_from_precision(const Eigen::MatrixXd& precision) {
  const auto p = precision.rows();
  NetworkParameters out;
  out.delta = precision.diagonal().array().rsqrt();
  out.omega = Eigen::MatrixXd::Zero(p, p);
  for (Eigen::Index i = 0; i < p; ++i)
    for (Eigen::Index j = 0; j < p; ++j)
      if (i != j) out.omega(i, j) = -precision(i, j) * out.delta(i) * out.delta(j);
  return out;
}

inline NetworkParameters network_from_covariance(const Eigen::MatrixXd& sigma) {
  const auto p = sigma.rows();
  Eigen::LLT<Eigen::MatrixXd> llt(sigma);
  if (llt.info() != Eigen::Success) throw Error(ErrorKind::model_domain, "covariance is not positive definite");
  return network_from_precision(llt.solve(Eigen::MatrixXd::Identity(p, p)));
}

// ---------------------------------------------------------------------------
// Sample moments

struct SampleMoments {
  Eigen::MatrixXd covariance;  // unbiased (n - 1 denominator)
  Eigen::VectorXd mean;
  std::size_t n = 0;
  bool rank_deficient = false;
};

/// Unbiased covariance and mean over persons of one persons x beliefs grid.
inline SampleMoments sample_covariance(const Eigen::MatrixXd& x) {
  const auto n = x.rows();
  const auto p = x.cols();
  if (n < p + 1)
    throw Error(ErrorKind::dimension, "sample covariance needs at least " + std::to_string(p + 1) +
                                          " persons, got " + std::to_string(n));
  SampleMoments m;
  m.n = static_cast<std::size_t>(n);
  m.mean = x.colwise().mean().transpose();
  const Eigen::MatrixXd centered = x.rowwise() - m.mean.transpose();
  m.covariance = (centered.transpose() * centered) / static_cast<double>(n - 1);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(m.covariance, Eigen::EigenvaluesOnly);
  const double top = std::max(eig.eigenvalues().maxCoeff(), 0.0);
  m.rank_deficient = p > 0 && eig.eigenvalues().minCoeff() <= 1e-12 * std::max(top, 1e-300);
  return m;
}

inline SampleMoments sample_covariance(const ResidualDataset& residuals, std::size_t time) {
  return sample_covariance(residuals.residuals.at(time));
}

/// Per-group sufficient statistics entering the likelihood; `covariance` is the
/// maximum-likelihood (divide-by-n) estimate.
struct GroupMoments {
  Eigen::MatrixXd covariance;
  Eigen::VectorXd mean;
  double n = 0.0;
};

inline GroupMoments group_moments(const Eigen::MatrixXd& x) {
  const SampleMoments s = sample_covariance(x);
  const double n = static_cast<double>(s.n);
  return {s.covariance * ((n - 1.0) / n), s.mean, n};
}

inline std::vector<GroupMoments> group_moments(const ResidualDataset& residuals) {
  std::vector<GroupMoments> out;
  out.reserve(residuals.n_times());
  for (const auto& r : residuals.residuals) out.push_back(group_moments(r));
  return out;
}

// ---------------------------------------------------------------------------
// Model specifications

/// Which parameter blocks are shared across time points, and whether the
/// coupling structure is searched for zeros. Admissible only when
/// equal scaling => equal intercepts => equal network.
struct ModelSpec {
  bool equal_network = false;
  bool equal_intercepts = false;
  bool equal_scaling = false;
  bool sparse = false;

  bool admissible() const {
    return (!equal_scaling || equal_intercepts) && (!equal_intercepts || equal_network);
  }

  ModelSpec dense() const { return {equal_network, equal_intercepts, equal_scaling, false}; }

  friend bool operator==(const ModelSpec&, const ModelSpec&) = default;

  std::string name() const {
    std::string base;
    if (equal_scaling) base = "All parameters equal";
    else if (equal_intercepts) base = "Equal networks and thresholds";
    else if (equal_network) base = "Equal networks";
    else base = "All parameters free";
    return base + (sparse ? " (sparse)" : " (dense)");
  }

  std::string key() const {
    std::string k;
    k += equal_network ? "equal" : "free";
    k += equal_intercepts ? "-equal" : "-free";
    k += equal_scaling ? "-equal" : "-free";
    k += sparse ? "-sparse" : "-dense";
    return k;
  }
};

/// The eight admissible specifications, ordered as in the usual fit table:
/// all free, equal networks, + equal intercepts, + equal scalings; dense then sparse.
inline std::array<ModelSpec, 8> all_specs() {
  return {{
      {false, false, false, false},
      {false, false, false, true},
      {true, false, false, false},
      {true, false, false, true},
      {true, true, false, false},
      {true, true, false, true},
      {true, true, true, false},
      {true, true, true, true},
  }};
}

inline ModelSpec parse_spec_key(const std::string& key) {
  for (const auto& s : all_specs())
    if (s.key() == key) return s;
  throw Error(ErrorKind::config, "unknown model specification '" + key + "'");
}

// ---------------------------------------------------------------------------
// Fitted model

enum class ParameterKind { coupling, log_scaling, intercept };

/// One free parameter; `time` < 0 marks a parameter shared by all time points.
struct ParameterEstimate {
  ParameterKind kind = ParameterKind::coupling;
  int time = -1;
  std::size_t i = 0;
  std::size_t j = 0;  // couplings only
  double estimate = 0.0;
  double se = 0.0;
};

struct FittedModel {
  ModelSpec spec;
  std::vector<std::string> beliefs;
  std::vector<std::string> time_points;
  std::vector<Eigen::MatrixXd> omega;   // per time point (identical when shared)
  std::vector<Eigen::VectorXd> delta;   // per time point
  std::vector<Eigen::VectorXd> mu;      // per time point
  std::vector<std::vector<bool>> support;  // per time point, per edge: false = structural zero
  std::vector<ParameterEstimate> parameters;
  double log_likelihood = 0.0;
  std::size_t k = 0;      // free parameters
  double n = 0.0;         // total observations
  double bic = 0.0;
  std::size_t iterations = 0;
  bool converged = false;

  std::size_t n_beliefs() const { return omega.empty() ? 0 : static_cast<std::size_t>(omega.front().rows()); }
  std::size_t n_times() const { return omega.size(); }

  /// Parameters fixed relative to the all-free dense model.
  std::size_t constrained_df() const {
    const std::size_t p = n_beliefs();
    return n_times() * (edge_count(p) + 2 * p) - k;
  }

  /// Implied covariance at time `t`.
  Eigen::MatrixXd sigma(std::size_t t) const { return implied_covariance(omega.at(t), delta.at(t)); }
};

inline double bic_of(double log_likelihood, std::size_t k, double n) {
  return -2.0 * log_likelihood + static_cast<double>(k) * std::log(n);
}

// ---------------------------------------------------------------------------
// Temperature

enum class TemperatureMode {
  scaling_mean,         // mean of delta
  precision_diag_mean,  // mean of the diagonal of Sigma^{-1}
};

inline TemperatureMode parse_temperature_mode(const std::string& s) {
  if (s == "scaling-mean") return TemperatureMode::scaling_mean;
  if (s == "precision-diag-mean") return TemperatureMode::precision_diag_mean;
  throw Error(ErrorKind::config, "unknown temperature mode '" + s + "'");
}

inline const char* to_string(TemperatureMode mode) {
  return mode == TemperatureMode::scaling_mean ? "scaling-mean" : "precision-diag-mean";
}

struct TemperatureEstimate {
  std::string time;
  double temperature = 0.0;
  double beta = 0.0;
};

inline std::vector<TemperatureEstimate> temperature_of(const FittedModel& model,
                                                       TemperatureMode mode = TemperatureMode::scaling_mean) {
  std::vector<TemperatureEstimate> out;
  for (std::size_t t = 0; t < model.n_times(); ++t) {
    double value = 0.0;
    if (mode == TemperatureMode::scaling_mean) {
      value = model.delta[t].mean();
    } else {
      // diag(Sigma^{-1})_i = 1 / delta_i^2 because diag(Omega) = 0
      value = model.delta[t].array().square().inverse().mean();
    }
    const std::string label = t < model.time_points.size() ? model.time_points[t] : std::to_string(t);
    out.push_back({label, value, 1.0 / value});
  }
  return out;
}

}  // namespace beliefnet
