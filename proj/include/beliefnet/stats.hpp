#pragma once

// Analysis statistics: correlations, Fisher-z random-effects meta-analysis,
// paired standardized mean change, centrality, and the distributional
// diagnostics used to check the Gaussian network assumptions.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>

#include "beliefnet/error.hpp"
#include "beliefnet/panel.hpp"

namespace beliefnet {

inline double two_sided_t_p(double t, double df) {
  if (std::isinf(t)) return 0.0;
  if (std::isnan(t) || !(df > 0.0)) return std::numeric_limits<double>::quiet_NaN();
  const boost::math::students_t dist(df);
  return 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t)));
}

inline double two_sided_normal_p(double z) {
  if (std::isinf(z)) return 0.0;
  return std::erfc(std::abs(z) / std::sqrt(2.0));
}

inline double normal_quantile(double prob) {
  return boost::math::quantile(boost::math::normal(0.0, 1.0), prob);
}

// ---------------------------------------------------------------------------
// Correlation

struct Correlation {
  double r = 0.0;
  double t = 0.0;
  double df = 0.0;
  double p = 1.0;
  std::size_t n = 0;
};

inline Correlation pearson(const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
  if (x.size() != y.size()) throw Error(ErrorKind::dimension, "pearson: vectors differ in length");
  if (x.size() < 3) throw Error(ErrorKind::dimension, "pearson: need at least 3 pairs");
  const Eigen::ArrayXd dx = x.array() - x.mean();
  const Eigen::ArrayXd dy = y.array() - y.mean();
  const double sxx = dx.square().sum();
  const double syy = dy.square().sum();
  if (!(sxx > 0.0) || !(syy > 0.0)) throw Error(ErrorKind::degenerate, "pearson: zero variance, correlation undefined");
  Correlation c;
  c.n = static_cast<std::size_t>(x.size());
  c.r = std::clamp((dx * dy).sum() / std::sqrt(sxx * syy), -1.0, 1.0);
  c.df = static_cast<double>(c.n) - 2.0;
  const double denom = 1.0 - c.r * c.r;
  c.t = denom > 0.0 ? c.r * std::sqrt(c.df / denom) : std::copysign(std::numeric_limits<double>::infinity(), c.r);
  c.p = two_sided_t_p(c.t, c.df);
  return c;
}

inline double fisher_z(double r) {
  if (!(std::abs(r) < 1.0)) throw Error(ErrorKind::domain, "Fisher z needs |r| < 1");
  return std::atanh(r);
}

inline double inverse_fisher_z(double z) { return std::tanh(z); }

// ---------------------------------------------------------------------------
// Meta-analysis

enum class EffectKind { correlation, mean_change };

inline const char* to_string(EffectKind k) { return k == EffectKind::correlation ? "correlation" : "mean-change"; }

/// For correlations `value` is r (SE ignored: the Fisher-z variance is
/// 1 / (n - 3)); for mean changes `value` is d with its standard error.
struct EffectEstimate {
  EffectKind kind = EffectKind::correlation;
  double value = 0.0;
  double se = 0.0;
  std::size_t n = 0;
  std::string group;
};

struct MetaResult {
  EffectKind kind = EffectKind::correlation;
  double pooled = 0.0;         // analysis scale (Fisher z or d)
  double pooled_effect = 0.0;  // back-transformed (r or d)
  double se = 0.0;
  double tau2 = 0.0;
  double q = 0.0;
  double z = 0.0;
  double p = 1.0;
  double ci_low = 0.0;   // 95%, back-transformed
  double ci_high = 0.0;
  std::vector<double> weights;  // normalized random-effects weights
  std::vector<std::string> groups;
};

/// DerSimonian-Laird random-effects pooling. `fixed_tau2` bypasses the
/// moment estimator (0 gives fixed-effect inverse-variance pooling).
inline MetaResult meta_random_effects(const std::vector<EffectEstimate>& estimates,
                                      std::optional<double> fixed_tau2 = std::nullopt) {
  if (estimates.size() < 2) throw Error(ErrorKind::aggregation, "meta-analysis needs at least 2 estimates");
  const EffectKind kind = estimates.front().kind;
  std::vector<double> y, v;
  MetaResult m;
  m.kind = kind;
  for (const auto& e : estimates) {
    if (e.kind != kind) throw Error(ErrorKind::aggregation, "meta-analysis mixes effect kinds");
    if (kind == EffectKind::correlation) {
      if (e.n < 4) throw Error(ErrorKind::aggregation, "correlation estimate needs n >= 4 for a Fisher-z variance");
      y.push_back(fisher_z(e.value));
      v.push_back(1.0 / (static_cast<double>(e.n) - 3.0));
    } else {
      if (!(e.se > 0.0)) throw Error(ErrorKind::aggregation, "mean-change estimate needs a positive standard error");
      y.push_back(e.value);
      v.push_back(e.se * e.se);
    }
    m.groups.push_back(e.group);
  }
  const std::size_t k = y.size();
  double sw = 0.0, sw2 = 0.0, swy = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    const double w = 1.0 / v[i];
    sw += w;
    sw2 += w * w;
    swy += w * y[i];
  }
  const double fixed = swy / sw;
  for (std::size_t i = 0; i < k; ++i) m.q += (y[i] - fixed) * (y[i] - fixed) / v[i];
  if (fixed_tau2) {
    m.tau2 = *fixed_tau2;
  } else {
    const double c = sw - sw2 / sw;
    m.tau2 = c > 0.0 ? std::max(0.0, (m.q - static_cast<double>(k - 1)) / c) : 0.0;
  }
  double sws = 0.0, swsy = 0.0;
  std::vector<double> ws(k);
  for (std::size_t i = 0; i < k; ++i) {
    ws[i] = 1.0 / (v[i] + m.tau2);
    sws += ws[i];
    swsy += ws[i] * y[i];
  }
  m.pooled = swsy / sws;
  m.se = std::sqrt(1.0 / sws);
  m.z = m.pooled / m.se;
  m.p = two_sided_normal_p(m.z);
  for (double w : ws) m.weights.push_back(w / sws);
  const double lo = m.pooled - 1.959963984540054 * m.se;
  const double hi = m.pooled + 1.959963984540054 * m.se;
  if (kind == EffectKind::correlation) {
    m.pooled_effect = inverse_fisher_z(m.pooled);
    m.ci_low = inverse_fisher_z(lo);
    m.ci_high = inverse_fisher_z(hi);
  } else {
    m.pooled_effect = m.pooled;
    m.ci_low = lo;
    m.ci_high = hi;
  }
  return m;
}

// ---------------------------------------------------------------------------
// Paired change

enum class Standardizer { change_score, pre_score };

struct MeanChange {
  double mean_difference = 0.0;  // mean(pre - post)
  double sd_difference = 0.0;
  double d = 0.0;
  double se = 0.0;
  double t = 0.0;
  double df = 0.0;
  double p = 1.0;
  std::size_t n = 0;
};

/// Paired standardized mean change, positive when post < pre.
///
/// change_score: d = mean(diff) / sd(diff), SE = sqrt(1/n + d^2 / (2n)).
/// pre_score:    d = mean(diff) / sd(pre),  SE = sqrt(2(1 - r)/n + d^2 / (2n)).
/// All-zero differences give d = t = 0; a constant non-zero difference has no
/// defined standardizer and throws `degenerate`.
inline MeanChange standardized_mean_change(const Eigen::VectorXd& pre, const Eigen::VectorXd& post,
                                           Standardizer mode = Standardizer::change_score) {
  if (pre.size() != post.size()) throw Error(ErrorKind::dimension, "pre and post differ in length");
  if (pre.size() < 3) throw Error(ErrorKind::dimension, "mean change needs at least 3 pairs");
  MeanChange mc;
  mc.n = static_cast<std::size_t>(pre.size());
  const double n = static_cast<double>(mc.n);
  const Eigen::ArrayXd diff = (pre - post).array();
  mc.mean_difference = diff.mean();
  mc.sd_difference = std::sqrt((diff - mc.mean_difference).square().sum() / (n - 1.0));
  mc.df = n - 1.0;
  if (!(mc.sd_difference > 1e-12 * std::max(1.0, std::abs(mc.mean_difference)))) {
    if (std::abs(mc.mean_difference) <= 1e-12) {
      mc.mean_difference = 0.0;
      mc.sd_difference = 0.0;
      mc.se = std::sqrt(1.0 / n);
      return mc;
    }
    throw Error(ErrorKind::degenerate, "change scores have zero variance");
  }
  mc.t = mc.mean_difference / (mc.sd_difference / std::sqrt(n));
  mc.p = two_sided_t_p(mc.t, mc.df);
  if (mode == Standardizer::change_score) {
    mc.d = mc.mean_difference / mc.sd_difference;
    mc.se = std::sqrt(1.0 / n + mc.d * mc.d / (2.0 * n));
  } else {
    const double sd_pre = std::sqrt((pre.array() - pre.mean()).square().sum() / (n - 1.0));
    if (!(sd_pre > 0.0)) throw Error(ErrorKind::degenerate, "pre scores have zero variance");
    const double r = pearson(pre, post).r;
    mc.d = mc.mean_difference / sd_pre;
    mc.se = std::sqrt(2.0 * (1.0 - r) / n + mc.d * mc.d / (2.0 * n));
  }
  return mc;
}

struct BeliefChange {
  double signed_change = 0.0;  // mean(moral, post) - mean(moral, pre)
  double absolute_change = 0.0;
};

/// Change of the mean moral belief between two waves.
inline BeliefChange absolute_belief_change(const PanelDataset& data, std::size_t person, std::size_t pre_wave,
                                           std::size_t post_wave) {
  const auto moral = data.beliefs_of_kind(BeliefKind::moral);
  if (moral.empty()) throw Error(ErrorKind::lookup, "panel has no moral beliefs");
  const auto i = static_cast<Eigen::Index>(person);
  double pre = 0.0, post = 0.0;
  for (auto j : moral) {
    pre += data.values.at(pre_wave)(i, static_cast<Eigen::Index>(j));
    post += data.values.at(post_wave)(i, static_cast<Eigen::Index>(j));
  }
  BeliefChange c;
  c.signed_change = (post - pre) / static_cast<double>(moral.size());
  c.absolute_change = std::abs(c.signed_change);
  return c;
}

struct DirectionTally {
  std::size_t positive = 0;
  std::size_t negative = 0;
  std::size_t unchanged = 0;

  double share_positive() const { return total() ? static_cast<double>(positive) / static_cast<double>(total()) : 0.0; }
  double share_negative() const { return total() ? static_cast<double>(negative) / static_cast<double>(total()) : 0.0; }
  std::size_t total() const { return positive + negative + unchanged; }
};

/// Strict sign tally of signed changes (no deadband).
inline DirectionTally direction_tally(const std::vector<double>& signed_changes) {
  DirectionTally tally;
  for (double c : signed_changes) {
    if (c > 0.0) ++tally.positive;
    else if (c < 0.0) ++tally.negative;
    else ++tally.unchanged;
  }
  return tally;
}

// ---------------------------------------------------------------------------
// Centrality

inline Eigen::VectorXd strength_centrality(const Eigen::MatrixXd& omega) {
  Eigen::MatrixXd a = omega.cwiseAbs();
  a.diagonal().setZero();
  return a.rowwise().sum();
}

/// |w_i,target| for every belief i (0 for the target itself).
inline Eigen::VectorXd direct_edge_to(const Eigen::MatrixXd& omega, const std::vector<std::string>& names,
                                      const std::string& target) {
  auto it = std::find(names.begin(), names.end(), target);
  if (it == names.end()) throw Error(ErrorKind::lookup, "belief '" + target + "' not in the network");
  const auto k = static_cast<Eigen::Index>(it - names.begin());
  Eigen::VectorXd out = omega.col(k).cwiseAbs();
  out(k) = 0.0;
  return out;
}

// ---------------------------------------------------------------------------
// Validation diagnostics

inline Eigen::MatrixXd correlation_matrix(const Eigen::MatrixXd& x) {
  const Eigen::MatrixXd c = x.rowwise() - x.colwise().mean();
  const Eigen::MatrixXd cov = c.transpose() * c;
  const Eigen::VectorXd sd = cov.diagonal().cwiseSqrt();
  Eigen::MatrixXd r(cov.rows(), cov.cols());
  for (Eigen::Index i = 0; i < cov.rows(); ++i)
    for (Eigen::Index j = 0; j < cov.cols(); ++j)
      r(i, j) = (sd(i) > 0.0 && sd(j) > 0.0) ? cov(i, j) / (sd(i) * sd(j)) : std::numeric_limits<double>::quiet_NaN();
  return r;
}

inline Eigen::VectorXd upper_triangle(const Eigen::MatrixXd& m) {
  std::vector<double> v;
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = i + 1; j < m.cols(); ++j) v.push_back(m(i, j));
  return Eigen::Map<Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

/// All person-waves stacked into one (persons * waves) x beliefs matrix.
inline Eigen::MatrixXd stack_waves(const PanelDataset& data) {
  const auto n = static_cast<Eigen::Index>(data.n_persons());
  Eigen::MatrixXd out(n * static_cast<Eigen::Index>(data.n_times()), static_cast<Eigen::Index>(data.n_beliefs()));
  for (std::size_t t = 0; t < data.n_times(); ++t) out.middleRows(static_cast<Eigen::Index>(t) * n, n) = data.values[t];
  return out;
}

struct MultilevelComparison {
  Eigen::MatrixXd pooled;  // correlations over all person-waves
  Eigen::MatrixXd within;  // correlations of person-centered scores
  std::optional<Correlation> agreement;  // between the upper triangles
  double mean_abs_pooled = 0.0;
  double mean_abs_within = 0.0;
};

inline MultilevelComparison multilevel_vs_pooled(const PanelDataset& data) {
  if (data.n_times() < 2) throw Error(ErrorKind::dimension, "multilevel comparison needs at least 2 waves");
  MultilevelComparison out;
  out.pooled = correlation_matrix(stack_waves(data));
  PanelDataset centered = data;
  Eigen::MatrixXd person_mean = Eigen::MatrixXd::Zero(data.values[0].rows(), data.values[0].cols());
  for (const auto& m : data.values) person_mean += m;
  person_mean /= static_cast<double>(data.n_times());
  for (auto& m : centered.values) m -= person_mean;
  out.within = correlation_matrix(stack_waves(centered));
  const Eigen::VectorXd up = upper_triangle(out.pooled);
  const Eigen::VectorXd uw = upper_triangle(out.within);
  if (up.size() > 0) {
    out.mean_abs_pooled = up.cwiseAbs().mean();
    out.mean_abs_within = uw.cwiseAbs().mean();
  }
  if (up.size() >= 3 && up.allFinite() && uw.allFinite()) {
    try {
      out.agreement = pearson(up, uw);
    } catch (const Error&) {
    }
  }
  return out;
}

struct NormalityDiagnostic {
  bool degenerate = false;
  Eigen::VectorXd pc_scores;  // leading principal component, standardized
  Eigen::VectorXd loadings;
  double skewness = 0.0;
  double excess_kurtosis = 0.0;
  double qq_max_deviation = 0.0;  // max |sorted z - normal quantile|
};

namespace detail {
inline void standardized_moments(const Eigen::VectorXd& x, NormalityDiagnostic& out) {
  const double n = static_cast<double>(x.size());
  const Eigen::ArrayXd c = x.array() - x.mean();
  const double m2 = c.square().sum() / n;
  if (!(m2 > 1e-300)) {
    out.degenerate = true;
    return;
  }
  out.skewness = c.cube().sum() / n / std::pow(m2, 1.5);
  out.excess_kurtosis = c.square().square().sum() / n / (m2 * m2) - 3.0;
  const double sd = std::sqrt(c.square().sum() / (n - 1.0));
  std::vector<double> z(c.data(), c.data() + c.size());
  for (auto& v : z) v /= sd;
  std::sort(z.begin(), z.end());
  double dev = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i)
    dev = std::max(dev, std::abs(z[i] - normal_quantile((static_cast<double>(i) + 0.5) / n)));
  out.qq_max_deviation = dev;
  out.pc_scores = (c / sd).matrix();
}
}  // namespace detail

/// Distributional check on the leading principal component of `x` (rows are
/// observations).
inline NormalityDiagnostic normality_diagnostic(const Eigen::MatrixXd& x) {
  NormalityDiagnostic out;
  if (x.rows() < 3 || x.cols() < 1) throw Error(ErrorKind::dimension, "normality diagnostic needs at least 3 rows");
  const Eigen::MatrixXd c = x.rowwise() - x.colwise().mean();
  const Eigen::MatrixXd cov = c.transpose() * c / static_cast<double>(x.rows() - 1);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  const Eigen::Index top = cov.rows() - 1;  // eigenvalues ascend
  if (!(eig.eigenvalues()(top) > 1e-300)) {
    out.degenerate = true;
    return out;
  }
  Eigen::VectorXd v = eig.eigenvectors().col(top);
  Eigen::Index arg = 0;
  v.cwiseAbs().maxCoeff(&arg);
  if (v(arg) < 0.0) v = -v;
  out.loadings = v;
  detail::standardized_moments(c * v, out);
  return out;
}

inline NormalityDiagnostic normality_diagnostic(const ResidualDataset& residuals) {
  return normality_diagnostic(stack_waves(as_panel(residuals)));
}

/// Simulated `level` quantile of the QQ max deviation for n standard normal draws.
inline double qq_envelope(std::size_t n, double level = 0.99, std::size_t replications = 400, std::uint64_t seed = 7) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  std::vector<double> devs;
  devs.reserve(replications);
  for (std::size_t r = 0; r < replications; ++r) {
    Eigen::VectorXd x(static_cast<Eigen::Index>(n));
    for (auto& v : x) v = normal(rng);
    NormalityDiagnostic d;
    detail::standardized_moments(x, d);
    devs.push_back(d.qq_max_deviation);
  }
  std::sort(devs.begin(), devs.end());
  const auto k = std::min(devs.size() - 1, static_cast<std::size_t>(std::ceil(level * static_cast<double>(devs.size()))) - 1);
  return devs[k];
}

struct VarianceDecomposition {
  Eigen::VectorXd within_person;    // mean over persons of the variance over waves
  Eigen::VectorXd between_person;   // variance across persons at the reference wave
  std::optional<Correlation> correlation;  // across beliefs
};

inline VarianceDecomposition variance_decomposition(const PanelDataset& data, std::size_t reference_wave = 0) {
  const std::size_t T = data.n_times();
  if (T < 2) throw Error(ErrorKind::dimension, "variance decomposition needs at least 2 waves");
  if (data.n_persons() < 2) throw Error(ErrorKind::dimension, "variance decomposition needs at least 2 persons");
  const auto n = static_cast<Eigen::Index>(data.n_persons());
  const auto p = static_cast<Eigen::Index>(data.n_beliefs());
  Eigen::MatrixXd mean = Eigen::MatrixXd::Zero(n, p);
  for (const auto& m : data.values) mean += m;
  mean /= static_cast<double>(T);
  Eigen::MatrixXd ss = Eigen::MatrixXd::Zero(n, p);
  for (const auto& m : data.values) ss += (m - mean).cwiseAbs2();
  VarianceDecomposition out;
  out.within_person = (ss / static_cast<double>(T - 1)).colwise().mean().transpose();
  const Eigen::MatrixXd& ref = data.values.at(reference_wave);
  const Eigen::MatrixXd c = ref.rowwise() - ref.colwise().mean();
  out.between_person = (c.cwiseAbs2().colwise().sum() / static_cast<double>(n - 1)).transpose();
  if (p >= 3) {
    try {
      out.correlation = pearson(out.within_person, out.between_person);
    } catch (const Error&) {
    }
  }
  return out;
}

}  // namespace beliefnet
