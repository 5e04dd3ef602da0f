#pragma once

// Sparse structure search (Wald pruning followed by score-test guided
// step-up) and BIC selection over the eight model specifications.

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "beliefnet/error.hpp"
#include "beliefnet/ggm.hpp"
#include "beliefnet/ggm_fit.hpp"
#include "beliefnet/panel.hpp"
#include "beliefnet/parallel.hpp"

namespace beliefnet {

struct SearchOptions {
  double prune_alpha = 0.01;
  FitOptions fit;
  std::size_t threads = 1;
};

inline std::size_t edge_index(std::size_t p, std::size_t i, std::size_t j) {
  if (i > j) std::swap(i, j);
  return i * p - i * (i + 1) / 2 + (j - i - 1);
}

/// Two-sided normal p-value of a Wald z statistic.
inline double wald_p_value(double estimate, double se) {
  if (!(se > 0.0) || !std::isfinite(se)) return 1.0;
  return std::erfc(std::abs(estimate / se) / std::sqrt(2.0));
}

namespace detail {

struct Candidate {
  int time = -1;  // -1: shared edge
  std::size_t edge = 0;
  double modification_index = 0.0;
};

/// Score-test statistics for every structurally-zero coupling of `model`.
inline std::vector<Candidate> modification_indices(const std::vector<GroupMoments>& groups, const FittedModel& model,
                                                   const FitOptions& options) {
  const std::size_t p = model.n_beliefs();
  const std::size_t times = model.n_times();
  const Layout full = make_layout(model.spec, p, times, dense_support(p, times));
  const Eigen::VectorXd theta = start_values(full, groups, options.ridge, &model);
  const Evaluation ev = evaluate(full, theta, groups, true);
  if (!ev.valid) return {};

  std::vector<int> free_idx;
  std::vector<Candidate> cands;
  std::vector<int> cand_idx;
  std::vector<bool> is_candidate(full.size(), false);
  for (std::size_t t = 0; t < times; ++t) {
    for (std::size_t e = 0; e < full.edges.size(); ++e) {
      if (model.support[t][e]) continue;
      const int idx = full.omega[t][e];
      if (is_candidate[static_cast<std::size_t>(idx)]) continue;
      is_candidate[static_cast<std::size_t>(idx)] = true;
      cands.push_back({model.spec.equal_network ? -1 : static_cast<int>(t), e, 0.0});
      cand_idx.push_back(idx);
    }
  }
  for (std::size_t a = 0; a < full.size(); ++a)
    if (!is_candidate[a]) free_idx.push_back(static_cast<int>(a));
  if (cands.empty()) return cands;

  const auto nf = static_cast<Eigen::Index>(free_idx.size());
  Eigen::MatrixXd iff(nf, nf);
  for (Eigen::Index a = 0; a < nf; ++a)
    for (Eigen::Index b = 0; b < nf; ++b) iff(a, b) = ev.information(free_idx[static_cast<std::size_t>(a)], free_idx[static_cast<std::size_t>(b)]);
  Eigen::LDLT<Eigen::MatrixXd> ldlt(iff);
  for (std::size_t c = 0; c < cands.size(); ++c) {
    const int idx = cand_idx[c];
    Eigen::VectorXd ifc(nf);
    for (Eigen::Index a = 0; a < nf; ++a) ifc(a) = ev.information(free_idx[static_cast<std::size_t>(a)], idx);
    const double efficient = ev.information(idx, idx) - ifc.dot(ldlt.solve(ifc));
    const double g = ev.gradient(idx);
    cands[c].modification_index = efficient > 0.0 ? g * g / efficient : 0.0;
  }
  return cands;
}

inline void set_edge(Support& support, int time, std::size_t edge, bool value) {
  if (time < 0) {
    for (auto& s : support) s[edge] = value;
  } else {
    support[static_cast<std::size_t>(time)][edge] = value;
  }
}

}  // namespace detail

/// Prune-step-up structure search starting from a fitted dense model.
///
/// Prune: couplings whose Wald p-value is >= `alpha` become structural zeros
/// and the model is refitted, repeated until every remaining coupling is
/// significant. Step-up: the zeroed coupling with the largest modification
/// index is restored and kept when it lowers BIC; repeated until no
/// restoration helps. Returns the dense model (relabelled sparse) when nothing
/// prunes or the search ends above the dense BIC.
inline FittedModel prune_step_up(const std::vector<GroupMoments>& groups, const FittedModel& dense,
                                 const SearchOptions& options = {}) {
  ModelSpec spec = dense.spec;
  spec.sparse = true;
  FittedModel dense_as_sparse = dense;
  dense_as_sparse.spec = spec;

  const std::size_t p = dense.n_beliefs();
  FittedModel current = dense_as_sparse;
  Support support = dense.support;
  bool pruned_any = false;

  for (std::size_t round = 0; round < edge_count(p) * dense.n_times() + 1; ++round) {
    bool pruned = false;
    for (const auto& prm : current.parameters) {
      if (prm.kind != ParameterKind::coupling) continue;
      if (wald_p_value(prm.estimate, prm.se) >= options.prune_alpha) {
        detail::set_edge(support, prm.time, edge_index(p, prm.i, prm.j), false);
        pruned = true;
      }
    }
    if (!pruned) break;
    pruned_any = true;
    current = fit_structure(groups, spec, support, options.fit, &current);
    current.beliefs = dense.beliefs;
    current.time_points = dense.time_points;
  }
  if (!pruned_any) return dense_as_sparse;

  for (;;) {
    const auto cands = detail::modification_indices(groups, current, options.fit);
    if (cands.empty()) break;
    const auto best = std::max_element(cands.begin(), cands.end(), [](const auto& a, const auto& b) {
      return a.modification_index < b.modification_index;
    });
    Support trial_support = support;
    detail::set_edge(trial_support, best->time, best->edge, true);
    FittedModel trial;
    try {
      trial = fit_structure(groups, spec, trial_support, options.fit, &current);
    } catch (const Error&) {
      break;
    }
    if (!(trial.bic < current.bic - 1e-9)) break;
    trial.beliefs = dense.beliefs;
    trial.time_points = dense.time_points;
    current = std::move(trial);
    support = std::move(trial_support);
  }
  if (current.bic > dense.bic) return dense_as_sparse;
  return current;
}

inline FittedModel fit_spec(const std::vector<GroupMoments>& groups, const ModelSpec& spec,
                            const SearchOptions& options = {}, const FittedModel* warm = nullptr) {
  const std::size_t p = static_cast<std::size_t>(groups.at(0).covariance.rows());
  FittedModel dense = fit_structure(groups, spec.dense(), dense_support(p, groups.size()), options.fit, warm);
  if (!spec.sparse) return dense;
  return prune_step_up(groups, dense, options);
}

namespace detail {
inline void label(FittedModel& m, const ResidualDataset& residuals) {
  m.beliefs.clear();
  for (const auto& b : residuals.beliefs) m.beliefs.push_back(b.name);
  m.time_points = residuals.time_points;
}
}  // namespace detail

/// Fits one specification to residualized panel data.
inline FittedModel fit_spec(const ResidualDataset& residuals, const ModelSpec& spec, const SearchOptions& options = {}) {
  const auto groups = group_moments(residuals);
  const std::size_t p = residuals.n_beliefs();
  FittedModel dense = fit_structure(groups, spec.dense(), dense_support(p, groups.size()), options.fit);
  detail::label(dense, residuals);
  if (!spec.sparse) return dense;
  return prune_step_up(groups, dense, options);
}

struct RankingRow {
  ModelSpec spec;
  bool ok = false;
  std::string error;
  std::size_t df = 0;  // constrained relative to the all-free dense model
  std::size_t k = 0;
  double log_likelihood = 0.0;
  double bic = 0.0;
};

struct Selection {
  FittedModel best;
  std::vector<RankingRow> ranking;             // in `specs` order
  std::vector<std::optional<FittedModel>> models;
  std::vector<std::string> warnings;
};

/// Fits every listed specification and keeps the lowest BIC. Ties within 1e-9
/// go to the model with fewer free parameters. Failed fits are reported in the
/// ranking and skipped.
inline Selection select_model(const std::vector<GroupMoments>& groups, const std::vector<ModelSpec>& specs,
                              const SearchOptions& options = {}, const std::vector<std::string>& beliefs = {},
                              const std::vector<std::string>& time_points = {}) {
  if (specs.empty()) throw Error(ErrorKind::config, "no model specifications to select from");
  const std::size_t p = static_cast<std::size_t>(groups.at(0).covariance.rows());

  // Dense fits first; constrained dense specs start from the free dense fit.
  std::vector<ModelSpec> dense_specs;
  for (const auto& s : specs)
    if (std::find(dense_specs.begin(), dense_specs.end(), s.dense()) == dense_specs.end()) dense_specs.push_back(s.dense());
  std::vector<std::optional<FittedModel>> dense_fits(dense_specs.size());
  std::vector<std::string> dense_errors(dense_specs.size());

  auto fit_dense = [&](std::size_t k, const FittedModel* warm) {
    try {
      FittedModel m = fit_structure(groups, dense_specs[k], dense_support(p, groups.size()), options.fit, warm);
      m.beliefs = beliefs;
      m.time_points = time_points;
      dense_fits[k] = std::move(m);
    } catch (const Error& e) {
      dense_errors[k] = e.what();
    }
  };
  const ModelSpec free_dense{};
  const auto free_pos = std::find(dense_specs.begin(), dense_specs.end(), free_dense);
  const FittedModel* warm = nullptr;
  if (free_pos != dense_specs.end()) {
    const auto k = static_cast<std::size_t>(free_pos - dense_specs.begin());
    fit_dense(k, nullptr);
    if (dense_fits[k]) warm = &*dense_fits[k];
  }
  parallel_for(dense_specs.size(), options.threads, [&](std::size_t k) {
    if (dense_specs[k] == free_dense) return;
    fit_dense(k, warm);
  });

  Selection sel;
  sel.models.resize(specs.size());
  sel.ranking.resize(specs.size());
  parallel_for(specs.size(), options.threads, [&](std::size_t s) {
    const auto k = static_cast<std::size_t>(std::find(dense_specs.begin(), dense_specs.end(), specs[s].dense()) - dense_specs.begin());
    RankingRow& row = sel.ranking[s];
    row.spec = specs[s];
    if (!dense_fits[k]) {
      row.error = dense_errors[k];
      return;
    }
    try {
      FittedModel m = specs[s].sparse ? prune_step_up(groups, *dense_fits[k], options) : *dense_fits[k];
      m.beliefs = beliefs;
      m.time_points = time_points;
      row.ok = true;
      row.k = m.k;
      row.df = m.constrained_df();
      row.log_likelihood = m.log_likelihood;
      row.bic = m.bic;
      sel.models[s] = std::move(m);
    } catch (const Error& e) {
      row.error = e.what();
    }
  });

  std::optional<std::size_t> best;
  for (std::size_t s = 0; s < specs.size(); ++s) {
    const auto& row = sel.ranking[s];
    if (!row.ok) {
      sel.warnings.push_back("specification '" + row.spec.name() + "' failed: " + row.error);
      continue;
    }
    if (!best) {
      best = s;
      continue;
    }
    const auto& cur = sel.ranking[*best];
    if (row.bic < cur.bic - 1e-9 || (std::abs(row.bic - cur.bic) <= 1e-9 && row.k < cur.k)) best = s;
  }
  if (!best) {
    std::string msg = "all model specifications failed:";
    for (const auto& w : sel.warnings) msg += "\n  " + w;
    throw Error(ErrorKind::aggregation, msg);
  }
  sel.best = *sel.models[*best];
  return sel;
}

inline Selection select_model(const ResidualDataset& residuals, const SearchOptions& options = {},
                              std::vector<ModelSpec> specs = {}) {
  if (specs.empty()) {
    const auto all = all_specs();
    specs.assign(all.begin(), all.end());
  }
  std::vector<std::string> names;
  for (const auto& b : residuals.beliefs) names.push_back(b.name);
  return select_model(group_moments(residuals), specs, options, names, residuals.time_points);
}

}  // namespace beliefnet
