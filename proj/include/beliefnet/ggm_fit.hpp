#pragma once

// Multi-group maximum likelihood for the constrained GGM, maximized by Fisher
// scoring with analytic gradients and expected information. The information
// matrix also yields the standard errors used by the Wald pruning step.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "beliefnet/error.hpp"
#include "beliefnet/ggm.hpp"

namespace beliefnet {

struct FitOptions {
  std::size_t max_iterations = 500;
  double gradient_tolerance = 1e-6;     // max-norm of the score
  double relative_ll_tolerance = 1e-10; // |dLL| / max(1, |LL|)
  double ridge = 1e-8;                  // start-value regularization
  std::size_t max_halvings = 40;
};

/// Per-time, per-edge support; `true` marks a free coupling.
using Support = std::vector<std::vector<bool>>;

inline Support dense_support(std::size_t p, std::size_t times) {
  return Support(times, std::vector<bool>(edge_count(p), true));
}

namespace detail {

/// Maps model quantities onto the free parameter vector; -1 marks a fixed zero.
struct Layout {
  std::size_t p = 0;
  std::size_t times = 0;
  std::vector<Edge> edges;
  std::vector<std::vector<int>> omega;      // [t][edge]
  std::vector<std::vector<int>> log_delta;  // [t][belief]
  std::vector<std::vector<int>> mu;         // [t][belief]
  std::vector<ParameterEstimate> params;    // template, estimate/se unset

  std::size_t size() const { return params.size(); }
};

inline Layout make_layout(const ModelSpec& spec, std::size_t p, std::size_t times, const Support& support) {
  if (!spec.admissible()) throw Error(ErrorKind::config, "inadmissible model specification " + spec.key());
  if (support.size() != times) throw Error(ErrorKind::dimension, "support has wrong number of time points");
  Layout L;
  L.p = p;
  L.times = times;
  L.edges = enumerate_edges(p);
  const std::size_t E = L.edges.size();
  L.omega.assign(times, std::vector<int>(E, -1));
  L.log_delta.assign(times, std::vector<int>(p, -1));
  L.mu.assign(times, std::vector<int>(p, -1));

  auto add = [&L](ParameterKind kind, int t, std::size_t i, std::size_t j) {
    L.params.push_back({kind, t, i, j, 0.0, 0.0});
    return static_cast<int>(L.params.size() - 1);
  };

  if (spec.equal_network) {
    for (std::size_t e = 0; e < E; ++e) {
      if (support[0][e] != std::all_of(support.begin(), support.end(), [e](const auto& s) { return s[e]; }))
        throw Error(ErrorKind::config, "shared network requires identical support at every time point");
      if (!support[0][e]) continue;
      const int idx = add(ParameterKind::coupling, -1, L.edges[e].i, L.edges[e].j);
      for (std::size_t t = 0; t < times; ++t) L.omega[t][e] = idx;
    }
  } else {
    for (std::size_t t = 0; t < times; ++t)
      for (std::size_t e = 0; e < E; ++e)
        if (support[t][e]) L.omega[t][e] = add(ParameterKind::coupling, static_cast<int>(t), L.edges[e].i, L.edges[e].j);
  }
  if (spec.equal_scaling) {
    for (std::size_t i = 0; i < p; ++i) {
      const int idx = add(ParameterKind::log_scaling, -1, i, i);
      for (std::size_t t = 0; t < times; ++t) L.log_delta[t][i] = idx;
    }
  } else {
    for (std::size_t t = 0; t < times; ++t)
      for (std::size_t i = 0; i < p; ++i) L.log_delta[t][i] = add(ParameterKind::log_scaling, static_cast<int>(t), i, i);
  }
  if (spec.equal_intercepts) {
    for (std::size_t i = 0; i < p; ++i) {
      const int idx = add(ParameterKind::intercept, -1, i, i);
      for (std::size_t t = 0; t < times; ++t) L.mu[t][i] = idx;
    }
  } else {
    for (std::size_t t = 0; t < times; ++t)
      for (std::size_t i = 0; i < p; ++i) L.mu[t][i] = add(ParameterKind::intercept, static_cast<int>(t), i, i);
  }
  return L;
}

struct GroupParameters {
  Eigen::MatrixXd omega;
  Eigen::VectorXd log_delta;
  Eigen::VectorXd mu;
};

inline GroupParameters unpack(const Layout& L, const Eigen::VectorXd& theta, std::size_t t) {
  const auto p = static_cast<Eigen::Index>(L.p);
  GroupParameters g{Eigen::MatrixXd::Zero(p, p), Eigen::VectorXd(p), Eigen::VectorXd(p)};
  for (std::size_t e = 0; e < L.edges.size(); ++e) {
    const int idx = L.omega[t][e];
    if (idx < 0) continue;
    const auto i = static_cast<Eigen::Index>(L.edges[e].i);
    const auto j = static_cast<Eigen::Index>(L.edges[e].j);
    g.omega(i, j) = g.omega(j, i) = theta(idx);
  }
  for (std::size_t i = 0; i < L.p; ++i) {
    g.log_delta(static_cast<Eigen::Index>(i)) = theta(L.log_delta[t][i]);
    g.mu(static_cast<Eigen::Index>(i)) = theta(L.mu[t][i]);
  }
  return g;
}

struct Evaluation {
  bool valid = false;
  double log_likelihood = 0.0;
  Eigen::VectorXd gradient;
  Eigen::MatrixXd information;
};

/// Log-likelihood, score and expected information at `theta`. `valid` is
/// false when some I - Omega_t is not positive definite.
inline Evaluation evaluate(const Layout& L, const Eigen::VectorXd& theta, const std::vector<GroupMoments>& groups,
                           bool derivatives) {
  Evaluation ev;
  const auto p = static_cast<Eigen::Index>(L.p);
  const std::size_t P = L.size();
  if (derivatives) {
    ev.gradient = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(P));
    ev.information = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(P), static_cast<Eigen::Index>(P));
  }
  const double log_2pi = std::log(2.0 * std::numbers::pi);
  const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(p, p);

  for (std::size_t t = 0; t < L.times; ++t) {
    const GroupMoments& gm = groups[t];
    const GroupParameters g = unpack(L, theta, t);
    Eigen::LLT<Eigen::MatrixXd> llt(I - g.omega);
    if (llt.info() != Eigen::Success) return ev;
    const Eigen::VectorXd lower_diag = llt.matrixLLT().diagonal();
    if (!(lower_diag.minCoeff() > 1e-10)) return ev;
    const Eigen::VectorXd d = (-g.log_delta.array()).exp();  // inverse scalings
    const Eigen::MatrixXd K = d.asDiagonal() * (I - g.omega) * d.asDiagonal();
    const Eigen::MatrixXd m_inv = llt.solve(I);
    const Eigen::VectorXd delta = g.log_delta.array().exp();
    Eigen::MatrixXd sigma = delta.asDiagonal() * m_inv * delta.asDiagonal();
    sigma = 0.5 * (sigma + sigma.transpose());
    const double logdet_k = 2.0 * d.array().log().sum() + 2.0 * lower_diag.array().log().sum();
    const Eigen::VectorXd r = gm.mean - g.mu;
    const double tr_ak = (gm.covariance.cwiseProduct(K)).sum() + r.dot(K * r);
    const double n = gm.n;
    ev.log_likelihood += 0.5 * n * (logdet_k - tr_ak - static_cast<double>(L.p) * log_2pi);

    if (!derivatives) continue;

    // Score. With G = n/2 (Sigma - S - r r'):
    //   dLL/dw_ij = -2 d_i d_j G_ij,  dLL/ds_i = -2 (G K)_ii,  dLL/dmu = n K r.
    const Eigen::MatrixXd G = 0.5 * n * (sigma - gm.covariance - r * r.transpose());
    const Eigen::MatrixXd GK = G * K;
    const Eigen::VectorXd Kr = K * r;

    struct Local {
      int idx;
      ParameterKind kind;
      Eigen::Index i, j;
    };
    std::vector<Local> local;
    local.reserve(L.edges.size() + 2 * L.p);
    for (std::size_t e = 0; e < L.edges.size(); ++e) {
      const int idx = L.omega[t][e];
      if (idx < 0) continue;
      const auto i = static_cast<Eigen::Index>(L.edges[e].i);
      const auto j = static_cast<Eigen::Index>(L.edges[e].j);
      ev.gradient(idx) += -2.0 * d(i) * d(j) * G(i, j);
      local.push_back({idx, ParameterKind::coupling, i, j});
    }
    for (Eigen::Index i = 0; i < p; ++i) {
      const int idx = L.log_delta[t][static_cast<std::size_t>(i)];
      ev.gradient(idx) += -2.0 * GK(i, i);
      local.push_back({idx, ParameterKind::log_scaling, i, i});
    }
    for (Eigen::Index i = 0; i < p; ++i) ev.gradient(L.mu[t][static_cast<std::size_t>(i)]) += n * Kr(i);

    // Expected information, n/2 tr(Sigma dK_a Sigma dK_b), in closed form per pair:
    //   (w_ij, w_kl): n d_i d_j d_k d_l (S_jk S_il + S_jl S_ik)
    //   (s_i, s_k):   n (1[i=k] + K_ik S_ik)
    //   (w_ij, s_k):  n d_i d_j (1[i=k] S_jk + 1[j=k] S_ik)
    // Mean parameters are orthogonal to the covariance block: n K.
    for (std::size_t a = 0; a < local.size(); ++a) {
      const Local& A = local[a];
      for (std::size_t b = a; b < local.size(); ++b) {
        const Local& B = local[b];
        double v = 0.0;
        if (A.kind == ParameterKind::coupling && B.kind == ParameterKind::coupling) {
          v = n * d(A.i) * d(A.j) * d(B.i) * d(B.j) *
              (sigma(A.j, B.i) * sigma(A.i, B.j) + sigma(A.j, B.j) * sigma(A.i, B.i));
        } else if (A.kind == ParameterKind::log_scaling && B.kind == ParameterKind::log_scaling) {
          v = n * ((A.i == B.i ? 1.0 : 0.0) + K(A.i, B.i) * sigma(A.i, B.i));
        } else {
          const Local& W = A.kind == ParameterKind::coupling ? A : B;
          const Local& S = A.kind == ParameterKind::coupling ? B : A;
          v = n * d(W.i) * d(W.j) * ((W.i == S.i ? sigma(W.j, S.i) : 0.0) + (W.j == S.i ? sigma(W.i, S.i) : 0.0));
        }
        ev.information(A.idx, B.idx) += v;
        if (a != b) ev.information(B.idx, A.idx) += v;
      }
    }
    for (Eigen::Index i = 0; i < p; ++i)
      for (Eigen::Index k = 0; k < p; ++k)
        ev.information(L.mu[t][static_cast<std::size_t>(i)], L.mu[t][static_cast<std::size_t>(k)]) += n * K(i, k);
  }
  ev.valid = true;
  return ev;
}

inline bool all_groups_valid(const Layout& L, const Eigen::VectorXd& theta) {
  const auto p = static_cast<Eigen::Index>(L.p);
  const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(p, p);
  for (std::size_t t = 0; t < L.times; ++t) {
    Eigen::LLT<Eigen::MatrixXd> llt(I - unpack(L, theta, t).omega);
    if (llt.info() != Eigen::Success || !(llt.matrixLLT().diagonal().minCoeff() > 1e-10)) return false;
  }
  return true;
}

/// Start values from ridge-regularized sample precision matrices: per time
/// point for free blocks, pooled over time points for shared blocks. When a
/// previous fit is supplied its estimates are reused instead.
inline Eigen::VectorXd start_values(const Layout& L, const std::vector<GroupMoments>& groups, double ridge,
                                    const FittedModel* warm) {
  const auto p = static_cast<Eigen::Index>(L.p);
  const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(p, p);
  std::vector<NetworkParameters> per_time;
  Eigen::MatrixXd pooled_cov = Eigen::MatrixXd::Zero(p, p);
  Eigen::VectorXd pooled_mean = Eigen::VectorXd::Zero(p);
  double total = 0.0;
  for (const auto& g : groups) {
    pooled_cov += g.n * g.covariance;
    pooled_mean += g.n * g.mean;
    total += g.n;
  }
  pooled_cov /= total;
  pooled_mean /= total;
  // Per-time couplings come from each group's own covariance; shared ones
  // from the scale-free average of per-time correlation structure.
  for (const auto& g : groups) {
    const Eigen::MatrixXd reg = g.covariance + ridge * I;
    per_time.push_back(network_from_precision(reg.llt().solve(I)));
  }
  const NetworkParameters pooled = network_from_precision((pooled_cov + ridge * I).llt().solve(I));

  Eigen::VectorXd theta = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(L.size()));
  for (std::size_t a = 0; a < L.size(); ++a) {
    const auto& prm = L.params[a];
    const auto i = static_cast<Eigen::Index>(prm.i);
    const auto j = static_cast<Eigen::Index>(prm.j);
    const bool shared = prm.time < 0;
    const auto t = static_cast<std::size_t>(shared ? 0 : prm.time);
    double v = 0.0;
    if (warm != nullptr) {
      // shared parameters take the time-average of the warm model
      auto avg = [&](auto&& f) {
        if (!shared) return f(t);
        double s = 0.0;
        for (std::size_t u = 0; u < warm->n_times(); ++u) s += f(u);
        return s / static_cast<double>(warm->n_times());
      };
      switch (prm.kind) {
        case ParameterKind::coupling: v = avg([&](std::size_t u) { return warm->omega[u](i, j); }); break;
        case ParameterKind::log_scaling: v = avg([&](std::size_t u) { return std::log(warm->delta[u](i)); }); break;
        case ParameterKind::intercept: v = avg([&](std::size_t u) { return warm->mu[u](i); }); break;
      }
    } else {
      switch (prm.kind) {
        case ParameterKind::coupling: v = shared ? pooled.omega(i, j) : per_time[t].omega(i, j); break;
        case ParameterKind::log_scaling: v = std::log(shared ? pooled.delta(i) : per_time[t].delta(i)); break;
        case ParameterKind::intercept: v = shared ? pooled_mean(i) : groups[t].mean(i); break;
      }
    }
    theta(static_cast<Eigen::Index>(a)) = v;
  }
  // Dropping couplings can break positive definiteness; shrink toward zero.
  for (int attempt = 0; attempt < 200 && !all_groups_valid(L, theta); ++attempt) {
    for (std::size_t a = 0; a < L.size(); ++a)
      if (L.params[a].kind == ParameterKind::coupling) theta(static_cast<Eigen::Index>(a)) *= 0.8;
  }
  return theta;
}

inline Eigen::VectorXd solve_information(const Eigen::MatrixXd& info, const Eigen::VectorXd& rhs) {
  Eigen::LDLT<Eigen::MatrixXd> ldlt(info);
  if (ldlt.info() == Eigen::Success && ldlt.isPositive()) {
    Eigen::VectorXd x = ldlt.solve(rhs);
    if (x.allFinite()) return x;
  }
  const double scale = std::max(info.diagonal().cwiseAbs().maxCoeff(), 1.0);
  Eigen::MatrixXd reg = info;
  reg.diagonal().array() += 1e-8 * scale;
  return reg.ldlt().solve(rhs);
}

}  // namespace detail

/// Fits `spec` with the given coupling support to per-time moments.
///
/// Converged when the score max-norm drops below `gradient_tolerance` or an
/// accepted step changes the log-likelihood by less than
/// `relative_ll_tolerance` (relative). Steps are halved until every implied
/// covariance stays positive definite and the likelihood does not decrease.
inline FittedModel fit_structure(const std::vector<GroupMoments>& groups, const ModelSpec& spec,
                                 const Support& support, const FitOptions& options = {},
                                 const FittedModel* warm = nullptr) {
  if (groups.empty()) throw Error(ErrorKind::dimension, "no time points to fit");
  const std::size_t p = static_cast<std::size_t>(groups.front().covariance.rows());
  if (p < 2) throw Error(ErrorKind::dimension, "a network needs at least 2 beliefs");
  for (const auto& g : groups)
    if (static_cast<std::size_t>(g.covariance.rows()) != p) throw Error(ErrorKind::dimension, "groups disagree in belief count");

  const detail::Layout L = detail::make_layout(spec, p, groups.size(), support);
  Eigen::VectorXd theta = detail::start_values(L, groups, options.ridge, warm);
  detail::Evaluation ev = detail::evaluate(L, theta, groups, true);
  if (!ev.valid) throw Error(ErrorKind::model_domain, "no positive definite start value for " + spec.key());

  std::vector<double> trace{ev.log_likelihood};
  bool converged = false;
  std::size_t iter = 0;
  for (; iter < options.max_iterations; ++iter) {
    if (ev.gradient.size() == 0 || ev.gradient.cwiseAbs().maxCoeff() < options.gradient_tolerance) {
      converged = true;
      break;
    }
    const Eigen::VectorXd step = detail::solve_information(ev.information, ev.gradient);
    double scale = 1.0;
    bool accepted = false;
    detail::Evaluation next;
    Eigen::VectorXd candidate;
    for (std::size_t h = 0; h <= options.max_halvings; ++h, scale *= 0.5) {
      candidate = theta + scale * step;
      next = detail::evaluate(L, candidate, groups, false);
      if (next.valid && next.log_likelihood >= ev.log_likelihood - 1e-12 * std::max(1.0, std::abs(ev.log_likelihood))) {
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      // No ascent direction left at machine precision: treat a tiny score as
      // converged, otherwise the iterate is irrecoverable.
      if (ev.gradient.cwiseAbs().maxCoeff() < 1e3 * options.gradient_tolerance) {
        converged = true;
        break;
      }
      std::ostringstream msg;
      msg << "fit of " << spec.key() << " stalled at iteration " << iter << "; LL trace:";
      for (std::size_t k = trace.size() > 5 ? trace.size() - 5 : 0; k < trace.size(); ++k) msg << ' ' << trace[k];
      throw Error(ErrorKind::convergence, msg.str());
    }
    const double previous = ev.log_likelihood;
    theta = candidate;
    ev = detail::evaluate(L, theta, groups, true);
    trace.push_back(ev.log_likelihood);
    if (std::abs(ev.log_likelihood - previous) / std::max(1.0, std::abs(ev.log_likelihood)) <
        options.relative_ll_tolerance) {
      converged = true;
      ++iter;
      break;
    }
  }
  if (!converged) {
    std::ostringstream msg;
    msg << "fit of " << spec.key() << " did not converge in " << options.max_iterations << " iterations; LL trace:";
    for (std::size_t k = trace.size() > 5 ? trace.size() - 5 : 0; k < trace.size(); ++k) msg << ' ' << trace[k];
    throw Error(ErrorKind::convergence, msg.str());
  }

  FittedModel model;
  model.spec = spec;
  model.support = support;
  model.iterations = iter;
  model.converged = true;
  model.log_likelihood = ev.log_likelihood;
  model.k = L.size();
  for (const auto& g : groups) model.n += g.n;
  model.bic = bic_of(model.log_likelihood, model.k, model.n);
  for (std::size_t t = 0; t < L.times; ++t) {
    const detail::GroupParameters g = detail::unpack(L, theta, t);
    model.omega.push_back(g.omega);
    model.delta.push_back(g.log_delta.array().exp());
    model.mu.push_back(g.mu);
  }
  const Eigen::MatrixXd info = ev.information;
  Eigen::VectorXd variances(static_cast<Eigen::Index>(L.size()));
  if (L.size() > 0) {
    Eigen::LDLT<Eigen::MatrixXd> ldlt(info);
    const Eigen::MatrixXd cov = ldlt.solve(Eigen::MatrixXd::Identity(info.rows(), info.cols()));
    variances = cov.diagonal();
  }
  model.parameters = L.params;
  for (std::size_t a = 0; a < L.size(); ++a) {
    model.parameters[a].estimate = theta(static_cast<Eigen::Index>(a));
    const double v = variances(static_cast<Eigen::Index>(a));
    model.parameters[a].se = v > 0.0 ? std::sqrt(v) : std::numeric_limits<double>::quiet_NaN();
  }
  return model;
}

}  // namespace beliefnet
