#pragma once

// Energy-driven belief dynamics and synthetic panel generation.
//
// Continuous beliefs move by a symmetric uniform proposal clipped to [-1, 1];
// a proposal is accepted with the heat-bath probability 1 / (1 + e^{beta dH_i}).
// The proposal mechanism is a modelling choice of this library: the
// acceptance rule only compares two states.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "beliefnet/energy.hpp"
#include "beliefnet/error.hpp"
#include "beliefnet/ggm.hpp"
#include "beliefnet/panel.hpp"
#include "beliefnet/parallel.hpp"

namespace beliefnet {

/// P(b_i -> b_i') = 1 / (1 + exp(beta * dH)), evaluated without overflow.
inline double transition_probability(double delta_h, double beta) {
  const double x = beta * delta_h;
  if (x == 0.0 || std::isnan(x)) return 0.5;
  if (x > 0.0) {
    const double e = std::exp(-x);
    return e / (1.0 + e);
  }
  return 1.0 / (1.0 + std::exp(x));
}

/// Seed of chain `stream` derived from `master` (splitmix64 finalizer over
/// master + (stream + 1) * golden ratio increment).
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) {
  std::uint64_t z = master + (stream + 1) * 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

struct ChainState {
  Eigen::VectorXd beliefs;
  double beta = 1.0;
  std::uint64_t sweeps = 0;
  std::uint64_t seed = 0;
  std::mt19937_64 rng;
  std::uint64_t proposals = 0;
  std::uint64_t accepted = 0;
  double acceptance_probability_sum = 0.0;

  ChainState() = default;
  ChainState(Eigen::VectorXd b, double inverse_temperature, std::uint64_t s)
      : beliefs(std::move(b)), beta(inverse_temperature), seed(s), rng(s) {}
};

/// Chain started from beliefs drawn uniformly on [-1, 1] with the chain's own RNG.
inline ChainState initial_state(std::size_t p, double beta, std::uint64_t seed) {
  ChainState s(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(p)), beta, seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (Eigen::Index i = 0; i < s.beliefs.size(); ++i) s.beliefs(i) = u(s.rng);
  return s;
}

/// One sweep: every belief, in random order, receives one proposal.
inline ChainState sweep(ChainState state, const Eigen::MatrixXd& omega, double proposal_width = 0.2) {
  if (!(proposal_width > 0.0 && proposal_width <= 2.0))
    throw Error(ErrorKind::domain, "proposal width must lie in (0, 2]");
  if (!(state.beta >= 0.0)) throw Error(ErrorKind::domain, "inverse temperature must be non-negative");
  const auto p = state.beliefs.size();
  if (omega.rows() != p || omega.cols() != p) throw Error(ErrorKind::dimension, "coupling matrix size mismatch");

  std::vector<Eigen::Index> order(static_cast<std::size_t>(p));
  for (Eigen::Index i = 0; i < p; ++i) order[static_cast<std::size_t>(i)] = i;
  std::shuffle(order.begin(), order.end(), state.rng);
  std::uniform_real_distribution<double> step(-proposal_width, proposal_width);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  for (const Eigen::Index i : order) {
    const double current = state.beliefs(i);
    const double proposed = std::clamp(current + step(state.rng), -1.0, 1.0);
    double field = 0.0;
    for (Eigen::Index j = 0; j < p; ++j)
      if (j != i) field += omega(i, j) * state.beliefs(j);
    const double dh = -(proposed - current) * field;
    const double prob = transition_probability(dh, state.beta);
    ++state.proposals;
    state.acceptance_probability_sum += prob;
    if (unit(state.rng) < prob) {
      state.beliefs(i) = proposed;
      ++state.accepted;
    }
  }
  ++state.sweeps;
  return state;
}

/// Post-burn-in states taken every `thin` sweeps at beta = 1 / mean(delta).
inline Eigen::MatrixXd sample_equilibrium(const Eigen::MatrixXd& omega, const Eigen::VectorXd& delta,
                                          std::size_t n_samples, std::size_t burn_in, std::size_t thin,
                                          std::uint64_t seed, double proposal_width = 0.2) {
  if (n_samples < 1) throw Error(ErrorKind::domain, "n_samples must be at least 1");
  if (thin < 1) throw Error(ErrorKind::domain, "thin must be at least 1");
  if (!(delta.size() > 0 && delta.minCoeff() > 0.0)) throw Error(ErrorKind::model_domain, "scaling values must be positive");
  ChainState state = initial_state(static_cast<std::size_t>(omega.rows()), 1.0 / delta.mean(), seed);
  for (std::size_t s = 0; s < burn_in; ++s) state = sweep(std::move(state), omega, proposal_width);
  Eigen::MatrixXd out(static_cast<Eigen::Index>(n_samples), omega.rows());
  for (std::size_t k = 0; k < n_samples; ++k) {
    for (std::size_t s = 0; s < thin; ++s) state = sweep(std::move(state), omega, proposal_width);
    out.row(static_cast<Eigen::Index>(k)) = state.beliefs.transpose();
  }
  return out;
}

struct TrajectoryPoint {
  std::size_t chain = 0;
  std::uint64_t sweep = 0;
  double H = 0.0;
  Eigen::VectorXd beliefs;
};

/// Runs independent chains from the given starts, recording every
/// `record_every` sweeps (sweep 0 is the start). Chain c uses
/// derive_seed(master_seed, c).
inline std::vector<std::vector<TrajectoryPoint>> run_chains(const Eigen::MatrixXd& omega, double beta,
                                                            const std::vector<Eigen::VectorXd>& starts,
                                                            std::size_t sweeps, std::size_t record_every,
                                                            std::uint64_t master_seed, double proposal_width = 0.2,
                                                            std::size_t threads = 1) {
  if (record_every < 1) throw Error(ErrorKind::domain, "record interval must be at least 1");
  std::vector<std::vector<TrajectoryPoint>> out(starts.size());
  parallel_for(starts.size(), threads, [&](std::size_t c) {
    ChainState state(starts[c], beta, derive_seed(master_seed, c));
    auto& traj = out[c];
    traj.push_back({c, 0, network_energy(state.beliefs, omega), state.beliefs});
    for (std::size_t s = 1; s <= sweeps; ++s) {
      state = sweep(std::move(state), omega, proposal_width);
      if (s % record_every == 0 || s == sweeps) traj.push_back({c, s, network_energy(state.beliefs, omega), state.beliefs});
    }
  });
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic studies

enum class Squash { none, clip };
enum class GenerationMode { gaussian, chain };

/// Pre/post intervention between two waves. The post wave starts from the
/// pre-wave beliefs, adds retest noise and a mean shift (moral beliefs of
/// non-control groups), and moves persons whose pre-wave energy lies at or
/// above `energy_quantile` by `step` along the energy-descent direction
/// 2 * Omega * b.
struct InterventionConfig {
  std::size_t pre_wave = 1;
  std::size_t post_wave = 2;
  double retest_sd = 0.02;
  double mean_shift = 0.0;
  double energy_quantile = 2.0 / 3.0;
  double step = 0.1;
  std::vector<std::string> control_groups;
};

struct StudyConfig {
  std::vector<BeliefInfo> beliefs;
  Eigen::MatrixXd omega;
  std::vector<Eigen::VectorXd> delta;  // per wave
  Eigen::VectorXd mu;
  std::vector<std::string> waves;
  std::size_t n_persons = 979;
  double person_effect_sd = 0.0;
  double time_effect_sd = 0.0;
  std::vector<std::string> groups;  // assigned round-robin; empty = no groups
  std::optional<InterventionConfig> intervention;
  Squash squash = Squash::none;
  GenerationMode mode = GenerationMode::gaussian;
  std::size_t chain_sweeps = 200;  // GenerationMode::chain only
  double proposal_width = 0.2;
  std::string topic = "synthetic";
};

struct SyntheticStudy {
  StudyConfig truth;
  Eigen::MatrixXd person_effects;  // persons x beliefs
  Eigen::MatrixXd time_effects;    // waves x beliefs
  PanelDataset panel;              // on the belief scale (rescaled)
  std::vector<bool> displaced;     // per person: received the energy-descent move
};

/// Draws a synthetic panel. Per person and wave the residual is drawn from
/// N(0, D_t (I - Omega)^{-1} D_t) (or taken from a heat-bath chain in chain
/// mode), then mu + person effect + time effect are added. Seed-deterministic.
inline SyntheticStudy generate_panel(const StudyConfig& cfg, std::uint64_t seed) {
  const std::size_t p = cfg.beliefs.size();
  const std::size_t T = cfg.waves.size();
  const std::size_t n = cfg.n_persons;
  if (p < 2) throw Error(ErrorKind::dimension, "a synthetic study needs at least 2 beliefs");
  if (T < 1 || cfg.delta.size() != T) throw Error(ErrorKind::config, "need one scaling vector per wave");
  if (cfg.omega.rows() != static_cast<Eigen::Index>(p) || cfg.mu.size() != static_cast<Eigen::Index>(p))
    throw Error(ErrorKind::dimension, "network size does not match the belief list");

  std::vector<Eigen::MatrixXd> chol(T);
  for (std::size_t t = 0; t < T; ++t) {
    try {
      const Eigen::MatrixXd sigma = implied_covariance(cfg.omega, cfg.delta[t]);
      Eigen::LLT<Eigen::MatrixXd> llt(sigma);
      if (llt.info() != Eigen::Success) throw Error(ErrorKind::model_domain, "implied covariance not positive definite");
      chol[t] = llt.matrixL();
    } catch (const Error& e) {
      throw Error(ErrorKind::model_domain, "wave '" + cfg.waves[t] + "': " + e.what());
    }
  }

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  SyntheticStudy study;
  study.truth = cfg;
  const auto P = static_cast<Eigen::Index>(p);
  const auto N = static_cast<Eigen::Index>(n);
  study.person_effects = Eigen::MatrixXd::Zero(N, P);
  study.time_effects = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(T), P);
  if (cfg.time_effect_sd > 0.0)
    for (Eigen::Index t = 0; t < study.time_effects.rows(); ++t)
      for (Eigen::Index j = 0; j < P; ++j) study.time_effects(t, j) = cfg.time_effect_sd * normal(rng);
  if (cfg.person_effect_sd > 0.0)
    for (Eigen::Index i = 0; i < N; ++i)
      for (Eigen::Index j = 0; j < P; ++j) study.person_effects(i, j) = cfg.person_effect_sd * normal(rng);

  PanelDataset& d = study.panel;
  d.topic = cfg.topic;
  d.beliefs = cfg.beliefs;
  d.time_points = cfg.waves;
  d.rescaled = true;
  d.dissonance.assign(T, std::nullopt);
  for (std::size_t i = 0; i < n; ++i) {
    d.persons.push_back("p" + std::to_string(i + 1));
    if (!cfg.groups.empty()) d.groups.push_back(cfg.groups[i % cfg.groups.size()]);
  }
  d.values.assign(T, Eigen::MatrixXd::Zero(N, P));

  for (std::size_t t = 0; t < T; ++t) {
    const double beta = 1.0 / cfg.delta[t].mean();
    for (Eigen::Index i = 0; i < N; ++i) {
      Eigen::VectorXd resid(P);
      if (cfg.mode == GenerationMode::gaussian) {
        Eigen::VectorXd z(P);
        for (Eigen::Index j = 0; j < P; ++j) z(j) = normal(rng);
        resid = chol[t] * z;
      } else {
        ChainState state = initial_state(p, beta, derive_seed(seed, t * n + static_cast<std::size_t>(i)));
        for (std::size_t s = 0; s < cfg.chain_sweeps; ++s) state = sweep(std::move(state), cfg.omega, cfg.proposal_width);
        resid = state.beliefs;
      }
      d.values[t].row(i) = (cfg.mu + study.person_effects.row(i).transpose() +
                            study.time_effects.row(static_cast<Eigen::Index>(t)).transpose() + resid)
                               .transpose();
    }
  }

  study.displaced.assign(n, false);
  if (cfg.intervention) {
    const InterventionConfig& iv = *cfg.intervention;
    if (iv.pre_wave >= T || iv.post_wave >= T || iv.pre_wave == iv.post_wave)
      throw Error(ErrorKind::config, "intervention waves out of range");
    const Eigen::MatrixXd& pre = d.values[iv.pre_wave];
    Eigen::VectorXd energies(N);
    for (Eigen::Index i = 0; i < N; ++i) energies(i) = network_energy(pre.row(i).transpose(), cfg.omega);
    std::vector<double> sorted(energies.data(), energies.data() + N);
    std::sort(sorted.begin(), sorted.end());
    const auto cut_pos = std::min<std::size_t>(n - 1, static_cast<std::size_t>(std::floor(iv.energy_quantile * static_cast<double>(n))));
    const double cut = sorted[cut_pos];
    Eigen::MatrixXd off = cfg.omega;
    off.diagonal().setZero();
    Eigen::MatrixXd post(N, P);
    for (Eigen::Index i = 0; i < N; ++i) {
      const std::string group = cfg.groups.empty() ? std::string() : cfg.groups[static_cast<std::size_t>(i) % cfg.groups.size()];
      const bool control =
          std::find(iv.control_groups.begin(), iv.control_groups.end(), group) != iv.control_groups.end();
      Eigen::VectorXd b = pre.row(i).transpose();
      Eigen::VectorXd next = b;
      for (Eigen::Index j = 0; j < P; ++j) next(j) += iv.retest_sd * normal(rng);
      if (!control) {
        for (Eigen::Index j = 0; j < P; ++j)
          if (cfg.beliefs[static_cast<std::size_t>(j)].kind == BeliefKind::moral) next(j) += iv.mean_shift;
        if (energies(i) >= cut) {
          next += iv.step * 2.0 * (off * b);
          study.displaced[static_cast<std::size_t>(i)] = true;
        }
      }
      post.row(i) = next.transpose();
    }
    d.values[iv.post_wave] = post;
  }

  if (cfg.squash == Squash::clip)
    for (auto& m : d.values) m = m.cwiseMax(-1.0).cwiseMin(1.0);
  return study;
}

}  // namespace beliefnet
