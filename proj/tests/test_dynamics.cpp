#include <algorithm>
#include <cmath>
#include <functional>
#include <random>

#include <boost/math/distributions/normal.hpp>
#include <gtest/gtest.h>

#include "beliefnet/dynamics.hpp"

using namespace beliefnet;

namespace {

ErrorKind kind_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorKind::io;
}

double correlation(const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
  const Eigen::ArrayXd a = x.array() - x.mean(), b = y.array() - y.mean();
  return (a * b).sum() / std::sqrt((a * a).sum() * (b * b).sum());
}

// Kolmogorov-Smirnov distance of a sample from the standard normal.
double ks_distance(Eigen::VectorXd x) {
  std::sort(x.data(), x.data() + x.size());
  const boost::math::normal_distribution<double> n01;
  const double n = static_cast<double>(x.size());
  double d = 0.0;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double f = boost::math::cdf(n01, x(i));
    d = std::max({d, static_cast<double>(i + 1) / n - f, f - static_cast<double>(i) / n});
  }
  return d;
}

StudyConfig small_study() {
  StudyConfig c;
  for (int j = 0; j < 3; ++j) c.beliefs.push_back({"b" + std::to_string(j), BeliefKind::moral, Scale::likert7});
  c.omega = Eigen::MatrixXd::Zero(3, 3);
  c.omega(0, 1) = c.omega(1, 0) = 0.3;
  c.delta = {Eigen::VectorXd::Constant(3, 0.2), Eigen::VectorXd::Constant(3, 0.15)};
  c.mu = Eigen::VectorXd::Zero(3);
  c.waves = {"w1", "w2"};
  c.n_persons = 50;
  return c;
}

}  // namespace

TEST(Transition, KnownValues) {
  for (double beta : {0.0, 1.0, 10.0}) EXPECT_EQ(transition_probability(0.0, beta), 0.5);
  EXPECT_NEAR(transition_probability(std::log(3.0), 1.0), 0.25, 1e-15);
  EXPECT_EQ(transition_probability(1000.0, 0.0), 0.5);
  EXPECT_EQ(transition_probability(1e6, 1e6), 0.0);
  EXPECT_EQ(transition_probability(-1e6, 1e6), 1.0);
}

TEST(Transition, HeatBathIdentityAndMonotonicity) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> dh(-5.0, 5.0), beta(0.0, 10.0);
  for (int k = 0; k < 1000; ++k) {
    const double h = dh(rng), b = beta(rng);
    const double ratio = transition_probability(h, b) / transition_probability(-h, b);
    EXPECT_NEAR(ratio, std::exp(-b * h), 1e-12 * std::max(1.0, std::exp(-b * h)));
  }
  double prev = 1.0;
  for (double h = -3.0; h <= 3.0; h += 0.1) {
    const double p = transition_probability(h, 2.0);
    EXPECT_LT(p, prev);
    prev = p;
    EXPECT_EQ(transition_probability(h, 0.0), 0.5);
  }
}

TEST(Seeds, DerivedStreamsDiffer) {
  EXPECT_NE(derive_seed(1, 0), derive_seed(1, 1));
  EXPECT_NE(derive_seed(1, 0), derive_seed(2, 0));
  EXPECT_EQ(derive_seed(42, 7), derive_seed(42, 7));
}

TEST(Sweep, NullNetworkAcceptsAtOneHalf) {
  auto s = initial_state(5, 3.0, 9);
  for (int k = 0; k < 20; ++k) s = sweep(std::move(s), Eigen::MatrixXd::Zero(5, 5));
  EXPECT_EQ(s.proposals, 100u);
  EXPECT_DOUBLE_EQ(s.acceptance_probability_sum, 50.0);
  EXPECT_EQ(s.sweeps, 20u);
  EXPECT_LE(s.beliefs.cwiseAbs().maxCoeff(), 1.0);
}

TEST(Sweep, FrozenChainOnlyMovesDownhill) {
  Eigen::MatrixXd o = Eigen::MatrixXd::Zero(3, 3);
  o(0, 1) = o(1, 0) = 0.5;
  o(1, 2) = o(2, 1) = 0.4;
  ChainState s(Eigen::Vector3d(0.9, 0.8, 0.7), 1e6, 3);
  double h = network_energy(s.beliefs, o);
  for (int k = 0; k < 200; ++k) {
    s = sweep(std::move(s), o);
    const double next = network_energy(s.beliefs, o);
    EXPECT_LE(next, h + 1e-12);
    h = next;
  }
}

TEST(Sweep, InconsistentStartRelaxes) {
  // positive beliefs joined by a negative coupling
  Eigen::MatrixXd o = Eigen::MatrixXd::Zero(3, 3);
  o(0, 1) = o(1, 0) = -0.5;
  o(1, 2) = o(2, 1) = 0.4;
  o(0, 2) = o(2, 0) = 0.3;
  const Eigen::Vector3d start(0.8, 0.8, 0.8);
  const double h0 = network_energy(start, o);
  Eigen::VectorXd drop(100);
  for (int c = 0; c < 100; ++c) {
    ChainState s(start, 10.0, derive_seed(5, static_cast<std::uint64_t>(c)));
    for (int k = 0; k < 1000; ++k) s = sweep(std::move(s), o);
    drop(c) = h0 - network_energy(s.beliefs, o);
  }
  const double mean = drop.mean();
  const double sd = std::sqrt((drop.array() - mean).square().sum() / 99.0);
  EXPECT_GT(mean / (sd / 10.0), 3.4);  // one-sided p < .001 at df = 99
}

TEST(Sweep, ValidatesArguments) {
  auto s = initial_state(2, 1.0, 1);
  EXPECT_EQ(kind_of([&] { sweep(s, Eigen::MatrixXd::Zero(2, 2), 0.0); }), ErrorKind::domain);
  EXPECT_EQ(kind_of([&] { sweep(s, Eigen::MatrixXd::Zero(2, 2), 2.5); }), ErrorKind::domain);
  EXPECT_EQ(kind_of([&] { sweep(s, Eigen::MatrixXd::Zero(3, 3)); }), ErrorKind::dimension);
  s.beta = -1.0;
  EXPECT_EQ(kind_of([&] { sweep(s, Eigen::MatrixXd::Zero(2, 2)); }), ErrorKind::domain);
}

TEST(Sweep, SeedDeterminism) {
  Eigen::MatrixXd o = Eigen::MatrixXd::Zero(4, 4);
  o(0, 1) = o(1, 0) = 0.3;
  auto a = initial_state(4, 2.0, 77), b = initial_state(4, 2.0, 77);
  for (int k = 0; k < 50; ++k) {
    a = sweep(std::move(a), o);
    b = sweep(std::move(b), o);
  }
  EXPECT_EQ(a.beliefs, b.beliefs);
  const auto c1 = run_chains(o, 2.0, {Eigen::Vector4d::Zero(), Eigen::Vector4d::Ones()}, 30, 10, 5, 0.2, 1);
  const auto c2 = run_chains(o, 2.0, {Eigen::Vector4d::Zero(), Eigen::Vector4d::Ones()}, 30, 10, 5, 0.2, 2);
  ASSERT_EQ(c1.size(), 2u);
  ASSERT_EQ(c1[0].size(), 4u);
  for (std::size_t c = 0; c < 2; ++c)
    for (std::size_t k = 0; k < c1[c].size(); ++k) {
      EXPECT_EQ(c1[c][k].beliefs, c2[c][k].beliefs);
      EXPECT_EQ(c1[c][k].sweep, 10 * k);
    }
}

TEST(Equilibrium, PlumbingIdentity) {
  const Eigen::MatrixXd o = Eigen::MatrixXd::Zero(3, 3);
  const Eigen::VectorXd d = Eigen::VectorXd::Constant(3, 0.5);
  const Eigen::MatrixXd x = sample_equilibrium(o, d, 1, 0, 1, 99);
  auto s = initial_state(3, 2.0, 99);
  s = sweep(std::move(s), o);
  EXPECT_EQ(Eigen::VectorXd(x.row(0).transpose()), s.beliefs);
}

TEST(Equilibrium, NullNetworkIsUncorrelated) {
  const Eigen::MatrixXd x = sample_equilibrium(Eigen::MatrixXd::Zero(3, 3), Eigen::VectorXd::Ones(3), 10000, 100, 5, 8);
  for (int i = 0; i < 3; ++i)
    for (int j = i + 1; j < 3; ++j) EXPECT_LT(std::abs(correlation(x.col(i), x.col(j))), 0.05);
}

TEST(Equilibrium, StrongEdgeSignIsReproduced) {
  for (double w : {0.6, -0.6}) {
    Eigen::MatrixXd o = Eigen::MatrixXd::Zero(3, 3);
    o(0, 1) = o(1, 0) = w;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const Eigen::MatrixXd x = sample_equilibrium(o, Eigen::VectorXd::Constant(3, 0.2), 1000, 200, 2, seed);
      EXPECT_GT(w * correlation(x.col(0), x.col(1)), 0.0) << "seed " << seed;
    }
  }
}

TEST(Generate, NullNetworkGivesStandardNormalColumns) {
  StudyConfig c;
  for (int j = 0; j < 3; ++j) c.beliefs.push_back({"b" + std::to_string(j), BeliefKind::moral, Scale::likert7});
  c.omega = Eigen::MatrixXd::Zero(3, 3);
  c.delta = {Eigen::VectorXd::Ones(3)};
  c.mu = Eigen::VectorXd::Zero(3);
  c.waves = {"w1"};
  c.n_persons = 5000;
  const auto st = generate_panel(c, 12);
  const double critical = 1.628 / std::sqrt(5000.0);  // alpha = .01
  for (int j = 0; j < 3; ++j) EXPECT_LT(ks_distance(st.panel.values[0].col(j)), critical);
  EXPECT_LT(std::abs(correlation(st.panel.values[0].col(0), st.panel.values[0].col(1))), 0.05);
}

TEST(Generate, ZeroNoiseLimitAndResidualRecovery) {
  StudyConfig c = small_study();
  c.delta = {Eigen::VectorXd::Constant(3, 1e-6), Eigen::VectorXd::Constant(3, 1e-6)};
  c.mu = Eigen::Vector3d(0.1, -0.2, 0.3);
  c.person_effect_sd = 0.2;
  c.time_effect_sd = 0.1;
  const auto st = generate_panel(c, 4);
  for (std::size_t t = 0; t < 2; ++t)
    for (Eigen::Index i = 0; i < 50; ++i) {
      const Eigen::VectorXd expected = c.mu + st.person_effects.row(i).transpose() + st.time_effects.row(static_cast<Eigen::Index>(t)).transpose();
      EXPECT_LT((st.panel.values[t].row(i).transpose() - expected).cwiseAbs().maxCoeff(), 1e-4);
    }

  c.delta = {Eigen::VectorXd::Zero(3), Eigen::VectorXd::Zero(3)};
  EXPECT_EQ(kind_of([&] { generate_panel(c, 4); }), ErrorKind::model_domain);
}

TEST(Generate, SeedDeterministicAndGroupsRoundRobin) {
  StudyConfig c = small_study();
  c.groups = {"a", "b", "c"};
  const auto x = generate_panel(c, 5), y = generate_panel(c, 5), z = generate_panel(c, 6);
  EXPECT_EQ(x.panel.values[1], y.panel.values[1]);
  EXPECT_NE(x.panel.values[1], z.panel.values[1]);
  EXPECT_EQ(x.panel.groups[4], "b");
  EXPECT_TRUE(x.panel.rescaled);
}

TEST(Generate, NonPositiveDefiniteWaveIsNamed) {
  StudyConfig c = small_study();
  c.omega(0, 1) = c.omega(1, 0) = 1.2;
  try {
    generate_panel(c, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::model_domain);
    EXPECT_NE(std::string(e.what()).find("w1"), std::string::npos);
  }
}

TEST(Generate, InterventionDisplacesHighEnergyPersons) {
  StudyConfig c = small_study();
  c.n_persons = 300;
  c.waves = {"w1", "w2a", "w2b"};
  c.delta.push_back(c.delta.back());
  c.groups = {"treated", "control"};
  InterventionConfig iv;
  iv.pre_wave = 1;
  iv.post_wave = 2;
  iv.step = 0.5;
  iv.retest_sd = 0.0;
  iv.control_groups = {"control"};
  c.intervention = iv;
  const auto st = generate_panel(c, 8);
  std::size_t displaced = 0;
  for (std::size_t i = 0; i < 300; ++i) {
    const auto row = static_cast<Eigen::Index>(i);
    const double pre = network_energy(st.panel.values[1].row(row).transpose(), c.omega);
    const double post = network_energy(st.panel.values[2].row(row).transpose(), c.omega);
    if (st.displaced[i]) {
      ++displaced;
      EXPECT_EQ(st.panel.groups[i], "treated");
      EXPECT_LT(post, pre);
    } else {
      EXPECT_EQ(post, pre);
    }
  }
  EXPECT_GT(displaced, 30u);
  EXPECT_LT(displaced, 150u);
}

TEST(Generate, ChainModeStaysInRange) {
  StudyConfig c = small_study();
  c.mode = GenerationMode::chain;
  c.chain_sweeps = 20;
  const auto st = generate_panel(c, 2);
  for (const auto& m : st.panel.values) EXPECT_LE(m.cwiseAbs().maxCoeff(), 1.0);
}
