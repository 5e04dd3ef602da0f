#include <functional>
#include <random>

#include <gtest/gtest.h>

#include "beliefnet/stats.hpp"

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

Eigen::VectorXd normals(Eigen::Index n, std::mt19937_64& rng) {
  std::normal_distribution<double> z;
  Eigen::VectorXd v(n);
  for (auto& x : v) x = z(rng);
  return v;
}

PanelDataset panel_of(std::vector<Eigen::MatrixXd> waves) {
  PanelDataset d;
  for (Eigen::Index i = 0; i < waves[0].rows(); ++i) d.persons.push_back("p" + std::to_string(i));
  for (std::size_t t = 0; t < waves.size(); ++t) d.time_points.push_back("w" + std::to_string(t + 1));
  for (Eigen::Index j = 0; j < waves[0].cols(); ++j) d.beliefs.push_back({"b" + std::to_string(j), BeliefKind::moral, Scale::likert7});
  d.values = std::move(waves);
  d.dissonance.assign(d.values.size(), std::nullopt);
  d.rescaled = true;
  return d;
}

}  // namespace

TEST(Pearson, PerfectAndKnown) {
  Eigen::VectorXd x = Eigen::VectorXd::LinSpaced(10, 1, 10);
  EXPECT_DOUBLE_EQ(pearson(x, x).r, 1.0);
  EXPECT_DOUBLE_EQ(pearson(x, -x).r, -1.0);
  EXPECT_EQ(pearson(x, x).p, 0.0);

  Eigen::VectorXd y(10);
  y << 2, 1, 4, 3, 7, 8, 5, 10, 9, 6;
  const auto c = pearson(x, y);
  EXPECT_NEAR(c.r, 0.7818181818181816, 1e-14);
  EXPECT_NEAR(c.p, 0.0075470077810678715, 1e-10);
  EXPECT_EQ(c.df, 8.0);
  EXPECT_EQ(c.n, 10u);
}

TEST(Pearson, BruteForceAndAffineInvariance) {
  std::mt19937_64 rng(3);
  const Eigen::VectorXd x = normals(50, rng);
  const Eigen::VectorXd y = 0.5 * x + normals(50, rng);
  double mx = 0, my = 0;
  for (int i = 0; i < 50; ++i) mx += x(i) / 50, my += y(i) / 50;
  double sxy = 0, sxx = 0, syy = 0;
  for (int i = 0; i < 50; ++i) {
    sxy += (x(i) - mx) * (y(i) - my);
    sxx += (x(i) - mx) * (x(i) - mx);
    syy += (y(i) - my) * (y(i) - my);
  }
  const double r = sxy / std::sqrt(sxx * syy);
  EXPECT_NEAR(pearson(x, y).r, r, 1e-12);
  EXPECT_NEAR(pearson((3.0 * x).array() + 2.0, (0.5 * y).array() - 7.0).r, r, 1e-12);
  EXPECT_NEAR(pearson(-2.0 * x, y).r, -r, 1e-12);
}

TEST(Pearson, Errors) {
  EXPECT_EQ(kind_of([] { pearson(Eigen::VectorXd::Ones(5), Eigen::VectorXd::LinSpaced(5, 0, 1)); }), ErrorKind::degenerate);
  EXPECT_EQ(kind_of([] { pearson(Eigen::VectorXd::Ones(5), Eigen::VectorXd::Ones(4)); }), ErrorKind::dimension);
}

TEST(FisherZ, ValuesAndRoundTrip) {
  EXPECT_NEAR(fisher_z(0.5), 0.549306144334055, 1e-12);
  EXPECT_EQ(fisher_z(0.0), 0.0);
  EXPECT_EQ(kind_of([] { fisher_z(1.0); }), ErrorKind::domain);
  EXPECT_EQ(kind_of([] { fisher_z(-1.0); }), ErrorKind::domain);
  for (double r = -0.95; r < 0.96; r += 0.05) EXPECT_NEAR(inverse_fisher_z(fisher_z(r)), r, 1e-14);
}

TEST(Meta, TwoCorrelationOracle) {
  const std::vector<EffectEstimate> e{{EffectKind::correlation, 0.1, 0.0, 90, "a"}, {EffectKind::correlation, 0.3, 0.0, 90, "b"}};
  const auto m = meta_random_effects(e);
  EXPECT_NEAR(m.q, 1.9034753122754995, 1e-12);
  EXPECT_NEAR(m.tau2, 0.010384773704316086, 1e-12);
  EXPECT_NEAR(m.pooled, 0.20492747596709365, 1e-12);
  EXPECT_NEAR(m.se, 0.10459212823601809, 1e-12);
  EXPECT_NEAR(m.pooled_effect, 0.20210619706654384, 1e-12);
  EXPECT_NEAR(m.p, 0.05007753047120753, 1e-9);
  EXPECT_NEAR(m.weights[0] + m.weights[1], 1.0, 1e-15);
  EXPECT_LT(m.ci_low, m.pooled_effect);
  EXPECT_GT(m.ci_high, m.pooled_effect);
  EXPECT_EQ(m.groups, (std::vector<std::string>{"a", "b"}));
}

TEST(Meta, HomogeneousAndFixedEffect) {
  const std::vector<EffectEstimate> same(4, {EffectKind::correlation, 0.25, 0.0, 120, ""});
  const auto m = meta_random_effects(same);
  EXPECT_EQ(m.tau2, 0.0);
  EXPECT_NEAR(m.pooled_effect, 0.25, 1e-14);

  std::vector<EffectEstimate> d;
  double num = 0, den = 0;
  const double values[] = {0.2, 0.5, 0.9}, ses[] = {0.1, 0.2, 0.15};
  for (int i = 0; i < 3; ++i) {
    d.push_back({EffectKind::mean_change, values[i], ses[i], 50, ""});
    num += values[i] / (ses[i] * ses[i]);
    den += 1 / (ses[i] * ses[i]);
  }
  const auto f = meta_random_effects(d, 0.0);
  EXPECT_NEAR(f.pooled, num / den, 1e-14);
  EXPECT_NEAR(f.se, std::sqrt(1 / den), 1e-14);
  double total = 0;
  for (double w : f.weights) total += w;
  EXPECT_NEAR(total, 1.0, 1e-14);
  EXPECT_GT(meta_random_effects(d).tau2, 0.0);
}

TEST(Meta, Errors) {
  EXPECT_EQ(kind_of([] { meta_random_effects({{EffectKind::correlation, 0.1, 0.0, 90, ""}}); }), ErrorKind::aggregation);
  EXPECT_EQ(kind_of([] { meta_random_effects({}); }), ErrorKind::aggregation);
  EXPECT_EQ(kind_of([] {
              meta_random_effects({{EffectKind::correlation, 0.1, 0.0, 3, ""}, {EffectKind::correlation, 0.1, 0.0, 90, ""}});
            }),
            ErrorKind::aggregation);
  EXPECT_EQ(kind_of([] {
              meta_random_effects({{EffectKind::correlation, 0.1, 0.0, 90, ""}, {EffectKind::mean_change, 0.1, 0.1, 90, ""}});
            }),
            ErrorKind::aggregation);
}

TEST(MeanChange, Oracle) {
  Eigen::VectorXd pre(7), post(7);
  pre << 0.2, 0.5, -0.1, 0.4, 0.3, 0.0, 0.6;
  post << 0.1, 0.2, -0.3, 0.35, 0.0, -0.2, 0.1;
  const auto mc = standardized_mean_change(pre, post);
  EXPECT_NEAR(mc.d, 1.5798095832497445, 1e-12);
  EXPECT_NEAR(mc.t, 4.1797832761154154, 1e-12);
  EXPECT_NEAR(mc.p, 0.005814894134703183, 1e-10);
  EXPECT_NEAR(mc.se, std::sqrt(1.0 / 7 + mc.d * mc.d / 14), 1e-15);
  EXPECT_EQ(mc.df, 6.0);

  const auto reversed = standardized_mean_change(post, pre);
  EXPECT_NEAR(reversed.d, -mc.d, 1e-14);
  EXPECT_NEAR(reversed.t, -mc.t, 1e-12);
}

TEST(MeanChange, KnownDistributionAndDegenerates) {
  std::mt19937_64 rng(11);
  const Eigen::VectorXd pre = normals(20000, rng);
  const Eigen::VectorXd post = pre.array() - 1.0 - normals(20000, rng).array();
  const auto mc = standardized_mean_change(pre, post);
  EXPECT_NEAR(mc.mean_difference, 1.0, 0.03);
  EXPECT_NEAR(mc.d, 1.0, 0.03);

  const Eigen::VectorXd x = normals(10, rng);
  const auto zero = standardized_mean_change(x, x);
  EXPECT_EQ(zero.d, 0.0);
  EXPECT_EQ(zero.t, 0.0);
  EXPECT_EQ(zero.p, 1.0);
  EXPECT_EQ(kind_of([&] { standardized_mean_change(x, x.array() + 0.2); }), ErrorKind::degenerate);
  EXPECT_EQ(kind_of([&] { standardized_mean_change(x, x.head(9)); }), ErrorKind::dimension);
}

TEST(MeanChange, PreScoreStandardizer) {
  std::mt19937_64 rng(12);
  const Eigen::VectorXd pre = normals(200, rng);
  const Eigen::VectorXd post = 0.6 * pre + normals(200, rng);
  const auto mc = standardized_mean_change(pre, post, Standardizer::pre_score);
  const double sd_pre = std::sqrt((pre.array() - pre.mean()).square().sum() / 199.0);
  EXPECT_NEAR(mc.d, (pre - post).mean() / sd_pre, 1e-14);
}

TEST(BeliefChangeTest, UniformShiftAndTally) {
  Eigen::MatrixXd w1(3, 4), w2(3, 4);
  w1 << 0.1, 0.2, 0.3, 0.4, -0.5, 0.0, 0.5, 0.2, 0.0, 0.0, 0.0, 0.0;
  w2 = w1.array() + 0.3;
  w2.row(2) = w1.row(2);
  auto d = panel_of({w1, w2});
  d.beliefs[3].kind = BeliefKind::social;
  d.values[1](0, 3) = -1.0;  // social beliefs do not count
  for (std::size_t i = 0; i < 2; ++i) {
    const auto c = absolute_belief_change(d, i, 0, 1);
    EXPECT_NEAR(c.signed_change, 0.3, 1e-15);
    EXPECT_NEAR(c.absolute_change, 0.3, 1e-15);
    EXPECT_NEAR(absolute_belief_change(d, i, 1, 0).signed_change, -0.3, 1e-15);
  }
  const auto t = direction_tally({0.3, -0.1, 0.0, 0.2});
  EXPECT_EQ(t.positive, 2u);
  EXPECT_EQ(t.negative, 1u);
  EXPECT_EQ(t.unchanged, 1u);
  EXPECT_DOUBLE_EQ(t.share_positive(), 0.5);
  EXPECT_EQ(direction_tally({}).share_negative(), 0.0);
}

TEST(Centrality, StarEmptyAndBruteForce) {
  Eigen::MatrixXd star = Eigen::MatrixXd::Zero(4, 4);
  for (int j = 1; j < 4; ++j) star(0, j) = star(j, 0) = j % 2 ? 0.2 : -0.2;
  const Eigen::VectorXd s = strength_centrality(star);
  EXPECT_NEAR(s(0), 0.6, 1e-15);
  for (int j = 1; j < 4; ++j) EXPECT_NEAR(s(j), 0.2, 1e-15);
  EXPECT_EQ(strength_centrality(Eigen::MatrixXd::Zero(3, 3)), Eigen::VectorXd::Zero(3));

  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  Eigen::MatrixXd o = Eigen::MatrixXd::Zero(6, 6);
  for (int i = 0; i < 6; ++i)
    for (int j = i + 1; j < 6; ++j) o(i, j) = o(j, i) = u(rng);
  const Eigen::VectorXd c = strength_centrality(o);
  for (int i = 0; i < 6; ++i) {
    double sum = 0;
    for (int j = 0; j < 6; ++j)
      if (j != i) sum += std::abs(o(i, j));
    EXPECT_NEAR(c(i), sum, 1e-15);
  }
  Eigen::PermutationMatrix<Eigen::Dynamic> perm(6);
  perm.indices() << 3, 0, 5, 1, 4, 2;
  EXPECT_TRUE(strength_centrality(perm * o * perm.transpose()).isApprox(perm * c, 1e-15));

  const std::vector<std::string> names{"a", "b", "c", "d"};
  const Eigen::VectorXd e = direct_edge_to(star, names, "a");
  EXPECT_EQ(e(0), 0.0);
  EXPECT_NEAR(e(2), 0.2, 1e-15);
  EXPECT_EQ(kind_of([&] { direct_edge_to(star, names, "z"); }), ErrorKind::lookup);
}

TEST(Multilevel, PersonEffectsInflatePooledCorrelations) {
  std::mt19937_64 rng(5);
  const Eigen::Index n = 400, p = 4;
  std::vector<Eigen::MatrixXd> waves(3, Eigen::MatrixXd(n, p));
  for (auto& w : waves)
    for (Eigen::Index j = 0; j < p; ++j) w.col(j) = normals(n, rng);
  // without person effects, centering only removes noise
  const auto plain = multilevel_vs_pooled(panel_of(waves));
  EXPECT_LT((plain.pooled - plain.within).cwiseAbs().maxCoeff(), 0.1);

  const Eigen::VectorXd trait = normals(n, rng);
  for (auto& w : waves)
    for (Eigen::Index j = 0; j < p; ++j) w.col(j) += 2.0 * trait;
  const auto shifted = multilevel_vs_pooled(panel_of(waves));
  EXPECT_GT(shifted.mean_abs_pooled, 0.6);
  EXPECT_LT(shifted.mean_abs_within, 0.1);
  // within-person correlations ignore the stable trait entirely
  EXPECT_TRUE(shifted.within.isApprox(multilevel_vs_pooled([&] {
                                        auto d = panel_of(waves);
                                        for (auto& w : d.values)
                                          for (Eigen::Index j = 0; j < p; ++j) w.col(j) -= 2.0 * trait;
                                        return d;
                                      }()).within,
                                      1e-9));
}

TEST(Normality, EnvelopeSeparatesHeavyTails) {
  std::mt19937_64 rng(6);
  const Eigen::Index n = 2000;
  const double envelope = qq_envelope(static_cast<std::size_t>(n), 0.99, 200, 1);
  Eigen::MatrixXd gauss(n, 3);
  for (Eigen::Index j = 0; j < 3; ++j) gauss.col(j) = normals(n, rng);
  EXPECT_LT(normality_diagnostic(gauss).qq_max_deviation, envelope);

  std::student_t_distribution<double> t3(3.0);
  Eigen::MatrixXd heavy(n, 3);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < 3; ++j) heavy(i, j) = t3(rng);
  const auto h = normality_diagnostic(heavy);
  EXPECT_GT(h.qq_max_deviation, envelope);
  EXPECT_GT(h.excess_kurtosis, 1.0);

  const auto flat = normality_diagnostic(Eigen::MatrixXd::Constant(10, 3, 0.4));
  EXPECT_TRUE(flat.degenerate);
  EXPECT_EQ(kind_of([] { normality_diagnostic(Eigen::MatrixXd::Zero(2, 3)); }), ErrorKind::dimension);
}

TEST(Variance, DecompositionOracles) {
  std::mt19937_64 rng(7);
  const Eigen::Index n = 30, p = 3;
  Eigen::MatrixXd base(n, p);
  for (Eigen::Index j = 0; j < p; ++j) base.col(j) = normals(n, rng);
  const auto constant = variance_decomposition(panel_of({base, base, base}));
  EXPECT_LT(constant.within_person.maxCoeff(), 1e-30);

  std::vector<Eigen::MatrixXd> waves;
  for (int t = 0; t < 4; ++t) {
    Eigen::MatrixXd w(n, p);
    for (Eigen::Index j = 0; j < p; ++j) w.col(j) = normals(n, rng);
    waves.push_back(w);
  }
  const auto vd = variance_decomposition(panel_of(waves), 1);
  for (Eigen::Index j = 0; j < p; ++j) {
    double within = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
      double m = 0;
      for (int t = 0; t < 4; ++t) m += waves[t](i, j) / 4;
      double ss = 0;
      for (int t = 0; t < 4; ++t) ss += (waves[t](i, j) - m) * (waves[t](i, j) - m);
      within += ss / 3 / static_cast<double>(n);
    }
    double m = 0, ss = 0;
    for (Eigen::Index i = 0; i < n; ++i) m += waves[1](i, j) / static_cast<double>(n);
    for (Eigen::Index i = 0; i < n; ++i) ss += (waves[1](i, j) - m) * (waves[1](i, j) - m);
    EXPECT_NEAR(vd.within_person(j), within, 1e-12);
    EXPECT_NEAR(vd.between_person(j), ss / static_cast<double>(n - 1), 1e-12);
    EXPECT_NEAR(vd.within_person(j), 1.0, 0.3);
  }
  EXPECT_TRUE(vd.correlation.has_value());
  EXPECT_EQ(kind_of([&] { variance_decomposition(panel_of({base})); }), ErrorKind::dimension);
}
