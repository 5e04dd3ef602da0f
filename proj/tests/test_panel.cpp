#include <functional>
#include <random>
#include <sstream>
#include <string>

#include <gtest/gtest.h>

#include "beliefnet/panel.hpp"

using namespace beliefnet;

namespace {

Schema three_belief_schema() {
  Schema s;
  s.topic = "gm_food";
  s.time_order = {"w1", "w2a", "w2b", "w3"};
  s.variables = {{"care", {VariableRole::moral, Scale::likert7, false}},
                 {"purity", {VariableRole::moral, Scale::likert7, false}},
                 {"doctors", {VariableRole::social, Scale::percent, false}}};
  return s;
}

std::string complete_csv(int persons) {
  std::ostringstream out;
  out << "person_id,time,variable,value\n";
  for (int i = 1; i <= persons; ++i)
    for (const char* t : {"w1", "w2a", "w2b", "w3"}) {
      out << "p" << i << "," << t << ",care," << 1 + (i % 7) << "\n";
      out << "p" << i << "," << t << ",purity," << 7 - (i % 5) << "\n";
      out << "p" << i << "," << t << ",doctors," << 10 * i << "\n";
    }
  return out.str();
}

PanelDataset load_string(const std::string& text, const Schema& schema) {
  std::istringstream in(text);
  return load_panel(csv::read(in), schema);
}

ErrorKind kind_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorKind::io;
}

PanelDataset random_panel(std::size_t n, std::size_t T, std::size_t p, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z(0.0, 1.0);
  PanelDataset d;
  for (std::size_t i = 0; i < n; ++i) d.persons.push_back("p" + std::to_string(i));
  for (std::size_t t = 0; t < T; ++t) d.time_points.push_back("t" + std::to_string(t));
  for (std::size_t j = 0; j < p; ++j) d.beliefs.push_back({"b" + std::to_string(j), BeliefKind::moral, Scale::likert7});
  for (std::size_t t = 0; t < T; ++t) {
    Eigen::MatrixXd m(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(p));
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = 0.3 * z(rng);
    d.values.push_back(m);
  }
  d.dissonance.assign(T, std::nullopt);
  d.rescaled = true;
  return d;
}

}  // namespace

TEST(LoadPanel, CompleteGridKeepsEveryPerson) {
  const auto d = load_string(complete_csv(2), three_belief_schema());
  EXPECT_EQ(d.n_persons(), 2u);
  EXPECT_EQ(d.n_times(), 4u);
  EXPECT_EQ(d.n_beliefs(), 3u);
  EXPECT_EQ(d.dropped_persons, 0u);
  EXPECT_EQ(d.topic, "gm_food");
  EXPECT_DOUBLE_EQ(d.values[0](1, 2), 20.0);
}

TEST(LoadPanel, PersonMissingAWaveIsDroppedAndCounted) {
  std::string text = complete_csv(3);
  std::string filtered;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);)
    if (line.rfind("p2,w3,", 0) != 0) filtered += line + "\n";
  const auto d = load_string(filtered, three_belief_schema());
  EXPECT_EQ(d.n_persons(), 2u);
  EXPECT_EQ(d.dropped_persons, 1u);
  EXPECT_EQ(d.persons, (std::vector<std::string>{"p1", "p3"}));
}

TEST(LoadPanel, NaCellCountsAsMissing) {
  std::string text = complete_csv(2);
  const std::string target = "p1,w2a,care,";
  const auto pos = text.find(target);
  ASSERT_NE(pos, std::string::npos);
  const auto end = text.find('\n', pos);
  text.replace(pos, end - pos, target + "NA");
  const auto d = load_string(text, three_belief_schema());
  EXPECT_EQ(d.n_persons(), 1u);
  EXPECT_EQ(d.dropped_persons, 1u);
}

TEST(LoadPanel, DuplicateKeyIsConflict) {
  std::string text = complete_csv(2) + "p1,w1,care,5\n";
  EXPECT_EQ(kind_of([&] { load_string(text, three_belief_schema()); }), ErrorKind::conflict);
}

TEST(LoadPanel, MalformedRowReportsLine) {
  std::string text = "person_id,time,variable,value\np1,w1,care,abc\n";
  try {
    load_string(text, three_belief_schema());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::parse);
    EXPECT_NE(std::string(e.what()).find("2"), std::string::npos);
  }
  EXPECT_EQ(kind_of([] { load_string("person_id,time,variable,value\np1,w1,care\n", three_belief_schema()); }),
            ErrorKind::parse);
}

TEST(LoadPanel, ReversedDissonanceItemsAreRecoded) {
  Schema s = three_belief_schema();
  s.variables.push_back({"at_ease", {VariableRole::dissonance, Scale::likert7, true}});
  s.variables.push_back({"bothered", {VariableRole::dissonance, Scale::likert7, false}});
  s.variables.push_back({"group", {VariableRole::group, Scale::likert7, false}});
  std::string text = complete_csv(2);
  text += "p1,w1,at_ease,2\np1,w1,bothered,5\np2,w1,at_ease,7\np2,w1,bothered,1\n";
  text += "p1,w1,group,farmers\np2,w1,group,control\n";
  const auto d = load_string(text, s);
  ASSERT_TRUE(d.dissonance[0].has_value());
  EXPECT_FALSE(d.dissonance[1].has_value());
  EXPECT_DOUBLE_EQ((*d.dissonance[0])(0, 0), 6.0);
  EXPECT_DOUBLE_EQ((*d.dissonance[0])(1, 0), 1.0);
  EXPECT_DOUBLE_EQ((*d.dissonance[0])(0, 1), 5.0);
  EXPECT_EQ(d.groups, (std::vector<std::string>{"farmers", "control"}));
}

TEST(Rescale, EndpointsAndMidpoints) {
  EXPECT_DOUBLE_EQ(rescale_value(7, Scale::likert7), 1.0);
  EXPECT_DOUBLE_EQ(rescale_value(1, Scale::likert7), -1.0);
  EXPECT_DOUBLE_EQ(rescale_value(4, Scale::likert7), 0.0);
  EXPECT_DOUBLE_EQ(rescale_value(50, Scale::percent), 0.0);
  EXPECT_DOUBLE_EQ(rescale_value(100, Scale::percent), 1.0);
  EXPECT_DOUBLE_EQ(rescale_value(0, Scale::percent), -1.0);
  for (double x : {1.0, 2.5, 6.0}) EXPECT_DOUBLE_EQ(unscale_value(rescale_value(x, Scale::likert7), Scale::likert7), x);
}

TEST(Rescale, OrderPreserving) {
  for (double a = 1.0; a < 7.0; a += 0.25) EXPECT_LT(rescale_value(a, Scale::likert7), rescale_value(a + 0.25, Scale::likert7));
  for (double a = 0.0; a < 100.0; a += 2.5) EXPECT_LT(rescale_value(a, Scale::percent), rescale_value(a + 2.5, Scale::percent));
}

TEST(Rescale, OutOfRangeNamesTheCell) {
  auto d = load_string(complete_csv(2), three_belief_schema());
  d.values[2](1, 0) = 8.0;
  try {
    rescale_beliefs(d);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::domain);
    const std::string msg = e.what();
    EXPECT_NE(msg.find("p2"), std::string::npos);
    EXPECT_NE(msg.find("w2b"), std::string::npos);
    EXPECT_NE(msg.find("care"), std::string::npos);
  }
  const auto r = rescale_beliefs(load_string(complete_csv(2), three_belief_schema()));
  EXPECT_TRUE(r.rescaled);
  EXPECT_DOUBLE_EQ(r.values[0](0, 2), -0.8);
}

TEST(Residualize, SaturatingInputGivesZeroResiduals) {
  auto d = random_panel(7, 4, 3, 1);
  std::mt19937_64 rng(2);
  std::normal_distribution<double> z;
  Eigen::MatrixXd person(7, 3), time(4, 3);
  for (Eigen::Index i = 0; i < person.size(); ++i) person(i) = z(rng);
  for (Eigen::Index i = 0; i < time.size(); ++i) time(i) = z(rng);
  for (std::size_t t = 0; t < 4; ++t) d.values[t] = person.rowwise() + time.row(static_cast<Eigen::Index>(t));
  const auto r = residualize(d);
  for (const auto& m : r.residuals) EXPECT_LT(m.cwiseAbs().maxCoeff(), 1e-12);

  for (auto& m : d.values) m.setConstant(0.4);
  for (const auto& m : residualize(d).residuals) EXPECT_LT(m.cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Residualize, MatchesDummyVariableLeastSquares) {
  const std::size_t n = 12, T = 4, p = 3;
  auto d = random_panel(n, T, p, 3);
  // additive person and time effects on top of the noise
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t i = 0; i < n; ++i)
      d.values[t].row(static_cast<Eigen::Index>(i)).array() += 0.5 * static_cast<double>(i) - 0.3 * static_cast<double>(t);
  const auto r = residualize(d);

  const auto rows = static_cast<Eigen::Index>(n * T);
  Eigen::MatrixXd X = Eigen::MatrixXd::Zero(rows, static_cast<Eigen::Index>(1 + (n - 1) + (T - 1)));
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t i = 0; i < n; ++i) {
      const auto row = static_cast<Eigen::Index>(t * n + i);
      X(row, 0) = 1.0;
      if (i > 0) X(row, static_cast<Eigen::Index>(i)) = 1.0;
      if (t > 0) X(row, static_cast<Eigen::Index>(n - 1 + t)) = 1.0;
    }
  for (std::size_t j = 0; j < p; ++j) {
    Eigen::VectorXd y(rows);
    for (std::size_t t = 0; t < T; ++t)
      for (std::size_t i = 0; i < n; ++i)
        y(static_cast<Eigen::Index>(t * n + i)) = d.values[t](static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    const Eigen::VectorXd beta = X.colPivHouseholderQr().solve(y);
    const Eigen::VectorXd e = y - X * beta;
    for (std::size_t t = 0; t < T; ++t)
      for (std::size_t i = 0; i < n; ++i)
        EXPECT_NEAR(r.residuals[t](static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)),
                    e(static_cast<Eigen::Index>(t * n + i)), 1e-9);
  }
}

TEST(Residualize, MeansVanishAndIdempotent) {
  const auto d = random_panel(30, 4, 5, 4);
  const auto r = residualize(d);
  Eigen::MatrixXd person_sum = Eigen::MatrixXd::Zero(30, 5);
  for (const auto& m : r.residuals) {
    EXPECT_LT(m.colwise().mean().cwiseAbs().maxCoeff(), 1e-9);
    person_sum += m;
  }
  EXPECT_LT(person_sum.cwiseAbs().maxCoeff(), 1e-9 * 30);
  const auto rr = residualize(as_panel(r));
  for (std::size_t t = 0; t < 4; ++t) EXPECT_LT((rr.residuals[t] - r.residuals[t]).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Residualize, NeedsTwoPersonsAndTwoTimes) {
  EXPECT_EQ(kind_of([] { residualize(random_panel(1, 4, 3, 5)); }), ErrorKind::dimension);
  EXPECT_EQ(kind_of([] { residualize(random_panel(5, 1, 3, 5)); }), ErrorKind::dimension);
}

TEST(Dissonance, IdenticalColumnsGiveAlphaOne) {
  Eigen::MatrixXd items(6, 3);
  const Eigen::VectorXd base = (Eigen::VectorXd(6) << 1, 3, 2, 7, 5, 4).finished();
  for (int k = 0; k < 3; ++k) items.col(k) = base;
  EXPECT_EQ(cronbach_alpha(items), 1.0);
  const auto idx = dissonance_index(items);
  EXPECT_TRUE((idx.score - base).cwiseAbs().maxCoeff() < 1e-15);
}

TEST(Dissonance, InvariantUnderShiftingAnItem) {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> z;
  Eigen::MatrixXd items(50, 3);
  for (Eigen::Index i = 0; i < 50; ++i) {
    const double common = z(rng);
    for (Eigen::Index k = 0; k < 3; ++k) items(i, k) = common + 0.5 * z(rng);
  }
  Eigen::MatrixXd shifted = items;
  shifted.col(1).array() += 2.5;
  EXPECT_NEAR(cronbach_alpha(items), cronbach_alpha(shifted), 1e-12);
}

TEST(Dissonance, IndependentItemsGiveAlphaNearZero) {
  std::mt19937_64 rng(2024);
  std::normal_distribution<double> z;
  Eigen::MatrixXd items(10000, 3);
  for (Eigen::Index i = 0; i < items.size(); ++i) items(i) = z(rng);
  // direct variance formula as oracle
  auto var = [](const Eigen::VectorXd& v) { return (v.array() - v.mean()).square().sum() / (static_cast<double>(v.size()) - 1); };
  const double oracle = 1.5 * (1.0 - (var(items.col(0)) + var(items.col(1)) + var(items.col(2))) / var(items.rowwise().sum()));
  const double a = cronbach_alpha(items);
  EXPECT_NEAR(a, oracle, 1e-12);
  EXPECT_LT(std::abs(a), 0.05);
}

TEST(Dissonance, ZeroVarianceKeepsScoreWithoutAlpha) {
  Eigen::MatrixXd items = Eigen::MatrixXd::Constant(5, 3, 4.0);
  EXPECT_EQ(kind_of([&] { cronbach_alpha(items); }), ErrorKind::degenerate);
  const auto idx = dissonance_index(items);
  EXPECT_FALSE(idx.alpha.has_value());
  EXPECT_DOUBLE_EQ(idx.score(2), 4.0);
}

TEST(Valence, BoundaryAndSplit) {
  auto d = random_panel(2, 2, 2, 6);
  d.values[0].setZero();
  auto s = split_by_valence(d, 0);
  EXPECT_TRUE(s.negative.empty());
  EXPECT_EQ(s.non_negative.size(), 2u);
  d.values[0] << -0.05, -0.05, 0.05, 0.05;
  s = split_by_valence(d, 0);
  EXPECT_EQ(s.negative, std::vector<std::size_t>{0});
  EXPECT_EQ(s.non_negative, std::vector<std::size_t>{1});
}

TEST(Valence, MatchesRecountAndIgnoresSafety) {
  auto d = random_panel(200, 2, 4, 7);
  d.beliefs[3].kind = BeliefKind::safety;
  d.values[1].col(3).setConstant(5.0);
  const auto s = split_by_valence(d, 1);
  std::size_t negatives = 0;
  for (Eigen::Index i = 0; i < 200; ++i) negatives += d.values[1].row(i).head(3).sum() < 0.0 ? 1 : 0;
  EXPECT_EQ(s.negative.size(), negatives);
  EXPECT_EQ(s.negative.size() + s.non_negative.size(), 200u);
}

TEST(Subsets, NetworkBeliefsDropSafety) {
  auto d = random_panel(3, 2, 4, 8);
  d.beliefs[1].kind = BeliefKind::safety;
  const auto n = network_beliefs(d);
  ASSERT_EQ(n.n_beliefs(), 3u);
  EXPECT_EQ(n.beliefs[1].name, "b2");
  EXPECT_DOUBLE_EQ(n.values[1](2, 1), d.values[1](2, 2));
}
