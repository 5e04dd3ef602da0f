#pragma once

// JSON and CSV encodings of models, study configurations and panels.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "beliefnet/csv.hpp"
#include "beliefnet/dynamics.hpp"
#include "beliefnet/error.hpp"
#include "beliefnet/ggm.hpp"
#include "beliefnet/ggm_search.hpp"
#include "beliefnet/panel.hpp"

namespace beliefnet {

using ojson = nlohmann::ordered_json;

inline ojson to_json(const Eigen::VectorXd& v) {
  ojson a = ojson::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

inline ojson to_json(const Eigen::MatrixXd& m) {
  ojson rows = ojson::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) rows.push_back(to_json(Eigen::VectorXd(m.row(i).transpose())));
  return rows;
}

inline Eigen::VectorXd vector_from_json(const ojson& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

inline Eigen::MatrixXd matrix_from_json(const ojson& j) {
  const auto rows = j.get<std::vector<std::vector<double>>>();
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()), rows.empty() ? 0 : static_cast<Eigen::Index>(rows[0].size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (static_cast<Eigen::Index>(rows[i].size()) != m.cols()) throw Error(ErrorKind::config, "ragged matrix in JSON");
    for (std::size_t k = 0; k < rows[i].size(); ++k) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = rows[i][k];
  }
  return m;
}

/// Writes `content` to `path` via a temporary file and rename, so readers
/// never see a partial file.
inline void write_atomic(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::io, "cannot write " + tmp.string());
    out << content;
    if (!out) throw Error(ErrorKind::io, "write failed for " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw Error(ErrorKind::io, "cannot rename " + tmp.string() + ": " + ec.message());
}

inline std::string dump(const ojson& j) { return j.dump(2) + "\n"; }

inline ojson read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::io, "cannot open " + path.string());
  try {
    return ojson::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorKind::config, path.string() + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Models

inline ojson spec_to_json(const ModelSpec& s) {
  return {{"key", s.key()},
          {"name", s.name()},
          {"network", s.equal_network ? "equal" : "free"},
          {"intercepts", s.equal_intercepts ? "equal" : "free"},
          {"scalings", s.equal_scaling ? "equal" : "free"},
          {"sparsity", s.sparse ? "sparse" : "dense"}};
}

inline const char* to_string(ParameterKind k) {
  switch (k) {
    case ParameterKind::coupling: return "coupling";
    case ParameterKind::log_scaling: return "log_scaling";
    case ParameterKind::intercept: return "intercept";
  }
  return "?";
}

inline ojson ranking_to_json(const std::vector<RankingRow>& ranking) {
  ojson rows = ojson::array();
  for (const auto& r : ranking) {
    ojson row = {{"model", r.spec.name()}, {"key", r.spec.key()}, {"ok", r.ok}};
    if (r.ok) {
      row["df"] = r.df;
      row["k"] = r.k;
      row["log_likelihood"] = r.log_likelihood;
      row["bic"] = r.bic;
    } else {
      row["error"] = r.error;
    }
    rows.push_back(row);
  }
  return rows;
}

inline ojson model_to_json(const FittedModel& m, TemperatureMode mode = TemperatureMode::scaling_mean) {
  ojson j;
  j["spec"] = spec_to_json(m.spec);
  j["beliefs"] = m.beliefs;
  j["time_points"] = m.time_points;
  const bool shared = m.spec.equal_network;
  ojson edges = ojson::array();
  const auto all_edges = enumerate_edges(m.n_beliefs());
  for (std::size_t t = 0; t < (shared ? std::size_t{1} : m.n_times()); ++t) {
    for (std::size_t e = 0; e < all_edges.size(); ++e) {
      if (!m.support[t][e]) continue;
      const auto [i, k] = all_edges[e];
      ojson edge = {{"i", i}, {"j", k}};
      if (i < m.beliefs.size() && k < m.beliefs.size()) {
        edge["source"] = m.beliefs[i];
        edge["target"] = m.beliefs[k];
      }
      edge["time"] = shared ? ojson(nullptr) : ojson(m.time_points.size() > t ? m.time_points[t] : std::to_string(t));
      edge["omega"] = m.omega[t](static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k));
      edges.push_back(edge);
    }
  }
  j["edges"] = edges;
  ojson omega = ojson::array(), delta = ojson::array(), mu = ojson::array(), support = ojson::array();
  for (std::size_t t = 0; t < m.n_times(); ++t) {
    omega.push_back(to_json(m.omega[t]));
    delta.push_back(to_json(m.delta[t]));
    mu.push_back(to_json(m.mu[t]));
    support.push_back(m.support[t]);
  }
  j["omega"] = omega;
  j["delta"] = delta;
  j["mu"] = mu;
  j["support"] = support;
  j["log_likelihood"] = m.log_likelihood;
  j["k"] = m.k;
  j["n"] = m.n;
  j["bic"] = m.bic;
  j["df"] = m.constrained_df();
  j["converged"] = m.converged;
  j["iterations"] = m.iterations;
  j["temperature_mode"] = to_string(mode);
  ojson temps = ojson::array();
  for (const auto& t : temperature_of(m, mode)) temps.push_back({{"time", t.time}, {"temperature", t.temperature}, {"beta", t.beta}});
  j["temperature"] = temps;
  ojson params = ojson::array();
  for (const auto& p : m.parameters) {
    ojson row = {{"kind", to_string(p.kind)}, {"time", p.time < 0 ? ojson(nullptr) : ojson(p.time)}, {"i", p.i}};
    if (p.kind == ParameterKind::coupling) row["j"] = p.j;
    row["estimate"] = p.estimate;
    row["se"] = std::isfinite(p.se) ? ojson(p.se) : ojson(nullptr);
    params.push_back(row);
  }
  j["parameters"] = params;
  return j;
}

inline FittedModel model_from_json(const ojson& j) {
  FittedModel m;
  try {
    m.spec = parse_spec_key(j.at("spec").at("key").get<std::string>());
    m.beliefs = j.at("beliefs").get<std::vector<std::string>>();
    m.time_points = j.at("time_points").get<std::vector<std::string>>();
    for (const auto& o : j.at("omega")) m.omega.push_back(matrix_from_json(o));
    for (const auto& d : j.at("delta")) m.delta.push_back(vector_from_json(d));
    for (const auto& u : j.at("mu")) m.mu.push_back(vector_from_json(u));
    for (const auto& s : j.at("support")) m.support.push_back(s.get<std::vector<bool>>());
    m.log_likelihood = j.at("log_likelihood").get<double>();
    m.k = j.at("k").get<std::size_t>();
    m.n = j.at("n").get<double>();
    m.bic = j.at("bic").get<double>();
    m.converged = j.value("converged", true);
    m.iterations = j.value("iterations", std::size_t{0});
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::config, std::string("invalid model file: ") + e.what());
  }
  if (m.omega.empty() || m.delta.size() != m.omega.size() || m.mu.size() != m.omega.size())
    throw Error(ErrorKind::config, "invalid model file: per-time blocks disagree");
  return m;
}

inline std::string edges_csv(const FittedModel& m, std::size_t t) {
  std::ostringstream out;
  csv::Writer w(out);
  w.row("source", "target", "weight");
  const auto edges = enumerate_edges(m.n_beliefs());
  for (std::size_t e = 0; e < edges.size(); ++e) {
    if (!m.support[t][e]) continue;
    const auto [i, k] = edges[e];
    w.row(m.beliefs.at(i), m.beliefs.at(k), m.omega[t](static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)));
  }
  return out.str();
}

inline std::string temperature_csv(const FittedModel& m, TemperatureMode mode) {
  std::ostringstream out;
  csv::Writer w(out);
  w.row("time", "temperature", "beta");
  for (const auto& t : temperature_of(m, mode)) w.row(t.time, t.temperature, t.beta);
  return out.str();
}

inline std::string ranking_csv(const std::vector<RankingRow>& ranking) {
  std::ostringstream out;
  csv::Writer w(out);
  w.row("model", "key", "df", "k", "log_likelihood", "bic", "status");
  for (const auto& r : ranking) {
    if (r.ok) w.row(r.spec.name(), r.spec.key(), r.df, r.k, r.log_likelihood, r.bic, "ok");
    else w.row(std::vector<std::string>{r.spec.name(), r.spec.key(), "", "", "", "", "failed: " + r.error});
  }
  return out.str();
}

// ---------------------------------------------------------------------------
// Study configuration

/// Synthetic dissonance items: latent = 4 + energy_weight * H + N(0, latent_sd),
/// item = latent + N(0, item_sd), clipped to [1, 7].
struct DissonanceConfig {
  std::vector<std::string> waves;
  std::size_t items = 3;
  double energy_weight = 2.0;
  double latent_sd = 0.8;
  double item_sd = 0.4;
};

struct ChainConfig {
  std::size_t count = 4;
  std::size_t sweeps = 200;
  std::size_t record_every = 10;
};

struct SimulationConfig {
  StudyConfig study;
  std::optional<DissonanceConfig> dissonance;
  ChainConfig chains;
};

inline BeliefKind parse_kind(const std::string& s) {
  if (s == "moral") return BeliefKind::moral;
  if (s == "social") return BeliefKind::social;
  if (s == "safety") return BeliefKind::safety;
  throw Error(ErrorKind::config, "unknown belief kind '" + s + "'");
}

/// The built-in demonstration study: 6 moral and 6 social beliefs, a sparse
/// shared network, scalings shrinking over four waves, five intervention
/// groups and an energy-dependent intervention between w2a and w2b.
inline SimulationConfig demo_simulation() {
  SimulationConfig cfg;
  StudyConfig& s = cfg.study;
  const std::vector<std::string> moral = {"care", "fairness", "loyalty", "authority", "purity", "liberty"};
  const std::vector<std::string> social = {"family", "online", "doctors", "scientists", "government", "public"};
  for (const auto& n : moral) s.beliefs.push_back({n, BeliefKind::moral, Scale::likert7});
  for (const auto& n : social) s.beliefs.push_back({n, BeliefKind::social, Scale::percent});
  const std::size_t p = s.beliefs.size();
  s.omega = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(p));
  auto edge = [&](std::size_t i, std::size_t j, double w) {
    s.omega(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = w;
    s.omega(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = w;
  };
  edge(0, 1, 0.30); edge(1, 2, 0.20); edge(2, 3, 0.30); edge(3, 4, 0.25); edge(4, 5, 0.20); edge(0, 5, -0.15);
  edge(6, 7, 0.25); edge(7, 8, 0.20); edge(8, 9, 0.35); edge(9, 10, 0.25); edge(10, 11, 0.20);
  edge(0, 8, 0.15); edge(4, 9, -0.20); edge(2, 6, 0.15);
  Eigen::VectorXd base(static_cast<Eigen::Index>(p));
  for (std::size_t i = 0; i < p; ++i) base(static_cast<Eigen::Index>(i)) = 0.22 + 0.01 * static_cast<double>(i % 4);
  for (double c : {1.0, 0.85, 0.8, 0.78}) s.delta.push_back(c * base);
  s.mu = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(p));
  s.waves = {"w1", "w2a", "w2b", "w3"};
  s.n_persons = 979;
  s.person_effect_sd = 0.15;
  s.time_effect_sd = 0.03;
  s.groups = {"information", "farmers", "scientists", "tradition", "simple"};
  InterventionConfig iv;
  iv.pre_wave = 1;
  iv.post_wave = 2;
  iv.retest_sd = 0.03;
  iv.mean_shift = 0.0;
  iv.energy_quantile = 2.0 / 3.0;
  iv.step = 0.6;
  s.intervention = iv;
  s.squash = Squash::clip;
  s.topic = "synthetic";
  DissonanceConfig dc;
  dc.waves = {"w1", "w2b", "w3"};
  cfg.dissonance = dc;
  return cfg;
}

inline ojson simulation_to_json(const SimulationConfig& cfg) {
  const StudyConfig& s = cfg.study;
  ojson j;
  j["topic"] = s.topic;
  j["n_persons"] = s.n_persons;
  j["waves"] = s.waves;
  ojson beliefs = ojson::array();
  for (const auto& b : s.beliefs) beliefs.push_back({{"name", b.name}, {"kind", to_string(b.kind)}, {"scale", to_string(b.scale)}});
  j["beliefs"] = beliefs;
  ojson edges = ojson::array();
  for (const auto& e : enumerate_edges(s.beliefs.size())) {
    const double w = s.omega(static_cast<Eigen::Index>(e.i), static_cast<Eigen::Index>(e.j));
    if (w != 0.0) edges.push_back({{"source", s.beliefs[e.i].name}, {"target", s.beliefs[e.j].name}, {"weight", w}});
  }
  j["edges"] = edges;
  ojson delta = ojson::array();
  for (const auto& d : s.delta) delta.push_back(to_json(d));
  j["delta"] = delta;
  j["mu"] = to_json(s.mu);
  j["person_effect_sd"] = s.person_effect_sd;
  j["time_effect_sd"] = s.time_effect_sd;
  j["groups"] = s.groups;
  if (s.intervention) {
    const auto& iv = *s.intervention;
    j["intervention"] = {{"pre", s.waves.at(iv.pre_wave)},
                         {"post", s.waves.at(iv.post_wave)},
                         {"retest_sd", iv.retest_sd},
                         {"mean_shift", iv.mean_shift},
                         {"energy_quantile", iv.energy_quantile},
                         {"step", iv.step},
                         {"control_groups", iv.control_groups}};
  }
  j["squash"] = s.squash == Squash::clip ? "clip" : "none";
  j["mode"] = s.mode == GenerationMode::gaussian ? "gaussian" : "chain";
  j["chain_sweeps"] = s.chain_sweeps;
  j["proposal_width"] = s.proposal_width;
  if (cfg.dissonance) {
    const auto& d = *cfg.dissonance;
    j["dissonance"] = {{"waves", d.waves},
                       {"items", d.items},
                       {"energy_weight", d.energy_weight},
                       {"latent_sd", d.latent_sd},
                       {"item_sd", d.item_sd}};
  }
  j["chains"] = {{"count", cfg.chains.count}, {"sweeps", cfg.chains.sweeps}, {"record_every", cfg.chains.record_every}};
  return j;
}

inline SimulationConfig simulation_from_json(const ojson& j) {
  SimulationConfig cfg;
  StudyConfig& s = cfg.study;
  try {
    s.topic = j.value("topic", std::string("synthetic"));
    s.n_persons = j.value("n_persons", std::size_t{979});
    s.waves = j.at("waves").get<std::vector<std::string>>();
    for (const auto& b : j.at("beliefs")) {
      BeliefInfo info;
      info.name = b.at("name").get<std::string>();
      info.kind = parse_kind(b.value("kind", std::string("moral")));
      info.scale = parse_scale(b.value("scale", std::string(info.kind == BeliefKind::social ? "percent" : "likert7")));
      s.beliefs.push_back(info);
    }
    const auto p = static_cast<Eigen::Index>(s.beliefs.size());
    auto index_of = [&](const std::string& name) {
      for (Eigen::Index i = 0; i < p; ++i)
        if (s.beliefs[static_cast<std::size_t>(i)].name == name) return i;
      throw Error(ErrorKind::config, "edge refers to unknown belief '" + name + "'");
    };
    s.omega = Eigen::MatrixXd::Zero(p, p);
    if (j.contains("edges")) {
      for (const auto& e : j.at("edges")) {
        const auto a = index_of(e.at("source").get<std::string>());
        const auto b = index_of(e.at("target").get<std::string>());
        if (a == b) throw Error(ErrorKind::config, "self-loop in network");
        s.omega(a, b) = s.omega(b, a) = e.at("weight").get<double>();
      }
    }
    if (j.contains("delta")) {
      for (const auto& d : j.at("delta")) s.delta.push_back(vector_from_json(d));
    } else {
      const Eigen::VectorXd base = j.contains("delta_base") ? vector_from_json(j.at("delta_base")) : Eigen::VectorXd::Constant(p, 0.25);
      const auto scale = j.value("delta_scale", std::vector<double>(s.waves.size(), 1.0));
      for (double c : scale) s.delta.push_back(c * base);
    }
    for (const auto& d : s.delta)
      if (d.size() != p) throw Error(ErrorKind::config, "scaling vector length differs from the belief count");
    s.mu = j.contains("mu") ? vector_from_json(j.at("mu")) : Eigen::VectorXd::Zero(p);
    s.person_effect_sd = j.value("person_effect_sd", 0.0);
    s.time_effect_sd = j.value("time_effect_sd", 0.0);
    s.groups = j.value("groups", std::vector<std::string>{});
    auto wave_index = [&](const std::string& w) {
      for (std::size_t t = 0; t < s.waves.size(); ++t)
        if (s.waves[t] == w) return t;
      throw Error(ErrorKind::config, "unknown wave '" + w + "'");
    };
    if (j.contains("intervention") && !j.at("intervention").is_null()) {
      const auto& iv = j.at("intervention");
      InterventionConfig c;
      c.pre_wave = wave_index(iv.at("pre").get<std::string>());
      c.post_wave = wave_index(iv.at("post").get<std::string>());
      c.retest_sd = iv.value("retest_sd", c.retest_sd);
      c.mean_shift = iv.value("mean_shift", c.mean_shift);
      c.energy_quantile = iv.value("energy_quantile", c.energy_quantile);
      c.step = iv.value("step", c.step);
      c.control_groups = iv.value("control_groups", std::vector<std::string>{});
      s.intervention = c;
    }
    const std::string squash = j.value("squash", std::string("clip"));
    if (squash != "clip" && squash != "none") throw Error(ErrorKind::config, "squash must be 'clip' or 'none'");
    s.squash = squash == "clip" ? Squash::clip : Squash::none;
    const std::string mode = j.value("mode", std::string("gaussian"));
    if (mode != "gaussian" && mode != "chain") throw Error(ErrorKind::config, "mode must be 'gaussian' or 'chain'");
    s.mode = mode == "gaussian" ? GenerationMode::gaussian : GenerationMode::chain;
    s.chain_sweeps = j.value("chain_sweeps", s.chain_sweeps);
    s.proposal_width = j.value("proposal_width", s.proposal_width);
    if (j.contains("dissonance") && !j.at("dissonance").is_null()) {
      const auto& d = j.at("dissonance");
      DissonanceConfig dc;
      dc.waves = d.value("waves", s.waves);
      dc.items = d.value("items", dc.items);
      dc.energy_weight = d.value("energy_weight", dc.energy_weight);
      dc.latent_sd = d.value("latent_sd", dc.latent_sd);
      dc.item_sd = d.value("item_sd", dc.item_sd);
      for (const auto& w : dc.waves) wave_index(w);
      cfg.dissonance = dc;
    }
    if (j.contains("chains")) {
      const auto& c = j.at("chains");
      cfg.chains.count = c.value("count", cfg.chains.count);
      cfg.chains.sweeps = c.value("sweeps", cfg.chains.sweeps);
      cfg.chains.record_every = c.value("record_every", cfg.chains.record_every);
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::config, std::string("invalid simulation config: ") + e.what());
  }
  if (s.delta.size() != s.waves.size()) throw Error(ErrorKind::config, "need one scaling vector per wave");
  return cfg;
}

// ---------------------------------------------------------------------------
// Panels

/// Long-format CSV on the raw survey scales plus the matching schema. Belief
/// values must already lie in [-1, 1].
inline std::pair<std::string, Schema> panel_to_csv(const PanelDataset& data) {
  Schema schema;
  schema.topic = data.topic;
  schema.time_order = data.time_points;
  for (const auto& b : data.beliefs) {
    VariableSpec spec;
    spec.role = b.kind == BeliefKind::moral ? VariableRole::moral
                : b.kind == BeliefKind::social ? VariableRole::social
                                               : VariableRole::safety;
    spec.scale = b.scale;
    schema.variables.emplace_back(b.name, spec);
  }
  std::size_t n_items = 0;
  for (const auto& d : data.dissonance)
    if (d) n_items = static_cast<std::size_t>(d->cols());
  for (std::size_t k = 0; k < n_items; ++k) {
    VariableSpec spec;
    spec.role = VariableRole::dissonance;
    schema.variables.emplace_back("dissonance" + std::to_string(k + 1), spec);
  }
  if (!data.groups.empty()) schema.variables.emplace_back("group", VariableSpec{VariableRole::group, Scale::likert7, false});

  std::ostringstream out;
  csv::Writer w(out);
  w.row("person_id", "time", "variable", "value");
  for (std::size_t i = 0; i < data.n_persons(); ++i) {
    const auto row = static_cast<Eigen::Index>(i);
    for (std::size_t t = 0; t < data.n_times(); ++t) {
      for (std::size_t j = 0; j < data.n_beliefs(); ++j) {
        double v = data.values[t](row, static_cast<Eigen::Index>(j));
        if (data.rescaled) {
          if (!(v >= -1.0 && v <= 1.0))
            throw Error(ErrorKind::config, "belief value outside [-1, 1] for person '" + data.persons[i] +
                                               "'; generate with squash = clip to export raw scales");
          v = unscale_value(v, data.beliefs[j].scale);
        }
        w.row(data.persons[i], data.time_points[t], data.beliefs[j].name, v);
      }
      if (data.dissonance[t])
        for (Eigen::Index k = 0; k < data.dissonance[t]->cols(); ++k)
          w.row(data.persons[i], data.time_points[t], "dissonance" + std::to_string(k + 1), (*data.dissonance[t])(row, k));
      if (!data.groups.empty() && t == 0) w.row(data.persons[i], data.time_points[t], std::string("group"), data.groups[i]);
    }
  }
  return {out.str(), schema};
}

}  // namespace beliefnet
