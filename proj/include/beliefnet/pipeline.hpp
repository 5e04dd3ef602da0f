#pragma once

// End-to-end orchestration behind the command-line tool: fit, simulate,
// analyze and report.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "beliefnet/csv.hpp"
#include "beliefnet/dynamics.hpp"
#include "beliefnet/energy.hpp"
#include "beliefnet/error.hpp"
#include "beliefnet/ggm.hpp"
#include "beliefnet/ggm_search.hpp"
#include "beliefnet/panel.hpp"
#include "beliefnet/parallel.hpp"
#include "beliefnet/serialize.hpp"
#include "beliefnet/stats.hpp"

namespace beliefnet {

enum class EnergyBasis { rescaled, residual };
enum class ValenceWave { first, per_wave };

struct RunConfig {
  std::string input;   // long-format panel CSV
  std::string schema;  // schema JSON
  std::string model;   // empty: <out>/model.json
  std::string topic;   // overrides the schema topic when set
  std::string out = "out";
  std::uint64_t seed = 1;
  TemperatureMode temperature_mode = TemperatureMode::scaling_mean;
  double prune_alpha = 0.01;
  double proposal_width = 0.2;
  std::size_t threads = 1;
  EnergyBasis energy_basis = EnergyBasis::rescaled;
  Standardizer standardizer = Standardizer::change_score;
  std::string pre_wave;   // empty: intervention analyses use "w2a" when present
  std::string post_wave;  // empty: "w2b" when present
  std::string reference_wave;  // empty: first wave
  ValenceWave valence = ValenceWave::first;
  std::vector<std::string> control_groups;
  std::optional<SimulationConfig> simulation;

  std::filesystem::path out_dir() const { return out; }
  std::filesystem::path model_path() const { return model.empty() ? out_dir() / "model.json" : std::filesystem::path(model); }
};

inline ojson run_config_to_json(const RunConfig& c) {
  ojson j;
  j["input"] = c.input;
  j["schema"] = c.schema;
  j["model"] = c.model;
  j["topic"] = c.topic;
  j["out"] = c.out;
  j["seed"] = c.seed;
  j["temperature_mode"] = to_string(c.temperature_mode);
  j["prune_alpha"] = c.prune_alpha;
  j["proposal_width"] = c.proposal_width;
  j["threads"] = c.threads;
  j["energy_basis"] = c.energy_basis == EnergyBasis::rescaled ? "rescaled" : "residual";
  j["standardizer"] = c.standardizer == Standardizer::change_score ? "change-score" : "pre-score";
  j["pre_wave"] = c.pre_wave;
  j["post_wave"] = c.post_wave;
  j["reference_wave"] = c.reference_wave;
  j["valence"] = c.valence == ValenceWave::first ? "first-wave" : "per-wave";
  j["control_groups"] = c.control_groups;
  if (c.simulation) j["simulation"] = simulation_to_json(*c.simulation);
  return j;
}

/// Reads a run configuration. Relative paths are taken relative to
/// `base_dir` (the directory of the config file).
inline RunConfig run_config_from_json(const ojson& j, const std::filesystem::path& base_dir = {}) {
  RunConfig c;
  auto path = [&](const char* key) -> std::string {
    const std::string v = j.value(key, std::string());
    if (v.empty()) return v;
    const std::filesystem::path p(v);
    return p.is_absolute() || base_dir.empty() ? v : (base_dir / p).lexically_normal().string();
  };
  try {
    if (!j.is_object()) throw Error(ErrorKind::config, "config must be a JSON object");
    static const std::vector<std::string> known = {
        "input", "schema", "model", "topic", "out", "seed", "temperature_mode", "prune_alpha", "proposal_width",
        "threads", "energy_basis", "standardizer", "pre_wave", "post_wave", "reference_wave", "valence",
        "control_groups", "simulation"};
    for (const auto& [key, _] : j.items())
      if (std::find(known.begin(), known.end(), key) == known.end())
        throw Error(ErrorKind::config, "unknown config key '" + key + "'");
    c.input = path("input");
    c.schema = path("schema");
    c.model = path("model");
    c.topic = j.value("topic", c.topic);
    if (j.contains("out")) c.out = path("out");
    c.seed = j.value("seed", c.seed);
    c.temperature_mode = parse_temperature_mode(j.value("temperature_mode", std::string(to_string(c.temperature_mode))));
    c.prune_alpha = j.value("prune_alpha", c.prune_alpha);
    c.proposal_width = j.value("proposal_width", c.proposal_width);
    c.threads = j.value("threads", c.threads);
    const std::string basis = j.value("energy_basis", std::string("rescaled"));
    if (basis != "rescaled" && basis != "residual") throw Error(ErrorKind::config, "energy_basis must be 'rescaled' or 'residual'");
    c.energy_basis = basis == "rescaled" ? EnergyBasis::rescaled : EnergyBasis::residual;
    const std::string stdz = j.value("standardizer", std::string("change-score"));
    if (stdz != "change-score" && stdz != "pre-score") throw Error(ErrorKind::config, "standardizer must be 'change-score' or 'pre-score'");
    c.standardizer = stdz == "change-score" ? Standardizer::change_score : Standardizer::pre_score;
    c.pre_wave = j.value("pre_wave", c.pre_wave);
    c.post_wave = j.value("post_wave", c.post_wave);
    c.reference_wave = j.value("reference_wave", c.reference_wave);
    const std::string valence = j.value("valence", std::string("first-wave"));
    if (valence != "first-wave" && valence != "per-wave") throw Error(ErrorKind::config, "valence must be 'first-wave' or 'per-wave'");
    c.valence = valence == "first-wave" ? ValenceWave::first : ValenceWave::per_wave;
    c.control_groups = j.value("control_groups", c.control_groups);
    if (j.contains("simulation") && !j.at("simulation").is_null()) {
      const auto& s = j.at("simulation");
      c.simulation = s.is_string() && s.get<std::string>() == "demo" ? demo_simulation() : simulation_from_json(s);
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::config, std::string("invalid config: ") + e.what());
  }
  if (!(c.prune_alpha > 0.0 && c.prune_alpha < 1.0)) throw Error(ErrorKind::config, "prune_alpha must lie in (0, 1)");
  if (!(c.proposal_width > 0.0 && c.proposal_width <= 2.0)) throw Error(ErrorKind::config, "proposal_width must lie in (0, 2]");
  if (c.threads < 1) c.threads = 1;
  return c;
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
  return run_config_from_json(read_json_file(path), path.parent_path());
}

// ---------------------------------------------------------------------------
// Shared steps

inline SearchOptions search_options(const RunConfig& c) {
  SearchOptions o;
  o.prune_alpha = c.prune_alpha;
  o.threads = std::min(c.threads, threads_from_env(c.threads));
  return o;
}

/// Panel on the belief scale restricted to moral and social beliefs.
inline PanelDataset load_network_panel(const RunConfig& c) {
  if (c.input.empty()) throw Error(ErrorKind::config, "no input panel given (config key 'input')");
  if (c.schema.empty()) throw Error(ErrorKind::config, "no schema given (config key 'schema')");
  Schema schema = load_schema(c.schema);
  if (!c.topic.empty()) schema.topic = c.topic;
  PanelDataset raw = load_panel(std::filesystem::path(c.input), schema);
  return network_beliefs(rescale_beliefs(raw));
}

struct FitResult {
  Selection selection;
  std::size_t persons = 0;
  std::size_t dropped_persons = 0;
};

inline FitResult fit_panel(const PanelDataset& panel, const RunConfig& c) {
  FitResult r;
  r.selection = select_model(residualize(panel), search_options(c));
  r.persons = panel.n_persons();
  r.dropped_persons = panel.dropped_persons;
  return r;
}

inline std::vector<RankingRow> ranking_from_json(const ojson& rows) {
  std::vector<RankingRow> out;
  for (const auto& row : rows) {
    RankingRow r;
    r.spec = parse_spec_key(row.at("key").get<std::string>());
    r.ok = row.value("ok", false);
    if (r.ok) {
      r.df = row.at("df").get<std::size_t>();
      r.k = row.at("k").get<std::size_t>();
      r.log_likelihood = row.at("log_likelihood").get<double>();
      r.bic = row.at("bic").get<double>();
    } else {
      r.error = row.value("error", std::string());
    }
    out.push_back(r);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Analysis

struct AnalysisOptions {
  EnergyBasis energy_basis = EnergyBasis::rescaled;
  Standardizer standardizer = Standardizer::change_score;
  TemperatureMode temperature_mode = TemperatureMode::scaling_mean;
  std::string pre_wave;
  std::string post_wave;
  std::string reference_wave;
  ValenceWave valence = ValenceWave::first;
  std::vector<std::string> control_groups;
};

struct GroupCorrelation {
  std::string group;
  Correlation correlation;
};

struct GroupMeanChange {
  std::string group;
  MeanChange change;
};

struct DissonanceCorrelation {
  std::string time;
  std::string subset;  // all | negative | non-negative
  Correlation correlation;
};

struct AnalysisReport {
  std::string topic;
  std::size_t persons = 0;
  std::vector<TemperatureEstimate> temperatures;
  std::vector<std::pair<std::string, std::optional<double>>> dissonance_alpha;
  std::vector<DissonanceCorrelation> dissonance;
  std::vector<GroupCorrelation> table_s2;
  std::vector<GroupMeanChange> table_s3;
  std::optional<MetaResult> meta_correlation;
  std::optional<MetaResult> meta_mean_change;
  std::optional<DirectionTally> direction;
  std::vector<std::string> warnings;
  Eigen::MatrixXd energies;  // persons x waves
  ojson json;
  std::map<std::string, std::string> plots;  // file name -> CSV content
};

namespace detail {

inline std::string wave_or_default(const PanelDataset& d, const std::string& wanted, const char* fallback) {
  if (!wanted.empty()) {
    d.time_index(wanted);
    return wanted;
  }
  return std::find(d.time_points.begin(), d.time_points.end(), fallback) != d.time_points.end() ? fallback : "";
}

inline ojson correlation_json(const Correlation& c) {
  return {{"r", c.r}, {"t", c.t}, {"df", c.df}, {"p", c.p}, {"n", c.n}};
}

inline ojson meta_json(const MetaResult& m) {
  ojson groups = ojson::array();
  for (std::size_t g = 0; g < m.groups.size(); ++g) groups.push_back({{"group", m.groups[g]}, {"weight", m.weights[g]}});
  return {{"effect", to_string(m.kind)}, {"pooled", m.pooled_effect}, {"pooled_analysis_scale", m.pooled},
          {"se", m.se}, {"tau2", m.tau2}, {"q", m.q}, {"z", m.z}, {"p", m.p},
          {"ci_low", m.ci_low}, {"ci_high", m.ci_high}, {"groups", groups}};
}

inline Eigen::VectorXd gather(const Eigen::VectorXd& v, const std::vector<std::size_t>& idx) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(idx.size()));
  for (std::size_t k = 0; k < idx.size(); ++k) out(static_cast<Eigen::Index>(k)) = v(static_cast<Eigen::Index>(idx[k]));
  return out;
}

}  // namespace detail

/// Runs the analysis layer on a rescaled network panel and a fitted model.
/// Steps whose inputs are missing or degenerate are skipped with a warning.
inline AnalysisReport analyze(const PanelDataset& panel, const FittedModel& model, const AnalysisOptions& options = {},
                              const std::vector<RankingRow>& ranking = {}) {
  std::vector<std::string> names;
  for (const auto& b : panel.beliefs) names.push_back(b.name);
  if (names != model.beliefs)
    throw Error(ErrorKind::dependency, "model beliefs do not match the panel; rerun fit on this panel");

  AnalysisReport rep;
  rep.topic = panel.topic;
  rep.persons = panel.n_persons();
  const std::size_t T = panel.n_times();

  std::vector<Eigen::MatrixXd> omega_by_time;
  for (const auto& t : panel.time_points) {
    const auto it = std::find(model.time_points.begin(), model.time_points.end(), t);
    if (it == model.time_points.end()) throw Error(ErrorKind::dependency, "model has no network for time point '" + t + "'");
    omega_by_time.push_back(model.omega[static_cast<std::size_t>(it - model.time_points.begin())]);
  }
  const PanelDataset basis = options.energy_basis == EnergyBasis::rescaled ? panel : as_panel(residualize(panel));
  rep.energies = energy_matrix(basis, omega_by_time);
  rep.temperatures = temperature_of(model, options.temperature_mode);

  auto warn = [&](const std::string& w) { rep.warnings.push_back(w); };

  // Felt dissonance against energy, split by valence.
  bool any_dissonance = false;
  for (std::size_t t = 0; t < T; ++t) {
    if (!panel.dissonance[t]) continue;
    any_dissonance = true;
    const auto index = dissonance_index(*panel.dissonance[t]);
    rep.dissonance_alpha.emplace_back(panel.time_points[t], index.alpha);
    const Eigen::VectorXd H = rep.energies.col(static_cast<Eigen::Index>(t));
    const auto split = split_by_valence(panel, options.valence == ValenceWave::first ? 0 : t);
    std::vector<std::size_t> all(panel.n_persons());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    for (const auto& [label, idx] : {std::pair<std::string, const std::vector<std::size_t>*>{"all", &all},
                                     {"negative", &split.negative},
                                     {"non-negative", &split.non_negative}}) {
      try {
        rep.dissonance.push_back({panel.time_points[t], label, pearson(detail::gather(H, *idx), detail::gather(index.score, *idx))});
      } catch (const Error& e) {
        warn("dissonance correlation at " + panel.time_points[t] + " (" + label + ") skipped: " + e.what());
      }
    }
  }
  if (!any_dissonance) warn("no dissonance items in the panel; dissonance analyses skipped");

  // Intervention: pre-energy vs |belief change| and pre/post energies.
  const std::string pre = detail::wave_or_default(panel, options.pre_wave, "w2a");
  const std::string post = detail::wave_or_default(panel, options.post_wave, "w2b");
  std::vector<std::string> group_labels;
  std::vector<std::vector<std::size_t>> members;
  std::ostringstream change_csv, prepost_csv;
  csv::Writer change_w(change_csv), prepost_w(prepost_csv);
  change_w.row("person_id", "group", "energy_pre", "change", "abs_change");
  prepost_w.row("group", "phase", "mean_energy", "se", "n");
  if (pre.empty() || post.empty() || pre == post) {
    warn("no distinct pre/post waves; intervention analyses skipped");
  } else {
    const std::size_t tp = panel.time_index(pre), tq = panel.time_index(post);
    for (std::size_t i = 0; i < panel.n_persons(); ++i) {
      const std::string g = panel.groups.empty() ? std::string("all") : panel.groups[i];
      if (std::find(options.control_groups.begin(), options.control_groups.end(), g) != options.control_groups.end()) continue;
      auto it = std::find(group_labels.begin(), group_labels.end(), g);
      if (it == group_labels.end()) {
        group_labels.push_back(g);
        members.emplace_back();
        it = group_labels.end() - 1;
      }
      members[static_cast<std::size_t>(it - group_labels.begin())].push_back(i);
    }
    const Eigen::VectorXd Hpre = rep.energies.col(static_cast<Eigen::Index>(tp));
    const Eigen::VectorXd Hpost = rep.energies.col(static_cast<Eigen::Index>(tq));
    std::vector<double> signed_all;
    std::vector<EffectEstimate> r_effects, d_effects;
    for (std::size_t g = 0; g < group_labels.size(); ++g) {
      const auto& idx = members[g];
      Eigen::VectorXd abs_change(static_cast<Eigen::Index>(idx.size()));
      for (std::size_t k = 0; k < idx.size(); ++k) {
        const auto c = absolute_belief_change(panel, idx[k], tp, tq);
        abs_change(static_cast<Eigen::Index>(k)) = c.absolute_change;
        signed_all.push_back(c.signed_change);
        change_w.row(panel.persons[idx[k]], group_labels[g], Hpre(static_cast<Eigen::Index>(idx[k])), c.signed_change,
                     c.absolute_change);
      }
      const Eigen::VectorXd hp = detail::gather(Hpre, idx), hq = detail::gather(Hpost, idx);
      try {
        const auto r = pearson(hp, abs_change);
        rep.table_s2.push_back({group_labels[g], r});
        r_effects.push_back({EffectKind::correlation, r.r, 0.0, r.n, group_labels[g]});
      } catch (const Error& e) {
        warn("energy/change correlation for group '" + group_labels[g] + "' skipped: " + e.what());
      }
      try {
        const auto m = standardized_mean_change(hp, hq, options.standardizer);
        rep.table_s3.push_back({group_labels[g], m});
        d_effects.push_back({EffectKind::mean_change, m.d, m.se, m.n, group_labels[g]});
      } catch (const Error& e) {
        warn("pre/post energy change for group '" + group_labels[g] + "' skipped: " + e.what());
      }
      const double n = static_cast<double>(idx.size());
      for (const auto& [phase, v] : {std::pair<const char*, const Eigen::VectorXd*>{"pre", &hp}, {"post", &hq}}) {
        const double mean = v->mean();
        const double sd = n > 1 ? std::sqrt((v->array() - mean).square().sum() / (n - 1.0)) : 0.0;
        prepost_w.row(group_labels[g], std::string(phase), mean, sd / std::sqrt(n), idx.size());
      }
    }
    rep.direction = direction_tally(signed_all);
    auto pool = [&](const std::vector<EffectEstimate>& effects, std::optional<MetaResult>& slot, const char* what) {
      if (effects.size() < 2) {
        warn(std::string("meta-analysis of ") + what + " skipped: fewer than 2 intervention groups");
        return;
      }
      try {
        slot = meta_random_effects(effects);
      } catch (const Error& e) {
        warn(std::string("meta-analysis of ") + what + " skipped: " + e.what());
      }
    };
    pool(r_effects, rep.meta_correlation, "correlations");
    pool(d_effects, rep.meta_mean_change, "mean changes");
  }

  // JSON report.
  ojson& j = rep.json;
  j["topic"] = rep.topic;
  j["persons"] = rep.persons;
  j["dropped_persons"] = panel.dropped_persons;
  j["energy_basis"] = options.energy_basis == EnergyBasis::rescaled ? "rescaled" : "residual";
  j["model"] = {{"spec", model.spec.key()}, {"name", model.spec.name()}, {"log_likelihood", model.log_likelihood},
                {"k", model.k}, {"n", model.n}, {"bic", model.bic}, {"df", model.constrained_df()}};
  j["table_s1"] = ranking_to_json(ranking);
  ojson temps = ojson::array();
  for (const auto& t : rep.temperatures) temps.push_back({{"time", t.time}, {"temperature", t.temperature}, {"beta", t.beta}});
  j["temperature"] = temps;
  ojson alpha = ojson::array();
  for (const auto& [t, a] : rep.dissonance_alpha) alpha.push_back({{"time", t}, {"alpha", a ? ojson(*a) : ojson(nullptr)}});
  ojson diss = ojson::array();
  for (const auto& d : rep.dissonance) {
    ojson row = {{"time", d.time}, {"subset", d.subset}};
    row.update(detail::correlation_json(d.correlation));
    diss.push_back(row);
  }
  j["dissonance"] = {{"alpha", alpha}, {"correlations", diss}};
  ojson s2 = ojson::array();
  for (const auto& row : rep.table_s2) {
    ojson r = {{"group", row.group}, {"effect", row.correlation.r}, {"t", row.correlation.t},
               {"df", row.correlation.df}, {"p", row.correlation.p}, {"n", row.correlation.n}};
    s2.push_back(r);
  }
  j["table_s2"] = s2;
  ojson s3 = ojson::array();
  for (const auto& row : rep.table_s3) {
    const auto& m = row.change;
    s3.push_back({{"group", row.group}, {"effect", m.mean_difference}, {"t", m.t}, {"df", m.df}, {"p", m.p},
                  {"d", m.d}, {"se", m.se}, {"n", m.n}});
  }
  j["table_s3"] = s3;
  ojson meta = ojson::array();
  auto meta_row = [&](const std::optional<MetaResult>& m, const char* table) {
    if (m) {
      ojson row = {{"table", table}};
      row.update(detail::meta_json(*m));
      meta.push_back(row);
    } else {
      meta.push_back({{"table", table}, {"skipped", true},
                      {"warning", group_labels.size() < 2 ? "fewer than 2 intervention groups" : "pooling failed"}});
    }
  };
  if (!pre.empty() && !post.empty() && pre != post) {
    meta_row(rep.meta_correlation, "table_s2");
    meta_row(rep.meta_mean_change, "table_s3");
  }
  j["meta"] = meta;
  if (rep.direction)
    j["direction"] = {{"positive", rep.direction->positive}, {"negative", rep.direction->negative},
                      {"unchanged", rep.direction->unchanged}, {"share_positive", rep.direction->share_positive()},
                      {"share_negative", rep.direction->share_negative()}};

  // Diagnostics.
  ojson diag;
  const auto strength = strength_centrality(model.omega.at(0));
  ojson cent = ojson::array();
  for (std::size_t i = 0; i < names.size(); ++i) cent.push_back({{"belief", names[i]}, {"strength", strength(static_cast<Eigen::Index>(i))}});
  diag["strength_centrality"] = cent;
  try {
    const auto ml = multilevel_vs_pooled(panel);
    ojson m = {{"mean_abs_pooled", ml.mean_abs_pooled}, {"mean_abs_within", ml.mean_abs_within}};
    m["agreement"] = ml.agreement ? detail::correlation_json(*ml.agreement) : ojson(nullptr);
    diag["multilevel_vs_pooled"] = m;
  } catch (const Error& e) {
    warn(std::string("multilevel comparison skipped: ") + e.what());
  }
  try {
    const auto nd = normality_diagnostic(residualize(panel));
    diag["normality"] = {{"degenerate", nd.degenerate}, {"skewness", nd.skewness},
                         {"excess_kurtosis", nd.excess_kurtosis}, {"qq_max_deviation", nd.qq_max_deviation}};
  } catch (const Error& e) {
    warn(std::string("normality diagnostic skipped: ") + e.what());
  }
  try {
    const std::size_t ref = options.reference_wave.empty() ? 0 : panel.time_index(options.reference_wave);
    const auto vd = variance_decomposition(panel, ref);
    ojson rows = ojson::array();
    for (std::size_t i = 0; i < names.size(); ++i)
      rows.push_back({{"belief", names[i]}, {"within_person", vd.within_person(static_cast<Eigen::Index>(i))},
                      {"between_person", vd.between_person(static_cast<Eigen::Index>(i))}});
    diag["variance_decomposition"] = {{"beliefs", rows},
                                      {"correlation", vd.correlation ? detail::correlation_json(*vd.correlation) : ojson(nullptr)}};
  } catch (const Error& e) {
    warn(std::string("variance decomposition skipped: ") + e.what());
  }
  j["diagnostics"] = diag;
  j["warnings"] = rep.warnings;

  // Plot data.
  {
    std::ostringstream s;
    csv::Writer w(s);
    w.row("time", "temperature", "beta");
    for (const auto& t : rep.temperatures) w.row(t.time, t.temperature, t.beta);
    rep.plots["fig3_temperature.csv"] = s.str();
  }
  if (std::any_of(panel.dissonance.begin(), panel.dissonance.end(), [](const auto& d) { return d.has_value(); })) {
    std::ostringstream s;
    csv::Writer w(s);
    w.row("person_id", "time", "energy", "dissonance", "valence");
    for (std::size_t t = 0; t < T; ++t) {
      if (!panel.dissonance[t]) continue;
      const Eigen::VectorXd score = panel.dissonance[t]->rowwise().mean();
      const auto split = split_by_valence(panel, options.valence == ValenceWave::first ? 0 : t);
      std::vector<bool> negative(panel.n_persons(), false);
      for (auto i : split.negative) negative[i] = true;
      for (std::size_t i = 0; i < panel.n_persons(); ++i)
        w.row(panel.persons[i], panel.time_points[t], rep.energies(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(t)),
              score(static_cast<Eigen::Index>(i)), std::string(negative[i] ? "negative" : "non-negative"));
    }
    rep.plots["fig4_energy_dissonance.csv"] = s.str();
  }
  rep.plots["fig5_energy_change.csv"] = change_csv.str();
  rep.plots["fig5_prepost.csv"] = prepost_csv.str();
  {
    std::ostringstream s;
    csv::Writer w(s);
    std::vector<std::string> header = {"person_id", "time", "H"};
    for (const auto& n : names) header.push_back("H_" + n);
    w.row(header);
    Eigen::MatrixXd off_cache;
    for (std::size_t i = 0; i < basis.n_persons(); ++i)
      for (std::size_t t = 0; t < T; ++t) {
        const Eigen::VectorXd hi = belief_energies(basis.belief_vector(i, t), omega_by_time[t]);
        std::vector<std::string> row = {basis.persons[i], basis.time_points[t], csv::number(hi.sum())};
        for (Eigen::Index k = 0; k < hi.size(); ++k) row.push_back(csv::number(hi(k)));
        w.row(row);
      }
    rep.plots["energies.csv"] = s.str();
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Simulation

/// Adds synthetic felt-dissonance items that rise with network energy.
inline void add_dissonance(SyntheticStudy& study, const DissonanceConfig& cfg, std::uint64_t seed) {
  auto& d = study.panel;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const auto n = static_cast<Eigen::Index>(d.n_persons());
  for (const auto& wave : cfg.waves) {
    const std::size_t t = d.time_index(wave);
    Eigen::MatrixXd items(n, static_cast<Eigen::Index>(cfg.items));
    for (Eigen::Index i = 0; i < n; ++i) {
      const double latent = 4.0 + cfg.energy_weight * network_energy(d.belief_vector(static_cast<std::size_t>(i), t), study.truth.omega) +
                            cfg.latent_sd * normal(rng);
      for (Eigen::Index k = 0; k < items.cols(); ++k) items(i, k) = std::clamp(latent + cfg.item_sd * normal(rng), 1.0, 7.0);
    }
    d.dissonance[t] = items;
  }
}

struct SimulationOutput {
  SyntheticStudy study;
  std::vector<std::vector<TrajectoryPoint>> trajectories;
};

inline SimulationOutput simulate(const SimulationConfig& cfg, std::uint64_t seed, double proposal_width, std::size_t threads) {
  SimulationOutput out;
  StudyConfig study_cfg = cfg.study;
  study_cfg.proposal_width = proposal_width;
  out.study = generate_panel(study_cfg, derive_seed(seed, 0));
  if (cfg.dissonance) add_dissonance(out.study, *cfg.dissonance, derive_seed(seed, 1));
  const std::size_t p = study_cfg.beliefs.size();
  const double beta = 1.0 / study_cfg.delta.at(0).mean();
  std::vector<Eigen::VectorXd> starts;
  for (std::size_t c = 0; c < cfg.chains.count; ++c) starts.push_back(initial_state(p, beta, derive_seed(derive_seed(seed, 2), c)).beliefs);
  out.trajectories = run_chains(study_cfg.omega, beta, starts, cfg.chains.sweeps, cfg.chains.record_every,
                                derive_seed(seed, 3), proposal_width, threads);
  return out;
}

inline std::string trajectories_csv(const std::vector<std::vector<TrajectoryPoint>>& chains,
                                    const std::vector<BeliefInfo>& beliefs) {
  std::ostringstream s;
  csv::Writer w(s);
  std::vector<std::string> header = {"chain_id", "sweep", "H"};
  for (const auto& b : beliefs) header.push_back(b.name);
  w.row(header);
  for (const auto& chain : chains)
    for (const auto& pt : chain) {
      std::vector<std::string> row = {std::to_string(pt.chain), std::to_string(pt.sweep), csv::number(pt.H)};
      for (Eigen::Index k = 0; k < pt.beliefs.size(); ++k) row.push_back(csv::number(pt.beliefs(k)));
      w.row(row);
    }
  return s.str();
}

// ---------------------------------------------------------------------------
// Subcommands. Each computes everything first and writes afterwards, so a
// failure leaves no partial outputs.

inline std::vector<std::filesystem::path> write_outputs(const std::filesystem::path& dir,
                                                        const std::vector<std::pair<std::string, std::string>>& files) {
  std::vector<std::filesystem::path> written;
  for (const auto& [name, content] : files) {
    write_atomic(dir / name, content);
    written.push_back(dir / name);
  }
  return written;
}

inline std::vector<std::filesystem::path> cmd_fit(const RunConfig& c) {
  const PanelDataset panel = load_network_panel(c);
  const FitResult fit = fit_panel(panel, c);
  const FittedModel& best = fit.selection.best;
  ojson model = model_to_json(best, c.temperature_mode);
  model["topic"] = panel.topic;
  model["persons"] = fit.persons;
  model["dropped_persons"] = fit.dropped_persons;
  model["ranking"] = ranking_to_json(fit.selection.ranking);
  model["warnings"] = fit.selection.warnings;
  std::vector<std::pair<std::string, std::string>> files = {
      {"model.json", dump(model)},
      {"edges.csv", edges_csv(best, 0)},
      {"temperature.csv", temperature_csv(best, c.temperature_mode)},
      {"ranking.csv", ranking_csv(fit.selection.ranking)}};
  if (!best.spec.equal_network)
    for (std::size_t t = 0; t < best.n_times(); ++t) files.emplace_back("edges_" + best.time_points[t] + ".csv", edges_csv(best, t));
  auto written = write_outputs(c.out_dir(), files);
  if (!c.model.empty() && std::filesystem::path(c.model) != c.out_dir() / "model.json") {
    write_atomic(c.model, files[0].second);
    written.push_back(c.model);
  }
  return written;
}

inline std::vector<std::filesystem::path> cmd_simulate(const RunConfig& c) {
  const SimulationConfig cfg = c.simulation ? *c.simulation : demo_simulation();
  const auto sim = simulate(cfg, c.seed, c.proposal_width, std::min(c.threads, threads_from_env(c.threads)));
  const auto [panel_csv, schema] = panel_to_csv(sim.study.panel);
  ojson truth = simulation_to_json(cfg);
  truth["seed"] = c.seed;
  std::size_t displaced = 0;
  for (bool b : sim.study.displaced) displaced += b ? 1 : 0;
  truth["displaced_persons"] = displaced;
  return write_outputs(c.out_dir(), {{"panel.csv", panel_csv},
                                     {"schema.json", dump(schema_to_json(schema))},
                                     {"truth.json", dump(truth)},
                                     {"trajectories.csv", trajectories_csv(sim.trajectories, cfg.study.beliefs)}});
}

inline AnalysisOptions analysis_options(const RunConfig& c) {
  AnalysisOptions o;
  o.energy_basis = c.energy_basis;
  o.standardizer = c.standardizer;
  o.temperature_mode = c.temperature_mode;
  o.pre_wave = c.pre_wave;
  o.post_wave = c.post_wave;
  o.reference_wave = c.reference_wave;
  o.valence = c.valence;
  o.control_groups = c.control_groups;
  if (o.control_groups.empty() && c.simulation && c.simulation->study.intervention)
    o.control_groups = c.simulation->study.intervention->control_groups;
  return o;
}

inline std::vector<std::filesystem::path> cmd_analyze(const RunConfig& c) {
  const auto model_path = c.model_path();
  if (!std::filesystem::exists(model_path))
    throw Error(ErrorKind::dependency, "no fitted model at " + model_path.string() + "; run 'beliefnet fit' first");
  const ojson model_json = read_json_file(model_path);
  const FittedModel model = model_from_json(model_json);
  const std::vector<RankingRow> ranking = model_json.contains("ranking") ? ranking_from_json(model_json.at("ranking")) : std::vector<RankingRow>{};
  const PanelDataset panel = load_network_panel(c);
  AnalysisReport rep = analyze(panel, model, analysis_options(c), ranking);
  std::vector<std::pair<std::string, std::string>> files = {{"report.json", dump(rep.json)}};
  for (const auto& [name, content] : rep.plots) files.emplace_back(name, content);
  return write_outputs(c.out_dir(), files);
}

/// simulate (when the config has no input panel) + fit + analyze.
inline std::vector<std::filesystem::path> cmd_report(RunConfig c) {
  std::vector<std::filesystem::path> written;
  if (c.input.empty()) {
    written = cmd_simulate(c);
    c.input = (c.out_dir() / "panel.csv").string();
    c.schema = (c.out_dir() / "schema.json").string();
  }
  for (const auto& p : cmd_fit(c)) written.push_back(p);
  for (const auto& p : cmd_analyze(c)) written.push_back(p);
  written.push_back(c.out_dir() / "config.json");
  write_atomic(c.out_dir() / "config.json", dump(run_config_to_json(c)));
  return written;
}

}  // namespace beliefnet
