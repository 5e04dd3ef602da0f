#pragma once

// Longitudinal belief panels: ingestion, rescaling to the [-1, 1] belief
// domain, two-way fixed-effects residualization and the felt-dissonance index.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "beliefnet/csv.hpp"
#include "beliefnet/error.hpp"

namespace beliefnet {

enum class BeliefKind { moral, social, safety };
enum class Scale { likert7, percent };

inline const char* to_string(BeliefKind kind) {
  switch (kind) {
    case BeliefKind::moral: return "moral";
    case BeliefKind::social: return "social";
    case BeliefKind::safety: return "safety";
  }
  return "?";
}

inline const char* to_string(Scale scale) {
  return scale == Scale::likert7 ? "likert7" : "percent";
}

struct BeliefInfo {
  std::string name;
  BeliefKind kind = BeliefKind::moral;
  Scale scale = Scale::likert7;
};

/// Balanced persons x time points x beliefs grid.
///
/// `values[t]` is a persons x beliefs matrix for time point `t`. Raw values
/// live on the survey scales until `rescale_beliefs` maps them to [-1, 1].
/// `dissonance[t]` holds the recoded dissonance items (persons x items) for
/// waves where they were asked.
struct PanelDataset {
  std::vector<std::string> persons;
  std::vector<std::string> time_points;
  std::vector<BeliefInfo> beliefs;
  std::vector<Eigen::MatrixXd> values;
  std::vector<std::optional<Eigen::MatrixXd>> dissonance;
  std::vector<std::string> groups;  // one label per person, empty when absent
  std::string topic;
  bool rescaled = false;
  std::size_t dropped_persons = 0;

  std::size_t n_persons() const { return persons.size(); }
  std::size_t n_times() const { return time_points.size(); }
  std::size_t n_beliefs() const { return beliefs.size(); }

  std::size_t time_index(const std::string& label) const {
    auto it = std::find(time_points.begin(), time_points.end(), label);
    if (it == time_points.end()) throw Error(ErrorKind::lookup, "unknown time point '" + label + "'");
    return static_cast<std::size_t>(it - time_points.begin());
  }

  std::size_t belief_index(const std::string& name) const {
    for (std::size_t j = 0; j < beliefs.size(); ++j)
      if (beliefs[j].name == name) return j;
    throw Error(ErrorKind::lookup, "unknown belief '" + name + "'");
  }

  std::size_t person_index(const std::string& id) const {
    auto it = std::find(persons.begin(), persons.end(), id);
    if (it == persons.end()) throw Error(ErrorKind::lookup, "unknown person '" + id + "'");
    return static_cast<std::size_t>(it - persons.begin());
  }

  std::vector<std::size_t> beliefs_of_kind(BeliefKind kind) const {
    std::vector<std::size_t> idx;
    for (std::size_t j = 0; j < beliefs.size(); ++j)
      if (beliefs[j].kind == kind) idx.push_back(j);
    return idx;
  }

  /// One person's belief vector at time `t`.
  Eigen::VectorXd belief_vector(std::size_t person, std::size_t t) const {
    return values[t].row(static_cast<Eigen::Index>(person)).transpose();
  }
};

/// Keeps only the listed beliefs (in the given order).
inline PanelDataset select_beliefs(const PanelDataset& data, const std::vector<std::size_t>& keep) {
  PanelDataset out = data;
  out.beliefs.clear();
  for (auto j : keep) out.beliefs.push_back(data.beliefs.at(j));
  for (std::size_t t = 0; t < data.n_times(); ++t) {
    Eigen::MatrixXd m(static_cast<Eigen::Index>(data.n_persons()), static_cast<Eigen::Index>(keep.size()));
    for (std::size_t c = 0; c < keep.size(); ++c)
      m.col(static_cast<Eigen::Index>(c)) = data.values[t].col(static_cast<Eigen::Index>(keep[c]));
    out.values[t] = std::move(m);
  }
  return out;
}

/// Moral and social beliefs only; the network proper.
inline PanelDataset network_beliefs(const PanelDataset& data) {
  std::vector<std::size_t> keep;
  for (std::size_t j = 0; j < data.n_beliefs(); ++j)
    if (data.beliefs[j].kind != BeliefKind::safety) keep.push_back(j);
  return select_beliefs(data, keep);
}

/// Keeps the listed persons (in the given order).
inline PanelDataset select_persons(const PanelDataset& data, const std::vector<std::size_t>& keep) {
  PanelDataset out = data;
  out.persons.clear();
  out.groups.clear();
  for (auto i : keep) {
    out.persons.push_back(data.persons.at(i));
    if (!data.groups.empty()) out.groups.push_back(data.groups[i]);
  }
  auto pick = [&](const Eigen::MatrixXd& m) {
    Eigen::MatrixXd r(static_cast<Eigen::Index>(keep.size()), m.cols());
    for (std::size_t k = 0; k < keep.size(); ++k) r.row(static_cast<Eigen::Index>(k)) = m.row(static_cast<Eigen::Index>(keep[k]));
    return r;
  };
  for (std::size_t t = 0; t < data.n_times(); ++t) {
    out.values[t] = pick(data.values[t]);
    if (data.dissonance[t]) out.dissonance[t] = pick(*data.dissonance[t]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Schema

enum class VariableRole { moral, social, dissonance, safety, group };

struct VariableSpec {
  VariableRole role = VariableRole::moral;
  Scale scale = Scale::likert7;
  bool reversed = false;  // dissonance items: recode 8 - x on ingestion
};

struct ColumnNames {
  std::string person = "person_id";
  std::string time = "time";
  std::string variable = "variable";
  std::string value = "value";
};

/// Variable roles in declaration order.
struct Schema {
  std::vector<std::pair<std::string, VariableSpec>> variables;
  std::vector<std::string> time_order;  // empty: order of first appearance
  std::string topic;
  ColumnNames columns;

  const VariableSpec* find(const std::string& name) const {
    for (const auto& [n, spec] : variables)
      if (n == name) return &spec;
    return nullptr;
  }
};

inline VariableRole parse_role(const std::string& s) {
  if (s == "moral") return VariableRole::moral;
  if (s == "social") return VariableRole::social;
  if (s == "dissonance") return VariableRole::dissonance;
  if (s == "safety") return VariableRole::safety;
  if (s == "group") return VariableRole::group;
  throw Error(ErrorKind::config, "unknown variable role '" + s + "'");
}

inline const char* to_string(VariableRole role) {
  switch (role) {
    case VariableRole::moral: return "moral";
    case VariableRole::social: return "social";
    case VariableRole::dissonance: return "dissonance";
    case VariableRole::safety: return "safety";
    case VariableRole::group: return "group";
  }
  return "?";
}

inline Scale parse_scale(const std::string& s) {
  if (s == "likert7") return Scale::likert7;
  if (s == "percent") return Scale::percent;
  throw Error(ErrorKind::config, "unknown scale '" + s + "'");
}

inline Schema schema_from_json(const nlohmann::ordered_json& j) {
  Schema schema;
  try {
    if (j.contains("topic")) schema.topic = j.at("topic").get<std::string>();
    if (j.contains("time_order")) schema.time_order = j.at("time_order").get<std::vector<std::string>>();
    if (j.contains("columns")) {
      const auto& c = j.at("columns");
      schema.columns.person = c.value("person", schema.columns.person);
      schema.columns.time = c.value("time", schema.columns.time);
      schema.columns.variable = c.value("variable", schema.columns.variable);
      schema.columns.value = c.value("value", schema.columns.value);
    }
    for (const auto& [name, v] : j.at("variables").items()) {
      VariableSpec spec;
      spec.role = parse_role(v.at("role").get<std::string>());
      // social items default to percent, everything else to the 7-point scale
      const std::string default_scale = spec.role == VariableRole::social ? "percent" : "likert7";
      spec.scale = parse_scale(v.value("scale", default_scale));
      spec.reversed = v.value("reversed", false);
      schema.variables.emplace_back(name, spec);
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::config, std::string("invalid schema: ") + e.what());
  }
  return schema;
}

inline nlohmann::ordered_json schema_to_json(const Schema& schema) {
  nlohmann::ordered_json j;
  j["topic"] = schema.topic;
  j["time_order"] = schema.time_order;
  j["columns"] = {{"person", schema.columns.person},
                  {"time", schema.columns.time},
                  {"variable", schema.columns.variable},
                  {"value", schema.columns.value}};
  nlohmann::ordered_json vars = nlohmann::ordered_json::object();
  for (const auto& [name, spec] : schema.variables) {
    nlohmann::ordered_json v;
    v["role"] = to_string(spec.role);
    if (spec.role != VariableRole::group) v["scale"] = to_string(spec.scale);
    if (spec.reversed) v["reversed"] = true;
    vars[name] = v;
  }
  j["variables"] = vars;
  return j;
}

inline Schema load_schema(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::io, "cannot open schema " + path.string());
  try {
    return schema_from_json(nlohmann::ordered_json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorKind::config, "schema " + path.string() + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Ingestion

/// Builds a listwise-complete panel from long-format rows
/// (person, time, variable, value). Persons missing any relevant cell are
/// dropped and counted in `dropped_persons`.
inline PanelDataset load_panel(const csv::Table& table, const Schema& schema) {
  auto column = [&](const std::string& name) {
    auto it = std::find(table.header.begin(), table.header.end(), name);
    if (it == table.header.end()) throw Error(ErrorKind::parse, "missing column '" + name + "' in header");
    return static_cast<std::size_t>(it - table.header.begin());
  };
  const std::size_t c_person = column(schema.columns.person);
  const std::size_t c_time = column(schema.columns.time);
  const std::size_t c_var = column(schema.columns.variable);
  const std::size_t c_value = column(schema.columns.value);
  const std::size_t width = table.header.size();

  PanelDataset data;
  data.topic = schema.topic;

  std::vector<std::string> dissonance_vars;
  std::string group_var;
  for (const auto& [name, spec] : schema.variables) {
    switch (spec.role) {
      case VariableRole::moral: data.beliefs.push_back({name, BeliefKind::moral, spec.scale}); break;
      case VariableRole::social: data.beliefs.push_back({name, BeliefKind::social, spec.scale}); break;
      case VariableRole::safety: data.beliefs.push_back({name, BeliefKind::safety, spec.scale}); break;
      case VariableRole::dissonance: dissonance_vars.push_back(name); break;
      case VariableRole::group:
        if (!group_var.empty()) throw Error(ErrorKind::config, "schema declares more than one group variable");
        group_var = name;
        break;
    }
  }
  if (data.beliefs.empty()) throw Error(ErrorKind::config, "schema declares no belief variables");

  std::vector<std::string> persons;
  std::unordered_map<std::string, std::size_t> person_pos;
  std::vector<std::string> times = schema.time_order;
  std::unordered_map<std::string, std::size_t> time_pos;
  for (std::size_t t = 0; t < times.size(); ++t) time_pos[times[t]] = t;
  const bool fixed_times = !times.empty();

  // (person, time, variable) -> value
  std::map<std::tuple<std::size_t, std::size_t, std::string>, double> cells;
  std::unordered_map<std::size_t, std::string> group_of;

  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    const std::size_t line = table.line_numbers[r];
    if (row.size() != width)
      throw Error(ErrorKind::parse, "row " + std::to_string(line) + ": expected " + std::to_string(width) +
                                        " fields, got " + std::to_string(row.size()));
    const std::string& var = row[c_var];
    const VariableSpec* spec = schema.find(var);
    if (spec == nullptr) continue;
    const std::string& pid = row[c_person];
    const std::string& tlabel = row[c_time];
    if (pid.empty() || tlabel.empty())
      throw Error(ErrorKind::parse, "row " + std::to_string(line) + ": empty person or time");

    auto [pit, inserted] = person_pos.try_emplace(pid, persons.size());
    if (inserted) persons.push_back(pid);
    const std::size_t p = pit->second;

    auto tit = time_pos.find(tlabel);
    if (tit == time_pos.end()) {
      if (fixed_times)
        throw Error(ErrorKind::parse, "row " + std::to_string(line) + ": time '" + tlabel + "' not in time_order");
      tit = time_pos.emplace(tlabel, times.size()).first;
      times.push_back(tlabel);
    }
    const std::size_t t = tit->second;
    const std::string& raw = row[c_value];

    if (spec->role == VariableRole::group) {
      if (raw.empty()) continue;
      auto [git, fresh] = group_of.try_emplace(p, raw);
      if (!fresh && git->second != raw)
        throw Error(ErrorKind::conflict, "row " + std::to_string(line) + ": person '" + pid +
                                             "' has conflicting group labels");
      continue;
    }
    if (raw.empty() || raw == "NA" || raw == "NaN") continue;  // missing cell
    double value = 0.0;
    try {
      std::size_t used = 0;
      value = std::stod(raw, &used);
      if (used != raw.size()) throw std::invalid_argument(raw);
    } catch (const std::exception&) {
      throw Error(ErrorKind::parse, "row " + std::to_string(line) + ": non-numeric value '" + raw + "'");
    }
    if (!std::isfinite(value))
      throw Error(ErrorKind::parse, "row " + std::to_string(line) + ": non-finite value");
    auto [cit, fresh] = cells.try_emplace({p, t, var}, value);
    if (!fresh)
      throw Error(ErrorKind::conflict, "row " + std::to_string(line) + ": duplicate entry for person '" + pid +
                                           "', time '" + tlabel + "', variable '" + var + "'");
  }

  // Dissonance waves are those where any person answered a dissonance item.
  std::vector<bool> has_dissonance(times.size(), false);
  for (const auto& [key, v] : cells) {
    const auto* spec = schema.find(std::get<2>(key));
    if (spec->role == VariableRole::dissonance) has_dissonance[std::get<1>(key)] = true;
  }

  auto lookup = [&](std::size_t p, std::size_t t, const std::string& var) -> std::optional<double> {
    auto it = cells.find({p, t, var});
    if (it == cells.end()) return std::nullopt;
    return it->second;
  };

  std::vector<std::size_t> complete;
  for (std::size_t p = 0; p < persons.size(); ++p) {
    bool ok = group_var.empty() || group_of.count(p) > 0;
    for (std::size_t t = 0; ok && t < times.size(); ++t) {
      for (const auto& b : data.beliefs)
        if (!lookup(p, t, b.name)) { ok = false; break; }
      if (ok && has_dissonance[t])
        for (const auto& d : dissonance_vars)
          if (!lookup(p, t, d)) { ok = false; break; }
    }
    if (ok) complete.push_back(p);
  }

  data.time_points = times;
  data.dropped_persons = persons.size() - complete.size();
  const auto n = static_cast<Eigen::Index>(complete.size());
  data.values.assign(times.size(), Eigen::MatrixXd(n, static_cast<Eigen::Index>(data.beliefs.size())));
  data.dissonance.assign(times.size(), std::nullopt);
  for (std::size_t t = 0; t < times.size(); ++t) {
    if (has_dissonance[t] && !dissonance_vars.empty())
      data.dissonance[t] = Eigen::MatrixXd(n, static_cast<Eigen::Index>(dissonance_vars.size()));
  }
  for (std::size_t k = 0; k < complete.size(); ++k) {
    const std::size_t p = complete[k];
    const auto row = static_cast<Eigen::Index>(k);
    data.persons.push_back(persons[p]);
    if (!group_var.empty()) data.groups.push_back(group_of.at(p));
    for (std::size_t t = 0; t < times.size(); ++t) {
      for (std::size_t j = 0; j < data.beliefs.size(); ++j)
        data.values[t](row, static_cast<Eigen::Index>(j)) = *lookup(p, t, data.beliefs[j].name);
      if (data.dissonance[t]) {
        for (std::size_t d = 0; d < dissonance_vars.size(); ++d) {
          double v = *lookup(p, t, dissonance_vars[d]);
          const auto* spec = schema.find(dissonance_vars[d]);
          if (spec->reversed) v = (spec->scale == Scale::likert7 ? 8.0 : 100.0) - v;
          (*data.dissonance[t])(row, static_cast<Eigen::Index>(d)) = v;
        }
      }
    }
  }
  return data;
}

inline PanelDataset load_panel(const std::filesystem::path& path, const Schema& schema) {
  return load_panel(csv::read_file(path), schema);
}

// ---------------------------------------------------------------------------
// Rescaling

/// Maps one raw response onto [-1, 1]: likert (x - 4) / 3, percent (x - 50) / 50.
inline double rescale_value(double raw, Scale scale) {
  return scale == Scale::likert7 ? (raw - 4.0) / 3.0 : (raw - 50.0) / 50.0;
}

inline double unscale_value(double belief, Scale scale) {
  return scale == Scale::likert7 ? 4.0 + 3.0 * belief : 50.0 + 50.0 * belief;
}

inline PanelDataset rescale_beliefs(const PanelDataset& raw) {
  if (raw.rescaled) return raw;
  PanelDataset out = raw;
  for (std::size_t t = 0; t < raw.n_times(); ++t) {
    for (std::size_t j = 0; j < raw.n_beliefs(); ++j) {
      const Scale scale = raw.beliefs[j].scale;
      const double lo = scale == Scale::likert7 ? 1.0 : 0.0;
      const double hi = scale == Scale::likert7 ? 7.0 : 100.0;
      for (std::size_t i = 0; i < raw.n_persons(); ++i) {
        const double x = raw.values[t](static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
        if (!(x >= lo && x <= hi))
          throw Error(ErrorKind::domain, "value " + csv::number(x) + " outside [" + csv::number(lo) + ", " +
                                             csv::number(hi) + "] for person '" + raw.persons[i] + "', time '" +
                                             raw.time_points[t] + "', belief '" + raw.beliefs[j].name + "'");
        out.values[t](static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rescale_value(x, scale);
      }
    }
  }
  out.rescaled = true;
  return out;
}

// ---------------------------------------------------------------------------
// Residualization

struct ResidualDataset {
  std::vector<std::string> persons;
  std::vector<std::string> time_points;
  std::vector<BeliefInfo> beliefs;
  std::vector<Eigen::MatrixXd> residuals;  // per time: persons x beliefs
  Eigen::VectorXd grand_means;

  std::size_t n_persons() const { return persons.size(); }
  std::size_t n_times() const { return time_points.size(); }
  std::size_t n_beliefs() const { return beliefs.size(); }
};

/// Two-way within transformation: x - person mean - time mean + grand mean,
/// per belief. Equivalent to regressing each belief on person and time
/// dummies in a balanced panel.
inline ResidualDataset residualize(const PanelDataset& data) {
  const std::size_t n = data.n_persons();
  const std::size_t T = data.n_times();
  if (n < 2 || T < 2)
    throw Error(ErrorKind::dimension, "residualize needs at least 2 persons and 2 time points (got " +
                                          std::to_string(n) + " x " + std::to_string(T) + ")");
  const auto p = static_cast<Eigen::Index>(data.n_beliefs());
  const auto rows = static_cast<Eigen::Index>(n);

  Eigen::MatrixXd person_mean = Eigen::MatrixXd::Zero(rows, p);
  for (const auto& m : data.values) person_mean += m;
  person_mean /= static_cast<double>(T);
  const Eigen::RowVectorXd grand = person_mean.colwise().mean();

  ResidualDataset out;
  out.persons = data.persons;
  out.time_points = data.time_points;
  out.beliefs = data.beliefs;
  out.grand_means = grand.transpose();
  out.residuals.reserve(T);
  for (const auto& m : data.values) {
    const Eigen::RowVectorXd time_mean = m.colwise().mean();
    Eigen::MatrixXd r = m - person_mean;
    r.rowwise() -= time_mean - grand;
    out.residuals.push_back(std::move(r));
  }
  return out;
}

/// Residuals packaged as a panel (for reuse of panel-level tooling).
inline PanelDataset as_panel(const ResidualDataset& res) {
  PanelDataset d;
  d.persons = res.persons;
  d.time_points = res.time_points;
  d.beliefs = res.beliefs;
  d.values = res.residuals;
  d.dissonance.assign(res.n_times(), std::nullopt);
  d.rescaled = true;
  return d;
}

// ---------------------------------------------------------------------------
// Felt dissonance

/// Cronbach's alpha over item columns. Throws `degenerate` when the summed
/// score has zero variance.
inline double cronbach_alpha(const Eigen::MatrixXd& items) {
  const auto k = items.cols();
  const auto n = items.rows();
  if (k < 2) throw Error(ErrorKind::dimension, "Cronbach's alpha needs at least 2 items");
  if (n < 2) throw Error(ErrorKind::dimension, "Cronbach's alpha needs at least 2 respondents");
  auto variance = [n](const Eigen::VectorXd& v) {
    return (v.array() - v.mean()).square().sum() / static_cast<double>(n - 1);
  };
  double item_var = 0.0;
  for (Eigen::Index c = 0; c < k; ++c) item_var += variance(items.col(c));
  const double total_var = variance(items.rowwise().sum());
  if (!(total_var > 0.0)) throw Error(ErrorKind::degenerate, "alpha undefined: summed score has zero variance");
  const double kk = static_cast<double>(k);
  return kk / (kk - 1.0) * (1.0 - item_var / total_var);
}

struct DissonanceIndex {
  Eigen::VectorXd score;        // item mean per person
  std::optional<double> alpha;  // empty when undefined
};

inline DissonanceIndex dissonance_index(const Eigen::MatrixXd& items) {
  DissonanceIndex out;
  out.score = items.rowwise().mean();
  try {
    out.alpha = cronbach_alpha(items);
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::degenerate) throw;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Valence split

struct ValenceSplit {
  std::vector<std::size_t> negative;     // belief sum < 0
  std::vector<std::size_t> non_negative; // belief sum >= 0
};

/// Splits persons by the sign of their summed (moral + social) beliefs at `time`.
inline ValenceSplit split_by_valence(const PanelDataset& data, std::size_t time) {
  ValenceSplit split;
  const auto& m = data.values.at(time);
  for (std::size_t i = 0; i < data.n_persons(); ++i) {
    double sum = 0.0;
    for (std::size_t j = 0; j < data.n_beliefs(); ++j)
      if (data.beliefs[j].kind != BeliefKind::safety) sum += m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    (sum < 0.0 ? split.negative : split.non_negative).push_back(i);
  }
  return split;
}

}  // namespace beliefnet
