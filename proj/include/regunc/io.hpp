#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "regunc/prediction_set.hpp"
#include "regunc/trainer.hpp"

// File formats.
//
// PredictionSet (JSON, canonical form written one point per line):
//   {"points": [
//     {"id": "p0", "members": [{"mu": 0.1, "sigma2": 1.2}, ...],
//      "target": 0.3, "group": "id"},
//     ...]}
// "target" and "group" are optional. Numbers are written with 17
// significant digits so write -> read -> write is byte-identical.
//
// Ensemble checkpoint (JSON):
//   {"format": "regunc-ensemble", "version": 1,
//    "spec": {"input_dim": 1, "hidden_widths": [8, 8], "activation": "silu"},
//    "standardizer": {"x_mean": [...], "x_scale": [...], "y_mean": m, "y_scale": s},
//    "members": [{"params": [...]}, ...]}
// Member parameters are the flat per-layer (W row-major, then b) vector.

namespace regunc::io {

using json = nlohmann::json;

/// Shortest-form-agnostic %.17g rendering; exact round trip for doubles.
inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string format_cell(const std::optional<double>& v) { return v ? format_double(*v) : "NA"; }

inline std::string quote(std::string_view s) { return json(std::string(s)).dump(); }

inline std::string serialize_prediction_set(const PredictionSet& set) {
  std::string out = "{\"points\": [\n";
  for (std::size_t i = 0; i < set.size(); ++i) {
    const auto& p = set[i];
    out += "  {\"id\": " + quote(p.id) + ", \"members\": [";
    for (std::size_t k = 0; k < p.ensemble.size(); ++k) {
      if (k) out += ", ";
      out += "{\"mu\": " + format_double(p.ensemble[k].mean()) +
             ", \"sigma2\": " + format_double(p.ensemble[k].variance()) + "}";
    }
    out += "]";
    if (p.target) out += ", \"target\": " + format_double(*p.target);
    if (p.group) out += ", \"group\": " + quote(*p.group);
    out += "}";
    out += i + 1 < set.size() ? ",\n" : "\n";
  }
  out += "]}\n";
  return out;
}

namespace detail {

inline std::pair<std::size_t, std::size_t> line_column(std::string_view text, std::size_t byte) {
  std::size_t line = 1, col = 1;
  for (std::size_t i = 0; i < byte && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return {line, col};
}

[[noreturn]] inline void schema_error(const std::string& msg) { throw ParseError("schema error: " + msg, 0, 0); }

inline const json& field(const json& obj, const char* name, const std::string& where) {
  if (!obj.is_object()) schema_error(where + " is not an object");
  const auto it = obj.find(name);
  if (it == obj.end()) schema_error(where + ": missing required field '" + name + "'");
  return *it;
}

inline double number(const json& v, const std::string& where) {
  if (!v.is_number()) schema_error(where + " must be a number");
  const double d = v.get<double>();
  if (!std::isfinite(d)) schema_error(where + " must be finite");
  return d;
}

}  // namespace detail

inline PredictionSet parse_prediction_set(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    const auto [line, col] = detail::line_column(text, e.byte > 0 ? e.byte - 1 : 0);
    throw ParseError("parse error at line " + std::to_string(line) + ", column " + std::to_string(col) + ": " +
                         e.what(),
                     line, col);
  }
  const auto& points = detail::field(doc, "points", "document");
  if (!points.is_array()) detail::schema_error("'points' must be an array");
  PredictionSet out;
  std::set<std::string> ids;
  for (std::size_t i = 0; i < points.size(); ++i) {
    const std::string where = "points[" + std::to_string(i) + "]";
    const auto& p = points[i];
    const auto& id = detail::field(p, "id", where);
    if (!id.is_string()) detail::schema_error(where + ".id must be a string");
    if (!ids.insert(id.get<std::string>()).second)
      detail::schema_error(where + ": duplicate id '" + id.get<std::string>() + "'");
    const auto& members = detail::field(p, "members", where);
    if (!members.is_array() || members.empty()) detail::schema_error(where + ".members must be a non-empty array");
    std::vector<GaussianComponent> comps;
    for (std::size_t k = 0; k < members.size(); ++k) {
      const std::string mw = where + ".members[" + std::to_string(k) + "]";
      const double mu = detail::number(detail::field(members[k], "mu", mw), mw + ".mu");
      const double s2 = detail::number(detail::field(members[k], "sigma2", mw), mw + ".sigma2");
      if (!(s2 > 0.0)) detail::schema_error(mw + ".sigma2 must be > 0");
      comps.emplace_back(mu, s2);
    }
    PredictionPoint pt{id.get<std::string>(), GaussianEnsemble(std::move(comps)), std::nullopt, std::nullopt};
    if (const auto t = p.find("target"); t != p.end() && !t->is_null())
      pt.target = detail::number(*t, where + ".target");
    if (const auto g = p.find("group"); g != p.end() && !g->is_null()) {
      if (!g->is_string()) detail::schema_error(where + ".group must be a string");
      pt.group = g->get<std::string>();
    }
    out.push_back(std::move(pt));
  }
  return out;
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Writes to a sibling temporary and renames it into place.
inline void write_file_atomic(const std::filesystem::path& path, std::string_view content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw UsageError("cannot write '" + tmp.string() + "'");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw UsageError("write failed for '" + tmp.string() + "'");
  }
  std::filesystem::rename(tmp, path);
}

inline PredictionSet load_prediction_set(const std::filesystem::path& path) {
  return parse_prediction_set(read_file(path));
}

inline void save_prediction_set(const std::filesystem::path& path, const PredictionSet& set) {
  write_file_atomic(path, serialize_prediction_set(set));
}

/// Minimal CSV table; cells are pre-formatted strings.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::string str() const {
    std::string out;
    auto line = [&](const std::vector<std::string>& cells) {
      for (std::size_t i = 0; i < cells.size(); ++i) {
        if (i) out += ',';
        out += cells[i];
      }
      out += '\n';
    };
    line(header);
    for (const auto& r : rows) line(r);
    return out;
  }
};

inline json checkpoint_json(const trainer::EnsemblePredictor& pred) {
  json j;
  j["format"] = "regunc-ensemble";
  j["version"] = 1;
  j["spec"] = {{"input_dim", pred.spec.input_dim},
               {"hidden_widths", pred.spec.hidden_widths},
               {"activation", pred.spec.activation == trainer::Activation::SiLU ? "silu" : "relu"}};
  j["standardizer"] = {{"x_mean", pred.standardizer.x_mean},
                       {"x_scale", pred.standardizer.x_scale},
                       {"y_mean", pred.standardizer.y_mean},
                       {"y_scale", pred.standardizer.y_scale}};
  j["members"] = json::array();
  for (const auto& m : pred.members) {
    const auto p = m.params();
    j["members"].push_back({{"params", std::vector<double>(p.begin(), p.end())}});
  }
  return j;
}

inline trainer::EnsemblePredictor checkpoint_from_json(const json& j) {
  if (j.value("format", "") != "regunc-ensemble") detail::schema_error("not a regunc-ensemble checkpoint");
  if (j.value("version", 0) != 1) detail::schema_error("unsupported checkpoint version");
  trainer::EnsemblePredictor pred;
  const auto& spec = detail::field(j, "spec", "checkpoint");
  pred.spec.input_dim = spec.at("input_dim").get<std::size_t>();
  pred.spec.hidden_widths = spec.at("hidden_widths").get<std::vector<std::size_t>>();
  const auto act = spec.at("activation").get<std::string>();
  if (act != "silu" && act != "relu") detail::schema_error("unknown activation '" + act + "'");
  pred.spec.activation = act == "silu" ? trainer::Activation::SiLU : trainer::Activation::ReLU;
  const auto& st = detail::field(j, "standardizer", "checkpoint");
  pred.standardizer.x_mean = st.at("x_mean").get<std::vector<double>>();
  pred.standardizer.x_scale = st.at("x_scale").get<std::vector<double>>();
  pred.standardizer.y_mean = st.at("y_mean").get<double>();
  pred.standardizer.y_scale = st.at("y_scale").get<double>();
  for (const auto& m : detail::field(j, "members", "checkpoint")) {
    trainer::Mlp net(pred.spec);
    const auto params = m.at("params").get<std::vector<double>>();
    if (params.size() != net.params().size()) detail::schema_error("member parameter count does not match spec");
    std::copy(params.begin(), params.end(), net.params().begin());
    pred.members.push_back(std::move(net));
  }
  if (pred.members.empty()) detail::schema_error("checkpoint has no members");
  return pred;
}

inline void save_checkpoint(const std::filesystem::path& path, const trainer::EnsemblePredictor& pred) {
  write_file_atomic(path, checkpoint_json(pred).dump(1) + "\n");
}

inline trainer::EnsemblePredictor load_checkpoint(const std::filesystem::path& path) {
  const auto text = read_file(path);
  try {
    return checkpoint_from_json(json::parse(text));
  } catch (const json::exception& e) {
    throw ParseError(std::string("checkpoint: ") + e.what(), 0, 0);
  }
}

}  // namespace regunc::io
