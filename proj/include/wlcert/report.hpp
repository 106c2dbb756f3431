#pragma once

// CSV emission at full precision and a validator for the subset of JSON
// Schema the report schemas use (type, required, properties,
// additionalProperties, items, enum, minimum).

#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"
#include "wlcert/errors.hpp"

namespace wlcert {

using Json = nlohmann::ordered_json;

/// 17 significant digits; non-finite values print as inf, -inf, nan.
inline std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

class CsvWriter {
 public:
  explicit CsvWriter(std::vector<std::string> header) : cols_(header.size()) { row_strings(header); }

  using Cell = std::variant<double, std::string, long long, bool>;

  void row(const std::vector<Cell>& cells) {
    if (cells.size() != cols_) throw std::logic_error("CSV row width does not match the header");
    std::vector<std::string> s;
    s.reserve(cells.size());
    for (const auto& c : cells) {
      if (const auto* d = std::get_if<double>(&c)) {
        s.push_back(format_number(*d));
      } else if (const auto* str = std::get_if<std::string>(&c)) {
        s.push_back(*str);
      } else if (const auto* i = std::get_if<long long>(&c)) {
        s.push_back(std::to_string(*i));
      } else {
        s.push_back(std::get<bool>(c) ? "1" : "0");
      }
    }
    row_strings(s);
  }

  std::string str() const { return out_.str(); }

 private:
  void row_strings(const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) out_ << (i ? "," : "") << cells[i];
    out_ << '\n';
  }

  std::size_t cols_;
  std::ostringstream out_;
};

/// JSON cannot hold inf/nan; they are written as the strings "inf", "-inf",
/// "nan".
inline Json json_number(double v) {
  if (std::isfinite(v)) return v;
  return format_number(v);
}

namespace schemadetail {

inline bool type_matches(const Json& v, const std::string& type) {
  if (type == "object") return v.is_object();
  if (type == "array") return v.is_array();
  if (type == "string") return v.is_string();
  if (type == "boolean") return v.is_boolean();
  if (type == "integer") return v.is_number_integer();
  if (type == "number") return v.is_number();
  if (type == "null") return v.is_null();
  return false;
}

inline void check(const Json& v, const Json& schema, const std::string& path, std::vector<std::string>& errors) {
  if (schema.contains("type")) {
    const auto& t = schema.at("type");
    bool ok = false;
    if (t.is_string()) {
      ok = type_matches(v, t.get<std::string>());
    } else {
      for (const auto& alt : t) ok = ok || type_matches(v, alt.get<std::string>());
    }
    if (!ok) {
      errors.push_back(path + ": expected type " + t.dump());
      return;
    }
  }
  if (schema.contains("enum")) {
    bool found = false;
    for (const auto& e : schema.at("enum")) found = found || e == v;
    if (!found) errors.push_back(path + ": value " + v.dump() + " not in " + schema.at("enum").dump());
  }
  if (schema.contains("minimum") && v.is_number() && v.get<double>() < schema.at("minimum").get<double>()) {
    errors.push_back(path + ": value below minimum " + schema.at("minimum").dump());
  }
  if (v.is_object()) {
    if (schema.contains("required")) {
      for (const auto& k : schema.at("required")) {
        if (!v.contains(k.get<std::string>())) errors.push_back(path + "." + k.get<std::string>() + ": missing");
      }
    }
    const Json props = schema.value("properties", Json::object());
    for (const auto& [k, child] : v.items()) {
      if (props.contains(k)) {
        check(child, props.at(k), path + "." + k, errors);
      } else if (schema.contains("additionalProperties") && schema.at("additionalProperties").is_boolean() &&
                 !schema.at("additionalProperties").get<bool>()) {
        errors.push_back(path + "." + k + ": unexpected key");
      }
    }
  }
  if (v.is_array() && schema.contains("items")) {
    for (std::size_t i = 0; i < v.size(); ++i) check(v[i], schema.at("items"), path + "[" + std::to_string(i) + "]", errors);
  }
}

}  // namespace schemadetail

/// Empty when the document conforms.
inline std::vector<std::string> validate_against(const Json& doc, const Json& schema) {
  std::vector<std::string> errors;
  schemadetail::check(doc, schema, "$", errors);
  return errors;
}

namespace schemadetail {

inline const std::map<std::string, std::string>& raw_schemas() {
  static const std::map<std::string, std::string> s = {
      {"admissible", R"({
  "type": "object",
  "required": ["report", "schema_version", "grid", "admissible", "s_min_bracket", "vp_threshold", "note"],
  "additionalProperties": false,
  "properties": {
    "report": {"enum": ["admissible"]},
    "schema_version": {"type": "integer"},
    "grid": {"type": "array", "items": {"type": "object", "required": ["s0", "margin", "admissible"],
      "properties": {"s0": {"type": "number"}, "margin": {"type": ["number", "string"]}, "admissible": {"type": "boolean"}}}},
    "admissible": {"type": "array", "items": {"type": "number"}},
    "s_min_bracket": {"type": ["array", "null"], "items": {"type": "number"}},
    "vp_threshold": {"type": ["number", "string", "null"]},
    "note": {"type": "string"}
  }
})"},
      {"certify", R"({
  "type": "object",
  "required": ["report", "schema_version", "p", "M_bar", "direct_bound", "rows", "optimum"],
  "additionalProperties": false,
  "properties": {
    "report": {"enum": ["certify"]},
    "schema_version": {"type": "integer"},
    "p": {"type": "number"},
    "M_bar": {"type": "number", "minimum": 0},
    "direct_bound": {"type": ["number", "string"]},
    "rows": {"type": "array", "items": {"type": "object",
      "required": ["s0", "status", "margin"],
      "properties": {
        "s0": {"type": "number"}, "status": {"enum": ["ok", "inadmissible", "unaligned", "overflow"]},
        "margin": {"type": ["number", "string"]}, "argmin": {"type": "boolean"},
        "winner": {"enum": ["routed", "direct", "tie"]},
        "sw": {"type": "object"}, "vp": {"type": "object"}
      }}},
    "optimum": {"type": "object", "required": ["s0", "routed", "direct", "winner"],
      "properties": {"s0": {"type": "number"}, "winner": {"enum": ["routed", "direct", "tie"]}}}
  }
})"},
      {"simulate", R"({
  "type": "object",
  "required": ["report", "schema_version", "mode", "seed", "n_paths", "window", "fitted_rate", "fitted_dist_rate",
               "coalesced_fraction_final", "sticking_violations"],
  "additionalProperties": false,
  "properties": {
    "report": {"enum": ["simulate"]},
    "schema_version": {"type": "integer"},
    "mode": {"enum": ["synchronous", "reflection"]},
    "seed": {"type": "integer", "minimum": 0},
    "n_paths": {"type": "integer", "minimum": 100},
    "window": {"type": "array", "items": {"type": "number"}},
    "initial_gap": {"type": "number"},
    "fitted_rate": {"type": ["number", "string"]},
    "fitted_dist_rate": {"type": ["number", "string"]},
    "coalesced_fraction_final": {"type": "number", "minimum": 0},
    "sticking_violations": {"type": "integer", "minimum": 0},
    "refinements": {"type": "integer", "minimum": 0},
    "qv_ratio": {"type": ["number", "null"]},
    "per_path_seed_rule": {"type": "string"},
    "certificate": {"type": "object"}
  }
})"},
      {"end_to_end", R"({
  "type": "object",
  "required": ["report", "schema_version", "seed", "n_samples", "w2_hat", "stderr", "warning", "direct", "routed",
               "bound", "within_3sigma"],
  "additionalProperties": false,
  "properties": {
    "report": {"enum": ["end_to_end"]},
    "schema_version": {"type": "integer"},
    "seed": {"type": "integer", "minimum": 0},
    "n_samples": {"type": "integer", "minimum": 2},
    "w2_hat": {"type": "number", "minimum": 0},
    "stderr": {"type": "number", "minimum": 0},
    "warning": {"type": "boolean"},
    "note": {"type": "string"},
    "init_w2": {"type": "number", "minimum": 0},
    "defects_source": {"enum": ["exact_linear_gaussian", "config"]},
    "M_bar": {"type": "number"},
    "direct": {"type": ["number", "string"]},
    "routed": {"type": ["number", "string", "null"]},
    "best_switch": {"type": ["number", "null"]},
    "bound": {"type": ["number", "string"]},
    "within_3sigma": {"type": "boolean"}
  }
})"},
      {"sharpness", R"({
  "type": "object",
  "required": ["report", "schema_version", "R_sw", "a_slope", "per_p"],
  "additionalProperties": false,
  "properties": {
    "report": {"enum": ["sharpness"]},
    "schema_version": {"type": "integer"},
    "R_sw": {"type": "number", "minimum": 0},
    "a_slope": {"type": "number", "minimum": 0},
    "per_p": {"type": "array", "items": {"type": "object",
      "required": ["p", "slope_w2", "slope_wphi", "ratio_min", "ratio_max"],
      "properties": {"p": {"type": "number"}, "slope_w2": {"type": ["number", "string"]},
        "slope_wphi": {"type": ["number", "string"]}, "ratio_min": {"type": ["number", "string"]},
        "ratio_max": {"type": ["number", "string"]}, "tail_points": {"type": "integer"}}}}
  }
})"},
  };
  return s;
}

}  // namespace schemadetail

inline std::vector<std::string> report_schema_names() {
  std::vector<std::string> out;
  for (const auto& [k, v] : schemadetail::raw_schemas()) out.push_back(k);
  return out;
}

inline Json report_schema(const std::string& name) {
  const auto& m = schemadetail::raw_schemas();
  const auto it = m.find(name);
  if (it == m.end()) throw ConfigError("unknown report schema '" + name + "'");
  return Json::parse(it->second);
}

/// Validates a report against the schema named by its "report" field.
inline std::vector<std::string> validate_report(const Json& doc) {
  if (!doc.is_object() || !doc.contains("report") || !doc.at("report").is_string()) {
    return {"$.report: missing report kind"};
  }
  return validate_against(doc, report_schema(doc.at("report").get<std::string>()));
}

}  // namespace wlcert
