#include "qcnn/schema.hpp"

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <set>

#include "qcnn/error.hpp"

namespace qcnn {

using nlohmann::json;

std::string_view to_string(FactorKind kind) {
  return kind == FactorKind::continuous ? "continuous" : "discrete";
}

std::string_view to_string(FactorRole role) {
  switch (role) {
    case FactorRole::controllable: return "controllable";
    case FactorRole::non_controllable: return "non-controllable";
    case FactorRole::protocol: return "protocol";
  }
  return "?";
}

FactorRole parse_role(std::string_view text) {
  if (text == "controllable") return FactorRole::controllable;
  if (text == "non-controllable") return FactorRole::non_controllable;
  if (text == "protocol") return FactorRole::protocol;
  throw SchemaError("unknown factor role '" + std::string(text) + "'");
}

bool FactorDef::has_state(std::string_view label) const {
  for (const auto& s : states) {
    if (s == label) return true;
  }
  return false;
}

FactorDef FactorDef::continuous(std::string name, FactorRole role, Range range, bool count) {
  FactorDef d;
  d.name = std::move(name);
  d.kind = FactorKind::continuous;
  d.role = role;
  d.range = range;
  d.count = count;
  return d;
}

FactorDef FactorDef::discrete(std::string name, FactorRole role, std::vector<std::string> states) {
  FactorDef d;
  d.name = std::move(name);
  d.kind = FactorKind::discrete;
  d.role = role;
  d.states = std::move(states);
  return d;
}

std::string format_value(const FactorValue& v) {
  if (const auto* s = std::get_if<std::string>(&v)) return *s;
  return json(std::get<double>(v)).dump();
}

FactorSchema::FactorSchema(std::vector<FactorDef> factors) : factors_(std::move(factors)) {
  std::set<std::string> names;
  for (const auto& f : factors_) {
    if (f.name.empty()) throw SchemaError("factor with empty name");
    if (!names.insert(f.name).second) throw SchemaError("duplicate factor name '" + f.name + "'");
    if (f.kind == FactorKind::discrete) {
      if (f.states.size() < 2) throw SchemaError("discrete factor '" + f.name + "' needs at least 2 states");
      std::set<std::string> labels(f.states.begin(), f.states.end());
      if (labels.size() != f.states.size()) throw SchemaError("discrete factor '" + f.name + "' has duplicate states");
    } else {
      if (!std::isfinite(f.range.min) || !std::isfinite(f.range.max) || !(f.range.min < f.range.max)) {
        throw SchemaError("continuous factor '" + f.name + "' needs range min < max");
      }
    }
  }
}

std::optional<std::size_t> FactorSchema::index_of(std::string_view name) const {
  for (std::size_t i = 0; i < factors_.size(); ++i) {
    if (factors_[i].name == name) return i;
  }
  return std::nullopt;
}

const FactorDef& FactorSchema::at(std::string_view name) const {
  auto idx = index_of(name);
  if (!idx) throw SchemaError("unknown factor '" + std::string(name) + "'");
  return factors_[*idx];
}

std::vector<std::string> FactorSchema::names_with_role(FactorRole role) const {
  std::vector<std::string> out;
  for (const auto& f : factors_) {
    if (f.role == role) out.push_back(f.name);
  }
  return out;
}

void FactorSchema::validate(const FactorValues& values, bool check_range) const {
  for (const auto& [name, value] : values) {
    if (!contains(name)) throw SchemaError("unknown factor '" + name + "'");
  }
  for (const auto& f : factors_) {
    auto it = values.find(f.name);
    if (it == values.end()) throw SchemaError("missing value for factor '" + f.name + "'");
    if (f.is_continuous()) {
      const auto* v = std::get_if<double>(&it->second);
      if (!v) throw SchemaError("factor '" + f.name + "' expects a number");
      if (!std::isfinite(*v)) throw SchemaError("factor '" + f.name + "' is not finite");
      if (check_range && !f.range.contains(*v)) {
        throw DomainError("factor '" + f.name + "' value " + format_value(*v) + " outside range [" +
                          format_value(f.range.min) + ", " + format_value(f.range.max) + "]");
      }
    } else {
      const auto* s = std::get_if<std::string>(&it->second);
      if (!s) throw SchemaError("factor '" + f.name + "' expects a state label");
      if (!f.has_state(*s)) throw SchemaError("factor '" + f.name + "' has undeclared state '" + *s + "'");
    }
  }
}

std::string FactorSchema::fingerprint() const {
  const std::string text = json(*this).dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

void to_json(json& j, const FactorDef& def) {
  j = json::object();
  j["name"] = def.name;
  j["kind"] = std::string(to_string(def.kind));
  j["role"] = std::string(to_string(def.role));
  if (def.is_continuous()) {
    j["range"] = json::array({def.range.min, def.range.max});
    j["count"] = def.count;
  } else {
    j["states"] = def.states;
  }
}

void from_json(const json& j, FactorDef& def) {
  def = FactorDef{};
  def.name = j.at("name").get<std::string>();
  const auto kind = j.at("kind").get<std::string>();
  def.role = parse_role(j.at("role").get<std::string>());
  if (kind == "continuous") {
    def.kind = FactorKind::continuous;
    const auto& r = j.at("range");
    if (!r.is_array() || r.size() != 2) throw SchemaError("factor '" + def.name + "' range must be [min, max]");
    def.range = {r[0].get<double>(), r[1].get<double>()};
    def.count = j.value("count", false);
  } else if (kind == "discrete") {
    def.kind = FactorKind::discrete;
    for (const auto& s : j.at("states")) {
      def.states.push_back(s.is_string() ? s.get<std::string>() : s.dump());
    }
  } else {
    throw SchemaError("factor '" + def.name + "' has unknown kind '" + kind + "'");
  }
}

void to_json(json& j, const FactorSchema& schema) {
  j = json::object();
  j["factors"] = schema.factors();
}

void from_json(const json& j, FactorSchema& schema) {
  schema = FactorSchema(j.at("factors").get<std::vector<FactorDef>>());
}

FactorSchema load_schema(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open schema file '" + path + "'");
  try {
    return json::parse(in).get<FactorSchema>();
  } catch (const json::exception& e) {
    throw ParseError("schema file '" + path + "': " + e.what());
  }
}

json values_to_json(const FactorValues& values) {
  json j = json::object();
  for (const auto& [name, v] : values) {
    if (const auto* s = std::get_if<std::string>(&v)) {
      j[name] = *s;
    } else {
      j[name] = std::get<double>(v);
    }
  }
  return j;
}

FactorValues values_from_json(const json& j, const FactorSchema& schema) {
  if (!j.is_object()) throw SchemaError("factor values must be a JSON object");
  FactorValues out;
  for (const auto& [name, v] : j.items()) {
    const auto& def = schema.at(name);
    if (def.is_continuous()) {
      if (!v.is_number()) throw SchemaError("factor '" + name + "' expects a number");
      out[name] = v.get<double>();
    } else if (v.is_string()) {
      out[name] = v.get<std::string>();
    } else if (v.is_number_integer()) {
      out[name] = std::to_string(v.get<long long>());
    } else {
      throw SchemaError("factor '" + name + "' expects a state label");
    }
  }
  return out;
}

double numeric_value(const FactorValues& values, const std::string& factor) {
  auto it = values.find(factor);
  if (it == values.end()) throw SchemaError("missing value for factor '" + factor + "'");
  const auto* v = std::get_if<double>(&it->second);
  if (!v) throw SchemaError("factor '" + factor + "' expects a number");
  return *v;
}

const std::string& state_value(const FactorValues& values, const std::string& factor) {
  auto it = values.find(factor);
  if (it == values.end()) throw SchemaError("missing value for factor '" + factor + "'");
  const auto* v = std::get_if<std::string>(&it->second);
  if (!v) throw SchemaError("factor '" + factor + "' expects a state label");
  return *v;
}

}  // namespace qcnn
