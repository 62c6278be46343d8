#include "qcnn/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>

#include "qcnn/error.hpp"
#include "qcnn/random.hpp"

namespace qcnn {

using nlohmann::json;

namespace {

// Days since 1970-01-01 to civil date (proleptic Gregorian).
void civil_from_days(long long z, int& y, unsigned& m, unsigned& d) {
  z += 719468;
  const long long era = (z >= 0 ? z : z - 146096) / 146097;
  const auto doe = static_cast<unsigned>(z - era * 146097);
  const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const unsigned mp = (5 * doy + 2) / 153;
  d = doy - (153 * mp + 2) / 5 + 1;
  m = mp < 10 ? mp + 3 : mp - 9;
  y = static_cast<int>(yoe + era * 400) + (m <= 2 ? 1 : 0);
}

std::string lot_timestamp(std::size_t index) {
  constexpr long long kStartDays = 15371;  // 2012-02-01
  const long long hours = static_cast<long long>(index) * 4;
  int y;
  unsigned m, d;
  civil_from_days(kStartDays + hours / 24, y, m, d);
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02lld:00:00Z", y, m, d, hours % 24);
  return buf;
}

std::string lot_id(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "lot-%06zu", index + 1);
  return buf;
}

RiskTerm linear(double c, std::string factor) { return {c, {{std::move(factor), std::nullopt}}}; }
RiskTerm indicator(double c, std::string factor, std::string state) {
  return {c, {{std::move(factor), std::move(state)}}};
}

}  // namespace

SyntheticProcessSpec SyntheticProcessSpec::lacquering_default() {
  using R = FactorRole;
  const std::vector<std::string> three{"1", "2", "3"};
  SyntheticProcessSpec s;
  s.schema = FactorSchema({
      FactorDef::continuous("load_factor", R::controllable, {0.3, 1.0}),
      FactorDef::discrete("passes", R::protocol, three),
      FactorDef::continuous("time_per_table", R::protocol, {5.0, 20.0}),
      FactorDef::continuous("liter_per_table", R::controllable, {0.5, 3.0}),
      FactorDef::continuous("basis_weight", R::controllable, {80.0, 160.0}),
      FactorDef::discrete("layers", R::protocol, three),
      FactorDef::continuous("number_of_products", R::protocol, {1.0, 40.0}, true),
      FactorDef::continuous("drying_time", R::controllable, {20.0, 90.0}),
      FactorDef::continuous("temperature", R::non_controllable, {12.0, 32.0}),
      FactorDef::continuous("humidity", R::non_controllable, {30.0, 85.0}),
      FactorDef::continuous("pressure", R::non_controllable, {990.0, 1035.0}),
  });
  s.risk.intercept = -14.5;
  s.risk.terms = {
      linear(12.0, "basis_weight"),     linear(-12.0, "drying_time"),   linear(8.0, "load_factor"),
      linear(6.0, "humidity"),          linear(-3.2, "temperature"),    linear(2.4, "liter_per_table"),
      linear(1.0, "time_per_table"),    linear(0.8, "number_of_products"), linear(-0.8, "pressure"),
      indicator(4.0, "layers", "3"),    indicator(-4.0, "layers", "1"),
  };
  s.null_factors = {"passes"};
  s.label_noise = 0.0;
  s.seed = 20120201;
  return s;
}

void SyntheticProcessSpec::validate() const {
  if (!(label_noise >= 0.0 && label_noise <= 0.5)) throw SchemaError("label_noise must lie in [0, 0.5]");
  if (!std::isfinite(risk.intercept)) throw SchemaError("risk intercept must be finite");
  for (const auto& t : risk.terms) {
    if (!std::isfinite(t.coefficient)) throw SchemaError("risk coefficients must be finite");
    for (const auto& f : t.features) {
      const auto& def = schema.at(f.factor);
      if (def.is_continuous() && f.state) throw SchemaError("continuous factor '" + f.factor + "' cannot take a state");
      if (!def.is_continuous() && (!f.state || !def.has_state(*f.state))) {
        throw SchemaError("risk term on '" + f.factor + "' needs a declared state");
      }
    }
  }
  const auto used = factors_in_risk();
  for (const auto& n : null_factors) {
    schema.at(n);
    if (std::find(used.begin(), used.end(), n) != used.end()) {
      throw SchemaError("null factor '" + n + "' appears in the risk function");
    }
  }
}

std::vector<std::string> SyntheticProcessSpec::factors_in_risk() const {
  std::set<std::string> names;
  for (const auto& t : risk.terms) {
    if (t.coefficient == 0.0) continue;
    for (const auto& f : t.features) names.insert(f.factor);
  }
  return {names.begin(), names.end()};
}

void to_json(json& j, const SyntheticProcessSpec& s) {
  json terms = json::array();
  for (const auto& t : s.risk.terms) {
    json feats = json::array();
    for (const auto& f : t.features) {
      feats.push_back({{"factor", f.factor}, {"state", f.state ? json(*f.state) : json(nullptr)}});
    }
    terms.push_back({{"coefficient", t.coefficient}, {"features", feats}});
  }
  j = {{"schema", s.schema},
       {"risk", {{"intercept", s.risk.intercept}, {"terms", terms}}},
       {"null_factors", s.null_factors},
       {"label_noise", s.label_noise},
       {"seed", s.seed},
       {"defect_name", s.defect_name}};
}

void from_json(const json& j, SyntheticProcessSpec& s) {
  s = SyntheticProcessSpec{};
  s.schema = j.at("schema").get<FactorSchema>();
  const auto& risk = j.at("risk");
  s.risk.intercept = risk.at("intercept").get<double>();
  for (const auto& t : risk.at("terms")) {
    RiskTerm term;
    term.coefficient = t.at("coefficient").get<double>();
    for (const auto& f : t.at("features")) {
      RiskFeature feat;
      feat.factor = f.at("factor").get<std::string>();
      if (f.contains("state") && !f.at("state").is_null()) feat.state = f.at("state").get<std::string>();
      term.features.push_back(std::move(feat));
    }
    s.risk.terms.push_back(std::move(term));
  }
  s.null_factors = j.value("null_factors", std::vector<std::string>{});
  s.label_noise = j.value("label_noise", 0.0);
  s.seed = j.value("seed", std::uint64_t{1});
  s.defect_name = j.value("defect_name", std::string("stains_on_back"));
  s.validate();
}

SyntheticProcessSpec load_synth_spec(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open synth spec '" + path + "'");
  try {
    return json::parse(in).get<SyntheticProcessSpec>();
  } catch (const json::exception& e) {
    throw ParseError("synth spec '" + path + "': " + e.what());
  }
}

double unit_coordinate(const FactorDef& def, double value) {
  return 2.0 * (value - def.range.min) / def.range.width() - 1.0;
}

double risk_logit(const SyntheticProcessSpec& spec, const FactorValues& values) {
  double logit = spec.risk.intercept;
  for (const auto& t : spec.risk.terms) {
    double prod = t.coefficient;
    for (const auto& f : t.features) {
      if (f.state) {
        prod *= state_value(values, f.factor) == *f.state ? 1.0 : 0.0;
      } else {
        prod *= unit_coordinate(spec.schema.at(f.factor), numeric_value(values, f.factor));
      }
    }
    logit += prod;
  }
  return logit;
}

double true_risk(const SyntheticProcessSpec& spec, const FactorValues& values) {
  return logistic(risk_logit(spec, values));
}

FactorValues sample_factors(const SyntheticProcessSpec& spec, Rng& rng) {
  FactorValues v;
  for (const auto& f : spec.schema.factors()) {
    if (!f.is_continuous()) {
      v[f.name] = f.states[rng.index(f.states.size())];
    } else if (f.count) {
      const auto lo = static_cast<long long>(std::ceil(f.range.min));
      const auto hi = static_cast<long long>(std::floor(f.range.max));
      v[f.name] = static_cast<double>(lo + static_cast<long long>(rng.index(static_cast<std::uint64_t>(hi - lo + 1))));
    } else {
      v[f.name] = rng.uniform(f.range.min, f.range.max);
    }
  }
  return v;
}

std::vector<ProductionRecord> generate(const SyntheticProcessSpec& spec, std::size_t n) {
  spec.validate();
  Rng rng(spec.seed);
  std::vector<ProductionRecord> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    ProductionRecord rec;
    rec.record_id = lot_id(i);
    rec.timestamp = lot_timestamp(i);
    rec.factor_values = sample_factors(spec, rng);
    bool defect = rng.bernoulli(true_risk(spec, rec.factor_values));
    if (rng.bernoulli(spec.label_noise)) defect = !defect;
    rec.defect_flags[spec.defect_name] = defect;
    out.push_back(std::move(rec));
  }
  return out;
}

GeneratedWithOutliers generate_with_outliers(const SyntheticProcessSpec& spec, std::size_t n, std::size_t count,
                                             double widen) {
  GeneratedWithOutliers out{generate(spec, n), {}};
  if (count > n) throw DomainError("more outliers requested than records");
  std::vector<std::string> continuous;
  for (const auto& f : spec.schema.factors()) {
    if (f.is_continuous()) continuous.push_back(f.name);
  }
  if (continuous.empty()) throw DomainError("outlier injection needs a continuous factor");
  Rng rng(mix_seed(spec.seed ^ 0x6f75746c69657273ULL));
  std::vector<std::size_t> rows(n);
  for (std::size_t i = 0; i < n; ++i) rows[i] = i;
  for (std::size_t i = 0; i < count; ++i) std::swap(rows[i], rows[i + rng.index(n - i)]);
  rows.resize(count);
  std::sort(rows.begin(), rows.end());
  for (auto row : rows) {
    const auto& def = spec.schema.at(continuous[rng.index(continuous.size())]);
    const double overshoot = (widen + 0.05 + 0.5 * rng.uniform()) * def.range.width();
    out.records[row].factor_values[def.name] = rng.bernoulli(0.5) ? def.range.max + overshoot : def.range.min - overshoot;
  }
  out.outlier_rows = std::move(rows);
  return out;
}

InputEncoding uniform_encoding(const FactorSchema& schema) {
  InputEncoding enc;
  enc.columns = column_layout(schema);
  for (const auto& f : schema.factors()) {
    if (f.is_continuous()) enc.norms[f.name] = {0.5 * (f.range.min + f.range.max), f.range.width() / std::sqrt(12.0)};
  }
  return enc;
}

Mlp exact_surrogate(const SyntheticProcessSpec& spec, const InputEncoding& encoding, double slope) {
  spec.validate();
  Mlp mlp(encoding.width(), 1);
  double bias = 0.0;
  for (const auto& t : spec.risk.terms) {
    if (t.features.empty()) {
      bias += t.coefficient;
      continue;
    }
    if (t.features.size() != 1) throw DomainError("exact_surrogate supports single-feature risk terms only");
    const auto& f = t.features.front();
    const auto& def = spec.schema.at(f.factor);
    if (f.state) {
      for (auto c : encoding.columns_of(f.factor)) {
        if (encoding.columns[c].state == f.state) {
          const auto idx = mlp.hidden_weight_index(0, c);
          mlp.set_param(idx, mlp.param(idx) + slope * t.coefficient);
        }
      }
    } else {
      // unit = a + b * x with x the standardized column
      const auto& norm = encoding.norms.at(f.factor);
      const double a = 2.0 * (norm.mean - def.range.min) / def.range.width() - 1.0;
      const double b = 2.0 * norm.stddev / def.range.width();
      const auto cols = encoding.columns_of(f.factor);
      if (cols.size() != 1) throw DomainError("factor '" + f.factor + "' is not a single encoded column");
      const auto idx = mlp.hidden_weight_index(0, cols.front());
      mlp.set_param(idx, mlp.param(idx) + slope * t.coefficient * b);
      bias += t.coefficient * a;
    }
  }
  mlp.set_param(mlp.hidden_bias_index(0), slope * bias);
  mlp.set_param(mlp.output_weight_index(0), 1.0 / slope);
  mlp.set_param(mlp.output_bias_index(), spec.risk.intercept);
  mlp.defect_name = spec.defect_name;
  mlp.schema_fingerprint = spec.schema.fingerprint();
  mlp.encoding = encoding;
  return mlp;
}

}  // namespace qcnn
