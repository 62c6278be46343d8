#include "qcnn/doe.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "qcnn/error.hpp"
#include "qcnn/eval.hpp"
#include "qcnn/prune.hpp"
#include "qcnn/robust.hpp"

namespace qcnn {

using nlohmann::json;

std::size_t ExperimentPlan::row_count() const {
  std::size_t n = 1;
  for (const auto& s : swept) n *= s.levels.size();
  return n;
}

namespace {

std::vector<FactorValue> equally_spaced(const Range& r, std::size_t count) {
  std::vector<FactorValue> out;
  if (count == 1) {
    out.emplace_back(0.5 * (r.min + r.max));
    return out;
  }
  for (std::size_t k = 0; k < count; ++k) {
    // Endpoints exactly, interior points by linear interpolation.
    const double t = static_cast<double>(k) / static_cast<double>(count - 1);
    out.emplace_back(k + 1 == count ? r.max : r.min + t * r.width());
  }
  return out;
}

void check_level(const FactorDef& def, const FactorValue& v) {
  if (def.is_continuous()) {
    const auto* d = std::get_if<double>(&v);
    if (!d || !def.range.contains(*d)) {
      throw DomainError("level " + format_value(v) + " of '" + def.name + "' outside the schema range");
    }
  } else {
    const auto* s = std::get_if<std::string>(&v);
    if (!s || !def.has_state(*s)) throw SchemaError("level " + format_value(v) + " is not a state of '" + def.name + "'");
  }
}

}  // namespace

ExperimentPlan build_full_factorial(const FactorSchema& schema, const std::vector<SweepSpec>& sweeps,
                                    const FixedPolicy& fixed, double threshold) {
  ExperimentPlan plan;
  plan.threshold = threshold;
  for (const auto& s : sweeps) {
    const auto& def = schema.at(s.factor);
    if (def.role != FactorRole::controllable) {
      throw SchemaError("factor '" + s.factor + "' is " + std::string(to_string(def.role)) +
                        "; only controllable factors can be swept");
    }
    for (const auto& other : plan.swept) {
      if (other.factor == s.factor) throw SchemaError("factor '" + s.factor + "' swept twice");
    }
    SweptFactor sf{s.factor, s.levels};
    if (sf.levels.empty()) {
      if (s.level_count == 0) throw DomainError("factor '" + s.factor + "' needs at least one level");
      if (def.is_continuous()) {
        sf.levels = equally_spaced(def.range, s.level_count);
      } else {
        sf.levels.assign(def.states.begin(), def.states.end());
      }
    }
    for (const auto& v : sf.levels) check_level(def, v);
    plan.swept.push_back(std::move(sf));
  }

  for (const auto& def : schema.factors()) {
    const bool swept = std::any_of(plan.swept.begin(), plan.swept.end(),
                                   [&](const SweptFactor& s) { return s.factor == def.name; });
    if (swept) continue;
    if (auto it = fixed.explicit_values.find(def.name); it != fixed.explicit_values.end()) {
      check_level(def, it->second);
      plan.fixed[def.name] = it->second;
      continue;
    }
    if (!def.is_continuous() || fixed.records == nullptr || fixed.records->empty()) {
      throw SchemaError("no fixed value for factor '" + def.name + "'");
    }
    Eigen::VectorXd values(static_cast<Eigen::Index>(fixed.records->size()));
    for (std::size_t k = 0; k < fixed.records->size(); ++k) {
      values[static_cast<Eigen::Index>(k)] = numeric_value((*fixed.records)[k].factor_values, def.name);
    }
    plan.fixed[def.name] = def.count ? median(values) : values.mean();
  }
  return plan;
}

ResponseSurface evaluate_plan(const Mlp& mlp, const ExperimentPlan& plan) {
  const auto in_model = mlp.encoding.factor_names();
  const auto gone = eliminated_factors(mlp);
  for (const auto& s : plan.swept) {
    if (std::find(in_model.begin(), in_model.end(), s.factor) == in_model.end()) {
      throw DomainError("swept factor '" + s.factor + "' is not an input of the model");
    }
    if (std::find(gone.begin(), gone.end(), s.factor) != gone.end()) {
      throw DomainError("swept factor '" + s.factor + "' was eliminated from the model by pruning");
    }
    if (s.levels.empty()) throw DomainError("swept factor '" + s.factor + "' has no levels");
  }

  ResponseSurface surface;
  surface.fixed = plan.fixed;
  surface.threshold = plan.threshold;
  for (const auto& s : plan.swept) {
    surface.factors.push_back(s.factor);
    surface.marginals.push_back({s.factor, s.levels, std::vector<double>(s.levels.size(), 0.0)});
  }

  const std::size_t rows = plan.row_count();
  std::vector<std::size_t> idx(plan.swept.size(), 0);
  FactorValues values = plan.fixed;
  surface.rows.reserve(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    GridRow row;
    for (std::size_t f = 0; f < plan.swept.size(); ++f) {
      const auto& level = plan.swept[f].levels[idx[f]];
      values[plan.swept[f].factor] = level;
      row.levels.push_back(level);
    }
    row.probability = mlp.predict(values);
    for (std::size_t f = 0; f < plan.swept.size(); ++f) surface.marginals[f].mean_probability[idx[f]] += row.probability;
    surface.rows.push_back(std::move(row));
    for (std::size_t f = plan.swept.size(); f-- > 0;) {
      if (++idx[f] < plan.swept[f].levels.size()) break;
      idx[f] = 0;
    }
  }
  for (std::size_t f = 0; f < plan.swept.size(); ++f) {
    const double per_level = static_cast<double>(rows / plan.swept[f].levels.size());
    for (auto& m : surface.marginals[f].mean_probability) m /= per_level;
  }
  return surface;
}

void write_surface_csv(std::ostream& out, const ResponseSurface& surface) {
  for (const auto& f : surface.factors) out << f << ',';
  out << "probability\n";
  for (const auto& row : surface.rows) {
    for (const auto& v : row.levels) out << format_value(v) << ',';
    out << json(row.probability).dump() << '\n';
  }
}

void write_marginals_csv(std::ostream& out, const ResponseSurface& surface) {
  out << "factor,level,mean_probability\n";
  for (const auto& m : surface.marginals) {
    for (std::size_t k = 0; k < m.levels.size(); ++k) {
      out << m.factor << ',' << format_value(m.levels[k]) << ',' << json(m.mean_probability[k]).dump() << '\n';
    }
  }
}

void write_marginals_svg(std::ostream& out, const ResponseSurface& surface) {
  constexpr double panel_w = 260, panel_h = 200, margin = 40;
  const double width = margin + static_cast<double>(surface.marginals.size()) * (panel_w + margin);
  const double height = panel_h + 2 * margin;
  double ymax = surface.threshold;
  for (const auto& m : surface.marginals) {
    for (double p : m.mean_probability) ymax = std::max(ymax, p);
  }
  ymax = std::min(1.0, ymax * 1.1);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  for (std::size_t f = 0; f < surface.marginals.size(); ++f) {
    const auto& m = surface.marginals[f];
    const double x0 = margin + static_cast<double>(f) * (panel_w + margin);
    const double y0 = margin;
    out << "<rect x=\"" << x0 << "\" y=\"" << y0 << "\" width=\"" << panel_w << "\" height=\"" << panel_h
        << "\" fill=\"none\" stroke=\"#999\"/>\n";
    out << "<text x=\"" << x0 + panel_w / 2 << "\" y=\"" << y0 + panel_h + 25 << "\" text-anchor=\"middle\">"
        << m.factor << "</text>\n";
    const double ty = y0 + panel_h * (1.0 - surface.threshold / ymax);
    out << "<line x1=\"" << x0 << "\" y1=\"" << ty << "\" x2=\"" << x0 + panel_w << "\" y2=\"" << ty
        << "\" stroke=\"#c33\" stroke-dasharray=\"4 3\"/>\n";
    out << "<polyline fill=\"none\" stroke=\"#236\" stroke-width=\"2\" points=\"";
    const std::size_t n = m.mean_probability.size();
    for (std::size_t k = 0; k < n; ++k) {
      const double x = x0 + (n > 1 ? panel_w * static_cast<double>(k) / static_cast<double>(n - 1) : panel_w / 2);
      const double y = y0 + panel_h * (1.0 - m.mean_probability[k] / ymax);
      out << x << ',' << y << ' ';
    }
    out << "\"/>\n";
  }
  out << "<text x=\"" << margin << "\" y=\"20\">mean predicted defect probability per level (dashed: threshold "
      << surface.threshold << ")</text>\n</svg>\n";
}

json plan_to_json(const ExperimentPlan& plan) {
  json swept = json::array();
  for (const auto& s : plan.swept) {
    json levels = json::array();
    for (const auto& v : s.levels) {
      if (const auto* d = std::get_if<double>(&v)) levels.push_back(*d);
      else levels.push_back(std::get<std::string>(v));
    }
    swept.push_back({{"factor", s.factor}, {"levels", levels}});
  }
  return {{"swept", swept}, {"fixed", values_to_json(plan.fixed)}, {"threshold", plan.threshold}};
}

ExperimentPlan plan_from_json(const json& j, const FactorSchema& schema,
                              const std::vector<ProductionRecord>* records) {
  std::vector<SweepSpec> sweeps;
  for (const auto& s : j.at("swept")) {
    SweepSpec spec;
    spec.factor = s.at("factor").get<std::string>();
    spec.level_count = s.value("level_count", std::size_t{10});
    if (s.contains("levels")) {
      for (const auto& v : s.at("levels")) {
        const auto parsed = values_from_json(json{{spec.factor, v}}, schema);
        spec.levels.push_back(parsed.at(spec.factor));
      }
    }
    sweeps.push_back(std::move(spec));
  }
  FixedPolicy policy;
  if (j.contains("fixed")) policy.explicit_values = values_from_json(j.at("fixed"), schema);
  policy.records = records;
  return build_full_factorial(schema, sweeps, policy, j.value("threshold", 0.5));
}

FactorValues fill_from_model(const Mlp& mlp, const FactorSchema& schema, FactorValues values) {
  for (const auto& def : schema.factors()) {
    if (values.count(def.name)) continue;
    if (!def.is_continuous()) {
      values[def.name] = def.states.front();
      continue;
    }
    auto it = mlp.encoding.norms.find(def.name);
    double v = it != mlp.encoding.norms.end() ? it->second.mean : 0.5 * (def.range.min + def.range.max);
    if (def.count) v = std::round(v);
    values[def.name] = std::clamp(v, def.range.min, def.range.max);
  }
  return values;
}

const FactorLimit* ControlLimits::find(std::string_view factor) const {
  for (const auto& l : limits) {
    if (l.factor == factor) return &l;
  }
  return nullptr;
}

ControlLimits compute_limits(const Mlp& mlp, const FactorSchema& schema, const FactorValues& context,
                             double threshold, std::size_t resolution) {
  if (resolution < 2) throw DomainError("grid resolution must be >= 2");
  ControlLimits out;
  out.context = context;
  out.threshold = threshold;
  out.resolution = resolution;
  FactorValues values = context;
  for (const auto& def : schema.factors()) {
    if (def.role != FactorRole::controllable || !def.is_continuous()) continue;
    const auto grid = equally_spaced(def.range, resolution);
    std::size_t best_start = 0, best_len = 0, run_start = 0, run_len = 0;
    for (std::size_t k = 0; k < grid.size(); ++k) {
      values[def.name] = grid[k];
      if (mlp.predict(values) < threshold) {
        if (run_len == 0) run_start = k;
        ++run_len;
        if (run_len > best_len) {
          best_len = run_len;
          best_start = run_start;
        }
      } else {
        run_len = 0;
      }
    }
    if (auto it = context.find(def.name); it != context.end()) {
      values[def.name] = it->second;
    } else {
      values.erase(def.name);
    }
    FactorLimit limit{def.name, std::nullopt};
    if (best_len > 0) {
      limit.interval = Range{std::get<double>(grid[best_start]), std::get<double>(grid[best_start + best_len - 1])};
    }
    out.limits.push_back(std::move(limit));
  }
  return out;
}

std::string_view to_string(LotMode m) { return m == LotMode::warning ? "warning" : "limitation"; }

std::string_view to_string(FactorStatus s) {
  switch (s) {
    case FactorStatus::in_limits: return "in-limits";
    case FactorStatus::out_of_limits_controllable: return "out-of-limits-controllable";
    case FactorStatus::out_of_limits_non_controllable: return "out-of-limits-non-controllable";
  }
  return "?";
}

std::string_view to_string(LotVerdict v) {
  switch (v) {
    case LotVerdict::proceed: return "proceed";
    case LotVerdict::alert: return "alert";
    case LotVerdict::adjust: return "adjust";
    case LotVerdict::reschedule: return "reschedule";
  }
  return "?";
}

LotMode parse_lot_mode(std::string_view text) {
  if (text == "warning") return LotMode::warning;
  if (text == "limitation") return LotMode::limitation;
  throw ParseError("unknown lot mode '" + std::string(text) + "'");
}

LotDecision check_lot(const Mlp& mlp, const FactorSchema& schema, const FactorValues& proposed, LotMode mode,
                      double threshold, std::size_t resolution, const FactorValues* reference) {
  schema.validate(proposed, true);
  LotDecision d;
  d.mode = mode;
  d.threshold = threshold;
  d.risk = mlp.predict(proposed);
  for (const auto& def : schema.factors()) d.factors.push_back({def.name, FactorStatus::in_limits, std::nullopt});

  if (mode == LotMode::warning) {
    d.verdict = is_alert(d.risk, threshold) ? LotVerdict::alert : LotVerdict::proceed;
    return d;
  }

  const ControlLimits limits = compute_limits(mlp, schema, proposed, threshold, resolution);
  std::vector<std::string> empty;
  for (const auto& l : limits.limits) {
    auto& check = *std::find_if(d.factors.begin(), d.factors.end(), [&](const FactorCheck& c) { return c.factor == l.factor; });
    if (!l.interval) {
      empty.push_back(l.factor);
      check.status = FactorStatus::out_of_limits_controllable;
      continue;
    }
    const double v = numeric_value(proposed, l.factor);
    if (v < l.interval->min || v > l.interval->max) {
      check.status = FactorStatus::out_of_limits_controllable;
      check.target = l.interval;
    }
  }

  // A factor with a safe interval elsewhere is the actionable fix.
  for (const auto& c : d.factors) {
    if (c.target) d.adjust.push_back(c.factor);
  }
  if (!d.adjust.empty()) {
    d.verdict = LotVerdict::adjust;
    return d;
  }
  if (empty.empty()) {
    d.verdict = LotVerdict::proceed;
    return d;
  }

  // Nothing can be moved alone. Reschedule if the environment is to blame:
  // some empty interval reopens with the non-controllables at their reference.
  FactorValues ref_context = proposed;
  std::vector<std::string> moved;
  for (const auto& def : schema.factors()) {
    if (def.role != FactorRole::non_controllable) continue;
    FactorValue ref;
    if (reference && reference->count(def.name)) {
      ref = reference->at(def.name);
    } else if (def.is_continuous() && mlp.encoding.norms.count(def.name)) {
      ref = mlp.encoding.norms.at(def.name).mean;
    } else {
      continue;
    }
    if (ref != proposed.at(def.name)) moved.push_back(def.name);
    ref_context[def.name] = ref;
  }
  if (!moved.empty()) {
    const ControlLimits ref_limits = compute_limits(mlp, schema, ref_context, threshold, resolution);
    const bool context_explains = std::any_of(empty.begin(), empty.end(), [&](const std::string& f) {
      const auto* l = ref_limits.find(f);
      return l && l->interval;
    });
    if (context_explains) {
      for (auto& c : d.factors) {
        if (std::find(moved.begin(), moved.end(), c.factor) != moved.end()) {
          c.status = FactorStatus::out_of_limits_non_controllable;
        }
      }
      d.verdict = LotVerdict::reschedule;
      return d;
    }
  }
  d.adjust = empty;
  d.verdict = LotVerdict::adjust;
  return d;
}

namespace {
json range_json(const std::optional<Range>& r) {
  return r ? json::array({r->min, r->max}) : json(nullptr);
}
}  // namespace

void to_json(json& j, const ControlLimits& l) {
  json limits = json::object();
  for (const auto& f : l.limits) limits[f.factor] = range_json(f.interval);
  j = {{"limits", limits},
       {"context", values_to_json(l.context)},
       {"threshold", l.threshold},
       {"resolution", l.resolution}};
}

void to_json(json& j, const LotDecision& d) {
  json factors = json::array();
  for (const auto& c : d.factors) {
    json f = {{"factor", c.factor}, {"status", std::string(to_string(c.status))}};
    if (c.target) f["target"] = range_json(c.target);
    factors.push_back(std::move(f));
  }
  j = {{"mode", std::string(to_string(d.mode))},
       {"risk", d.risk},
       {"threshold", d.threshold},
       {"alert", d.risk >= d.threshold},
       {"factors", factors},
       {"verdict", std::string(to_string(d.verdict))},
       {"adjust", d.adjust}};
}

}  // namespace qcnn
