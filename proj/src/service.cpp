#include "qcnn/service.hpp"

#include <algorithm>
#include <cmath>
#include <optional>

#include <httplib.h>

#include "qcnn/error.hpp"
#include "qcnn/eval.hpp"

namespace qcnn {

using nlohmann::json;

namespace {

struct FieldErrors {
  json errors = json::array();
  void add(const std::string& field, const std::string& message) {
    errors.push_back({{"field", field}, {"message", message}});
  }
  bool empty() const { return errors.empty(); }
};

ServiceResponse ok(const json& j) { return {200, j.dump()}; }

ServiceResponse bad_request(const std::string& message, const json& fields = json::array()) {
  return {400, json{{"error", message}, {"fields", fields}}.dump()};
}

// Parses a values object; every problem is reported against its field.
// `required` lists factors that must be present; other schema factors are
// optional.
FactorValues parse_values(const json& j, const FactorSchema& schema, bool require_all, FieldErrors& errors) {
  FactorValues out;
  if (!j.is_object()) {
    errors.add("values", "expected a JSON object of factor values");
    return out;
  }
  for (const auto& [name, v] : j.items()) {
    const auto idx = schema.index_of(name);
    if (!idx) {
      errors.add(name, "unknown factor");
      continue;
    }
    const auto& def = schema.factors()[*idx];
    if (def.is_continuous()) {
      if (!v.is_number()) {
        errors.add(name, "expected a number");
        continue;
      }
      const double d = v.get<double>();
      if (!std::isfinite(d) || !def.range.contains(d)) {
        errors.add(name, "value " + v.dump() + " outside range [" + json(def.range.min).dump() + ", " +
                             json(def.range.max).dump() + "]");
        continue;
      }
      out[name] = d;
    } else {
      std::string label;
      if (v.is_string()) {
        label = v.get<std::string>();
      } else if (v.is_number_integer()) {
        label = std::to_string(v.get<long long>());
      } else {
        errors.add(name, "expected a state label");
        continue;
      }
      if (!def.has_state(label)) {
        errors.add(name, "unknown state '" + label + "'");
        continue;
      }
      out[name] = label;
    }
  }
  if (require_all) {
    for (const auto& def : schema.factors()) {
      if (!j.is_object() || !j.contains(def.name)) errors.add(def.name, "missing value");
    }
  }
  return out;
}

// Request bodies are either the values object itself or {"values": {...}, ...}.
json values_part(const json& body) {
  if (body.is_object() && body.contains("values")) return body.at("values");
  json copy = body;
  if (copy.is_object()) {
    copy.erase("mode");
    copy.erase("threshold");
  }
  return copy;
}

std::optional<json> parse_body(const std::string& body, ServiceResponse& error) {
  try {
    return json::parse(body.empty() ? std::string("{}") : body);
  } catch (const json::exception& e) {
    error = bad_request(std::string("malformed JSON: ") + e.what());
    return std::nullopt;
  }
}

}  // namespace

ModelService::ModelService(FactorSchema schema, Mlp model, ServiceOptions options) : options_(options) {
  check_threshold(options_.threshold);
  if (!model.schema_fingerprint.empty() && model.schema_fingerprint != schema.fingerprint()) {
    throw SchemaError("model was trained on a different schema (fingerprint " + model.schema_fingerprint +
                      ", schema " + schema.fingerprint() + ")");
  }
  current_ = std::make_shared<const Snapshot>(Snapshot{std::move(schema), std::move(model)});
}

std::shared_ptr<const ModelService::Snapshot> ModelService::snapshot() const {
  std::lock_guard lock(mutex_);
  return current_;
}

void ModelService::replace_model(Mlp model) {
  auto snap = snapshot();
  if (!model.schema_fingerprint.empty() && model.schema_fingerprint != snap->schema.fingerprint()) {
    throw SchemaError("model was trained on a different schema");
  }
  auto next = std::make_shared<const Snapshot>(Snapshot{snap->schema, std::move(model)});
  std::lock_guard lock(mutex_);
  current_ = std::move(next);
}

ServiceResponse ModelService::schema() const { return ok(json(snapshot()->schema)); }

ServiceResponse ModelService::predict(const std::string& body) const {
  ServiceResponse err;
  auto j = parse_body(body, err);
  if (!j) return err;
  const auto snap = snapshot();
  FieldErrors errors;
  const auto values = parse_values(values_part(*j), snap->schema, true, errors);
  if (!errors.empty()) return bad_request("invalid factor values", errors.errors);
  const double p = snap->model.predict(values);
  return ok({{"probability", p}, {"alert", is_alert(p, options_.threshold)}, {"threshold", options_.threshold}});
}

ServiceResponse ModelService::limits(const std::string& body) const {
  ServiceResponse err;
  auto j = parse_body(body, err);
  if (!j) return err;
  const auto snap = snapshot();
  FieldErrors errors;
  FactorValues context = parse_values(values_part(*j), snap->schema, false, errors);
  // Non-controllable and protocol factors define the context and are required.
  for (const auto& def : snap->schema.factors()) {
    if (def.role == FactorRole::controllable || context.count(def.name)) continue;
    if (!values_part(*j).is_object() || !values_part(*j).contains(def.name)) errors.add(def.name, "missing value");
  }
  if (!errors.empty()) return bad_request("invalid context values", errors.errors);
  // Controllable factors not given sit at their training means while the
  // others are scanned.
  context = fill_from_model(snap->model, snap->schema, std::move(context));
  return ok(json(compute_limits(snap->model, snap->schema, context, options_.threshold, options_.resolution)));
}

ServiceResponse ModelService::check(const std::string& body) const {
  ServiceResponse err;
  auto j = parse_body(body, err);
  if (!j) return err;
  const auto snap = snapshot();
  FieldErrors errors;
  LotMode mode = options_.default_mode;
  if (j->is_object() && j->contains("mode")) {
    try {
      mode = parse_lot_mode(j->at("mode").is_string() ? j->at("mode").get<std::string>() : "");
    } catch (const Error&) {
      errors.add("mode", "expected \"warning\" or \"limitation\"");
    }
  }
  const auto values = parse_values(values_part(*j), snap->schema, true, errors);
  if (!errors.empty()) return bad_request("invalid lot", errors.errors);
  return ok(json(check_lot(snap->model, snap->schema, values, mode, options_.threshold, options_.resolution)));
}

ServiceResponse ModelService::reload(const std::string& body) {
  ServiceResponse err;
  auto j = parse_body(body, err);
  if (!j) return err;
  if (!j->is_object() || !j->contains("model") || !j->at("model").is_string()) {
    return bad_request("reload needs {\"model\": \"<path>\"}", json::array({{{"field", "model"}, {"message", "missing path"}}}));
  }
  try {
    replace_model(load_model(j->at("model").get<std::string>()));
  } catch (const Error& e) {
    return {422, json{{"error", e.what()}}.dump()};
  }
  const auto snap = snapshot();
  return ok({{"reloaded", true}, {"defect_name", snap->model.defect_name}});
}

void ModelService::mount(httplib::Server& server) {
  auto reply = [](httplib::Response& res, const ServiceResponse& r) {
    res.status = r.status;
    res.set_content(r.body, "application/json");
  };
  server.Get("/api/schema", [this, reply](const httplib::Request&, httplib::Response& res) { reply(res, schema()); });
  server.Post("/api/predict",
              [this, reply](const httplib::Request& req, httplib::Response& res) { reply(res, predict(req.body)); });
  server.Post("/api/limits",
              [this, reply](const httplib::Request& req, httplib::Response& res) { reply(res, limits(req.body)); });
  server.Post("/api/check",
              [this, reply](const httplib::Request& req, httplib::Response& res) { reply(res, check(req.body)); });
  server.Post("/api/reload",
              [this, reply](const httplib::Request& req, httplib::Response& res) { reply(res, reload(req.body)); });
  server.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
    std::string message = "internal error";
    try {
      if (ep) std::rethrow_exception(ep);
    } catch (const std::exception& e) {
      message = e.what();
    }
    res.status = 500;
    res.set_content(json{{"error", message}}.dump(), "application/json");
  });
}

}  // namespace qcnn
