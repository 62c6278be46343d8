#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "qcnn/data.hpp"
#include "qcnn/doe.hpp"
#include "qcnn/error.hpp"
#include "qcnn/eval.hpp"
#include "qcnn/net.hpp"
#include "qcnn/prune.hpp"
#include "qcnn/schema.hpp"
#include "qcnn/service.hpp"
#include "qcnn/synth.hpp"
#include "qcnn/train.hpp"

// After Eigen: <resolv.h> defines a `_res` macro.
#include <httplib.h>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace qcnn;

namespace {

// Raised for file-system problems so they share the one-line error format.
class IoError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "io"; }
};

json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ParseError("'" + path + "': " + e.what());
  }
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory '" + dir + "': " + ec.message());
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  return out;
}

void write_json(const fs::path& path, const json& j) { open_out(path) << j.dump(2) << '\n'; }

// JSON to a file when `out` is set, otherwise to stdout.
void emit_json(const std::string& out, const json& j) {
  if (out.empty()) {
    std::cout << j.dump(2) << '\n';
  } else {
    write_json(out, j);
  }
}

Mlp load_checked_model(const std::string& path, const FactorSchema& schema) {
  Mlp mlp = load_model(path);
  if (!mlp.schema_fingerprint.empty() && mlp.schema_fingerprint != schema.fingerprint()) {
    throw SchemaError("model '" + path + "' was trained on a different schema");
  }
  return mlp;
}

// Options shared by the commands that rebuild the identification/validation
// split from a CSV file.
struct SplitOptions {
  std::string data;
  std::string schema;
  std::string defect;
  std::size_t identification = 0;  // 0 = the 1202/2270 proportion
  std::string mode = "chronological";
  std::uint64_t split_seed = 0;
};

void add_split_options(CLI::App* cmd, SplitOptions& o) {
  cmd->add_option("--data", o.data, "production records CSV")->required();
  cmd->add_option("--schema", o.schema, "factor schema JSON")->required();
  cmd->add_option("--defect", o.defect, "defect column (default: the model's or the first in the file)");
  cmd->add_option("--identification", o.identification, "identification rows (default: 1202/2270 of the data)");
  cmd->add_option("--split", o.mode, "chronological or random")->check(CLI::IsMember({"chronological", "random"}));
  cmd->add_option("--split-seed", o.split_seed, "shuffle seed for --split random");
}

struct Prepared {
  FactorSchema schema;
  std::vector<ProductionRecord> records;  // cleaned, split order
  std::vector<Rejection> rejections;
  std::string defect;
  std::vector<std::size_t> ident_rows;
  std::vector<std::size_t> valid_rows;
};

Prepared prepare(const SplitOptions& o, const std::string& model_defect = {}) {
  Prepared p;
  p.schema = load_schema(o.schema);
  auto records = load_records(o.data, p.schema);
  if (o.mode == "chronological") records = sort_chronologically(std::move(records));
  auto cleaned = clean(records, p.schema, CleanRules::from_schema(p.schema));
  p.records = std::move(cleaned.kept);
  p.rejections = std::move(cleaned.log);
  if (p.records.size() < 2) throw DomainError("fewer than two usable records");
  p.defect = !o.defect.empty() ? o.defect : model_defect;
  if (p.defect.empty()) {
    if (p.records.front().defect_flags.empty()) throw SchemaError("data has no defect column");
    p.defect = p.records.front().defect_flags.begin()->first;
  }
  std::size_t n_ident = o.identification;
  if (n_ident == 0) {
    n_ident = static_cast<std::size_t>(std::llround(static_cast<double>(p.records.size()) * 1202.0 / 2270.0));
  }
  SplitSpec spec{o.mode == "chronological" ? SplitMode::chronological : SplitMode::seeded_random, n_ident,
                 o.split_seed};
  std::tie(p.ident_rows, p.valid_rows) = split_indices(p.records.size(), spec);
  return p;
}

std::vector<ProductionRecord> pick(const std::vector<ProductionRecord>& records, const std::vector<std::size_t>& rows) {
  std::vector<ProductionRecord> out;
  out.reserve(rows.size());
  for (auto r : rows) out.push_back(records[r]);
  return out;
}

// ---------------------------------------------------------------------------

int cmd_synth(const std::string& spec_path, std::optional<std::uint64_t> seed, std::size_t count,
              std::size_t outliers, const std::string& out) {
  SyntheticProcessSpec spec = spec_path.empty() ? SyntheticProcessSpec::lacquering_default() : load_synth_spec(spec_path);
  if (seed) spec.seed = *seed;
  spec.validate();
  ensure_dir(out);
  const fs::path dir(out);
  std::vector<ProductionRecord> records;
  if (outliers > 0) {
    auto g = generate_with_outliers(spec, count, outliers);
    records = std::move(g.records);
    json rows = g.outlier_rows;
    write_json(dir / "outlier_rows.json", rows);
  } else {
    records = generate(spec, count);
  }
  {
    auto f = open_out(dir / "records.csv");
    write_records(f, spec.schema, records);
  }
  write_json(dir / "schema.json", json(spec.schema));
  write_json(dir / "synth_spec.json", json(spec));
  // The generator's own risk function as a model file, when it has one.
  try {
    Mlp oracle = exact_surrogate(spec, uniform_encoding(spec.schema));
    oracle.schema_fingerprint = spec.schema.fingerprint();
    save_model(oracle, (dir / "oracle_model.json").string());
  } catch (const DomainError&) {
  }
  std::cout << "wrote " << records.size() << " records to " << (dir / "records.csv").string() << '\n';
  return 0;
}

int cmd_train(const SplitOptions& so, const std::string& config_path, std::optional<std::uint64_t> seed,
              std::optional<std::size_t> threads, const std::string& out) {
  TrainConfig config = config_path.empty() ? TrainConfig{} : load_train_config(config_path);
  if (seed) config.master_seed = *seed;
  if (threads) config.threads = *threads;
  config.validate();
  const Prepared p = prepare(so);
  const auto ident = encode(pick(p.records, p.ident_rows), p.schema, p.defect);
  const auto valid = encode(pick(p.records, p.valid_rows), p.schema, p.defect, ident.encoding.norms);

  ensure_dir(out);
  const fs::path dir(out);
  {
    auto f = open_out(dir / "rejections.csv");
    write_rejection_log(f, p.rejections);
  }
  TrainResult result;
  try {
    result = train(ident, valid, config);
  } catch (const TrainingFailed& e) {
    write_json(dir / "train_report.json", json(e.report()));
    throw;
  }
  result.model.schema_fingerprint = p.schema.fingerprint();
  save_model(result.model, (dir / "model.json").string());
  write_json(dir / "train_report.json", json(result.report));
  {
    auto f = open_out(dir / "train_report.txt");
    write_table(f, result.report);
  }
  write_table(std::cout, result.report);
  return 0;
}

int cmd_prune(const SplitOptions& so, const std::string& model_path, const std::string& config_path,
              const std::string& out) {
  PruneConfig config = config_path.empty() ? PruneConfig{} : read_json(config_path).get<PruneConfig>();
  const Prepared p = prepare(so, load_model(model_path).defect_name);
  const Mlp mlp = load_checked_model(model_path, p.schema);
  const auto ident = encode(pick(p.records, p.ident_rows), p.schema, p.defect, mlp.encoding.norms);
  const auto valid = encode(pick(p.records, p.valid_rows), p.schema, p.defect, mlp.encoding.norms);
  if (ident.encoding.columns != mlp.encoding.columns) throw SchemaError("model columns do not match the data");

  auto result = prune(mlp, ident, valid, config);
  ensure_dir(out);
  const fs::path dir(out);
  save_model(result.model, (dir / "pruned_model.json").string());
  write_json(dir / "prune_report.json", json(result.report));
  {
    auto f = open_out(dir / "prune_report.txt");
    write_table(f, result.report);
  }
  write_table(std::cout, result.report);
  return 0;
}

int cmd_eval(const SplitOptions& so, const std::string& model_path, double threshold, const std::string& out) {
  check_threshold(threshold);
  const FactorSchema schema = load_schema(so.schema);
  const Mlp mlp = load_checked_model(model_path, schema);
  auto records = load_records(so.data, schema);
  if (so.mode == "chronological") records = sort_chronologically(std::move(records));
  // Evaluate everything after the first `identification` rows (all rows by default).
  if (so.identification >= records.size() && so.identification > 0) {
    throw DomainError("--identification leaves no rows to evaluate");
  }
  records.erase(records.begin(), records.begin() + static_cast<std::ptrdiff_t>(so.identification));
  const std::string defect = so.defect.empty() ? mlp.defect_name : so.defect;
  const auto data = encode(records, schema, defect, mlp.encoding.norms);
  const auto report = evaluate(mlp, data, threshold);

  ensure_dir(out);
  const fs::path dir(out);
  write_json(dir / "eval_report.json", json(report));
  {
    auto f = open_out(dir / "eval_report.txt");
    write_text(f, report);
  }
  {
    auto f = open_out(dir / "predictions.csv");
    write_predictions(f, mlp, data, threshold);
  }
  write_text(std::cout, report);
  return 0;
}

int cmd_plan(const std::string& schema_path, const std::string& model_path, const std::string& plan_path,
             const std::string& data_path, std::optional<double> threshold, const std::string& out) {
  const FactorSchema schema = load_schema(schema_path);
  const Mlp mlp = load_checked_model(model_path, schema);
  json spec = read_json(plan_path);
  if (threshold) spec["threshold"] = *threshold;
  std::vector<ProductionRecord> records;
  if (!data_path.empty()) {
    records = load_records(data_path, schema);
  } else {
    // Without data, continuous factors left unfixed sit at the training means.
    json fixed = spec.value("fixed", json::object());
    FactorValues given = values_from_json(fixed, schema);
    std::vector<std::string> swept;
    for (const auto& s : spec.at("swept")) swept.push_back(s.at("factor").get<std::string>());
    FactorValues filled = fill_from_model(mlp, schema, given);
    for (const auto& [name, v] : filled) {
      const bool is_swept = std::find(swept.begin(), swept.end(), name) != swept.end();
      if (!is_swept && schema.at(name).is_continuous() && !given.count(name)) given[name] = v;
    }
    spec["fixed"] = values_to_json(given);
  }
  const ExperimentPlan plan = plan_from_json(spec, schema, records.empty() ? nullptr : &records);
  const ResponseSurface surface = evaluate_plan(mlp, plan);

  ensure_dir(out);
  const fs::path dir(out);
  write_json(dir / "plan.json", plan_to_json(plan));
  {
    auto f = open_out(dir / "surface.csv");
    write_surface_csv(f, surface);
  }
  {
    auto f = open_out(dir / "marginals.csv");
    write_marginals_csv(f, surface);
  }
  {
    auto f = open_out(dir / "marginals.svg");
    write_marginals_svg(f, surface);
  }
  std::cout << "evaluated " << surface.rows.size() << " plan rows into " << dir.string() << '\n';
  return 0;
}

int cmd_limits(const std::string& schema_path, const std::string& model_path, const std::string& context_path,
               double threshold, std::size_t resolution, const std::string& out) {
  check_threshold(threshold);
  const FactorSchema schema = load_schema(schema_path);
  const Mlp mlp = load_checked_model(model_path, schema);
  json ctx = read_json(context_path);
  if (ctx.is_object() && ctx.contains("values")) ctx = ctx.at("values");
  FactorValues context = values_from_json(ctx, schema);
  for (const auto& def : schema.factors()) {
    if (def.role != FactorRole::controllable && !context.count(def.name)) {
      throw SchemaError("context is missing '" + def.name + "'");
    }
  }
  context = fill_from_model(mlp, schema, std::move(context));
  emit_json(out, json(compute_limits(mlp, schema, context, threshold, resolution)));
  return 0;
}

int cmd_check(const std::string& schema_path, const std::string& model_path, const std::string& lot_path,
              const std::string& mode_text, double threshold, std::size_t resolution, const std::string& out) {
  check_threshold(threshold);
  const FactorSchema schema = load_schema(schema_path);
  const Mlp mlp = load_checked_model(model_path, schema);
  json lot = read_json(lot_path);
  std::string mode_name = mode_text;
  if (lot.is_object() && lot.contains("values")) {
    if (mode_name.empty() && lot.contains("mode")) mode_name = lot.at("mode").get<std::string>();
    lot = lot.at("values");
  }
  const LotMode mode = parse_lot_mode(mode_name.empty() ? "limitation" : mode_name);
  const FactorValues values = values_from_json(lot, schema);
  schema.validate(values, true);
  emit_json(out, json(check_lot(mlp, schema, values, mode, threshold, resolution)));
  return 0;
}

int cmd_serve(const std::string& schema_path, const std::string& model_path, const std::string& host, int port,
              double threshold, const std::string& mode_text, std::size_t resolution) {
  ServiceOptions options;
  options.threshold = threshold;
  options.default_mode = parse_lot_mode(mode_text);
  options.resolution = resolution;
  ModelService service(load_schema(schema_path), load_model(model_path), options);
  httplib::Server server;
  service.mount(server);
  if (!server.bind_to_port(host, port)) throw IoError("cannot bind " + host + ":" + std::to_string(port));
  std::cout << "serving " << model_path << " on http://" << host << ':' << port << std::endl;
  server.listen_after_bind();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Defect-risk surrogate: synthesize, train, prune, evaluate, plan and serve"};
  app.require_subcommand(1);

  std::string out, schema_path, model_path, config_path, mode = "limitation", host = "127.0.0.1";
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> threads;
  std::optional<double> plan_threshold;
  double threshold = kDefaultThreshold;
  std::size_t resolution = kDefaultResolution;
  int port = 8080;
  SplitOptions split;

  auto* synth = app.add_subcommand("synth", "generate a synthetic production history");
  std::string spec_path;
  std::size_t count = 2270, outliers = 0;
  synth->add_option("--spec", spec_path, "synthetic process JSON (default: lacquering line)");
  synth->add_option("--seed", seed, "generator seed");
  synth->add_option("--count", count, "number of records");
  synth->add_option("--outliers", outliers, "rows pushed outside the schema ranges");
  synth->add_option("--out", out, "output directory")->required();

  auto* train_cmd = app.add_subcommand("train", "fit the network with multi-start robust LM");
  add_split_options(train_cmd, split);
  train_cmd->add_option("--config", config_path, "training config JSON");
  train_cmd->add_option("--seed", seed, "master seed");
  train_cmd->add_option("--threads", threads, "worker threads (0 = all cores)");
  train_cmd->add_option("--out", out, "output directory")->required();

  auto* prune_cmd = app.add_subcommand("prune", "eliminate parameters, neurons and inputs");
  add_split_options(prune_cmd, split);
  prune_cmd->add_option("--model", model_path, "model JSON")->required();
  prune_cmd->add_option("--config", config_path, "prune config JSON");
  prune_cmd->add_option("--out", out, "output directory")->required();

  auto* eval_cmd = app.add_subcommand("eval", "detection rates on a CSV file");
  eval_cmd->add_option("--data", split.data, "production records CSV")->required();
  eval_cmd->add_option("--schema", split.schema, "factor schema JSON")->required();
  eval_cmd->add_option("--model", model_path, "model JSON")->required();
  eval_cmd->add_option("--defect", split.defect, "defect column (default: the model's)");
  eval_cmd->add_option("--identification", split.identification, "skip this many leading rows");
  eval_cmd->add_option("--split", split.mode, "row order: chronological or random (file order)")
      ->check(CLI::IsMember({"chronological", "random"}));
  eval_cmd->add_option("--threshold", threshold, "alert threshold");
  eval_cmd->add_option("--out", out, "output directory")->required();

  auto* plan_cmd = app.add_subcommand("plan", "virtual full-factorial experiment");
  std::string plan_path, data_path;
  plan_cmd->add_option("--schema", schema_path, "factor schema JSON")->required();
  plan_cmd->add_option("--model", model_path, "model JSON")->required();
  plan_cmd->add_option("--plan", plan_path, "plan JSON")->required();
  plan_cmd->add_option("--data", data_path, "records used to fix non-swept factors");
  plan_cmd->add_option("--threshold", plan_threshold, "alert threshold");
  plan_cmd->add_option("--out", out, "output directory")->required();

  auto* limits_cmd = app.add_subcommand("limits", "per-factor control limits for a context");
  std::string context_path;
  limits_cmd->add_option("--schema", schema_path, "factor schema JSON")->required();
  limits_cmd->add_option("--model", model_path, "model JSON")->required();
  limits_cmd->add_option("--context", context_path, "non-controllable and protocol values JSON")->required();
  limits_cmd->add_option("--threshold", threshold, "alert threshold");
  limits_cmd->add_option("--resolution", resolution, "scan points per factor");
  limits_cmd->add_option("--out", out, "output file (default: stdout)");

  auto* check_cmd = app.add_subcommand("check", "decide on a proposed lot");
  std::string lot_path;
  std::string check_mode;
  check_cmd->add_option("--schema", schema_path, "factor schema JSON")->required();
  check_cmd->add_option("--model", model_path, "model JSON")->required();
  check_cmd->add_option("--lot", lot_path, "lot values JSON")->required();
  check_cmd->add_option("--mode", check_mode, "warning or limitation")->check(CLI::IsMember({"warning", "limitation"}));
  check_cmd->add_option("--threshold", threshold, "alert threshold");
  check_cmd->add_option("--resolution", resolution, "scan points per factor");
  check_cmd->add_option("--out", out, "output file (default: stdout)");

  auto* serve_cmd = app.add_subcommand("serve", "HTTP service over a model");
  serve_cmd->add_option("--schema", schema_path, "factor schema JSON")->required();
  serve_cmd->add_option("--model", model_path, "model JSON")->required();
  serve_cmd->add_option("--host", host, "bind address");
  serve_cmd->add_option("--port", port, "port");
  serve_cmd->add_option("--threshold", threshold, "alert threshold");
  serve_cmd->add_option("--mode", mode, "default lot mode")->check(CLI::IsMember({"warning", "limitation"}));
  serve_cmd->add_option("--resolution", resolution, "scan points per factor");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*synth) return cmd_synth(spec_path, seed, count, outliers, out);
    if (*train_cmd) return cmd_train(split, config_path, seed, threads, out);
    if (*prune_cmd) return cmd_prune(split, model_path, config_path, out);
    if (*eval_cmd) return cmd_eval(split, model_path, threshold, out);
    if (*plan_cmd) return cmd_plan(schema_path, model_path, plan_path, data_path, plan_threshold, out);
    if (*limits_cmd) return cmd_limits(schema_path, model_path, context_path, threshold, resolution, out);
    if (*check_cmd) return cmd_check(schema_path, model_path, lot_path, check_mode, threshold, resolution, out);
    if (*serve_cmd) return cmd_serve(schema_path, model_path, host, port, threshold, mode, resolution);
  } catch (const Error& e) {
    std::cerr << "error: " << e.kind() << ": " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: internal: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
