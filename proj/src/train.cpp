#include "qcnn/train.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <ostream>
#include <thread>

namespace qcnn {

using nlohmann::json;

RobustConfig TrainConfig::default_robust() {
  RobustConfig r = RobustConfig::bisquare();
  r.min_scale = 0.25;
  r.warmup_iterations = 30;
  return r;
}

void TrainConfig::validate() const {
  if (n1_initial < 1) throw DomainError("n1_initial must be >= 1");
  if (restarts < 1) throw DomainError("restarts must be >= 1");
  lm.validate();
}

void to_json(json& j, const TrainConfig& c) {
  j = {{"n1_initial", c.n1_initial}, {"restarts", c.restarts}, {"lm", c.lm},
       {"robust", c.robust},         {"master_seed", c.master_seed}, {"threads", c.threads}};
}

void from_json(const json& j, TrainConfig& c) {
  c = TrainConfig{};
  c.n1_initial = j.value("n1_initial", c.n1_initial);
  c.restarts = j.value("restarts", c.restarts);
  c.master_seed = j.value("master_seed", c.master_seed);
  c.threads = j.value("threads", c.threads);
  c.lm = j.contains("lm") ? j.at("lm").get<LmSettings>() : j.get<LmSettings>();
  if (j.contains("robust")) {
    const auto& r = j.at("robust");
    // Start from the project defaults so a config naming only the estimator
    // keeps the scale floor and warm-up.
    json merged = json(TrainConfig::default_robust());
    if (r.contains("estimator") && !r.contains("tuning")) merged.erase("tuning");
    merged.update(r);
    c.robust = merged.get<RobustConfig>();
  }
  c.validate();
}

TrainConfig load_train_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open config file '" + path + "'");
  try {
    return json::parse(in).get<TrainConfig>();
  } catch (const json::exception& e) {
    throw ParseError("config file '" + path + "': " + e.what());
  }
}

void to_json(json& j, const RestartOutcome& r) {
  j = {{"seed", r.seed},
       {"train_criterion", r.train_criterion},
       {"validation_criterion", r.validation_criterion},
       {"iterations", r.iterations},
       {"converged", r.converged},
       {"broke_down", r.broke_down}};
  // JSON has no infinity; a broken-down restart reports null criteria.
  if (!std::isfinite(r.train_criterion)) j["train_criterion"] = nullptr;
  if (!std::isfinite(r.validation_criterion)) j["validation_criterion"] = nullptr;
}

void to_json(json& j, const TrainReport& r) {
  j = {{"restarts", r.restarts}, {"best_index", r.best_index}, {"best_trace", r.best_trace}};
}

void write_table(std::ostream& out, const TrainReport& report) {
  out << "restart  seed                  train_crit      valid_crit      iters  converged\n";
  for (std::size_t i = 0; i < report.restarts.size(); ++i) {
    const auto& r = report.restarts[i];
    out << std::setw(7) << i << "  " << std::setw(20) << r.seed << "  " << std::scientific << std::setprecision(6)
        << std::setw(14) << r.train_criterion << "  " << std::setw(14) << r.validation_criterion << "  "
        << std::defaultfloat << std::setw(5) << r.iterations << "  "
        << (r.broke_down ? "breakdown" : (r.converged ? "yes" : "no")) << (i == report.best_index ? "  <- best" : "")
        << '\n';
  }
}

double nguyen_widrow_beta(std::size_t n0, std::size_t n1) {
  return 0.7 * std::pow(static_cast<double>(n1), 1.0 / static_cast<double>(n0));
}

Mlp nguyen_widrow_init(std::size_t n0, std::size_t n1, Rng& rng) {
  Mlp mlp(n0, n1);
  const double beta = nguyen_widrow_beta(n0, n1);
  for (std::size_t i = 0; i < n1; ++i) {
    std::vector<double> row(n0);
    double norm2 = 0.0;
    do {
      norm2 = 0.0;
      for (auto& v : row) {
        v = rng.uniform(-0.5, 0.5);
        norm2 += v * v;
      }
    } while (norm2 == 0.0);
    const double scale = beta / std::sqrt(norm2);
    for (std::size_t h = 0; h < n0; ++h) mlp.set_param(mlp.hidden_weight_index(i, h), row[h] * scale);
  }
  for (std::size_t i = 0; i < n1; ++i) mlp.set_param(mlp.hidden_bias_index(i), rng.uniform(-beta, beta));
  for (std::size_t i = 0; i < n1; ++i) mlp.set_param(mlp.output_weight_index(i), rng.uniform(-0.5, 0.5));
  mlp.set_param(mlp.output_bias_index(), rng.uniform(-0.5, 0.5));
  return mlp;
}

LmStepResult lm_step(const Mlp& mlp, const Eigen::MatrixXd& inputs, const Eigen::VectorXd& targets,
                     const Eigen::VectorXd& sample_weights, double lambda) {
  if (!(lambda > 0.0)) throw DomainError("lm_step: lambda must be > 0");
  if (inputs.rows() != targets.size() || targets.size() != sample_weights.size()) {
    throw DimensionError("lm_step: inputs, targets and weights differ in length");
  }
  const Eigen::VectorXd e = targets - mlp.forward_batch(inputs);
  Eigen::MatrixXd A;
  Eigen::VectorXd g;
  normal_equations(mlp.jacobian_wrt_params(inputs), e, sample_weights, A, g);
  LmStepResult out{mlp, 0.0};
  // Zero residuals give g = 0 and therefore a zero step.
  if (g.isZero(0.0)) {
    out.criterion = weighted_criterion(e, sample_weights);
    return out;
  }
  const Eigen::VectorXd delta = damped_step(A, g, lambda);
  out.candidate.set_active_params(mlp.active_params() + delta);
  out.criterion = weighted_criterion(targets - out.candidate.forward_batch(inputs), sample_weights);
  return out;
}

LmOutcome refine(Mlp& mlp, const EncodedDataset& data, const LmSettings& settings, const RobustConfig& robust) {
  MlpProblem problem(mlp, data.inputs, data.targets);
  LmOutcome outcome = levenberg_marquardt(problem, mlp.active_params(), settings, robust);
  mlp.set_active_params(outcome.params);
  return outcome;
}

Eigen::VectorXd residuals(const Mlp& mlp, const EncodedDataset& data) {
  return data.targets - mlp.forward_batch(data.inputs);
}

double criterion(const Mlp& mlp, const EncodedDataset& data, const RobustConfig& robust) {
  const Eigen::VectorXd e = residuals(mlp, data);
  return weighted_criterion(e, robust_weights(e, robust));
}

double validation_criterion(const Mlp& mlp, const EncodedDataset& data) {
  return residuals(mlp, data).squaredNorm() / static_cast<double>(data.size());
}

namespace {

struct RestartResult {
  RestartOutcome outcome;
  Mlp model;
  std::vector<double> trace;
};

RestartResult run_restart(const EncodedDataset& ident, const EncodedDataset& valid, const TrainConfig& config,
                          std::size_t index) {
  RestartResult r;
  r.outcome.seed = mix_seed(config.master_seed + index);
  Rng rng(r.outcome.seed);
  r.model = nguyen_widrow_init(ident.inputs.cols() > 0 ? static_cast<std::size_t>(ident.inputs.cols()) : 1,
                               config.n1_initial, rng);
  try {
    const LmOutcome lm = refine(r.model, ident, config.lm, config.robust);
    r.outcome.train_criterion = lm.criterion;
    r.outcome.iterations = lm.iterations;
    r.outcome.converged = lm.converged;
    for (const auto& s : lm.steps) r.trace.push_back(s.after);
    r.outcome.validation_criterion = validation_criterion(r.model, valid);
    if (!std::isfinite(r.outcome.validation_criterion)) {
      r.outcome.validation_criterion = std::numeric_limits<double>::infinity();
    }
  } catch (const LmBreakdown&) {
    r.outcome.broke_down = true;
    r.outcome.train_criterion = std::numeric_limits<double>::infinity();
    r.outcome.validation_criterion = std::numeric_limits<double>::infinity();
  }
  return r;
}

}  // namespace

TrainResult train(const EncodedDataset& identification, const EncodedDataset& validation, const TrainConfig& config) {
  config.validate();
  if (identification.size() == 0 || validation.size() == 0) throw DomainError("train: empty dataset");
  if (identification.inputs.cols() != validation.inputs.cols()) {
    throw DimensionError("train: identification and validation sets differ in input width");
  }

  std::vector<RestartResult> results(config.restarts);
  std::size_t threads = config.threads == 0 ? std::max(1u, std::thread::hardware_concurrency()) : config.threads;
  threads = std::min(threads, config.restarts);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < config.restarts; i = next++) {
      results[i] = run_restart(identification, validation, config, i);
    }
  };
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
  }

  TrainReport report;
  std::size_t best = 0;
  for (std::size_t i = 0; i < results.size(); ++i) {
    report.restarts.push_back(results[i].outcome);
    if (results[i].outcome.validation_criterion < results[best].outcome.validation_criterion) best = i;
  }
  report.best_index = best;
  if (results[best].outcome.broke_down) throw TrainingFailed("LM breakdown in every restart", std::move(report));
  report.best_trace = results[best].trace;

  TrainResult out{std::move(results[best].model), std::move(report)};
  out.model.defect_name = identification.defect_name;
  out.model.encoding = identification.encoding;
  return out;
}

}  // namespace qcnn
