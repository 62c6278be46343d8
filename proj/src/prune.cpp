#include "qcnn/prune.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <ostream>

#include "qcnn/error.hpp"
#include "qcnn/train.hpp"

namespace qcnn {

using nlohmann::json;

void PruneConfig::validate() const {
  if (!(tolerance >= 0.0)) throw DomainError("prune tolerance must be >= 0");
  if (retrain_iterations < 0) throw DomainError("retrain_iterations must be >= 0");
  if (min_hidden < 1) throw DomainError("min_hidden must be >= 1");
}

void to_json(json& j, const PruneConfig& c) {
  j = {{"tolerance", c.tolerance}, {"retrain_iterations", c.retrain_iterations}, {"min_hidden", c.min_hidden},
       {"lm", c.lm},               {"robust", c.robust}};
}

void from_json(const json& j, PruneConfig& c) {
  c = PruneConfig{};
  c.tolerance = j.value("tolerance", c.tolerance);
  c.retrain_iterations = j.value("retrain_iterations", c.retrain_iterations);
  c.min_hidden = j.value("min_hidden", c.min_hidden);
  if (j.contains("lm")) c.lm = j.at("lm").get<LmSettings>();
  if (j.contains("robust")) {
    json merged = json(TrainConfig::default_robust());
    if (j.at("robust").contains("estimator") && !j.at("robust").contains("tuning")) merged.erase("tuning");
    merged.update(j.at("robust"));
    c.robust = merged.get<RobustConfig>();
  }
  c.validate();
}

namespace {

double weighted_sse(const Eigen::ArrayXd& a, const Eigen::VectorXd& y, const Eigen::VectorXd& w) {
  double s = 0.0;
  for (Eigen::Index k = 0; k < a.size(); ++k) {
    const double e = y[k] - logistic(a[k]);
    s += w[k] * e * e;
  }
  return s / static_cast<double>(a.size());
}

// One-hot columns of a group sum to 1, so adding k to each of a neuron's group
// weights and subtracting k from its bias leaves the function unchanged. When
// the whole group and the bias are active, a group weight is removed along that
// direction. Returns the group's columns in that case.
std::vector<std::size_t> one_hot_group(const Mlp& mlp, std::size_t p) {
  const std::size_t n0 = mlp.n_inputs();
  if (p >= mlp.n_hidden() * n0 || n0 != mlp.encoding.width()) return {};
  const std::size_t i = p / n0;
  const auto& col = mlp.encoding.columns[p % n0];
  if (!col.state || !mlp.active(mlp.hidden_bias_index(i))) return {};
  auto group = mlp.encoding.columns_of(col.factor);
  for (auto c : group) {
    if (!mlp.active(mlp.hidden_weight_index(i, c))) return {};
  }
  return group;
}

// Whether removing `p` is allowed given the min_hidden floor.
bool prunable(const Mlp& mlp, std::size_t p, std::size_t min_hidden) {
  if (p == mlp.output_bias_index()) return false;
  if (mlp.alive_neurons() > min_hidden) return true;
  const std::size_t n0 = mlp.n_inputs();
  const std::size_t n1 = mlp.n_hidden();
  if (p >= n1 * n0 + n1) return false;  // an output weight would kill a neuron
  if (p < n1 * n0) {
    const std::size_t neuron = p / n0;
    std::size_t remaining = 0;
    for (std::size_t h = 0; h < n0; ++h) remaining += mlp.active(mlp.hidden_weight_index(neuron, h)) ? 1 : 0;
    return remaining > 1;  // the last input weight would fold the neuron away
  }
  return true;
}

std::vector<Saliency> saliency_impl(const Mlp& mlp, const EncodedDataset& data, const Eigen::VectorXd& w,
                                    std::size_t min_hidden) {
  if (w.size() != static_cast<Eigen::Index>(data.size())) throw DimensionError("saliency: weight count mismatch");
  const auto n0 = mlp.n_inputs();
  const auto n1 = mlp.n_hidden();
  const Eigen::MatrixXd& X = data.inputs;
  const auto N = X.rows();
  Eigen::MatrixXd U(N, static_cast<Eigen::Index>(n1));
  for (std::size_t i = 0; i < n1; ++i) {
    Eigen::VectorXd u = Eigen::VectorXd::Constant(N, mlp.param(mlp.hidden_bias_index(i)));
    for (std::size_t h = 0; h < n0; ++h) {
      const double wih = mlp.param(mlp.hidden_weight_index(i, h));
      if (wih != 0.0) u += wih * X.col(static_cast<Eigen::Index>(h));
    }
    U.col(static_cast<Eigen::Index>(i)) = u;
  }
  const Eigen::MatrixXd T = U.array().tanh().matrix();
  Eigen::ArrayXd a = Eigen::ArrayXd::Constant(N, mlp.param(mlp.output_bias_index()));
  for (std::size_t i = 0; i < n1; ++i) a += mlp.param(mlp.output_weight_index(i)) * T.col(static_cast<Eigen::Index>(i)).array();
  const double base = weighted_sse(a, data.targets, w);

  std::vector<Saliency> out;
  for (std::size_t p : mlp.active_indices()) {
    if (!prunable(mlp, p, min_hidden)) continue;
    Eigen::ArrayXd a2;
    if (p < n1 * n0) {
      const auto i = static_cast<Eigen::Index>(p / n0);
      const auto h = static_cast<Eigen::Index>(p % n0);
      const double w2 = mlp.param(mlp.output_weight_index(static_cast<std::size_t>(i)));
      const double wih = mlp.param(p);
      Eigen::ArrayXd u = U.col(i).array();
      const auto group = one_hot_group(mlp, p);
      if (group.empty()) {
        u -= wih * X.col(h).array();
      } else {
        for (auto c : group) u -= wih * X.col(static_cast<Eigen::Index>(c)).array();
        u += wih;
      }
      a2 = a + w2 * (u.tanh() - T.col(i).array());
    } else if (p < n1 * n0 + n1) {
      const auto i = static_cast<Eigen::Index>(p - n1 * n0);
      const double w2 = mlp.param(mlp.output_weight_index(static_cast<std::size_t>(i)));
      a2 = a + w2 * ((U.col(i).array() - mlp.param(p)).tanh() - T.col(i).array());
    } else {
      const auto i = static_cast<Eigen::Index>(p - n1 * n0 - n1);
      const double w2 = mlp.param(p);
      a2 = a - w2 * (T.col(i).array() - T.col(i).mean());
    }
    out.push_back({p, weighted_sse(a2, data.targets, w) - base});
  }
  return out;
}

// Lower saliency first. Increases within rounding of zero count as free; among
// free removals an output weight goes first since it takes the whole neuron
// with it.
bool removal_order(const Mlp& mlp, const Saliency& x, const Saliency& y, double base) {
  const double eps = 1e-12 * std::max(base, std::numeric_limits<double>::min());
  const bool fx = x.increase <= eps;
  const bool fy = y.increase <= eps;
  if (fx && fy) {
    const std::size_t first_output = mlp.n_hidden() * mlp.n_inputs() + mlp.n_hidden();
    const bool ox = x.parameter >= first_output;
    const bool oy = y.parameter >= first_output;
    if (ox != oy) return ox;
    return x.parameter < y.parameter;
  }
  if (fx != fy) return fx;
  return x.increase < y.increase || (x.increase == y.increase && x.parameter < y.parameter);
}

}  // namespace

std::vector<Saliency> saliency(const Mlp& mlp, const EncodedDataset& data, const Eigen::VectorXd& sample_weights) {
  return saliency_impl(mlp, data, sample_weights, 0);
}

void remove_parameter(Mlp& mlp, std::size_t parameter, const Eigen::MatrixXd& inputs) {
  const std::size_t n0 = mlp.n_inputs();
  const std::size_t n1 = mlp.n_hidden();
  if (parameter >= n1 * n0 + n1 && parameter < n1 * n0 + 2 * n1 && inputs.rows() > 0) {
    const std::size_t i = parameter - n1 * n0 - n1;
    Eigen::VectorXd u = Eigen::VectorXd::Constant(inputs.rows(), mlp.param(mlp.hidden_bias_index(i)));
    for (std::size_t h = 0; h < n0; ++h) u += mlp.param(mlp.hidden_weight_index(i, h)) * inputs.col(static_cast<Eigen::Index>(h));
    const double mean_activation = u.array().tanh().mean();
    mlp.set_param(mlp.output_bias_index(), mlp.param(mlp.output_bias_index()) + mlp.param(parameter) * mean_activation);
  }
  remove_parameter(mlp, parameter);
}

void remove_parameter(Mlp& mlp, std::size_t parameter) {
  const std::size_t n0 = mlp.n_inputs();
  const auto group = one_hot_group(mlp, parameter);
  if (!group.empty()) {
    const std::size_t i = parameter / n0;
    const double shift = mlp.param(parameter);
    for (auto c : group) {
      const auto idx = mlp.hidden_weight_index(i, c);
      mlp.set_param(idx, mlp.param(idx) - shift);
    }
    const auto b = mlp.hidden_bias_index(i);
    mlp.set_param(b, mlp.param(b) + shift);
  }
  mlp.deactivate(parameter);
  for (std::size_t i = 0; i < mlp.n_hidden(); ++i) {
    const std::size_t out_idx = mlp.output_weight_index(i);
    if (!mlp.active(out_idx)) {
      for (std::size_t h = 0; h < n0; ++h) mlp.deactivate(mlp.hidden_weight_index(i, h));
      mlp.deactivate(mlp.hidden_bias_index(i));
      continue;
    }
    bool has_input = false;
    for (std::size_t h = 0; h < n0 && !has_input; ++h) has_input = mlp.active(mlp.hidden_weight_index(i, h));
    if (!has_input) {
      const double constant = mlp.param(out_idx) * std::tanh(mlp.param(mlp.hidden_bias_index(i)));
      mlp.set_param(mlp.output_bias_index(), mlp.param(mlp.output_bias_index()) + constant);
      mlp.deactivate(out_idx);
      mlp.deactivate(mlp.hidden_bias_index(i));
    }
  }
}

std::string describe_parameter(const Mlp& mlp, std::size_t p) {
  const std::size_t n0 = mlp.n_inputs();
  const std::size_t n1 = mlp.n_hidden();
  if (p < n1 * n0) {
    const std::size_t h = p % n0;
    std::string s = "w1[" + std::to_string(p / n0) + "][" + std::to_string(h) + "]";
    if (h < mlp.encoding.width()) {
      const auto& col = mlp.encoding.columns[h];
      s += " (" + col.factor + (col.state ? "=" + *col.state : "") + ")";
    }
    return s;
  }
  if (p < n1 * n0 + n1) return "b1[" + std::to_string(p - n1 * n0) + "]";
  if (p < n1 * n0 + 2 * n1) return "w2[" + std::to_string(p - n1 * n0 - n1) + "]";
  return "b";
}

std::vector<std::string> eliminated_factors(const Mlp& mlp) {
  std::vector<std::string> out;
  for (const auto& factor : mlp.encoding.factor_names()) {
    bool connected = false;
    for (auto c : mlp.encoding.columns_of(factor)) connected = connected || mlp.input_connected(c);
    if (!connected) out.push_back(factor);
  }
  return out;
}

std::vector<std::size_t> eliminated_neurons(const Mlp& mlp) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < mlp.n_hidden(); ++i) {
    if (!mlp.neuron_alive(i)) out.push_back(i);
  }
  return out;
}

PruneResult prune(const Mlp& mlp, const EncodedDataset& identification, const EncodedDataset& validation,
                  const PruneConfig& config) {
  config.validate();
  LmSettings retrain = config.lm;
  retrain.max_iterations = std::max(1, config.retrain_iterations);
  // Retraining starts from a fitted model, so no unweighted warm-up.
  RobustConfig robust = config.robust;
  robust.warmup_iterations = 0;

  PruneResult result{mlp, {}};
  auto& report = result.report;
  report.initial_active = mlp.active_count();
  report.initial_validation_criterion = validation_criterion(mlp, validation);
  double best = report.initial_validation_criterion;

  while (true) {
    const Eigen::VectorXd e = residuals(result.model, identification);
    const Eigen::VectorXd w = robust_weights(e, robust);
    const double base = weighted_criterion(e, w);
    const auto sal = saliency_impl(result.model, identification, w, config.min_hidden);
    if (sal.empty()) break;
    const auto pick = std::min_element(sal.begin(), sal.end(), [&](const Saliency& x, const Saliency& y) {
      return removal_order(result.model, x, y, base);
    });

    Mlp candidate = result.model;
    remove_parameter(candidate, pick->parameter, identification.inputs);
    bool ok = true;
    if (config.retrain_iterations > 0) {
      try {
        refine(candidate, identification, retrain, robust);
      } catch (const LmBreakdown&) {
        ok = false;
      }
    }
    const double after = ok ? validation_criterion(candidate, validation) : std::numeric_limits<double>::infinity();
    RemovalEntry entry{pick->parameter, describe_parameter(result.model, pick->parameter), pick->increase, best, after,
                       false};
    if (std::isfinite(after) && after <= best * (1.0 + config.tolerance)) {
      entry.accepted = true;
      result.model = std::move(candidate);
      best = std::min(best, after);
      report.log.push_back(std::move(entry));
    } else {
      report.log.push_back(std::move(entry));
      break;
    }
  }

  report.eliminated_neurons = eliminated_neurons(result.model);
  report.eliminated_factors = eliminated_factors(result.model);
  report.final_validation_criterion = validation_criterion(result.model, validation);
  report.final_active = result.model.active_count();
  return result;
}

void to_json(json& j, const PruneReport& r) {
  json log = json::array();
  for (const auto& e : r.log) {
    log.push_back({{"parameter", e.parameter},
                   {"description", e.description},
                   {"saliency", e.saliency},
                   {"criterion_before", e.criterion_before},
                   {"criterion_after", std::isfinite(e.criterion_after) ? json(e.criterion_after) : json(nullptr)},
                   {"accepted", e.accepted}});
  }
  j = {{"log", log},
       {"eliminated_neurons", r.eliminated_neurons},
       {"eliminated_factors", r.eliminated_factors},
       {"initial_validation_criterion", r.initial_validation_criterion},
       {"final_validation_criterion", r.final_validation_criterion},
       {"initial_active", r.initial_active},
       {"final_active", r.final_active}};
}

void write_table(std::ostream& out, const PruneReport& report) {
  out << "step  parameter                          saliency       before         after          accepted\n";
  for (std::size_t k = 0; k < report.log.size(); ++k) {
    const auto& e = report.log[k];
    out << std::setw(4) << k << "  " << std::left << std::setw(33) << e.description << std::right << "  "
        << std::scientific << std::setprecision(4) << std::setw(12) << e.saliency << "  " << std::setw(12)
        << e.criterion_before << "  " << std::setw(12) << e.criterion_after << std::defaultfloat << "  "
        << (e.accepted ? "yes" : "no") << '\n';
  }
  out << "active parameters: " << report.initial_active << " -> " << report.final_active << '\n';
  out << "eliminated hidden neurons (" << report.eliminated_neurons.size() << "):";
  for (auto i : report.eliminated_neurons) out << ' ' << i;
  out << "\neliminated inputs (" << report.eliminated_factors.size() << "):";
  for (const auto& f : report.eliminated_factors) out << ' ' << f;
  out << '\n';
}

}  // namespace qcnn
