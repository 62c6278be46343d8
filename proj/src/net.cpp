#include "qcnn/net.hpp"

#include <cmath>
#include <fstream>

#include "qcnn/error.hpp"

namespace qcnn {

using nlohmann::json;

Mlp::Mlp(std::size_t n_inputs, std::size_t n_hidden) : n0_(n_inputs), n1_(n_hidden) {
  if (n0_ == 0 || n1_ == 0) throw DomainError("network needs at least one input and one hidden neuron");
  params_.assign(n1_ * n0_ + 2 * n1_ + 1, 0.0);
  mask_.assign(params_.size(), 1);
}

std::size_t Mlp::active_count() const {
  std::size_t n = 0;
  for (auto m : mask_) n += m;
  return n;
}

std::vector<std::size_t> Mlp::active_indices() const {
  std::vector<std::size_t> out;
  out.reserve(params_.size());
  for (std::size_t i = 0; i < mask_.size(); ++i) {
    if (mask_[i]) out.push_back(i);
  }
  return out;
}

Eigen::VectorXd Mlp::active_params() const {
  Eigen::VectorXd out(static_cast<Eigen::Index>(active_count()));
  Eigen::Index k = 0;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (mask_[i]) out[k++] = params_[i];
  }
  return out;
}

void Mlp::set_param(std::size_t index, double value) {
  if (!active(index) && value != 0.0) {
    throw DomainError("parameter " + std::to_string(index) + " is pruned and must stay zero");
  }
  params_[index] = value;
}

void Mlp::set_active_params(const Eigen::Ref<const Eigen::VectorXd>& values) {
  if (static_cast<std::size_t>(values.size()) != active_count()) {
    throw DimensionError("expected " + std::to_string(active_count()) + " active parameters, got " +
                         std::to_string(values.size()));
  }
  Eigen::Index k = 0;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (mask_[i]) params_[i] = values[k++];
  }
}

void Mlp::deactivate(std::size_t index) {
  mask_.at(index) = 0;
  params_[index] = 0.0;
}

std::size_t Mlp::alive_neurons() const {
  std::size_t n = 0;
  for (std::size_t i = 0; i < n1_; ++i) n += neuron_alive(i) ? 1 : 0;
  return n;
}

bool Mlp::input_connected(std::size_t input) const {
  for (std::size_t i = 0; i < n1_; ++i) {
    if (active(hidden_weight_index(i, input))) return true;
  }
  return false;
}

void Mlp::check_input(Eigen::Index cols) const {
  if (static_cast<std::size_t>(cols) != n0_) {
    throw DimensionError("network expects " + std::to_string(n0_) + " inputs, got " + std::to_string(cols));
  }
}

double Mlp::forward(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  check_input(x.size());
  double a = params_[output_bias_index()];
  for (std::size_t i = 0; i < n1_; ++i) {
    const double w2 = params_[output_weight_index(i)];
    if (w2 == 0.0) continue;
    double u = params_[hidden_bias_index(i)];
    const double* w1 = &params_[hidden_weight_index(i, 0)];
    for (std::size_t h = 0; h < n0_; ++h) u += w1[h] * x[static_cast<Eigen::Index>(h)];
    a += w2 * std::tanh(u);
  }
  return logistic(a);
}

Eigen::VectorXd Mlp::forward_batch(const Eigen::Ref<const Eigen::MatrixXd>& X) const {
  check_input(X.cols());
  const auto n0 = static_cast<Eigen::Index>(n0_);
  const auto n1 = static_cast<Eigen::Index>(n1_);
  Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> W1(params_.data(), n1, n0);
  Eigen::Map<const Eigen::VectorXd> b1(params_.data() + n1 * n0, n1);
  Eigen::Map<const Eigen::VectorXd> w2(params_.data() + n1 * n0 + n1, n1);
  Eigen::MatrixXd U = X * W1.transpose();
  U.rowwise() += b1.transpose();
  Eigen::VectorXd a = U.array().tanh().matrix() * w2;
  a.array() += params_[output_bias_index()];
  return a.unaryExpr([](double v) { return logistic(v); });
}

Eigen::MatrixXd Mlp::jacobian_wrt_params(const Eigen::Ref<const Eigen::MatrixXd>& X) const {
  check_input(X.cols());
  const auto N = X.rows();
  const auto n0 = static_cast<Eigen::Index>(n0_);
  const auto n1 = static_cast<Eigen::Index>(n1_);
  Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> W1(params_.data(), n1, n0);
  Eigen::Map<const Eigen::VectorXd> b1(params_.data() + n1 * n0, n1);
  Eigen::Map<const Eigen::VectorXd> w2(params_.data() + n1 * n0 + n1, n1);

  Eigen::MatrixXd U = X * W1.transpose();
  U.rowwise() += b1.transpose();
  const Eigen::MatrixXd T = U.array().tanh().matrix();
  Eigen::VectorXd a = T * w2;
  a.array() += params_[output_bias_index()];
  const Eigen::ArrayXd z = a.unaryExpr([](double v) { return logistic(v); }).array();
  const Eigen::ArrayXd dz = z * (1.0 - z);
  // dz/du_i = dz * w2_i * (1 - t_i^2)
  Eigen::MatrixXd G = (1.0 - T.array().square()).matrix() * w2.asDiagonal();
  G.array().colwise() *= dz;

  Eigen::MatrixXd J(N, static_cast<Eigen::Index>(active_count()));
  Eigen::Index col = 0;
  for (std::size_t p = 0; p < params_.size(); ++p) {
    if (!mask_[p]) continue;
    if (p < n1_ * n0_) {
      const auto i = static_cast<Eigen::Index>(p / n0_);
      const auto h = static_cast<Eigen::Index>(p % n0_);
      J.col(col) = G.col(i).cwiseProduct(X.col(h));
    } else if (p < n1_ * n0_ + n1_) {
      J.col(col) = G.col(static_cast<Eigen::Index>(p - n1_ * n0_));
    } else if (p < n1_ * n0_ + 2 * n1_) {
      const auto i = static_cast<Eigen::Index>(p - n1_ * n0_ - n1_);
      J.col(col) = (T.col(i).array() * dz).matrix();
    } else {
      J.col(col) = dz.matrix();
    }
    ++col;
  }
  return J;
}

Eigen::VectorXd Mlp::sensitivity_wrt_inputs(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  check_input(x.size());
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n0_));
  double a = params_[output_bias_index()];
  std::vector<double> g(n1_, 0.0);
  for (std::size_t i = 0; i < n1_; ++i) {
    const double w2 = params_[output_weight_index(i)];
    double u = params_[hidden_bias_index(i)];
    for (std::size_t h = 0; h < n0_; ++h) u += params_[hidden_weight_index(i, h)] * x[static_cast<Eigen::Index>(h)];
    const double t = std::tanh(u);
    a += w2 * t;
    g[i] = w2 * (1.0 - t * t);
  }
  const double z = logistic(a);
  const double dz = z * (1.0 - z);
  for (std::size_t i = 0; i < n1_; ++i) {
    if (g[i] == 0.0) continue;
    for (std::size_t h = 0; h < n0_; ++h) {
      grad[static_cast<Eigen::Index>(h)] += dz * g[i] * params_[hidden_weight_index(i, h)];
    }
  }
  return grad;
}

double Mlp::predict(const FactorValues& values) const { return forward(encoding.encode(values)); }

json model_to_json(const Mlp& mlp) {
  const std::size_t n0 = mlp.n_inputs();
  const std::size_t n1 = mlp.n_hidden();
  const auto& p = mlp.params();
  json j = json::object();
  j["format_version"] = kModelFormatVersion;
  j["defect_name"] = mlp.defect_name;
  j["schema_fingerprint"] = mlp.schema_fingerprint;
  j["n0"] = n0;
  j["n1"] = n1;
  j["hidden_weights"] = std::vector<double>(p.begin(), p.begin() + static_cast<std::ptrdiff_t>(n1 * n0));
  j["hidden_biases"] = std::vector<double>(p.begin() + static_cast<std::ptrdiff_t>(n1 * n0),
                                           p.begin() + static_cast<std::ptrdiff_t>(n1 * n0 + n1));
  j["output_weights"] = std::vector<double>(p.begin() + static_cast<std::ptrdiff_t>(n1 * n0 + n1),
                                            p.begin() + static_cast<std::ptrdiff_t>(n1 * n0 + 2 * n1));
  j["output_bias"] = p.back();
  std::vector<int> mask(mlp.mask().begin(), mlp.mask().end());
  j["mask"] = mask;
  const json enc = mlp.encoding;
  j["column_map"] = enc["column_map"];
  j["norm_params"] = enc["norm_params"];
  return j;
}

Mlp model_from_json(const json& j) {
  try {
    const int version = j.at("format_version").get<int>();
    if (version != kModelFormatVersion) {
      throw ParseError("unsupported model format_version " + std::to_string(version));
    }
    const auto n0 = j.at("n0").get<std::size_t>();
    const auto n1 = j.at("n1").get<std::size_t>();
    Mlp mlp(n0, n1);
    const auto w1 = j.at("hidden_weights").get<std::vector<double>>();
    const auto b1 = j.at("hidden_biases").get<std::vector<double>>();
    const auto w2 = j.at("output_weights").get<std::vector<double>>();
    const auto mask = j.at("mask").get<std::vector<int>>();
    if (w1.size() != n1 * n0 || b1.size() != n1 || w2.size() != n1 || mask.size() != mlp.parameter_count()) {
      throw ParseError("model arrays do not match n0/n1");
    }
    std::vector<double> flat = w1;
    flat.insert(flat.end(), b1.begin(), b1.end());
    flat.insert(flat.end(), w2.begin(), w2.end());
    flat.push_back(j.at("output_bias").get<double>());
    for (std::size_t i = 0; i < flat.size(); ++i) {
      if (mask[i] == 0) {
        if (flat[i] != 0.0) throw ParseError("masked parameter " + std::to_string(i) + " is not zero");
        mlp.deactivate(i);
      } else {
        mlp.set_param(i, flat[i]);
      }
    }
    mlp.defect_name = j.at("defect_name").get<std::string>();
    mlp.schema_fingerprint = j.at("schema_fingerprint").get<std::string>();
    mlp.encoding = json{{"column_map", j.at("column_map")}, {"norm_params", j.at("norm_params")}}.get<InputEncoding>();
    if (!mlp.encoding.columns.empty() && mlp.encoding.width() != n0) {
      throw ParseError("column_map has " + std::to_string(mlp.encoding.width()) + " columns but n0 = " +
                       std::to_string(n0));
    }
    return mlp;
  } catch (const json::exception& e) {
    throw ParseError(std::string("model file: ") + e.what());
  }
}

void save_model(const Mlp& mlp, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write model file '" + path + "'");
  out << model_to_json(mlp).dump(1) << '\n';
}

Mlp load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open model file '" + path + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ParseError("model file '" + path + "': " + e.what());
  }
  return model_from_json(j);
}

}  // namespace qcnn
