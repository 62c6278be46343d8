#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "qcnn/data.hpp"

namespace qcnn {

inline double logistic(double a) { return 1.0 / (1.0 + std::exp(-a)); }

// One-hidden-layer perceptron
//
//   z = sigmoid( sum_i w2_i * tanh( sum_h w1_ih * x_h + b1_i ) + b )
//
// Parameters live in one flat vector laid out as
//   [ w1 (n1 x n0, row-major) | b1 (n1) | w2 (n1) | b ]
// and every parameter carries an active flag. Inactive parameters are pruned:
// their value is exactly zero and no public operation can change that.
class Mlp {
 public:
  Mlp() = default;
  // All parameters zero and active. Throws DomainError if either size is 0.
  Mlp(std::size_t n_inputs, std::size_t n_hidden);

  std::size_t n_inputs() const { return n0_; }
  std::size_t n_hidden() const { return n1_; }
  std::size_t parameter_count() const { return params_.size(); }

  std::size_t hidden_weight_index(std::size_t neuron, std::size_t input) const { return neuron * n0_ + input; }
  std::size_t hidden_bias_index(std::size_t neuron) const { return n1_ * n0_ + neuron; }
  std::size_t output_weight_index(std::size_t neuron) const { return n1_ * n0_ + n1_ + neuron; }
  std::size_t output_bias_index() const { return n1_ * n0_ + 2 * n1_; }

  double param(std::size_t index) const { return params_.at(index); }
  const std::vector<double>& params() const { return params_; }
  bool active(std::size_t index) const { return mask_.at(index) != 0; }
  const std::vector<std::uint8_t>& mask() const { return mask_; }

  std::size_t active_count() const;
  std::vector<std::size_t> active_indices() const;
  Eigen::VectorXd active_params() const;

  // Throws DomainError when `index` is inactive and `value` is not zero.
  void set_param(std::size_t index, double value);
  // Assigns the active parameters, in active_indices() order.
  void set_active_params(const Eigen::Ref<const Eigen::VectorXd>& values);
  // Zeroes the parameter and clears its active flag. Irreversible.
  void deactivate(std::size_t index);

  // A hidden neuron is alive while its output weight is active.
  bool neuron_alive(std::size_t neuron) const { return active(output_weight_index(neuron)); }
  std::size_t alive_neurons() const;
  // An input is connected while any hidden weight reading it is active.
  bool input_connected(std::size_t input) const;

  double forward(const Eigen::Ref<const Eigen::VectorXd>& x) const;
  // Row-wise forward over a batch (N x n0).
  Eigen::VectorXd forward_batch(const Eigen::Ref<const Eigen::MatrixXd>& X) const;

  // dz/dtheta for each active parameter (columns in active_indices() order).
  Eigen::MatrixXd jacobian_wrt_params(const Eigen::Ref<const Eigen::MatrixXd>& X) const;
  // dz/dx at x.
  Eigen::VectorXd sensitivity_wrt_inputs(const Eigen::Ref<const Eigen::VectorXd>& x) const;

  // Deployment metadata carried with the weights.
  std::string defect_name;
  std::string schema_fingerprint;
  InputEncoding encoding;

  // Natural-unit convenience: encode with the stored encoding, then forward.
  double predict(const FactorValues& values) const;

  bool operator==(const Mlp&) const = default;

 private:
  void check_input(Eigen::Index cols) const;

  std::size_t n0_ = 0;
  std::size_t n1_ = 0;
  std::vector<double> params_;
  std::vector<std::uint8_t> mask_;
};

// Versioned JSON model file. Doubles are written in shortest round-trip form
// so save/load is bit-exact.
inline constexpr int kModelFormatVersion = 1;

nlohmann::json model_to_json(const Mlp& mlp);
Mlp model_from_json(const nlohmann::json& j);
void save_model(const Mlp& mlp, const std::string& path);
Mlp load_model(const std::string& path);

}  // namespace qcnn
