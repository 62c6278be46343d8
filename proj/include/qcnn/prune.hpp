#pragma once

#include <cstddef>
#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "qcnn/data.hpp"
#include "qcnn/lm.hpp"
#include "qcnn/net.hpp"
#include "qcnn/robust.hpp"
#include "qcnn/train.hpp"

namespace qcnn {

struct PruneConfig {
  double tolerance = 0.01;  // allowed relative validation degradation per removal
  int retrain_iterations = 20;
  std::size_t min_hidden = 1;
  LmSettings lm;             // max_iterations is replaced by retrain_iterations
  RobustConfig robust = TrainConfig::default_robust();

  void validate() const;
};

void to_json(nlohmann::json& j, const PruneConfig& c);
void from_json(const nlohmann::json& j, PruneConfig& c);

struct Saliency {
  std::size_t parameter = 0;
  double increase = 0.0;  // criterion(theta_p = 0) - criterion
};

// Exact criterion increase when each prunable active parameter is removed as
// remove_parameter(mlp, p, data.inputs) would, using fixed sample weights.
// The output bias is never a candidate.
std::vector<Saliency> saliency(const Mlp& mlp, const EncodedDataset& data, const Eigen::VectorXd& sample_weights);

// Removes `parameter` and restores structural consistency. A one-hot weight
// whose whole group and hidden bias are still active is removed by shifting
// the group and bias along the direction that leaves the function unchanged
// on one-hot inputs, so the first removal per group and neuron is free.
// Then:
//  - a neuron whose output weight is gone loses its inputs and bias;
//  - a neuron with no active input weight is constant, so its contribution
//    w2 * tanh(b1) is folded into the output bias and the neuron removed.
// Otherwise the network function changes only through the removed parameter.
void remove_parameter(Mlp& mlp, std::size_t parameter);
// As above, except that removing an output weight replaces the neuron by its
// mean activation over `inputs`, folded into the output bias. A neuron
// saturated to a constant over those rows is then removed at no cost.
void remove_parameter(Mlp& mlp, std::size_t parameter, const Eigen::MatrixXd& inputs);

struct RemovalEntry {
  std::size_t parameter = 0;
  std::string description;  // e.g. "w1[3][7] (humidity)"
  double saliency = 0.0;
  double criterion_before = 0.0;  // best validation criterion so far
  double criterion_after = 0.0;   // validation criterion after removal and retraining
  bool accepted = false;
};

struct PruneReport {
  std::vector<RemovalEntry> log;
  std::vector<std::size_t> eliminated_neurons;
  std::vector<std::string> eliminated_factors;
  double initial_validation_criterion = 0.0;
  double final_validation_criterion = 0.0;
  std::size_t initial_active = 0;
  std::size_t final_active = 0;
};

void to_json(nlohmann::json& j, const PruneReport& r);
void write_table(std::ostream& out, const PruneReport& report);

std::string describe_parameter(const Mlp& mlp, std::size_t parameter);

// Factors whose every encoded column is disconnected from the hidden layer.
std::vector<std::string> eliminated_factors(const Mlp& mlp);
std::vector<std::size_t> eliminated_neurons(const Mlp& mlp);

struct PruneResult {
  Mlp model;
  PruneReport report;
};

// Greedy elimination: zero the lowest-saliency parameter, retrain briefly,
// keep the removal while the validation criterion stays within
// best_so_far * (1 + tolerance), otherwise restore and stop.
PruneResult prune(const Mlp& mlp, const EncodedDataset& identification, const EncodedDataset& validation,
                  const PruneConfig& config);

}  // namespace qcnn
