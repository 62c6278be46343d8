#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "qcnn/data.hpp"
#include "qcnn/error.hpp"
#include "qcnn/lm.hpp"
#include "qcnn/net.hpp"
#include "qcnn/random.hpp"
#include "qcnn/robust.hpp"

namespace qcnn {

struct TrainConfig {
  std::size_t n1_initial = 25;
  std::size_t restarts = 100;
  LmSettings lm;
  RobustConfig robust = default_robust();
  std::uint64_t master_seed = 0;
  // Worker threads for restarts; 0 picks the hardware concurrency. Results do
  // not depend on this value.
  std::size_t threads = 0;

  // Bisquare with the scale floor and warm-up used throughout the project.
  static RobustConfig default_robust();
  void validate() const;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
// Accepts both a nested ("lm": {...}, "robust": {...}) and a flat layout.
void from_json(const nlohmann::json& j, TrainConfig& c);
TrainConfig load_train_config(const std::string& path);

struct RestartOutcome {
  std::uint64_t seed = 0;
  double train_criterion = 0.0;
  double validation_criterion = 0.0;
  int iterations = 0;
  bool converged = false;
  bool broke_down = false;
};

struct TrainReport {
  std::vector<RestartOutcome> restarts;
  std::size_t best_index = 0;
  std::vector<double> best_trace;  // training criterion after each accepted step
};

void to_json(nlohmann::json& j, const RestartOutcome& r);
void to_json(nlohmann::json& j, const TrainReport& r);
void write_table(std::ostream& out, const TrainReport& report);

// Raised when every restart breaks down; carries the report.
class TrainingFailed : public Error {
 public:
  TrainingFailed(const std::string& what, TrainReport report) : Error(what), report_(std::move(report)) {}
  const char* kind() const noexcept override { return "train"; }
  const TrainReport& report() const { return report_; }

 private:
  TrainReport report_;
};

// beta = 0.7 * n1^(1/n0)
double nguyen_widrow_beta(std::size_t n0, std::size_t n1);

// Hidden rows drawn in [-0.5, 0.5] and rescaled to Euclidean norm beta, hidden
// biases in [-beta, beta], output layer in [-0.5, 0.5].
Mlp nguyen_widrow_init(std::size_t n0, std::size_t n1, Rng& rng);

// Adapts an Mlp to the LeastSquaresProblem interface over its active
// parameters.
class MlpProblem {
 public:
  MlpProblem(const Mlp& model, const Eigen::MatrixXd& inputs, const Eigen::VectorXd& targets)
      : scratch_(model), inputs_(inputs), targets_(targets) {}

  Eigen::VectorXd predict(const Eigen::VectorXd& theta) {
    scratch_.set_active_params(theta);
    return scratch_.forward_batch(inputs_);
  }
  Eigen::MatrixXd jacobian(const Eigen::VectorXd& theta) {
    scratch_.set_active_params(theta);
    return scratch_.jacobian_wrt_params(inputs_);
  }
  const Eigen::VectorXd& targets() const { return targets_; }

 private:
  Mlp scratch_;
  const Eigen::MatrixXd& inputs_;
  const Eigen::VectorXd& targets_;
};

struct LmStepResult {
  Mlp candidate;
  double criterion = 0.0;  // sum_k w_k e_k^2 / N at the candidate
};

// One damped step on the active parameters. Throws LmBreakdown when the
// damped system is singular.
LmStepResult lm_step(const Mlp& mlp, const Eigen::MatrixXd& inputs, const Eigen::VectorXd& targets,
                     const Eigen::VectorXd& sample_weights, double lambda);

// Runs robust LM from the model's current parameters, in place.
LmOutcome refine(Mlp& mlp, const EncodedDataset& data, const LmSettings& settings, const RobustConfig& robust);

// Residuals y - z over a dataset.
Eigen::VectorXd residuals(const Mlp& mlp, const EncodedDataset& data);
// Robust criterion: weights estimated from this dataset's own residuals.
double criterion(const Mlp& mlp, const EncodedDataset& data, const RobustConfig& robust);
// Unweighted mean squared error. Used to compare models on held-out data: a
// reweighted criterion can be driven to zero by rejecting every positive.
double validation_criterion(const Mlp& mlp, const EncodedDataset& data);

struct TrainResult {
  Mlp model;
  TrainReport report;
};

// Multi-start robust LM. Restart r starts from nguyen_widrow_init seeded with
// mix_seed(master_seed + r); the model with the lowest validation_criterion
// wins, ties going to the lower restart index.
TrainResult train(const EncodedDataset& identification, const EncodedDataset& validation, const TrainConfig& config);

}  // namespace qcnn
