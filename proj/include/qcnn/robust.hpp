#pragma once

#include <string_view>

#include <Eigen/Core>
#include <json.hpp>

namespace qcnn {

enum class Estimator { squared, huber, bisquare };

std::string_view to_string(Estimator e);
Estimator parse_estimator(std::string_view text);

inline constexpr double kBisquareTuning = 4.685;
inline constexpr double kHuberTuning = 1.345;
// Consistency factor turning the median absolute deviation into a Gaussian
// standard-deviation estimate.
inline constexpr double kMadScale = 1.4826;

struct RobustConfig {
  Estimator estimator = Estimator::bisquare;
  double tuning = kBisquareTuning;
  // Lower bound on the residual scale. With near-separable 0/1 targets most
  // residuals are tiny and the MAD collapses towards zero, which would reject
  // every informative sample; the floor keeps the cutoff c*s meaningful.
  double min_scale = 0.0;
  // Leading LM iterations run with unit weights before reweighting starts.
  int warmup_iterations = 0;

  static RobustConfig squared() { return {Estimator::squared, 1.0, 0.0, 0}; }
  static RobustConfig bisquare(double c = kBisquareTuning) { return {Estimator::bisquare, c, 0.0, 0}; }
  static RobustConfig huber(double c = kHuberTuning) { return {Estimator::huber, c, 0.0, 0}; }
};

void to_json(nlohmann::json& j, const RobustConfig& c);
void from_json(const nlohmann::json& j, RobustConfig& c);

double median(Eigen::VectorXd values);

// s = 1.4826 * median(|r - median(r)|), raised to `min_scale`.
double robust_scale(const Eigen::Ref<const Eigen::VectorXd>& residuals, double min_scale = 0.0);

// Per-sample IRLS weights in [0, 1].
//   squared:  1
//   bisquare: (1 - (r/(c s))^2)^2 for |r| < c s, else 0
//   huber:    min(1, c s / |r|)
// A zero scale gives all-ones weights.
Eigen::VectorXd robust_weights(const Eigen::Ref<const Eigen::VectorXd>& residuals, const RobustConfig& config);

}  // namespace qcnn
