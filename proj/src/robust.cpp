#include "qcnn/robust.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "qcnn/error.hpp"

namespace qcnn {

std::string_view to_string(Estimator e) {
  switch (e) {
    case Estimator::squared: return "squared";
    case Estimator::huber: return "huber";
    case Estimator::bisquare: return "bisquare";
  }
  return "?";
}

Estimator parse_estimator(std::string_view text) {
  if (text == "squared") return Estimator::squared;
  if (text == "huber") return Estimator::huber;
  if (text == "bisquare") return Estimator::bisquare;
  throw ParseError("unknown robust estimator '" + std::string(text) + "'");
}

void to_json(nlohmann::json& j, const RobustConfig& c) {
  j = {{"estimator", std::string(to_string(c.estimator))},
       {"tuning", c.tuning},
       {"min_scale", c.min_scale},
       {"warmup_iterations", c.warmup_iterations}};
}

void from_json(const nlohmann::json& j, RobustConfig& c) {
  c = RobustConfig{};
  if (j.contains("estimator")) c.estimator = parse_estimator(j.at("estimator").get<std::string>());
  c.tuning = c.estimator == Estimator::huber ? kHuberTuning : c.estimator == Estimator::bisquare ? kBisquareTuning : 1.0;
  c.tuning = j.value("tuning", c.tuning);
  c.min_scale = j.value("min_scale", c.min_scale);
  c.warmup_iterations = j.value("warmup_iterations", c.warmup_iterations);
  if (!(c.tuning > 0.0)) throw DomainError("robust tuning constant must be positive");
  if (c.min_scale < 0.0) throw DomainError("robust min_scale must be non-negative");
}

double median(Eigen::VectorXd values) {
  if (values.size() == 0) throw DomainError("median of an empty vector");
  const auto n = static_cast<std::size_t>(values.size());
  double* data = values.data();
  std::nth_element(data, data + n / 2, data + n);
  const double upper = data[n / 2];
  if (n % 2 == 1) return upper;
  const double lower = *std::max_element(data, data + n / 2);
  return 0.5 * (lower + upper);
}

double robust_scale(const Eigen::Ref<const Eigen::VectorXd>& residuals, double min_scale) {
  const double center = median(residuals);
  const Eigen::VectorXd dev = (residuals.array() - center).abs().matrix();
  return std::max(kMadScale * median(dev), min_scale);
}

Eigen::VectorXd robust_weights(const Eigen::Ref<const Eigen::VectorXd>& residuals, const RobustConfig& config) {
  if (residuals.size() == 0) throw DomainError("robust_weights: empty residual vector");
  Eigen::VectorXd w = Eigen::VectorXd::Ones(residuals.size());
  if (config.estimator == Estimator::squared) return w;
  const double s = robust_scale(residuals, config.min_scale);
  if (s == 0.0) return w;
  const double cutoff = config.tuning * s;
  for (Eigen::Index k = 0; k < residuals.size(); ++k) {
    const double r = std::abs(residuals[k]);
    if (config.estimator == Estimator::bisquare) {
      if (r < cutoff) {
        const double u = r / cutoff;
        w[k] = (1.0 - u * u) * (1.0 - u * u);
      } else {
        w[k] = 0.0;
      }
    } else {
      w[k] = r <= cutoff ? 1.0 : cutoff / r;
    }
  }
  return w;
}

}  // namespace qcnn
