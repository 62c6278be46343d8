#pragma once

#include <cstddef>
#include <optional>
#include <iosfwd>
#include <string>
#include <string_view>

#include <Eigen/Core>
#include <json.hpp>

#include "qcnn/data.hpp"
#include "qcnn/net.hpp"

namespace qcnn {

inline constexpr double kDefaultThreshold = 0.5;

enum class Verdict { defect, no_defect };

struct ConfusionCounts {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t tn = 0;
  std::size_t fn = 0;
  double threshold = kDefaultThreshold;

  std::size_t total() const { return tp + fp + tn + fn; }
  bool operator==(const ConfusionCounts&) const = default;
};

enum class FalsePositiveMode { of_predicted_positives, of_actual_negatives };

std::string_view to_string(FalsePositiveMode mode);
FalsePositiveMode parse_fp_mode(std::string_view text);

// Inclusive boundary: defect iff probability >= threshold.
inline bool is_alert(double probability, double threshold) { return probability >= threshold; }

// Throws DomainError unless threshold lies in (0, 1).
void check_threshold(double threshold);

Verdict classify(const Mlp& mlp, const Eigen::Ref<const Eigen::VectorXd>& x, double threshold);

ConfusionCounts confusion(const Mlp& mlp, const EncodedDataset& dataset, double threshold);
// Counts from precomputed probabilities and 0/1 targets.
ConfusionCounts confusion(const Eigen::Ref<const Eigen::VectorXd>& probabilities,
                          const Eigen::Ref<const Eigen::VectorXd>& targets, double threshold);

// fn / (tp + fn); throws DomainError without actual positives.
double non_detection_rate(const ConfusionCounts& c);
// fp / (tp + fp) or fp / (fp + tn); throws DomainError on a zero denominator.
double false_positive_proportion(const ConfusionCounts& c, FalsePositiveMode mode);

struct EvaluationReport {
  std::string defect_name;
  ConfusionCounts counts;
  std::optional<double> non_detection;
  std::optional<double> fp_of_predicted_positives;
  std::optional<double> fp_of_actual_negatives;
};

EvaluationReport evaluate(const Mlp& mlp, const EncodedDataset& dataset, double threshold);
void to_json(nlohmann::json& j, const EvaluationReport& r);
void write_text(std::ostream& out, const EvaluationReport& r);
// record_id,probability,predicted,actual
void write_predictions(std::ostream& out, const Mlp& mlp, const EncodedDataset& dataset, double threshold);

}  // namespace qcnn
