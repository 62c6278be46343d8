#include "qcnn/eval.hpp"

#include <iomanip>
#include <ostream>
#include <sstream>

#include "qcnn/error.hpp"

namespace qcnn {

using nlohmann::json;

std::string_view to_string(FalsePositiveMode mode) {
  return mode == FalsePositiveMode::of_predicted_positives ? "of-predicted-positives" : "of-actual-negatives";
}

FalsePositiveMode parse_fp_mode(std::string_view text) {
  if (text == "of-predicted-positives") return FalsePositiveMode::of_predicted_positives;
  if (text == "of-actual-negatives") return FalsePositiveMode::of_actual_negatives;
  throw ParseError("unknown false-positive mode '" + std::string(text) + "'");
}

void check_threshold(double threshold) {
  if (!(threshold > 0.0 && threshold < 1.0)) {
    throw DomainError("threshold must lie in (0, 1), got " + json(threshold).dump());
  }
}

Verdict classify(const Mlp& mlp, const Eigen::Ref<const Eigen::VectorXd>& x, double threshold) {
  check_threshold(threshold);
  return is_alert(mlp.forward(x), threshold) ? Verdict::defect : Verdict::no_defect;
}

ConfusionCounts confusion(const Eigen::Ref<const Eigen::VectorXd>& probabilities,
                          const Eigen::Ref<const Eigen::VectorXd>& targets, double threshold) {
  check_threshold(threshold);
  if (probabilities.size() != targets.size()) throw DimensionError("confusion: size mismatch");
  ConfusionCounts c;
  c.threshold = threshold;
  for (Eigen::Index k = 0; k < targets.size(); ++k) {
    const bool predicted = is_alert(probabilities[k], threshold);
    const bool actual = targets[k] >= 0.5;
    if (predicted && actual) ++c.tp;
    else if (predicted) ++c.fp;
    else if (actual) ++c.fn;
    else ++c.tn;
  }
  return c;
}

ConfusionCounts confusion(const Mlp& mlp, const EncodedDataset& dataset, double threshold) {
  Eigen::VectorXd p(static_cast<Eigen::Index>(dataset.size()));
  for (Eigen::Index k = 0; k < p.size(); ++k) p[k] = mlp.forward(dataset.inputs.row(k).transpose());
  return confusion(p, dataset.targets, threshold);
}

double non_detection_rate(const ConfusionCounts& c) {
  if (c.tp + c.fn == 0) throw DomainError("non-detection rate undefined: no actual positives");
  return static_cast<double>(c.fn) / static_cast<double>(c.tp + c.fn);
}

double false_positive_proportion(const ConfusionCounts& c, FalsePositiveMode mode) {
  const std::size_t denom = mode == FalsePositiveMode::of_predicted_positives ? c.tp + c.fp : c.fp + c.tn;
  if (denom == 0) {
    throw DomainError(std::string("false-positive proportion undefined (") + std::string(to_string(mode)) +
                      "): zero denominator");
  }
  return static_cast<double>(c.fp) / static_cast<double>(denom);
}

EvaluationReport evaluate(const Mlp& mlp, const EncodedDataset& dataset, double threshold) {
  EvaluationReport r;
  r.defect_name = dataset.defect_name.empty() ? mlp.defect_name : dataset.defect_name;
  r.counts = confusion(mlp, dataset, threshold);
  if (r.counts.tp + r.counts.fn > 0) r.non_detection = non_detection_rate(r.counts);
  if (r.counts.tp + r.counts.fp > 0) {
    r.fp_of_predicted_positives = false_positive_proportion(r.counts, FalsePositiveMode::of_predicted_positives);
  }
  if (r.counts.fp + r.counts.tn > 0) {
    r.fp_of_actual_negatives = false_positive_proportion(r.counts, FalsePositiveMode::of_actual_negatives);
  }
  return r;
}

namespace {
json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }
}  // namespace

void to_json(json& j, const EvaluationReport& r) {
  j = {{"defect_name", r.defect_name},
       {"threshold", r.counts.threshold},
       {"counts", {{"tp", r.counts.tp}, {"fp", r.counts.fp}, {"tn", r.counts.tn}, {"fn", r.counts.fn}}},
       {"non_detection_rate", optional_json(r.non_detection)},
       {"false_positive_proportion",
        {{"of-predicted-positives", optional_json(r.fp_of_predicted_positives)},
         {"of-actual-negatives", optional_json(r.fp_of_actual_negatives)}}}};
}

void write_text(std::ostream& out, const EvaluationReport& r) {
  auto pct = [](const std::optional<double>& v) {
    std::ostringstream s;
    if (v) {
      s << std::fixed << std::setprecision(1) << 100.0 * *v << '%';
    } else {
      s << "n/a";
    }
    return s.str();
  };
  out << "defect:                  " << r.defect_name << '\n'
      << "threshold:               " << r.counts.threshold << '\n'
      << "samples:                 " << r.counts.total() << '\n'
      << "actual defects:          " << r.counts.tp + r.counts.fn << '\n'
      << "detected (tp):           " << r.counts.tp << '\n'
      << "missed (fn):             " << r.counts.fn << '\n'
      << "false alarms (fp):       " << r.counts.fp << '\n'
      << "true negatives (tn):     " << r.counts.tn << '\n'
      << "non-detection rate:      " << pct(r.non_detection) << '\n'
      << "false positives (of-predicted-positives): " << pct(r.fp_of_predicted_positives) << '\n'
      << "false positives (of-actual-negatives):    " << pct(r.fp_of_actual_negatives) << '\n';
}

void write_predictions(std::ostream& out, const Mlp& mlp, const EncodedDataset& dataset, double threshold) {
  check_threshold(threshold);
  out << "record_id,probability,predicted,actual\n";
  for (std::size_t k = 0; k < dataset.size(); ++k) {
    const auto row = static_cast<Eigen::Index>(k);
    const double p = mlp.forward(dataset.inputs.row(row).transpose());
    out << (k < dataset.record_ids.size() ? dataset.record_ids[k] : std::to_string(k)) << ',' << json(p).dump()
        << ',' << (is_alert(p, threshold) ? 1 : 0) << ',' << (dataset.targets[row] >= 0.5 ? 1 : 0) << '\n';
  }
}

}  // namespace qcnn
