#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "qcnn/data.hpp"
#include "qcnn/net.hpp"
#include "qcnn/random.hpp"
#include "qcnn/schema.hpp"

namespace qcnn {

// A factor inside a risk term: for continuous factors the value rescaled to
// [-1, 1] across the schema range, for discrete factors the indicator of
// `state`.
struct RiskFeature {
  std::string factor;
  std::optional<std::string> state;
};

struct RiskTerm {
  double coefficient = 0.0;
  std::vector<RiskFeature> features;  // product of features; empty = constant
};

// logit(p) = intercept + sum_t coefficient_t * prod(features_t)
struct RiskModel {
  double intercept = 0.0;
  std::vector<RiskTerm> terms;
};

struct SyntheticProcessSpec {
  FactorSchema schema;
  RiskModel risk;
  std::vector<std::string> null_factors;
  double label_noise = 0.0;  // probability of flipping each sampled flag
  std::uint64_t seed = 1;
  std::string defect_name = "stains_on_back";

  // Lacquering-line analogue: 9 continuous and 2 three-state factors
  // (15 encoded inputs, 6 binary), passes as the null factor and roughly 12%
  // defect prevalence.
  static SyntheticProcessSpec lacquering_default();

  // Throws SchemaError on unknown factors/states, a null factor used by the
  // risk function, or a noise rate outside [0, 0.5].
  void validate() const;
  std::vector<std::string> factors_in_risk() const;
};

void to_json(nlohmann::json& j, const SyntheticProcessSpec& s);
void from_json(const nlohmann::json& j, SyntheticProcessSpec& s);
SyntheticProcessSpec load_synth_spec(const std::string& path);

// Continuous factor value mapped to [-1, 1] over its range.
double unit_coordinate(const FactorDef& def, double value);

double risk_logit(const SyntheticProcessSpec& spec, const FactorValues& values);
double true_risk(const SyntheticProcessSpec& spec, const FactorValues& values);

// Factor values drawn uniformly (continuous), uniformly over integers (count
// factors) or uniformly over states (discrete).
FactorValues sample_factors(const SyntheticProcessSpec& spec, Rng& rng);

// n records, four hours apart from 2012-02-01T00:00:00Z; the defect flag is
// Bernoulli(true_risk) then flipped with probability label_noise.
std::vector<ProductionRecord> generate(const SyntheticProcessSpec& spec, std::size_t n);

struct GeneratedWithOutliers {
  std::vector<ProductionRecord> records;
  std::vector<std::size_t> outlier_rows;  // ascending
};

// As generate, then `count` distinct rows get one continuous factor moved
// outside the schema range widened by `widen`.
GeneratedWithOutliers generate_with_outliers(const SyntheticProcessSpec& spec, std::size_t n, std::size_t count,
                                             double widen = 0.10);

// Exact network form of a risk function made of single-feature terms:
// one tanh unit kept in its linear regime by a tiny input slope, with the
// matching output gain. Throws DomainError for interaction terms.
Mlp exact_surrogate(const SyntheticProcessSpec& spec, const InputEncoding& encoding, double slope = 1e-5);

// Encoding whose standardization matches the uniform sampling distribution.
InputEncoding uniform_encoding(const FactorSchema& schema);

}  // namespace qcnn
