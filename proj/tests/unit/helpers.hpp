#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "qcnn/data.hpp"
#include "qcnn/net.hpp"
#include "qcnn/random.hpp"
#include "qcnn/schema.hpp"

namespace qcnn::testing {

// Two continuous factors and one three-state factor: 5 encoded columns.
inline FactorSchema small_schema() {
  return FactorSchema({
      FactorDef::continuous("speed", FactorRole::controllable, {0.0, 10.0}),
      FactorDef::discrete("shift", FactorRole::protocol, {"a", "b", "c"}),
      FactorDef::continuous("heat", FactorRole::non_controllable, {-5.0, 5.0}),
  });
}

inline ProductionRecord make_record(int i, double speed, const std::string& shift, double heat, bool defect) {
  ProductionRecord r;
  r.record_id = "r" + std::to_string(i);
  r.timestamp = "2012-02-01T" + std::string(i < 10 ? "0" : "") + std::to_string(i % 24) + ":00:00Z";
  r.factor_values = {{"speed", speed}, {"shift", shift}, {"heat", heat}};
  r.defect_flags = {{"stain", defect}};
  return r;
}

// Random network with every parameter drawn in [-scale, scale].
inline Mlp random_mlp(std::size_t n0, std::size_t n1, Rng& rng, double scale = 1.0) {
  Mlp m(n0, n1);
  for (std::size_t p = 0; p < m.parameter_count(); ++p) m.set_param(p, rng.uniform(-scale, scale));
  return m;
}

inline Eigen::MatrixXd random_inputs(std::size_t n, std::size_t n0, Rng& rng, double scale = 1.5) {
  Eigen::MatrixXd X(n, n0);
  for (Eigen::Index i = 0; i < X.rows(); ++i)
    for (Eigen::Index j = 0; j < X.cols(); ++j) X(i, j) = rng.uniform(-scale, scale);
  return X;
}

}  // namespace qcnn::testing
