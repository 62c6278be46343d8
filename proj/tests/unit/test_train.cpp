#include <doctest.h>

#include <cmath>

#include "qcnn/error.hpp"
#include "qcnn/synth.hpp"
#include "qcnn/train.hpp"

using namespace qcnn;

namespace {

std::pair<EncodedDataset, EncodedDataset> small_problem(std::size_t n = 300) {
  auto spec = SyntheticProcessSpec::lacquering_default();
  spec.seed = 77;
  const auto recs = generate(spec, n);
  const auto all = encode(recs, spec.schema, spec.defect_name);
  return split(all, {SplitMode::chronological, n / 2, 0});
}

TrainConfig quick_config() {
  TrainConfig c;
  c.n1_initial = 3;
  c.restarts = 4;
  c.lm.max_iterations = 25;
  c.master_seed = 3;
  c.threads = 1;
  return c;
}

}  // namespace

TEST_CASE("Nguyen-Widrow rows have norm beta") {
  Rng rng(1);
  const std::size_t n0 = 6, n1 = 5;
  const auto m = nguyen_widrow_init(n0, n1, rng);
  const double beta = 0.7 * std::pow(5.0, 1.0 / 6.0);
  CHECK(nguyen_widrow_beta(n0, n1) == doctest::Approx(beta));
  for (std::size_t i = 0; i < n1; ++i) {
    double norm2 = 0.0;
    for (std::size_t h = 0; h < n0; ++h) norm2 += std::pow(m.param(m.hidden_weight_index(i, h)), 2);
    CHECK(std::sqrt(norm2) == doctest::Approx(beta));
    CHECK(std::abs(m.param(m.hidden_bias_index(i))) <= beta);
    CHECK(std::abs(m.param(m.output_weight_index(i))) <= 0.5);
  }
  Rng again(1);
  CHECK(nguyen_widrow_init(n0, n1, again) == m);
}

TEST_CASE("training picks the restart with the lowest validation MSE") {
  const auto [ident, valid] = small_problem();
  const auto result = train(ident, valid, quick_config());
  REQUIRE(result.report.restarts.size() == 4);
  const auto& best = result.report.restarts[result.report.best_index];
  for (const auto& r : result.report.restarts) CHECK(best.validation_criterion <= r.validation_criterion);
  CHECK(validation_criterion(result.model, valid) == doctest::Approx(best.validation_criterion));
  CHECK(result.model.defect_name == "stains_on_back");
  CHECK(result.model.encoding == ident.encoding);
  CHECK(result.report.restarts[1].seed == mix_seed(3 + 1));
  // Trace entries are strictly decreasing under their own weights only, so
  // just check they exist and are finite.
  CHECK_FALSE(result.report.best_trace.empty());
}

TEST_CASE("results do not depend on the thread count") {
  const auto [ident, valid] = small_problem();
  auto c1 = quick_config();
  auto c3 = quick_config();
  c3.threads = 3;
  const auto a = train(ident, valid, c1);
  const auto b = train(ident, valid, c3);
  CHECK(a.model == b.model);
  CHECK(nlohmann::json(a.report).dump() == nlohmann::json(b.report).dump());
}

TEST_CASE("validation criterion is the plain mean squared error") {
  const auto [ident, valid] = small_problem(60);
  Mlp m(ident.inputs.cols(), 1);
  // z = 0.5 everywhere, so each residual is +-0.5.
  CHECK(validation_criterion(m, valid) == doctest::Approx(0.25));
  CHECK(criterion(m, valid, RobustConfig::squared()) == doctest::Approx(0.25));
}

TEST_CASE("config json accepts flat and nested layouts and keeps robust defaults") {
  auto c = nlohmann::json{{"n1_initial", 7}, {"max_lm_iterations", 12}, {"robust", {{"estimator", "huber"}}}}
               .get<TrainConfig>();
  CHECK(c.n1_initial == 7);
  CHECK(c.lm.max_iterations == 12);
  CHECK(c.robust.estimator == Estimator::huber);
  CHECK(c.robust.tuning == kHuberTuning);
  CHECK(c.robust.min_scale == TrainConfig::default_robust().min_scale);

  c = nlohmann::json{{"lm", {{"lambda_init", 0.5}}}}.get<TrainConfig>();
  CHECK(c.lm.lambda_init == 0.5);
  CHECK(c.robust.estimator == Estimator::bisquare);
  CHECK(c.robust.warmup_iterations == TrainConfig::default_robust().warmup_iterations);

  CHECK_THROWS_AS((nlohmann::json{{"restarts", 0}}.get<TrainConfig>()), DomainError);
}

TEST_CASE("mismatched datasets are rejected") {
  const auto [ident, valid] = small_problem(60);
  EncodedDataset narrow = valid;
  narrow.inputs = valid.inputs.leftCols(3);
  CHECK_THROWS_AS(train(ident, narrow, quick_config()), DimensionError);
}

TEST_CASE("a single LM step under fixed weights") {
  const auto [ident, valid] = small_problem(60);
  Rng rng(4);
  const auto m = nguyen_widrow_init(ident.inputs.cols(), 2, rng);
  const Eigen::VectorXd w = Eigen::VectorXd::Ones(ident.targets.size());
  const auto step = lm_step(m, ident.inputs, ident.targets, w, 1.0);
  const double before = weighted_criterion(residuals(m, ident), w);
  CHECK(step.criterion == doctest::Approx(weighted_criterion(residuals(step.candidate, ident), w)));
  // Heavy damping makes a small gradient step, which decreases the criterion.
  const auto damped = lm_step(m, ident.inputs, ident.targets, w, 1e6);
  CHECK(damped.criterion < before);
}
