#include <doctest.h>

#include <cmath>
#include <set>
#include <sstream>

#include "qcnn/error.hpp"
#include "qcnn/synth.hpp"

using namespace qcnn;

TEST_CASE("default process has the lacquering shape") {
  const auto s = SyntheticProcessSpec::lacquering_default();
  s.validate();
  CHECK(s.schema.size() == 11);
  CHECK(column_layout(s.schema).size() == 15);
  std::size_t binary = 0;
  for (const auto& c : column_layout(s.schema)) binary += c.state ? 1 : 0;
  CHECK(binary == 6);
  CHECK(s.null_factors == std::vector<std::string>{"passes"});
  const auto used = s.factors_in_risk();
  CHECK(std::find(used.begin(), used.end(), "passes") == used.end());
}

TEST_CASE("risk function by hand") {
  SyntheticProcessSpec s;
  s.schema = FactorSchema({FactorDef::continuous("a", FactorRole::controllable, {10.0, 20.0}),
                           FactorDef::discrete("k", FactorRole::protocol, {"p", "q"})});
  s.risk.intercept = 0.5;
  s.risk.terms = {{2.0, {{"a", std::nullopt}}}, {-1.0, {{"k", std::string("q")}}},
                  {3.0, {{"a", std::nullopt}, {"k", std::string("p")}}}};
  const FactorValues v{{"a", 17.5}, {"k", std::string("p")}};
  // u(a) = 2 * 7.5 / 10 - 1 = 0.5
  CHECK(unit_coordinate(s.schema.at("a"), 17.5) == doctest::Approx(0.5));
  CHECK(risk_logit(s, v) == doctest::Approx(0.5 + 1.0 + 1.5));
  CHECK(true_risk(s, v) == doctest::Approx(1.0 / (1.0 + std::exp(-3.0))));
  CHECK_THROWS_AS(exact_surrogate(s, uniform_encoding(s.schema)), DomainError);
}

TEST_CASE("generation is deterministic and well formed") {
  auto s = SyntheticProcessSpec::lacquering_default();
  s.seed = 5;
  const auto a = generate(s, 200);
  const auto b = generate(s, 200);
  CHECK(a == b);
  s.seed = 6;
  CHECK(generate(s, 200) != a);
  CHECK(a[0].record_id == "lot-000001");
  CHECK(a[0].timestamp == "2012-02-01T00:00:00Z");
  CHECK(a[6].timestamp == "2012-02-02T00:00:00Z");
  for (const auto& r : a) {
    s.schema.validate(r.factor_values, true);
    const double n = std::get<double>(r.factor_values.at("number_of_products"));
    CHECK(n == std::round(n));
  }
  std::ostringstream csv;
  write_records(csv, s.schema, a);
  std::istringstream in(csv.str());
  CHECK(load_records(in, s.schema) == a);
}

TEST_CASE("prevalence follows the risk function") {
  const auto s = SyntheticProcessSpec::lacquering_default();
  const auto recs = generate(s, 4000);
  double flags = 0.0, expected = 0.0;
  for (const auto& r : recs) {
    flags += r.defect_flags.at(s.defect_name) ? 1.0 : 0.0;
    expected += true_risk(s, r.factor_values);
  }
  // Binomial sd of the count is below sqrt(4000 * 0.25) ~ 32.
  CHECK(std::abs(flags - expected) < 130.0);
  CHECK(flags / 4000.0 > 0.08);
  CHECK(flags / 4000.0 < 0.16);
}

TEST_CASE("label noise flips flags") {
  auto s = SyntheticProcessSpec::lacquering_default();
  s.label_noise = 0.5;
  const auto recs = generate(s, 2000);
  double flags = 0.0;
  for (const auto& r : recs) flags += r.defect_flags.at(s.defect_name) ? 1.0 : 0.0;
  CHECK(std::abs(flags / 2000.0 - 0.5) < 0.05);
  s.label_noise = 0.7;
  CHECK_THROWS_AS(s.validate(), SchemaError);
}

TEST_CASE("outlier injection moves rows outside the widened range") {
  const auto s = SyntheticProcessSpec::lacquering_default();
  const auto g = generate_with_outliers(s, 300, 12);
  REQUIRE(g.outlier_rows.size() == 12);
  CHECK(std::is_sorted(g.outlier_rows.begin(), g.outlier_rows.end()));
  CHECK(std::set<std::size_t>(g.outlier_rows.begin(), g.outlier_rows.end()).size() == 12);
  const auto cleaned = clean(g.records, s.schema, CleanRules::from_schema(s.schema));
  REQUIRE(cleaned.log.size() == 12);
  for (std::size_t k = 0; k < 12; ++k) CHECK(cleaned.log[k].row == g.outlier_rows[k]);
}

TEST_CASE("exact surrogate reproduces the generator") {
  const auto s = SyntheticProcessSpec::lacquering_default();
  const auto m = exact_surrogate(s, uniform_encoding(s.schema));
  CHECK(m.schema_fingerprint == s.schema.fingerprint());
  Rng rng(3);
  for (int k = 0; k < 200; ++k) {
    const auto v = sample_factors(s, rng);
    CHECK(m.predict(v) == doctest::Approx(true_risk(s, v)).epsilon(1e-6));
  }
}

TEST_CASE("uniform encoding matches the sampling moments") {
  const auto s = SyntheticProcessSpec::lacquering_default();
  const auto enc = uniform_encoding(s.schema);
  const auto& bw = enc.norms.at("basis_weight");
  CHECK(bw.mean == doctest::Approx(120.0));
  CHECK(bw.stddev == doctest::Approx(80.0 / std::sqrt(12.0)));
}

TEST_CASE("spec json round trip and validation") {
  const auto s = SyntheticProcessSpec::lacquering_default();
  const auto back = nlohmann::json(s).get<SyntheticProcessSpec>();
  CHECK(nlohmann::json(back) == nlohmann::json(s));
  auto bad = nlohmann::json(s);
  bad["null_factors"] = {"basis_weight"};
  CHECK_THROWS_AS(bad.get<SyntheticProcessSpec>(), SchemaError);
}
