#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "helpers.hpp"
#include "qcnn/error.hpp"
#include "qcnn/net.hpp"

using namespace qcnn;
using qcnn::testing::random_inputs;
using qcnn::testing::random_mlp;

namespace {

// Straight transcription of the network formula, independent of Mlp::forward.
double reference_forward(const Mlp& m, const Eigen::VectorXd& x) {
  double a = m.param(m.output_bias_index());
  for (std::size_t i = 0; i < m.n_hidden(); ++i) {
    double s = m.param(m.hidden_bias_index(i));
    for (std::size_t h = 0; h < m.n_inputs(); ++h) s += m.param(m.hidden_weight_index(i, h)) * x[static_cast<Eigen::Index>(h)];
    a += m.param(m.output_weight_index(i)) * std::tanh(s);
  }
  return 1.0 / (1.0 + std::exp(-a));
}

}  // namespace

TEST_CASE("flat parameter layout") {
  Mlp m(3, 2);
  CHECK(m.parameter_count() == 3 * 2 + 2 + 2 + 1);
  CHECK(m.hidden_weight_index(1, 2) == 5);
  CHECK(m.hidden_bias_index(0) == 6);
  CHECK(m.output_weight_index(1) == 9);
  CHECK(m.output_bias_index() == 10);
  CHECK_THROWS_AS(Mlp(0, 2), DomainError);
}

TEST_CASE("forward matches the formula") {
  Rng rng(11);
  for (int t = 0; t < 20; ++t) {
    const auto m = random_mlp(4, 3, rng, 2.0);
    const auto X = random_inputs(5, 4, rng);
    const auto z = m.forward_batch(X);
    for (Eigen::Index k = 0; k < X.rows(); ++k) {
      CHECK(z[k] == doctest::Approx(reference_forward(m, X.row(k).transpose())).epsilon(1e-14));
      CHECK(m.forward(X.row(k).transpose()) == doctest::Approx(z[k]).epsilon(1e-15));
    }
  }
}

TEST_CASE("parameter jacobian matches central differences") {
  Rng rng(5);
  for (int t = 0; t < 10; ++t) {
    auto m = random_mlp(3, 2, rng);
    m.deactivate(m.hidden_weight_index(1, 0));
    const auto X = random_inputs(4, 3, rng);
    const auto J = m.jacobian_wrt_params(X);
    const auto idx = m.active_indices();
    REQUIRE(J.cols() == static_cast<Eigen::Index>(idx.size()));
    const double h = 1e-6;
    for (std::size_t c = 0; c < idx.size(); ++c) {
      Mlp up = m, dn = m;
      up.set_param(idx[c], m.param(idx[c]) + h);
      dn.set_param(idx[c], m.param(idx[c]) - h);
      const Eigen::VectorXd fd = (up.forward_batch(X) - dn.forward_batch(X)) / (2 * h);
      for (Eigen::Index k = 0; k < X.rows(); ++k) CHECK(J(k, static_cast<Eigen::Index>(c)) == doctest::Approx(fd[k]).epsilon(1e-6));
    }
  }
}

TEST_CASE("input sensitivity matches central differences") {
  Rng rng(6);
  for (int t = 0; t < 10; ++t) {
    const auto m = random_mlp(4, 3, rng);
    const Eigen::VectorXd x = random_inputs(1, 4, rng).row(0).transpose();
    const auto s = m.sensitivity_wrt_inputs(x);
    const double h = 1e-6;
    for (Eigen::Index j = 0; j < x.size(); ++j) {
      Eigen::VectorXd up = x, dn = x;
      up[j] += h;
      dn[j] -= h;
      CHECK(s[j] == doctest::Approx((m.forward(up) - m.forward(dn)) / (2 * h)).epsilon(1e-6));
    }
  }
}

TEST_CASE("mask semantics") {
  Rng rng(7);
  auto m = random_mlp(2, 2, rng);
  const auto w = m.hidden_weight_index(0, 1);
  m.deactivate(w);
  CHECK_FALSE(m.active(w));
  CHECK(m.param(w) == 0.0);
  CHECK(m.active_count() == m.parameter_count() - 1);
  CHECK_THROWS_AS(m.set_param(w, 0.5), DomainError);
  m.set_param(w, 0.0);

  Eigen::VectorXd theta = m.active_params();
  theta.array() += 1.0;
  m.set_active_params(theta);
  CHECK(m.param(w) == 0.0);
  CHECK_THROWS_AS(m.set_active_params(Eigen::VectorXd::Zero(3)), DimensionError);

  CHECK(m.input_connected(1));
  m.deactivate(m.hidden_weight_index(1, 1));
  CHECK_FALSE(m.input_connected(1));
  m.deactivate(m.output_weight_index(0));
  CHECK_FALSE(m.neuron_alive(0));
  CHECK(m.alive_neurons() == 1);
}

TEST_CASE("input width is checked") {
  Mlp m(3, 1);
  CHECK_THROWS_AS(m.forward(Eigen::VectorXd::Zero(2)), DimensionError);
  CHECK_THROWS_AS(m.forward_batch(Eigen::MatrixXd::Zero(4, 5)), DimensionError);
}

TEST_CASE("model files round-trip bit-exactly") {
  Rng rng(8);
  auto m = random_mlp(3, 4, rng, 3.0);
  m.set_param(0, 0.1 + 0.2);  // not representable in short decimal
  m.deactivate(m.hidden_weight_index(2, 1));
  m.defect_name = "stain";
  m.schema_fingerprint = "0123456789abcdef";
  m.encoding.columns = {{"a", std::nullopt}, {"b", std::string("x")}, {"b", std::string("y")}};
  m.encoding.norms = {{"a", {1.0 / 3.0, 2.5}}};
  const auto path = (std::filesystem::temp_directory_path() / "qcnn_test_model.json").string();
  save_model(m, path);
  const auto back = load_model(path);
  std::remove(path.c_str());
  CHECK(back == m);
  CHECK(back.param(0) == m.param(0));

  auto j = model_to_json(m);
  j["format_version"] = 99;
  CHECK_THROWS_AS(model_from_json(j), ParseError);
  CHECK_THROWS_AS(load_model("/nonexistent/model.json"), ParseError);
}
