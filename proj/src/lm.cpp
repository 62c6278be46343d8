#include "qcnn/lm.hpp"

#include <Eigen/Cholesky>

namespace qcnn {

void LmSettings::validate() const {
  if (max_iterations < 1) throw DomainError("max_lm_iterations must be >= 1");
  if (!(lambda_init > 0.0)) throw DomainError("lambda_init must be > 0");
  if (!(lambda_up > 1.0)) throw DomainError("lambda_up must be > 1");
  if (!(lambda_down > 0.0 && lambda_down < 1.0)) throw DomainError("lambda_down must lie in (0, 1)");
  if (!(lambda_max >= lambda_init)) throw DomainError("lambda_max must be >= lambda_init");
  if (!(lambda_min > 0.0 && lambda_min <= lambda_init)) throw DomainError("lambda_min must lie in (0, lambda_init]");
  if (!(convergence_tol > 0.0)) throw DomainError("convergence_tol must be > 0");
}

void to_json(nlohmann::json& j, const LmSettings& s) {
  j = {{"max_lm_iterations", s.max_iterations}, {"lambda_init", s.lambda_init}, {"lambda_up", s.lambda_up},
       {"lambda_down", s.lambda_down},          {"lambda_max", s.lambda_max},   {"lambda_min", s.lambda_min},
       {"convergence_tol", s.convergence_tol}};
}

void from_json(const nlohmann::json& j, LmSettings& s) {
  s = LmSettings{};
  s.max_iterations = j.value("max_lm_iterations", s.max_iterations);
  s.lambda_init = j.value("lambda_init", s.lambda_init);
  s.lambda_up = j.value("lambda_up", s.lambda_up);
  s.lambda_down = j.value("lambda_down", s.lambda_down);
  s.lambda_max = j.value("lambda_max", s.lambda_max);
  s.lambda_min = j.value("lambda_min", s.lambda_min);
  s.convergence_tol = j.value("convergence_tol", s.convergence_tol);
  s.validate();
}

void normal_equations(const Eigen::Ref<const Eigen::MatrixXd>& J, const Eigen::Ref<const Eigen::VectorXd>& e,
                      const Eigen::Ref<const Eigen::VectorXd>& w, Eigen::MatrixXd& A, Eigen::VectorXd& g) {
  if (J.rows() != e.size() || e.size() != w.size()) throw DimensionError("normal_equations: size mismatch");
  const Eigen::MatrixXd SJ = w.cwiseSqrt().asDiagonal() * J;
  Eigen::MatrixXd lower = Eigen::MatrixXd::Zero(J.cols(), J.cols());
  lower.selfadjointView<Eigen::Lower>().rankUpdate(SJ.transpose());
  A = lower.selfadjointView<Eigen::Lower>();
  g = J.transpose() * w.cwiseProduct(e);
}

Eigen::VectorXd damped_step(const Eigen::Ref<const Eigen::MatrixXd>& normal_matrix,
                            const Eigen::Ref<const Eigen::VectorXd>& gradient, double lambda) {
  const auto P = normal_matrix.rows();
  if (normal_matrix.cols() != P || gradient.size() != P) throw DimensionError("damped_step: size mismatch");
  if (P == 0) return Eigen::VectorXd();
  Eigen::VectorXd diag = normal_matrix.diagonal();
  const double peak = diag.maxCoeff();
  if (!(peak > 0.0) || !std::isfinite(peak)) throw LmBreakdown("LM breakdown: normal matrix has no curvature");
  diag = diag.cwiseMax(1e-9 * peak);
  Eigen::MatrixXd M = normal_matrix;
  M.diagonal() += lambda * diag;
  Eigen::LLT<Eigen::MatrixXd> llt(M);
  if (llt.info() != Eigen::Success) throw LmBreakdown("LM breakdown: damped system is not positive definite");
  Eigen::VectorXd delta = llt.solve(gradient);
  if (!delta.allFinite()) throw LmBreakdown("LM breakdown: non-finite step");
  return delta;
}

}  // namespace qcnn
