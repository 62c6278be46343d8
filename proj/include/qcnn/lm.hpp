#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <limits>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "qcnn/error.hpp"
#include "qcnn/robust.hpp"

namespace qcnn {

struct LmSettings {
  int max_iterations = 200;  // accepted + rejected steps
  double lambda_init = 1e-2;
  double lambda_up = 10.0;
  double lambda_down = 0.1;
  double lambda_max = 1e10;
  double lambda_min = 1e-12;
  double convergence_tol = 1e-8;  // relative criterion decrease on an accepted step

  void validate() const;
};

void to_json(nlohmann::json& j, const LmSettings& s);
void from_json(const nlohmann::json& j, LmSettings& s);

// Marquardt step: solves (A + lambda * D) delta = g with A = J^T W J,
// g = J^T W e and D = diag(A), floored at 1e-9 * max(diag(A)) so parameters
// with a vanishing gradient column stay regularised. Throws LmBreakdown when
// the damped system cannot be solved.
Eigen::VectorXd damped_step(const Eigen::Ref<const Eigen::MatrixXd>& normal_matrix,
                            const Eigen::Ref<const Eigen::VectorXd>& gradient, double lambda);

// Builds A = J^T W J and g = J^T W e.
void normal_equations(const Eigen::Ref<const Eigen::MatrixXd>& J, const Eigen::Ref<const Eigen::VectorXd>& e,
                      const Eigen::Ref<const Eigen::VectorXd>& w, Eigen::MatrixXd& A, Eigen::VectorXd& g);

inline double weighted_criterion(const Eigen::Ref<const Eigen::VectorXd>& e, const Eigen::Ref<const Eigen::VectorXd>& w) {
  return (w.array() * e.array().square()).sum() / static_cast<double>(e.size());
}

// A least-squares model y ~ f(theta). predict returns f over all samples,
// jacobian the N x P matrix df/dtheta.
template <class P>
concept LeastSquaresProblem = requires(P& p, const Eigen::VectorXd& theta) {
  { p.predict(theta) } -> std::convertible_to<Eigen::VectorXd>;
  { p.jacobian(theta) } -> std::convertible_to<Eigen::MatrixXd>;
  { p.targets() } -> std::convertible_to<const Eigen::VectorXd&>;
};

struct AcceptedStep {
  double before = 0.0;  // criterion at the old parameters
  double after = 0.0;   // criterion at the new parameters, same sample weights
};

struct LmOutcome {
  Eigen::VectorXd params;
  double criterion = 0.0;  // weighted criterion at `params` with its own weights
  int iterations = 0;
  bool converged = false;
  std::vector<AcceptedStep> steps;
  std::vector<double> lambdas;  // damping used on every iteration
};

// Iteratively reweighted Levenberg-Marquardt. Each time the parameters move,
// residuals are recomputed and the robust weights re-estimated; steps are
// accepted when they lower the criterion under the current weights.
template <LeastSquaresProblem P>
LmOutcome levenberg_marquardt(P& problem, Eigen::VectorXd theta, const LmSettings& settings,
                              const RobustConfig& robust) {
  settings.validate();
  const Eigen::VectorXd& y = problem.targets();
  // Unit weights until `robust_from`. Convergence reached during the warm-up
  // only ends the warm-up, so the returned fit is always the robust one.
  int robust_from = robust.estimator == Estimator::squared ? 0 : robust.warmup_iterations;
  auto weights_for = [&](const Eigen::VectorXd& e, int iteration) -> Eigen::VectorXd {
    if (iteration < robust_from) return Eigen::VectorXd::Ones(e.size());
    return robust_weights(e, robust);
  };

  LmOutcome out;
  Eigen::VectorXd e = y - problem.predict(theta);
  Eigen::VectorXd w = weights_for(e, 0);
  double crit = weighted_criterion(e, w);
  double lambda = settings.lambda_init;
  Eigen::MatrixXd A;
  Eigen::VectorXd g;
  bool stale = true;
  auto finish_warmup = [&] {
    if (out.iterations >= robust_from) return false;
    robust_from = out.iterations;
    w = weights_for(e, out.iterations);
    crit = weighted_criterion(e, w);
    stale = true;
    return true;
  };

  while (out.iterations < settings.max_iterations) {
    if (crit == 0.0) {
      if (finish_warmup() && crit > 0.0) continue;
      out.converged = true;
      break;
    }
    if (stale) {
      normal_equations(problem.jacobian(theta), e, w, A, g);
      stale = false;
    }
    ++out.iterations;
    out.lambdas.push_back(lambda);
    Eigen::VectorXd delta;
    try {
      delta = damped_step(A, g, lambda);
    } catch (const LmBreakdown&) {
      if (lambda >= settings.lambda_max) throw LmBreakdown("LM breakdown: damped system singular at lambda_max");
      lambda = std::min(lambda * settings.lambda_up, settings.lambda_max);
      continue;
    }
    const Eigen::VectorXd candidate = theta + delta;
    const Eigen::VectorXd e_new = y - problem.predict(candidate);
    const double crit_new = weighted_criterion(e_new, w);
    if (std::isfinite(crit_new) && crit_new < crit) {
      out.steps.push_back({crit, crit_new});
      const double rel = (crit - crit_new) / crit;
      theta = candidate;
      e = e_new;
      w = weights_for(e, out.iterations);
      crit = weighted_criterion(e, w);
      lambda = std::max(lambda * settings.lambda_down, settings.lambda_min);
      stale = true;
      // The step that switches on reweighting says nothing about the robust fit.
      const bool just_reweighted = robust_from > 0 && out.iterations == robust_from;
      if (rel < settings.convergence_tol && !just_reweighted && !finish_warmup()) {
        out.converged = true;
        break;
      }
    } else {
      if (lambda >= settings.lambda_max) {
        // No decrease even under maximal damping: a stationary point.
        if (finish_warmup()) {
          lambda = settings.lambda_init;
          continue;
        }
        out.converged = true;
        break;
      }
      lambda = std::min(lambda * settings.lambda_up, settings.lambda_max);
    }
  }
  out.params = std::move(theta);
  out.criterion = crit;
  return out;
}

}  // namespace qcnn
