#pragma once

// Damped least squares with an adaptive trust region (Levenberg-Marquardt with
// Nielsen's damping update) and central finite-difference Jacobians.

#include "hitspace/core.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>

namespace hitspace {

struct LeastSquaresOptions {
  int max_iterations = 100;
  double gradient_tolerance = 1e-8;
  double step_tolerance = 1e-10;
  // Finite-difference step, relative to max(|x_i|, typical_i).
  double fd_relative_step = 1e-6;
  double initial_damping = 1e-3;
};

enum class StopReason { GradientSmall, StepSmall, MaxIterations, DampingExhausted };

inline const char* to_string(StopReason r) {
  switch (r) {
    case StopReason::GradientSmall: return "gradient";
    case StopReason::StepSmall: return "step";
    case StopReason::MaxIterations: return "max_iterations";
    case StopReason::DampingExhausted: return "damping";
  }
  return "unknown";
}

struct LeastSquaresResult {
  Eigen::VectorXd x;
  double initial_cost = 0.0;  // 0.5 * |r|^2
  double final_cost = 0.0;
  int iterations = 0;
  int evaluations = 0;
  StopReason reason = StopReason::MaxIterations;
};

/// Residual functions return std::nullopt (or throw hitspace::Error) when the
/// model cannot be evaluated at x; such trial steps are rejected and the trust
/// region shrinks. The starting point must be evaluable.
template <typename ResidualFn>
LeastSquaresResult least_squares(ResidualFn&& residuals, Eigen::VectorXd x0,
                                 const Eigen::VectorXd& typical, const LeastSquaresOptions& opt = {}) {
  using Eigen::MatrixXd;
  using Eigen::VectorXd;
  const Eigen::Index n = x0.size();

  LeastSquaresResult out;
  auto eval = [&](const VectorXd& x) -> std::optional<VectorXd> {
    ++out.evaluations;
    try {
      std::optional<VectorXd> r = residuals(x);
      if (r && !r->allFinite()) return std::nullopt;
      return r;
    } catch (const Error&) {
      return std::nullopt;
    }
  };

  std::optional<VectorXd> r0 = eval(x0);
  if (!r0) throw Error(ErrorKind::Numeric, "least_squares: residuals undefined at the starting point");
  VectorXd x = std::move(x0);
  VectorXd r = std::move(*r0);
  double cost = 0.5 * r.squaredNorm();
  out.initial_cost = cost;

  auto jacobian = [&](const VectorXd& at) {
    MatrixXd J(r.size(), n);
    for (Eigen::Index j = 0; j < n; ++j) {
      const double h = opt.fd_relative_step * std::max(std::abs(at[j]), typical[j]);
      VectorXd xp = at, xm = at;
      xp[j] += h;
      xm[j] -= h;
      auto rp = eval(xp);
      auto rm = eval(xm);
      if (rp && rm && rp->size() == r.size() && rm->size() == r.size()) {
        J.col(j) = (*rp - *rm) / (2.0 * h);
      } else if (rp && rp->size() == r.size()) {
        J.col(j) = (*rp - r) / h;
      } else if (rm && rm->size() == r.size()) {
        J.col(j) = (r - *rm) / h;
      } else {
        J.col(j).setZero();
      }
    }
    return J;
  };

  MatrixXd J = jacobian(x);
  double mu = -1.0;
  double nu = 2.0;
  for (out.iterations = 0; out.iterations < opt.max_iterations; ++out.iterations) {
    const VectorXd g = J.transpose() * r;
    if (g.lpNorm<Eigen::Infinity>() < opt.gradient_tolerance) {
      out.reason = StopReason::GradientSmall;
      break;
    }
    const MatrixXd A = J.transpose() * J;
    VectorXd diag = A.diagonal().cwiseMax(1e-12 * std::max(1.0, A.diagonal().maxCoeff()));
    if (mu < 0.0) mu = opt.initial_damping;

    bool accepted = false;
    bool step_small = false;
    for (int attempt = 0; attempt < 60 && !accepted; ++attempt) {
      MatrixXd M = A;
      M.diagonal() += mu * diag;
      const VectorXd delta = M.ldlt().solve(-g);
      if (!delta.allFinite()) {
        mu *= nu;
        nu *= 2.0;
        continue;
      }
      if (delta.norm() < opt.step_tolerance * (x.norm() + opt.step_tolerance)) {
        step_small = true;
        break;
      }
      const VectorXd x_new = x + delta;
      auto r_new = eval(x_new);
      if (!r_new || r_new->size() != r.size()) {
        mu *= nu;
        nu *= 2.0;
        continue;
      }
      const double cost_new = 0.5 * r_new->squaredNorm();
      const double predicted = 0.5 * delta.dot(mu * diag.cwiseProduct(delta) - g);
      const double rho = predicted > 0.0 ? (cost - cost_new) / predicted : -1.0;
      if (cost_new < cost && rho > 0.0) {
        x = x_new;
        r = std::move(*r_new);
        cost = cost_new;
        mu *= std::max(1.0 / 3.0, 1.0 - std::pow(2.0 * rho - 1.0, 3));
        nu = 2.0;
        accepted = true;
      } else {
        mu *= nu;
        nu *= 2.0;
      }
    }
    if (step_small) {
      out.reason = StopReason::StepSmall;
      break;
    }
    if (!accepted) {
      out.reason = StopReason::DampingExhausted;
      break;
    }
    J = jacobian(x);
  }
  if (out.iterations >= opt.max_iterations) out.reason = StopReason::MaxIterations;
  out.x = std::move(x);
  out.final_cost = cost;
  return out;
}

}  // namespace hitspace
