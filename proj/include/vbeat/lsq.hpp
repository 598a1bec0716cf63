#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <vector>

namespace vbeat {

struct LsqOptions {
  int max_iterations = 500;
  double lambda0 = 1e-3;
  double lambda_down = 0.3;
  double lambda_up = 3.0;
  double lambda_max = 1e12;
  /// Convergence: scaled gradient below this.
  double gradient_tol = 1e-8;
  /// Stagnation: relative step and relative cost change below these.
  double step_tol = 1e-13;
  double cost_tol = 1e-15;
};

struct LsqResult {
  Eigen::VectorXd params;
  Eigen::VectorXd residuals;
  Eigen::MatrixXd jacobian;
  double cost = 0.0;  // 0.5 * |r|^2
  int iterations = 0;
  bool converged = false;
  std::vector<double> cost_history;  // accepted iterates only
};

/// Damped Gauss-Newton (Levenberg-style lambda adaptation with Marquardt
/// diagonal scaling). `f(x, r, J)` fills residuals r (size m) and the
/// Jacobian J (m x n). `data_scale` sets the units of the gradient test.
template <class F>
LsqResult damped_gauss_newton(F&& f, Eigen::VectorXd x0, double data_scale, const LsqOptions& opt = {}) {
  const Eigen::Index n = x0.size();
  LsqResult res;
  res.params = std::move(x0);
  f(res.params, res.residuals, res.jacobian);
  res.cost = 0.5 * res.residuals.squaredNorm();
  res.cost_history.push_back(res.cost);

  const double scale = std::max(data_scale, std::numeric_limits<double>::min());
  auto scaled_gradient = [&](const Eigen::MatrixXd& j, const Eigen::VectorXd& r) {
    const Eigen::VectorXd g = j.transpose() * r;
    double worst = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double cn = j.col(i).norm();
      if (cn > 0) worst = std::max(worst, std::abs(g(i)) / cn);
    }
    return worst / scale;
  };

  double lambda = opt.lambda0;
  Eigen::VectorXd r_try;
  Eigen::MatrixXd j_try;
  for (int it = 0; it < opt.max_iterations; ++it) {
    res.iterations = it + 1;
    if (scaled_gradient(res.jacobian, res.residuals) < opt.gradient_tol) {
      res.converged = true;
      return res;
    }
    const Eigen::MatrixXd jtj = res.jacobian.transpose() * res.jacobian;
    const Eigen::VectorXd g = res.jacobian.transpose() * res.residuals;
    bool accepted = false;
    while (lambda < opt.lambda_max) {
      Eigen::MatrixXd a = jtj;
      for (Eigen::Index i = 0; i < n; ++i) a(i, i) += lambda * std::max(jtj(i, i), 1e-300);
      const Eigen::VectorXd step = a.ldlt().solve(-g);
      if (!step.allFinite()) {
        lambda *= opt.lambda_up;
        continue;
      }
      const Eigen::VectorXd x_try = res.params + step;
      f(x_try, r_try, j_try);
      const double c_try = 0.5 * r_try.squaredNorm();
      if (std::isfinite(c_try) && c_try <= res.cost) {
        const double rel_step = step.norm() / (res.params.norm() + 1e-300);
        const double rel_cost = (res.cost - c_try) / std::max(res.cost, 1e-300);
        res.params = x_try;
        std::swap(res.residuals, r_try);
        std::swap(res.jacobian, j_try);
        res.cost = c_try;
        res.cost_history.push_back(c_try);
        lambda = std::max(lambda * opt.lambda_down, 1e-15);
        accepted = true;
        if (rel_step < opt.step_tol || (rel_cost < opt.cost_tol && rel_step < 1e-8)) {
          res.converged = scaled_gradient(res.jacobian, res.residuals) < opt.gradient_tol || rel_step < opt.step_tol;
          return res;
        }
        break;
      }
      lambda *= opt.lambda_up;
    }
    if (!accepted) {
      // No descent direction left: at a minimum to working precision if the gradient is small.
      res.converged = scaled_gradient(res.jacobian, res.residuals) < 1e-6;
      return res;
    }
  }
  res.converged = scaled_gradient(res.jacobian, res.residuals) < opt.gradient_tol;
  return res;
}

/// Unscaled covariance estimate s^2 (J^T J)^-1.
inline Eigen::MatrixXd covariance(const LsqResult& r) {
  const Eigen::Index m = r.residuals.size(), n = r.params.size();
  const double dof = static_cast<double>(std::max<Eigen::Index>(m - n, 1));
  const double s2 = r.residuals.squaredNorm() / dof;
  const Eigen::MatrixXd jtj = r.jacobian.transpose() * r.jacobian;
  return s2 * jtj.completeOrthogonalDecomposition().pseudoInverse();
}

}  // namespace vbeat
