#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "cforge/error.hpp"
#include "cforge/probes.hpp"

namespace cforge::probes {

namespace {

constexpr double kTau = 1e-12;

void check_labels(const Labels& y) {
  bool pos = false;
  bool neg = false;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    if (y(i) == 1) {
      pos = true;
    } else if (y(i) == -1) {
      neg = true;
    } else {
      throw Error(Errc::invalid_argument, "labels must be +1 or -1");
    }
  }
  if (!pos || !neg) throw Error(Errc::invalid_argument, "training set has a single class");
}

}  // namespace

double scale_gamma(const MatrixXd& x) {
  if (x.size() == 0) throw Error(Errc::invalid_argument, "empty matrix");
  const double mean = x.mean();
  const double var = (x.array() - mean).square().mean();
  if (!(var > 0)) return 1.0;
  return 1.0 / (static_cast<double>(x.cols()) * var);
}

MatrixXd rbf_kernel(const MatrixXd& a, const MatrixXd& b, double gamma) {
  if (a.cols() != b.cols()) throw Error(Errc::invalid_argument, "kernel operands differ in width");
  const VectorXd an = a.rowwise().squaredNorm();
  const VectorXd bn = b.rowwise().squaredNorm();
  MatrixXd d = -2.0 * (a * b.transpose());
  d.colwise() += an;
  d.rowwise() += bn.transpose();
  return (-gamma * d.array().max(0.0)).exp().matrix();
}

double dual_objective(const MatrixXd& kernel, const Labels& y, const VectorXd& alpha) {
  const VectorXd ay = alpha.cwiseProduct(y.cast<double>());
  return alpha.sum() - 0.5 * ay.dot(kernel * ay);
}

SmoResult solve_svm_dual(const MatrixXd& kernel, const Labels& y, double C, double eps, long max_iter) {
  const auto n = kernel.rows();
  if (kernel.cols() != n || y.size() != n) throw Error(Errc::invalid_argument, "kernel/label shape mismatch");
  if (!(C > 0)) throw Error(Errc::invalid_argument, "C must be > 0");
  if (!(eps > 0)) throw Error(Errc::invalid_argument, "eps must be > 0");
  check_labels(y);
  if (max_iter <= 0) max_iter = std::max<long>(10'000'000L, 100L * static_cast<long>(n));

  const VectorXd yd = y.cast<double>();
  VectorXd alpha = VectorXd::Zero(n);
  VectorXd grad = VectorXd::Constant(n, -1.0);  // Q alpha - e
  auto in_up = [&](Eigen::Index t) { return (y(t) == 1 && alpha(t) < C) || (y(t) == -1 && alpha(t) > 0); };
  auto in_low = [&](Eigen::Index t) { return (y(t) == 1 && alpha(t) > 0) || (y(t) == -1 && alpha(t) < C); };

  SmoResult result;
  double violation = 0.0;
  for (;;) {
    double gmax = -std::numeric_limits<double>::infinity();
    double gmin = std::numeric_limits<double>::infinity();
    Eigen::Index i = -1;
    Eigen::Index j = -1;
    for (Eigen::Index t = 0; t < n; ++t) {
      const double v = -yd(t) * grad(t);
      if (in_up(t) && v >= gmax) {
        gmax = v;
        i = t;
      }
      if (in_low(t) && v <= gmin) {
        gmin = v;
        j = t;
      }
    }
    violation = (i < 0 || j < 0) ? 0.0 : gmax - gmin;
    if (violation < eps) break;
    if (result.iterations >= max_iter) {
      std::ostringstream msg;
      msg << "SMO did not converge after " << max_iter << " iterations; max KKT violation " << violation;
      throw Error(Errc::numerical, msg.str());
    }
    ++result.iterations;

    const double kii = kernel(i, i);
    const double kjj = kernel(j, j);
    const double kij = kernel(i, j);
    const double old_ai = alpha(i);
    const double old_aj = alpha(j);
    double ai = old_ai;
    double aj = old_aj;
    double quad = kii + kjj - 2.0 * kij;
    if (quad <= 0) quad = kTau;
    if (y(i) != y(j)) {
      const double delta = (-grad(i) - grad(j)) / quad;
      const double diff = ai - aj;
      ai += delta;
      aj += delta;
      if (diff > 0) {
        if (aj < 0) {
          aj = 0;
          ai = diff;
        }
      } else if (ai < 0) {
        ai = 0;
        aj = -diff;
      }
      if (diff > 0) {
        if (ai > C) {
          ai = C;
          aj = C - diff;
        }
      } else if (aj > C) {
        aj = C;
        ai = C + diff;
      }
    } else {
      const double delta = (grad(i) - grad(j)) / quad;
      const double sum = ai + aj;
      ai -= delta;
      aj += delta;
      if (sum > C) {
        if (ai > C) {
          ai = C;
          aj = sum - C;
        }
      } else if (aj < 0) {
        aj = 0;
        ai = sum;
      }
      if (sum > C) {
        if (aj > C) {
          aj = C;
          ai = sum - C;
        }
      } else if (ai < 0) {
        ai = 0;
        aj = sum;
      }
    }
    alpha(i) = ai;
    alpha(j) = aj;
    const double di = (ai - old_ai) * yd(i);
    const double dj = (aj - old_aj) * yd(j);
    // grad_t += y_t (K_ti y_i d_i + K_tj y_j d_j)
    grad.array() += yd.array() * (kernel.col(i).array() * di + kernel.col(j).array() * dj);
  }

  double ub = std::numeric_limits<double>::infinity();
  double lb = -std::numeric_limits<double>::infinity();
  double free_sum = 0.0;
  int n_free = 0;
  for (Eigen::Index t = 0; t < n; ++t) {
    const double yg = yd(t) * grad(t);
    if (alpha(t) >= C) {
      if (y(t) == -1) {
        ub = std::min(ub, yg);
      } else {
        lb = std::max(lb, yg);
      }
    } else if (alpha(t) <= 0) {
      if (y(t) == 1) {
        ub = std::min(ub, yg);
      } else {
        lb = std::max(lb, yg);
      }
    } else {
      free_sum += yg;
      ++n_free;
    }
  }
  const double rho = n_free > 0 ? free_sum / n_free : (ub + lb) / 2.0;
  result.bias = -rho;
  result.max_violation = violation;
  result.objective = alpha.sum() - 0.5 * alpha.dot(grad + VectorXd::Ones(n));
  result.alpha = std::move(alpha);
  return result;
}

Car fit_car(const MatrixXd& x, const Labels& y, const SvmOptions& options) {
  if (x.rows() == 0) throw Error(Errc::invalid_argument, "empty training set");
  if (x.rows() != y.size()) throw Error(Errc::invalid_argument, "row/label count mismatch");
  if (!x.allFinite()) throw Error(Errc::invalid_argument, "training data contains NaN or Inf");
  const double gamma = options.gamma.value_or(scale_gamma(x));
  if (!(gamma > 0)) throw Error(Errc::invalid_argument, "gamma must be > 0");
  const MatrixXd k = rbf_kernel(x, x, gamma);
  const auto sol = solve_svm_dual(k, y, options.C, options.eps, options.max_iter);

  Car car;
  car.gamma = gamma;
  car.C = options.C;
  car.bias = sol.bias;
  car.iterations = sol.iterations;
  car.max_violation = sol.max_violation;
  std::vector<Eigen::Index> sv;
  for (Eigen::Index i = 0; i < sol.alpha.size(); ++i) {
    if (sol.alpha(i) > 0) sv.push_back(i);
  }
  car.support_vectors.resize(static_cast<Eigen::Index>(sv.size()), x.cols());
  car.dual_coefs.resize(static_cast<Eigen::Index>(sv.size()));
  for (std::size_t r = 0; r < sv.size(); ++r) {
    const auto row = static_cast<Eigen::Index>(r);
    car.support_vectors.row(row) = x.row(sv[r]);
    car.dual_coefs(row) = sol.alpha(sv[r]) * y(sv[r]);
  }
  return car;
}

Car train_car(const acts::ProbeSet& set, const SvmOptions& options) {
  Car car = fit_car(set.x_train, set.y_train, options);
  car.layer_index = set.layer_index;
  car.concept_qid = set.concept_qid;
  car.model_id = set.model_id;
  car.train_accuracy = accuracy(car, set.x_train, set.y_train);
  if (set.x_test.rows() > 0) car.test_accuracy = accuracy(car, set.x_test, set.y_test);
  return car;
}

}  // namespace cforge::probes
