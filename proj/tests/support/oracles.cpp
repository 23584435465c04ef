#include "support/oracles.hpp"

#include <cmath>
#include <set>

namespace cforge::testkit {

double naive_dot(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < a.size(); ++i) s += a(i) * b(i);
  return s;
}

double naive_cosine(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  return naive_dot(a, b) / (std::sqrt(naive_dot(a, a)) * std::sqrt(naive_dot(b, b)));
}

double naive_rbf(const Eigen::VectorXd& a, const Eigen::VectorXd& b, double gamma) {
  double d2 = 0.0;
  for (Eigen::Index i = 0; i < a.size(); ++i) d2 += (a(i) - b(i)) * (a(i) - b(i));
  return std::exp(-gamma * d2);
}

Eigen::MatrixXd naive_rbf_matrix(const Eigen::MatrixXd& x, double gamma) {
  Eigen::MatrixXd k(x.rows(), x.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    for (Eigen::Index j = 0; j < x.rows(); ++j) k(i, j) = naive_rbf(x.row(i), x.row(j), gamma);
  }
  return k;
}

double naive_dual_objective(const Eigen::MatrixXd& k, const Eigen::VectorXi& y, const Eigen::VectorXd& alpha) {
  double lin = 0.0;
  double quad = 0.0;
  for (Eigen::Index i = 0; i < alpha.size(); ++i) {
    lin += alpha(i);
    for (Eigen::Index j = 0; j < alpha.size(); ++j) quad += alpha(i) * alpha(j) * y(i) * y(j) * k(i, j);
  }
  return lin - 0.5 * quad;
}

DualSolution svm_grid_search(const Eigen::MatrixXd& k, const Eigen::VectorXi& y, double c, double step) {
  const auto n = k.rows();
  const int steps = static_cast<int>(std::lround(c / step));
  DualSolution best;
  Eigen::VectorXd alpha = Eigen::VectorXd::Zero(n);
  std::vector<int> idx(static_cast<std::size_t>(n - 1), 0);
  while (true) {
    double partial = 0.0;
    for (Eigen::Index i = 0; i + 1 < n; ++i) {
      alpha(i) = idx[static_cast<std::size_t>(i)] * step;
      partial += alpha(i) * y(i);
    }
    const double last = -partial * y(n - 1);
    if (last >= -1e-12 && last <= c + 1e-12) {
      alpha(n - 1) = std::clamp(last, 0.0, c);
      const double obj = naive_dual_objective(k, y, alpha);
      if (obj > best.objective) {
        best.objective = obj;
        best.alpha = alpha;
      }
    }
    std::size_t pos = 0;
    while (pos < idx.size() && ++idx[pos] > steps) idx[pos++] = 0;
    if (pos == idx.size()) break;
  }
  best.bias = kkt_bias(k, y, best.alpha, c);
  return best;
}

DualSolution svm_face_enumeration(const Eigen::MatrixXd& k, const Eigen::VectorXi& y, double c) {
  const auto n = static_cast<int>(k.rows());
  DualSolution best;
  std::vector<int> state(static_cast<std::size_t>(n), 0);  // 0 lower, 1 upper, 2 free
  long faces = 1;
  for (int i = 0; i < n; ++i) faces *= 3;
  for (long f = 0; f < faces; ++f) {
    long code = f;
    std::vector<int> free;
    Eigen::VectorXd alpha = Eigen::VectorXd::Zero(n);
    for (int i = 0; i < n; ++i) {
      state[static_cast<std::size_t>(i)] = static_cast<int>(code % 3);
      code /= 3;
      if (state[static_cast<std::size_t>(i)] == 1) alpha(i) = c;
      if (state[static_cast<std::size_t>(i)] == 2) free.push_back(i);
    }
    double fixed_sum = 0.0;
    for (int i = 0; i < n; ++i) fixed_sum += alpha(i) * y(i);
    if (free.empty()) {
      if (std::abs(fixed_sum) > 1e-12) continue;
    } else {
      // Stationarity on the free set: Q_FF a_F + y_F nu = 1 - Q_FU a_U,
      // y_F' a_F = -y_U' a_U.
      const auto m = static_cast<Eigen::Index>(free.size());
      Eigen::MatrixXd sys = Eigen::MatrixXd::Zero(m + 1, m + 1);
      Eigen::VectorXd rhs(m + 1);
      for (Eigen::Index a = 0; a < m; ++a) {
        const int i = free[static_cast<std::size_t>(a)];
        double r = 1.0;
        for (int j = 0; j < n; ++j) {
          if (state[static_cast<std::size_t>(j)] == 1) r -= y(i) * y(j) * k(i, j) * c;
        }
        rhs(a) = r;
        for (Eigen::Index b = 0; b < m; ++b) {
          const int j = free[static_cast<std::size_t>(b)];
          sys(a, b) = y(i) * y(j) * k(i, j);
        }
        sys(a, m) = y(i);
        sys(m, a) = y(i);
      }
      rhs(m) = -fixed_sum;
      Eigen::FullPivLU<Eigen::MatrixXd> lu(sys);
      if (!lu.isInvertible()) continue;
      const Eigen::VectorXd sol = lu.solve(rhs);
      bool feasible = true;
      for (Eigen::Index a = 0; a < m; ++a) {
        const double v = sol(a);
        if (v < -1e-12 || v > c + 1e-12) {
          feasible = false;
          break;
        }
        alpha(free[static_cast<std::size_t>(a)]) = std::clamp(v, 0.0, c);
      }
      if (!feasible) continue;
    }
    const double obj = naive_dual_objective(k, y, alpha);
    if (obj > best.objective) {
      best.objective = obj;
      best.alpha = alpha;
    }
  }
  best.bias = kkt_bias(k, y, best.alpha, c);
  return best;
}

double kkt_bias(const Eigen::MatrixXd& k, const Eigen::VectorXi& y, const Eigen::VectorXd& alpha, double c) {
  const auto n = alpha.size();
  const double tol = 1e-8 * c;
  double free_sum = 0.0;
  int free_count = 0;
  double lo = -1e300;
  double hi = 1e300;
  for (Eigen::Index i = 0; i < n; ++i) {
    double f = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) f += alpha(j) * y(j) * k(i, j);
    const double b = y(i) - f;  // bias making y_i f(x_i) = 1
    if (alpha(i) > tol && alpha(i) < c - tol) {
      free_sum += b;
      ++free_count;
    } else if ((alpha(i) <= tol) == (y(i) > 0)) {
      lo = std::max(lo, b);  // needs y_i f >= 1
    } else {
      hi = std::min(hi, b);
    }
  }
  if (free_count > 0) return free_sum / free_count;
  return 0.5 * (lo + hi);
}

double naive_mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double naive_sem(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = naive_mean(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1)) / std::sqrt(static_cast<double>(v.size()));
}

std::map<int, double> triplet_oracle(const std::vector<int>& groups, const std::vector<Eigen::MatrixXd>& cos) {
  const int n = static_cast<int>(groups.size());
  std::map<int, double> total;
  for (const auto& c : cos) {
    std::map<std::pair<int, int>, std::pair<int, int>> tally;  // pair -> (wins, appearances)
    for (int i = 0; i < n; ++i) {
      for (int j = i + 1; j < n; ++j) {
        for (int l = j + 1; l < n; ++l) {
          const std::set<int> distinct{groups[i], groups[j], groups[l]};
          if (distinct.size() != 2) continue;
          const std::pair<int, int> pairs[3] = {{i, j}, {i, l}, {j, l}};
          int best = 0;
          for (int p = 1; p < 3; ++p) {
            if (c(pairs[p].first, pairs[p].second) > c(pairs[best].first, pairs[best].second)) best = p;
          }
          for (int p = 0; p < 3; ++p) ++tally[pairs[p]].second;
          ++tally[pairs[best]].first;
        }
      }
    }
    std::map<int, std::vector<double>> shares;
    for (const auto& [pair, wa] : tally) {
      const int row = groups[pair.first] == groups[pair.second] ? groups[pair.first] : -1;
      shares[row].push_back(static_cast<double>(wa.first) / wa.second);
    }
    for (const auto& [row, v] : shares) total[row] += naive_mean(v);
  }
  for (auto& [row, sum] : total) sum /= static_cast<double>(cos.size());
  return total;
}

std::pair<std::size_t, std::size_t> enumerate_pairs(const std::vector<std::size_t>& group_sizes) {
  std::vector<std::size_t> group_of;
  for (std::size_t g = 0; g < group_sizes.size(); ++g) group_of.insert(group_of.end(), group_sizes[g], g);
  std::size_t intra = 0;
  std::size_t inter = 0;
  for (std::size_t i = 0; i < group_of.size(); ++i) {
    for (std::size_t j = i + 1; j < group_of.size(); ++j) (group_of[i] == group_of[j] ? intra : inter)++;
  }
  return {intra, inter};
}

}  // namespace cforge::testkit
