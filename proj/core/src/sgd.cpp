#include <cmath>
#include <limits>
#include <numeric>

#include "cforge/error.hpp"
#include "cforge/probes.hpp"
#include "cforge/random.hpp"

namespace cforge::probes {

namespace {

void check_training_input(const MatrixXd& x, const Labels& y) {
  if (x.rows() == 0) throw Error(Errc::invalid_argument, "empty training set");
  if (x.rows() != y.size()) throw Error(Errc::invalid_argument, "row/label count mismatch");
  if (!x.allFinite()) throw Error(Errc::invalid_argument, "training data contains NaN or Inf");
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

void Hyperparams::validate() const {
  if (schedule != "optimal") throw Error(Errc::invalid_argument, "unknown learning-rate schedule: " + schedule);
  if (!(l2_alpha > 0)) throw Error(Errc::invalid_argument, "l2_alpha must be > 0");
  if (max_epochs < 1) throw Error(Errc::invalid_argument, "max_epochs must be >= 1");
  if (!(tolerance >= 0)) throw Error(Errc::invalid_argument, "tolerance must be >= 0");
  if (patience < 1) throw Error(Errc::invalid_argument, "patience must be >= 1");
}

nlohmann::json to_json(const Hyperparams& hp) {
  return {{"schedule", hp.schedule},     {"eta0", hp.eta0},         {"l2_alpha", hp.l2_alpha},
          {"max_epochs", hp.max_epochs}, {"tolerance", hp.tolerance}, {"patience", hp.patience},
          {"seed", hp.seed}};
}

Hyperparams hyperparams_from_json(const nlohmann::json& doc) {
  Hyperparams hp;
  hp.schedule = doc.value("schedule", hp.schedule);
  hp.eta0 = doc.value("eta0", hp.eta0);
  hp.l2_alpha = doc.value("l2_alpha", hp.l2_alpha);
  hp.max_epochs = doc.value("max_epochs", hp.max_epochs);
  hp.tolerance = doc.value("tolerance", hp.tolerance);
  hp.patience = doc.value("patience", hp.patience);
  hp.seed = doc.value("seed", hp.seed);
  hp.validate();
  return hp;
}

double cav_objective(const MatrixXd& x, const Labels& y, const VectorXd& w, double b, double alpha) {
  const VectorXd margins = (x * w).array() + b;
  double loss = 0.0;
  for (Eigen::Index i = 0; i < y.size(); ++i) loss += std::max(0.0, 1.0 - y(i) * margins(i));
  return loss / static_cast<double>(y.size()) + alpha * w.squaredNorm();
}

Cav fit_cav(const MatrixXd& x, const Labels& y, const Hyperparams& hp) {
  hp.validate();
  check_training_input(x, y);
  const auto n = static_cast<std::size_t>(x.rows());
  const double alpha = hp.l2_alpha;

  // Step size for a unit-scale hinge problem, shrunk by the mean squared norm so
  // one update cannot overshoot the margin by orders of magnitude.
  double eta0 = hp.eta0;
  if (eta0 <= 0) {
    const double mean_sq = x.rowwise().squaredNorm().mean();
    eta0 = std::pow(alpha, -0.25) / std::max(1.0, mean_sq);
  }

  Cav cav;
  cav.hp = hp;
  cav.trace.eta0 = eta0;
  VectorXd w = VectorXd::Zero(x.cols());
  double b = 0.0;
  std::uint64_t t = 0;
  double scale = 1.0;
  const double start = cav_objective(x, y, w, b, alpha);
  // Averaged SGD: the running mean of all iterates is what gets evaluated and
  // returned. Of those, the best full-batch one after the first epoch wins, so
  // the recorded objective never increases. The zero start is excluded since
  // on noise it can beat every iterate.
  VectorXd avg_w = w;
  double avg_b = b;
  double steps = 0.0;
  VectorXd best_w = w;
  double best_b = b;
  double best = std::numeric_limits<double>::infinity();
  int stale = 0;

  Rng rng(hp.seed);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});

  for (int epoch = 1; epoch <= hp.max_epochs; ++epoch) {
    shuffle(order, rng);
    for (auto i : order) {
      const auto row = static_cast<Eigen::Index>(i);
      const double eta = scale * eta0 / (1.0 + eta0 * alpha * static_cast<double>(t));
      const double yi = y(row);
      const double margin = yi * (x.row(row).dot(w) + b);
      w *= 1.0 - 2.0 * eta * alpha;
      if (margin < 1.0) {
        w.noalias() += (eta * yi) * x.row(row).transpose();
        b += eta * yi;
      }
      ++t;
      steps += 1.0;
      avg_w += (w - avg_w) / steps;
      avg_b += (b - avg_b) / steps;
    }
    cav.trace.epochs = epoch;
    const double obj = cav_objective(x, y, avg_w, avg_b, alpha);
    if (!std::isfinite(obj) || obj > 1e3 * std::max(1.0, start)) {
      // Diverging: restart from the best iterate with half the step.
      w = avg_w = best_w;
      b = avg_b = best_b;
      steps = 0.0;
      scale *= 0.5;
      ++cav.trace.rejected_epochs;
      if (scale < 1e-10) {
        throw Error(Errc::numerical, "SGD diverged: objective is " + std::to_string(obj) + " at epoch " +
                                         std::to_string(epoch));
      }
      continue;
    }
    stale = obj > best - hp.tolerance ? stale + 1 : 0;
    if (obj < best) {
      best = obj;
      best_w = avg_w;
      best_b = avg_b;
    }
    cav.trace.objective.push_back(best);
    if (stale >= hp.patience) {
      cav.trace.converged = true;
      break;
    }
  }
  w = std::move(best_w);
  b = best_b;
  if (w.squaredNorm() == 0.0) throw Error(Errc::numerical, "SGD produced a zero weight vector");
  cav.w = std::move(w);
  cav.b = b;
  return cav;
}

Cav train_cav(const acts::ProbeSet& set, const Hyperparams& hp) {
  Cav cav = fit_cav(set.x_train, set.y_train, hp);
  cav.layer_index = set.layer_index;
  cav.concept_qid = set.concept_qid;
  cav.model_id = set.model_id;
  cav.train_accuracy = accuracy(cav, set.x_train, set.y_train);
  if (set.x_test.rows() > 0) cav.test_accuracy = accuracy(cav, set.x_test, set.y_test);
  return cav;
}

}  // namespace cforge::probes
