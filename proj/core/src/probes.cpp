#include <algorithm>
#include <cmath>
#include <memory>

#include "cforge/error.hpp"
#include "cforge/probes.hpp"

namespace cforge::probes {

namespace {

void check_width(Eigen::Index expected, const MatrixXd& x) {
  if (x.cols() != expected) {
    throw Error(Errc::invalid_argument, "input width " + std::to_string(x.cols()) + " does not match probe width " +
                                            std::to_string(expected));
  }
}

}  // namespace

VectorXd decision_function(const Cav& cav, const MatrixXd& x) {
  check_width(cav.w.size(), x);
  return (x * cav.w).array() + cav.b;
}

VectorXd decision_function(const Car& car, const MatrixXd& x) {
  check_width(car.support_vectors.cols(), x);
  if (x.rows() == 0) return VectorXd(0);
  return (rbf_kernel(x, car.support_vectors, car.gamma) * car.dual_coefs).array() + car.bias;
}

Labels sign_labels(const VectorXd& decision) {
  Labels out(decision.size());
  for (Eigen::Index i = 0; i < decision.size(); ++i) out(i) = decision(i) >= 0.0 ? 1 : -1;
  return out;
}

Labels predict(const Cav& cav, const MatrixXd& x) { return sign_labels(decision_function(cav, x)); }
Labels predict(const Car& car, const MatrixXd& x) { return sign_labels(decision_function(car, x)); }

double accuracy(const Labels& predicted, const Labels& y) {
  if (y.size() == 0) throw Error(Errc::invalid_argument, "accuracy of an empty set is undefined");
  if (predicted.size() != y.size()) throw Error(Errc::invalid_argument, "prediction/label count mismatch");
  return static_cast<double>((predicted.array() == y.array()).count()) / static_cast<double>(y.size());
}

double accuracy(const Cav& cav, const MatrixXd& x, const Labels& y) { return accuracy(predict(cav, x), y); }
double accuracy(const Car& car, const MatrixXd& x, const Labels& y) { return accuracy(predict(car, x), y); }

double cosine(const VectorXd& a, const VectorXd& b) {
  if (a.size() != b.size()) throw Error(Errc::invalid_argument, "cosine of vectors with different lengths");
  const double na = a.norm();
  const double nb = b.norm();
  if (na == 0.0 || nb == 0.0) throw Error(Errc::invalid_argument, "cosine of a zero vector");
  // Normalizing first keeps the result inside [-1, 1] up to rounding of the
  // final dot product, which is then clamped.
  return std::clamp((a / na).dot(b / nb), -1.0, 1.0);
}

double cosine(const Cav& a, const Cav& b) { return cosine(a.w, b.w); }

double cav_car_agreement(const Cav& cav, const Car& car, const MatrixXd& x) {
  if (cav.w.size() != car.support_vectors.cols()) throw Error(Errc::invalid_argument, "CAV/CAR width mismatch");
  if (cav.layer_index != car.layer_index) throw Error(Errc::invalid_argument, "CAV/CAR layer mismatch");
  return accuracy(predict(cav, x), predict(car, x));
}

Trainer cav_trainer(const Hyperparams& hp) {
  return [hp](const MatrixXd& x, const Labels& y) -> Classifier {
    auto cav = std::make_shared<Cav>(fit_cav(x, y, hp));
    return [cav](const MatrixXd& q) { return predict(*cav, q); };
  };
}

Trainer car_trainer(const SvmOptions& options) {
  return [options](const MatrixXd& x, const Labels& y) -> Classifier {
    auto car = std::make_shared<Car>(fit_car(x, y, options));
    return [car](const MatrixXd& q) { return predict(*car, q); };
  };
}

CvResult cross_validate(const MatrixXd& x, const Labels& y, int k, const Trainer& trainer, std::uint64_t seed) {
  if (x.rows() != y.size()) throw Error(Errc::invalid_argument, "row/label count mismatch");
  const auto plan = acts::make_folds(static_cast<std::size_t>(x.rows()), y, k, seed);
  CvResult result;
  for (int f = 0; f < k; ++f) {
    const auto train = plan.train_indices(f);
    const auto test = plan.test_indices(f);
    const auto classifier = trainer(acts::select_rows(x, train), acts::select_rows(y, train));
    result.fold_accuracies.push_back(accuracy(classifier(acts::select_rows(x, test)), acts::select_rows(y, test)));
  }
  double sum = 0.0;
  for (double a : result.fold_accuracies) sum += a;
  result.mean = sum / k;
  return result;
}

}  // namespace cforge::probes
