#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "cforge/activations.hpp"

namespace cforge::probes {

using acts::Labels;
using Eigen::MatrixXd;
using Eigen::VectorXd;

/// SGD settings for CAV training. eta0 <= 0 picks the step size from the data
/// scale.
struct Hyperparams {
  std::string schedule = "optimal";  // eta_t = eta0 / (1 + eta0 * alpha * t)
  double eta0 = 0.0;
  double l2_alpha = 1e-4;
  int max_epochs = 1000;
  double tolerance = 1e-3;
  int patience = 5;
  std::uint64_t seed = 0;

  void validate() const;
};

nlohmann::json to_json(const Hyperparams& hp);
Hyperparams hyperparams_from_json(const nlohmann::json& doc);

struct TrainTrace {
  std::vector<double> objective;  // best full-batch objective after each accepted epoch
  int epochs = 0;                 // accepted + rejected
  int rejected_epochs = 0;        // divergent epochs restarted with half the step
  bool converged = false;
  double eta0 = 0.0;
};

struct Cav {
  VectorXd w;
  double b = 0.0;
  int layer_index = 0;
  std::string concept_qid;
  std::string model_id;
  double train_accuracy = 0.0;
  double test_accuracy = 0.0;
  Hyperparams hp;
  TrainTrace trace;
};

struct SvmOptions {
  double C = 1.0;
  std::optional<double> gamma;  // empty = "scale"
  double eps = 1e-3;            // stop when the maximal KKT violation is below this
  long max_iter = 0;            // 0 = max(10^7, 100 n)
};

struct Car {
  MatrixXd support_vectors;
  VectorXd dual_coefs;  // alpha_i * y_i
  double bias = 0.0;
  double gamma = 1.0;
  double C = 1.0;
  int layer_index = 0;
  std::string concept_qid;
  std::string model_id;
  double train_accuracy = 0.0;
  double test_accuracy = 0.0;
  long iterations = 0;
  double max_violation = 0.0;
};

/// (1/n) sum hinge(y (w.x + b)) + alpha |w|^2
double cav_objective(const MatrixXd& x, const Labels& y, const VectorXd& w, double b, double alpha);

/// Trains on raw matrices; accuracies are left at zero.
Cav fit_cav(const MatrixXd& x, const Labels& y, const Hyperparams& hp = {});
Cav train_cav(const acts::ProbeSet& set, const Hyperparams& hp = {});

/// 1 / (d * Var(x)) over all entries; 1.0 for constant data.
double scale_gamma(const MatrixXd& x);
MatrixXd rbf_kernel(const MatrixXd& a, const MatrixXd& b, double gamma);

struct SmoResult {
  VectorXd alpha;
  double bias = 0.0;
  long iterations = 0;
  double max_violation = 0.0;
  double objective = 0.0;  // sum(alpha) - 1/2 alpha' Q alpha
};

/// Soft-margin SVM dual on a precomputed kernel matrix: maximal violating pair
/// working set, no shrinking.
SmoResult solve_svm_dual(const MatrixXd& kernel, const Labels& y, double C, double eps = 1e-3, long max_iter = 0);
double dual_objective(const MatrixXd& kernel, const Labels& y, const VectorXd& alpha);

Car fit_car(const MatrixXd& x, const Labels& y, const SvmOptions& options = {});
Car train_car(const acts::ProbeSet& set, const SvmOptions& options = {});

VectorXd decision_function(const Cav& cav, const MatrixXd& x);
VectorXd decision_function(const Car& car, const MatrixXd& x);
/// sign of the decision value; exactly 0 maps to +1.
Labels sign_labels(const VectorXd& decision);
Labels predict(const Cav& cav, const MatrixXd& x);
Labels predict(const Car& car, const MatrixXd& x);
double accuracy(const Labels& predicted, const Labels& y);
double accuracy(const Cav& cav, const MatrixXd& x, const Labels& y);
double accuracy(const Car& car, const MatrixXd& x, const Labels& y);

double cosine(const VectorXd& a, const VectorXd& b);
double cosine(const Cav& a, const Cav& b);

/// Fraction of rows on which both probes predict the same label.
double cav_car_agreement(const Cav& cav, const Car& car, const MatrixXd& x);

using Classifier = std::function<Labels(const MatrixXd&)>;
using Trainer = std::function<Classifier(const MatrixXd&, const Labels&)>;

Trainer cav_trainer(const Hyperparams& hp = {});
Trainer car_trainer(const SvmOptions& options = {});

struct CvResult {
  double mean = 0.0;
  std::vector<double> fold_accuracies;
};

CvResult cross_validate(const MatrixXd& x, const Labels& y, int k, const Trainer& trainer, std::uint64_t seed = 0);

// Serialization: `<stem>.json` header plus `<stem>.actv` payload (w as 1 x d,
// support vectors as m x d).
void save_cav(const Cav& cav, const std::filesystem::path& stem);
Cav load_cav(const std::filesystem::path& stem);
void save_car(const Car& car, const std::filesystem::path& stem);
Car load_car(const std::filesystem::path& stem);

}  // namespace cforge::probes
