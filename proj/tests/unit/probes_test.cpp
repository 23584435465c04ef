#include <gtest/gtest.h>

#include "cforge/error.hpp"
#include "cforge/probes.hpp"
#include "cforge/random.hpp"
#include "support/oracles.hpp"
#include "support/support.hpp"

using namespace cforge;
using namespace cforge::probes;

namespace {

struct Instance {
  Eigen::MatrixXd x;
  Labels y;
};

// Two overlapping blobs in 2-D so most instances have bounded and free vectors.
Instance random_instance(int n, std::uint64_t seed) {
  Rng rng(seed);
  Instance in{Eigen::MatrixXd(n, 2), Labels(n)};
  for (int i = 0; i < n; ++i) {
    in.y(i) = i % 2 == 0 ? 1 : -1;
    in.x(i, 0) = standard_normal(rng) + 0.8 * in.y(i);
    in.x(i, 1) = standard_normal(rng);
  }
  return in;
}

Eigen::VectorXd oracle_decision(const Eigen::MatrixXd& k_query_train, const Labels& y,
                                const testkit::DualSolution& sol) {
  Eigen::VectorXd f(k_query_train.rows());
  for (Eigen::Index q = 0; q < k_query_train.rows(); ++q) {
    double s = sol.bias;
    for (Eigen::Index i = 0; i < y.size(); ++i) s += sol.alpha(i) * y(i) * k_query_train(q, i);
    f(q) = s;
  }
  return f;
}

Eigen::MatrixXd naive_cross_kernel(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, double gamma) {
  Eigen::MatrixXd k(a.rows(), b.rows());
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index j = 0; j < b.rows(); ++j) k(i, j) = testkit::naive_rbf(a.row(i), b.row(j), gamma);
  }
  return k;
}

}  // namespace

TEST(Kernel, RbfMatchesNaive) {
  const auto in = random_instance(7, 1);
  EXPECT_TRUE(rbf_kernel(in.x, in.x, 0.3).isApprox(testkit::naive_rbf_matrix(in.x, 0.3), 1e-12));
}

TEST(Kernel, ScaleGamma) {
  const auto in = random_instance(9, 2);
  const double mean = in.x.mean();
  const double var = (in.x.array() - mean).square().mean();
  EXPECT_NEAR(scale_gamma(in.x), 1.0 / (2.0 * var), 1e-12);
  EXPECT_EQ(scale_gamma(Eigen::MatrixXd::Constant(3, 2, 5.0)), 1.0);
}

TEST(GridOracle, AgreesWithFaceEnumeration) {
  for (int n : {3, 4}) {
    for (double c : {0.5, 2.0}) {
      const auto in = random_instance(n, 10 + n);
      const auto k = testkit::naive_rbf_matrix(in.x, 0.5);
      const auto exact = testkit::svm_face_enumeration(k, in.y, c);
      const auto grid = testkit::svm_grid_search(k, in.y, c, 0.01 * c);
      EXPECT_GE(exact.objective, grid.objective - 1e-12);
      EXPECT_NEAR(exact.objective, grid.objective, 1e-3);
    }
  }
}

TEST(Smo, MatchesExactDualOptimum) {
  const int sizes[] = {3, 4, 4, 5, 6, 7, 8, 10, 11, 12};
  for (int t = 0; t < 10; ++t) {
    const auto in = random_instance(sizes[t], 100 + t);
    const double c = t % 3 == 0 ? 0.3 : (t % 3 == 1 ? 1.0 : 10.0);
    const double gamma = 0.5;
    const auto k = testkit::naive_rbf_matrix(in.x, gamma);
    const auto oracle = testkit::svm_face_enumeration(k, in.y, c);
    const auto smo = solve_svm_dual(k, in.y, c, 1e-5);
    EXPECT_NEAR(smo.objective, oracle.objective, 1e-6 * std::max(1.0, std::abs(oracle.objective))) << "instance " << t;
    EXPECT_NEAR(testkit::naive_dual_objective(k, in.y, smo.alpha), smo.objective, 1e-9);
    EXPECT_NEAR(in.y.cast<double>().dot(smo.alpha), 0.0, 1e-9);
    EXPECT_GE(smo.alpha.minCoeff(), 0.0);
    EXPECT_LE(smo.alpha.maxCoeff(), c);

    // predictions on training points and a probe grid
    Eigen::MatrixXd grid(25, 2);
    for (int i = 0; i < 25; ++i) grid.row(i) << -2.0 + (i % 5), -2.0 + (i / 5);
    Eigen::MatrixXd queries(in.x.rows() + grid.rows(), 2);
    queries << in.x, grid;
    const auto kq = naive_cross_kernel(queries, in.x, gamma);
    testkit::DualSolution mine{smo.alpha, smo.objective, smo.bias};
    const Eigen::VectorXd f_oracle = oracle_decision(kq, in.y, oracle);
    const Eigen::VectorXd f_smo = oracle_decision(kq, in.y, mine);
    EXPECT_EQ(sign_labels(f_smo), sign_labels(f_oracle)) << "instance " << t;
    EXPECT_LT((f_smo - f_oracle).cwiseAbs().maxCoeff(), 1e-3) << "instance " << t;
  }
}

TEST(Smo, FitCarPredictsLikeTheDualSolution) {
  const auto in = random_instance(12, 7);
  SvmOptions o;
  o.C = 1.0;
  o.gamma = 0.5;
  o.eps = 1e-6;
  const auto car = fit_car(in.x, in.y, o);
  const auto oracle = testkit::svm_face_enumeration(testkit::naive_rbf_matrix(in.x, 0.5), in.y, 1.0);
  const Eigen::VectorXd f = oracle_decision(naive_cross_kernel(in.x, in.x, 0.5), in.y, oracle);
  EXPECT_LT((decision_function(car, in.x) - f).cwiseAbs().maxCoeff(), 1e-4);
  EXPECT_LE(car.support_vectors.rows(), 12);
}

TEST(Sgd, ReachesLinearSvmOptimum) {
  // (1/n) sum hinge + a|w|^2 = 2a (1/2 |w|^2 + C sum hinge) with C = 1/(2 a n)
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const auto in = random_instance(10, seed);
    const double alpha = 0.05;
    const double c = 1.0 / (2.0 * alpha * 10);
    const Eigen::MatrixXd k = in.x * in.x.transpose();
    const double optimum = 2.0 * alpha * testkit::svm_face_enumeration(k, in.y, c).objective;
    Hyperparams hp;
    hp.l2_alpha = alpha;
    hp.max_epochs = 200000;
    hp.tolerance = 1e-9;
    hp.patience = 200;
    hp.seed = seed;
    const auto cav = fit_cav(in.x, in.y, hp);
    const double obj = cav_objective(in.x, in.y, cav.w, cav.b, alpha);
    EXPECT_GE(obj, optimum - 1e-9);
    EXPECT_LE(obj, optimum * 1.001) << "seed " << seed;
    for (std::size_t e = 1; e < cav.trace.objective.size(); ++e) {
      EXPECT_LE(cav.trace.objective[e], cav.trace.objective[e - 1] + 1e-12);
    }
  }
}

TEST(Sgd, Deterministic) {
  const auto data = testkit::planted_gaussian(100, 8, 2.0, 4);
  Hyperparams hp;
  hp.seed = 9;
  EXPECT_EQ(fit_cav(data.x, data.y, hp).w, fit_cav(data.x, data.y, hp).w);
}

TEST(Sgd, RejectsBadInput) {
  const auto data = testkit::planted_gaussian(10, 3, 2.0, 4);
  EXPECT_THROW(fit_cav(data.x, Labels::Ones(10)), Error);
  Labels y = data.y;
  y(0) = 0;
  EXPECT_THROW(fit_cav(data.x, y), Error);
  Hyperparams hp;
  hp.l2_alpha = 0;
  EXPECT_THROW(fit_cav(data.x, data.y, hp), Error);
  EXPECT_THROW(hyperparams_from_json({{"schedule", "constant"}}), Error);
  EXPECT_EQ(to_json(hyperparams_from_json(to_json(Hyperparams{}))), to_json(Hyperparams{}));
}

TEST(Cav, PlantedDirectionSeparable) {
  const auto data = testkit::planted_gaussian(400, 16, 4.0, 11);
  const auto cv = cross_validate(data.x, data.y, 10, cav_trainer(), 0);
  EXPECT_GE(cv.mean, 0.99);
  EXPECT_EQ(cv.fold_accuracies.size(), 10u);
  const auto cav = fit_cav(data.x, data.y);
  EXPECT_GE(cosine(cav.w, data.direction), 0.8);
  const auto flipped = fit_cav(data.x, (-data.y).eval());
  EXPECT_LE(cosine(cav, flipped), -0.95);
}

TEST(Car, CirclesNeedTheKernel) {
  const auto train = testkit::concentric_circles(200, 0.5, 0.05, 1);
  const auto test = testkit::concentric_circles(200, 0.5, 0.05, 2);
  const auto car = fit_car(train.x, train.y);
  const auto cav = fit_cav(train.x, train.y);
  EXPECT_GE(accuracy(car, test.x, test.y), 0.95);
  EXPECT_LE(accuracy(cav, test.x, test.y), 0.60);
}

TEST(Cv, NoiseLabelsNearChance) {
  Rng rng(5);
  Eigen::MatrixXd x(400, 16);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = standard_normal(rng);
  Labels y(400);
  for (Eigen::Index i = 0; i < 400; ++i) y(i) = i % 2 == 0 ? 1 : -1;
  const auto cv = cross_validate(x, y, 10, cav_trainer(), 0);
  EXPECT_NEAR(cv.mean, 0.5, 0.1);
}

TEST(Predict, ZeroDecisionMapsToPositive) {
  Eigen::VectorXd d(4);
  d << 0.0, -0.0, 1e-300, -1e-300;
  Labels expected(4);
  expected << 1, 1, 1, -1;
  EXPECT_EQ(sign_labels(d), expected);
  EXPECT_THROW(accuracy(Labels(0), Labels(0)), Error);
  EXPECT_THROW(accuracy(Labels::Ones(2), Labels::Ones(3)), Error);
}

TEST(Cosine, Properties) {
  Rng rng(8);
  for (int t = 0; t < 1000; ++t) {
    const auto d = static_cast<Eigen::Index>(1 + uniform_below(rng, 64));
    Eigen::VectorXd a(d), b(d);
    for (Eigen::Index i = 0; i < d; ++i) {
      a(i) = standard_normal(rng);
      b(i) = standard_normal(rng);
    }
    const double c = cosine(a, b);
    ASSERT_GE(c, -1.0);
    ASSERT_LE(c, 1.0);
    ASSERT_EQ(c, cosine(b, a));
    ASSERT_NEAR(c, cosine((3.7 * a).eval(), b), 1e-12);
    ASSERT_NEAR(c, testkit::naive_cosine(a, b), 1e-12);
    ASSERT_NEAR(cosine(a, a), 1.0, 1e-15);
  }
  EXPECT_THROW(cosine(Eigen::VectorXd::Zero(3), Eigen::VectorXd::Ones(3)), Error);
  EXPECT_THROW(cosine(Eigen::VectorXd::Ones(2), Eigen::VectorXd::Ones(3)), Error);
}

TEST(Agreement, SameDataProbesAgree) {
  const auto data = testkit::planted_gaussian(200, 8, 3.0, 3);
  const auto cav = fit_cav(data.x, data.y);
  const auto car = fit_car(data.x, data.y);
  EXPECT_GE(cav_car_agreement(cav, car, data.x), 0.9);
  auto other = car;
  other.layer_index = 4;
  EXPECT_THROW(cav_car_agreement(cav, other, data.x), Error);
}

TEST(ProbeIo, RoundTrip) {
  testkit::TempDir dir;
  const auto data = testkit::planted_gaussian(60, 5, 2.0, 6);
  auto cav = fit_cav(data.x, data.y);
  cav.layer_index = 3;
  cav.concept_qid = "Q5";
  cav.model_id = "toy-model";
  save_cav(cav, dir / "cav");
  const auto cav2 = load_cav(dir / "cav");
  EXPECT_EQ(cav2.w, cav.w.cast<float>().cast<double>().eval());
  EXPECT_EQ(cav2.b, cav.b);
  EXPECT_EQ(cav2.layer_index, 3);
  EXPECT_EQ(cav2.concept_qid, "Q5");
  EXPECT_EQ(to_json(cav2.hp), to_json(cav.hp));

  SvmOptions o;
  o.gamma = 0.2;
  auto car = fit_car(data.x, data.y, o);
  save_car(car, dir / "car");
  const auto car2 = load_car(dir / "car");
  EXPECT_EQ(car2.dual_coefs, car.dual_coefs);
  EXPECT_EQ(car2.gamma, 0.2);
  EXPECT_EQ(predict(car2, data.x), predict(car, data.x));
  EXPECT_THROW(load_cav(dir / "missing"), Error);
}
