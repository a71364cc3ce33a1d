#include <cmath>
#include <set>

#include "doctest.h"
#include "lightnorm/error.hpp"
#include "lightnorm/toytrain.hpp"

using namespace lightnorm;

namespace {

TrainConfig fp64_bn() {
  TrainConfig tc;
  tc.norm = NormConfig::for_variant(NormVariant::conventional, formats::fp64());
  return tc;
}

}  // namespace

TEST_CASE("datasets") {
  const Dataset a = make_dataset(DatasetKind::gaussian_clusters, 2000, 7);
  const Dataset b = make_dataset(DatasetKind::gaussian_clusters, 2000, 7);
  const Dataset c = make_dataset(DatasetKind::gaussian_clusters, 2000, 8);
  CHECK(a.train_x == b.train_x);
  CHECK(a.test_y == b.test_y);
  CHECK(a.train_x != c.train_x);
  CHECK(a.train_size() + a.test_size() == 2000);
  CHECK(a.test_size() == 400);
  CHECK(a.train_x.size() == a.train_size() * a.dims);
  CHECK(a.classes == 4);
  std::set<int> labels(a.train_y.begin(), a.train_y.end());
  CHECK(labels == std::set<int>{0, 1, 2, 3});

  const Dataset s = make_dataset(DatasetKind::two_spirals, 1000, 1);
  CHECK(s.dims == 2);
  CHECK(s.classes == 2);
  CHECK(s.test_size() == 200);

  CHECK_THROWS_AS(make_dataset(DatasetKind::gaussian_clusters, 99, 1), DomainError);
  CHECK_THROWS_AS(parse_dataset_kind("mnist"), ConfigError);
  CHECK(parse_dataset_kind("two-spirals") == DatasetKind::two_spirals);
}

TEST_CASE("training is deterministic") {
  const Dataset d = make_dataset(DatasetKind::gaussian_clusters, 600, 3);
  TrainConfig tc;
  tc.norm = NormConfig::lightnorm_defaults();
  tc.norm.rn_gradient = RnGradientForm::exact;
  tc.epochs = 3;
  const TrainRun r1 = train(d, tc, 3);
  const TrainRun r2 = train(d, tc, 3);
  REQUIRE(r1.trace.size() == 3);
  for (std::size_t i = 0; i < r1.trace.size(); ++i) {
    CHECK(r1.trace[i].train_loss == r2.trace[i].train_loss);
    CHECK(r1.trace[i].test_accuracy == r2.trace[i].test_accuracy);
  }
}

TEST_CASE("an MLP with normalization beats a linear classifier on clusters") {
  const Dataset d = make_dataset(DatasetKind::gaussian_clusters, 2000, 1);
  TrainConfig linear = fp64_bn();
  linear.model.depth = 0;
  const double lin = train(d, linear, 1).final_test_accuracy;
  const double mlp = train(d, fp64_bn(), 1).final_test_accuracy;
  CHECK(lin < mlp);
}

TEST_CASE("two spirals are not linearly separable") {
  const Dataset d = make_dataset(DatasetKind::two_spirals, 2000, 2);
  TrainConfig linear = fp64_bn();
  linear.model.depth = 0;
  CHECK(train(d, linear, 2).final_test_accuracy <= 0.60);
}

TEST_CASE("FP64 batch norm reaches 95% on clusters within 50 epochs") {
  const Dataset d = make_dataset(DatasetKind::gaussian_clusters, 2560, 0);
  TrainConfig tc = fp64_bn();
  tc.epochs = 50;
  const TrainRun r = train(d, tc, 0);
  CHECK_FALSE(r.diverged);
  double best = 0.0;
  for (const EpochStats& e : r.trace) best = std::max(best, e.test_accuracy);
  CHECK(best >= 0.95);
}

TEST_CASE("gradient checks at FP64") {
  const Dataset d = make_dataset(DatasetKind::gaussian_clusters, 400, 4);
  const ToyModel m = ToyModel::init(ModelSpec{}, d.dims, d.classes, 4);
  for (NormVariant v : {NormVariant::conventional, NormVariant::restructured}) {
    const GradCheckReport r = grad_check(m, d, v);
    CHECK(r.compared > 0);
    CHECK(r.skipped_extrema == 0);
    CHECK(r.max_rel_error < 1e-5);
  }
  const GradCheckReport exact = grad_check(m, d, NormVariant::range, 16, 1e-6, RnGradientForm::exact);
  CHECK(exact.skipped_extrema == 2 * 2 * 32);
  CHECK(exact.max_rel_error < 1e-4);
  // The printed equations are reported, not required to agree.
  const GradCheckReport printed = grad_check(m, d, NormVariant::lightnorm);
  CHECK(printed.max_rel_error > 1e-3);
}

TEST_CASE("divergence is reported, not thrown") {
  const Dataset d = make_dataset(DatasetKind::gaussian_clusters, 600, 5);
  TrainConfig tc = fp64_bn();
  tc.learning_rate = 1e300;
  tc.epochs = 5;
  TrainRun r;
  CHECK_NOTHROW(r = train(d, tc, 5));
  CHECK(r.diverged);
  CHECK(r.trace.size() < 5);
}

TEST_CASE("configuration errors") {
  const Dataset d = make_dataset(DatasetKind::gaussian_clusters, 200, 6);
  TrainConfig tc = fp64_bn();
  tc.batch = 1;
  CHECK_THROWS_AS(train(d, tc, 1), ConfigError);
  tc.batch = 1000;
  CHECK_THROWS_AS(train(d, tc, 1), ConfigError);
}
