#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "lightnorm/norm.hpp"

namespace lightnorm {

enum class DatasetKind { gaussian_clusters, two_spirals };

DatasetKind parse_dataset_kind(std::string_view text);
std::string_view to_string(DatasetKind k);

/// Row-major features with integer labels, split into train and test.
struct Dataset {
  DatasetKind kind = DatasetKind::gaussian_clusters;
  std::size_t dims = 2;
  std::size_t classes = 2;
  std::vector<double> train_x;
  std::vector<int> train_y;
  std::vector<double> test_x;
  std::vector<int> test_y;

  [[nodiscard]] std::size_t train_size() const { return train_y.size(); }
  [[nodiscard]] std::size_t test_size() const { return test_y.size(); }
};

struct DatasetOptions {
  /// gaussian-clusters only: number of clusters, dimensionality, and the
  /// distance of each centre from the origin in units of the unit noise.
  std::size_t classes = 4;
  std::size_t dims = 8;
  double separation = 5.0;
  /// Each class is a mixture of this many clusters, so classes are not
  /// linearly separable once it exceeds one.
  std::size_t clusters_per_class = 2;
  /// Fraction of samples held out for testing.
  double test_fraction = 0.2;
};

/// Deterministic in (kind, n, seed, options). Throws DomainError for n < 100.
Dataset make_dataset(DatasetKind kind, std::size_t n, std::uint64_t seed, const DatasetOptions& opts = {});

/// depth x (linear -> norm -> ReLU), then a linear classifier. depth 0 is a
/// plain linear softmax classifier. Master parameters are FP64.
struct ModelSpec {
  std::size_t hidden = 32;
  std::size_t depth = 2;
};

struct DenseLayer {
  std::size_t in = 0;
  std::size_t out = 0;
  std::vector<double> weight;  // out x in
  std::vector<double> bias;
};

struct ToyModel {
  ModelSpec spec;
  std::vector<DenseLayer> hidden;
  std::vector<AffineParams> norms;
  DenseLayer classifier;

  /// He-initialized weights, zero biases, identity affine parameters.
  static ToyModel init(const ModelSpec& spec, std::size_t inputs, std::size_t classes, std::uint64_t seed);
};

struct EpochStats {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double train_accuracy = 0.0;
  double test_accuracy = 0.0;
};

struct TrainConfig {
  NormConfig norm = NormConfig::for_variant(NormVariant::conventional, formats::fp64());
  ModelSpec model;
  std::size_t epochs = 30;
  std::size_t batch = 128;
  double learning_rate = 0.05;
};

struct TrainRun {
  std::uint64_t seed = 0;
  std::string dataset;
  TrainConfig config;
  std::vector<EpochStats> trace;
  bool diverged = false;
  double final_test_accuracy = 0.0;
  double final_loss = 0.0;
};

/// Mini-batch SGD with a fixed learning rate. Only the normalization layers
/// run under cfg.norm; everything else is FP64. Batches are drawn from a
/// per-epoch shuffle and a ragged final batch is dropped. A non-finite loss
/// stops training and sets `diverged`.
TrainRun train(const Dataset& data, const TrainConfig& cfg, std::uint64_t seed);

/// Test accuracy of a model, evaluated in chunks of `batch` using batch
/// statistics.
double evaluate(const ToyModel& model, const Dataset& data, const NormConfig& norm, std::size_t batch);

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t compared = 0;
  std::size_t skipped_extrema = 0;
};

/// Central finite differences of the cross-entropy loss with respect to
/// every normalization-layer input, gamma and beta, on the first `samples`
/// training rows, against the analytic gradients. Runs at FP64 whatever the
/// configured formats. Range-norm inputs sitting at a channel extremum are
/// skipped. The relative error of each entry is |a - f| / max(|a|, |f|,
/// 1e-3 * max|a| over the tensor). `form` selects the range-norm gradient.
GradCheckReport grad_check(const ToyModel& model, const Dataset& data, NormVariant variant,
                           std::size_t samples = 16, double step = 1e-6,
                           RnGradientForm form = RnGradientForm::printed);

}  // namespace lightnorm
