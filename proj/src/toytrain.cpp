#include "lightnorm/toytrain.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <random>

#include "lightnorm/error.hpp"

namespace lightnorm {

namespace {

struct Forward {
  std::vector<Tensor> inputs;  // input of each dense layer, classifier last
  std::vector<Tensor> pre_norm;
  std::vector<NormCache> caches;
  std::vector<Tensor> normed;
  std::vector<double> probs;  // softmax, rows x classes
  double loss = 0.0;
  std::size_t correct = 0;
};

struct Grads {
  std::vector<DenseLayer> hidden;
  std::vector<AffineParams> norms;
  DenseLayer classifier;
  std::vector<Tensor> pre_norm;  // dL/d(norm input)
};

Tensor dense(const DenseLayer& l, const Tensor& x) {
  const std::size_t rows = x.shape[0];
  Tensor out = Tensor::zeros({rows, l.out});
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t o = 0; o < l.out; ++o) {
      double acc = l.bias[o];
      for (std::size_t i = 0; i < l.in; ++i) acc += l.weight[o * l.in + i] * x.data[r * l.in + i];
      out.data[r * l.out + o] = acc;
    }
  }
  return out;
}

DenseLayer zero_like(const DenseLayer& l) {
  DenseLayer g;
  g.in = l.in;
  g.out = l.out;
  g.weight.assign(l.weight.size(), 0.0);
  g.bias.assign(l.bias.size(), 0.0);
  return g;
}

/// Accumulates weight/bias gradients and returns dL/dx.
Tensor dense_backward(const DenseLayer& l, const Tensor& x, const Tensor& dout, DenseLayer& g) {
  const std::size_t rows = x.shape[0];
  Tensor dx = Tensor::zeros({rows, l.in});
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t o = 0; o < l.out; ++o) {
      const double d = dout.data[r * l.out + o];
      g.bias[o] += d;
      for (std::size_t i = 0; i < l.in; ++i) {
        g.weight[o * l.in + i] += d * x.data[r * l.in + i];
        dx.data[r * l.in + i] += d * l.weight[o * l.in + i];
      }
    }
  }
  return dx;
}

/// Forward pass. When `override_layer` is set, the input of that
/// normalization layer is replaced by `*override_input`.
Forward run_forward(const ToyModel& m, const Tensor& x, std::span<const int> labels, const NormConfig& cfg,
                    std::size_t override_layer = static_cast<std::size_t>(-1),
                    const Tensor* override_input = nullptr) {
  Forward f;
  Tensor h = x;
  for (std::size_t l = 0; l < m.hidden.size(); ++l) {
    f.inputs.push_back(h);
    Tensor z = dense(m.hidden[l], h);
    if (l == override_layer) z = *override_input;
    if (!std::all_of(z.data.begin(), z.data.end(), [](double v) { return std::isfinite(v); })) {
      f.loss = std::numeric_limits<double>::quiet_NaN();  // diverged; the caller checks the loss
      return f;
    }
    ForwardResult r = norm_forward(z, m.norms[l], cfg);
    f.pre_norm.push_back(std::move(z));
    h = r.y;
    for (double& v : h.data) v = std::max(v, 0.0);
    f.normed.push_back(std::move(r.y));
    f.caches.push_back(std::move(r.cache));
  }
  f.inputs.push_back(h);
  const Tensor logits = dense(m.classifier, h);
  const std::size_t rows = x.shape[0];
  const std::size_t k = m.classifier.out;
  f.probs.assign(rows * k, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* z = &logits.data[r * k];
    const double peak = *std::max_element(z, z + k);
    double total = 0.0;
    for (std::size_t c = 0; c < k; ++c) total += std::exp(z[c] - peak);
    for (std::size_t c = 0; c < k; ++c) f.probs[r * k + c] = std::exp(z[c] - peak) / total;
    f.loss -= (z[labels[r]] - peak) - std::log(total);
    if (static_cast<int>(std::max_element(z, z + k) - z) == labels[r]) ++f.correct;
  }
  f.loss /= static_cast<double>(rows);
  return f;
}

Grads run_backward(const ToyModel& m, const Forward& f, std::span<const int> labels, const NormConfig& cfg) {
  const std::size_t rows = labels.size();
  const std::size_t k = m.classifier.out;
  Grads g;
  g.classifier = zero_like(m.classifier);
  Tensor dlogits = Tensor::zeros({rows, k});
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < k; ++c) {
      dlogits.data[r * k + c] =
          (f.probs[r * k + c] - (static_cast<int>(c) == labels[r] ? 1.0 : 0.0)) / static_cast<double>(rows);
    }
  }
  Tensor dh = dense_backward(m.classifier, f.inputs.back(), dlogits, g.classifier);

  const std::size_t depth = m.hidden.size();
  g.hidden.resize(depth);
  g.norms.resize(depth);
  g.pre_norm.resize(depth);
  for (std::size_t l = depth; l-- > 0;) {
    Tensor dy = dh;
    for (std::size_t i = 0; i < dy.size(); ++i) {
      if (!(f.normed[l].data[i] > 0.0)) dy.data[i] = 0.0;
    }
    Gradients ng = norm_backward(dy, f.caches[l], cfg);
    g.norms[l] = {ng.dgamma, ng.dbeta};
    g.hidden[l] = zero_like(m.hidden[l]);
    dh = dense_backward(m.hidden[l], f.inputs[l], ng.dx, g.hidden[l]);
    g.pre_norm[l] = std::move(ng.dx);
  }
  return g;
}

void sgd(std::vector<double>& w, const std::vector<double>& g, double lr) {
  for (std::size_t i = 0; i < w.size(); ++i) w[i] -= lr * g[i];
}

Tensor rows_of(const std::vector<double>& x, std::size_t dims, std::span<const std::size_t> idx) {
  Tensor t = Tensor::zeros({idx.size(), dims});
  for (std::size_t r = 0; r < idx.size(); ++r) {
    std::copy_n(x.begin() + static_cast<std::ptrdiff_t>(idx[r] * dims), dims,
                t.data.begin() + static_cast<std::ptrdiff_t>(r * dims));
  }
  return t;
}

bool all_finite(const std::vector<double>& v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

bool all_finite(const ToyModel& m) {
  for (std::size_t l = 0; l < m.hidden.size(); ++l) {
    if (!all_finite(m.hidden[l].weight) || !all_finite(m.hidden[l].bias) || !all_finite(m.norms[l].gamma) ||
        !all_finite(m.norms[l].beta)) {
      return false;
    }
  }
  return all_finite(m.classifier.weight) && all_finite(m.classifier.bias);
}

double rel_error(double a, double f, double floor) {
  return std::fabs(a - f) / std::max({std::fabs(a), std::fabs(f), floor});
}

}  // namespace

DatasetKind parse_dataset_kind(std::string_view text) {
  if (text == "gaussian-clusters" || text == "gaussian_clusters") return DatasetKind::gaussian_clusters;
  if (text == "two-spirals" || text == "two_spirals") return DatasetKind::two_spirals;
  throw ConfigError("unknown dataset kind: " + std::string(text));
}

std::string_view to_string(DatasetKind k) {
  return k == DatasetKind::gaussian_clusters ? "gaussian-clusters" : "two-spirals";
}

Dataset make_dataset(DatasetKind kind, std::size_t n, std::uint64_t seed, const DatasetOptions& opts) {
  if (n < 100) throw DomainError("datasets need at least 100 samples");
  if (!(opts.test_fraction > 0.0 && opts.test_fraction < 1.0)) throw DomainError("test fraction must be in (0, 1)");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Dataset d;
  d.kind = kind;
  std::vector<double> x;
  std::vector<int> y;
  if (kind == DatasetKind::gaussian_clusters) {
    if (opts.classes < 2 || opts.dims < 1 || opts.clusters_per_class < 1) {
      throw DomainError("clusters need >= 2 classes, >= 1 dimension and >= 1 cluster per class");
    }
    d.classes = opts.classes;
    d.dims = opts.dims;
    // Random centre directions scaled to the requested separation; cluster
    // c belongs to class c % classes.
    const std::size_t clusters = d.classes * opts.clusters_per_class;
    std::vector<double> centres(clusters * d.dims);
    for (std::size_t c = 0; c < clusters; ++c) {
      double norm = 0.0;
      for (std::size_t j = 0; j < d.dims; ++j) {
        centres[c * d.dims + j] = normal(rng);
        norm += centres[c * d.dims + j] * centres[c * d.dims + j];
      }
      for (std::size_t j = 0; j < d.dims; ++j) centres[c * d.dims + j] *= opts.separation / std::sqrt(norm);
    }
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t cluster = i % clusters;
      for (std::size_t j = 0; j < d.dims; ++j) x.push_back(centres[cluster * d.dims + j] + normal(rng));
      y.push_back(static_cast<int>(cluster % d.classes));
    }
  } else {
    d.classes = 2;
    d.dims = 2;
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (std::size_t i = 0; i < n; ++i) {
      const int label = static_cast<int>(i % 2);
      const double t = 0.25 + 2.75 * std::sqrt(unit(rng));  // turns
      const double angle = 2.0 * std::numbers::pi * t + (label ? std::numbers::pi : 0.0);
      x.push_back(t * std::cos(angle) + 0.1 * normal(rng));
      x.push_back(t * std::sin(angle) + 0.1 * normal(rng));
      y.push_back(label);
    }
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  const auto test_n = static_cast<std::size_t>(std::llround(static_cast<double>(n) * opts.test_fraction));
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t src = order[i];
    const bool test = i < test_n;
    auto& dst_x = test ? d.test_x : d.train_x;
    auto& dst_y = test ? d.test_y : d.train_y;
    dst_x.insert(dst_x.end(), x.begin() + static_cast<std::ptrdiff_t>(src * d.dims),
                 x.begin() + static_cast<std::ptrdiff_t>((src + 1) * d.dims));
    dst_y.push_back(y[src]);
  }
  return d;
}

ToyModel ToyModel::init(const ModelSpec& spec, std::size_t inputs, std::size_t classes, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  auto make = [&](std::size_t in, std::size_t out) {
    DenseLayer l;
    l.in = in;
    l.out = out;
    const double scale = std::sqrt(2.0 / static_cast<double>(in));
    for (std::size_t i = 0; i < in * out; ++i) l.weight.push_back(scale * normal(rng));
    l.bias.assign(out, 0.0);
    return l;
  };
  ToyModel m;
  m.spec = spec;
  std::size_t width = inputs;
  for (std::size_t l = 0; l < spec.depth; ++l) {
    m.hidden.push_back(make(width, spec.hidden));
    m.norms.push_back(AffineParams::identity(spec.hidden));
    width = spec.hidden;
  }
  m.classifier = make(width, classes);
  return m;
}

double evaluate(const ToyModel& model, const Dataset& data, const NormConfig& norm, std::size_t batch) {
  if (data.test_size() == 0) return 0.0;
  std::size_t correct = 0;
  for (std::size_t start = 0; start < data.test_size(); start += batch) {
    const std::size_t rows = std::min(batch, data.test_size() - start);
    std::vector<std::size_t> idx(rows);
    std::iota(idx.begin(), idx.end(), start);
    const Tensor x = rows_of(data.test_x, data.dims, idx);
    const std::span<const int> labels(data.test_y.data() + start, rows);
    correct += run_forward(model, x, labels, norm).correct;
  }
  return static_cast<double>(correct) / static_cast<double>(data.test_size());
}

TrainRun train(const Dataset& data, const TrainConfig& cfg, std::uint64_t seed) {
  if (cfg.batch < 2) throw ConfigError("batch must hold at least 2 samples");
  if (data.train_size() < cfg.batch) throw ConfigError("training set smaller than one batch");
  TrainRun run;
  run.seed = seed;
  run.dataset = std::string(to_string(data.kind));
  run.config = cfg;
  ToyModel m = ToyModel::init(cfg.model, data.dims, data.classes, seed);
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<std::size_t> order(data.train_size());
  std::iota(order.begin(), order.end(), 0);
  const std::size_t steps = data.train_size() / cfg.batch;

  for (std::size_t epoch = 1; epoch <= cfg.epochs && !run.diverged; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t s = 0; s < steps; ++s) {
      const std::span<const std::size_t> idx(order.data() + s * cfg.batch, cfg.batch);
      const Tensor x = rows_of(data.train_x, data.dims, idx);
      std::vector<int> labels(cfg.batch);
      for (std::size_t r = 0; r < cfg.batch; ++r) labels[r] = data.train_y[idx[r]];
      const Forward f = run_forward(m, x, labels, cfg.norm);
      if (!std::isfinite(f.loss)) {
        run.diverged = true;
        break;
      }
      loss_sum += f.loss;
      correct += f.correct;
      const Grads g = run_backward(m, f, labels, cfg.norm);
      for (std::size_t l = 0; l < m.hidden.size(); ++l) {
        sgd(m.hidden[l].weight, g.hidden[l].weight, cfg.learning_rate);
        sgd(m.hidden[l].bias, g.hidden[l].bias, cfg.learning_rate);
        sgd(m.norms[l].gamma, g.norms[l].gamma, cfg.learning_rate);
        sgd(m.norms[l].beta, g.norms[l].beta, cfg.learning_rate);
      }
      sgd(m.classifier.weight, g.classifier.weight, cfg.learning_rate);
      sgd(m.classifier.bias, g.classifier.bias, cfg.learning_rate);
      if (!all_finite(m)) {
        run.diverged = true;
        break;
      }
    }
    if (run.diverged) break;
    EpochStats e;
    e.epoch = epoch;
    e.train_loss = loss_sum / static_cast<double>(steps);
    e.train_accuracy = static_cast<double>(correct) / static_cast<double>(steps * cfg.batch);
    e.test_accuracy = evaluate(m, data, cfg.norm, cfg.batch);
    run.trace.push_back(e);
  }
  if (!run.trace.empty()) {
    run.final_test_accuracy = run.trace.back().test_accuracy;
    run.final_loss = run.trace.back().train_loss;
  }
  return run;
}

GradCheckReport grad_check(const ToyModel& model, const Dataset& data, NormVariant variant,
                           std::size_t samples, double step, RnGradientForm form) {
  if (variant == NormVariant::lightnorm) variant = NormVariant::range;
  NormConfig cfg = NormConfig::for_variant(variant, formats::fp64());
  cfg.rn_gradient = form;
  samples = std::min(samples, data.train_size());
  std::vector<std::size_t> idx(samples);
  std::iota(idx.begin(), idx.end(), 0);
  const Tensor x = rows_of(data.train_x, data.dims, idx);
  const std::span<const int> labels(data.train_y.data(), samples);

  const Forward base = run_forward(model, x, labels, cfg);
  const Grads g = run_backward(model, base, labels, cfg);
  GradCheckReport rep;
  auto floor_of = [](const std::vector<double>& a) {
    double peak = 0.0;
    for (double v : a) peak = std::max(peak, std::fabs(v));
    return std::max(1e-3 * peak, 1e-12);
  };
  const bool range = variant == NormVariant::range;

  for (std::size_t l = 0; l < model.hidden.size(); ++l) {
    const Tensor& z = base.pre_norm[l];
    const double floor = floor_of(g.pre_norm[l].data);
    for (std::size_t i = 0; i < z.size(); ++i) {
      if (range && (base.caches[l].stats.argmin[i] || base.caches[l].stats.argmax[i])) {
        ++rep.skipped_extrema;
        continue;
      }
      Tensor zp = z;
      Tensor zm = z;
      zp.data[i] += step;
      zm.data[i] -= step;
      const double fd = (run_forward(model, x, labels, cfg, l, &zp).loss -
                         run_forward(model, x, labels, cfg, l, &zm).loss) / (2.0 * step);
      rep.max_rel_error = std::max(rep.max_rel_error, rel_error(g.pre_norm[l].data[i], fd, floor));
      ++rep.compared;
    }
    for (int which = 0; which < 2; ++which) {
      const std::vector<double>& analytic = which == 0 ? g.norms[l].gamma : g.norms[l].beta;
      const double floor_p = floor_of(analytic);
      for (std::size_t c = 0; c < analytic.size(); ++c) {
        ToyModel mp = model;
        ToyModel mm = model;
        (which == 0 ? mp.norms[l].gamma : mp.norms[l].beta)[c] += step;
        (which == 0 ? mm.norms[l].gamma : mm.norms[l].beta)[c] -= step;
        const double fd = (run_forward(mp, x, labels, cfg).loss - run_forward(mm, x, labels, cfg).loss) / (2.0 * step);
        rep.max_rel_error = std::max(rep.max_rel_error, rel_error(analytic[c], fd, floor_p));
        ++rep.compared;
      }
    }
  }
  return rep;
}

}  // namespace lightnorm
