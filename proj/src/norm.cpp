#include "lightnorm/norm.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "lightnorm/error.hpp"

namespace lightnorm {

namespace {

bool is_bn(NormVariant v) {
  return v == NormVariant::conventional || v == NormVariant::restructured;
}

bool is_rn(NormVariant v) { return v == NormVariant::range || v == NormVariant::lightnorm; }

void check_input(const Tensor& x, const AffineParams& p, const ChannelLayout& layout) {
  if (element_count(x.shape) != x.size()) throw ShapeError("input: shape/data mismatch");
  if (layout.per_channel() == 0) throw DomainError("normalization over an empty channel");
  if (layout.per_channel() < 2) throw DomainError("normalization needs >= 2 elements per channel");
  if (p.gamma.size() != layout.channels() || p.beta.size() != layout.channels()) {
    throw ShapeError("affine parameters hold " + std::to_string(p.gamma.size()) + "/" +
                     std::to_string(p.beta.size()) + " entries for " +
                     std::to_string(layout.channels()) + " channels");
  }
  for (std::size_t c = 0; c < layout.channels(); ++c) {
    if (!std::isfinite(p.gamma[c]) || !std::isfinite(p.beta[c])) {
      throw DomainError("affine parameters must be finite");
    }
  }
}

void check_gradient(const Tensor& dy, const NormCache& cache) {
  if (dy.shape != cache.shape || dy.size() != element_count(cache.shape)) {
    throw ShapeError("upstream gradient shape does not match the cached forward pass");
  }
}

double batch_for_c(const NormConfig& cfg, const ChannelLayout& layout,
                   const std::vector<std::size_t>& shape) {
  if (cfg.c_from_element_count) return static_cast<double>(layout.per_channel());
  if (cfg.batch_size > 0) return static_cast<double>(cfg.batch_size);
  return static_cast<double>(shape.size() == 1 ? shape[0] : layout.batch());
}

NormCache make_cache(const Tensor& x, const NormConfig& cfg, const ChannelLayout& layout) {
  NormCache cache;
  cache.variant = cfg.variant;
  cache.shape = x.shape;
  cache.normalized = Tensor::zeros(x.shape);
  cache.centered = Tensor::zeros(x.shape);
  cache.stats.channels.resize(layout.channels());
  cache.fw_format = cfg.fw_format;
  cache.bw_format = cfg.bw_format;
  cache.epsilon = cfg.epsilon;
  return cache;
}

}  // namespace

std::string_view to_string(NormVariant v) {
  switch (v) {
    case NormVariant::conventional: return "conventional";
    case NormVariant::restructured: return "restructured";
    case NormVariant::range: return "range";
    case NormVariant::lightnorm: return "lightnorm";
  }
  return "unknown";
}

NormVariant parse_variant(std::string_view text) {
  if (text == "conventional" || text == "bn") return NormVariant::conventional;
  if (text == "restructured") return NormVariant::restructured;
  if (text == "range" || text == "rn") return NormVariant::range;
  if (text == "lightnorm") return NormVariant::lightnorm;
  throw ConfigError("unknown normalization variant '" + std::string(text) + "'");
}

std::string_view to_string(RnGradientForm f) {
  return f == RnGradientForm::printed ? "printed" : "exact";
}

RnGradientForm parse_gradient_form(std::string_view text) {
  if (text == "printed") return RnGradientForm::printed;
  if (text == "exact") return RnGradientForm::exact;
  throw ConfigError("unknown range-norm gradient form '" + std::string(text) + "'");
}

NormConfig NormConfig::lightnorm_defaults() {
  NormConfig cfg;
  cfg.variant = NormVariant::lightnorm;
  cfg.fw_format = formats::fp10a();
  cfg.bw_format = formats::fp10b();
  cfg.group_size = 4;
  return cfg;
}

NormConfig NormConfig::for_variant(NormVariant v, const FpFormat& fmt) {
  if (v == NormVariant::lightnorm) return lightnorm_defaults();
  NormConfig cfg;
  cfg.variant = v;
  cfg.fw_format = fmt;
  cfg.bw_format = fmt;
  return cfg;
}

AffineParams AffineParams::identity(std::size_t channels) {
  return {std::vector<double>(channels, 1.0), std::vector<double>(channels, 0.0)};
}

const std::array<std::pair<std::size_t, double>, 6>& c_of_b_lut() {
  static const std::array<std::pair<std::size_t, double>, 6> lut = {{
      {16, 0.42466090014400953},
      {32, 0.3798282560433022},
      {64, 0.3467341730212743},
      {128, 0.32101346666110925},
      {256, 0.30028060219661246},
      {1024, 0.26857913553447926},
  }};
  return lut;
}

double c_of_b(double batch) {
  if (!(batch >= 2.0)) throw DomainError("C(B) needs B >= 2");
  for (const auto& [b, c] : c_of_b_lut()) {
    if (static_cast<double>(b) == batch) return c;
  }
  return 1.0 / std::sqrt(2.0 * std::log(batch));
}

double effective_epsilon(double eps, const FpFormat& fmt) {
  if (!(eps > 0.0) || !std::isfinite(eps)) throw DomainError("epsilon must be positive");
  const double q = quantize(eps, fmt);
  return q == 0.0 ? fmt.min_positive() : q;
}

ForwardResult bn_forward(const Tensor& x, const AffineParams& p, const NormConfig& cfg) {
  if (!is_bn(cfg.variant)) throw ConfigError("bn_forward needs a conventional or restructured config");
  const ChannelLayout layout(x.shape);
  check_input(x, p, layout);

  const FpContext f(cfg.fw_format);
  const std::size_t n = layout.per_channel();
  const double count = f.q(static_cast<double>(n));
  const double eps = effective_epsilon(cfg.epsilon, cfg.fw_format);
  const bool two_pass = cfg.variant == NormVariant::conventional;

  ForwardResult out{Tensor::zeros(x.shape), make_cache(x, cfg, layout)};
  NormCache& cache = out.cache;
  for (std::size_t c = 0; c < layout.channels(); ++c) {
    auto read = [&](std::size_t j) {
      ++cache.input_reads;
      return f.q(x.data[layout.index(c, j)]);
    };

    double sum = 0.0;
    double sum_sq = 0.0;
    double lo = 0.0;
    double hi = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double v = read(j);
      sum = f.add(sum, v);
      if (!two_pass) sum_sq = f.add(sum_sq, f.mul(v, v));
      lo = j == 0 ? v : std::min(lo, v);
      hi = j == 0 ? v : std::max(hi, v);
    }
    const double mu = f.div(sum, count);

    double var = 0.0;
    if (two_pass) {
      for (std::size_t j = 0; j < n; ++j) {
        const double d = f.sub(read(j), mu);
        sum_sq = f.add(sum_sq, f.mul(d, d));
      }
      var = f.div(sum_sq, count);
    } else {
      var = std::max(0.0, f.sub(f.div(sum_sq, count), f.mul(mu, mu)));
    }
    const double denom = f.sqrt(f.add(var, eps));

    const double g = f.q(p.gamma[c]);
    const double b = f.q(p.beta[c]);
    for (std::size_t j = 0; j < n; ++j) {
      const std::size_t idx = layout.index(c, j);
      const double d = f.sub(read(j), mu);
      const double xhat = f.div(d, denom);
      cache.centered.data[idx] = d;
      cache.normalized.data[idx] = xhat;
      out.y.data[idx] = f.add(f.mul(g, xhat), b);
    }

    ChannelStats& s = cache.stats.channels[c];
    s.mu = mu;
    s.sigma = f.sqrt(var);
    s.denom = denom;
    s.x_min = lo;
    s.x_max = hi;
    cache.gamma.push_back(g);
  }
  return out;
}

ForwardResult rn_forward(const Tensor& x, const AffineParams& p, const NormConfig& cfg) {
  if (!is_rn(cfg.variant)) throw ConfigError("rn_forward needs a range or lightnorm config");
  const ChannelLayout layout(x.shape);
  check_input(x, p, layout);

  const FpContext f(cfg.fw_format);
  const std::size_t n = layout.per_channel();
  const double count = f.q(static_cast<double>(n));
  const double eps = effective_epsilon(cfg.epsilon, cfg.fw_format);
  const double c_raw = c_of_b(batch_for_c(cfg, layout, x.shape));
  const double c_b = f.q(c_raw);

  ForwardResult out{Tensor::zeros(x.shape), make_cache(x, cfg, layout)};
  NormCache& cache = out.cache;
  cache.c_b = c_b;
  cache.stats.argmin.assign(x.size(), 0);
  cache.stats.argmax.assign(x.size(), 0);

  for (std::size_t c = 0; c < layout.channels(); ++c) {
    auto read = [&](std::size_t j) {
      ++cache.input_reads;
      return f.q(x.data[layout.index(c, j)]);
    };

    // Mean, max and min come out of a single pass over the stream.
    double sum = 0.0;
    double lo = 0.0;
    double hi = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double v = read(j);
      sum = f.add(sum, v);
      lo = j == 0 ? v : std::min(lo, v);
      hi = j == 0 ? v : std::max(hi, v);
    }
    const double mu = f.div(sum, count);
    const double sigma = f.mul(c_b, f.sub(hi, lo));
    const double denom = f.add(sigma, eps);

    const double g = f.q(p.gamma[c]);
    const double b = f.q(p.beta[c]);
    ChannelStats& s = cache.stats.channels[c];
    for (std::size_t j = 0; j < n; ++j) {
      const std::size_t idx = layout.index(c, j);
      const double v = read(j);
      const double d = f.sub(v, mu);
      const double xhat = f.div(d, denom);
      cache.centered.data[idx] = d;
      cache.normalized.data[idx] = xhat;
      out.y.data[idx] = f.add(f.mul(g, xhat), b);
      if (v == lo) {
        cache.stats.argmin[idx] = 1;
        ++s.min_ties;
      }
      if (v == hi) {
        cache.stats.argmax[idx] = 1;
        ++s.max_ties;
      }
    }

    s.mu = mu;
    s.sigma = sigma;
    s.denom = denom;
    s.x_min = lo;
    s.x_max = hi;
    cache.gamma.push_back(g);
  }
  return out;
}

Gradients bn_backward(const Tensor& dy, const NormCache& cache, const NormConfig& cfg) {
  if (!is_bn(cfg.variant) || !is_bn(cache.variant)) {
    throw ConfigError("bn_backward needs a batch-norm config and cache");
  }
  check_gradient(dy, cache);

  const FpContext f(cfg.bw_format);
  const ChannelLayout layout(cache.shape);
  const std::size_t n = layout.per_channel();
  const double count = f.q(static_cast<double>(n));

  Gradients g{Tensor::zeros(cache.shape), {}, {}};
  for (std::size_t c = 0; c < layout.channels(); ++c) {
    std::vector<double> dys(n);
    std::vector<double> xhat(n);
    double dbeta = 0.0;
    double dgamma = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const std::size_t idx = layout.index(c, j);
      dys[j] = f.q(dy.data[idx]);
      xhat[j] = f.q(cache.normalized.data[idx]);
      dbeta = f.add(dbeta, dys[j]);
      dgamma = f.add(dgamma, f.mul(dys[j], xhat[j]));
    }

    const double scale = f.div(f.q(cache.gamma[c]), f.q(cache.stats.channels[c].denom));
    const double mean_dbeta = f.div(dbeta, count);
    const double mean_dgamma = f.div(dgamma, count);
    for (std::size_t j = 0; j < n; ++j) {
      const double inner = f.sub(f.sub(dys[j], mean_dbeta), f.mul(xhat[j], mean_dgamma));
      g.dx.data[layout.index(c, j)] = f.mul(scale, inner);
    }
    g.dgamma.push_back(dgamma);
    g.dbeta.push_back(dbeta);
  }
  return g;
}

Gradients rn_backward(const Tensor& dy, const NormCache& cache, const NormConfig& cfg) {
  if (!is_rn(cfg.variant) || !is_rn(cache.variant)) {
    throw ConfigError("rn_backward needs a range or lightnorm config and cache");
  }
  check_gradient(dy, cache);
  if (cache.stats.argmin.size() != dy.size() || cache.stats.argmax.size() != dy.size()) {
    throw ShapeError("rn_backward: cache is missing the argmin/argmax masks");
  }

  const FpContext f(cfg.bw_format);
  const ChannelLayout layout(cache.shape);
  const std::size_t n = layout.per_channel();
  const double count = f.q(static_cast<double>(n));
  const double eps = effective_epsilon(cache.epsilon, cfg.bw_format);
  const double c_b = f.q(cache.c_b);

  Gradients g{Tensor::zeros(cache.shape), {}, {}};
  for (std::size_t c = 0; c < layout.channels(); ++c) {
    const ChannelStats& s = cache.stats.channels[c];
    const double gamma = f.q(cache.gamma[c]);
    const double sigma = f.q(s.sigma);

    std::vector<double> dys(n);
    double sum_dy = 0.0;
    double sum_dy_centered = 0.0;
    double dgamma = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const std::size_t idx = layout.index(c, j);
      dys[j] = f.q(dy.data[idx]);
      sum_dy = f.add(sum_dy, dys[j]);
      sum_dy_centered = f.add(sum_dy_centered, f.mul(dys[j], f.q(cache.centered.data[idx])));
      dgamma = f.add(dgamma, f.mul(dys[j], f.q(cache.normalized.data[idx])));
    }
    const double mean_dy = f.div(sum_dy, count);

    // Scalar-unit terms, once per channel.
    const bool printed = cfg.rn_gradient == RnGradientForm::printed;
    const double denom = f.add(sigma, eps);
    double numer_scale = 0.0;
    double denom_scale = 0.0;
    if (printed) {
      numer_scale = -f.div(gamma, denom);
      const double sigma_pow = f.div(1.0, f.mul(sigma, f.sqrt(sigma)));
      denom_scale = f.mul(f.div(f.mul(gamma, c_b), 2.0), sigma_pow);
    } else {
      numer_scale = f.div(gamma, denom);
      denom_scale = f.div(f.mul(gamma, c_b), f.mul(denom, denom));
    }

    const double t2 = f.mul(denom_scale, sum_dy_centered);
    const double at_min = s.min_ties > 1 ? f.div(t2, f.q(static_cast<double>(s.min_ties))) : t2;
    const double at_max = s.max_ties > 1 ? f.div(t2, f.q(static_cast<double>(s.max_ties))) : t2;

    for (std::size_t j = 0; j < n; ++j) {
      const std::size_t idx = layout.index(c, j);
      double dx = printed ? f.mul(numer_scale, f.add(mean_dy, dys[j]))
                          : f.mul(numer_scale, f.sub(dys[j], mean_dy));
      if (cache.stats.argmin[idx]) dx = f.add(dx, at_min);
      if (cache.stats.argmax[idx]) dx = f.sub(dx, at_max);
      g.dx.data[idx] = dx;
    }
    g.dgamma.push_back(dgamma);
    g.dbeta.push_back(sum_dy);
  }
  return g;
}

LightNormForward lightnorm_forward(const Tensor& x, const AffineParams& p, const NormConfig& cfg) {
  if (cfg.variant != NormVariant::lightnorm) throw ConfigError("lightnorm_forward needs a lightnorm config");
  ForwardResult r = rn_forward(x, p, cfg);
  return {pack_tensor(r.y, cfg.fw_format, cfg.group_size), std::move(r.cache)};
}

LightNormGradients lightnorm_backward(const BfpTensor& dy, const NormCache& cache,
                                      const NormConfig& cfg) {
  if (cfg.variant != NormVariant::lightnorm) throw ConfigError("lightnorm_backward needs a lightnorm config");
  Gradients g = rn_backward(unpack_tensor(dy), cache, cfg);
  return {pack_tensor(g.dx, cfg.bw_format, cfg.group_size), std::move(g.dgamma),
          std::move(g.dbeta)};
}

ForwardResult norm_forward(const Tensor& x, const AffineParams& p, const NormConfig& cfg) {
  switch (cfg.variant) {
    case NormVariant::conventional:
    case NormVariant::restructured: return bn_forward(x, p, cfg);
    case NormVariant::range: return rn_forward(x, p, cfg);
    case NormVariant::lightnorm: {
      LightNormForward r = lightnorm_forward(x, p, cfg);
      return {unpack_tensor(r.y), std::move(r.cache)};
    }
  }
  throw ConfigError("unknown variant");
}

Gradients norm_backward(const Tensor& dy, const NormCache& cache, const NormConfig& cfg) {
  switch (cfg.variant) {
    case NormVariant::conventional:
    case NormVariant::restructured: return bn_backward(dy, cache, cfg);
    case NormVariant::range: return rn_backward(dy, cache, cfg);
    case NormVariant::lightnorm: {
      Tensor rounded = dy;
      for (double& v : rounded.data) v = quantize(v, cfg.bw_format);
      LightNormGradients g =
          lightnorm_backward(pack_tensor(rounded, cfg.bw_format, cfg.group_size), cache, cfg);
      return {unpack_tensor(g.dx), std::move(g.dgamma), std::move(g.dbeta)};
    }
  }
  throw ConfigError("unknown variant");
}

RnGradientDiagnostic rn_gradient_diagnostic(const Tensor& x, const AffineParams& p,
                                            const Tensor& dy, NormConfig cfg, double step) {
  cfg.variant = NormVariant::range;
  cfg.fw_format = formats::fp64();
  cfg.bw_format = formats::fp64();

  const ForwardResult base = rn_forward(x, p, cfg);
  const Gradients analytic = rn_backward(dy, base.cache, cfg);
  auto loss = [&](const Tensor& probe) {
    const Tensor y = rn_forward(probe, p, cfg).y;
    long double total = 0.0L;
    for (std::size_t i = 0; i < y.size(); ++i) total += static_cast<long double>(dy.data[i]) * y.data[i];
    return static_cast<double>(total);
  };

  RnGradientDiagnostic diag;
  Tensor probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (base.cache.stats.argmin[i] || base.cache.stats.argmax[i]) {
      ++diag.skipped_extrema;
      continue;
    }
    const double h = step * std::max(1.0, std::fabs(x.data[i]));
    probe.data[i] = x.data[i] + h;
    const double up = loss(probe);
    probe.data[i] = x.data[i] - h;
    const double down = loss(probe);
    probe.data[i] = x.data[i];

    const double numeric = (up - down) / (2.0 * h);
    const double err = std::fabs(analytic.dx.data[i] - numeric);
    const double scale = std::max({std::fabs(analytic.dx.data[i]), std::fabs(numeric), 1e-12});
    diag.max_abs_error = std::max(diag.max_abs_error, err);
    diag.max_rel_error = std::max(diag.max_rel_error, err / scale);
    ++diag.compared;
  }
  return diag;
}

}  // namespace lightnorm
