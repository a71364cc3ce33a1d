#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "doctest.h"
#include "lightnorm/error.hpp"
#include "lightnorm/norm.hpp"
#include "oracles.hpp"

using namespace lightnorm;

namespace {

Tensor gaussian(std::mt19937_64& rng, std::vector<std::size_t> shape, double mean = 0.0, double sd = 1.0) {
  Tensor t = Tensor::zeros(std::move(shape));
  std::normal_distribution<double> normal(mean, sd);
  for (double& v : t.data) v = normal(rng);
  return t;
}

NormConfig fp64(NormVariant v) { return NormConfig::for_variant(v, formats::fp64()); }

double moment_mean(const std::vector<double>& v) {
  long double s = 0;
  for (double x : v) s += x;
  return static_cast<double>(s / static_cast<long double>(v.size()));
}

double moment_sd(const std::vector<double>& v) {
  const double m = moment_mean(v);
  long double s = 0;
  for (double x : v) s += (x - m) * (x - m);
  return static_cast<double>(std::sqrt(s / static_cast<long double>(v.size())));
}

/// |a - f| / max(|a|, |f|, 1e-3 * max|a|) over a gradient tensor.
double max_rel(const std::vector<double>& analytic, const std::vector<double>& numeric) {
  double peak = 0.0;
  for (double a : analytic) peak = std::max(peak, std::fabs(a));
  double worst = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double denom = std::max({std::fabs(analytic[i]), std::fabs(numeric[i]), 1e-3 * peak, 1e-300});
    worst = std::max(worst, std::fabs(analytic[i] - numeric[i]) / denom);
  }
  return worst;
}

}  // namespace

TEST_CASE("C(B)") {
  // 1/sqrt(2 ln 128) = 0.32101..., which rounds to the quoted 0.32.
  CHECK(c_of_b(128) == doctest::Approx(0.3210125).epsilon(1e-6));
  CHECK(std::round(c_of_b(128) * 100.0) == 32.0);
  CHECK(c_of_b(std::exp(1.0)) == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-12));
  CHECK(c_of_b(256) == doctest::Approx(0.3001).epsilon(1e-3));
  std::vector<std::size_t> sizes;
  for (const auto& [b, c] : c_of_b_lut()) {
    sizes.push_back(b);
    CHECK(c == doctest::Approx(1.0 / std::sqrt(2.0 * std::log(static_cast<double>(b)))).epsilon(1e-14));
  }
  CHECK(sizes == std::vector<std::size_t>{16, 32, 64, 128, 256, 1024});
  CHECK_THROWS_AS((void)c_of_b(1.0), DomainError);
}

TEST_CASE("config presets and parsing") {
  const NormConfig ln = NormConfig::lightnorm_defaults();
  CHECK(ln.fw_format == formats::fp10a());
  CHECK(ln.bw_format == formats::fp10b());
  CHECK(ln.group_size == 4);
  CHECK(parse_variant("bn") == NormVariant::conventional);
  CHECK(parse_variant("restructured") == NormVariant::restructured);
  CHECK(parse_variant("rn") == NormVariant::range);
  CHECK_THROWS_AS(parse_variant("layernorm"), ConfigError);
  CHECK(effective_epsilon(1e-5, formats::fp32()) == static_cast<double>(1e-5f));
  CHECK(effective_epsilon(1e-5, formats::fp10a()) == formats::fp10a().min_positive());
  CHECK_THROWS_AS((void)effective_epsilon(0.0, formats::fp32()), DomainError);
}

TEST_CASE("bn_forward examples") {
  const AffineParams id = AffineParams::identity(1);
  for (NormVariant v : {NormVariant::conventional, NormVariant::restructured}) {
    const auto r = bn_forward(Tensor::from({4}, {3.0, 3.0, 3.0, 3.0}), id, NormConfig::for_variant(v));
    CHECK(r.y.data == std::vector<double>(4, 0.0));

    NormConfig cfg = NormConfig::for_variant(v);
    cfg.epsilon = 1e-12;
    CHECK(bn_forward(Tensor::from({2}, {-1.0, 1.0}), id, cfg).y.data == std::vector<double>{-1.0, 1.0});
  }

  std::mt19937_64 rng(1);
  const Tensor x = gaussian(rng, {4096});
  const auto r = bn_forward(x, id, NormConfig::for_variant(NormVariant::conventional));
  CHECK(std::fabs(moment_mean(r.y.data)) < 1e-6);
  CHECK(std::fabs(moment_sd(r.y.data) - 1.0) < 1e-3);
}

TEST_CASE("restructured and conventional variance agree at FP64") {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> mean(-10, 10), sd(0.05, 3.0);
  for (int i = 0; i < 50; ++i) {
    const Tensor x = gaussian(rng, {8, 3, 4}, mean(rng), sd(rng));
    const AffineParams p = AffineParams::identity(3);
    const auto a = bn_forward(x, p, fp64(NormVariant::conventional));
    const auto b = bn_forward(x, p, fp64(NormVariant::restructured));
    for (std::size_t c = 0; c < 3; ++c) {
      const double va = a.cache.stats.channels[c].sigma;
      const double vb = b.cache.stats.channels[c].sigma;
      CHECK(std::fabs(va * va - vb * vb) <= 1e-9 * va * va);
    }
  }
}

TEST_CASE("BN is invariant to positive affine maps of the input at FP64") {
  std::mt19937_64 rng(3);
  NormConfig cfg = fp64(NormVariant::conventional);
  cfg.epsilon = 1e-12;
  for (int i = 0; i < 30; ++i) {
    const Tensor x = gaussian(rng, {16, 2}, 0.0, 2.0);
    Tensor z = x;
    for (double& v : z.data) v = 3.5 * v - 7.25;
    const auto a = bn_forward(x, AffineParams::identity(2), cfg).cache.normalized.data;
    const auto b = bn_forward(z, AffineParams::identity(2), cfg).cache.normalized.data;
    for (std::size_t j = 0; j < a.size(); ++j) CHECK(std::fabs(a[j] - b[j]) <= 1e-9);
  }
}

TEST_CASE("RN is shift invariant at FP64") {
  std::mt19937_64 rng(4);
  for (int i = 0; i < 30; ++i) {
    const Tensor x = gaussian(rng, {32, 3});
    Tensor z = x;
    for (double& v : z.data) v += 5.0;
    const auto a = rn_forward(x, AffineParams::identity(3), fp64(NormVariant::range)).cache.normalized.data;
    const auto b = rn_forward(z, AffineParams::identity(3), fp64(NormVariant::range)).cache.normalized.data;
    for (std::size_t j = 0; j < a.size(); ++j) CHECK(std::fabs(a[j] - b[j]) <= 1e-9);
  }
}

TEST_CASE("rn_forward examples") {
  const AffineParams p{{1.5}, {0.25}};
  const auto constant = rn_forward(Tensor::from({5}, std::vector<double>(5, 2.0)), p,
                                   NormConfig::for_variant(NormVariant::range));
  CHECK(constant.y.data == std::vector<double>(5, 0.25));

  NormConfig cfg = NormConfig::for_variant(NormVariant::range);
  cfg.batch_size = 128;
  const auto r = rn_forward(Tensor::from({2}, {-1.0, 1.0}), AffineParams::identity(1), cfg);
  CHECK(r.cache.stats.channels[0].sigma == doctest::Approx(0.64).epsilon(0.005));
  CHECK(r.y.data[0] == doctest::Approx(-1.5625).epsilon(0.005));
  CHECK(r.y.data[1] == doctest::Approx(1.5625).epsilon(0.005));

  // Extreme-value scaling: the expected range of n Gaussian draws grows like
  // 2*sqrt(2 ln n)*sigma, so C(n)*range lands near twice the true deviation.
  std::mt19937_64 rng(5);
  const Tensor x = gaussian(rng, {100000});
  NormConfig whole = fp64(NormVariant::range);
  whole.c_from_element_count = true;
  const double est = rn_forward(x, AffineParams::identity(1), whole).cache.stats.channels[0].sigma;
  const double truth = moment_sd(x.data);
  CHECK(est / (2.0 * truth) >= 0.8);
  CHECK(est / (2.0 * truth) <= 1.25);
}

TEST_CASE("statistics invariants and read counts") {
  std::mt19937_64 rng(6);
  const Tensor x = gaussian(rng, {16, 4, 3, 3}, 1.0, 2.0);
  const std::size_t n = x.size();
  const AffineParams p = AffineParams::identity(4);
  for (NormVariant v : {NormVariant::conventional, NormVariant::restructured, NormVariant::range}) {
    for (const FpFormat& f : {formats::fp32(), formats::fp10a(), formats::fp8()}) {
      const auto r = norm_forward(x, p, NormConfig::for_variant(v, f));
      for (const ChannelStats& s : r.cache.stats.channels) {
        CHECK(s.sigma >= 0.0);
        const double ulp = std::ldexp(1.0, exponent_of(std::max(std::fabs(s.mu), f.min_positive())) - f.mantissa_bits);
        CHECK(s.x_min <= s.mu + ulp);
        CHECK(s.mu <= s.x_max + ulp);
      }
      CHECK(r.cache.input_reads == (v == NormVariant::conventional ? 3 * n : 2 * n));
    }
  }
}

TEST_CASE("bn_backward") {
  std::mt19937_64 rng(7);
  const Tensor x = gaussian(rng, {32, 3});
  const AffineParams p{{0.7, 1.3, -0.4}, {0.1, 0.0, -2.0}};

  for (NormVariant v : {NormVariant::conventional, NormVariant::restructured}) {
    const auto f = bn_forward(x, p, NormConfig::for_variant(v));
    const auto zero = bn_backward(Tensor::zeros(x.shape), f.cache, NormConfig::for_variant(v));
    CHECK(zero.dx.data == std::vector<double>(x.size(), 0.0));
    CHECK(zero.dgamma == std::vector<double>(3, 0.0));
    CHECK(zero.dbeta == std::vector<double>(3, 0.0));
  }

  // Integer upstream gradients sum exactly in FP32.
  Tensor dy = Tensor::zeros(x.shape);
  std::uniform_int_distribution<int> ints(-1000, 1000);
  long long exact[3] = {0, 0, 0};
  for (std::size_t i = 0; i < dy.size(); ++i) {
    dy.data[i] = ints(rng);
    exact[i % 3] += static_cast<long long>(dy.data[i]);
  }
  const auto f = bn_forward(x, p, NormConfig::for_variant(NormVariant::conventional));
  const auto g = bn_backward(dy, f.cache, NormConfig::for_variant(NormVariant::conventional));
  for (std::size_t c = 0; c < 3; ++c) CHECK(g.dbeta[c] == static_cast<double>(exact[c]));

  CHECK_THROWS_AS(bn_backward(Tensor::zeros({31, 3}), f.cache, NormConfig::for_variant(NormVariant::conventional)),
                  ShapeError);
  CHECK_THROWS_AS(rn_backward(dy, f.cache, NormConfig::for_variant(NormVariant::range)), ConfigError);
}

TEST_CASE("bn_backward matches finite differences at FP64") {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 10; ++trial) {
    const Tensor x = gaussian(rng, {32, 2}, 0.5, 1.5);
    const Tensor target = gaussian(rng, {32, 2});
    const AffineParams p{{1.2, 0.6}, {0.3, -0.1}};
    for (NormVariant v : {NormVariant::conventional, NormVariant::restructured}) {
      const NormConfig cfg = fp64(v);
      auto loss = [&](const Tensor& probe) {
        const Tensor y = bn_forward(probe, p, cfg).y;
        double l = 0.0;
        for (std::size_t i = 0; i < y.size(); ++i) l += 0.5 * (y.data[i] - target.data[i]) * (y.data[i] - target.data[i]);
        return l;
      };
      const auto f = bn_forward(x, p, cfg);
      Tensor dy = f.y;
      for (std::size_t i = 0; i < dy.size(); ++i) dy.data[i] -= target.data[i];
      const auto g = bn_backward(dy, f.cache, cfg);
      std::vector<double> numeric(x.size());
      Tensor probe = x;
      for (std::size_t i = 0; i < x.size(); ++i) {
        const double h = 1e-5;
        probe.data[i] = x.data[i] + h;
        const double up = loss(probe);
        probe.data[i] = x.data[i] - h;
        const double down = loss(probe);
        probe.data[i] = x.data[i];
        numeric[i] = (up - down) / (2 * h);
      }
      CHECK(max_rel(g.dx.data, numeric) < 1e-5);
    }
  }
}

TEST_CASE("rn_backward matches the literal transcription") {
  // Single channel [-1, 0, 1] with unit upstream gradient, FP32, B = 128.
  NormConfig cfg = NormConfig::for_variant(NormVariant::range);
  cfg.batch_size = 128;
  const AffineParams id = AffineParams::identity(1);
  {
    const auto f = rn_forward(Tensor::from({3}, {-1.0, 0.0, 1.0}), id, cfg);
    const auto g = rn_backward(Tensor::from({3}, {1.0, 1.0, 1.0}), f.cache, cfg);
    const auto lit = oracle::rn_literal({-1.0, 0.0, 1.0}, {1.0, 1.0, 1.0}, 1.0, 0.0, c_of_b(128), cfg.epsilon,
                                        formats::fp32(), formats::fp32());
    CHECK(f.y.data == lit.y);
    CHECK(g.dx.data == lit.dx);
    // Interior element: numerator term only.
    const double sigma = f.cache.stats.channels[0].sigma;
    const double t1 = fp_mul(-fp_div(1.0, fp_add(sigma, quantize(1e-5, formats::fp32()), formats::fp32()),
                                     formats::fp32()),
                             fp_add(1.0, 1.0, formats::fp32()), formats::fp32());
    CHECK(g.dx.data[1] == t1);
  }

  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> gam(-2.0, 2.0);
  std::uniform_int_distribution<int> coin(0, 3);
  for (const auto& [fw, bw] : {std::pair{formats::fp32(), formats::fp32()}, std::pair{formats::fp10a(), formats::fp10b()},
                               std::pair{formats::fp16(), formats::fp10b()}}) {
    for (int trial = 0; trial < 100; ++trial) {
      Tensor x = gaussian(rng, {24}, 0.3, 1.7);
      if (coin(rng) == 0) x.data[5] = x.data[7] = *std::max_element(x.data.begin(), x.data.end());  // tie
      const Tensor dy = gaussian(rng, {24}, 0.0, 0.01);
      const AffineParams p{{gam(rng)}, {gam(rng)}};
      NormConfig c = NormConfig::for_variant(NormVariant::range);
      c.fw_format = fw;
      c.bw_format = bw;
      const auto f = rn_forward(x, p, c);
      const auto g = rn_backward(dy, f.cache, c);
      const auto lit = oracle::rn_literal(x.data, dy.data, p.gamma[0], p.beta[0], c_of_b(24), c.epsilon, fw, bw);
      CHECK(f.y.data == lit.y);
      CHECK(g.dx.data == lit.dx);
      CHECK(g.dgamma[0] == lit.dgamma);
      CHECK(g.dbeta[0] == lit.dbeta);
    }
  }
}

TEST_CASE("rn_backward zero gradient and interior rule") {
  std::mt19937_64 rng(10);
  const Tensor x = gaussian(rng, {16, 2});
  const NormConfig cfg = NormConfig::for_variant(NormVariant::range);
  const auto f = rn_forward(x, AffineParams::identity(2), cfg);
  const auto g = rn_backward(Tensor::zeros(x.shape), f.cache, cfg);
  CHECK(g.dx.data == std::vector<double>(x.size(), 0.0));
  CHECK(g.dgamma == std::vector<double>(2, 0.0));

  NormCache broken = f.cache;
  broken.stats.argmin.clear();
  CHECK_THROWS_AS(rn_backward(Tensor::zeros(x.shape), broken, cfg), ShapeError);
}

TEST_CASE("exact range-norm gradient matches finite differences; printed form is reported") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 10; ++trial) {
    const Tensor x = gaussian(rng, {32, 2});
    const Tensor dy = gaussian(rng, {32, 2});
    const AffineParams p{{1.1, -0.8}, {0.2, 0.4}};
    NormConfig cfg = fp64(NormVariant::range);
    cfg.rn_gradient = RnGradientForm::exact;
    const auto f = rn_forward(x, p, cfg);
    const auto g = rn_backward(dy, f.cache, cfg);
    std::vector<double> numeric(x.size());
    Tensor probe = x;
    auto loss = [&](const Tensor& t) {
      const Tensor y = rn_forward(t, p, cfg).y;
      double l = 0;
      for (std::size_t i = 0; i < y.size(); ++i) l += dy.data[i] * y.data[i];
      return l;
    };
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double h = 1e-6;  // extrema are unique, so they stay extrema
      probe.data[i] = x.data[i] + h;
      const double up = loss(probe);
      probe.data[i] = x.data[i] - h;
      const double down = loss(probe);
      probe.data[i] = x.data[i];
      numeric[i] = (up - down) / (2 * h);
    }
    CHECK(max_rel(g.dx.data, numeric) < 1e-5);

    const auto exact_diag = rn_gradient_diagnostic(x, p, dy, cfg);
    CHECK(exact_diag.compared == x.size() - 4);
    CHECK(exact_diag.max_rel_error < 1e-4);
    cfg.rn_gradient = RnGradientForm::printed;
    const auto printed_diag = rn_gradient_diagnostic(x, p, dy, cfg);
    CHECK(printed_diag.skipped_extrema == 4);
    CHECK(printed_diag.max_rel_error > 1e-3);  // the printed numerator term has the opposite sign
  }
}

TEST_CASE("LightNorm forward and backward") {
  NormConfig cfg = NormConfig::lightnorm_defaults();
  cfg.batch_size = 128;
  const AffineParams p{{1.0}, {0.75}};
  const auto constant = lightnorm_forward(Tensor::from({8}, std::vector<double>(8, 3.0)), p, cfg);
  CHECK(unpack_tensor(constant.y).data == std::vector<double>(8, 0.75));

  std::mt19937_64 rng(12);
  const Tensor x = gaussian(rng, {1, 32, 8, 8});
  const AffineParams p32 = AffineParams::identity(32);
  const auto ln = lightnorm_forward(x, p32, cfg);
  CHECK(ln.y.total_bits() == 12800);
  const auto rn = rn_forward(x, p32, cfg);
  CHECK(unpack_tensor(ln.y).data == bfp_round_trip(rn.y, formats::fp10a(), 4).data);

  // Backward: unpack, rn_backward in FP10-B, pack.
  Tensor dy = gaussian(rng, x.shape, 0.0, 0.05);
  for (double& v : dy.data) v = quantize(v, formats::fp10b());
  const BfpTensor dy_packed = pack_tensor(dy, formats::fp10b(), 4);
  const auto g = lightnorm_backward(dy_packed, ln.cache, cfg);
  const auto ref = rn_backward(unpack_tensor(dy_packed), ln.cache, cfg);
  CHECK(unpack_tensor(g.dx).data == bfp_round_trip(ref.dx, formats::fp10b(), 4).data);
  CHECK(g.dgamma.size() == 32);
  CHECK(g.dbeta.size() == 32);
  CHECK(g.dgamma == ref.dgamma);

  const auto zero = lightnorm_backward(pack_tensor(Tensor::zeros(x.shape), formats::fp10b(), 4), ln.cache, cfg);
  CHECK(unpack_tensor(zero.dx).data == std::vector<double>(x.size(), 0.0));

  // The plain-tensor dispatch agrees with the packed path.
  const auto via = norm_forward(x, p32, cfg);
  CHECK(via.y.data == unpack_tensor(ln.y).data);
  CHECK(norm_backward(dy, via.cache, cfg).dx.data == unpack_tensor(g.dx).data);
}

TEST_CASE("input validation") {
  const NormConfig bn = NormConfig::for_variant(NormVariant::conventional);
  CHECK_THROWS_AS(bn_forward(Tensor::from({1}, {1.0}), AffineParams::identity(1), bn), DomainError);
  CHECK_THROWS_AS(bn_forward(Tensor::zeros({0, 3}), AffineParams::identity(3), bn), DomainError);
  CHECK_THROWS_AS(bn_forward(Tensor::zeros({4, 3}), AffineParams::identity(2), bn), ShapeError);
  CHECK_THROWS_AS(rn_forward(Tensor::zeros({4, 3}), AffineParams::identity(3), bn), ConfigError);
  CHECK_THROWS_AS(bn_forward(Tensor::from({2}, {1.0, std::nan("")}), AffineParams::identity(1), bn), DomainError);
}
