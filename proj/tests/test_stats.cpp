#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "doctest.h"
#include "lightnorm/error.hpp"
#include "lightnorm/stats.hpp"
#include "oracles.hpp"

using namespace lightnorm;

namespace {

/// Zero-setting steps counted with table-search rounding of the exact sum.
std::size_t zse_oracle(const std::vector<double>& xs, const FpFormat& f) {
  std::size_t count = 0;
  double acc = 0.0;
  for (double x : xs) {
    const double next = oracle::nearest(static_cast<long double>(acc) + x, f);
    const double larger = std::fabs(acc) >= std::fabs(x) ? acc : x;
    const double smaller = std::fabs(acc) >= std::fabs(x) ? x : acc;
    if (smaller != 0.0 && next == larger) ++count;
    acc = next;
  }
  return count;
}

}  // namespace

TEST_CASE("zero-setting examples") {
  const FpFormat fp8 = formats::fp8();
  CHECK(zse_count(std::vector<double>{std::ldexp(1.0, 10), std::ldexp(1.0, -10)}, fp8) == 1);
  CHECK(zse_count(std::vector<double>(50, 0.0), fp8) == 0);
  CHECK(zse_count(std::vector<double>{}, fp8) == 0);
  // Four equal terms: each addend still moves the accumulator.
  CHECK(zse_count(std::vector<double>(4, 1.5), fp8) == 0);
  // 32 ones in FP8 stall once the accumulator reaches 8.
  CHECK(zse_count(std::vector<double>(32, 1.0), fp8) == 32 - 8);
}

TEST_CASE("growing accumulator over tiny terms matches the step oracle") {
  const FpFormat fp8 = formats::fp8();
  std::vector<double> xs{64.0};
  const double tiny = 0.25;
  for (int i = 0; i < 10000; ++i) xs.push_back(tiny);
  const std::size_t n = zse_count(xs, fp8);
  CHECK(n == zse_oracle(xs, fp8));
  // Accumulator exceeds the terms by 2^8 > 2^(m+2): every tiny term vanishes.
  CHECK(n == 10000);

  std::mt19937_64 rng(3);
  for (const FpFormat& f : {formats::fp8(), formats::fp10a(), formats::fp10b()}) {
    for (int trial = 0; trial < 200; ++trial) {
      std::vector<double> ys;
      for (int i = 0; i < 64; ++i) ys.push_back(oracle::random_representable(rng, f, -6, 6));
      CHECK(zse_count(ys, f) == zse_oracle(ys, f));
    }
  }
}

TEST_CASE("ascending order never increases the count on nonnegative inputs") {
  std::mt19937_64 rng(5);
  for (const FpFormat& f : {formats::fp8(), formats::fp10a(), formats::fp16()}) {
    for (int trial = 0; trial < 300; ++trial) {
      std::vector<double> ys;
      for (int i = 0; i < 48; ++i) ys.push_back(std::fabs(oracle::random_representable(rng, f, -5, 5)));
      std::vector<double> asc = ys;
      std::sort(asc.begin(), asc.end());
      CHECK(zse_count(asc, f) <= zse_count(ys, f));
      CHECK(zse_count(ys, f) == zse_count(ys, f));
    }
  }
}

TEST_CASE("distortion sweep") {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> normal(0.0, 1.0);
  Tensor x = Tensor::zeros({512, 8});
  for (double& v : x.data) v = normal(rng);
  const auto rows = distortion_sweep(x, {formats::fp64(), formats::fp32(), formats::fp16(), formats::fp8()});
  REQUIRE(rows.size() == 4);
  CHECK(rows[0].format == "FP64");
  CHECK(std::fabs(rows[0].mean) < 1e-9);
  CHECK(std::fabs(rows[0].stdev - 1.0) < 1e-9);
  CHECK(rows[0].zse_count == 0);
  CHECK(std::fabs(rows[1].mean) < 1e-6);
  CHECK(std::fabs(rows[1].stdev - 1.0) < 1e-4);
  CHECK(rows[3].count == x.size());
  // Narrower mantissas lose more addends and inflate the spread.
  CHECK(rows[3].zse_count > rows[2].zse_count);
  CHECK(rows[3].stdev > rows[2].stdev);
  CHECK(rows[2].stdev > rows[1].stdev - 1e-4);
}

TEST_CASE("range probe") {
  const std::vector<double> ones{1.0, -1.0, 1.0, 0.0};
  const RangeProbe p = range_probe(std::span<const double>(ones));
  CHECK(p.min_log2 == 0.0);
  CHECK(p.max_log2 == 0.0);
  CHECK(p.nonzero == 3);
  CHECK(p.fits.size() == format_catalog().size());
  for (const FormatFit& f : p.fits) CHECK(f.fits);

  // Gradient-like magnitudes in [2^-16.25, 2^-8.97].
  std::vector<double> grads;
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> expo(-16.25, -8.97);
  grads.push_back(-std::exp2(-16.25));
  grads.push_back(std::exp2(-8.97));
  for (int i = 0; i < 1000; ++i) grads.push_back((i % 2 ? -1 : 1) * std::exp2(expo(rng)));
  const RangeProbe g = range_probe(std::span<const double>(grads));
  CHECK(g.min_log2 == doctest::Approx(-16.25));
  CHECK(g.max_log2 == doctest::Approx(-8.97));
  for (const FormatFit& f : g.fits) {
    const FpFormat fmt = parse_format(f.format);
    CHECK(f.fits == (fmt.exponent_bits > 5));
  }
  CHECK(range_fits(-16.25, -8.97, formats::fp10b()));
  CHECK_FALSE(range_fits(-16.25, -8.97, formats::fp10a()));

  std::uniform_real_distribution<double> u(0.5, 2.0);
  std::vector<Tensor> stream;
  for (int t = 0; t < 3; ++t) {
    Tensor s = Tensor::zeros({100});
    for (double& v : s.data) v = u(rng);
    stream.push_back(s);
  }
  const RangeProbe r = range_probe(std::span<const Tensor>(stream));
  CHECK(r.min_log2 >= -1.0);
  CHECK(r.max_log2 <= 1.0);
  CHECK(r.min_log2 <= r.max_log2);
  CHECK(r.nonzero == 300);

  const std::vector<double> zeros(10, 0.0);
  CHECK_THROWS_AS(range_probe(std::span<const double>(zeros)), DomainError);
  const std::vector<double> bad{1.0, std::nan("")};
  CHECK_THROWS_AS(range_probe(std::span<const double>(bad)), DomainError);
}
