#include "lightnorm/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "lightnorm/error.hpp"
#include "lightnorm/norm.hpp"

namespace lightnorm {

std::size_t zse_count(std::span<const double> xs, const FpFormat& fmt) {
  std::size_t count = 0;
  double acc = 0.0;
  for (double x : xs) {
    const bool acc_larger = std::fabs(acc) >= std::fabs(x);
    const double larger = acc_larger ? acc : x;
    const double smaller = acc_larger ? x : acc;
    const double next = fp_add(acc, x, fmt);
    if (smaller != 0.0 && next == larger) ++count;
    acc = next;
  }
  return count;
}

std::vector<DistortionReport> distortion_sweep(const Tensor& x, const std::vector<FpFormat>& fmts,
                                               const DistortionOptions& opts) {
  const ChannelLayout layout(x.shape);
  const AffineParams affine = AffineParams::identity(layout.channels());
  std::vector<DistortionReport> out;
  out.reserve(fmts.size());
  for (const FpFormat& fmt : fmts) {
    NormConfig cfg = NormConfig::for_variant(NormVariant::conventional, fmt);
    cfg.epsilon = opts.epsilon;
    const ForwardResult r = bn_forward(x, affine, cfg);

    DistortionReport rep;
    rep.format = fmt.label();
    rep.count = r.cache.normalized.size();
    long double sum = 0.0L;
    for (double v : r.cache.normalized.data) sum += v;
    const long double mean = rep.count ? sum / static_cast<long double>(rep.count) : 0.0L;
    long double sq = 0.0L;
    for (double v : r.cache.normalized.data) sq += (v - mean) * (v - mean);
    rep.mean = static_cast<double>(mean);
    rep.stdev = rep.count ? static_cast<double>(std::sqrt(sq / static_cast<long double>(rep.count))) : 0.0;

    for (std::size_t c = 0; c < layout.channels(); ++c) {
      std::vector<double> stream = layout.gather(x, c);
      for (double& v : stream) v = quantize(v, fmt);
      rep.zse_count += zse_count(stream, fmt);
    }
    out.push_back(std::move(rep));
  }
  return out;
}

bool range_fits(double min_log2, double max_log2, const FpFormat& fmt) {
  return min_log2 >= static_cast<double>(fmt.emin()) && max_log2 <= std::log2(fmt.max_value());
}

RangeProbe range_probe(std::span<const double> values) {
  RangeProbe p;
  p.min_log2 = std::numeric_limits<double>::infinity();
  p.max_log2 = -std::numeric_limits<double>::infinity();
  for (double v : values) {
    if (!std::isfinite(v)) throw DomainError("range probe: non-finite value");
    if (v == 0.0) continue;
    const double l = std::log2(std::fabs(v));
    p.min_log2 = std::min(p.min_log2, l);
    p.max_log2 = std::max(p.max_log2, l);
    ++p.nonzero;
  }
  if (p.nonzero == 0) throw DomainError("range probe: stream holds no nonzero value");
  for (const FpFormat& f : format_catalog()) {
    p.fits.push_back({f.label(), range_fits(p.min_log2, p.max_log2, f)});
  }
  return p;
}

RangeProbe range_probe(std::span<const Tensor> stream) {
  std::vector<double> all;
  for (const Tensor& t : stream) all.insert(all.end(), t.data.begin(), t.data.end());
  return range_probe(std::span<const double>(all));
}

}  // namespace lightnorm
