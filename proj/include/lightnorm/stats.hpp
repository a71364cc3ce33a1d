#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "lightnorm/minifloat.hpp"
#include "lightnorm/tensor.hpp"

namespace lightnorm {

/// Number of steps in the left-to-right fp_add fold of `xs` where the
/// smaller-magnitude operand was nonzero yet the rounded result equals the
/// larger operand, i.e. the addend vanished entirely. Operands must be
/// representable in `fmt`.
std::size_t zse_count(std::span<const double> xs, const FpFormat& fmt);

/// How far a reduced-precision normalization drifts from zero mean and unit
/// standard deviation. Moments are measured in extended precision over the
/// pre-affine output of every channel.
struct DistortionReport {
  std::string format;
  double mean = 0.0;
  double stdev = 0.0;
  std::size_t count = 0;
  /// Zero-setting events in the per-channel mean accumulations.
  std::size_t zse_count = 0;
};

struct DistortionOptions {
  /// Small enough that the reported moments reflect rounding, not epsilon;
  /// formats that cannot hold it use their smallest normal instead.
  double epsilon = 1e-12;
};

/// Runs the conventional two-pass batch norm at each format's forward
/// precision on the same tensor and reports the normalized moments.
std::vector<DistortionReport> distortion_sweep(const Tensor& x, const std::vector<FpFormat>& fmts,
                                               const DistortionOptions& opts = {});

struct FormatFit {
  std::string format;
  bool fits = false;
};

/// log2 magnitude extent of a tensor stream, zeros excluded, and whether
/// each catalog format covers it without flushing or saturating.
struct RangeProbe {
  double min_log2 = 0.0;
  double max_log2 = 0.0;
  std::size_t nonzero = 0;
  std::vector<FormatFit> fits;
};

/// True when [min_log2, max_log2] lies inside [emin, log2(max)].
bool range_fits(double min_log2, double max_log2, const FpFormat& fmt);

/// Throws DomainError when the stream holds no nonzero finite value.
RangeProbe range_probe(std::span<const Tensor> stream);
RangeProbe range_probe(std::span<const double> values);

}  // namespace lightnorm
