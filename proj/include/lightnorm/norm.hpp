#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "lightnorm/bfp.hpp"
#include "lightnorm/minifloat.hpp"
#include "lightnorm/tensor.hpp"

namespace lightnorm {

enum class NormVariant { conventional, restructured, range, lightnorm };

/// Which range-norm gradient the backward pass evaluates. `printed` is the
/// hardware formulation (numerator term -gamma/(sigma+eps) * (mean(dy) + dy_i),
/// denominator term gamma*C/2 * sigma^(-3/2) * sum(dy * (x - mu))). `exact`
/// is the derivative of the forward function with the same structure:
/// gamma/(sigma+eps) * (dy_i - mean(dy)) for every element and
/// gamma*C/(sigma+eps)^2 * sum(dy * (x - mu)) at the extrema.
enum class RnGradientForm { printed, exact };

std::string_view to_string(RnGradientForm f);
RnGradientForm parse_gradient_form(std::string_view text);

std::string_view to_string(NormVariant v);
NormVariant parse_variant(std::string_view text);

/// Per-pass precision policy and hyperparameters of one normalization layer.
struct NormConfig {
  NormVariant variant = NormVariant::conventional;
  FpFormat fw_format = formats::fp32();
  FpFormat bw_format = formats::fp32();
  double epsilon = 1e-5;
  std::size_t group_size = 4;
  /// Mini-batch size fed to C(B). Zero means "take dimension 0 of the input".
  std::size_t batch_size = 0;
  /// Evaluate C at the per-channel element count instead of the mini-batch.
  bool c_from_element_count = false;
  RnGradientForm rn_gradient = RnGradientForm::printed;

  /// FP10-A forward, FP10-B backward, k = 4.
  static NormConfig lightnorm_defaults();
  /// Conventional/restructured/range at the given format for both passes;
  /// lightnorm returns lightnorm_defaults().
  static NormConfig for_variant(NormVariant v, const FpFormat& fmt = formats::fp32());
};

struct AffineParams {
  std::vector<double> gamma;
  std::vector<double> beta;

  static AffineParams identity(std::size_t channels);
};

struct ChannelStats {
  double mu = 0.0;
  /// Standard deviation for BN variants, C(B) * range for RN.
  double sigma = 0.0;
  /// The divisor actually used: sqrt(var + eps) or sigma + eps.
  double denom = 0.0;
  double x_min = 0.0;
  double x_max = 0.0;
  std::size_t min_ties = 0;
  std::size_t max_ties = 0;
};

struct NormStats {
  std::vector<ChannelStats> channels;
  /// Per-element flags in tensor layout. Populated by the range variants.
  std::vector<std::uint8_t> argmin;
  std::vector<std::uint8_t> argmax;
};

/// Everything the backward pass needs; X itself is not kept.
struct NormCache {
  NormVariant variant = NormVariant::conventional;
  std::vector<std::size_t> shape;
  Tensor normalized;  // pre-affine output
  Tensor centered;    // x - mu
  NormStats stats;
  std::vector<double> gamma;
  FpFormat fw_format;
  FpFormat bw_format;
  double epsilon = 0.0;
  double c_b = 0.0;
  /// Reads of input elements performed by the forward pass.
  std::size_t input_reads = 0;
};

struct ForwardResult {
  Tensor y;
  NormCache cache;
};

struct Gradients {
  Tensor dx;
  std::vector<double> dgamma;
  std::vector<double> dbeta;
};

/// LUT of C(B) for the mini-batch sizes the hardware table covers.
const std::array<std::pair<std::size_t, double>, 6>& c_of_b_lut();

/// 1 / sqrt(2 ln B). LUT hit for the tabulated sizes, direct evaluation
/// otherwise. Throws DomainError for B < 2.
double c_of_b(double batch);

/// The epsilon a datapath in `fmt` adds: quantize(eps), raised to the
/// smallest normal when it would flush to zero.
double effective_epsilon(double eps, const FpFormat& fmt);

/// Conventional (two-pass variance) or restructured (E[X^2] - E[X]^2)
/// batch normalization, every operation rounded to cfg.fw_format.
ForwardResult bn_forward(const Tensor& x, const AffineParams& p, const NormConfig& cfg);

/// Range normalization: mean, min and max in one streaming pass, then
/// y = gamma * (x - mu) / (C(B) * (max - min) + eps) + beta.
ForwardResult rn_forward(const Tensor& x, const AffineParams& p, const NormConfig& cfg);

/// Shared BN gradient for both variance schedules, in cfg.bw_format.
Gradients bn_backward(const Tensor& dy, const NormCache& cache, const NormConfig& cfg);

/// Range-norm gradient in cfg.bw_format. With the printed form the numerator term
///   t1_i = -gamma / (sigma + eps) * (mean(dy) + dy_i)
/// applies to every element; the denominator term
///   t2 = gamma * C(B) / 2 * sigma^(-3/2) * sum(dy_i * (x_i - mu))
/// is added at the channel minimum and subtracted at the maximum. Tied
/// extrema share t2 equally. cfg.rn_gradient selects the exact form instead.
Gradients rn_backward(const Tensor& dy, const NormCache& cache, const NormConfig& cfg);

struct LightNormForward {
  BfpTensor y;
  NormCache cache;
};

struct LightNormGradients {
  BfpTensor dx;
  std::vector<double> dgamma;
  std::vector<double> dbeta;
};

/// Range norm in the forward format, output packed for the store to DRAM.
LightNormForward lightnorm_forward(const Tensor& x, const AffineParams& p, const NormConfig& cfg);

/// Unpacks dy, runs rn_backward in the backward format and packs dx. The
/// per-channel dgamma/dbeta stay unpacked.
LightNormGradients lightnorm_backward(const BfpTensor& dy, const NormCache& cache,
                                      const NormConfig& cfg);

/// Dispatch on cfg.variant with plain tensors on both sides. LightNorm
/// outputs are returned after the BFP round trip, and dy is rounded to the
/// backward format and packed before lightnorm_backward.
ForwardResult norm_forward(const Tensor& x, const AffineParams& p, const NormConfig& cfg);
Gradients norm_backward(const Tensor& dy, const NormCache& cache, const NormConfig& cfg);

/// Compares rn_backward (run at FP64 with cfg.rn_gradient) against central finite differences of
/// rn_forward for the loss sum(dy * y). Channel extrema are skipped because
/// the range function has a kink there.
struct RnGradientDiagnostic {
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  std::size_t compared = 0;
  std::size_t skipped_extrema = 0;
};

RnGradientDiagnostic rn_gradient_diagnostic(const Tensor& x, const AffineParams& p,
                                            const Tensor& dy, NormConfig cfg, double step = 1e-6);

}  // namespace lightnorm
