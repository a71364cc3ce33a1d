#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "lightnorm/minifloat.hpp"
#include "lightnorm/norm.hpp"

namespace lightnorm {

/// Hardware constants of the normalization unit and its memory system.
/// Defaults are calibration values (see data/calibration.json), not
/// measured ground truth; comparisons should rely on ratios.
struct HwParams {
  /// Channels processed in parallel, one element per lane per cycle.
  std::size_t lanes = 32;
  double clock_hz = 150e6;
  /// Sustained DRAM fetch bandwidth seen by the unit.
  double dram_bandwidth_bits_per_cycle = 1280.0;
  double dram_read_pj_per_bit = 4.0;
  double dram_write_pj_per_bit = 4.0;
  /// Line-buffer traffic: each element is written and read once per pass.
  double sram_pj_per_bit = 0.05;
  /// Width of the activation stream produced by the preceding layer.
  int activation_bits = 32;
  /// Width of the upstream-gradient stream for unpacked variants.
  int gradient_bits = 32;
  /// Synthesized module power in mW, keyed by variant name then by the
  /// label of the format the pass runs in.
  std::map<std::string, std::map<std::string, double>> module_power_mw;
  std::string calibration_version;

  /// Throws ConfigError for non-positive constants.
  void validate() const;
  /// Module power for a variant at a format; ConfigError if absent.
  [[nodiscard]] double power_mw(NormVariant v, const FpFormat& fmt) const;
};

/// One normalization layer: mini-batch B, C channels of H x W, and the
/// precision policy of the variant that runs it.
struct LayerSpec {
  std::string name;
  std::size_t batch = 1;
  std::size_t channels = 1;
  std::size_t height = 1;
  std::size_t width = 1;
  FpFormat fw_format = formats::fp32();
  FpFormat bw_format = formats::fp32();
  std::size_t group_size = 4;

  [[nodiscard]] std::uint64_t elements() const;
  /// Throws ShapeError unless every dimension is positive.
  void validate() const;
};

/// Streaming passes over the tensor in each direction.
int fw_passes(NormVariant v);
int bw_passes(NormVariant v);

struct PassCost {
  std::uint64_t compute_cycles = 0;
  std::uint64_t stall_cycles = 0;
  std::uint64_t cycles = 0;
  std::uint64_t read_bits = 0;
  std::uint64_t write_bits = 0;
  double dram_read_j = 0.0;
  double dram_write_j = 0.0;
  double sram_j = 0.0;
  double module_j = 0.0;
  /// Fetch plus compute: everything but the output store.
  double processing_j = 0.0;
  double total_j = 0.0;
};

struct CostReport {
  std::string layer;
  NormVariant variant = NormVariant::conventional;
  PassCost fw;
  PassCost bw;
  /// Bits of the forward output kept in DRAM for the backward pass.
  std::uint64_t stored_bits = 0;
  [[nodiscard]] double total_j() const { return fw.total_j + bw.total_j; }
  [[nodiscard]] std::uint64_t cycles() const { return fw.cycles + bw.cycles; }
};

/// Cycles = passes * (ceil(N / lanes) + ceil(fetched bits / bandwidth)).
/// Output writes are posted and do not stall the pipeline.
std::uint64_t fw_cycles(NormVariant v, const LayerSpec& layer, const HwParams& hw);
std::uint64_t bw_cycles(NormVariant v, const LayerSpec& layer, const HwParams& hw);

/// Bits of the forward output stored per pass: N * (1 + e + m) unpacked,
/// bfp_bit_size(N, fw_format, k) for LightNorm.
std::uint64_t memory_bits(NormVariant v, const LayerSpec& layer);

CostReport energy_report(NormVariant v, const LayerSpec& layer, const HwParams& hw);

/// Variant together with the precision policy it is compared at.
struct VariantSetup {
  NormVariant variant = NormVariant::conventional;
  FpFormat fw_format = formats::fp32();
  FpFormat bw_format = formats::fp32();
  std::size_t group_size = 4;

  /// Conventional, restructured and range at FP32, LightNorm at
  /// FP10-A/FP10-B with k = 4.
  static std::vector<VariantSetup> defaults();
  [[nodiscard]] LayerSpec apply(const LayerSpec& dims) const;
};

struct Suite {
  std::string network;
  std::vector<LayerSpec> layers;
};

struct VariantTotals {
  NormVariant variant = NormVariant::conventional;
  std::uint64_t fw_cycles = 0;
  std::uint64_t bw_cycles = 0;
  double fw_j = 0.0;
  double bw_j = 0.0;
  double module_j = 0.0;
  std::uint64_t stored_bits = 0;
};

struct BenchmarkTable {
  std::string network;
  /// reports[v][l]: variant v on layer l.
  std::vector<std::vector<CostReport>> reports;
  std::vector<VariantTotals> totals;
};

/// Per-layer reports and per-variant aggregates. Throws ShapeError for an
/// empty suite.
BenchmarkTable benchmark_compare(const Suite& suite, const std::vector<VariantSetup>& setups,
                                 const HwParams& hw);

/// Calibration and suite files (JSON). Errors raise IoError or ConfigError.
HwParams load_calibration(const std::string& path);
HwParams default_calibration();
Suite load_suite(const std::string& path);
/// The bundled ResNet-50, MobileNetV1, MobileNetV2 and DenseNet-121 suites.
std::vector<Suite> bundled_suites();
std::string data_dir();

}  // namespace lightnorm
