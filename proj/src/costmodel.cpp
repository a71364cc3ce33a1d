#include "lightnorm/costmodel.hpp"

#include <cmath>
#include <fstream>
#include <string>

#include "json.hpp"
#include "lightnorm/bfp.hpp"
#include "lightnorm/error.hpp"

namespace lightnorm {

namespace {

using json = nlohmann::json;

std::uint64_t ceil_div(std::uint64_t a, std::uint64_t b) { return (a + b - 1) / b; }

constexpr double kPico = 1e-12;

/// Bits fetched from DRAM in one pass.
std::uint64_t fw_read_bits(const LayerSpec& layer, const HwParams& hw) {
  return layer.elements() * static_cast<std::uint64_t>(hw.activation_bits);
}

std::uint64_t bw_read_bits(NormVariant v, const LayerSpec& layer, const HwParams& hw) {
  const std::uint64_t n = layer.elements();
  if (v == NormVariant::lightnorm) {
    // Packed upstream gradient plus the packed forward output.
    return bfp_bit_size(n, layer.bw_format, layer.group_size) +
           bfp_bit_size(n, layer.fw_format, layer.group_size);
  }
  return n * static_cast<std::uint64_t>(hw.gradient_bits) + memory_bits(v, layer);
}

std::uint64_t bw_write_bits(NormVariant v, const LayerSpec& layer) {
  const std::uint64_t n = layer.elements();
  if (v == NormVariant::lightnorm) return bfp_bit_size(n, layer.bw_format, layer.group_size);
  return n * static_cast<std::uint64_t>(layer.bw_format.total_bits());
}

PassCost pass_cost(NormVariant v, const LayerSpec& layer, const HwParams& hw, int passes,
                   std::uint64_t read_bits_per_pass, std::uint64_t write_bits, const FpFormat& fmt) {
  PassCost p;
  const std::uint64_t n = layer.elements();
  const auto k = static_cast<std::uint64_t>(passes);
  p.compute_cycles = k * ceil_div(n, hw.lanes);
  p.stall_cycles = k * static_cast<std::uint64_t>(
                           std::ceil(static_cast<double>(read_bits_per_pass) / hw.dram_bandwidth_bits_per_cycle));
  p.cycles = p.compute_cycles + p.stall_cycles;
  p.read_bits = k * read_bits_per_pass;
  p.write_bits = write_bits;
  p.dram_read_j = static_cast<double>(p.read_bits) * hw.dram_read_pj_per_bit * kPico;
  p.dram_write_j = static_cast<double>(p.write_bits) * hw.dram_write_pj_per_bit * kPico;
  p.sram_j = static_cast<double>(k * n * 2 * static_cast<std::uint64_t>(fmt.total_bits())) *
             hw.sram_pj_per_bit * kPico;
  p.module_j = hw.power_mw(v, fmt) * 1e-3 * static_cast<double>(p.cycles) / hw.clock_hz;
  p.processing_j = p.dram_read_j + p.sram_j + p.module_j;
  p.total_j = p.processing_j + p.dram_write_j;
  return p;
}

std::size_t positive_size(const json& j, const char* key, const std::string& where) {
  if (!j.contains(key)) throw ConfigError(where + ": missing \"" + key + "\"");
  const json& v = j.at(key);
  if (!v.is_number_integer() || v.get<long long>() <= 0) {
    throw ConfigError(where + ": \"" + key + "\" must be a positive integer");
  }
  return v.get<std::size_t>();
}

json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

}  // namespace

void HwParams::validate() const {
  if (lanes == 0) throw ConfigError("lanes must be positive");
  if (!(clock_hz > 0)) throw ConfigError("clock must be positive");
  if (!(dram_bandwidth_bits_per_cycle > 0)) throw ConfigError("DRAM bandwidth must be positive");
  if (dram_read_pj_per_bit < 0 || dram_write_pj_per_bit < 0 || sram_pj_per_bit < 0) {
    throw ConfigError("per-bit energies must be nonnegative");
  }
  if (activation_bits <= 0 || gradient_bits <= 0) throw ConfigError("stream widths must be positive");
}

double HwParams::power_mw(NormVariant v, const FpFormat& fmt) const {
  const auto row = module_power_mw.find(std::string(to_string(v)));
  if (row != module_power_mw.end()) {
    const auto cell = row->second.find(fmt.label());
    if (cell != row->second.end()) return cell->second;
  }
  throw ConfigError("no module power calibrated for " + std::string(to_string(v)) + " at " + fmt.label());
}

std::uint64_t LayerSpec::elements() const {
  return static_cast<std::uint64_t>(batch) * channels * height * width;
}

void LayerSpec::validate() const {
  if (batch == 0 || channels == 0 || height == 0 || width == 0) {
    throw ShapeError("layer " + name + ": dimensions must be positive");
  }
  if (group_size == 0) throw ShapeError("layer " + name + ": group size must be positive");
}

int fw_passes(NormVariant v) { return v == NormVariant::conventional ? 3 : 2; }

int bw_passes(NormVariant) { return 2; }

std::uint64_t memory_bits(NormVariant v, const LayerSpec& layer) {
  const std::uint64_t n = layer.elements();
  if (v == NormVariant::lightnorm) return bfp_bit_size(n, layer.fw_format, layer.group_size);
  return n * static_cast<std::uint64_t>(layer.fw_format.total_bits());
}

std::uint64_t fw_cycles(NormVariant v, const LayerSpec& layer, const HwParams& hw) {
  if (layer.elements() == 0) return 0;
  const auto passes = static_cast<std::uint64_t>(fw_passes(v));
  return passes * (ceil_div(layer.elements(), hw.lanes) +
                   static_cast<std::uint64_t>(std::ceil(static_cast<double>(fw_read_bits(layer, hw)) /
                                                        hw.dram_bandwidth_bits_per_cycle)));
}

std::uint64_t bw_cycles(NormVariant v, const LayerSpec& layer, const HwParams& hw) {
  if (layer.elements() == 0) return 0;
  const auto passes = static_cast<std::uint64_t>(bw_passes(v));
  return passes * (ceil_div(layer.elements(), hw.lanes) +
                   static_cast<std::uint64_t>(std::ceil(static_cast<double>(bw_read_bits(v, layer, hw)) /
                                                        hw.dram_bandwidth_bits_per_cycle)));
}

CostReport energy_report(NormVariant v, const LayerSpec& layer, const HwParams& hw) {
  layer.validate();
  hw.validate();
  CostReport r;
  r.layer = layer.name;
  r.variant = v;
  r.stored_bits = memory_bits(v, layer);
  r.fw = pass_cost(v, layer, hw, fw_passes(v), fw_read_bits(layer, hw), r.stored_bits, layer.fw_format);
  r.bw = pass_cost(v, layer, hw, bw_passes(v), bw_read_bits(v, layer, hw), bw_write_bits(v, layer),
                   layer.bw_format);
  return r;
}

std::vector<VariantSetup> VariantSetup::defaults() {
  return {
      {NormVariant::conventional, formats::fp32(), formats::fp32(), 4},
      {NormVariant::restructured, formats::fp32(), formats::fp32(), 4},
      {NormVariant::range, formats::fp32(), formats::fp32(), 4},
      {NormVariant::lightnorm, formats::fp10a(), formats::fp10b(), 4},
  };
}

LayerSpec VariantSetup::apply(const LayerSpec& dims) const {
  LayerSpec l = dims;
  l.fw_format = fw_format;
  l.bw_format = bw_format;
  l.group_size = group_size;
  return l;
}

BenchmarkTable benchmark_compare(const Suite& suite, const std::vector<VariantSetup>& setups,
                                 const HwParams& hw) {
  if (suite.layers.empty()) throw ShapeError("suite " + suite.network + " has no layers");
  BenchmarkTable t;
  t.network = suite.network;
  for (const VariantSetup& s : setups) {
    std::vector<CostReport> row;
    VariantTotals tot;
    tot.variant = s.variant;
    for (const LayerSpec& dims : suite.layers) {
      CostReport r = energy_report(s.variant, s.apply(dims), hw);
      tot.fw_cycles += r.fw.cycles;
      tot.bw_cycles += r.bw.cycles;
      tot.fw_j += r.fw.total_j;
      tot.bw_j += r.bw.total_j;
      tot.module_j += r.fw.module_j + r.bw.module_j;
      tot.stored_bits += r.stored_bits;
      row.push_back(std::move(r));
    }
    t.reports.push_back(std::move(row));
    t.totals.push_back(tot);
  }
  return t;
}

HwParams load_calibration(const std::string& path) {
  const json j = read_json(path);
  HwParams hw;
  try {
    hw.calibration_version = j.value("version", std::string{});
    hw.lanes = j.value("lanes", hw.lanes);
    hw.clock_hz = j.value("clock_hz", hw.clock_hz);
    hw.dram_bandwidth_bits_per_cycle = j.value("dram_bandwidth_bits_per_cycle", hw.dram_bandwidth_bits_per_cycle);
    hw.dram_read_pj_per_bit = j.value("dram_read_pj_per_bit", hw.dram_read_pj_per_bit);
    hw.dram_write_pj_per_bit = j.value("dram_write_pj_per_bit", hw.dram_write_pj_per_bit);
    hw.sram_pj_per_bit = j.value("sram_pj_per_bit", hw.sram_pj_per_bit);
    hw.activation_bits = j.value("activation_bits", hw.activation_bits);
    hw.gradient_bits = j.value("gradient_bits", hw.gradient_bits);
    if (j.contains("module_power_mw")) {
      for (const auto& [variant, row] : j.at("module_power_mw").items()) {
        const std::string key(to_string(parse_variant(variant)));
        for (const auto& [fmt, mw] : row.items()) {
          hw.module_power_mw[key][parse_format(fmt).label()] = mw.get<double>();
        }
      }
    }
  } catch (const json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
  hw.validate();
  return hw;
}

std::string data_dir() { return LIGHTNORM_DATA_DIR; }

HwParams default_calibration() { return load_calibration(data_dir() + "/calibration.json"); }

Suite load_suite(const std::string& path) {
  const json j = read_json(path);
  Suite s;
  try {
    s.network = j.at("network").get<std::string>();
    const std::size_t batch = positive_size(j, "batch", path);
    std::size_t idx = 0;
    for (const json& l : j.at("layers")) {
      const std::string where = path + " layer " + std::to_string(idx++);
      LayerSpec spec;
      spec.name = l.value("name", "bn" + std::to_string(idx));
      spec.batch = l.contains("batch") ? positive_size(l, "batch", where) : batch;
      spec.channels = positive_size(l, "channels", where);
      spec.height = positive_size(l, "height", where);
      spec.width = positive_size(l, "width", where);
      s.layers.push_back(std::move(spec));
    }
  } catch (const json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
  if (s.layers.empty()) throw ConfigError(path + ": no layers");
  return s;
}

std::vector<Suite> bundled_suites() {
  std::vector<Suite> out;
  for (const char* name : {"resnet50", "mobilenetv1", "mobilenetv2", "densenet121"}) {
    out.push_back(load_suite(data_dir() + "/suites/" + name + ".json"));
  }
  return out;
}

}  // namespace lightnorm
