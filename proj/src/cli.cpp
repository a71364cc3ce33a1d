#include "lightnorm/cli.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "lightnorm/bfp.hpp"
#include "lightnorm/costmodel.hpp"
#include "lightnorm/error.hpp"
#include "lightnorm/io.hpp"
#include "lightnorm/minifloat.hpp"
#include "lightnorm/norm.hpp"
#include "lightnorm/stats.hpp"
#include "lightnorm/toytrain.hpp"

namespace lightnorm {

namespace {

using json = nlohmann::json;
namespace fs = std::filesystem;

constexpr const char* kToolVersion = "1.0.0";

/// Every knob a command can read. Values come from built-in defaults, then
/// the --config JSON file, then the command line.
struct RunConfig {
  std::uint64_t seed = 0;
  std::string out_dir = "lightnorm-out";
  bool out_dir_given = false;
  std::string format;
  std::vector<std::string> extra_formats;
  std::string input;
  std::string grad;
  std::string variant = "lightnorm";
  std::string fw_format;
  std::string bw_format;
  double epsilon = 1e-5;
  std::size_t batch = 0;
  std::size_t k = 4;
  double gamma = 1.0;
  double beta = 0.0;
  bool bfp_output = false;
  bool c_from_element_count = false;
  /// Range-norm gradient form; empty selects the command's default.
  std::string rn_gradient;
  std::vector<std::string> formats;
  std::size_t samples = 100000;
  std::size_t channels = 100;
  double mean = 0.0;
  double stdev = 1.0;
  std::vector<std::string> suites;
  std::string calibration;
  std::string dataset = "gaussian-clusters";
  std::size_t dataset_size = 2560;
  std::size_t epochs = 30;
  std::size_t seeds = 1;
  std::size_t train_batch = 128;
  double learning_rate = 0.05;
  std::size_t hidden = 32;
  std::size_t depth = 2;
};

template <typename T>
void take(const json& j, const char* key, T& field) {
  if (j.contains(key)) field = j.at(key).get<T>();
}

void apply_config_file(const std::string& path, RunConfig& c) {
  const auto bytes = read_bytes(path);
  json j;
  try {
    j = json::parse(bytes.begin(), bytes.end());
  } catch (const json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
  if (!j.is_object()) throw ConfigError(path + ": expected a JSON object");
  static const std::vector<std::string> known = {
      "seed", "format", "input", "grad", "variant", "fw_format", "bw_format", "epsilon", "batch", "k",
      "gamma", "beta", "bfp_output", "c_from_element_count", "rn_gradient", "formats", "samples", "channels", "mean",
      "stdev", "suites", "calibration", "dataset", "dataset_size", "epochs", "seeds", "train_batch",
      "learning_rate", "hidden", "depth"};
  for (const auto& [key, _] : j.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end()) {
      throw ConfigError(path + ": unknown key \"" + key + "\"");
    }
  }
  try {
    take(j, "seed", c.seed);
    take(j, "format", c.format);
    take(j, "input", c.input);
    take(j, "grad", c.grad);
    take(j, "variant", c.variant);
    take(j, "fw_format", c.fw_format);
    take(j, "bw_format", c.bw_format);
    take(j, "epsilon", c.epsilon);
    take(j, "batch", c.batch);
    take(j, "k", c.k);
    take(j, "gamma", c.gamma);
    take(j, "beta", c.beta);
    take(j, "bfp_output", c.bfp_output);
    take(j, "c_from_element_count", c.c_from_element_count);
    take(j, "rn_gradient", c.rn_gradient);
    take(j, "formats", c.formats);
    take(j, "samples", c.samples);
    take(j, "channels", c.channels);
    take(j, "mean", c.mean);
    take(j, "stdev", c.stdev);
    take(j, "suites", c.suites);
    take(j, "calibration", c.calibration);
    take(j, "dataset", c.dataset);
    take(j, "dataset_size", c.dataset_size);
    take(j, "epochs", c.epochs);
    take(j, "seeds", c.seeds);
    take(j, "train_batch", c.train_batch);
    take(j, "learning_rate", c.learning_rate);
    take(j, "hidden", c.hidden);
    take(j, "depth", c.depth);
  } catch (const json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

std::string fmt_num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

std::string sci(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4E", v);
  return buf;
}

/// Collects the files a command writes and finishes with the manifest.
class Outputs {
 public:
  explicit Outputs(const RunConfig& c) : dir_(c.out_dir) {
    std::error_code ec;
    fs::create_directories(dir_, ec);
    if (ec) throw IoError("cannot create output directory " + dir_.string() + ": " + ec.message());
  }

  std::string path(const std::string& name) {
    files_.push_back(name);
    return (dir_ / name).string();
  }

  void tensor(const std::string& name, const Tensor& t) {
    write_tensor(path(name), t);
    files_.push_back(name + ".json");
  }

  void text(const std::string& name, const std::string& body) { write_text(path(name), body); }

  void manifest(const std::string& command, const json& config) {
    json m = {{"tool", "lightnorm"}, {"version", kToolVersion}, {"command", command}, {"config", config},
              {"outputs", files_}};
    write_text((dir_ / "manifest.json").string(), m.dump(2) + "\n");
  }

 private:
  fs::path dir_;
  std::vector<std::string> files_;
};

FpFormat format_or(const std::string& text, const FpFormat& fallback) {
  return text.empty() ? fallback : parse_format(text);
}

json format_json(const FpFormat& f) {
  return {{"name", f.label()}, {"triple", f.triple()}, {"bits", f.total_bits()}, {"emin", f.emin()},
          {"emax", f.emax()}, {"min_positive", f.min_positive()}, {"max", f.max_value()}};
}

NormConfig norm_config(const RunConfig& c, RnGradientForm default_gradient) {
  const NormVariant v = parse_variant(c.variant);
  NormConfig cfg;
  if (v == NormVariant::lightnorm) {
    cfg = NormConfig::lightnorm_defaults();
  } else {
    cfg = NormConfig::for_variant(v, format_or(c.format, formats::fp32()));
  }
  cfg.fw_format = format_or(c.fw_format, cfg.fw_format);
  cfg.bw_format = format_or(c.bw_format, cfg.bw_format);
  cfg.epsilon = c.epsilon;
  cfg.batch_size = c.batch;
  cfg.group_size = c.k;
  cfg.c_from_element_count = c.c_from_element_count;
  cfg.rn_gradient = c.rn_gradient.empty() ? default_gradient : parse_gradient_form(c.rn_gradient);
  return cfg;
}

json norm_config_json(const NormConfig& cfg) {
  return {{"variant", to_string(cfg.variant)}, {"fw_format", cfg.fw_format.triple()},
          {"bw_format", cfg.bw_format.triple()}, {"epsilon", cfg.epsilon}, {"group_size", cfg.group_size},
          {"batch_size", cfg.batch_size}, {"c_from_element_count", cfg.c_from_element_count},
          {"rn_gradient", to_string(cfg.rn_gradient)}};
}

void require_finite(const Tensor& t, const std::string& what) {
  for (double v : t.data) {
    if (!std::isfinite(v)) throw Error("invariant violated: " + what + " holds a non-finite value");
  }
}

// ---------------------------------------------------------------- commands

int cmd_formats(const RunConfig& c, std::ostream& out) {
  std::vector<FpFormat> rows;
  if (!c.format.empty()) rows.push_back(parse_format(c.format));
  for (const auto& f : c.extra_formats) rows.push_back(parse_format(f));
  if (rows.empty()) rows = format_catalog();

  out << std::left << std::setw(10) << "format" << std::setw(10) << "{s,e,m}" << std::right << std::setw(5)
      << "bits" << std::setw(7) << "emin" << std::setw(7) << "emax" << std::setw(13) << "min" << std::setw(13)
      << "max" << "\n";
  json table = json::array();
  for (const FpFormat& f : rows) {
    out << std::left << std::setw(10) << f.label() << std::setw(10) << f.triple() << std::right << std::setw(5)
        << f.total_bits() << std::setw(7) << f.emin() << std::setw(7) << f.emax() << std::setw(13)
        << sci(f.min_positive()) << std::setw(13) << sci(f.max_value()) << "\n";
    table.push_back(format_json(f));
  }
  if (c.out_dir_given) {
    Outputs o(c);
    o.text("formats.json", table.dump(2) + "\n");
    json cfg = json::array();
    for (const FpFormat& f : rows) cfg.push_back(f.triple());
    o.manifest("formats", {{"formats", cfg}});
  }
  return kExitOk;
}

int cmd_quantize(const RunConfig& c, std::ostream& out) {
  if (c.input.empty()) throw ConfigError("quantize needs --in");
  const FpFormat fmt = format_or(c.format, formats::fp10a());
  const Tensor x = read_tensor(c.input);
  Tensor q = x;
  double max_err = 0.0;
  long double sum_err = 0.0L;
  for (double& v : q.data) {
    const double r = quantize(v, fmt);
    const double e = std::fabs(r - v);
    max_err = std::max(max_err, e);
    sum_err += e;
    v = r;
  }
  const double mean_err = x.size() ? static_cast<double>(sum_err / static_cast<long double>(x.size())) : 0.0;
  Outputs o(c);
  o.tensor("quantized.f32", q);
  const json report = {{"format", fmt.label()}, {"triple", fmt.triple()}, {"count", x.size()},
                       {"max_abs_error", max_err}, {"mean_abs_error", mean_err}};
  o.text("quantize.json", report.dump(2) + "\n");
  o.manifest("quantize", {{"input", c.input}, {"format", fmt.triple()}});
  out << fmt.label() << ": " << x.size() << " values, max |err| " << fmt_num(max_err) << ", mean |err| "
      << fmt_num(mean_err) << "\n";
  return kExitOk;
}

int cmd_bfp_pack(const RunConfig& c, std::ostream& out) {
  if (c.input.empty()) throw ConfigError("bfp pack needs --in");
  const FpFormat fmt = format_or(c.format, formats::fp10a());
  Tensor x = read_tensor(c.input);
  for (double& v : x.data) v = quantize(v, fmt);
  const BfpTensor packed = pack_tensor(x, fmt, c.k);
  const auto bytes = serialize(packed);
  const Tensor back = unpack_tensor(deserialize(bytes));
  if (back.data != unpack_tensor(packed).data) throw Error("invariant violated: container round trip");
  double max_err = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) max_err = std::max(max_err, std::fabs(back.data[i] - x.data[i]));

  Outputs o(c);
  write_bytes(o.path("packed.lnbf"), bytes);
  const json report = {{"format", fmt.label()}, {"triple", fmt.triple()}, {"group_size", c.k},
                       {"elements", packed.element_count()}, {"blocks", packed.blocks.size()},
                       {"total_bits", packed.total_bits()},
                       {"unpacked_bits", static_cast<std::uint64_t>(x.size()) * fmt.total_bits()},
                       {"max_abs_alignment_error", max_err}};
  o.text("pack.json", report.dump(2) + "\n");
  o.manifest("bfp pack", {{"input", c.input}, {"format", fmt.triple()}, {"k", c.k}});
  out << "packed " << packed.element_count() << " values into " << packed.blocks.size() << " blocks, "
      << packed.total_bits() << " bits\n";
  return kExitOk;
}

int cmd_bfp_unpack(const RunConfig& c, std::ostream& out) {
  if (c.input.empty()) throw ConfigError("bfp unpack needs --in");
  const BfpTensor packed = read_bfp(c.input);
  const Tensor t = unpack_tensor(packed);
  Outputs o(c);
  o.tensor("unpacked.f32", t);
  o.manifest("bfp unpack", {{"input", c.input}});
  out << "unpacked " << t.size() << " values (" << packed.format.label() << ", k=" << packed.group_size << ")\n";
  return kExitOk;
}

int cmd_norm_run(const RunConfig& c, std::ostream& out) {
  if (c.input.empty()) throw ConfigError("norm run needs --in");
  const NormConfig cfg = norm_config(c, RnGradientForm::printed);
  const Tensor x = read_tensor(c.input);
  const ChannelLayout layout(x.shape);
  AffineParams p;
  p.gamma.assign(layout.channels(), c.gamma);
  p.beta.assign(layout.channels(), c.beta);

  Outputs o(c);
  NormCache cache;
  if (c.bfp_output) {
    BfpTensor y;
    if (cfg.variant == NormVariant::lightnorm) {
      LightNormForward r = lightnorm_forward(x, p, cfg);
      y = std::move(r.y);
      cache = std::move(r.cache);
    } else {
      ForwardResult r = norm_forward(x, p, cfg);
      y = pack_tensor(r.y, cfg.fw_format, cfg.group_size);
      cache = std::move(r.cache);
    }
    write_bfp(o.path("y.lnbf"), y);
  } else {
    ForwardResult r = norm_forward(x, p, cfg);
    require_finite(r.y, "Y");
    o.tensor("y.f32", r.y);
    cache = std::move(r.cache);
  }

  json channels = json::array();
  for (const ChannelStats& s : cache.stats.channels) {
    channels.push_back({{"mu", s.mu}, {"sigma", s.sigma}, {"denominator", s.denom}, {"min", s.x_min},
                        {"max", s.x_max}});
  }
  const json stats = {{"variant", to_string(cfg.variant)}, {"c_of_b", cache.c_b}, {"epsilon", cache.epsilon},
                      {"input_reads", cache.input_reads}, {"channels", channels}};
  o.text("stats.json", stats.dump(2) + "\n");

  json config = norm_config_json(cfg);
  config["input"] = c.input;
  config["gamma"] = c.gamma;
  config["beta"] = c.beta;
  config["bfp_output"] = c.bfp_output;
  if (!c.grad.empty()) {
    const Tensor dy = read_tensor(c.grad);
    const Gradients g = norm_backward(dy, cache, cfg);
    require_finite(g.dx, "dX");
    o.tensor("dx.f32", g.dx);
    o.text("grads.json", json({{"dgamma", g.dgamma}, {"dbeta", g.dbeta}}).dump(2) + "\n");
    config["grad"] = c.grad;
  }
  o.manifest("norm run", config);
  out << to_string(cfg.variant) << ": normalized " << x.size() << " values over " << layout.channels()
      << " channels\n";
  return kExitOk;
}

int cmd_stats_sweep(const RunConfig& c, std::ostream& out) {
  Tensor x;
  json config;
  if (!c.input.empty()) {
    x = read_tensor(c.input);
    config["input"] = c.input;
  } else {
    if (c.channels == 0 || c.samples < 2 * c.channels) throw ConfigError("need >= 2 samples per channel");
    const std::size_t rows = c.samples / c.channels;
    x = Tensor::zeros({rows, c.channels});
    std::mt19937_64 rng(c.seed);
    std::normal_distribution<double> normal(c.mean, c.stdev);
    for (double& v : x.data) v = normal(rng);
    config["generated"] = {{"rows", rows}, {"channels", c.channels}, {"mean", c.mean}, {"stdev", c.stdev},
                           {"seed", c.seed}};
  }
  std::vector<FpFormat> fmts;
  for (const auto& name : c.formats) fmts.push_back(parse_format(name));
  if (fmts.empty()) fmts = format_catalog();

  const auto reports = distortion_sweep(x, fmts);
  const RangeProbe probe = range_probe(std::span<const double>(x.data));

  std::ostringstream csv;
  csv << "format,triple,mean,stdev,count,zse_count,fits\n";
  json rows = json::array();
  out << std::left << std::setw(10) << "format" << std::right << std::setw(16) << "mean" << std::setw(14)
      << "stdev" << std::setw(10) << "zse" << std::setw(6) << "fits" << "\n";
  for (std::size_t i = 0; i < fmts.size(); ++i) {
    const auto& r = reports[i];
    const bool fits = range_fits(probe.min_log2, probe.max_log2, fmts[i]);
    csv << r.format << ",\"" << fmts[i].triple() << "\"," << fmt_num(r.mean) << "," << fmt_num(r.stdev) << ","
        << r.count << "," << r.zse_count << "," << (fits ? "true" : "false") << "\n";
    rows.push_back({{"format", r.format}, {"triple", fmts[i].triple()}, {"mean", r.mean}, {"stdev", r.stdev},
                    {"count", r.count}, {"zse_count", r.zse_count}, {"fits", fits}});
    out << std::left << std::setw(10) << r.format << std::right << std::setw(16) << fmt_num(r.mean)
        << std::setw(14) << fmt_num(r.stdev) << std::setw(10) << r.zse_count << std::setw(6)
        << (fits ? "yes" : "no") << "\n";
  }
  json fit_flags = json::object();
  for (const auto& f : probe.fits) fit_flags[f.format] = f.fits;
  const json doc = {{"rows", rows},
                    {"range", {{"min_log2", probe.min_log2}, {"max_log2", probe.max_log2},
                               {"nonzero", probe.nonzero}, {"fits", fit_flags}}}};
  Outputs o(c);
  o.text("sweep.csv", csv.str());
  o.text("sweep.json", doc.dump(2) + "\n");
  json names = json::array();
  for (const auto& f : fmts) names.push_back(f.triple());
  config["formats"] = names;
  o.manifest("stats sweep", config);
  return kExitOk;
}

int cmd_cost_report(const RunConfig& c, std::ostream& out) {
  const std::string calib_path = c.calibration.empty() ? data_dir() + "/calibration.json" : c.calibration;
  const HwParams hw = load_calibration(calib_path);
  std::vector<Suite> suites;
  if (c.suites.empty()) {
    suites = bundled_suites();
  } else {
    for (const auto& s : c.suites) suites.push_back(load_suite(s));
  }
  const auto setups = VariantSetup::defaults();

  std::ostringstream layers_csv;
  layers_csv << "network,layer,variant,batch,channels,height,width,fw_cycles,fw_stall_cycles,bw_cycles,"
                "bw_stall_cycles,fw_read_bits,fw_write_bits,bw_read_bits,bw_write_bits,stored_bits,"
                "fw_processing_j,fw_total_j,bw_total_j,module_j\n";
  std::ostringstream summary_csv;
  summary_csv << "network,variant,fw_cycles,bw_cycles,fw_j,bw_j,module_j,stored_bits\n";
  json networks = json::array();
  double fw_ratio_sum = 0.0;
  double bw_ratio_sum = 0.0;
  double module_ratio_sum = 0.0;

  out << std::left << std::setw(14) << "network" << std::right << std::setw(12) << "restr/conv" << std::setw(12)
      << "conv/LN FW" << std::setw(12) << "conv/LN BW" << "\n";
  for (const Suite& s : suites) {
    const BenchmarkTable t = benchmark_compare(s, setups, hw);
    json totals = json::array();
    for (std::size_t v = 0; v < setups.size(); ++v) {
      for (std::size_t l = 0; l < s.layers.size(); ++l) {
        const CostReport& r = t.reports[v][l];
        const LayerSpec& d = s.layers[l];
        layers_csv << s.network << "," << d.name << "," << to_string(r.variant) << "," << d.batch << ","
                   << d.channels << "," << d.height << "," << d.width << "," << r.fw.cycles << ","
                   << r.fw.stall_cycles << "," << r.bw.cycles << "," << r.bw.stall_cycles << ","
                   << r.fw.read_bits << "," << r.fw.write_bits << "," << r.bw.read_bits << ","
                   << r.bw.write_bits << "," << r.stored_bits << "," << fmt_num(r.fw.processing_j) << ","
                   << fmt_num(r.fw.total_j) << "," << fmt_num(r.bw.total_j) << ","
                   << fmt_num(r.fw.module_j + r.bw.module_j) << "\n";
      }
      const VariantTotals& tot = t.totals[v];
      summary_csv << s.network << "," << to_string(tot.variant) << "," << tot.fw_cycles << "," << tot.bw_cycles
                  << "," << fmt_num(tot.fw_j) << "," << fmt_num(tot.bw_j) << "," << fmt_num(tot.module_j) << ","
                  << tot.stored_bits << "\n";
      totals.push_back({{"variant", to_string(tot.variant)}, {"fw_cycles", tot.fw_cycles},
                        {"bw_cycles", tot.bw_cycles}, {"fw_j", tot.fw_j}, {"bw_j", tot.bw_j},
                        {"module_j", tot.module_j}, {"stored_bits", tot.stored_bits}});
    }
    // setups: conventional, restructured, range, lightnorm.
    const auto& conv = t.totals[0];
    const auto& restr = t.totals[1];
    const auto& ln = t.totals[3];
    const double restr_fw = static_cast<double>(restr.fw_cycles) / static_cast<double>(conv.fw_cycles);
    const double fw = static_cast<double>(conv.fw_cycles) / static_cast<double>(ln.fw_cycles);
    const double bw = static_cast<double>(conv.bw_cycles) / static_cast<double>(ln.bw_cycles);
    const double module = conv.module_j / ln.module_j;
    fw_ratio_sum += fw;
    bw_ratio_sum += bw;
    module_ratio_sum += module;
    networks.push_back({{"network", s.network}, {"layers", s.layers.size()}, {"totals", totals},
                        {"ratios", {{"restructured_over_conventional_fw_cycles", restr_fw},
                                    {"conventional_over_lightnorm_fw_cycles", fw},
                                    {"conventional_over_lightnorm_bw_cycles", bw},
                                    {"conventional_over_lightnorm_module_energy", module}}}});
    out << std::left << std::setw(14) << s.network << std::right << std::setw(12) << fmt_num(restr_fw)
        << std::setw(12) << fmt_num(fw) << std::setw(12) << fmt_num(bw) << "\n";
  }
  const double n = static_cast<double>(suites.size());
  const json summary = {{"calibration_version", hw.calibration_version},
                        {"networks", networks},
                        {"average", {{"conventional_over_lightnorm_fw_cycles", fw_ratio_sum / n},
                                     {"conventional_over_lightnorm_bw_cycles", bw_ratio_sum / n},
                                     {"conventional_over_lightnorm_module_energy", module_ratio_sum / n}}}};
  Outputs o(c);
  o.text("cost_layers.csv", layers_csv.str());
  o.text("cost_summary.csv", summary_csv.str());
  o.text("cost_summary.json", summary.dump(2) + "\n");
  json suite_names = json::array();
  for (const auto& s : c.suites) suite_names.push_back(s);
  o.manifest("cost report", {{"calibration", calib_path}, {"suites", c.suites.empty() ? json("bundled") : suite_names}});
  out << "average conv/LN: FW " << fmt_num(fw_ratio_sum / n) << ", BW " << fmt_num(bw_ratio_sum / n) << "\n";
  return kExitOk;
}

int cmd_train_toy(const RunConfig& c, std::ostream& out) {
  if (c.seeds == 0) throw ConfigError("--seeds must be positive");
  TrainConfig tc;
  // Training follows the true derivative of the forward function.
  tc.norm = norm_config(c, RnGradientForm::exact);
  if (c.variant != "lightnorm" && c.format.empty() && c.fw_format.empty() && c.bw_format.empty()) {
    tc.norm.fw_format = formats::fp64();
    tc.norm.bw_format = formats::fp64();
  }
  tc.model.hidden = c.hidden;
  tc.model.depth = c.depth;
  tc.epochs = c.epochs;
  tc.batch = c.train_batch;
  tc.learning_rate = c.learning_rate;
  const DatasetKind kind = parse_dataset_kind(c.dataset);

  std::ostringstream trace;
  trace << "seed,epoch,train_loss,train_accuracy,test_accuracy\n";
  json runs = json::array();
  double acc_sum = 0.0;
  for (std::size_t i = 0; i < c.seeds; ++i) {
    const std::uint64_t seed = c.seed + i;
    const Dataset data = make_dataset(kind, c.dataset_size, seed);
    const TrainRun run = train(data, tc, seed);
    for (const EpochStats& e : run.trace) {
      trace << seed << "," << e.epoch << "," << fmt_num(e.train_loss) << "," << fmt_num(e.train_accuracy) << ","
            << fmt_num(e.test_accuracy) << "\n";
    }
    runs.push_back({{"seed", seed}, {"final_test_accuracy", run.final_test_accuracy},
                    {"final_loss", run.final_loss}, {"diverged", run.diverged}, {"epochs_run", run.trace.size()}});
    acc_sum += run.final_test_accuracy;
    out << "seed " << seed << ": test accuracy " << fmt_num(run.final_test_accuracy)
        << (run.diverged ? " (diverged)" : "") << "\n";
  }
  json config = norm_config_json(tc.norm);
  config["dataset"] = std::string(to_string(kind));
  config["dataset_size"] = c.dataset_size;
  config["epochs"] = tc.epochs;
  config["batch"] = tc.batch;
  config["learning_rate"] = tc.learning_rate;
  config["hidden"] = tc.model.hidden;
  config["depth"] = tc.model.depth;
  config["seed"] = c.seed;
  config["seeds"] = c.seeds;
  const json summary = {{"runs", runs}, {"mean_test_accuracy", acc_sum / static_cast<double>(c.seeds)},
                        {"config", config}};
  Outputs o(c);
  o.text("trace.csv", trace.str());
  o.text("summary.json", summary.dump(2) + "\n");
  o.manifest("train-toy", config);
  out << "mean test accuracy " << fmt_num(acc_sum / static_cast<double>(c.seeds)) << "\n";
  return kExitOk;
}

std::string find_config_arg(int argc, const char* const* argv) {
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--config" && i + 1 < argc) return argv[i + 1];
    if (a.rfind("--config=", 0) == 0) return a.substr(9);
  }
  return {};
}

int dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  RunConfig c;
  const std::string config_path = find_config_arg(argc, argv);
  if (!config_path.empty()) apply_config_file(config_path, c);

  CLI::App app{"Reduced-precision normalization toolkit"};
  app.fallthrough();
  app.require_subcommand(1);
  std::string config_unused;
  app.add_option("--seed", c.seed, "Random seed");
  app.add_option("--config", config_unused, "JSON file with option defaults");
  auto* out_opt = app.add_option("--out-dir", c.out_dir, "Directory for outputs and the manifest");
  app.add_option("--format", c.format, "Format name or {1,e,m} triple");

  const std::vector<std::string> variants = {"conventional", "restructured", "range", "lightnorm", "bn", "rn"};

  auto* formats_cmd = app.add_subcommand("formats", "Print dynamic and representable ranges");
  formats_cmd->add_option("formats", c.extra_formats, "Extra formats to print");

  auto* quantize_cmd = app.add_subcommand("quantize", "Round a tensor onto a format");
  quantize_cmd->add_option("--in", c.input, "Raw float32 tensor");

  auto* bfp_cmd = app.add_subcommand("bfp", "Block floating point containers");
  bfp_cmd->require_subcommand(1);
  auto* pack_cmd = bfp_cmd->add_subcommand("pack", "Pack a tensor");
  pack_cmd->add_option("--in", c.input, "Raw float32 tensor");
  pack_cmd->add_option("-k,--group-size", c.k, "Elements per shared exponent");
  auto* unpack_cmd = bfp_cmd->add_subcommand("unpack", "Unpack a container");
  unpack_cmd->add_option("--in", c.input, "Container file");

  auto* norm_cmd = app.add_subcommand("norm", "Normalization layers");
  norm_cmd->require_subcommand(1);
  auto* run_cmd = norm_cmd->add_subcommand("run", "Forward (and optionally backward) pass");
  run_cmd->add_option("--in", c.input, "Raw float32 input tensor");
  run_cmd->add_option("--grad", c.grad, "Raw float32 upstream gradient");
  run_cmd->add_option("--variant", c.variant, "Normalization variant")->check(CLI::IsMember(variants));
  run_cmd->add_option("--fw-format", c.fw_format, "Forward format");
  run_cmd->add_option("--bw-format", c.bw_format, "Backward format");
  run_cmd->add_option("--epsilon", c.epsilon, "Stabilizing epsilon");
  run_cmd->add_option("--batch", c.batch, "Mini-batch size for C(B); 0 = dimension 0");
  run_cmd->add_option("-k,--group-size", c.k, "BFP group size");
  run_cmd->add_option("--gamma", c.gamma, "Scale applied to every channel");
  run_cmd->add_option("--beta", c.beta, "Shift applied to every channel");
  run_cmd->add_flag("--bfp-output", c.bfp_output, "Store Y as a BFP container");
  run_cmd->add_flag("--c-from-elements", c.c_from_element_count, "Evaluate C at the per-channel count");
  run_cmd->add_option("--rn-gradient", c.rn_gradient, "Range-norm gradient form (default: printed)")
      ->check(CLI::IsMember({"printed", "exact"}));

  auto* stats_cmd = app.add_subcommand("stats", "Numerical diagnostics");
  stats_cmd->require_subcommand(1);
  auto* sweep_cmd = stats_cmd->add_subcommand("sweep", "Normalized-output distortion per format");
  sweep_cmd->add_option("--in", c.input, "Raw float32 tensor (default: generated Gaussian)");
  sweep_cmd->add_option("--formats", c.formats, "Formats to sweep (default: catalog)")->delimiter(',');
  sweep_cmd->add_option("--samples", c.samples, "Generated sample count");
  sweep_cmd->add_option("--channels", c.channels, "Generated channel count");
  sweep_cmd->add_option("--mean", c.mean, "Generated mean");
  sweep_cmd->add_option("--stdev", c.stdev, "Generated standard deviation");

  auto* cost_cmd = app.add_subcommand("cost", "Hardware cost model");
  cost_cmd->require_subcommand(1);
  auto* report_cmd = cost_cmd->add_subcommand("report", "Cycle and energy comparison tables");
  report_cmd->add_option("--suite", c.suites, "Suite JSON files (default: bundled networks)");
  report_cmd->add_option("--calibration", c.calibration, "Calibration JSON");

  auto* train_cmd = app.add_subcommand("train-toy", "Train a small MLP with normalization layers");
  train_cmd->add_option("--dataset", c.dataset, "gaussian-clusters or two-spirals")
      ->check(CLI::IsMember({"gaussian-clusters", "two-spirals"}));
  train_cmd->add_option("--samples", c.dataset_size, "Dataset size");
  train_cmd->add_option("--variant", c.variant, "Normalization variant")->check(CLI::IsMember(variants));
  train_cmd->add_option("--fw-format", c.fw_format, "Forward format");
  train_cmd->add_option("--bw-format", c.bw_format, "Backward format");
  train_cmd->add_option("--epsilon", c.epsilon, "Stabilizing epsilon");
  train_cmd->add_option("-k,--group-size", c.k, "BFP group size");
  train_cmd->add_option("--rn-gradient", c.rn_gradient, "Range-norm gradient form (default: exact)")
      ->check(CLI::IsMember({"printed", "exact"}));
  train_cmd->add_option("--epochs", c.epochs, "Epochs");
  train_cmd->add_option("--seeds", c.seeds, "Number of consecutive seeds starting at --seed");
  train_cmd->add_option("--batch", c.train_batch, "Mini-batch size");
  train_cmd->add_option("--lr", c.learning_rate, "Learning rate");
  train_cmd->add_option("--hidden", c.hidden, "Hidden width");
  train_cmd->add_option("--depth", c.depth, "Hidden layers");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << "\n" << app.help();
    return kExitUsage;
  }
  c.out_dir_given = out_opt->count() > 0;

  if (formats_cmd->parsed()) return cmd_formats(c, out);
  if (quantize_cmd->parsed()) return cmd_quantize(c, out);
  if (pack_cmd->parsed()) return cmd_bfp_pack(c, out);
  if (unpack_cmd->parsed()) return cmd_bfp_unpack(c, out);
  if (run_cmd->parsed()) return cmd_norm_run(c, out);
  if (sweep_cmd->parsed()) return cmd_stats_sweep(c, out);
  if (report_cmd->parsed()) return cmd_cost_report(c, out);
  if (train_cmd->parsed()) return cmd_train_toy(c, out);
  err << app.help();
  return kExitUsage;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  try {
    return dispatch(argc, argv, out, err);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const FormatError& e) {
    err << "format error: " << e.what() << "\n";
    return kExitFormat;
  } catch (const ShapeError& e) {
    err << "shape error: " << e.what() << "\n";
    return kExitShape;
  } catch (const DomainError& e) {
    err << "domain error: " << e.what() << "\n";
    return kExitDomain;
  } catch (const IoError& e) {
    err << "io error: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitInternal;
  }
}

}  // namespace lightnorm
