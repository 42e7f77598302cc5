#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mambasod/mambasod.hpp"
#include "properties.hpp"

namespace mambasod::cli {

namespace fs = std::filesystem;

/// Error with a stable machine-readable code; printed as a single line.
class CliError : public std::runtime_error {
 public:
  CliError(std::string code, const std::string& msg, int exit_code)
      : std::runtime_error(msg), code_(std::move(code)), exit_code_(exit_code) {}
  const std::string& code() const { return code_; }
  int exit_code() const { return exit_code_; }

 private:
  std::string code_;
  int exit_code_;
};

struct HelpRequested {
  std::string text;
};

enum ExitCode { kOk = 0, kRuntime = 1, kUsage = 2, kIo = 3, kShape = 4, kCheckFailed = 5 };

struct RunConfig {
  std::string command;
  Preset preset = Preset::desk;
  std::uint64_t seed = 0;
  std::optional<std::string> rgb, depth, gt, pred;
  std::string out = "out";
  std::optional<std::pair<std::size_t, std::size_t>> synth;
  GateActivation gate = GateActivation::silu;
  std::size_t thresholds = kDefaultThresholds;
  std::optional<std::string> save_weights, load_weights, inject_fault;

  NetworkConfig network() const {
    NetworkConfig cfg = NetworkConfig::for_preset(preset);
    cfg.gate = gate;
    return cfg;
  }
};

inline std::pair<std::size_t, std::size_t> parse_extent(const std::string& s) {
  const auto x = s.find('x');
  auto number = [&](const std::string& part) {
    if (part.empty() || part.find_first_not_of("0123456789") != std::string::npos || part.size() > 6) {
      throw CliError("usage", "bad extent '" + s + "' (expected HxW)", kUsage);
    }
    return static_cast<std::size_t>(std::stoul(part));
  };
  if (x == std::string::npos) throw CliError("usage", "bad extent '" + s + "' (expected HxW)", kUsage);
  return {number(s.substr(0, x)), number(s.substr(x + 1))};
}

inline std::string one_line(std::string s) {
  for (char& c : s)
    if (c == '\n' || c == '\r' || c == '\t') c = ' ';
  std::string q;
  for (char c : s) {
    if (c == '"' || c == '\\') q += '\\';
    q += c;
  }
  return q;
}

inline void print_error(std::ostream& err, const std::string& code, const std::string& msg) {
  err << "error: code=" << code << " msg=\"" << one_line(msg) << "\"\n";
}

/// Parses argv into a RunConfig. Config-file values (`key = value`) are
/// applied first and explicit flags override them.
inline RunConfig parse_args(int argc, const char* const* argv) {
  CLI::App app{"RGB-D salient object detection with state-space encoders", "mambasod"};
  app.set_config("--config", "", "flat key = value file; flags override it");
  app.allow_config_extras(false);

  std::string preset = "desk", gate = "silu", synth, out = "out";
  std::string rgb, depth, gt, pred, save_w, load_w, fault;
  std::uint64_t seed = 0;
  std::size_t thresholds = kDefaultThresholds;
  app.add_option("--preset", preset, "desk|full")->check(CLI::IsMember({"desk", "full"}));
  app.add_option("--seed", seed, "weight and scene seed");
  app.add_option("--rgb", rgb, "P6 colour image");
  app.add_option("--depth", depth, "P5 depth image");
  app.add_option("--gt", gt, "P5 ground-truth mask");
  app.add_option("--pred", pred, "P5 saliency map to evaluate");
  app.add_option("--out", out, "output directory");
  app.add_option("--synth", synth, "synthetic scene extent HxW");
  app.add_option("--gate-activation,--gate_activation", gate, "silu|none")->check(CLI::IsMember({"silu", "none"}));
  app.add_option("--thresholds", thresholds, "binarization thresholds per sweep")->check(CLI::Range(2, 65536));
  app.add_option("--save-weights", save_w, "write weights to STEM.bin / STEM.manifest");
  app.add_option("--load-weights", load_w, "read weights from STEM.bin / STEM.manifest");
  app.add_option("--inject-fault", fault, "make the named check property fail");

  std::vector<CLI::App*> subs{app.add_subcommand("check", "run the property suite"),
                              app.add_subcommand("infer", "run the network and save all predictions"),
                              app.add_subcommand("eval", "score a prediction against ground truth"),
                              app.add_subcommand("params", "count learnable parameters")};
  for (auto* s : subs) s->fallthrough();
  app.require_subcommand(1);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    throw HelpRequested{app.help()};
  } catch (const CLI::CallForAllHelp&) {
    throw HelpRequested{app.help("", CLI::AppFormatMode::All)};
  }

  RunConfig cfg;
  for (auto* s : subs)
    if (s->parsed()) cfg.command = s->get_name();
  cfg.preset = parse_preset(preset);
  cfg.gate = parse_gate_activation(gate);
  cfg.seed = seed;
  cfg.out = out;
  cfg.thresholds = thresholds;
  auto opt = [&](const char* name, const std::string& v) -> std::optional<std::string> {
    if (app.count(name) == 0) return std::nullopt;
    return v;
  };
  cfg.rgb = opt("--rgb", rgb);
  cfg.depth = opt("--depth", depth);
  cfg.gt = opt("--gt", gt);
  cfg.pred = opt("--pred", pred);
  cfg.save_weights = opt("--save-weights", save_w);
  cfg.load_weights = opt("--load-weights", load_w);
  cfg.inject_fault = opt("--inject-fault", fault);
  if (app.count("--synth")) cfg.synth = parse_extent(synth);
  return cfg;
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

inline int cmd_check(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  const auto suite = property_suite();
  if (cfg.inject_fault) {
    const bool known = std::any_of(suite.begin(), suite.end(), [&](const Property& p) { return p.name == *cfg.inject_fault; });
    if (!known) throw CliError("unknown_property", "no property named '" + *cfg.inject_fault + "'", kUsage);
  }
  std::vector<std::string> failed;
  for (const auto& p : suite) {
    Outcome o;
    try {
      o = p.run(Fault{cfg.inject_fault && *cfg.inject_fault == p.name});
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    out << (o.pass ? "PASS  " : "FAIL  ") << std::left << std::setw(44) << p.name << o.detail << '\n';
    if (!o.pass) failed.push_back(p.name);
  }
  out << suite.size() - failed.size() << "/" << suite.size() << " properties passed\n";
  if (!failed.empty()) {
    std::string names;
    for (const auto& n : failed) names += (names.empty() ? "" : ",") + n;
    print_error(err, "property_failed", names);
    return kCheckFailed;
  }
  return kOk;
}

struct Inputs {
  Tensor rgb, depth;
  std::optional<Tensor> gt;
  bool synthetic = false;
};

inline Inputs resolve_inputs(const RunConfig& cfg, const NetworkConfig& net) {
  Inputs in;
  if (cfg.rgb || cfg.depth) {
    if (!cfg.rgb || !cfg.depth) throw CliError("usage", "--rgb and --depth must be given together", kUsage);
    if (cfg.synth) throw CliError("usage", "--synth cannot be combined with --rgb/--depth", kUsage);
    const std::pair<std::size_t, std::size_t> size{net.input_h, net.input_w};
    in.rgb = load_image(*cfg.rgb, ImageKind::rgb, size);
    in.depth = load_image(*cfg.depth, ImageKind::gray, size);
    if (cfg.gt) in.gt = load_image(*cfg.gt, ImageKind::gray, size);
    return in;
  }
  const auto [h, w] = cfg.synth.value_or(std::pair<std::size_t, std::size_t>{net.input_h, net.input_w});
  SaliencyPair scene = synth_scene(cfg.seed, h, w);
  in.rgb = std::move(scene.rgb);
  in.depth = std::move(scene.depth);
  in.gt = cfg.gt ? std::optional<Tensor>(load_image(*cfg.gt, ImageKind::gray, std::pair{h, w})) : scene.gt;
  in.synthetic = true;
  return in;
}

inline NetworkWeights resolve_weights(const RunConfig& cfg, const NetworkConfig& net) {
  NetworkWeights w = make_network_weights(net, cfg.seed);
  if (cfg.load_weights) load_weights(w, *cfg.load_weights);
  if (cfg.save_weights) save_weights(w, *cfg.save_weights);
  return w;
}

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

inline void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw CliError("io", "cannot create output directory '" + dir + "': " + ec.message(), kIo);
}

inline ForwardResult run_network(const RunConfig& cfg, const Inputs& in, std::ostream& out) {
  const NetworkConfig net = cfg.network();
  const auto t0 = std::chrono::steady_clock::now();
  const NetworkWeights w = resolve_weights(cfg, net);
  const double t_init = seconds_since(t0);
  const auto t1 = std::chrono::steady_clock::now();
  ForwardResult r = forward(net, w, in.rgb, in.depth);
  const double t_fwd = seconds_since(t1);
  out << "preset " << to_string(cfg.preset) << " seed " << cfg.seed << " gate " << to_string(cfg.gate) << " input "
      << in.rgb.dim(1) << "x" << in.rgb.dim(2) << (in.synthetic ? " (synthetic)" : "") << '\n';
  for (std::size_t s = 0; s < kNumStages; ++s) {
    out << "stage" << s + 1 << " rgb " << shape_str(r.rgb[s].shape()) << " depth " << shape_str(r.depth[s].shape())
        << " fused " << shape_str(r.fused[s].shape()) << '\n';
  }
  for (std::size_t i = 0; i < r.prediction.levels.size(); ++i) {
    out << "P" << i + 1 << " " << shape_str(r.prediction.levels[i].shape()) << '\n';
  }
  out << std::fixed << std::setprecision(3) << "time init " << t_init << " s forward " << t_fwd << " s\n"
      << std::defaultfloat;
  return r;
}

inline int cmd_infer(const RunConfig& cfg, std::ostream& out, std::ostream&) {
  const Inputs in = resolve_inputs(cfg, cfg.network());
  const ForwardResult r = run_network(cfg, in, out);
  for (const auto& p : r.prediction.levels) {
    if (!all_finite(p)) throw CliError("non_finite", "prediction contains NaN or Inf", kRuntime);
  }
  ensure_dir(cfg.out);
  const fs::path dir(cfg.out);
  std::vector<fs::path> written;
  for (std::size_t i = 0; i < r.prediction.levels.size(); ++i) {
    written.push_back(dir / ("pred_level" + std::to_string(i + 1) + ".pgm"));
    save_saliency(r.prediction.levels[i], written.back().string());
  }
  written.push_back(dir / "saliency.pgm");
  save_saliency(r.prediction.final, written.back().string());
  if (in.synthetic) {
    written.push_back(dir / "input_rgb.ppm");
    save_image(in.rgb, written.back().string());
    written.push_back(dir / "input_depth.pgm");
    save_image(in.depth, written.back().string());
    if (in.gt) {
      written.push_back(dir / "input_gt.pgm");
      save_image(*in.gt, written.back().string());
    }
  }
  for (const auto& p : written) out << "wrote " << p.string() << '\n';
  return kOk;
}

inline int cmd_eval(const RunConfig& cfg, std::ostream& out, std::ostream&) {
  Tensor pred, gt;
  std::string name;
  if (cfg.pred) {
    if (!cfg.gt) throw CliError("usage", "eval --pred needs --gt", kUsage);
    pred = load_image(*cfg.pred, ImageKind::gray);
    gt = load_image(*cfg.gt, ImageKind::gray);
    name = fs::path(*cfg.pred).stem().string();
  } else {
    const Inputs in = resolve_inputs(cfg, cfg.network());
    if (!in.gt) throw CliError("usage", "eval needs --gt (or a synthetic scene) to score against", kUsage);
    pred = run_network(cfg, in, out).prediction.final;
    gt = *in.gt;
    name = "saliency";
  }
  if (pred.shape() != gt.shape()) {
    throw CliError("shape_mismatch",
                   "prediction " + shape_str(pred.shape()) + " and ground truth " + shape_str(gt.shape()) + " differ",
                   kShape);
  }
  for (Real& v : gt.data()) v = v > Real(0.5) ? 1 : 0;

  DatasetMetrics ds(cfg.thresholds);
  const MetricsReport single = ds.add(pred, gt);
  const MetricsReport agg = ds.aggregate();
  ensure_dir(cfg.out);
  const fs::path metrics = fs::path(cfg.out) / "metrics.csv", pr = fs::path(cfg.out) / "pr_curve.csv";
  write_metrics_csv(metrics.string(), {to_row(name, single), to_row(kAggregateRowName, agg)});
  write_pr_csv(pr.string(), agg.pr_curve);
  out << std::setprecision(6) << "mae " << agg.mae << " f_max " << agg.f_max << " e_max " << agg.e_max
      << " s_measure " << agg.s_measure << '\n'
      << "wrote " << metrics.string() << '\n'
      << "wrote " << pr.string() << '\n';
  return kOk;
}

inline int cmd_params(const RunConfig& cfg, std::ostream& out, std::ostream&) {
  const NetworkConfig net = cfg.network();
  const NetworkWeights w(net);  // counts do not depend on values
  std::size_t total = 0, manifest = 0;
  out << "preset " << to_string(cfg.preset) << '\n';
  for (const auto& m : param_breakdown(w)) {
    out << std::left << std::setw(16) << m.module << m.count << '\n';
    total += m.count;
  }
  for (const auto& e : build_manifest(w)) manifest += e.count;
  if (manifest != total || total != count_params(w)) {
    throw CliError("count_mismatch",
                   "module sum " + std::to_string(total) + " != manifest " + std::to_string(manifest), kRuntime);
  }
  out << std::left << std::setw(16) << "total" << total << " (" << std::fixed << std::setprecision(2)
      << static_cast<double>(total) / 1e6 << " M)\n"
      << std::defaultfloat;
  return kOk;
}

/// Entry point shared by the executable and in-process tests.
inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  try {
    const RunConfig cfg = parse_args(argc, argv);
    if (cfg.command == "check") return cmd_check(cfg, out, err);
    if (cfg.command == "infer") return cmd_infer(cfg, out, err);
    if (cfg.command == "eval") return cmd_eval(cfg, out, err);
    return cmd_params(cfg, out, err);
  } catch (const HelpRequested& h) {
    out << h.text;
    return kOk;
  } catch (const CLI::ParseError& e) {
    print_error(err, e.get_name() == "ConfigError" || e.get_name() == "FileError" ? "config" : "usage", e.what());
    return kUsage;
  } catch (const CliError& e) {
    print_error(err, e.code(), e.what());
    return e.exit_code();
  } catch (const ImageError& e) {
    print_error(err, std::string("image_") + to_string(e.code()), e.what());
    return kIo;
  } catch (const WeightsFormatError& e) {
    print_error(err, "weights_format", e.what());
    return kIo;
  } catch (const DimensionError& e) {
    print_error(err, "shape_mismatch", e.what());
    return kShape;
  } catch (const std::invalid_argument& e) {
    print_error(err, "invalid_argument", e.what());
    return kUsage;
  } catch (const std::exception& e) {
    print_error(err, "runtime", e.what());
    return kRuntime;
  }
}

inline int run_cli(const std::vector<std::string>& args, std::ostream& out = std::cout,
                   std::ostream& err = std::cerr) {
  std::vector<const char*> argv{"mambasod"};
  for (const auto& a : args) argv.push_back(a.c_str());
  return run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
}

}  // namespace mambasod::cli
