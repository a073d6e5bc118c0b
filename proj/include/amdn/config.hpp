#pragma once

// Run configuration for the command-line pipeline, stored as JSON.
// Every object is checked for unknown keys; missing keys keep defaults.

#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "amdn/detect.hpp"
#include "amdn/error.hpp"
#include "amdn/fusion.hpp"
#include "amdn/ingest.hpp"
#include "amdn/ocsvm.hpp"
#include "amdn/sdae.hpp"

namespace amdn {

enum class FlowSource { HornSchunck, FloDir };

inline std::string_view to_string(FlowSource f) { return f == FlowSource::HornSchunck ? "hs" : "flo-dir"; }

inline FlowSource parse_flow_source(std::string_view s) {
  if (s == "hs") return FlowSource::HornSchunck;
  if (s == "flo-dir") return FlowSource::FloDir;
  throw ConfigError("unknown flow source '" + std::string(s) + "' (hs|flo-dir)");
}

struct FlowConfig {
  FlowSource source = FlowSource::HornSchunck;
  double alpha = 1.0;
  int iters = 200;
};

/// Multi-scale training windows for the appearance pipeline.
struct AppearancePatchConfig {
  std::vector<std::size_t> scales{15, 20, 30};
  std::size_t stride = 8;
  std::size_t target = 15;
  std::size_t sample_cap = 2000;
};

/// Single-scale windows shared by the motion and joint pipelines.
struct MotionPatchConfig {
  std::size_t size = 15;
  std::size_t stride = 8;
  std::size_t sample_cap = 2000;
};

struct OcsvmRunConfig {
  OcsvmConfig svm;
  bool sigma_from_median = true;  ///< overrides svm.rbf_sigma with the median heuristic
  std::size_t train_cap = 1500;   ///< features used to fit the SVM
};

struct FusionConfig {
  std::size_t subspace_dim = 16;
  double lambda_s = 0.1;
  TraceNormalization trace_normalization = TraceNormalization::PerEntry;
  ScoreCalibration calibration = ScoreCalibration::ZScore;
};

struct ThresholdConfig {
  std::optional<double> eta;  ///< fixed decision threshold; otherwise a percentile of training frame scores
  double percentile = 95.0;
  /// Optional uniform eta grid for the ROC sweep (steps == 0: every distinct score).
  double sweep_min = 0.0;
  double sweep_max = 0.0;
  std::size_t sweep_steps = 0;
};

struct RunConfig {
  std::string dataset_root;
  std::string output_dir;
  std::uint64_t seed = 0;
  FlowConfig flow;
  AppearancePatchConfig appearance;
  MotionPatchConfig motion;
  GridSpec test_grid;
  std::array<SdaeConfig, 3> sdae;
  std::array<OcsvmRunConfig, 3> ocsvm;
  FusionConfig fusion;
  ThresholdConfig threshold;

  RunConfig() {
    const std::size_t a = appearance.target * appearance.target;
    const std::size_t m = motion.size * motion.size * 2;
    sdae[0].layer_dims = {a, 256, 128, 64, 32};
    sdae[1].layer_dims = {m, 256, 128, 64, 32};
    sdae[2].layer_dims = {motion.size * motion.size * 3, 256, 128, 64, 32};
    for (auto& c : sdae) c.pretrain_epochs = c.finetune_epochs = 15;
  }

  /// Full-size widths: 1024 first-layer units for appearance, 2048 for
  /// motion and joint, each halved three times.
  void use_full_architecture() {
    const std::size_t widths[] = {1024, 2048, 2048};
    for (std::size_t k = 0; k < 3; ++k) {
      const std::size_t in = sdae[k].layer_dims.front();
      sdae[k].layer_dims = {in, widths[k], widths[k] / 2, widths[k] / 4, widths[k] / 8};
    }
  }

  void validate() const {
    const std::size_t a = appearance.target * appearance.target;
    const std::size_t m = motion.size * motion.size * 2;
    const std::size_t j = motion.size * motion.size * 3;
    const std::size_t expect[] = {a, m, j};
    for (std::size_t k = 0; k < 3; ++k) {
      sdae[k].validate();
      ocsvm[k].svm.validate();
      if (sdae[k].layer_dims.front() != expect[k]) {
        throw ConfigError("sdae." + std::string(pipeline_name(kAllPipelines[k])) + ".layer_dims[0] must be " +
                          std::to_string(expect[k]) + " for the configured patch sizes");
      }
      if (ocsvm[k].train_cap < 2) throw ConfigError("ocsvm.train_cap must be >= 2");
    }
    if (appearance.scales.empty() || appearance.stride < 1 || appearance.target < 1) {
      throw ConfigError("appearance patch settings are incomplete");
    }
    if (motion.stride < 1 || motion.size < 1) throw ConfigError("motion patch settings are incomplete");
    if (test_grid.stride < 1 || test_grid.patch != motion.size) {
      throw ConfigError("test_grid.patch must equal motion.size and stride must be >= 1");
    }
    if (fusion.subspace_dim < 1 || !(fusion.lambda_s > 0.0)) throw ConfigError("fusion settings out of range");
    if (!(threshold.percentile >= 0.0 && threshold.percentile <= 100.0)) {
      throw ConfigError("threshold.percentile must be in [0,100]");
    }
    if (threshold.sweep_steps == 1 || (threshold.sweep_steps > 1 && !(threshold.sweep_max > threshold.sweep_min))) {
      throw ConfigError("threshold sweep needs steps >= 2 and max > min");
    }
    if (flow.iters < 1 || !(flow.alpha > 0.0)) throw ConfigError("flow settings out of range");
  }
};

// ------------------------------------------------------------------ JSON

namespace detail {

using nlohmann::json;

inline void reject_unknown(const json& j, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  const std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [key, _] : j.items()) {
    if (!ok.count(key)) throw ConfigError(where + ": unknown key '" + key + "'");
  }
}

template <typename T>
void read_key(const json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(where + "." + key + ": wrong type");
  }
}

inline json sdae_to_json(const SdaeConfig& c) {
  return {{"layer_dims", c.layer_dims},       {"noise_variance", c.noise_variance},
          {"sparsity_target", c.sparsity_target}, {"sparsity_weight", c.sparsity_weight},
          {"lambda_pre", c.lambda_pre},       {"lambda_fine", c.lambda_fine},
          {"learning_rate", c.learning_rate}, {"momentum", c.momentum},
          {"batch_size", c.batch_size},       {"pretrain_epochs", c.pretrain_epochs},
          {"finetune_epochs", c.finetune_epochs}};
}

inline void sdae_from_json(const json& j, SdaeConfig& c, const std::string& where) {
  reject_unknown(j, where,
                 {"layer_dims", "noise_variance", "sparsity_target", "sparsity_weight", "lambda_pre", "lambda_fine",
                  "learning_rate", "momentum", "batch_size", "pretrain_epochs", "finetune_epochs"});
  read_key(j, "layer_dims", c.layer_dims, where);
  read_key(j, "noise_variance", c.noise_variance, where);
  read_key(j, "sparsity_target", c.sparsity_target, where);
  read_key(j, "sparsity_weight", c.sparsity_weight, where);
  read_key(j, "lambda_pre", c.lambda_pre, where);
  read_key(j, "lambda_fine", c.lambda_fine, where);
  read_key(j, "learning_rate", c.learning_rate, where);
  read_key(j, "momentum", c.momentum, where);
  read_key(j, "batch_size", c.batch_size, where);
  read_key(j, "pretrain_epochs", c.pretrain_epochs, where);
  read_key(j, "finetune_epochs", c.finetune_epochs, where);
}

inline json ocsvm_to_json(const OcsvmRunConfig& c) {
  return {{"nu", c.svm.nu},
          {"rbf_sigma", c.sigma_from_median ? json("median") : json(c.svm.rbf_sigma)},
          {"tolerance", c.svm.tolerance},
          {"max_passes", c.svm.max_passes},
          {"train_cap", c.train_cap}};
}

inline void ocsvm_from_json(const json& j, OcsvmRunConfig& c, const std::string& where) {
  reject_unknown(j, where, {"nu", "rbf_sigma", "tolerance", "max_passes", "train_cap"});
  read_key(j, "nu", c.svm.nu, where);
  if (j.contains("rbf_sigma")) {
    const auto& s = j.at("rbf_sigma");
    if (s.is_string() && s.get<std::string>() == "median") {
      c.sigma_from_median = true;
    } else if (s.is_number()) {
      c.sigma_from_median = false;
      c.svm.rbf_sigma = s.get<double>();
    } else {
      throw ConfigError(where + ".rbf_sigma: expected a number or \"median\"");
    }
  }
  read_key(j, "tolerance", c.svm.tolerance, where);
  read_key(j, "max_passes", c.svm.max_passes, where);
  read_key(j, "train_cap", c.train_cap, where);
}

constexpr std::array<const char*, 3> kPipelineKeys = {"appearance", "motion", "joint"};

}  // namespace detail

inline nlohmann::json to_json(const RunConfig& c) {
  using nlohmann::json;
  json sdae = json::object(), svm = json::object();
  for (std::size_t k = 0; k < 3; ++k) {
    sdae[detail::kPipelineKeys[k]] = detail::sdae_to_json(c.sdae[k]);
    svm[detail::kPipelineKeys[k]] = detail::ocsvm_to_json(c.ocsvm[k]);
  }
  json threshold = {{"eta", c.threshold.eta ? json(*c.threshold.eta) : json(nullptr)},
                    {"percentile", c.threshold.percentile},
                    {"sweep_min", c.threshold.sweep_min},
                    {"sweep_max", c.threshold.sweep_max},
                    {"sweep_steps", c.threshold.sweep_steps}};
  return {
      {"dataset_root", c.dataset_root},
      {"output_dir", c.output_dir},
      {"seed", c.seed},
      {"flow", {{"source", to_string(c.flow.source)}, {"alpha", c.flow.alpha}, {"iters", c.flow.iters}}},
      {"patches",
       {{"appearance",
         {{"scales", c.appearance.scales},
          {"stride", c.appearance.stride},
          {"target", c.appearance.target},
          {"sample_cap", c.appearance.sample_cap}}},
        {"motion", {{"size", c.motion.size}, {"stride", c.motion.stride}, {"sample_cap", c.motion.sample_cap}}},
        {"test", {{"patch", c.test_grid.patch}, {"stride", c.test_grid.stride}}}}},
      {"sdae", sdae},
      {"ocsvm", svm},
      {"fusion",
       {{"subspace_dim", c.fusion.subspace_dim},
        {"lambda_s", c.fusion.lambda_s},
        {"trace_normalization", to_string(c.fusion.trace_normalization)},
        {"calibration", to_string(c.fusion.calibration)}}},
      {"threshold", threshold},
  };
}

/// Applies the keys present in `j` on top of `c`.
inline void apply_json(RunConfig& c, const nlohmann::json& j) {
  using detail::read_key;
  using detail::reject_unknown;
  reject_unknown(j, "config",
                 {"dataset_root", "output_dir", "seed", "flow", "patches", "sdae", "ocsvm", "fusion", "threshold"});
  read_key(j, "dataset_root", c.dataset_root, "config");
  read_key(j, "output_dir", c.output_dir, "config");
  read_key(j, "seed", c.seed, "config");
  if (j.contains("flow")) {
    const auto& f = j.at("flow");
    reject_unknown(f, "flow", {"source", "alpha", "iters"});
    if (f.contains("source")) {
      std::string s;
      read_key(f, "source", s, "flow");
      c.flow.source = parse_flow_source(s);
    }
    read_key(f, "alpha", c.flow.alpha, "flow");
    read_key(f, "iters", c.flow.iters, "flow");
  }
  if (j.contains("patches")) {
    const auto& p = j.at("patches");
    reject_unknown(p, "patches", {"appearance", "motion", "test"});
    if (p.contains("appearance")) {
      const auto& a = p.at("appearance");
      reject_unknown(a, "patches.appearance", {"scales", "stride", "target", "sample_cap"});
      read_key(a, "scales", c.appearance.scales, "patches.appearance");
      read_key(a, "stride", c.appearance.stride, "patches.appearance");
      read_key(a, "target", c.appearance.target, "patches.appearance");
      read_key(a, "sample_cap", c.appearance.sample_cap, "patches.appearance");
    }
    if (p.contains("motion")) {
      const auto& m = p.at("motion");
      reject_unknown(m, "patches.motion", {"size", "stride", "sample_cap"});
      read_key(m, "size", c.motion.size, "patches.motion");
      read_key(m, "stride", c.motion.stride, "patches.motion");
      read_key(m, "sample_cap", c.motion.sample_cap, "patches.motion");
    }
    if (p.contains("test")) {
      const auto& t = p.at("test");
      reject_unknown(t, "patches.test", {"patch", "stride"});
      read_key(t, "patch", c.test_grid.patch, "patches.test");
      read_key(t, "stride", c.test_grid.stride, "patches.test");
    }
  }
  for (const char* section : {"sdae", "ocsvm"}) {
    if (!j.contains(section)) continue;
    const auto& s = j.at(section);
    reject_unknown(s, section, {"appearance", "motion", "joint"});
    for (std::size_t k = 0; k < 3; ++k) {
      const char* key = detail::kPipelineKeys[k];
      if (!s.contains(key)) continue;
      const std::string where = std::string(section) + "." + key;
      if (std::string(section) == "sdae") {
        detail::sdae_from_json(s.at(key), c.sdae[k], where);
      } else {
        detail::ocsvm_from_json(s.at(key), c.ocsvm[k], where);
      }
    }
  }
  if (j.contains("fusion")) {
    const auto& f = j.at("fusion");
    reject_unknown(f, "fusion", {"subspace_dim", "lambda_s", "trace_normalization", "calibration"});
    read_key(f, "subspace_dim", c.fusion.subspace_dim, "fusion");
    read_key(f, "lambda_s", c.fusion.lambda_s, "fusion");
    if (f.contains("trace_normalization")) {
      std::string s;
      read_key(f, "trace_normalization", s, "fusion");
      c.fusion.trace_normalization = parse_trace_normalization(s);
    }
    if (f.contains("calibration")) {
      std::string s;
      read_key(f, "calibration", s, "fusion");
      c.fusion.calibration = parse_score_calibration(s);
    }
  }
  if (j.contains("threshold")) {
    const auto& t = j.at("threshold");
    reject_unknown(t, "threshold", {"eta", "percentile", "sweep_min", "sweep_max", "sweep_steps"});
    if (t.contains("eta")) {
      if (t.at("eta").is_null()) {
        c.threshold.eta.reset();
      } else {
        double eta = 0.0;
        read_key(t, "eta", eta, "threshold");
        c.threshold.eta = eta;
      }
    }
    read_key(t, "percentile", c.threshold.percentile, "threshold");
    read_key(t, "sweep_min", c.threshold.sweep_min, "threshold");
    read_key(t, "sweep_max", c.threshold.sweep_max, "threshold");
    read_key(t, "sweep_steps", c.threshold.sweep_steps, "threshold");
  }
}

inline RunConfig parse_run_config(const std::string& text, const std::string& source = "config") {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(source + ": " + e.what());
  }
  RunConfig c;
  apply_json(c, j);
  c.validate();
  return c;
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_run_config(text, path.string());
}

}  // namespace amdn
