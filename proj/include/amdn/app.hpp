#pragma once

// Pipeline orchestration behind the `amdn` subcommands. Each run_* function
// reads and writes the on-disk layouts documented in the README.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "amdn/config.hpp"
#include "amdn/detect.hpp"
#include "amdn/error.hpp"
#include "amdn/eval.hpp"
#include "amdn/fusion.hpp"
#include "amdn/ingest.hpp"
#include "amdn/linalg.hpp"
#include "amdn/log.hpp"
#include "amdn/ocsvm.hpp"
#include "amdn/optflow.hpp"
#include "amdn/sdae.hpp"
#include "amdn/synth.hpp"
#include "amdn/textio.hpp"

namespace amdn {

namespace fs = std::filesystem;

// ------------------------------------------------------------ data access

struct Split {
  std::vector<FrameSequence> clips;
  std::vector<FlowSequence> flows;
  std::vector<fs::path> dirs;
};

inline std::string flo_filename(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "flow_%06zu.flo", index);
  return buf;
}

/// Flow fields for one clip: Horn-Schunck on consecutive frames, or files
/// `<clip>/flow/flow_%06d.flo`. With one file fewer than frames the last
/// frame reuses the previous field.
inline std::vector<FlowField> clip_flow(const FrameSequence& seq, const fs::path& clip_dir, const FlowConfig& cfg) {
  if (cfg.source == FlowSource::HornSchunck) {
    return sequence_flow(seq.frames, HornSchunckOptions{cfg.alpha, cfg.iters, FlowBoundary::Replicate});
  }
  std::vector<FlowField> out;
  for (std::size_t i = 0; i < seq.frames.size(); ++i) {
    const auto p = clip_dir / "flow" / flo_filename(i);
    if (!fs::exists(p)) break;
    out.push_back(load_flo(p));
    if (out.back().width != seq.width || out.back().height != seq.height) {
      throw ShapeError(p.string() + ": flow size differs from the frames");
    }
  }
  if (out.size() + 1 < seq.frames.size()) {
    throw LayoutError((clip_dir / "flow").string() + ": expected " + std::to_string(seq.frames.size() - 1) +
                      " or more .flo files, found " + std::to_string(out.size()));
  }
  if (out.size() < seq.frames.size()) out.push_back(out.back());
  return out;
}

inline Split load_split(const fs::path& root, const FlowConfig& flow) {
  Split s;
  for (const auto& id : list_clips(root)) {
    const auto dir = root / id;
    s.clips.push_back(load_sequence(dir / "frames"));
    s.flows.push_back({id, clip_flow(s.clips.back(), dir, flow)});
    s.dirs.push_back(dir);
  }
  log_info("loaded " + std::to_string(s.clips.size()) + " clips from " + root.string() +
           (flow.source == FlowSource::HornSchunck ? " (last frame of each clip reuses the previous flow field)" : ""));
  return s;
}

// ----------------------------------------------------------- small helpers

/// Duplicates log lines into a file for the lifetime of the object.
class LogTee {
 public:
  explicit LogTee(const fs::path& path) : file_(path) {
    if (!file_) throw IoError("cannot write " + path.string());
    previous_ = set_log_sink([this](LogLevel level, const std::string& msg) {
      file_ << (level == LogLevel::Warning ? "warning: " : "") << msg << '\n';
      file_.flush();
      previous_(level, msg);
    });
  }
  ~LogTee() { set_log_sink(std::move(previous_)); }
  LogTee(const LogTee&) = delete;
  LogTee& operator=(const LogTee&) = delete;

 private:
  std::ofstream file_;
  LogSink previous_;
};

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

inline std::string fmt(double v, int digits = 4) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(digits);
  os << v;
  return os.str();
}

inline std::string join(const std::vector<double>& v, int digits = 4) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? " " : "") + fmt(v[i], digits);
  return s;
}

inline void ensure_dir(const fs::path& p) {
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec || !fs::is_directory(p)) throw IoError("cannot create directory " + p.string());
}

inline void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw IoError("cannot write " + p.string());
  out << text;
  if (!out) throw IoError("write failed: " + p.string());
}

inline std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw IoError("cannot open " + p.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline Matrix select_rows(const Matrix& m, std::size_t cap, Rng rng) {
  if (m.rows() <= cap) return m;
  std::vector<std::size_t> idx(m.rows());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (std::size_t i = 0; i < cap; ++i) std::swap(idx[i], idx[i + rng.uniform_index(idx.size() - i)]);
  idx.resize(cap);
  std::sort(idx.begin(), idx.end());
  Matrix out(cap, m.cols());
  for (std::size_t i = 0; i < cap; ++i) std::copy_n(m.row(idx[i]).begin(), m.cols(), out.row(i).begin());
  return out;
}

/// Linear-interpolated percentile (p in [0,100]).
inline double percentile(std::vector<double> v, double p) {
  if (v.empty()) throw DomainError("percentile: no values");
  std::sort(v.begin(), v.end());
  const double pos = p / 100.0 * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

inline void save_matrix(const fs::path& p, const Matrix& m) {
  std::ofstream out(p);
  if (!out) throw IoError("cannot write " + p.string());
  out << "amdn-matrix 1\n" << m.rows() << ' ' << m.cols() << '\n';
  textio::write_values(out, m.data(), std::max<std::size_t>(m.cols(), 1));
  out << "end\n";
}

inline Matrix load_matrix(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw IoError("cannot open " + p.string());
  textio::Reader r(in, p.string());
  r.expect("amdn-matrix");
  if (r.integer() != 1) r.fail("unsupported matrix version");
  const auto rows = r.integer();
  const auto cols = r.integer();
  std::vector<double> data(rows * cols);
  r.values(data);
  r.expect("end");
  return Matrix(rows, cols, std::move(data));
}

inline std::string lower_name(PipelineKind k) {
  std::string s(pipeline_name(k));
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

// ------------------------------------------------------------------ synth

inline void run_synth(const fs::path& out, const SynthConfig& cfg) {
  generate_dataset(out, cfg);
  std::cout << "wrote " << cfg.train_clips << " training and " << cfg.test_clips << " test clips of " << cfg.frames
            << " frames to " << out.string() << '\n';
}

// ------------------------------------------------------------------ train

struct TrainingPatches {
  std::array<PatchBatch, 3> batches;
  MotionNormalization norm;
};

inline TrainingPatches training_patches(const Split& split, const RunConfig& cfg, const Rng& rng) {
  TrainingPatches t;
  t.norm = compute_motion_normalization(split.flows);
  const PatchSpec app_spec{cfg.appearance.scales, cfg.appearance.stride, cfg.appearance.target, cfg.appearance.target, 1};
  const PatchSpec mot_spec{{cfg.motion.size}, cfg.motion.stride, cfg.motion.size, cfg.motion.size, 2};
  const PatchSpec raw_spec{{cfg.motion.size}, cfg.motion.stride, cfg.motion.size, cfg.motion.size, 1};

  Rng app_rng = rng.fork(1);
  t.batches[0] = extract_appearance_patches(split.clips, app_spec, app_rng, cfg.appearance.sample_cap);
  Rng mot_rng = rng.fork(2);
  detail::warn_degenerate(t.norm);
  const auto origins = subsample_origins(motion_windows(split.flows, mot_spec), cfg.motion.sample_cap, mot_rng);
  t.batches[1] = motion_patches_at(split.flows, origins, mot_spec, t.norm);
  t.batches[2] = fuse_early(appearance_patches_at(split.clips, origins, raw_spec), t.batches[1]);
  return t;
}

struct TrainedBundle {
  PipelineModels models;
  double eta = 0.0;
  std::array<Matrix, 3> svm_features;  ///< features each one-class SVM was fitted on
};

inline void log_trace(PipelineKind k, const TrainingTrace& tr) {
  for (std::size_t l = 0; l < tr.pretrain.size(); ++l) {
    log_info(std::string(pipeline_name(k)) + " layer " + std::to_string(l + 1) + " pretraining objective: " +
             join(tr.pretrain[l], 6));
  }
  log_info(std::string(pipeline_name(k)) + " fine-tuning objective: " + join(tr.finetune, 6));
}

inline TrainedBundle train_pipeline(const Split& split, const RunConfig& cfg) {
  const Rng rng(cfg.seed);
  Stopwatch clock;
  const auto patches = training_patches(split, cfg, rng);
  log_info("motion normalization: u in [" + textio::format_double(patches.norm.u.min) + ", " +
           textio::format_double(patches.norm.u.max) + "], v in [" + textio::format_double(patches.norm.v.min) + ", " +
           textio::format_double(patches.norm.v.max) + "]");

  TrainedBundle out;
  std::array<Matrix, 3> features;
  for (std::size_t k = 0; k < 3; ++k) {
    const auto kind = kAllPipelines[k];
    const auto& batch = patches.batches[k];
    log_info(std::string(pipeline_name(kind)) + ": " + std::to_string(batch.size()) + " training patches of dim " +
             std::to_string(batch.dim));
    Rng sdae_rng = rng.fork(10 + k);
    SdaeConfig sc = cfg.sdae[k];
    sc.seed = sdae_rng.seed();
    out.models.sdae[k] = stack_and_finetune(batch, sc, sdae_rng);
    log_trace(kind, out.models.sdae[k].trace);
    log_info(std::string(pipeline_name(kind)) + " autoencoder trained (" + fmt(clock.seconds(), 1) + " s elapsed)");
    features[k] = encode_batch(out.models.sdae[k], batch.vectors);
  }

  std::array<std::vector<double>, 3> train_scores;
  for (std::size_t k = 0; k < 3; ++k) {
    const auto kind = kAllPipelines[k];
    out.svm_features[k] = select_rows(features[k], cfg.ocsvm[k].train_cap, rng.fork(20 + k));
    OcsvmConfig svm = cfg.ocsvm[k].svm;
    if (cfg.ocsvm[k].sigma_from_median) {
      Rng sigma_rng = rng.fork(30 + k);
      svm.rbf_sigma = median_heuristic_sigma(out.svm_features[k], sigma_rng);
    }
    OcsvmTrainInfo info;
    out.models.ocsvm[k] = train_ocsvm(out.svm_features[k], kind, svm, &info);
    const auto& m = out.models.ocsvm[k];
    for (double d : info.decision) train_scores[k].push_back(m.rho - d);
    log_info(std::string(pipeline_name(kind)) + " one-class SVM: nu " + textio::format_double(svm.nu) + ", sigma " +
             textio::format_double(svm.rbf_sigma) + ", " + std::to_string(m.support_vectors.rows()) + " of " +
             std::to_string(m.n_train) + " samples are support vectors, rho " + textio::format_double(m.rho) + ", " +
             std::to_string(info.iterations) + " SMO steps");
  }

  std::array<Matrix, 3> columns;
  for (std::size_t k = 0; k < 3; ++k) columns[k] = transpose(out.svm_features[k]);
  FusionOptions fo{cfg.fusion.subspace_dim, cfg.fusion.lambda_s, cfg.fusion.trace_normalization};
  out.models.weights = learn_weights(columns, fo);
  out.models.weights.calibration = cfg.fusion.calibration;
  for (std::size_t k = 0; k < 3; ++k) fit_calibration(out.models.weights, k, train_scores[k]);
  const auto& w = out.models.weights;
  log_info("fusion costs " + join({w.costs[0], w.costs[1], w.costs[2]}, 6) + ", alpha " +
           join({w.alpha[0], w.alpha[1], w.alpha[2]}, 6));
  out.models.validate();

  if (cfg.threshold.eta) {
    out.eta = *cfg.threshold.eta;
    log_info("decision threshold eta " + textio::format_double(out.eta) + " (configured)");
  } else {
    std::vector<double> frame_max;
    for (std::size_t c = 0; c < split.clips.size(); ++c) {
      for (const auto& m : score_sequence(split.clips[c], split.flows[c].fields, out.models, cfg.test_grid))
        frame_max.push_back(m.max_score());
    }
    out.eta = percentile(frame_max, cfg.threshold.percentile);
    log_info("decision threshold eta " + textio::format_double(out.eta) + " (" +
             textio::format_double(cfg.threshold.percentile) + "th percentile of " + std::to_string(frame_max.size()) +
             " training frame scores)");
  }
  log_info("training finished in " + fmt(clock.seconds(), 1) + " s");
  return out;
}

inline void save_bundle(const fs::path& dir, const TrainedBundle& b, const RunConfig& cfg) {
  ensure_dir(dir);
  for (std::size_t k = 0; k < 3; ++k) {
    const auto name = lower_name(kAllPipelines[k]);
    save_sdae(dir / ("sdae_" + name + ".model"), b.models.sdae[k]);
    save_ocsvm(dir / ("ocsvm_" + name + ".model"), b.models.ocsvm[k]);
    save_matrix(dir / ("ocsvm_" + name + ".features"), b.svm_features[k]);
  }
  save_fusion(dir / "fusion.model", b.models.weights);
  RunConfig resolved = cfg;
  resolved.threshold.eta = b.eta;
  write_text(dir / "run_config.json", to_json(resolved).dump(2) + "\n");
}

inline PipelineModels load_models(const fs::path& dir) {
  PipelineModels m;
  for (std::size_t k = 0; k < 3; ++k) {
    const auto name = lower_name(kAllPipelines[k]);
    m.sdae[k] = load_sdae(dir / ("sdae_" + name + ".model"));
    m.ocsvm[k] = load_ocsvm(dir / ("ocsvm_" + name + ".model"));
  }
  m.weights = load_fusion(dir / "fusion.model");
  m.validate();
  return m;
}

inline RunConfig load_bundle_config(const fs::path& dir) {
  return load_run_config(dir / "run_config.json");
}

inline void run_train(const fs::path& data_root, const fs::path& bundle_dir, RunConfig cfg) {
  cfg.dataset_root = data_root.string();
  cfg.output_dir = bundle_dir.string();
  cfg.validate();
  ensure_dir(bundle_dir);
  LogTee tee(bundle_dir / "train.log");
  log_info("run configuration:\n" + to_json(cfg).dump(2));
  const auto split = load_split(data_root, cfg.flow);
  const auto bundle = train_pipeline(split, cfg);
  save_bundle(bundle_dir, bundle, cfg);
  const auto& a = bundle.models.weights.alpha;
  std::cout << "alpha " << fmt(a[0], 3) << ' ' << fmt(a[1], 3) << ' ' << fmt(a[2], 3) << '\n';
}

// ------------------------------------------------------------------ score

struct ScoreOptions {
  std::optional<FlowSource> flow;
  std::optional<double> eta;
  bool masks = false;
};

inline void run_score(const fs::path& bundle_dir, const fs::path& data_root, const fs::path& out_dir,
                      const ScoreOptions& opts) {
  auto cfg = load_bundle_config(bundle_dir);
  if (opts.flow) cfg.flow.source = *opts.flow;
  const auto models = load_models(bundle_dir);
  const double eta = opts.eta ? *opts.eta : cfg.threshold.eta.value_or(0.0);
  ensure_dir(out_dir);
  const auto split = load_split(data_root, cfg.flow);

  nlohmann::json meta = {{"eta", eta},
                         {"patch", cfg.test_grid.patch},
                         {"stride", cfg.test_grid.stride},
                         {"clips", nlohmann::json::array()}};
  std::size_t flagged = 0, total = 0;
  for (std::size_t c = 0; c < split.clips.size(); ++c) {
    const auto& seq = split.clips[c];
    const auto dir = out_dir / seq.clip_id;
    ensure_dir(dir);
    auto res = decide(score_sequence(seq, split.flows[c].fields, models, cfg.test_grid), eta);
    write_patch_scores(dir / "patch_scores.csv", res.score_maps);
    write_pipeline_scores(dir / "pipeline_scores.csv", res.score_maps);
    write_frame_scores(dir / "frame_scores.csv", res);
    if (opts.masks) {
      ensure_dir(dir / "masks");
      for (std::size_t i = 0; i < res.pixel_masks.size(); ++i) {
        GrayImage m = res.pixel_masks[i];
        for (auto& p : m.pixels) p = p ? 255 : 0;
        write_pgm(dir / "masks" / mask_filename(res.score_maps[i].frame_index), m);
      }
    }
    for (auto f : res.frame_flags) flagged += f;
    total += res.frame_flags.size();
    meta["clips"].push_back({{"id", seq.clip_id}, {"width", seq.width}, {"height", seq.height}, {"frames", seq.frames.size()}});
  }
  write_text(out_dir / "scores.json", meta.dump(2) + "\n");
  if (cfg.threshold.sweep_steps > 0) {
    std::vector<double> grid;
    const double lo = cfg.threshold.sweep_min, hi = cfg.threshold.sweep_max;
    for (std::size_t i = 0; i < cfg.threshold.sweep_steps; ++i)
      grid.push_back(lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(cfg.threshold.sweep_steps - 1));
    write_text(out_dir / "sweep.json", nlohmann::json(grid).dump() + "\n");
  }
  {
    const auto& a = models.weights.alpha;
    std::ostringstream os;
    os << "pipeline,alpha\nA," << textio::format_double(a[0]) << "\nM," << textio::format_double(a[1]) << "\nJ,"
       << textio::format_double(a[2]) << '\n';
    write_text(out_dir / "alpha.csv", os.str());
  }
  std::cout << "scored " << total << " frames in " << split.clips.size() << " clips, " << flagged
            << " flagged at eta " << fmt(eta, 4) << '\n';
}

// ------------------------------------------------------------------- eval

namespace detail {

inline std::vector<std::vector<std::string>> read_csv(const fs::path& p, std::size_t columns) {
  std::ifstream in(p);
  if (!in) throw IoError("cannot open " + p.string());
  std::vector<std::vector<std::string>> rows;
  std::string line;
  std::getline(in, line);  // header
  std::size_t n = 1;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != columns) throw FormatError(p.string() + ":" + std::to_string(n) + ": expected " + std::to_string(columns) + " columns");
    rows.push_back(std::move(cells));
  }
  return rows;
}

/// Rebuilds score maps of one clip from patch_scores.csv and pipeline_scores.csv.
inline std::vector<ScoreMap> read_score_maps(const fs::path& dir, const std::string& clip, std::size_t width,
                                             std::size_t height, std::size_t patch, std::size_t stride) {
  const std::size_t rows = grid_extent(height, patch, stride), cols = grid_extent(width, patch, stride);
  std::map<std::size_t, ScoreMap> maps;
  auto map_for = [&](std::size_t f) -> ScoreMap& {
    auto it = maps.find(f);
    if (it == maps.end()) {
      ScoreMap m{clip, f, width, height, rows, cols, stride, patch, Matrix(rows, cols), {}};
      for (auto& p : m.pipelines) p = Matrix(rows, cols);
      it = maps.emplace(f, std::move(m)).first;
    }
    return it->second;
  };
  auto cell = [&](const std::vector<std::string>& r, const fs::path& p) {
    const auto f = textio::parse_int<std::size_t>(r[0]);
    const auto row = textio::parse_int<std::size_t>(r[1]);
    const auto col = textio::parse_int<std::size_t>(r[2]);
    if (row >= rows || col >= cols) throw FormatError(p.string() + ": grid cell out of range");
    return std::tuple{f, row, col};
  };
  const auto fused = dir / "patch_scores.csv";
  for (const auto& r : read_csv(fused, 4)) {
    const auto [f, row, col] = cell(r, fused);
    map_for(f).scores(row, col) = textio::parse_double(r[3]);
  }
  const auto per = dir / "pipeline_scores.csv";
  for (const auto& r : read_csv(per, 6)) {
    const auto [f, row, col] = cell(r, per);
    for (std::size_t k = 0; k < 3; ++k) map_for(f).pipelines[k](row, col) = textio::parse_double(r[3 + k]);
  }
  std::vector<ScoreMap> out;
  for (auto& [_, m] : maps) out.push_back(std::move(m));
  return out;
}

inline double max_of(const Matrix& m) { return *std::max_element(m.data().begin(), m.data().end()); }

inline nlohmann::json roc_json(const RocCurve& r) { return {{"auc", r.auc}, {"eer", r.eer}}; }

}  // namespace detail

/// ROC with an explicit threshold grid instead of every distinct score.
inline RocCurve roc_at_thresholds(std::span<const double> scores, std::span<const std::uint8_t> labels,
                                  std::vector<double> thresholds) {
  detail::require_binary_labels(scores, labels, "roc_at_thresholds");
  std::sort(thresholds.begin(), thresholds.end(), std::greater<>());
  const auto pos = static_cast<double>(std::count(labels.begin(), labels.end(), std::uint8_t{1}));
  const auto neg = static_cast<double>(labels.size()) - pos;
  RocCurve roc;
  roc.points.push_back({0.0, 0.0, std::numeric_limits<double>::infinity()});
  for (double t : thresholds) {
    double tp = 0, fp = 0;
    for (std::size_t i = 0; i < scores.size(); ++i)
      if (scores[i] >= t) (labels[i] ? tp : fp) += 1;
    roc.points.push_back({fp / neg, tp / pos, t});
  }
  roc.points.push_back({1.0, 1.0, -std::numeric_limits<double>::infinity()});
  roc.auc = trapezoid_auc(roc.points);
  roc.eer = equal_error_rate(roc.points);
  return roc;
}

struct EvalReport {
  RocCurve frame;
  std::array<RocCurve, 3> pipelines;
  std::optional<RocCurve> pixel;
  std::vector<PrPoint> pr;
  std::vector<double> alpha;
  nlohmann::json summary;
};

inline EvalReport evaluate_scores(const fs::path& scores_dir, const fs::path& data_root,
                                  const std::optional<std::vector<double>>& sweep = std::nullopt) {
  const auto meta = nlohmann::json::parse(read_text(scores_dir / "scores.json"));
  const auto patch = meta.at("patch").get<std::size_t>(), stride = meta.at("stride").get<std::size_t>();
  std::vector<double> fused;
  std::array<std::vector<double>, 3> per;
  std::vector<std::uint8_t> labels;
  std::vector<double> loc_scores;
  std::vector<std::uint8_t> loc_labels;
  bool all_masks = true;
  for (const auto& c : meta.at("clips")) {
    const auto id = c.at("id").get<std::string>();
    const auto width = c.at("width").get<std::size_t>(), height = c.at("height").get<std::size_t>();
    const auto n = c.at("frames").get<std::size_t>();
    const auto gt = load_ground_truth(data_root / id / "gt", n);
    const auto maps = detail::read_score_maps(scores_dir / id, id, width, height, patch, stride);
    all_masks = all_masks && gt.pixel_masks.has_value();
    for (const auto& m : maps) {
      if (m.frame_index >= n) throw FormatError(id + ": score for frame " + std::to_string(m.frame_index) + " beyond the clip");
      fused.push_back(m.max_score());
      for (std::size_t k = 0; k < 3; ++k) per[k].push_back(detail::max_of(m.pipelines[k]));
      labels.push_back(gt.frame_labels[m.frame_index]);
      if (gt.pixel_masks) {
        const auto& truth = (*gt.pixel_masks)[m.frame_index];
        loc_scores.push_back(localization_score(m, truth));
        loc_labels.push_back(mask_empty(truth) ? 0 : 1);
      }
    }
  }
  EvalReport rep;
  rep.frame = sweep ? roc_at_thresholds(fused, labels, *sweep) : frame_roc(fused, labels);
  for (std::size_t k = 0; k < 3; ++k) rep.pipelines[k] = frame_roc(per[k], labels);
  if (all_masks && !loc_scores.empty()) rep.pixel = frame_roc(loc_scores, loc_labels);
  rep.pr = precision_recall(fused, labels);

  for (const auto& r : detail::read_csv(scores_dir / "alpha.csv", 2)) rep.alpha.push_back(textio::parse_double(r[1]));
  std::size_t positives = 0;
  for (auto l : labels) positives += l;
  nlohmann::json single = nlohmann::json::object();
  for (std::size_t k = 0; k < 3; ++k) single[lower_name(kAllPipelines[k])] = detail::roc_json(rep.pipelines[k]);
  rep.summary = {{"frame_level", detail::roc_json(rep.frame)},
                 {"pipelines", single},
                 {"pixel_level", rep.pixel ? detail::roc_json(*rep.pixel) : nlohmann::json(nullptr)},
                 {"alpha", rep.alpha},
                 {"eta", meta.at("eta")},
                 {"frames", labels.size()},
                 {"anomalous_frames", positives}};
  return rep;
}

inline void run_eval(const fs::path& scores_dir, const fs::path& data_root, const fs::path& out_dir) {
  std::optional<std::vector<double>> sweep;
  // the eta grid, when configured, travels with the scores via the bundle config
  if (fs::exists(scores_dir / "sweep.json")) {
    sweep = nlohmann::json::parse(read_text(scores_dir / "sweep.json")).get<std::vector<double>>();
  }
  const auto rep = evaluate_scores(scores_dir, data_root, sweep);
  ensure_dir(out_dir);
  write_roc_csv(out_dir / "roc.csv", rep.frame);
  write_roc_dat(out_dir / "roc.dat", rep.frame);
  write_pr_csv(out_dir / "pr.csv", rep.pr);
  if (rep.pixel) write_roc_csv(out_dir / "pixel_roc.csv", *rep.pixel);
  write_text(out_dir / "summary.json", rep.summary.dump(2) + "\n");

  std::cout << "frame-level AUC " << fmt(rep.frame.auc) << "  EER " << fmt(rep.frame.eer) << '\n';
  if (rep.pixel) std::cout << "pixel-level AUC " << fmt(rep.pixel->auc) << "  EER " << fmt(rep.pixel->eer) << '\n';
  for (std::size_t k = 0; k < 3; ++k) {
    std::cout << "  " << pipeline_name(kAllPipelines[k]) << " only: AUC " << fmt(rep.pipelines[k].auc) << "  EER "
              << fmt(rep.pipelines[k].eer) << '\n';
  }
  std::cout << "alpha";
  for (double a : rep.alpha) std::cout << ' ' << fmt(a, 3);
  std::cout << '\n';
}

// ---------------------------------------------------------------- nu-grid

/// Refits each pipeline's one-class SVM on the stored training features for
/// every nu and reports support-vector counts, the training outlier
/// fraction and, with a labelled test split, the single-pipeline AUC.
inline void run_nu_grid(const fs::path& bundle_dir, const std::optional<fs::path>& test_root,
                        const std::vector<double>& nus, const fs::path& out_csv) {
  const auto cfg = load_bundle_config(bundle_dir);
  const auto models = load_models(bundle_dir);
  std::array<Matrix, 3> train;
  for (std::size_t k = 0; k < 3; ++k) train[k] = load_matrix(bundle_dir / ("ocsvm_" + lower_name(kAllPipelines[k]) + ".features"));

  // per test frame: grid features of every pipeline
  std::vector<GridFeatures> test_feats;
  std::vector<std::uint8_t> labels;
  if (test_root) {
    const auto split = load_split(*test_root, cfg.flow);
    for (std::size_t c = 0; c < split.clips.size(); ++c) {
      const auto gt = load_ground_truth(split.dirs[c] / "gt", split.clips[c].frames.size());
      for (std::size_t f = 0; f < split.clips[c].frames.size(); ++f) {
        test_feats.push_back(grid_features(split.clips[c].frames[f], split.flows[c].fields[f], models, cfg.test_grid));
        labels.push_back(gt.frame_labels[f]);
      }
    }
  }
  std::ostringstream csv;
  csv << "pipeline,nu,support_vectors,sv_fraction,train_outlier_fraction,test_auc\n";
  std::cout << "pipeline  nu      SVs   SV frac  outlier frac  test AUC\n";
  for (std::size_t k = 0; k < 3; ++k) {
    for (double nu : nus) {
      OcsvmConfig sc = models.ocsvm[k].config;
      sc.nu = nu;
      OcsvmTrainInfo info;
      const auto m = train_ocsvm(train[k], kAllPipelines[k], sc, &info);
      std::size_t outliers = 0;
      for (double d : info.decision) outliers += (m.rho - d) > sc.tolerance ? 1 : 0;
      const double n = static_cast<double>(m.n_train);
      std::optional<double> auc;
      if (!test_feats.empty()) {
        std::vector<double> scores;
        for (const auto& g : test_feats) {
          double best = -std::numeric_limits<double>::infinity();
          for (std::size_t i = 0; i < g.features[k].rows(); ++i) best = std::max(best, score_raw(m, g.features[k].row(i)));
          scores.push_back(best);
        }
        auc = frame_roc(scores, labels).auc;
      }
      const double svf = static_cast<double>(m.support_vectors.rows()) / n, of = static_cast<double>(outliers) / n;
      csv << pipeline_tag(kAllPipelines[k]) << ',' << textio::format_double(nu) << ',' << m.support_vectors.rows() << ','
          << textio::format_double(svf) << ',' << textio::format_double(of) << ','
          << (auc ? textio::format_double(*auc) : std::string("")) << '\n';
      char line[128];
      std::snprintf(line, sizeof line, "%-9s %-7.4g %-5zu %-8.4f %-13.4f %s\n", std::string(pipeline_name(kAllPipelines[k])).c_str(),
                    nu, m.support_vectors.rows(), svf, of, auc ? fmt(*auc).c_str() : "-");
      std::cout << line;
    }
  }
  write_text(out_csv, csv.str());
}

}  // namespace amdn
