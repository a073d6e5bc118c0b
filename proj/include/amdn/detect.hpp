#pragma once

// Test-time scoring: single-scale sliding windows per frame, three
// bottleneck features per window, three one-class SVM scores, fused score.

#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "amdn/error.hpp"
#include "amdn/fusion.hpp"
#include "amdn/image.hpp"
#include "amdn/ingest.hpp"
#include "amdn/linalg.hpp"
#include "amdn/log.hpp"
#include "amdn/ocsvm.hpp"
#include "amdn/optflow.hpp"
#include "amdn/sdae.hpp"
#include "amdn/textio.hpp"

namespace amdn {

struct PipelineModels {
  std::array<SdaeModel, 3> sdae;    ///< A, M, J
  std::array<OcsvmModel, 3> ocsvm;  ///< A, M, J
  FusionWeights weights;

  const MotionNormalization& motion_norm() const {
    if (!sdae[1].motion_norm) throw DomainError("motion model carries no flow normalization");
    return *sdae[1].motion_norm;
  }

  void validate() const {
    for (std::size_t k = 0; k < 3; ++k) {
      if (sdae[k].kind != kAllPipelines[k] || ocsvm[k].kind != kAllPipelines[k]) {
        throw DomainError("PipelineModels: models are not ordered A, M, J");
      }
      if (sdae[k].bottleneck_dim() != ocsvm[k].dim()) {
        throw ShapeError("PipelineModels: " + std::string(pipeline_name(kAllPipelines[k])) +
                         " bottleneck does not match its one-class SVM");
      }
    }
    weights.validate();
  }
};

/// Test-time window geometry (one scale only).
struct GridSpec {
  std::size_t patch = 15;
  std::size_t stride = 15;
};

struct ScoreMap {
  std::string clip_id;
  std::size_t frame_index = 0;
  std::size_t width = 0;   ///< frame width in pixels
  std::size_t height = 0;  ///< frame height in pixels
  std::size_t grid_rows = 0;
  std::size_t grid_cols = 0;
  std::size_t stride = 15;
  std::size_t patch_size = 15;
  Matrix scores;                    ///< fused, grid_rows x grid_cols
  std::array<Matrix, 3> pipelines;  ///< raw per-pipeline scores, same grid

  double max_score() const {
    double m = -std::numeric_limits<double>::infinity();
    for (double s : scores.data()) m = std::max(m, s);
    return m;
  }
};

inline std::size_t grid_extent(std::size_t size, std::size_t patch, std::size_t stride) {
  return size < patch ? 0 : (size - patch) / stride + 1;
}

/// Bottleneck features of every test window of one frame, per pipeline
/// (one row per window, windows in row-major grid order).
struct GridFeatures {
  std::size_t grid_rows = 0;
  std::size_t grid_cols = 0;
  std::array<Matrix, 3> features;
};

inline GridFeatures grid_features(const GrayImage& frame, const FlowField& flow, const PipelineModels& models,
                                  const GridSpec& grid) {
  if (flow.width != frame.width || flow.height != frame.height) throw ShapeError("score_frame: flow size differs from frame");
  GridFeatures out;
  out.grid_rows = grid_extent(frame.height, grid.patch, grid.stride);
  out.grid_cols = grid_extent(frame.width, grid.patch, grid.stride);
  if (out.grid_rows == 0 || out.grid_cols == 0) throw DomainError("score_frame: frame smaller than the test patch");

  const std::size_t scales[] = {grid.patch};
  const auto origins = enumerate_windows("", 1, frame.width, frame.height, scales, grid.stride);
  const FrameSequence seq{"", frame.width, frame.height, {frame}};
  const FlowSequence fseq{"", {flow}};
  const std::span<const FrameSequence> clips(&seq, 1);

  // appearance windows are warped to the size the appearance model was trained on
  const auto side = static_cast<std::size_t>(std::lround(std::sqrt(static_cast<double>(models.sdae[0].input_dim))));
  if (side * side != models.sdae[0].input_dim) throw ShapeError("score_frame: appearance model input is not square");
  const PatchSpec app_spec{{grid.patch}, grid.stride, side, side, 1};
  const PatchSpec raw_spec{{grid.patch}, grid.stride, grid.patch, grid.patch, 1};
  const PatchSpec mot_spec{{grid.patch}, grid.stride, grid.patch, grid.patch, 2};

  const auto app = appearance_patches_at(clips, origins, app_spec);
  const auto mot = motion_patches_at(std::span<const FlowSequence>(&fseq, 1), origins, mot_spec, models.motion_norm());
  const auto joint = fuse_early(side == grid.patch ? app : appearance_patches_at(clips, origins, raw_spec), mot);
  const std::array<const PatchBatch*, 3> batches{&app, &mot, &joint};
  for (std::size_t k = 0; k < 3; ++k) {
    if (batches[k]->dim != models.sdae[k].input_dim) {
      throw ShapeError("score_frame: " + std::string(pipeline_name(kAllPipelines[k])) + " patch dim " +
                       std::to_string(batches[k]->dim) + " does not match model input " +
                       std::to_string(models.sdae[k].input_dim));
    }
    out.features[k] = encode_batch(models.sdae[k], batches[k]->vectors);
  }
  return out;
}

inline ScoreMap score_frame(const GrayImage& frame, const FlowField& flow, const PipelineModels& models,
                            const GridSpec& grid, const std::string& clip_id = "", std::size_t frame_index = 0) {
  const auto gf = grid_features(frame, flow, models, grid);
  const std::size_t rows = gf.grid_rows, cols = gf.grid_cols;
  ScoreMap map{clip_id, frame_index, frame.width, frame.height, rows, cols, grid.stride, grid.patch,
               Matrix(rows, cols), {}};
  for (std::size_t k = 0; k < 3; ++k) {
    map.pipelines[k] = Matrix(rows, cols);
    for (std::size_t i = 0; i < rows * cols; ++i) map.pipelines[k].data()[i] = score_raw(models.ocsvm[k], gf.features[k].row(i));
  }
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c)
      map.scores(r, c) = fused_score(models.weights, {map.pipelines[0](r, c), map.pipelines[1](r, c), map.pipelines[2](r, c)});
  return map;
}

/// Scores every frame that has a flow field; frames beyond the flow list
/// are skipped with a warning.
inline std::vector<ScoreMap> score_sequence(const FrameSequence& seq, const std::vector<FlowField>& flows,
                                            const PipelineModels& models, const GridSpec& grid) {
  std::vector<ScoreMap> maps;
  maps.reserve(seq.frames.size());
  for (std::size_t f = 0; f < seq.frames.size(); ++f) {
    if (f >= flows.size()) {
      log_warning("clip '" + seq.clip_id + "': no flow for frame " + std::to_string(f) + ", skipped");
      continue;
    }
    maps.push_back(score_frame(seq.frames[f], flows[f], models, grid, seq.clip_id, f));
  }
  return maps;
}

struct DetectionResult {
  std::vector<ScoreMap> score_maps;
  std::vector<double> frame_scores;
  double threshold = 0.0;
  std::vector<std::uint8_t> frame_flags;
  std::vector<GrayImage> pixel_masks;  ///< 0/1, frame-sized
};

/// Paints the footprint of every patch scoring above eta.
inline GrayImage detection_mask(const ScoreMap& m, double eta) {
  GrayImage mask(m.width, m.height);
  for (std::size_t r = 0; r < m.grid_rows; ++r) {
    for (std::size_t c = 0; c < m.grid_cols; ++c) {
      if (!(m.scores(r, c) > eta)) continue;
      for (std::size_t y = r * m.stride; y < std::min(r * m.stride + m.patch_size, m.height); ++y)
        for (std::size_t x = c * m.stride; x < std::min(c * m.stride + m.patch_size, m.width); ++x)
          mask.pixels[y * m.width + x] = 1;
    }
  }
  return mask;
}

inline DetectionResult decide(std::vector<ScoreMap> maps, double eta) {
  DetectionResult res;
  res.threshold = eta;
  for (const auto& m : maps) {
    const double s = m.max_score();
    res.frame_scores.push_back(s);
    res.frame_flags.push_back(s > eta ? 1 : 0);
    res.pixel_masks.push_back(detection_mask(m, eta));
  }
  res.score_maps = std::move(maps);
  return res;
}

// ------------------------------------------------------------- CSV output

inline std::ofstream open_output(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  return out;
}

/// Rows `frame_index,row,col,score`.
inline void write_patch_scores(const std::filesystem::path& path, const std::vector<ScoreMap>& maps) {
  auto out = open_output(path);
  out << "frame_index,row,col,score\n";
  for (const auto& m : maps)
    for (std::size_t r = 0; r < m.grid_rows; ++r)
      for (std::size_t c = 0; c < m.grid_cols; ++c)
        out << m.frame_index << ',' << r << ',' << c << ',' << textio::format_double(m.scores(r, c)) << '\n';
}

/// Rows `frame_index,row,col,A,M,J` with the raw per-pipeline scores.
inline void write_pipeline_scores(const std::filesystem::path& path, const std::vector<ScoreMap>& maps) {
  auto out = open_output(path);
  out << "frame_index,row,col,A,M,J\n";
  for (const auto& m : maps)
    for (std::size_t r = 0; r < m.grid_rows; ++r)
      for (std::size_t c = 0; c < m.grid_cols; ++c) {
        out << m.frame_index << ',' << r << ',' << c;
        for (const auto& p : m.pipelines) out << ',' << textio::format_double(p(r, c));
        out << '\n';
      }
}

/// Rows `frame_index,score,flag`.
inline void write_frame_scores(const std::filesystem::path& path, const DetectionResult& res) {
  auto out = open_output(path);
  out << "frame_index,score,flag\n";
  for (std::size_t i = 0; i < res.score_maps.size(); ++i) {
    out << res.score_maps[i].frame_index << ',' << textio::format_double(res.frame_scores[i]) << ','
        << int(res.frame_flags[i]) << '\n';
  }
}

}  // namespace amdn
