#pragma once

// Frame/ground-truth loading from the on-disk dataset layout and
// sliding-window patch extraction for the appearance, motion and joint
// pipelines.
//
// Layout:
//   <root>/<clip_id>/frames/frame_%06d.pgm
//   <root>/<clip_id>/gt/frame_labels.csv        rows: frame_index,label
//   <root>/<clip_id>/gt/mask_%06d.pgm           optional, 0 normal / 255 anomalous

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "amdn/error.hpp"
#include "amdn/image.hpp"
#include "amdn/linalg.hpp"
#include "amdn/log.hpp"
#include "amdn/optflow.hpp"

namespace amdn {

enum class PipelineKind { Appearance = 0, Motion = 1, Joint = 2 };

inline constexpr std::array<PipelineKind, 3> kAllPipelines = {PipelineKind::Appearance, PipelineKind::Motion,
                                                               PipelineKind::Joint};

inline std::string_view pipeline_tag(PipelineKind k) {
  switch (k) {
    case PipelineKind::Appearance: return "A";
    case PipelineKind::Motion: return "M";
    case PipelineKind::Joint: return "J";
  }
  return "?";
}

inline std::string_view pipeline_name(PipelineKind k) {
  switch (k) {
    case PipelineKind::Appearance: return "appearance";
    case PipelineKind::Motion: return "motion";
    case PipelineKind::Joint: return "joint";
  }
  return "?";
}

inline PipelineKind parse_pipeline_tag(std::string_view s) {
  for (auto k : kAllPipelines)
    if (s == pipeline_tag(k) || s == pipeline_name(k)) return k;
  throw FormatError("unknown pipeline tag '" + std::string(s) + "'");
}

struct FrameSequence {
  std::string clip_id;
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<GrayImage> frames;

  void validate() const {
    if (frames.size() < 2) throw LayoutError("clip '" + clip_id + "': at least two frames required");
    for (const auto& f : frames) {
      if (f.width != width || f.height != height) throw FormatError("clip '" + clip_id + "': frame size mismatch");
    }
  }
};

struct FlowSequence {
  std::string clip_id;
  std::vector<FlowField> fields;  ///< one per frame
};

/// Sliding-window geometry. `stride` is the window step in pixels; each
/// window of side `scale` is warped to target_w x target_h.
struct PatchSpec {
  std::vector<std::size_t> scales{15};
  std::size_t stride = 15;
  std::size_t target_w = 15;
  std::size_t target_h = 15;
  std::size_t channels = 1;

  std::size_t dim() const { return target_w * target_h * channels; }

  void validate() const {
    if (stride < 1) throw DomainError("PatchSpec: stride must be >= 1");
    if (target_w < 1 || target_h < 1) throw DomainError("PatchSpec: empty target size");
    if (channels < 1 || channels > 3) throw DomainError("PatchSpec: channels must be 1, 2 or 3");
    for (auto s : scales)
      if (s < 1) throw DomainError("PatchSpec: zero scale");
  }
};

struct PatchOrigin {
  std::string clip_id;
  std::size_t frame_index = 0;
  std::size_t x = 0;
  std::size_t y = 0;
  std::size_t scale = 0;

  bool operator==(const PatchOrigin&) const = default;
};

struct ChannelRange {
  double min = 0.0;
  double max = 0.0;

  bool degenerate() const { return !(max > min); }
  bool operator==(const ChannelRange&) const = default;
};

/// Corpus-wide flow bounds used to map each flow channel to [0, 1].
struct MotionNormalization {
  ChannelRange u;
  ChannelRange v;

  bool operator==(const MotionNormalization&) const = default;
};

struct PatchBatch {
  PipelineKind kind = PipelineKind::Appearance;
  std::size_t dim = 0;
  Matrix vectors;  ///< one patch per row
  std::vector<PatchOrigin> origins;
  std::optional<MotionNormalization> motion_norm;

  std::size_t size() const { return vectors.rows(); }

  void validate() const {
    if (vectors.cols() != dim) throw ShapeError("PatchBatch: dim does not match vector width");
    if (origins.size() != vectors.rows()) throw ShapeError("PatchBatch: origins do not match row count");
  }
};

struct GroundTruth {
  std::vector<std::uint8_t> frame_labels;
  /// Binary (0/1) masks, one per frame, when the clip provides them.
  std::optional<std::vector<GrayImage>> pixel_masks;
};

// ---------------------------------------------------------------- loading

namespace detail {

/// Parses names like `<prefix>NNNNNN.pgm`; returns the index or nullopt.
inline std::optional<std::size_t> indexed_name(std::string_view name, std::string_view prefix) {
  constexpr std::string_view ext = ".pgm";
  if (name.size() != prefix.size() + 6 + ext.size()) return std::nullopt;
  if (name.substr(0, prefix.size()) != prefix || name.substr(name.size() - ext.size()) != ext) return std::nullopt;
  const auto digits = name.substr(prefix.size(), 6);
  std::size_t value = 0;
  auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), value);
  if (ec != std::errc{} || ptr != digits.data() + digits.size()) return std::nullopt;
  return value;
}

inline std::vector<std::size_t> scan_indices(const std::filesystem::path& dir, std::string_view prefix) {
  std::vector<std::size_t> idx;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (auto i = indexed_name(entry.path().filename().string(), prefix)) idx.push_back(*i);
  }
  std::sort(idx.begin(), idx.end());
  return idx;
}

inline void require_contiguous(const std::vector<std::size_t>& idx, const std::filesystem::path& dir,
                               std::string_view what) {
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] != i) {
      throw LayoutError(dir.string() + ": missing " + std::string(what) + " index " + std::to_string(i));
    }
  }
}

inline std::string indexed_filename(std::string_view prefix, std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%06zu", index);
  return std::string(prefix) + buf + ".pgm";
}

}  // namespace detail

inline std::string frame_filename(std::size_t index) { return detail::indexed_filename("frame_", index); }
inline std::string mask_filename(std::size_t index) { return detail::indexed_filename("mask_", index); }

/// Loads `frame_%06d.pgm` files from `dir`, starting at index 0. The clip id
/// is the directory name, or its parent's name when the directory is the
/// layout's `frames/` folder.
inline FrameSequence load_sequence(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw LayoutError(dir.string() + ": not a directory");
  const auto idx = detail::scan_indices(dir, "frame_");
  if (idx.empty()) throw LayoutError(dir.string() + ": no frames found");
  detail::require_contiguous(idx, dir, "frame");

  FrameSequence seq;
  const auto canon = std::filesystem::weakly_canonical(dir);
  seq.clip_id = canon.filename() == "frames" ? canon.parent_path().filename().string() : canon.filename().string();
  for (std::size_t i = 0; i < idx.size(); ++i) seq.frames.push_back(read_pgm(dir / frame_filename(i)));
  seq.width = seq.frames.front().width;
  seq.height = seq.frames.front().height;
  for (std::size_t i = 0; i < seq.frames.size(); ++i) {
    if (seq.frames[i].width != seq.width || seq.frames[i].height != seq.height) {
      throw FormatError(dir.string() + ": frame " + std::to_string(i) + " has wrong dimensions");
    }
  }
  seq.validate();
  return seq;
}

/// Reads `frame_labels.csv` and any `mask_%06d.pgm` files from a ground-truth
/// directory. Masks are binarized at 128.
inline GroundTruth load_ground_truth(const std::filesystem::path& dir, std::size_t n_frames) {
  const auto csv = dir / "frame_labels.csv";
  std::ifstream in(csv);
  if (!in) throw LayoutError(csv.string() + ": missing");
  GroundTruth gt;
  gt.frame_labels.assign(n_frames, 0);
  std::vector<bool> seen(n_frames, false);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line_no == 1 && line.rfind("frame_index", 0) == 0) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw FormatError(csv.string() + ":" + std::to_string(line_no) + ": expected frame_index,label");
    std::size_t index = 0;
    long label = 0;
    const auto* b = line.data();
    auto r1 = std::from_chars(b, b + comma, index);
    auto r2 = std::from_chars(b + comma + 1, b + line.size(), label);
    if (r1.ec != std::errc{} || r1.ptr != b + comma || r2.ec != std::errc{} || r2.ptr != b + line.size()) {
      throw FormatError(csv.string() + ":" + std::to_string(line_no) + ": malformed row '" + line + "'");
    }
    if (label != 0 && label != 1) {
      throw FormatError(csv.string() + ":" + std::to_string(line_no) + ": label " + std::to_string(label) + " not in {0,1}");
    }
    if (index >= n_frames) throw FormatError(csv.string() + ": frame index " + std::to_string(index) + " out of range");
    if (seen[index]) throw FormatError(csv.string() + ": duplicate frame index " + std::to_string(index));
    seen[index] = true;
    gt.frame_labels[index] = static_cast<std::uint8_t>(label);
  }
  for (std::size_t i = 0; i < n_frames; ++i)
    if (!seen[i]) throw LayoutError(csv.string() + ": no label for frame " + std::to_string(i));

  if (std::filesystem::is_directory(dir)) {
    const auto idx = detail::scan_indices(dir, "mask_");
    if (!idx.empty()) {
      detail::require_contiguous(idx, dir, "mask");
      if (idx.size() != n_frames) throw LayoutError(dir.string() + ": expected " + std::to_string(n_frames) + " masks");
      std::vector<GrayImage> masks;
      masks.reserve(n_frames);
      for (std::size_t i = 0; i < n_frames; ++i) {
        GrayImage m = read_pgm(dir / mask_filename(i));
        for (auto& p : m.pixels) p = p >= 128 ? 1 : 0;
        masks.push_back(std::move(m));
      }
      gt.pixel_masks = std::move(masks);
    }
  }
  return gt;
}

/// Sorted clip directory names under a dataset root.
inline std::vector<std::string> list_clips(const std::filesystem::path& root) {
  if (!std::filesystem::is_directory(root)) throw LayoutError(root.string() + ": dataset root not found");
  std::vector<std::string> clips;
  for (const auto& entry : std::filesystem::directory_iterator(root)) {
    if (entry.is_directory() && std::filesystem::is_directory(entry.path() / "frames")) {
      clips.push_back(entry.path().filename().string());
    }
  }
  std::sort(clips.begin(), clips.end());
  if (clips.empty()) throw LayoutError(root.string() + ": no clips (expected <clip>/frames/)");
  return clips;
}

// ------------------------------------------------------------- windowing

/// Number of windows of side `scale` at `stride` in a W x H frame.
inline std::size_t window_count(std::size_t width, std::size_t height, std::size_t scale, std::size_t stride) {
  if (scale > width || scale > height) return 0;
  return ((width - scale) / stride + 1) * ((height - scale) / stride + 1);
}

/// Window origins for every frame and scale, row-major within a frame.
inline std::vector<PatchOrigin> enumerate_windows(const std::string& clip_id, std::size_t n_frames, std::size_t width,
                                                  std::size_t height, std::span<const std::size_t> scales,
                                                  std::size_t stride) {
  if (stride < 1) throw DomainError("enumerate_windows: stride must be >= 1");
  std::vector<PatchOrigin> out;
  for (std::size_t f = 0; f < n_frames; ++f) {
    for (auto s : scales) {
      if (s > width || s > height) continue;
      for (std::size_t y = 0; y + s <= height; y += stride)
        for (std::size_t x = 0; x + s <= width; x += stride) out.push_back({clip_id, f, x, y, s});
    }
  }
  return out;
}

/// Exactly `cap` origins chosen uniformly without replacement (selection
/// sampling, order preserved), or all of them when there are fewer.
inline std::vector<PatchOrigin> subsample_origins(std::vector<PatchOrigin> origins, std::size_t cap, Rng& rng) {
  if (origins.size() <= cap) return origins;
  std::vector<PatchOrigin> out;
  out.reserve(cap);
  std::size_t remaining = origins.size();
  for (auto& o : origins) {
    const std::size_t needed = cap - out.size();
    if (needed == 0) break;
    if (rng.uniform_index(remaining) < needed) out.push_back(std::move(o));
    --remaining;
  }
  return out;
}

namespace detail {

inline void require_appearance_fits(const FrameSequence& seq, const PatchSpec& spec) {
  if (spec.scales.empty()) throw DomainError("appearance patches: no scales given");
  const auto smallest = *std::min_element(spec.scales.begin(), spec.scales.end());
  if (seq.width < smallest || seq.height < smallest) {
    throw DomainError("clip '" + seq.clip_id + "': frame smaller than smallest patch scale");
  }
}

/// Bilinear warp of an s x s window to tw x th, scaled to [0,1]. A window
/// already at target size is copied exactly.
inline void warp_window(const GrayImage& img, std::size_t x0, std::size_t y0, std::size_t s, std::size_t tw,
                        std::size_t th, std::span<double> out) {
  const double sx = static_cast<double>(s) / static_cast<double>(tw);
  const double sy = static_cast<double>(s) / static_cast<double>(th);
  const double last = static_cast<double>(s - 1);
  for (std::size_t ty = 0; ty < th; ++ty) {
    const double fyv = std::clamp((static_cast<double>(ty) + 0.5) * sy - 0.5, 0.0, last);
    const auto iy0 = static_cast<std::size_t>(fyv);
    const std::size_t iy1 = std::min(iy0 + 1, s - 1);
    const double wy = fyv - static_cast<double>(iy0);
    for (std::size_t tx = 0; tx < tw; ++tx) {
      const double fxv = std::clamp((static_cast<double>(tx) + 0.5) * sx - 0.5, 0.0, last);
      const auto ix0 = static_cast<std::size_t>(fxv);
      const std::size_t ix1 = std::min(ix0 + 1, s - 1);
      const double wx = fxv - static_cast<double>(ix0);
      const double p00 = img.at(x0 + ix0, y0 + iy0), p10 = img.at(x0 + ix1, y0 + iy0);
      const double p01 = img.at(x0 + ix0, y0 + iy1), p11 = img.at(x0 + ix1, y0 + iy1);
      const double top = (1.0 - wx) * p00 + wx * p10;
      const double bottom = (1.0 - wx) * p01 + wx * p11;
      out[ty * tw + tx] = std::clamp(((1.0 - wy) * top + wy * bottom) / 255.0, 0.0, 1.0);
    }
  }
}

inline double normalize_channel(double value, const ChannelRange& r) {
  if (r.degenerate()) return 0.5;
  return std::clamp((value - r.min) / (r.max - r.min), 0.0, 1.0);
}

template <typename T>
std::unordered_map<std::string, const T*> index_by_clip(std::span<const T> items) {
  std::unordered_map<std::string, const T*> m;
  for (const auto& it : items) m.emplace(it.clip_id, &it);
  return m;
}

}  // namespace detail

/// Appearance patches at explicit origins (each origin carries its scale).
inline PatchBatch appearance_patches_at(std::span<const FrameSequence> clips, const std::vector<PatchOrigin>& origins,
                                        const PatchSpec& spec) {
  spec.validate();
  if (spec.channels != 1) throw DomainError("appearance patches require channels == 1");
  const auto by_clip = detail::index_by_clip(clips);
  PatchBatch batch;
  batch.kind = PipelineKind::Appearance;
  batch.dim = spec.dim();
  batch.vectors = Matrix(origins.size(), batch.dim);
  batch.origins = origins;
  for (std::size_t i = 0; i < origins.size(); ++i) {
    const auto& o = origins[i];
    auto it = by_clip.find(o.clip_id);
    if (it == by_clip.end()) throw AlignmentError("unknown clip '" + o.clip_id + "'");
    const auto& seq = *it->second;
    if (o.frame_index >= seq.frames.size() || o.x + o.scale > seq.width || o.y + o.scale > seq.height) {
      throw DomainError("appearance patch origin outside clip '" + o.clip_id + "'");
    }
    detail::warp_window(seq.frames[o.frame_index], o.x, o.y, o.scale, spec.target_w, spec.target_h,
                        batch.vectors.row(i));
  }
  return batch;
}

/// Multi-scale appearance patches over one or more clips, uniformly
/// subsampled to at most `sample_cap` rows.
inline PatchBatch extract_appearance_patches(std::span<const FrameSequence> clips, const PatchSpec& spec, Rng& rng,
                                             std::size_t sample_cap) {
  spec.validate();
  if (spec.channels != 1) throw DomainError("appearance patches require channels == 1");
  std::vector<PatchOrigin> origins;
  for (const auto& seq : clips) {
    seq.validate();
    detail::require_appearance_fits(seq, spec);
    auto w = enumerate_windows(seq.clip_id, seq.frames.size(), seq.width, seq.height, spec.scales, spec.stride);
    origins.insert(origins.end(), std::make_move_iterator(w.begin()), std::make_move_iterator(w.end()));
  }
  return appearance_patches_at(clips, subsample_origins(std::move(origins), sample_cap, rng), spec);
}

inline PatchBatch extract_appearance_patches(const FrameSequence& seq, const PatchSpec& spec, Rng& rng,
                                             std::size_t sample_cap) {
  return extract_appearance_patches(std::span<const FrameSequence>(&seq, 1), spec, rng, sample_cap);
}

/// Global min/max of each flow channel over a corpus.
inline MotionNormalization compute_motion_normalization(std::span<const FlowSequence> flows) {
  MotionNormalization n{{std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()},
                        {std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()}};
  bool any = false;
  for (const auto& seq : flows) {
    for (const auto& f : seq.fields) {
      for (double x : f.u.data()) n.u = {std::min(n.u.min, x), std::max(n.u.max, x)};
      for (double x : f.v.data()) n.v = {std::min(n.v.min, x), std::max(n.v.max, x)};
      any = any || !f.u.empty();
    }
  }
  if (!any) throw DomainError("compute_motion_normalization: empty flow corpus");
  return n;
}

namespace detail {
inline std::size_t motion_window(const PatchSpec& spec) {
  spec.validate();
  if (spec.channels != 2) throw DomainError("motion patches require channels == 2");
  if (spec.target_w != spec.target_h) throw DomainError("motion patches require square windows");
  for (auto s : spec.scales)
    if (s != spec.target_w) throw DomainError("motion patches are single-scale (scale must equal target size)");
  return spec.target_w;
}

inline void warn_degenerate(const MotionNormalization& norm) {
  if (norm.u.degenerate()) log_warning("motion normalization: u channel has zero range, mapped to 0.5");
  if (norm.v.degenerate()) log_warning("motion normalization: v channel has zero range, mapped to 0.5");
}
}  // namespace detail

/// Motion patches at explicit origins. Vector layout: u plane then v plane,
/// each row-major, normalized with `norm` and clamped to [0,1].
inline PatchBatch motion_patches_at(std::span<const FlowSequence> flows, const std::vector<PatchOrigin>& origins,
                                    const PatchSpec& spec, const MotionNormalization& norm) {
  const std::size_t s = detail::motion_window(spec);
  const auto by_clip = detail::index_by_clip(flows);
  PatchBatch batch;
  batch.kind = PipelineKind::Motion;
  batch.dim = spec.dim();
  batch.vectors = Matrix(origins.size(), batch.dim);
  batch.origins = origins;
  batch.motion_norm = norm;
  const std::size_t plane = s * s;
  for (std::size_t i = 0; i < origins.size(); ++i) {
    const auto& o = origins[i];
    auto it = by_clip.find(o.clip_id);
    if (it == by_clip.end()) throw AlignmentError("unknown flow clip '" + o.clip_id + "'");
    const auto& fields = it->second->fields;
    if (o.frame_index >= fields.size()) throw DomainError("motion patch origin has no flow field");
    const auto& f = fields[o.frame_index];
    if (o.scale != s || o.x + s > f.width || o.y + s > f.height) throw DomainError("motion patch origin outside flow field");
    auto row = batch.vectors.row(i);
    for (std::size_t y = 0; y < s; ++y) {
      for (std::size_t x = 0; x < s; ++x) {
        row[y * s + x] = detail::normalize_channel(f.u(o.y + y, o.x + x), norm.u);
        row[plane + y * s + x] = detail::normalize_channel(f.v(o.y + y, o.x + x), norm.v);
      }
    }
  }
  return batch;
}

inline std::vector<PatchOrigin> motion_windows(std::span<const FlowSequence> flows, const PatchSpec& spec) {
  const std::size_t s = detail::motion_window(spec);
  const std::size_t scales[] = {s};
  std::vector<PatchOrigin> origins;
  for (const auto& seq : flows) {
    if (seq.fields.empty()) continue;
    auto w = enumerate_windows(seq.clip_id, seq.fields.size(), seq.fields.front().width, seq.fields.front().height,
                               scales, spec.stride);
    origins.insert(origins.end(), std::make_move_iterator(w.begin()), std::make_move_iterator(w.end()));
  }
  return origins;
}

/// Motion patches over a corpus using previously computed bounds.
inline PatchBatch extract_motion_patches(std::span<const FlowSequence> flows, const PatchSpec& spec,
                                         const MotionNormalization& norm) {
  detail::warn_degenerate(norm);
  return motion_patches_at(flows, motion_windows(flows, spec), spec, norm);
}

/// Motion patches over a corpus; bounds are computed from the same corpus
/// and recorded on the batch for reuse at test time.
inline PatchBatch extract_motion_patches(std::span<const FlowSequence> flows, const PatchSpec& spec) {
  return extract_motion_patches(flows, spec, compute_motion_normalization(flows));
}

inline PatchBatch extract_motion_patches(const FlowSequence& flow, const PatchSpec& spec) {
  return extract_motion_patches(std::span<const FlowSequence>(&flow, 1), spec);
}

/// Pixel-level early fusion: per patch, [appearance values | motion values].
inline PatchBatch fuse_early(const PatchBatch& app, const PatchBatch& mot) {
  if (app.kind != PipelineKind::Appearance || mot.kind != PipelineKind::Motion) {
    throw DomainError("fuse_early: expects an appearance batch and a motion batch");
  }
  app.validate();
  mot.validate();
  if (app.origins != mot.origins) throw AlignmentError("fuse_early: appearance and motion origins differ");
  PatchBatch joint;
  joint.kind = PipelineKind::Joint;
  joint.dim = app.dim + mot.dim;
  joint.vectors = Matrix(app.size(), joint.dim);
  joint.origins = app.origins;
  joint.motion_norm = mot.motion_norm;
  for (std::size_t i = 0; i < app.size(); ++i) {
    auto out = joint.vectors.row(i);
    std::copy_n(app.vectors.row(i).begin(), app.dim, out.begin());
    std::copy_n(mot.vectors.row(i).begin(), mot.dim, out.begin() + static_cast<std::ptrdiff_t>(app.dim));
  }
  return joint;
}

/// Inverse of fuse_early.
inline std::pair<PatchBatch, PatchBatch> split_joint(const PatchBatch& joint, std::size_t app_dim) {
  if (joint.kind != PipelineKind::Joint || app_dim >= joint.dim) throw DomainError("split_joint: not a joint batch");
  PatchBatch app{PipelineKind::Appearance, app_dim, Matrix(joint.size(), app_dim), joint.origins, std::nullopt};
  PatchBatch mot{PipelineKind::Motion, joint.dim - app_dim, Matrix(joint.size(), joint.dim - app_dim), joint.origins,
                 joint.motion_norm};
  for (std::size_t i = 0; i < joint.size(); ++i) {
    auto row = joint.vectors.row(i);
    std::copy_n(row.begin(), app_dim, app.vectors.row(i).begin());
    std::copy(row.begin() + static_cast<std::ptrdiff_t>(app_dim), row.end(), mot.vectors.row(i).begin());
  }
  return {std::move(app), std::move(mot)};
}

}  // namespace amdn
