#pragma once

// Frame-level and pixel-level evaluation.
//
// Convention: at threshold eta a frame is flagged when score >= eta. The
// sweep visits every distinct score (ties flip together), starting from
// the empty detection set at eta = +inf.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <span>
#include <vector>

#include "amdn/detect.hpp"
#include "amdn/error.hpp"
#include "amdn/image.hpp"
#include "amdn/ingest.hpp"
#include "amdn/textio.hpp"

namespace amdn {

inline constexpr double kLocalizationOverlap = 0.4;

struct RocPoint {
  double fpr = 0.0;
  double tpr = 0.0;
  double eta = 0.0;
};

struct RocCurve {
  std::vector<RocPoint> points;
  double auc = 0.0;
  double eer = 0.0;
};

namespace detail {

inline void require_binary_labels(std::span<const double> scores, std::span<const std::uint8_t> labels, const char* who) {
  if (scores.size() != labels.size()) throw ShapeError(std::string(who) + ": scores and labels differ in length");
  std::size_t pos = 0;
  for (auto l : labels) {
    if (l > 1) throw DomainError(std::string(who) + ": labels must be 0 or 1");
    pos += l;
  }
  if (pos == 0 || pos == labels.size()) throw DomainError(std::string(who) + ": both classes must be present");
}

struct SweepStep {
  double eta;
  std::size_t tp;
  std::size_t fp;
};

/// Cumulative (tp, fp) after flagging everything >= each distinct score,
/// visited in decreasing order.
inline std::vector<SweepStep> sweep(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  std::vector<SweepStep> out;
  std::size_t tp = 0, fp = 0;
  for (std::size_t i = 0; i < order.size();) {
    const double eta = scores[order[i]];
    for (; i < order.size() && scores[order[i]] == eta; ++i) (labels[order[i]] ? tp : fp) += 1;
    out.push_back({eta, tp, fp});
  }
  return out;
}

}  // namespace detail

inline double trapezoid_auc(const std::vector<RocPoint>& pts) {
  double a = 0.0;
  for (std::size_t i = 1; i < pts.size(); ++i) a += (pts[i].fpr - pts[i - 1].fpr) * (pts[i].tpr + pts[i - 1].tpr) * 0.5;
  return a;
}

/// Point where FPR = 1 - TPR, linearly interpolated between the two sweep
/// points that bracket the sign change of FPR - (1 - TPR).
inline double equal_error_rate(const std::vector<RocPoint>& pts) {
  auto gap = [](const RocPoint& p) { return p.fpr - (1.0 - p.tpr); };
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const double g1 = gap(pts[i]);
    if (g1 == 0.0) return pts[i].fpr;
    if (i > 0 && g1 > 0.0) {
      const double g0 = gap(pts[i - 1]);
      const double t = g0 / (g0 - g1);
      return pts[i - 1].fpr + t * (pts[i].fpr - pts[i - 1].fpr);
    }
  }
  return pts.empty() ? 0.0 : pts.back().fpr;
}

inline RocCurve frame_roc(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  detail::require_binary_labels(scores, labels, "frame_roc");
  const auto pos = static_cast<double>(std::count(labels.begin(), labels.end(), std::uint8_t{1}));
  const auto neg = static_cast<double>(labels.size()) - pos;
  RocCurve roc;
  roc.points.push_back({0.0, 0.0, std::numeric_limits<double>::infinity()});
  for (const auto& s : detail::sweep(scores, labels)) {
    roc.points.push_back({static_cast<double>(s.fp) / neg, static_cast<double>(s.tp) / pos, s.eta});
  }
  roc.auc = trapezoid_auc(roc.points);
  roc.eer = equal_error_rate(roc.points);
  return roc;
}

struct PrPoint {
  double precision = 0.0;
  double recall = 0.0;
  double eta = 0.0;
};

inline std::vector<PrPoint> precision_recall(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  detail::require_binary_labels(scores, labels, "precision_recall");
  const auto pos = static_cast<double>(std::count(labels.begin(), labels.end(), std::uint8_t{1}));
  std::vector<PrPoint> out;
  for (const auto& s : detail::sweep(scores, labels)) {
    if (s.tp + s.fp == 0) continue;
    out.push_back({static_cast<double>(s.tp) / static_cast<double>(s.tp + s.fp), static_cast<double>(s.tp) / pos, s.eta});
  }
  return out;
}

// ------------------------------------------------------ pixel-level rules

/// Fraction of the ground-truth anomalous pixels covered by the detection.
inline double mask_coverage(const GrayImage& detected, const GrayImage& truth) {
  if (detected.width != truth.width || detected.height != truth.height) throw ShapeError("mask_coverage: size mismatch");
  std::size_t gt = 0, hit = 0;
  for (std::size_t i = 0; i < truth.pixels.size(); ++i) {
    if (!truth.pixels[i]) continue;
    ++gt;
    if (detected.pixels[i]) ++hit;
  }
  return gt == 0 ? 0.0 : static_cast<double>(hit) / static_cast<double>(gt);
}

/// True detection when strictly more than 40% of the annotated region is covered.
inline bool localization_hit(const GrayImage& detected, const GrayImage& truth) {
  return mask_coverage(detected, truth) > kLocalizationOverlap;
}

inline bool mask_empty(const GrayImage& m) {
  return std::all_of(m.pixels.begin(), m.pixels.end(), [](std::uint8_t p) { return p == 0; });
}

struct PixelRates {
  double tpr = 0.0;
  double fpr = 0.0;
};

/// Frame rates under the localization gate: an anomalous frame (non-empty
/// truth mask) is a true positive iff localization_hit; a normal frame is a
/// false positive iff anything is detected in it.
inline PixelRates pixel_rates(std::span<const GrayImage> detected, std::span<const GrayImage> truth) {
  if (detected.size() != truth.size()) throw ShapeError("pixel_rates: mask counts differ");
  std::size_t pos = 0, neg = 0, tp = 0, fp = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (mask_empty(truth[i])) {
      ++neg;
      if (!mask_empty(detected[i])) ++fp;
    } else {
      ++pos;
      if (localization_hit(detected[i], truth[i])) ++tp;
    }
  }
  return {pos ? static_cast<double>(tp) / static_cast<double>(pos) : 0.0,
          neg ? static_cast<double>(fp) / static_cast<double>(neg) : 0.0};
}

namespace detail {
inline std::vector<GrayImage> masks_for(const DetectionResult& result, const GroundTruth& gt, double eta) {
  if (!gt.pixel_masks) throw DomainError("pixel_level_eval: ground truth has no pixel masks");
  const auto& truth = *gt.pixel_masks;
  std::vector<GrayImage> det;
  det.reserve(truth.size());
  for (const auto& t : truth) det.emplace_back(t.width, t.height);
  for (const auto& m : result.score_maps) {
    if (m.frame_index >= det.size()) throw ShapeError("pixel_level_eval: score map beyond ground truth");
    det[m.frame_index] = detection_mask(m, eta);
  }
  return det;
}
}  // namespace detail

/// Rates at threshold eta (patch flagged when its score > eta). Frames
/// without a score map count as having no detection.
inline PixelRates pixel_level_eval(const DetectionResult& result, const GroundTruth& gt, double eta) {
  const auto det = detail::masks_for(result, gt, eta);
  return pixel_rates(det, *gt.pixel_masks);
}

/// Score at which a frame becomes a positive under the localization rule
/// as the threshold is lowered: for a normal frame its highest patch
/// score, for an anomalous frame the patch score at which coverage first
/// exceeds 40% (-inf if it never does).
inline double localization_score(const ScoreMap& m, const GrayImage& truth) {
  if (mask_empty(truth)) return m.max_score();
  std::vector<std::pair<double, std::size_t>> cells;
  for (std::size_t i = 0; i < m.scores.data().size(); ++i) cells.push_back({m.scores.data()[i], i});
  std::sort(cells.begin(), cells.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  std::size_t gt = 0;
  for (auto p : truth.pixels) gt += p ? 1 : 0;
  std::vector<std::uint8_t> covered(truth.pixels.size(), 0);
  std::size_t hit = 0;
  for (std::size_t i = 0; i < cells.size();) {
    const double level = cells[i].first;
    for (; i < cells.size() && cells[i].first == level; ++i) {
      const std::size_t r = cells[i].second / m.grid_cols, c = cells[i].second % m.grid_cols;
      for (std::size_t y = r * m.stride; y < std::min(r * m.stride + m.patch_size, m.height); ++y)
        for (std::size_t x = c * m.stride; x < std::min(c * m.stride + m.patch_size, m.width); ++x) {
          const std::size_t p = y * m.width + x;
          if (!covered[p]) {
            covered[p] = 1;
            if (truth.pixels[p]) ++hit;
          }
        }
    }
    if (static_cast<double>(hit) > kLocalizationOverlap * static_cast<double>(gt)) return level;
  }
  return -std::numeric_limits<double>::infinity();
}

/// Pixel-level ROC: frame_roc over localization scores with labels taken
/// from mask non-emptiness.
inline RocCurve pixel_roc(const std::vector<ScoreMap>& maps, const GroundTruth& gt) {
  if (!gt.pixel_masks) throw DomainError("pixel_roc: ground truth has no pixel masks");
  std::vector<double> scores;
  std::vector<std::uint8_t> labels;
  for (const auto& m : maps) {
    if (m.frame_index >= gt.pixel_masks->size()) throw ShapeError("pixel_roc: score map beyond ground truth");
    const auto& truth = (*gt.pixel_masks)[m.frame_index];
    scores.push_back(localization_score(m, truth));
    labels.push_back(mask_empty(truth) ? 0 : 1);
  }
  return frame_roc(scores, labels);
}

// ---------------------------------------------------------------- output

inline void write_roc_csv(const std::filesystem::path& path, const RocCurve& roc) {
  auto out = open_output(path);
  out << "fpr,tpr,eta\n";
  for (const auto& p : roc.points)
    out << textio::format_double(p.fpr) << ',' << textio::format_double(p.tpr) << ',' << textio::format_double(p.eta)
        << '\n';
}

/// Two-column gnuplot data: `plot "roc.dat" using 1:2 with lines`.
inline void write_roc_dat(const std::filesystem::path& path, const RocCurve& roc) {
  auto out = open_output(path);
  out << "# fpr tpr  (auc " << textio::format_double(roc.auc) << ", eer " << textio::format_double(roc.eer) << ")\n";
  for (const auto& p : roc.points) out << textio::format_double(p.fpr) << ' ' << textio::format_double(p.tpr) << '\n';
}

inline void write_pr_csv(const std::filesystem::path& path, const std::vector<PrPoint>& pr) {
  auto out = open_output(path);
  out << "precision,recall,eta\n";
  for (const auto& p : pr)
    out << textio::format_double(p.precision) << ',' << textio::format_double(p.recall) << ','
        << textio::format_double(p.eta) << '\n';
}

}  // namespace amdn
