#pragma once

// Late fusion of the three per-pipeline anomaly scores.
//
// For each pipeline k with training features S^k (feature-dim x N):
//   W^k  = top-d eigenvectors of S^k S^k^T (rows)
//   c^k  = -1/(2 lambda_s) * tr(W^k S^k (W^k S^k)^T)
//   alpha = projection of c onto the simplex, with every entry >= eps
// The fused score is sum_k alpha^k A^k.

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <string>
#include <vector>

#include "amdn/error.hpp"
#include "amdn/ingest.hpp"
#include "amdn/linalg.hpp"
#include "amdn/log.hpp"
#include "amdn/textio.hpp"

namespace amdn {

inline constexpr double kSimplexFloor = 1e-6;

/// How raw traces enter the costs. PerEntry divides each trace by N times
/// the feature dimension, so pipelines with different bottleneck widths
/// and sample counts are compared on the same footing.
enum class TraceNormalization { None, PerEntry };

/// Score calibration applied before the weighted sum.
enum class ScoreCalibration { Raw, ZScore };

inline std::string_view to_string(TraceNormalization t) { return t == TraceNormalization::None ? "none" : "per_entry"; }
inline std::string_view to_string(ScoreCalibration c) { return c == ScoreCalibration::Raw ? "raw" : "zscore"; }

inline TraceNormalization parse_trace_normalization(std::string_view s) {
  if (s == "none") return TraceNormalization::None;
  if (s == "per_entry") return TraceNormalization::PerEntry;
  throw ConfigError("unknown trace normalization '" + std::string(s) + "' (none|per_entry)");
}

inline ScoreCalibration parse_score_calibration(std::string_view s) {
  if (s == "raw") return ScoreCalibration::Raw;
  if (s == "zscore") return ScoreCalibration::ZScore;
  throw ConfigError("unknown score calibration '" + std::string(s) + "' (raw|zscore)");
}

struct FusionWeights {
  Vector alpha{1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0};  ///< ordered A, M, J
  std::array<Matrix, 3> subspace_maps;            ///< d x feature-dim, orthonormal rows
  std::size_t subspace_dim = 16;
  double lambda_s = 0.1;
  TraceNormalization trace_normalization = TraceNormalization::PerEntry;
  Vector costs{0.0, 0.0, 0.0};

  ScoreCalibration calibration = ScoreCalibration::ZScore;
  std::array<double, 3> score_mean{0.0, 0.0, 0.0};
  std::array<double, 3> score_std{1.0, 1.0, 1.0};

  void validate() const {
    if (alpha.size() != 3) throw ShapeError("FusionWeights: alpha must have three entries");
    double sum = 0.0;
    for (double a : alpha) {
      if (!(a > 0.0)) throw DomainError("FusionWeights: alpha entries must be positive");
      sum += a;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw DomainError("FusionWeights: alpha must sum to one");
    for (double s : score_std)
      if (!(s > 0.0)) throw DomainError("FusionWeights: calibration std must be positive");
  }
};

/// Top-d eigenvectors of S S^T as rows; S holds one feature per column.
inline Matrix learn_subspace(const Matrix& features, std::size_t d) {
  if (d < 1 || d > features.rows()) throw DomainError("learn_subspace: d must be in [1, feature-dim]");
  const auto eig = sym_eig(matmul_abt(features, features), d);
  for (std::size_t k = 0; k < d; ++k) {
    if (eig.values[k] < 1e-12) {
      log_warning("learn_subspace: S S^T has rank below d = " + std::to_string(d) + " (eigenvalue " +
                  textio::format_double(eig.values[k]) + ")");
      break;
    }
  }
  return eig.vectors;
}

/// tr(W S (W S)^T), i.e. the squared Frobenius norm of W S.
inline double projected_energy(const Matrix& map, const Matrix& features) {
  return frobenius_squared(matmul(map, features));
}

inline Vector fusion_costs(std::span<const Matrix> features, std::span<const Matrix> maps, double lambda_s) {
  if (!(lambda_s > 0.0)) throw DomainError("fusion_costs: lambda_s must be > 0");
  if (features.size() != maps.size()) throw ShapeError("fusion_costs: one map per feature matrix required");
  Vector c(features.size());
  for (std::size_t k = 0; k < features.size(); ++k) {
    if (maps[k].cols() != features[k].rows()) throw ShapeError("fusion_costs: map does not match feature dimension");
    c[k] = -projected_energy(maps[k], features[k]) / (2.0 * lambda_s);
  }
  return c;
}

/// Euclidean projection onto {a : a_i >= eps, sum a = 1}. Shifting by eps
/// turns this into the plain simplex projection of c - eps with total mass
/// 1 - n eps, solved by sort-and-threshold.
inline Vector project_simplex(const Vector& c, double eps = kSimplexFloor) {
  const std::size_t n = c.size();
  if (n == 0) throw ShapeError("project_simplex: empty vector");
  if (eps < 0.0 || eps * static_cast<double>(n) >= 1.0) throw DomainError("project_simplex: floor too large");
  const double mass = 1.0 - eps * static_cast<double>(n);
  std::vector<double> y(n);
  for (std::size_t i = 0; i < n; ++i) y[i] = c[i] - eps;
  std::vector<double> sorted = y;
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  double cum = 0.0, theta = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    cum += sorted[k];
    const double t = (cum - mass) / static_cast<double>(k + 1);
    if (sorted[k] - t > 0.0) theta = t;
  }
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = std::max(y[i] - theta, 0.0) + eps;
  // absorb rounding so the sum is one to the last bit or two
  const double sum = std::accumulate(out.begin(), out.end(), 0.0);
  const auto top = static_cast<std::size_t>(std::max_element(out.begin(), out.end()) - out.begin());
  out[top] += 1.0 - sum;
  return Vector(std::move(out));
}

struct FusionOptions {
  std::size_t subspace_dim = 16;
  double lambda_s = 0.1;
  TraceNormalization trace_normalization = TraceNormalization::PerEntry;
};

/// `features[k]` holds pipeline k's training features, one per column.
inline FusionWeights learn_weights(std::span<const Matrix> features, const FusionOptions& opts) {
  if (features.size() != 3) throw DomainError("learn_weights: all three pipelines are required");
  FusionWeights w;
  w.subspace_dim = opts.subspace_dim;
  w.lambda_s = opts.lambda_s;
  w.trace_normalization = opts.trace_normalization;
  std::array<Matrix, 3> scaled;
  for (std::size_t k = 0; k < 3; ++k) {
    const Matrix& s = features[k];
    if (s.cols() == 0) throw DomainError("learn_weights: empty feature matrix");
    const std::size_t d = std::min(opts.subspace_dim, s.rows());
    if (d < opts.subspace_dim) {
      log_warning("learn_weights: subspace_dim clipped to feature dimension " + std::to_string(d));
    }
    w.subspace_maps[k] = learn_subspace(s, d);
    if (opts.trace_normalization == TraceNormalization::PerEntry) {
      const double scale = 1.0 / std::sqrt(static_cast<double>(s.rows() * s.cols()));
      std::vector<double> data(s.data().begin(), s.data().end());
      for (auto& v : data) v *= scale;
      scaled[k] = Matrix(s.rows(), s.cols(), std::move(data));
    } else {
      scaled[k] = s;
    }
  }
  w.costs = fusion_costs(scaled, w.subspace_maps, opts.lambda_s);
  w.alpha = project_simplex(w.costs);
  return w;
}

inline FusionWeights learn_weights(std::span<const Matrix> features, std::size_t d, double lambda_s) {
  return learn_weights(features, FusionOptions{d, lambda_s, TraceNormalization::None});
}

inline double combine_scores(const FusionWeights& w, const std::array<double, 3>& scores) {
  double s = 0.0;
  for (std::size_t k = 0; k < 3; ++k) {
    if (!std::isfinite(scores[k])) throw DomainError("combine_scores: non-finite score");
    s += w.alpha[k] * scores[k];
  }
  return s;
}

/// Applies the stored calibration to one pipeline's raw score.
inline double calibrate(const FusionWeights& w, std::size_t k, double raw) {
  if (w.calibration == ScoreCalibration::Raw) return raw;
  return (raw - w.score_mean[k]) / w.score_std[k];
}

inline double fused_score(const FusionWeights& w, const std::array<double, 3>& raw) {
  return combine_scores(w, {calibrate(w, 0, raw[0]), calibrate(w, 1, raw[1]), calibrate(w, 2, raw[2])});
}

/// Sets the z-score statistics from raw training scores of pipeline k.
inline void fit_calibration(FusionWeights& w, std::size_t k, std::span<const double> raw) {
  if (raw.empty()) throw DomainError("fit_calibration: no scores");
  const double n = static_cast<double>(raw.size());
  const double mean = std::accumulate(raw.begin(), raw.end(), 0.0) / n;
  double var = 0.0;
  for (double r : raw) var += (r - mean) * (r - mean);
  const double sd = std::sqrt(var / n);
  w.score_mean[k] = mean;
  if (sd > 1e-12) {
    w.score_std[k] = sd;
  } else {
    log_warning("fit_calibration: " + std::string(pipeline_name(kAllPipelines[k])) +
                " scores have zero spread, std set to 1");
    w.score_std[k] = 1.0;
  }
}

/// Text format:
///   amdn-fusion 1
///   alpha <a> <m> <j>
///   costs <a> <m> <j>
///   subspace_dim <d> / lambda_s <v> / trace_normalization <none|per_entry>
///   calibration <raw|zscore> / score_mean x3 / score_std x3
///   map <A|M|J> <rows> <cols> followed by row-major values, three times
///   end
inline void save_fusion(std::ostream& out, const FusionWeights& w) {
  auto triple = [&](const char* key, auto get) {
    out << key;
    for (std::size_t k = 0; k < 3; ++k) out << ' ' << textio::format_double(get(k));
    out << '\n';
  };
  out << "amdn-fusion 1\n";
  triple("alpha", [&](std::size_t k) { return w.alpha[k]; });
  triple("costs", [&](std::size_t k) { return w.costs[k]; });
  out << "subspace_dim " << w.subspace_dim << "\nlambda_s " << textio::format_double(w.lambda_s)
      << "\ntrace_normalization " << to_string(w.trace_normalization) << "\ncalibration "
      << to_string(w.calibration) << '\n';
  triple("score_mean", [&](std::size_t k) { return w.score_mean[k]; });
  triple("score_std", [&](std::size_t k) { return w.score_std[k]; });
  for (std::size_t k = 0; k < 3; ++k) {
    const auto& m = w.subspace_maps[k];
    out << "map " << pipeline_tag(kAllPipelines[k]) << ' ' << m.rows() << ' ' << m.cols() << '\n';
    textio::write_values(out, m.data(), std::max<std::size_t>(m.cols(), 1));
  }
  out << "end\n";
}

inline FusionWeights load_fusion(std::istream& in, const std::string& source = "fusion model") {
  textio::Reader r(in, source);
  r.expect("amdn-fusion");
  if (r.integer() != 1) r.fail("unsupported fusion model version");
  FusionWeights w;
  auto triple = [&](const char* key) {
    r.expect(key);
    std::vector<double> v(3);
    r.values(v);
    return v;
  };
  w.alpha = Vector(triple("alpha"));
  w.costs = Vector(triple("costs"));
  r.expect("subspace_dim");
  w.subspace_dim = r.integer();
  r.expect("lambda_s");
  w.lambda_s = r.number();
  r.expect("trace_normalization");
  w.trace_normalization = parse_trace_normalization(r.token());
  r.expect("calibration");
  w.calibration = parse_score_calibration(r.token());
  const auto mean = triple("score_mean");
  const auto sd = triple("score_std");
  std::copy(mean.begin(), mean.end(), w.score_mean.begin());
  std::copy(sd.begin(), sd.end(), w.score_std.begin());
  for (std::size_t k = 0; k < 3; ++k) {
    r.expect("map");
    if (parse_pipeline_tag(r.token()) != kAllPipelines[k]) r.fail("maps out of order");
    const auto rows = r.integer();
    const auto cols = r.integer();
    std::vector<double> data(rows * cols);
    r.values(data);
    w.subspace_maps[k] = Matrix(rows, cols, std::move(data));
  }
  r.expect("end");
  w.validate();
  return w;
}

inline void save_fusion(const std::filesystem::path& path, const FusionWeights& w) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  save_fusion(out, w);
  if (!out) throw IoError("write failed: " + path.string());
}

inline FusionWeights load_fusion(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  return load_fusion(in, path.string());
}

}  // namespace amdn
