#pragma once

// One-class SVM with an RBF kernel, trained in the dual by SMO.
//
// Dual problem solved here (alpha scaled so that it sums to one):
//   min  1/2 sum_ij alpha_i alpha_j k(s_i, s_j)
//   s.t. 0 <= alpha_i <= 1/(nu N),  sum_i alpha_i = 1
// Anomaly score of a sample: rho - sum_i alpha_i k(sv_i, s). Positive
// scores lie on the outlier side of the boundary.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "amdn/error.hpp"
#include "amdn/ingest.hpp"
#include "amdn/linalg.hpp"
#include "amdn/log.hpp"
#include "amdn/sdae.hpp"
#include "amdn/textio.hpp"

namespace amdn {

struct OcsvmConfig {
  double nu = 0.1;
  double rbf_sigma = 1.0;
  double tolerance = 1e-7;       ///< maximal KKT violation at convergence
  std::size_t max_passes = 1000;  ///< iteration cap, in multiples of N

  void validate() const {
    if (!(nu > 0.0 && nu <= 1.0)) throw ConfigError("OcsvmConfig: nu must be in (0,1]");
    if (!(rbf_sigma > 0.0)) throw ConfigError("OcsvmConfig: rbf_sigma must be > 0");
    if (!(tolerance > 0.0)) throw ConfigError("OcsvmConfig: tolerance must be > 0");
    if (max_passes < 1) throw ConfigError("OcsvmConfig: max_passes must be >= 1");
  }

  bool operator==(const OcsvmConfig&) const = default;
};

struct OcsvmModel {
  PipelineKind kind = PipelineKind::Appearance;
  Matrix support_vectors;  ///< one SV per row
  Vector dual_coeffs;      ///< alpha_i > 0 for each SV
  double rho = 0.0;
  OcsvmConfig config;
  std::size_t n_train = 0;

  std::size_t dim() const { return support_vectors.cols(); }
};

inline double rbf_kernel(std::span<const double> a, std::span<const double> b, double sigma) {
  if (!(sigma > 0.0)) throw DomainError("rbf_kernel: sigma must be > 0");
  if (a.size() != b.size()) throw ShapeError("rbf_kernel: dimension mismatch");
  return std::exp(-squared_distance(a, b) / (2.0 * sigma * sigma));
}

inline double rbf_kernel(const FeatureVector& a, const FeatureVector& b, double sigma) {
  return rbf_kernel(a.values.span(), b.values.span(), sigma);
}

/// Kernel rows, cached densely up to `kDenseLimit` samples and computed on
/// demand beyond that.
class KernelMatrix {
 public:
  static constexpr std::size_t kDenseLimit = 20000;

  KernelMatrix(const Matrix& x, double sigma) : x_(x), sigma_(sigma), dense_(x.rows() <= kDenseLimit) {
    const std::size_t n = x.rows();
    if (dense_) {
      cache_ = Matrix(n, n);
      for (std::size_t i = 0; i < n; ++i) {
        cache_(i, i) = 1.0;
        for (std::size_t j = i + 1; j < n; ++j) cache_(i, j) = cache_(j, i) = rbf_kernel(x.row(i), x.row(j), sigma);
      }
    }
  }

  std::size_t size() const { return x_.rows(); }
  bool dense() const { return dense_; }

  /// Row i of the kernel matrix; the span stays valid until the next call
  /// for the same `slot` (0 or 1) when rows are computed on demand.
  std::span<const double> row(std::size_t i, int slot = 0) const {
    if (dense_) return cache_.row(i);
    auto& buf = scratch_[slot];
    buf.resize(x_.rows());
    for (std::size_t j = 0; j < x_.rows(); ++j) buf[j] = j == i ? 1.0 : rbf_kernel(x_.row(i), x_.row(j), sigma_);
    return buf;
  }

  double operator()(std::size_t i, std::size_t j) const {
    return dense_ ? cache_(i, j) : (i == j ? 1.0 : rbf_kernel(x_.row(i), x_.row(j), sigma_));
  }

 private:
  const Matrix& x_;
  double sigma_;
  bool dense_;
  Matrix cache_;
  mutable std::vector<double> scratch_[2];
};

/// 1/2 alpha^T K alpha
inline double ocsvm_dual_objective(const KernelMatrix& k, std::span<const double> alpha) {
  double f = 0.0;
  for (std::size_t i = 0; i < alpha.size(); ++i) {
    if (alpha[i] == 0.0) continue;
    const auto row = k.row(i);
    double s = 0.0;
    for (std::size_t j = 0; j < alpha.size(); ++j) s += row[j] * alpha[j];
    f += alpha[i] * s;
  }
  return 0.5 * f;
}

struct OcsvmTrainInfo {
  std::size_t iterations = 0;
  std::vector<double> alpha;           ///< full dual solution, one entry per training sample
  std::vector<double> decision;        ///< sum_j alpha_j k(s_j, s_i) for every training sample
  std::vector<double> objective_trace;  ///< dual objective before and after every SMO step (if requested)
  bool record_objective = false;
};

/// Trains on the rows of `features`.
inline OcsvmModel train_ocsvm(const Matrix& features, PipelineKind kind, const OcsvmConfig& cfg,
                              OcsvmTrainInfo* info = nullptr) {
  cfg.validate();
  const std::size_t n = features.rows();
  if (n < 2) throw DomainError("train_ocsvm: need at least two samples");
  const double C = 1.0 / (cfg.nu * static_cast<double>(n));
  const KernelMatrix K(features, cfg.rbf_sigma);

  // Feasible start: the first floor(nu N) samples at the bound, the
  // remainder of the unit mass on the next one.
  std::vector<double> alpha(n, 0.0);
  {
    double mass = 1.0;
    for (std::size_t i = 0; i < n && mass > 0.0; ++i) {
      alpha[i] = std::min(C, mass);
      mass -= alpha[i];
      if (mass < 1e-15) mass = 0.0;
    }
  }
  std::vector<double> grad(n, 0.0);  // K alpha
  for (std::size_t i = 0; i < n; ++i) {
    if (alpha[i] == 0.0) continue;
    const auto row = K.row(i);
    for (std::size_t j = 0; j < n; ++j) grad[j] += alpha[i] * row[j];
  }

  const bool trace = info && info->record_objective;
  auto objective = [&] {
    double f = 0.0;
    for (std::size_t i = 0; i < n; ++i) f += alpha[i] * grad[i];
    return 0.5 * f;
  };
  if (trace) info->objective_trace.push_back(objective());

  constexpr double tau = 1e-12;
  const std::size_t cap = cfg.max_passes * n;
  std::size_t iter = 0;
  for (;; ++iter) {
    // Maximal violating pair with second-order choice of the partner.
    std::size_t i = n;
    double gmax = -std::numeric_limits<double>::infinity();
    for (std::size_t t = 0; t < n; ++t) {
      if (alpha[t] < C && -grad[t] >= gmax) {
        gmax = -grad[t];
        i = t;
      }
    }
    if (i == n) break;
    const auto qi = K.row(i, 0);
    std::size_t j = n;
    double gmin = std::numeric_limits<double>::infinity();
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t t = 0; t < n; ++t) {
      if (!(alpha[t] > 0.0)) continue;
      gmin = std::min(gmin, -grad[t]);
      const double b = gmax + grad[t];
      if (b > 0.0) {
        double a = qi[i] + K(t, t) - 2.0 * qi[t];
        if (a <= 0.0) a = tau;
        const double val = -b * b / a;
        if (val <= best) {
          best = val;
          j = t;
        }
      }
    }
    if (j == n || gmax - gmin < cfg.tolerance) break;
    if (iter >= cap) {
      throw ConvergenceError("train_ocsvm: no convergence after " + std::to_string(iter) + " SMO steps (violation " +
                             textio::format_double(gmax - gmin) + ")");
    }
    const auto qj = K.row(j, 1);
    double a = qi[i] + qj[j] - 2.0 * qi[j];
    if (a <= 0.0) a = tau;
    double step = (grad[j] - grad[i]) / a;
    const double room_i = C - alpha[i];
    const double room_j = alpha[j];
    if (step >= room_i && room_i <= room_j) {
      step = room_i;
      alpha[i] = C;
      alpha[j] = room_j == room_i ? 0.0 : alpha[j] - step;
    } else if (step >= room_j) {
      step = room_j;
      alpha[i] += step;
      alpha[j] = 0.0;
    } else {
      alpha[i] += step;
      alpha[j] -= step;
    }
    for (std::size_t t = 0; t < n; ++t) grad[t] += step * (qi[t] - qj[t]);
    if (trace) info->objective_trace.push_back(objective());
  }

  double rho_sum = 0.0;
  std::size_t free_count = 0;
  for (std::size_t t = 0; t < n; ++t) {
    if (alpha[t] > 0.0 && alpha[t] < C) {
      rho_sum += grad[t];
      ++free_count;
    }
  }
  double rho;
  if (free_count > 0) {
    rho = rho_sum / static_cast<double>(free_count);
  } else {
    log_warning("train_ocsvm: no margin support vector; rho taken as the minimum over support vectors");
    rho = std::numeric_limits<double>::infinity();
    for (std::size_t t = 0; t < n; ++t)
      if (alpha[t] > 0.0) rho = std::min(rho, grad[t]);
  }

  OcsvmModel model;
  model.kind = kind;
  model.config = cfg;
  model.n_train = n;
  model.rho = rho;
  std::vector<std::size_t> sv;
  for (std::size_t t = 0; t < n; ++t)
    if (alpha[t] > 0.0) sv.push_back(t);
  model.support_vectors = Matrix(sv.size(), features.cols());
  model.dual_coeffs = Vector(sv.size());
  for (std::size_t k = 0; k < sv.size(); ++k) {
    std::copy(features.row(sv[k]).begin(), features.row(sv[k]).end(), model.support_vectors.row(k).begin());
    model.dual_coeffs[k] = alpha[sv[k]];
  }
  if (info) {
    info->iterations = iter;
    info->alpha = alpha;
    info->decision = grad;
  }
  return model;
}

inline Matrix feature_matrix(const std::vector<FeatureVector>& features) {
  if (features.empty()) return {};
  const std::size_t d = features.front().values.size();
  Matrix m(features.size(), d);
  for (std::size_t i = 0; i < features.size(); ++i) {
    if (features[i].values.size() != d) throw ShapeError("feature_matrix: ragged feature dimensions");
    if (features[i].kind != features.front().kind) throw DomainError("feature_matrix: mixed pipeline kinds");
    std::copy(features[i].values.begin(), features[i].values.end(), m.row(i).begin());
  }
  return m;
}

inline OcsvmModel train(const std::vector<FeatureVector>& features, const OcsvmConfig& cfg,
                        OcsvmTrainInfo* info = nullptr) {
  if (features.size() < 2) throw DomainError("train: need at least two samples");
  return train_ocsvm(feature_matrix(features), features.front().kind, cfg, info);
}

/// rho - sum_i alpha_i k(sv_i, s), without the pipeline-kind check.
inline double score_raw(const OcsvmModel& model, std::span<const double> s) {
  if (s.size() != model.dim()) throw ShapeError("score: feature dimension does not match model");
  double sum = 0.0;
  for (std::size_t i = 0; i < model.support_vectors.rows(); ++i) {
    sum += model.dual_coeffs[i] * rbf_kernel(model.support_vectors.row(i), s, model.config.rbf_sigma);
  }
  return model.rho - sum;
}

inline double score(const OcsvmModel& model, const FeatureVector& s) {
  if (s.kind != model.kind) {
    throw DomainError("score: feature is " + std::string(pipeline_name(s.kind)) + " but model is " +
                      std::string(pipeline_name(model.kind)));
  }
  return score_raw(model, s.values.span());
}

/// Median pairwise Euclidean distance over at most `subset` rows.
inline double median_heuristic_sigma(const Matrix& features, Rng& rng, std::size_t subset = 1000) {
  std::vector<std::size_t> rows(features.rows());
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  if (rows.size() > subset) {
    for (std::size_t i = 0; i < subset; ++i) std::swap(rows[i], rows[i + rng.uniform_index(rows.size() - i)]);
    rows.resize(subset);
    std::sort(rows.begin(), rows.end());
  }
  std::vector<double> d;
  d.reserve(rows.size() * (rows.size() - 1) / 2);
  for (std::size_t a = 0; a < rows.size(); ++a)
    for (std::size_t b = a + 1; b < rows.size(); ++b)
      d.push_back(std::sqrt(squared_distance(features.row(rows[a]), features.row(rows[b]))));
  if (d.empty()) return 1.0;
  auto mid = d.begin() + static_cast<std::ptrdiff_t>(d.size() / 2);
  std::nth_element(d.begin(), mid, d.end());
  if (!(*mid > 0.0)) {
    log_warning("median_heuristic_sigma: median distance is zero, using sigma = 1");
    return 1.0;
  }
  return *mid;
}

/// Text format:
///   amdn-ocsvm 1
///   kind <A|M|J>
///   nu <v> / rbf_sigma <v> / tolerance <v> / max_passes <n> / n_train <n> / rho <v>
///   support_vectors <count> <dim>
///   <alpha> <dim values>      one line per SV
///   end
inline void save_ocsvm(std::ostream& out, const OcsvmModel& m) {
  out << "amdn-ocsvm 1\nkind " << pipeline_tag(m.kind) << "\nnu " << textio::format_double(m.config.nu)
      << "\nrbf_sigma " << textio::format_double(m.config.rbf_sigma) << "\ntolerance "
      << textio::format_double(m.config.tolerance) << "\nmax_passes " << m.config.max_passes << "\nn_train "
      << m.n_train << "\nrho " << textio::format_double(m.rho) << "\nsupport_vectors "
      << m.support_vectors.rows() << ' ' << m.support_vectors.cols() << '\n';
  for (std::size_t i = 0; i < m.support_vectors.rows(); ++i) {
    out << textio::format_double(m.dual_coeffs[i]);
    for (double v : m.support_vectors.row(i)) out << ' ' << textio::format_double(v);
    out << '\n';
  }
  out << "end\n";
}

inline OcsvmModel load_ocsvm(std::istream& in, const std::string& source = "ocsvm model") {
  textio::Reader r(in, source);
  r.expect("amdn-ocsvm");
  if (r.integer() != 1) r.fail("unsupported ocsvm model version");
  OcsvmModel m;
  r.expect("kind");
  m.kind = parse_pipeline_tag(r.token());
  r.expect("nu");
  m.config.nu = r.number();
  r.expect("rbf_sigma");
  m.config.rbf_sigma = r.number();
  r.expect("tolerance");
  m.config.tolerance = r.number();
  r.expect("max_passes");
  m.config.max_passes = r.integer();
  r.expect("n_train");
  m.n_train = r.integer();
  r.expect("rho");
  m.rho = r.number();
  r.expect("support_vectors");
  const auto count = r.integer();
  const auto dim = r.integer();
  m.support_vectors = Matrix(count, dim);
  m.dual_coeffs = Vector(count);
  for (std::size_t i = 0; i < count; ++i) {
    m.dual_coeffs[i] = r.number();
    r.values(m.support_vectors.row(i));
  }
  r.expect("end");
  m.config.validate();
  return m;
}

inline void save_ocsvm(const std::filesystem::path& path, const OcsvmModel& m) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  save_ocsvm(out, m);
  if (!out) throw IoError("write failed: " + path.string());
}

inline OcsvmModel load_ocsvm(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  return load_ocsvm(in, path.string());
}

}  // namespace amdn
