#pragma once

// Stacked denoising autoencoders: single-layer DAE pretraining with a
// sparsity penalty, whole-network fine-tuning, and bottleneck features.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "amdn/error.hpp"
#include "amdn/ingest.hpp"
#include "amdn/linalg.hpp"
#include "amdn/textio.hpp"

namespace amdn {

/// One affine layer followed by a logistic sigmoid. W is out_dim x in_dim.
struct LayerParams {
  Matrix W;
  Vector b;

  LayerParams() = default;
  LayerParams(Matrix w, Vector bias) : W(std::move(w)), b(std::move(bias)) {
    if (b.size() != W.rows()) throw ShapeError("LayerParams: bias length does not match output dimension");
  }
  static LayerParams zeros(std::size_t out_dim, std::size_t in_dim) {
    return LayerParams(Matrix(out_dim, in_dim), Vector(out_dim));
  }

  std::size_t in_dim() const { return W.cols(); }
  std::size_t out_dim() const { return W.rows(); }

  bool operator==(const LayerParams&) const = default;
};

struct SdaeConfig {
  std::vector<std::size_t> layer_dims{225, 256, 128, 64, 32};  ///< input, then encoder widths to the bottleneck
  double noise_variance = 0.0003;
  double sparsity_target = 0.05;
  double sparsity_weight = 0.1;
  double lambda_pre = 0.0001;
  double lambda_fine = 0.0001;
  double learning_rate = 0.01;
  double momentum = 0.9;
  std::size_t batch_size = 256;
  std::size_t pretrain_epochs = 20;
  std::size_t finetune_epochs = 20;
  std::uint64_t seed = 0;

  void validate() const {
    if (layer_dims.size() < 2) throw ConfigError("SdaeConfig: need an input and at least one encoder layer");
    for (auto d : layer_dims)
      if (d == 0) throw ConfigError("SdaeConfig: zero layer width");
    for (std::size_t l = 2; l < layer_dims.size(); ++l) {
      if (layer_dims[l] != layer_dims[l - 1] / 2) {
        throw ConfigError("SdaeConfig: encoder widths must halve after the first layer (" +
                          std::to_string(layer_dims[l - 1]) + " -> " + std::to_string(layer_dims[l]) + ")");
      }
    }
    if (!(noise_variance >= 0.0)) throw ConfigError("SdaeConfig: noise_variance must be >= 0");
    if (!(sparsity_target > 0.0 && sparsity_target < 1.0)) throw ConfigError("SdaeConfig: sparsity_target must be in (0,1)");
    if (!(sparsity_weight >= 0.0)) throw ConfigError("SdaeConfig: sparsity_weight must be >= 0");
    if (!(lambda_pre >= 0.0) || !(lambda_fine >= 0.0)) throw ConfigError("SdaeConfig: weight penalties must be >= 0");
    if (!(learning_rate > 0.0)) throw ConfigError("SdaeConfig: learning_rate must be > 0");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("SdaeConfig: momentum must be in [0,1)");
    if (batch_size < 1) throw ConfigError("SdaeConfig: batch_size must be >= 1");
  }

  bool operator==(const SdaeConfig&) const = default;
};

/// Objective values recorded during training: each list starts with the
/// value before the first update, then one entry per epoch.
struct TrainingTrace {
  std::vector<std::vector<double>> pretrain;
  std::vector<double> finetune;
};

struct SdaeModel {
  PipelineKind kind = PipelineKind::Appearance;
  std::vector<LayerParams> encoder;  ///< input -> bottleneck
  std::vector<LayerParams> decoder;  ///< bottleneck -> reconstruction
  SdaeConfig config;
  std::size_t input_dim = 0;
  std::optional<MotionNormalization> motion_norm;
  TrainingTrace trace;

  std::size_t bottleneck_dim() const { return encoder.empty() ? input_dim : encoder.back().out_dim(); }

  /// Encoder followed by decoder, in forward order.
  std::vector<LayerParams> network() const {
    std::vector<LayerParams> all = encoder;
    all.insert(all.end(), decoder.begin(), decoder.end());
    return all;
  }

  void validate() const {
    if (encoder.size() != decoder.size()) throw ShapeError("SdaeModel: encoder and decoder depth differ");
    const std::size_t L = encoder.size();
    std::size_t in = input_dim;
    for (std::size_t l = 0; l < L; ++l) {
      if (encoder[l].in_dim() != in) throw ShapeError("SdaeModel: encoder layer " + std::to_string(l) + " input mismatch");
      in = encoder[l].out_dim();
      const auto& mirror = decoder[L - 1 - l];
      if (mirror.in_dim() != encoder[l].out_dim() || mirror.out_dim() != encoder[l].in_dim()) {
        throw ShapeError("SdaeModel: decoder does not mirror encoder layer " + std::to_string(l));
      }
    }
  }
};

struct FeatureVector {
  PipelineKind kind = PipelineKind::Appearance;
  Vector values;
};

// ------------------------------------------------------------ primitives

/// Logistic sigmoid, kept strictly inside (0, 1).
inline double sigmoid(double z) {
  constexpr double lo = std::numeric_limits<double>::min();
  constexpr double hi = 1.0 - std::numeric_limits<double>::epsilon() / 2.0;
  const double s = z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
  return std::clamp(s, lo, hi);
}

inline Vector encode_layer(const LayerParams& params, const Vector& x) {
  if (x.size() != params.in_dim()) throw ShapeError("encode_layer: input length does not match layer");
  Vector out = matvec(params.W, x.span());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = sigmoid(out[i] + params.b[i]);
  return out;
}

/// sigmoid(X W^T + b) for a batch of row vectors.
inline Matrix forward_layer(const LayerParams& params, const Matrix& x) {
  if (x.cols() != params.in_dim()) throw ShapeError("forward_layer: input width does not match layer");
  Matrix z = matmul_abt(x, params.W);
  for (std::size_t r = 0; r < z.rows(); ++r) {
    auto row = z.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) row[c] = sigmoid(row[c] + params.b[c]);
  }
  return z;
}

/// Additive white Gaussian noise; the result is deliberately not clipped.
inline Vector corrupt(const Vector& x, double noise_variance, Rng& rng) {
  if (!(noise_variance >= 0.0)) throw DomainError("corrupt: negative variance");
  Vector out = x;
  if (noise_variance == 0.0) return out;
  const Vector noise = gaussian_sample(rng, x.size(), 0.0, noise_variance);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += noise[i];
  return out;
}

inline Matrix corrupt(const Matrix& x, double noise_variance, Rng& rng) {
  if (!(noise_variance >= 0.0)) throw DomainError("corrupt: negative variance");
  Matrix out = x;
  if (noise_variance == 0.0) return out;
  const double sd = std::sqrt(noise_variance);
  for (double& v : out.data()) v += sd * rng.normal();
  return out;
}

/// KL form of the sparsity penalty,
///   sum_j mu log(mu / mu_hat_j) + (1 - mu) log((1 - mu) / (1 - mu_hat_j)).
/// It differs from the plain cross-entropy only by the constant entropy of
/// mu, so gradients agree, and it is zero exactly at mu_hat == mu.
inline double sparsity_penalty(double mu, std::span<const double> mu_hat) {
  double s = 0.0;
  for (double m : mu_hat) s += mu * std::log(mu / m) + (1.0 - mu) * std::log((1.0 - mu) / (1.0 - m));
  return s;
}

struct DaeObjective {
  double lambda = 0.0001;
  double sparsity_target = 0.05;
  double sparsity_weight = 0.1;
};

namespace detail {

inline std::vector<double> column_means(const Matrix& m) {
  std::vector<double> mean(m.cols(), 0.0);
  for (std::size_t r = 0; r < m.rows(); ++r) {
    auto row = m.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) mean[c] += row[c];
  }
  for (double& v : mean) v /= static_cast<double>(m.rows());
  return mean;
}

inline void column_sums_into(const Matrix& m, Vector& out) {
  for (std::size_t c = 0; c < m.cols(); ++c) out[c] = 0.0;
  for (std::size_t r = 0; r < m.rows(); ++r) {
    auto row = m.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) out[c] += row[c];
  }
}

/// Squared-error term averaged over rows, and its gradient w.r.t. the
/// pre-activation of the sigmoid output layer.
inline double reconstruction_error(const Matrix& target, const Matrix& output, Matrix* delta) {
  const double inv_n = 1.0 / static_cast<double>(target.rows());
  double err = 0.0;
  if (delta) *delta = Matrix(output.rows(), output.cols());
  for (std::size_t i = 0; i < target.data().size(); ++i) {
    const double y = output.data()[i];
    const double e = y - target.data()[i];
    err += e * e;
    if (delta) delta->data()[i] = 2.0 * inv_n * e * y * (1.0 - y);
  }
  return err * inv_n;
}

inline void add_weight_decay(const LayerParams& p, double lambda, LayerParams& grad) {
  auto w = p.W.data();
  auto g = grad.W.data();
  for (std::size_t i = 0; i < w.size(); ++i) g[i] += 2.0 * lambda * w[i];
}

inline void scale_by_sigmoid_slope(Matrix& delta, const Matrix& activation) {
  auto d = delta.data();
  auto a = activation.data();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] *= a[i] * (1.0 - a[i]);
}

}  // namespace detail

/// Single-DAE objective on a batch:
///   (1/B) sum_i ||x_i - xhat_i||^2 + lambda (||W||_F^2 + ||W'||_F^2)
///   + sparsity_weight * KL(mu || mu_hat),
/// where xhat decodes the encoding of `input` (the corrupted x) and mu_hat
/// is the mean hidden activation over the batch. When `grad` is non-null it
/// receives {dEncoder, dDecoder}.
inline double dae_loss(const LayerParams& enc, const LayerParams& dec, const Matrix& clean, const Matrix& input,
                       const DaeObjective& obj, std::vector<LayerParams>* grad = nullptr) {
  if (clean.rows() != input.rows() || clean.cols() != input.cols()) throw ShapeError("dae_loss: clean/input shape mismatch");
  if (dec.in_dim() != enc.out_dim() || dec.out_dim() != enc.in_dim()) throw ShapeError("dae_loss: decoder does not mirror encoder");
  const Matrix h = forward_layer(enc, input);
  const Matrix xhat = forward_layer(dec, h);
  Matrix delta_out;
  const double recon = detail::reconstruction_error(clean, xhat, grad ? &delta_out : nullptr);
  const double decay = obj.lambda * (frobenius_squared(enc.W) + frobenius_squared(dec.W));
  std::vector<double> mu_hat;
  double sparse = 0.0;
  if (obj.sparsity_weight > 0.0) {
    mu_hat = detail::column_means(h);
    sparse = obj.sparsity_weight * sparsity_penalty(obj.sparsity_target, mu_hat);
  }
  if (grad) {
    grad->assign({LayerParams::zeros(enc.out_dim(), enc.in_dim()), LayerParams::zeros(dec.out_dim(), dec.in_dim())});
    auto& g_enc = (*grad)[0];
    auto& g_dec = (*grad)[1];
    g_dec.W = matmul_atb(delta_out, h);
    detail::column_sums_into(delta_out, g_dec.b);
    Matrix delta_h = matmul(delta_out, dec.W);
    if (obj.sparsity_weight > 0.0) {
      const double mu = obj.sparsity_target;
      const double inv_n = 1.0 / static_cast<double>(h.rows());
      for (std::size_t j = 0; j < mu_hat.size(); ++j) {
        const double g = obj.sparsity_weight * (-mu / mu_hat[j] + (1.0 - mu) / (1.0 - mu_hat[j])) * inv_n;
        for (std::size_t r = 0; r < h.rows(); ++r) delta_h(r, j) += g;
      }
    }
    detail::scale_by_sigmoid_slope(delta_h, h);
    g_enc.W = matmul_atb(delta_h, input);
    detail::column_sums_into(delta_h, g_enc.b);
    detail::add_weight_decay(enc, obj.lambda, g_enc);
    detail::add_weight_decay(dec, obj.lambda, g_dec);
  }
  return recon + decay + sparse;
}

/// Whole-network reconstruction objective used for fine-tuning:
///   (1/B) sum_i ||x_i - xhat_i||^2 + lambda_f * sum_l ||W_l||_F^2
/// over every encoder and decoder weight matrix, clean inputs, no sparsity.
inline double finetune_loss(std::span<const LayerParams> layers, const Matrix& x, double lambda_f,
                            std::vector<LayerParams>* grad = nullptr) {
  if (layers.empty()) throw ShapeError("finetune_loss: empty network");
  std::vector<Matrix> acts;
  acts.reserve(layers.size() + 1);
  acts.push_back(x);
  for (const auto& l : layers) acts.push_back(forward_layer(l, acts.back()));
  if (acts.back().cols() != x.cols()) throw ShapeError("finetune_loss: network output width differs from input");
  Matrix delta;
  const double recon = detail::reconstruction_error(x, acts.back(), grad ? &delta : nullptr);
  double decay = 0.0;
  for (const auto& l : layers) decay += frobenius_squared(l.W);
  decay *= lambda_f;
  if (grad) {
    grad->clear();
    grad->resize(layers.size());
    for (std::size_t k = layers.size(); k-- > 0;) {
      auto& g = (*grad)[k];
      g = LayerParams::zeros(layers[k].out_dim(), layers[k].in_dim());
      g.W = matmul_atb(delta, acts[k]);
      detail::column_sums_into(delta, g.b);
      detail::add_weight_decay(layers[k], lambda_f, g);
      if (k > 0) {
        delta = matmul(delta, layers[k].W);
        detail::scale_by_sigmoid_slope(delta, acts[k]);
      }
    }
  }
  return recon + decay;
}

// -------------------------------------------------------------- training

/// Classical momentum: v <- m v - lr g; theta <- theta + v.
class MomentumSgd {
 public:
  MomentumSgd(double learning_rate, double momentum) : lr_(learning_rate), momentum_(momentum) {}

  void step(std::span<LayerParams> params, std::span<const LayerParams> grads) {
    if (velocity_.empty()) {
      for (const auto& p : params) velocity_.push_back(LayerParams::zeros(p.out_dim(), p.in_dim()));
    }
    for (std::size_t k = 0; k < params.size(); ++k) {
      update(params[k].W.data(), grads[k].W.data(), velocity_[k].W.data());
      update(params[k].b.span(), grads[k].b.span(), velocity_[k].b.span());
    }
  }

 private:
  void update(std::span<double> theta, std::span<const double> g, std::span<double> v) const {
    for (std::size_t i = 0; i < theta.size(); ++i) {
      v[i] = momentum_ * v[i] - lr_ * g[i];
      theta[i] += v[i];
    }
  }

  double lr_;
  double momentum_;
  std::vector<LayerParams> velocity_;
};

namespace detail {

inline LayerParams init_layer(std::size_t out_dim, std::size_t in_dim, Rng& rng) {
  const double r = std::sqrt(6.0 / static_cast<double>(in_dim + out_dim));
  LayerParams p = LayerParams::zeros(out_dim, in_dim);
  for (double& w : p.W.data()) w = rng.uniform(-r, r);
  return p;
}

inline std::vector<std::size_t> shuffled_indices(std::size_t n, Rng& rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (std::size_t i = n; i > 1; --i) std::swap(idx[i - 1], idx[rng.uniform_index(i)]);
  return idx;
}

inline Matrix gather_rows(const Matrix& m, std::span<const std::size_t> rows) {
  Matrix out(rows.size(), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) std::copy(m.row(rows[i]).begin(), m.row(rows[i]).end(), out.row(i).begin());
  return out;
}

inline void require_finite_objective(double value, const std::string& stage, std::size_t epoch,
                                     const std::vector<double>& trace) {
  if (std::isfinite(value)) return;
  std::string msg = stage + ": objective became non-finite at epoch " + std::to_string(epoch) + " (trace:";
  for (double t : trace) msg += " " + textio::format_double(t);
  throw DivergenceError(msg + ")");
}

}  // namespace detail

struct PretrainResult {
  LayerParams encoder;
  LayerParams decoder;
  std::vector<double> objective;  ///< full-data objective before training, then after each epoch
};

/// Greedy training of one denoising autoencoder on `data` (one sample per
/// row) by mini-batch SGD with momentum. Each mini-batch sees fresh
/// corruption; the recorded objective is evaluated on the clean data.
inline PretrainResult pretrain_layer(const Matrix& data, std::size_t in_dim, std::size_t out_dim, const SdaeConfig& cfg,
                                     Rng& rng) {
  if (out_dim < 1) throw DomainError("pretrain_layer: out_dim must be >= 1");
  if (data.cols() != in_dim) throw ShapeError("pretrain_layer: data width does not match in_dim");
  if (data.rows() < cfg.batch_size) throw DomainError("pretrain_layer: fewer samples than batch_size");
  const DaeObjective obj{cfg.lambda_pre, cfg.sparsity_target, cfg.sparsity_weight};

  std::vector<LayerParams> params{detail::init_layer(out_dim, in_dim, rng), detail::init_layer(in_dim, out_dim, rng)};
  MomentumSgd opt(cfg.learning_rate, cfg.momentum);
  PretrainResult res;
  res.objective.push_back(dae_loss(params[0], params[1], data, data, obj));
  std::vector<LayerParams> grad;
  for (std::size_t epoch = 1; epoch <= cfg.pretrain_epochs; ++epoch) {
    const auto order = detail::shuffled_indices(data.rows(), rng);
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t len = std::min(cfg.batch_size, order.size() - start);
      const Matrix clean = detail::gather_rows(data, std::span(order).subspan(start, len));
      const Matrix noisy = corrupt(clean, cfg.noise_variance, rng);
      const double batch_loss = dae_loss(params[0], params[1], clean, noisy, obj, &grad);
      detail::require_finite_objective(batch_loss, "pretraining", epoch, res.objective);
      opt.step(params, grad);
    }
    const double full = dae_loss(params[0], params[1], data, data, obj);
    detail::require_finite_objective(full, "pretraining", epoch, res.objective);
    res.objective.push_back(full);
  }
  res.encoder = std::move(params[0]);
  res.decoder = std::move(params[1]);
  return res;
}

/// Greedy layer-wise pretraining followed by whole-network fine-tuning.
inline SdaeModel stack_and_finetune(const PatchBatch& batch, const SdaeConfig& cfg, Rng& rng) {
  cfg.validate();
  batch.validate();
  if (cfg.layer_dims.front() != batch.dim) {
    throw ShapeError("stack_and_finetune: layer_dims[0]=" + std::to_string(cfg.layer_dims.front()) +
                     " but batch dim is " + std::to_string(batch.dim));
  }
  SdaeModel model;
  model.kind = batch.kind;
  model.config = cfg;
  model.input_dim = batch.dim;
  model.motion_norm = batch.motion_norm;

  const std::size_t L = cfg.layer_dims.size() - 1;
  Matrix h = batch.vectors;
  std::vector<LayerParams> decoders;
  for (std::size_t l = 0; l < L; ++l) {
    Rng layer_rng = rng.fork(l);
    auto res = pretrain_layer(h, cfg.layer_dims[l], cfg.layer_dims[l + 1], cfg, layer_rng);
    h = forward_layer(res.encoder, h);
    model.encoder.push_back(std::move(res.encoder));
    decoders.push_back(std::move(res.decoder));
    model.trace.pretrain.push_back(std::move(res.objective));
  }
  model.decoder.assign(decoders.rbegin(), decoders.rend());

  std::vector<LayerParams> net = model.network();
  Rng fine_rng = rng.fork(L);
  MomentumSgd opt(cfg.learning_rate, cfg.momentum);
  const Matrix& x = batch.vectors;
  model.trace.finetune.push_back(finetune_loss(net, x, cfg.lambda_fine));
  std::vector<LayerParams> grad;
  for (std::size_t epoch = 1; epoch <= cfg.finetune_epochs; ++epoch) {
    const auto order = detail::shuffled_indices(x.rows(), fine_rng);
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t len = std::min(cfg.batch_size, order.size() - start);
      const Matrix mb = detail::gather_rows(x, std::span(order).subspan(start, len));
      const double batch_loss = finetune_loss(net, mb, cfg.lambda_fine, &grad);
      detail::require_finite_objective(batch_loss, "fine-tuning", epoch, model.trace.finetune);
      opt.step(net, grad);
    }
    const double full = finetune_loss(net, x, cfg.lambda_fine);
    detail::require_finite_objective(full, "fine-tuning", epoch, model.trace.finetune);
    model.trace.finetune.push_back(full);
  }
  std::copy_n(net.begin(), L, model.encoder.begin());
  std::copy(net.begin() + static_cast<std::ptrdiff_t>(L), net.end(), model.decoder.begin());
  return model;
}

/// Bottleneck activations for every row of `x` (one feature row per input row).
inline Matrix encode_batch(const SdaeModel& model, const Matrix& x) {
  if (x.cols() != model.input_dim) throw ShapeError("encode_batch: input width does not match model");
  Matrix h = x;
  for (const auto& l : model.encoder) h = forward_layer(l, h);
  return h;
}

inline std::vector<FeatureVector> extract_features(const SdaeModel& model, const PatchBatch& batch) {
  if (batch.kind != model.kind) {
    throw DomainError("extract_features: batch is " + std::string(pipeline_name(batch.kind)) + " but model is " +
                      std::string(pipeline_name(model.kind)));
  }
  if (batch.dim != model.input_dim) throw ShapeError("extract_features: batch dim does not match model input");
  const Matrix h = encode_batch(model, batch.vectors);
  std::vector<FeatureVector> out;
  out.reserve(h.rows());
  for (std::size_t r = 0; r < h.rows(); ++r) {
    out.push_back({model.kind, Vector(std::vector<double>(h.row(r).begin(), h.row(r).end()))});
  }
  return out;
}

// --------------------------------------------------------- serialization

namespace detail {

inline void write_layer(std::ostream& out, const char* role, std::size_t index, const LayerParams& p) {
  out << "layer " << role << ' ' << index << ' ' << p.out_dim() << ' ' << p.in_dim() << "\nW\n";
  textio::write_values(out, p.W.data(), p.in_dim());
  out << "b\n";
  textio::write_values(out, p.b.span(), p.out_dim());
}

inline LayerParams read_layer(textio::Reader& r, const char* role, std::size_t index) {
  r.expect("layer");
  r.expect(role);
  if (r.integer() != index) r.fail(std::string("layer index out of order in ") + role);
  const auto out_dim = r.integer();
  const auto in_dim = r.integer();
  LayerParams p = LayerParams::zeros(out_dim, in_dim);
  r.expect("W");
  r.values(p.W.data());
  r.expect("b");
  r.values(p.b.span());
  detail::require_finite(p.W.data(), "layer weights");
  detail::require_finite(p.b.span(), "layer bias");
  return p;
}

inline void write_motion_norm(std::ostream& out, const std::optional<MotionNormalization>& n) {
  if (!n) {
    out << "motion_norm none\n";
    return;
  }
  out << "motion_norm " << textio::format_double(n->u.min) << ' ' << textio::format_double(n->u.max) << ' '
      << textio::format_double(n->v.min) << ' ' << textio::format_double(n->v.max) << '\n';
}

inline std::optional<MotionNormalization> read_motion_norm(textio::Reader& r) {
  r.expect("motion_norm");
  const auto first = r.token();
  if (first == "none") return std::nullopt;
  MotionNormalization n;
  n.u.min = textio::parse_double(first);
  n.u.max = r.number();
  n.v.min = r.number();
  n.v.max = r.number();
  return n;
}

}  // namespace detail

/// Text model format (version 1):
///   amdn-sdae 1
///   kind <A|M|J>
///   input_dim <n>
///   motion_norm none | <u_min> <u_max> <v_min> <v_max>
///   config <key> <value>...      one line per SdaeConfig field
///   depth <L>
///   layer encoder <l> <out> <in> / W <row-major> / b <values>   x L
///   layer decoder <l> <out> <in> / W ... / b ...                x L
///   end
inline void save_sdae(std::ostream& out, const SdaeModel& m) {
  m.validate();
  const auto& c = m.config;
  out << "amdn-sdae 1\nkind " << pipeline_tag(m.kind) << "\ninput_dim " << m.input_dim << '\n';
  detail::write_motion_norm(out, m.motion_norm);
  out << "config layer_dims " << c.layer_dims.size();
  for (auto d : c.layer_dims) out << ' ' << d;
  out << "\nconfig noise_variance " << textio::format_double(c.noise_variance)
      << "\nconfig sparsity_target " << textio::format_double(c.sparsity_target)
      << "\nconfig sparsity_weight " << textio::format_double(c.sparsity_weight)
      << "\nconfig lambda_pre " << textio::format_double(c.lambda_pre)
      << "\nconfig lambda_fine " << textio::format_double(c.lambda_fine)
      << "\nconfig learning_rate " << textio::format_double(c.learning_rate)
      << "\nconfig momentum " << textio::format_double(c.momentum)
      << "\nconfig batch_size " << c.batch_size
      << "\nconfig pretrain_epochs " << c.pretrain_epochs
      << "\nconfig finetune_epochs " << c.finetune_epochs
      << "\nconfig seed " << c.seed << "\ndepth " << m.encoder.size() << '\n';
  for (std::size_t l = 0; l < m.encoder.size(); ++l) detail::write_layer(out, "encoder", l, m.encoder[l]);
  for (std::size_t l = 0; l < m.decoder.size(); ++l) detail::write_layer(out, "decoder", l, m.decoder[l]);
  out << "end\n";
}

inline SdaeModel load_sdae(std::istream& in, const std::string& source = "sdae model") {
  textio::Reader r(in, source);
  r.expect("amdn-sdae");
  if (r.integer() != 1) r.fail("unsupported sdae model version");
  SdaeModel m;
  r.expect("kind");
  m.kind = parse_pipeline_tag(r.token());
  r.expect("input_dim");
  m.input_dim = r.integer();
  m.motion_norm = detail::read_motion_norm(r);
  auto& c = m.config;
  auto key = [&](const char* name) {
    r.expect("config");
    r.expect(name);
  };
  key("layer_dims");
  c.layer_dims.resize(r.integer());
  for (auto& d : c.layer_dims) d = r.integer();
  key("noise_variance"), c.noise_variance = r.number();
  key("sparsity_target"), c.sparsity_target = r.number();
  key("sparsity_weight"), c.sparsity_weight = r.number();
  key("lambda_pre"), c.lambda_pre = r.number();
  key("lambda_fine"), c.lambda_fine = r.number();
  key("learning_rate"), c.learning_rate = r.number();
  key("momentum"), c.momentum = r.number();
  key("batch_size"), c.batch_size = r.integer();
  key("pretrain_epochs"), c.pretrain_epochs = r.integer();
  key("finetune_epochs"), c.finetune_epochs = r.integer();
  key("seed"), c.seed = r.integer<std::uint64_t>();
  r.expect("depth");
  const auto depth = r.integer();
  for (std::size_t l = 0; l < depth; ++l) m.encoder.push_back(detail::read_layer(r, "encoder", l));
  for (std::size_t l = 0; l < depth; ++l) m.decoder.push_back(detail::read_layer(r, "decoder", l));
  r.expect("end");
  m.validate();
  return m;
}

inline void save_sdae(const std::filesystem::path& path, const SdaeModel& m) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  save_sdae(out, m);
  if (!out) throw IoError("write failed: " + path.string());
}

inline SdaeModel load_sdae(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  return load_sdae(in, path.string());
}

}  // namespace amdn
