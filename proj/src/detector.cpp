#include "faithscan/detector.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include <fmt/format.h>

#include "faithscan/error.hpp"

namespace faithscan {

std::string_view to_string(EncoderKind kind) {
  switch (kind) {
    case EncoderKind::linear_pool: return "linear_pool";
    case EncoderKind::seq_compressor: return "seq_compressor";
    case EncoderKind::conv_pool: return "conv_pool";
    case EncoderKind::linear_mean: return "linear_mean";
  }
  return "unknown";
}

EncoderKind encoder_kind_from_string(std::string_view name) {
  for (auto k : {EncoderKind::linear_pool, EncoderKind::seq_compressor, EncoderKind::conv_pool,
                 EncoderKind::linear_mean}) {
    if (to_string(k) == name) return k;
  }
  fail(ErrorKind::invalid_argument, fmt::format("unknown encoder kind '{}'", name));
}

std::string_view to_string(Activation act) {
  switch (act) {
    case Activation::gelu: return "gelu";
    case Activation::tanh: return "tanh";
    case Activation::sigmoid: return "sigmoid";
  }
  return "unknown";
}

Activation activation_from_string(std::string_view name) {
  for (auto a : {Activation::gelu, Activation::tanh, Activation::sigmoid}) {
    if (to_string(a) == name) return a;
  }
  fail(ErrorKind::invalid_argument, fmt::format("unknown activation '{}'", name));
}

double activate(Activation act, double x) {
  switch (act) {
    case Activation::gelu: return 0.5 * x * (1.0 + std::erf(x / std::numbers::sqrt2));
    case Activation::tanh: return std::tanh(x);
    case Activation::sigmoid: return 1.0 / (1.0 + std::exp(-x));
  }
  return x;
}

double activate_grad(Activation act, double x) {
  switch (act) {
    case Activation::gelu: {
      const double cdf = 0.5 * (1.0 + std::erf(x / std::numbers::sqrt2));
      const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
      return cdf + x * pdf;
    }
    case Activation::tanh: {
      const double t = std::tanh(x);
      return 1.0 - t * t;
    }
    case Activation::sigmoid: {
      const double s = 1.0 / (1.0 + std::exp(-x));
      return s * (1.0 - s);
    }
  }
  return 1.0;
}

ModelSpec default_model_spec(const Schema& schema, std::size_t embed_dim, EncoderKind kind) {
  ModelSpec spec;
  for (Source s : kAllSources) {
    if (schema.dim(s) == 0) continue;
    spec.branches.push_back({s, kind, schema.dim(s), embed_dim});
  }
  return spec;
}

void validate_model_spec(const ModelSpec& spec) {
  if (spec.branches.empty()) fail(ErrorKind::invalid_argument, "model needs at least one branch");
  const std::size_t d = spec.branches.front().out_dim;
  if (d == 0) fail(ErrorKind::invalid_argument, "branch out_dim must be positive");
  for (const auto& b : spec.branches) {
    if (b.out_dim != d) {
      fail(ErrorKind::invalid_argument, "all branches must share the same out_dim");
    }
    if (b.in_dim == 0) fail(ErrorKind::invalid_argument, "branch in_dim must be positive");
    if ((b.source == Source::token_ll || b.source == Source::token_ent) && b.in_dim != 1) {
      fail(ErrorKind::invalid_argument,
           fmt::format("scalar source {} needs in_dim 1", to_string(b.source)));
    }
  }
  if (spec.fusion.attn_dim == 0) fail(ErrorKind::invalid_argument, "attn_dim must be >= 1");
}

namespace {

// y = W x + b, W is rows x cols row-major.
void affine(std::span<const double> w, std::span<const double> b, const double* x,
            std::size_t rows, std::size_t cols, double* y) {
  for (std::size_t r = 0; r < rows; ++r) {
    double acc = b.empty() ? 0.0 : b[r];
    const double* wr = w.data() + r * cols;
    for (std::size_t c = 0; c < cols; ++c) acc += wr[c] * x[c];
    y[r] = acc;
  }
}

// x += W^T g
void affine_transpose_acc(std::span<const double> w, const double* g, std::size_t rows,
                          std::size_t cols, double* x) {
  for (std::size_t r = 0; r < rows; ++r) {
    const double* wr = w.data() + r * cols;
    const double gr = g[r];
    if (gr == 0.0) continue;
    for (std::size_t c = 0; c < cols; ++c) x[c] += wr[c] * gr;
  }
}

// dW += g x^T
void outer_acc(double* dw, const double* g, const double* x, std::size_t rows, std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) {
    const double gr = g[r];
    if (gr == 0.0) continue;
    double* row = dw + r * cols;
    for (std::size_t c = 0; c < cols; ++c) row[c] += gr * x[c];
  }
}

// Same-length width-3 convolution with zero padding at both edges.
// Weight layout [out][in][3]; tap 0 reads position t-1, tap 2 reads t+1.
void conv3(std::span<const double> w, std::span<const double> b, const double* x,
           std::size_t length, std::size_t in, std::size_t out, double* y) {
  for (std::size_t t = 0; t < length; ++t) {
    for (std::size_t o = 0; o < out; ++o) {
      double acc = b[o];
      for (std::size_t j = 0; j < 3; ++j) {
        if ((t == 0 && j == 0) || t + j - 1 >= length) continue;
        const double* xs = x + (t + j - 1) * in;
        const double* ws = w.data() + o * in * 3;
        for (std::size_t i = 0; i < in; ++i) acc += ws[i * 3 + j] * xs[i];
      }
      y[t * out + o] = acc;
    }
  }
}

void conv3_backward(std::span<const double> w, const double* x, const double* dy,
                    std::size_t length, std::size_t in, std::size_t out, double* dw, double* db,
                    double* dx) {
  for (std::size_t t = 0; t < length; ++t) {
    for (std::size_t o = 0; o < out; ++o) {
      const double g = dy[t * out + o];
      if (g == 0.0) continue;
      db[o] += g;
      for (std::size_t j = 0; j < 3; ++j) {
        if ((t == 0 && j == 0) || t + j - 1 >= length) continue;
        const std::size_t src = t + j - 1;
        for (std::size_t i = 0; i < in; ++i) {
          dw[(o * in + i) * 3 + j] += g * x[src * in + i];
          if (dx != nullptr) dx[src * in + i] += g * w[(o * in + i) * 3 + j];
        }
      }
    }
  }
}

void layer_norm(const double* a, std::span<const double> gamma, std::span<const double> beta,
                std::size_t d, double* xhat, double* y, double& inv_std) {
  double mean = 0.0;
  for (std::size_t i = 0; i < d; ++i) mean += a[i];
  mean /= static_cast<double>(d);
  double var = 0.0;
  for (std::size_t i = 0; i < d; ++i) var += (a[i] - mean) * (a[i] - mean);
  var /= static_cast<double>(d);
  inv_std = 1.0 / std::sqrt(var + kLayerNormEps);
  for (std::size_t i = 0; i < d; ++i) {
    xhat[i] = (a[i] - mean) * inv_std;
    y[i] = gamma[i] * xhat[i] + beta[i];
  }
}

// Given dy, accumulates dgamma/dbeta and writes da.
void layer_norm_backward(const double* dy, const double* xhat, double inv_std,
                         std::span<const double> gamma, std::size_t d, double* dgamma,
                         double* dbeta, double* da) {
  double mean_dxhat = 0.0;
  double mean_dxhat_xhat = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    dgamma[i] += dy[i] * xhat[i];
    dbeta[i] += dy[i];
    const double dxh = dy[i] * gamma[i];
    mean_dxhat += dxh;
    mean_dxhat_xhat += dxh * xhat[i];
  }
  mean_dxhat /= static_cast<double>(d);
  mean_dxhat_xhat /= static_cast<double>(d);
  for (std::size_t i = 0; i < d; ++i) {
    const double dxh = dy[i] * gamma[i];
    da[i] = inv_std * (dxh - mean_dxhat - xhat[i] * mean_dxhat_xhat);
  }
}

double logistic(double z) {
  double p;
  if (z >= 0.0) {
    p = 1.0 / (1.0 + std::exp(-z));
  } else {
    const double e = std::exp(z);
    p = e / (1.0 + e);
  }
  // Keep the probability strictly inside (0, 1) even when the logit saturates.
  return std::clamp(p, std::numeric_limits<double>::min(), std::nextafter(1.0, 0.0));
}

}  // namespace

Detector::Detector(ModelSpec spec) : spec_(std::move(spec)) {
  validate_model_spec(spec_);
  const std::size_t d = spec_.embed_dim();
  for (std::size_t k = 0; k < spec_.branches.size(); ++k) {
    const auto& b = spec_.branches[k];
    const std::string prefix = fmt::format("branch{}.{}", k, to_string(b.source));
    BranchLayout lay;
    switch (b.encoder_kind) {
      case EncoderKind::linear_pool:
        lay.w1 = params_.add(prefix + ".w1", {d, b.in_dim});
        lay.b1 = params_.add(prefix + ".b1", {d});
        lay.gamma = params_.add(prefix + ".ln_gamma", {d});
        lay.beta = params_.add(prefix + ".ln_beta", {d});
        lay.w2 = params_.add(prefix + ".w2", {d, d});
        lay.b2 = params_.add(prefix + ".b2", {d});
        break;
      case EncoderKind::seq_compressor:
        lay.w1 = params_.add(prefix + ".w1", {d, b.in_dim});
        lay.b1 = params_.add(prefix + ".b1", {d});
        lay.gamma = params_.add(prefix + ".ln_gamma", {d});
        lay.beta = params_.add(prefix + ".ln_beta", {d});
        break;
      case EncoderKind::conv_pool:
        lay.w1 = params_.add(prefix + ".conv1_w", {d, b.in_dim, 3});
        lay.b1 = params_.add(prefix + ".conv1_b", {d});
        lay.w2 = params_.add(prefix + ".conv2_w", {d, d, 3});
        lay.b2 = params_.add(prefix + ".conv2_b", {d});
        break;
      case EncoderKind::linear_mean:
        lay.w1 = params_.add(prefix + ".w1", {d, b.in_dim});
        lay.b1 = params_.add(prefix + ".b1", {d});
        break;
    }
    layout_.push_back(lay);
  }
  attn_w_ = params_.add("attn.w_proj", {spec_.fusion.attn_dim, d});
  attn_v_ = params_.add("attn.w_score", {spec_.fusion.attn_dim});
  if (spec_.fusion.gated) gate_w_ = params_.add("gate.w", {d, d});
  head_w_ = params_.add("head.w", {d});
  head_b_ = params_.add("head.b", {1});
}

Detector Detector::initialized(ModelSpec spec, std::uint64_t seed) {
  Detector det(std::move(spec));
  std::mt19937_64 rng(seed);
  auto fill_uniform = [&](std::size_t idx, std::size_t fan_in) {
    if (idx == ParamStore::npos) return;
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> u(-bound, bound);
    for (double& v : det.params_.view(idx)) v = u(rng);
  };
  const std::size_t d = det.spec_.embed_dim();
  for (std::size_t k = 0; k < det.layout_.size(); ++k) {
    const auto& b = det.spec_.branches[k];
    const auto& lay = det.layout_[k];
    const std::size_t conv = b.encoder_kind == EncoderKind::conv_pool ? 3 : 1;
    fill_uniform(lay.w1, b.in_dim * conv);
    fill_uniform(lay.b1, b.in_dim * conv);
    if (lay.gamma != ParamStore::npos) {
      for (double& v : det.params_.view(lay.gamma)) v = 1.0;
    }
    fill_uniform(lay.w2, d * conv);
    fill_uniform(lay.b2, d * conv);
  }
  fill_uniform(det.attn_w_, d);
  fill_uniform(det.attn_v_, det.spec_.fusion.attn_dim);
  fill_uniform(det.gate_w_, d);
  fill_uniform(det.head_w_, d);
  return det;
}

void Detector::check_record(const FeatureRecord& record) const {
  for (const auto& b : spec_.branches) {
    const std::size_t actual = record.actual_length(b.source);
    if (actual > record.stored_rows(b.source)) {
      fail(ErrorKind::shape_mismatch,
           fmt::format("record '{}': {} actual length exceeds stored rows", record.id,
                       to_string(b.source)));
    }
    if (record.stored_rows(b.source) > 0 && record.feature_dim(b.source) != b.in_dim) {
      fail(ErrorKind::shape_mismatch,
           fmt::format("record '{}': {} has dimension {}, model expects {}", record.id,
                       to_string(b.source), record.feature_dim(b.source), b.in_dim));
    }
  }
}

std::vector<BranchInput> make_inputs(const FeatureRecord& record, const ModelSpec& spec) {
  std::vector<BranchInput> inputs;
  inputs.reserve(spec.branches.size());
  for (const auto& b : spec.branches) {
    BranchInput in;
    in.actual = record.actual_length(b.source);
    in.rows = in.actual;
    in.cols = b.in_dim;
    if (in.actual > record.stored_rows(b.source) ||
        (in.actual > 0 && record.feature_dim(b.source) != b.in_dim)) {
      fail(ErrorKind::shape_mismatch,
           fmt::format("record '{}': {} does not match the model's {}-dim branch", record.id,
                       to_string(b.source), b.in_dim));
    }
    in.data.resize(in.rows * in.cols);
    for (std::size_t r = 0; r < in.rows; ++r) {
      for (std::size_t c = 0; c < in.cols; ++c) {
        in.data[r * in.cols + c] = static_cast<double>(record.value(b.source, r, c));
      }
    }
    inputs.push_back(std::move(in));
  }
  return inputs;
}

ForwardTrace::Branch Detector::encode(std::size_t k, const BranchInput& input) const {
  const auto& b = spec_.branches.at(k);
  const auto& lay = layout_[k];
  const std::size_t d = b.out_dim;
  if (input.cols != b.in_dim || input.actual > input.rows ||
      input.data.size() != input.rows * input.cols) {
    fail(ErrorKind::shape_mismatch,
         fmt::format("branch {} expects {} columns, got {}", k, b.in_dim, input.cols));
  }
  ForwardTrace::Branch tr;
  const std::size_t L = input.actual;
  tr.length = L;
  tr.h.assign(d, 0.0);
  if (L == 0) return tr;
  const double inv_len = 1.0 / static_cast<double>(L);
  const double* x = input.data.data();

  switch (b.encoder_kind) {
    case EncoderKind::linear_pool:
    case EncoderKind::seq_compressor: {
      tr.pre1.resize(L * d);
      tr.xhat.resize(L * d);
      tr.inv_std.resize(L);
      tr.act1.resize(L * d);
      tr.act1_mean.assign(d, 0.0);
      std::vector<double> y(d);
      for (std::size_t t = 0; t < L; ++t) {
        affine(params_.view(lay.w1), params_.view(lay.b1), x + t * b.in_dim, d, b.in_dim,
               &tr.pre1[t * d]);
        layer_norm(&tr.pre1[t * d], params_.view(lay.gamma), params_.view(lay.beta), d,
                   &tr.xhat[t * d], y.data(), tr.inv_std[t]);
        for (std::size_t i = 0; i < d; ++i) {
          tr.act1[t * d + i] = std::max(0.0, y[i]);
          tr.act1_mean[i] += tr.act1[t * d + i];
        }
      }
      for (double& v : tr.act1_mean) v *= inv_len;
      if (b.encoder_kind == EncoderKind::linear_pool) {
        // mean_t(W2 r_t + b2) == W2 mean_t(r_t) + b2
        affine(params_.view(lay.w2), params_.view(lay.b2), tr.act1_mean.data(), d, d,
               tr.h.data());
      } else {
        tr.h = tr.act1_mean;
      }
      break;
    }
    case EncoderKind::conv_pool: {
      tr.pre1.resize(L * d);
      tr.act1.resize(L * d);
      tr.pre2.resize(L * d);
      conv3(params_.view(lay.w1), params_.view(lay.b1), x, L, b.in_dim, d, tr.pre1.data());
      for (std::size_t i = 0; i < L * d; ++i) tr.act1[i] = std::max(0.0, tr.pre1[i]);
      conv3(params_.view(lay.w2), params_.view(lay.b2), tr.act1.data(), L, d, d, tr.pre2.data());
      for (std::size_t t = 0; t < L; ++t) {
        for (std::size_t i = 0; i < d; ++i) tr.h[i] += std::max(0.0, tr.pre2[t * d + i]);
      }
      for (double& v : tr.h) v *= inv_len;
      break;
    }
    case EncoderKind::linear_mean: {
      tr.input_mean.assign(b.in_dim, 0.0);
      for (std::size_t t = 0; t < L; ++t) {
        for (std::size_t c = 0; c < b.in_dim; ++c) tr.input_mean[c] += x[t * b.in_dim + c];
      }
      for (double& v : tr.input_mean) v *= inv_len;
      affine(params_.view(lay.w1), params_.view(lay.b1), tr.input_mean.data(), d, b.in_dim,
             tr.h.data());
      break;
    }
  }
  return tr;
}

std::vector<double> Detector::encode_branch(std::size_t k, const BranchInput& input) const {
  return encode(k, input).h;
}

void Detector::fuse_trace(ForwardTrace& tr) const {
  const std::size_t K = tr.branches.size();
  const std::size_t d = spec_.embed_dim();
  const std::size_t A = spec_.fusion.attn_dim;
  tr.attn_pre.assign(K * A, 0.0);
  tr.scores.assign(K, 0.0);
  const auto wa = params_.view(attn_w_);
  const auto va = params_.view(attn_v_);
  for (std::size_t k = 0; k < K; ++k) {
    affine(wa, {}, tr.branches[k].h.data(), A, d, &tr.attn_pre[k * A]);
    double s = 0.0;
    for (std::size_t a = 0; a < A; ++a) {
      s += va[a] * activate(spec_.fusion.score_activation, tr.attn_pre[k * A + a]);
    }
    tr.scores[k] = s;
  }
  const double mx = *std::max_element(tr.scores.begin(), tr.scores.end());
  tr.alpha.assign(K, 0.0);
  double z = 0.0;
  for (std::size_t k = 0; k < K; ++k) z += tr.alpha[k] = std::exp(tr.scores[k] - mx);
  for (double& a : tr.alpha) a /= z;

  tr.fused_pre.assign(d, 0.0);
  for (std::size_t k = 0; k < K; ++k) {
    for (std::size_t i = 0; i < d; ++i) tr.fused_pre[i] += tr.alpha[k] * tr.branches[k].h[i];
  }
  if (spec_.fusion.gated) {
    tr.gate_pre.assign(d, 0.0);
    tr.gate.assign(d, 0.0);
    tr.fused.assign(d, 0.0);
    affine(params_.view(gate_w_), {}, tr.fused_pre.data(), d, d, tr.gate_pre.data());
    for (std::size_t i = 0; i < d; ++i) {
      tr.gate[i] = activate(spec_.fusion.gate_activation, tr.gate_pre[i]);
      tr.fused[i] = tr.fused_pre[i] * tr.gate[i] + tr.fused_pre[i];
    }
  } else {
    tr.fused = tr.fused_pre;
  }
}

FusionResult Detector::fuse(std::span<const std::vector<double>> branch_embeddings) const {
  if (branch_embeddings.size() != spec_.branches.size()) {
    fail(ErrorKind::shape_mismatch, fmt::format("fuse expects {} branch embeddings, got {}",
                                                spec_.branches.size(), branch_embeddings.size()));
  }
  ForwardTrace tr;
  for (const auto& h : branch_embeddings) {
    if (h.size() != spec_.embed_dim()) {
      fail(ErrorKind::shape_mismatch, "branch embedding has the wrong dimension");
    }
    ForwardTrace::Branch br;
    br.h = h;
    tr.branches.push_back(std::move(br));
  }
  fuse_trace(tr);
  return {std::move(tr.fused), std::move(tr.alpha)};
}

ForwardTrace Detector::forward(std::span<const BranchInput> inputs) const {
  const std::size_t K = spec_.branches.size();
  if (inputs.size() != K) {
    fail(ErrorKind::shape_mismatch,
         fmt::format("model has {} branches, got {} inputs", K, inputs.size()));
  }
  ForwardTrace tr;
  tr.branches.reserve(K);
  for (std::size_t k = 0; k < K; ++k) tr.branches.push_back(encode(k, inputs[k]));
  fuse_trace(tr);

  const auto w = params_.view(head_w_);
  double logit = params_.view(head_b_)[0];
  for (std::size_t i = 0; i < tr.fused.size(); ++i) logit += w[i] * tr.fused[i];
  if (!std::isfinite(logit)) {
    fail(ErrorKind::non_finite, "detector forward produced a non-finite logit");
  }
  tr.logit = logit;
  tr.prob = logistic(logit);
  return tr;
}

double Detector::predict(std::span<const BranchInput> inputs) const { return forward(inputs).prob; }

double Detector::predict(const FeatureRecord& record) const {
  check_record(record);
  const auto inputs = make_inputs(record, spec_);
  return predict(inputs);
}

void Detector::backward_branch(std::size_t k, const ForwardTrace::Branch& tr,
                               const BranchInput& input, std::span<const double> dh,
                               std::span<double> grads, BranchInput* input_grad) const {
  const auto& b = spec_.branches[k];
  const auto& lay = layout_[k];
  const std::size_t d = b.out_dim;
  const std::size_t D = b.in_dim;
  const std::size_t L = tr.length;
  if (input_grad != nullptr) {
    input_grad->rows = input.rows;
    input_grad->cols = input.cols;
    input_grad->actual = input.actual;
    input_grad->data.assign(input.rows * input.cols, 0.0);
  }
  if (L == 0) return;
  const double inv_len = 1.0 / static_cast<double>(L);
  const double* x = input.data.data();
  auto g = [&](std::size_t idx) { return grads.data() + params_.tensor(idx).offset; };
  double* dx = input_grad != nullptr ? input_grad->data.data() : nullptr;

  switch (b.encoder_kind) {
    case EncoderKind::linear_pool:
    case EncoderKind::seq_compressor: {
      std::vector<double> dmean(d, 0.0);
      if (b.encoder_kind == EncoderKind::linear_pool) {
        outer_acc(g(lay.w2), dh.data(), tr.act1_mean.data(), d, d);
        for (std::size_t i = 0; i < d; ++i) g(lay.b2)[i] += dh[i];
        affine_transpose_acc(params_.view(lay.w2), dh.data(), d, d, dmean.data());
      } else {
        std::copy(dh.begin(), dh.end(), dmean.begin());
      }
      std::vector<double> dy(d), da(d);
      for (std::size_t t = 0; t < L; ++t) {
        for (std::size_t i = 0; i < d; ++i) {
          dy[i] = tr.act1[t * d + i] > 0.0 ? dmean[i] * inv_len : 0.0;
        }
        layer_norm_backward(dy.data(), &tr.xhat[t * d], tr.inv_std[t], params_.view(lay.gamma), d,
                            g(lay.gamma), g(lay.beta), da.data());
        outer_acc(g(lay.w1), da.data(), x + t * D, d, D);
        for (std::size_t i = 0; i < d; ++i) g(lay.b1)[i] += da[i];
        if (dx != nullptr) affine_transpose_acc(params_.view(lay.w1), da.data(), d, D, dx + t * D);
      }
      break;
    }
    case EncoderKind::conv_pool: {
      std::vector<double> dpre2(L * d);
      for (std::size_t t = 0; t < L; ++t) {
        for (std::size_t i = 0; i < d; ++i) {
          dpre2[t * d + i] = tr.pre2[t * d + i] > 0.0 ? dh[i] * inv_len : 0.0;
        }
      }
      std::vector<double> dact1(L * d, 0.0);
      conv3_backward(params_.view(lay.w2), tr.act1.data(), dpre2.data(), L, d, d, g(lay.w2),
                     g(lay.b2), dact1.data());
      for (std::size_t i = 0; i < L * d; ++i) {
        if (tr.pre1[i] <= 0.0) dact1[i] = 0.0;
      }
      conv3_backward(params_.view(lay.w1), x, dact1.data(), L, D, d, g(lay.w1), g(lay.b1), dx);
      break;
    }
    case EncoderKind::linear_mean: {
      outer_acc(g(lay.w1), dh.data(), tr.input_mean.data(), d, D);
      for (std::size_t i = 0; i < d; ++i) g(lay.b1)[i] += dh[i];
      if (dx != nullptr) {
        std::vector<double> dmean(D, 0.0);
        affine_transpose_acc(params_.view(lay.w1), dh.data(), d, D, dmean.data());
        for (std::size_t t = 0; t < L; ++t) {
          for (std::size_t c = 0; c < D; ++c) dx[t * D + c] = dmean[c] * inv_len;
        }
      }
      break;
    }
  }
}

void Detector::backward(const ForwardTrace& tr, std::span<const BranchInput> inputs, double dlogit,
                        std::span<double> grads, std::vector<BranchInput>* input_grads) const {
  if (grads.size() != params_.size()) {
    fail(ErrorKind::shape_mismatch, "gradient buffer does not match the parameter layout");
  }
  const std::size_t K = spec_.branches.size();
  const std::size_t d = spec_.embed_dim();
  const std::size_t A = spec_.fusion.attn_dim;
  auto g = [&](std::size_t idx) { return grads.data() + params_.tensor(idx).offset; };

  // head
  const auto w = params_.view(head_w_);
  std::vector<double> dfused(d);
  for (std::size_t i = 0; i < d; ++i) {
    g(head_w_)[i] += dlogit * tr.fused[i];
    dfused[i] = dlogit * w[i];
  }
  g(head_b_)[0] += dlogit;

  // gated residual: out = f * (1 + gate(W_g f))
  std::vector<double> dpre(d);
  if (spec_.fusion.gated) {
    std::vector<double> dgate_pre(d);
    for (std::size_t i = 0; i < d; ++i) {
      dpre[i] = dfused[i] * (1.0 + tr.gate[i]);
      dgate_pre[i] = dfused[i] * tr.fused_pre[i] *
                     activate_grad(spec_.fusion.gate_activation, tr.gate_pre[i]);
    }
    outer_acc(g(gate_w_), dgate_pre.data(), tr.fused_pre.data(), d, d);
    affine_transpose_acc(params_.view(gate_w_), dgate_pre.data(), d, d, dpre.data());
  } else {
    dpre = dfused;
  }

  // attention-weighted sum and softmax
  std::vector<std::vector<double>> dh(K, std::vector<double>(d, 0.0));
  std::vector<double> dalpha(K, 0.0);
  for (std::size_t k = 0; k < K; ++k) {
    for (std::size_t i = 0; i < d; ++i) {
      dh[k][i] += tr.alpha[k] * dpre[i];
      dalpha[k] += dpre[i] * tr.branches[k].h[i];
    }
  }
  double weighted = 0.0;
  for (std::size_t k = 0; k < K; ++k) weighted += tr.alpha[k] * dalpha[k];
  const auto wa = params_.view(attn_w_);
  const auto va = params_.view(attn_v_);
  std::vector<double> du(A);
  for (std::size_t k = 0; k < K; ++k) {
    const double ds = tr.alpha[k] * (dalpha[k] - weighted);
    for (std::size_t a = 0; a < A; ++a) {
      const double u = tr.attn_pre[k * A + a];
      g(attn_v_)[a] += ds * activate(spec_.fusion.score_activation, u);
      du[a] = ds * va[a] * activate_grad(spec_.fusion.score_activation, u);
    }
    outer_acc(g(attn_w_), du.data(), tr.branches[k].h.data(), A, d);
    affine_transpose_acc(wa, du.data(), A, d, dh[k].data());
  }

  if (input_grads != nullptr) input_grads->assign(K, BranchInput{});
  for (std::size_t k = 0; k < K; ++k) {
    backward_branch(k, tr.branches[k], inputs[k], dh[k], grads,
                    input_grads != nullptr ? &(*input_grads)[k] : nullptr);
  }
}

}  // namespace faithscan
