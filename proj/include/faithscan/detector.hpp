#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "faithscan/featureset.hpp"
#include "faithscan/params.hpp"

namespace faithscan {

enum class EncoderKind {
  linear_pool,     // Linear -> LayerNorm -> ReLU -> Linear, masked mean over positions
  seq_compressor,  // Linear -> LayerNorm -> ReLU, masked mean
  conv_pool,       // Conv1d(k=3) -> ReLU -> Conv1d(k=3) -> ReLU, masked mean
  linear_mean,     // single Linear, masked mean (no normalization)
};

enum class Activation { gelu, tanh, sigmoid };

std::string_view to_string(EncoderKind kind);
EncoderKind encoder_kind_from_string(std::string_view name);
std::string_view to_string(Activation act);
Activation activation_from_string(std::string_view name);

struct BranchSpec {
  Source source = Source::token_emb;
  EncoderKind encoder_kind = EncoderKind::linear_pool;
  std::size_t in_dim = 1;
  std::size_t out_dim = 64;

  bool operator==(const BranchSpec&) const = default;
};

struct FusionSpec {
  bool gated = true;
  Activation score_activation = Activation::gelu;
  std::size_t attn_dim = 32;
  Activation gate_activation = Activation::tanh;

  bool operator==(const FusionSpec&) const = default;
};

struct ModelSpec {
  std::vector<BranchSpec> branches;
  FusionSpec fusion;

  std::size_t embed_dim() const { return branches.empty() ? 0 : branches.front().out_dim; }
  bool operator==(const ModelSpec&) const = default;
};

// All five sources with one encoder kind, sized from a dataset schema.
ModelSpec default_model_spec(const Schema& schema, std::size_t embed_dim = 64,
                             EncoderKind kind = EncoderKind::linear_pool);

void validate_model_spec(const ModelSpec& spec);

// One branch's input sequence in float64. Only the first `actual` rows are
// read; rows beyond are padding.
struct BranchInput {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t actual = 0;
  std::vector<double> data;

  double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
};

std::vector<BranchInput> make_inputs(const FeatureRecord& record, const ModelSpec& spec);

double activate(Activation act, double x);
double activate_grad(Activation act, double x);

struct FusionResult {
  std::vector<double> fused;  // gated residual output (or fused_pre when ungated)
  std::vector<double> alpha;  // attention simplex over branches
};

// Everything the backward pass needs from one forward evaluation.
struct ForwardTrace {
  struct Branch {
    std::size_t length = 0;
    // Per-position intermediates, row-major length x out_dim.
    std::vector<double> pre1;      // first linear/conv output
    std::vector<double> xhat;      // layer-norm normalized values
    std::vector<double> inv_std;   // one per position
    std::vector<double> act1;      // post-ReLU (or post-LN-ReLU) activations
    std::vector<double> pre2;      // second conv output
    std::vector<double> act1_mean; // masked mean of act1 (linear_pool)
    std::vector<double> input_mean;
    std::vector<double> h;
  };
  std::vector<Branch> branches;
  std::vector<double> attn_pre;   // K x attn_dim (W_a h_k)
  std::vector<double> scores;     // K
  std::vector<double> alpha;      // K
  std::vector<double> fused_pre;  // d
  std::vector<double> gate_pre;   // d
  std::vector<double> gate;       // d
  std::vector<double> fused;      // d
  double logit = 0.0;
  double prob = 0.5;
};

class Detector {
 public:
  explicit Detector(ModelSpec spec);

  // PyTorch-style uniform(+-1/sqrt(fan_in)) weights, unit LayerNorm scale,
  // zero LayerNorm shift and head bias.
  static Detector initialized(ModelSpec spec, std::uint64_t seed);

  const ModelSpec& spec() const { return spec_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

  void check_record(const FeatureRecord& record) const;

  std::vector<double> encode_branch(std::size_t k, const BranchInput& input) const;
  FusionResult fuse(std::span<const std::vector<double>> branch_embeddings) const;

  double predict(const FeatureRecord& record) const;
  double predict(std::span<const BranchInput> inputs) const;

  ForwardTrace forward(std::span<const BranchInput> inputs) const;

  // Back-propagates d(objective)/d(logit) = `dlogit` through `trace`.
  // Parameter gradients are accumulated into `grads` (size params().size());
  // when `input_grads` is non-null it receives d(objective)/d(input) per branch.
  void backward(const ForwardTrace& trace, std::span<const BranchInput> inputs, double dlogit,
                std::span<double> grads, std::vector<BranchInput>* input_grads = nullptr) const;

 private:
  struct BranchLayout {
    std::size_t w1 = ParamStore::npos, b1 = ParamStore::npos;
    std::size_t gamma = ParamStore::npos, beta = ParamStore::npos;
    std::size_t w2 = ParamStore::npos, b2 = ParamStore::npos;
  };

  ForwardTrace::Branch encode(std::size_t k, const BranchInput& input) const;
  void fuse_trace(ForwardTrace& trace) const;
  void backward_branch(std::size_t k, const ForwardTrace::Branch& trace, const BranchInput& input,
                       std::span<const double> dh, std::span<double> grads,
                       BranchInput* input_grad) const;

  ModelSpec spec_;
  ParamStore params_;
  std::vector<BranchLayout> layout_;
  std::size_t attn_w_ = ParamStore::npos;
  std::size_t attn_v_ = ParamStore::npos;
  std::size_t gate_w_ = ParamStore::npos;
  std::size_t head_w_ = ParamStore::npos;
  std::size_t head_b_ = ParamStore::npos;
};

inline constexpr double kLayerNormEps = 1e-5;

}  // namespace faithscan
