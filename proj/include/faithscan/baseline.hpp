#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "faithscan/featureset.hpp"

namespace faithscan {

// Masked sequence statistics of one record. Std is the population (1/n) std.
struct RawSummary {
  double ll_mean = 0.0;
  double ll_std = 0.0;
  double ent_mean = 0.0;
  double ent_std = 0.0;
  std::vector<double> emb_mean;
  std::vector<double> patch_mean;
  std::vector<double> align_mean;
};

RawSummary summarize(const FeatureRecord& record);

inline constexpr std::size_t kMaxPcaComponents = 64;

struct PcaBasis {
  std::size_t dim = 0;
  std::size_t k = 0;
  std::vector<double> mean;                // dim
  std::vector<double> components;          // k x dim, row-major, unit rows
  std::vector<double> explained_variance;  // k, descending
};

// Components ordered by explained variance; each component's largest-magnitude
// entry is made positive so the basis is reproducible.
PcaBasis pca_fit(const std::vector<std::vector<double>>& samples,
                 std::size_t max_components = kMaxPcaComponents);
std::vector<double> pca_transform(std::span<const double> x, const PcaBasis& basis);
std::vector<double> pca_inverse(std::span<const double> z, const PcaBasis& basis);

struct ZScore {
  std::vector<double> mean;
  std::vector<double> scale;  // population std; 1 where the std is 0
};

ZScore zscore_fit(const std::vector<std::vector<double>>& rows);
std::vector<double> zscore_apply(std::span<const double> x, const ZScore& z);

struct LrConfig {
  std::size_t max_iterations = 500;
  double gradient_tolerance = 1e-6;
};

struct LrModel {
  std::vector<double> w;
  double b = 0.0;
  std::array<double, 2> class_weight{1.0, 1.0};  // n / (2 n_c)
  std::size_t iterations = 0;
};

// Balanced class-weighted logistic regression with an ||w||^2 / (2n) penalty,
// fitted by full-batch gradient descent with backtracking line search.
LrModel lr_fit(const std::vector<std::vector<double>>& x, std::span<const int> y,
               const LrConfig& config = {});
double lr_predict(const LrModel& model, std::span<const double> x);

// Full baseline: summaries -> per-source PCA -> z-score -> logistic regression.
struct LrPipeline {
  std::array<PcaBasis, 3> pca;  // token_emb, mm_patch, mm_align
  ZScore zscore;
  LrModel lr;
};

// Unstandardized feature vector: 4 scalar summaries then the three PCA projections.
std::vector<double> baseline_features(const FeatureRecord& record, const LrPipeline& pipeline);

// Standardizes then fits LR; `pca` must already be fitted.
LrPipeline lr_train(const std::vector<std::vector<double>>& features, std::span<const int> labels,
                    std::array<PcaBasis, 3> pca, const LrConfig& config = {});

// Fits PCA, z-score and LR on `train` only.
LrPipeline fit_baseline(const Dataset& train, const LrConfig& config = {});

double lr_score(const FeatureRecord& record, const LrPipeline& pipeline);

inline constexpr std::string_view kPipelineMagic = "FSLR";
inline constexpr std::uint16_t kPipelineVersion = 1;

std::string encode_pipeline(const LrPipeline& pipeline);
LrPipeline decode_pipeline(std::string_view bytes);
void save_pipeline(const LrPipeline& pipeline, const std::filesystem::path& path);
LrPipeline load_pipeline(const std::filesystem::path& path);

}  // namespace faithscan
