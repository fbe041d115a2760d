#include "faithscan/baseline.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <Eigen/Dense>
#include <Eigen/SVD>
#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "faithscan/error.hpp"
#include "faithscan/framing.hpp"
#include "faithscan/io_util.hpp"

namespace faithscan {

namespace {

std::pair<double, double> mean_std(const std::vector<float>& v, std::size_t n) {
  if (n == 0) return {0.0, 0.0};
  double mean = 0.0;
  for (std::size_t t = 0; t < n; ++t) mean += v[t];
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (std::size_t t = 0; t < n; ++t) var += (v[t] - mean) * (v[t] - mean);
  return {mean, std::sqrt(var / static_cast<double>(n))};
}

std::vector<double> row_mean(const Matrix& m, std::size_t n, std::size_t dim) {
  std::vector<double> out(dim, 0.0);
  if (n == 0) return out;
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < dim; ++c) out[c] += m.at(r, c);
  }
  for (double& v : out) v /= static_cast<double>(n);
  return out;
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double logistic(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double softplus(double z) { return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))); }

}  // namespace

RawSummary summarize(const FeatureRecord& r) {
  RawSummary s;
  std::tie(s.ll_mean, s.ll_std) = mean_std(r.token_ll, r.lengths.tokens);
  std::tie(s.ent_mean, s.ent_std) = mean_std(r.token_ent, r.lengths.tokens);
  s.emb_mean = row_mean(r.token_emb, r.lengths.tokens, r.token_emb.cols);
  s.patch_mean = row_mean(r.mm_patch, r.lengths.patches, r.mm_patch.cols);
  s.align_mean = row_mean(r.mm_align, r.lengths.aligned, r.mm_align.cols);
  return s;
}

PcaBasis pca_fit(const std::vector<std::vector<double>>& samples, std::size_t max_components) {
  const std::size_t n = samples.size();
  if (n < 2) fail(ErrorKind::invalid_argument, "PCA needs at least two samples");
  const std::size_t dim = samples.front().size();
  if (dim == 0) fail(ErrorKind::invalid_argument, "PCA needs at least one dimension");

  PcaBasis basis;
  basis.dim = dim;
  basis.k = std::min({max_components, n, dim});
  basis.mean.assign(dim, 0.0);
  for (const auto& s : samples) {
    if (s.size() != dim) fail(ErrorKind::shape_mismatch, "PCA samples differ in dimension");
    for (std::size_t c = 0; c < dim; ++c) basis.mean[c] += s[c];
  }
  for (double& m : basis.mean) m /= static_cast<double>(n);

  Eigen::MatrixXd x(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(dim));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < dim; ++c) {
      x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = samples[i][c] - basis.mean[c];
    }
  }
  Eigen::BDCSVD<Eigen::MatrixXd> svd(x, Eigen::ComputeThinV);
  const Eigen::MatrixXd& v = svd.matrixV();
  const Eigen::VectorXd& sv = svd.singularValues();

  basis.components.assign(basis.k * dim, 0.0);
  basis.explained_variance.assign(basis.k, 0.0);
  for (std::size_t j = 0; j < basis.k; ++j) {
    const auto col = static_cast<Eigen::Index>(j);
    std::size_t arg = 0;
    for (std::size_t c = 1; c < dim; ++c) {
      if (std::abs(v(static_cast<Eigen::Index>(c), col)) >
          std::abs(v(static_cast<Eigen::Index>(arg), col))) {
        arg = c;
      }
    }
    const double sign = v(static_cast<Eigen::Index>(arg), col) < 0.0 ? -1.0 : 1.0;
    for (std::size_t c = 0; c < dim; ++c) {
      basis.components[j * dim + c] = sign * v(static_cast<Eigen::Index>(c), col);
    }
    const double s = sv(col);
    basis.explained_variance[j] = s * s / static_cast<double>(n);
  }
  return basis;
}

std::vector<double> pca_transform(std::span<const double> x, const PcaBasis& basis) {
  if (x.size() != basis.dim) {
    fail(ErrorKind::shape_mismatch,
         fmt::format("PCA input has {} dims, basis expects {}", x.size(), basis.dim));
  }
  std::vector<double> centered(basis.dim);
  for (std::size_t c = 0; c < basis.dim; ++c) centered[c] = x[c] - basis.mean[c];
  std::vector<double> z(basis.k);
  for (std::size_t j = 0; j < basis.k; ++j) {
    z[j] = dot({basis.components.data() + j * basis.dim, basis.dim}, centered);
  }
  return z;
}

std::vector<double> pca_inverse(std::span<const double> z, const PcaBasis& basis) {
  if (z.size() != basis.k) fail(ErrorKind::shape_mismatch, "PCA code has the wrong length");
  std::vector<double> x = basis.mean;
  for (std::size_t j = 0; j < basis.k; ++j) {
    for (std::size_t c = 0; c < basis.dim; ++c) x[c] += z[j] * basis.components[j * basis.dim + c];
  }
  return x;
}

ZScore zscore_fit(const std::vector<std::vector<double>>& rows) {
  if (rows.empty()) fail(ErrorKind::invalid_argument, "z-score needs at least one row");
  const std::size_t dim = rows.front().size();
  const double n = static_cast<double>(rows.size());
  ZScore z{std::vector<double>(dim, 0.0), std::vector<double>(dim, 0.0)};
  for (const auto& r : rows) {
    if (r.size() != dim) fail(ErrorKind::shape_mismatch, "z-score rows differ in length");
    for (std::size_t c = 0; c < dim; ++c) z.mean[c] += r[c];
  }
  for (double& m : z.mean) m /= n;
  for (const auto& r : rows) {
    for (std::size_t c = 0; c < dim; ++c) z.scale[c] += (r[c] - z.mean[c]) * (r[c] - z.mean[c]);
  }
  for (double& s : z.scale) {
    s = std::sqrt(s / n);
    if (!(s > 0.0)) s = 1.0;
  }
  return z;
}

std::vector<double> zscore_apply(std::span<const double> x, const ZScore& z) {
  if (x.size() != z.mean.size()) fail(ErrorKind::shape_mismatch, "z-score input has the wrong length");
  std::vector<double> out(x.size());
  for (std::size_t c = 0; c < x.size(); ++c) out[c] = (x[c] - z.mean[c]) / z.scale[c];
  return out;
}

LrModel lr_fit(const std::vector<std::vector<double>>& x, std::span<const int> y,
               const LrConfig& config) {
  const std::size_t n = x.size();
  if (n == 0 || n != y.size()) fail(ErrorKind::shape_mismatch, "LR needs one label per row");
  const std::size_t dim = x.front().size();
  std::size_t count[2] = {0, 0};
  for (std::size_t i = 0; i < n; ++i) {
    if (y[i] != 0 && y[i] != 1) fail(ErrorKind::invalid_argument, "LR labels must be 0 or 1");
    if (x[i].size() != dim) fail(ErrorKind::shape_mismatch, "LR rows differ in length");
    ++count[y[i]];
  }
  if (count[0] == 0 || count[1] == 0) {
    fail(ErrorKind::single_class, "logistic regression needs both classes");
  }

  LrModel m;
  m.w.assign(dim, 0.0);
  const double dn = static_cast<double>(n);
  for (int c = 0; c < 2; ++c) m.class_weight[c] = dn / (2.0 * static_cast<double>(count[c]));

  auto objective = [&](std::span<const double> w, double b) {
    double loss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double z = dot(w, x[i]) + b;
      loss += m.class_weight[y[i]] * (softplus(z) - static_cast<double>(y[i]) * z);
    }
    return loss / dn + dot(w, w) / (2.0 * dn);
  };

  std::vector<double> gw(dim), trial(dim);
  double loss = objective(m.w, m.b);
  double step = 1.0;
  for (m.iterations = 0; m.iterations < config.max_iterations; ++m.iterations) {
    std::fill(gw.begin(), gw.end(), 0.0);
    double gb = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double r = m.class_weight[y[i]] * (logistic(dot(m.w, x[i]) + m.b) - y[i]);
      for (std::size_t c = 0; c < dim; ++c) gw[c] += r * x[i][c];
      gb += r;
    }
    for (std::size_t c = 0; c < dim; ++c) gw[c] = gw[c] / dn + m.w[c] / dn;
    gb /= dn;
    const double gnorm2 = dot(gw, gw) + gb * gb;
    if (std::sqrt(gnorm2) < config.gradient_tolerance) break;

    // Armijo backtracking, starting from twice the last accepted step.
    step = std::min(step * 2.0, 1e6);
    double trial_loss = 0.0;
    while (true) {
      for (std::size_t c = 0; c < dim; ++c) trial[c] = m.w[c] - step * gw[c];
      trial_loss = objective(trial, m.b - step * gb);
      if (trial_loss <= loss - 0.5 * step * gnorm2 || step < 1e-16) break;
      step *= 0.5;
    }
    if (step < 1e-16) break;
    m.w = trial;
    m.b -= step * gb;
    loss = trial_loss;
  }
  if (!std::isfinite(loss)) fail(ErrorKind::non_finite, "logistic regression diverged");
  spdlog::debug("LR stopped after {} iterations, loss {}", m.iterations, loss);
  return m;
}

double lr_predict(const LrModel& model, std::span<const double> x) {
  if (x.size() != model.w.size()) fail(ErrorKind::shape_mismatch, "LR input has the wrong length");
  return logistic(dot(model.w, x) + model.b);
}

std::vector<double> baseline_features(const FeatureRecord& record, const LrPipeline& p) {
  const RawSummary s = summarize(record);
  std::vector<double> f{s.ll_mean, s.ll_std, s.ent_mean, s.ent_std};
  const std::vector<double>* means[3] = {&s.emb_mean, &s.patch_mean, &s.align_mean};
  for (std::size_t k = 0; k < 3; ++k) {
    const auto z = pca_transform(*means[k], p.pca[k]);
    f.insert(f.end(), z.begin(), z.end());
  }
  return f;
}

LrPipeline lr_train(const std::vector<std::vector<double>>& features, std::span<const int> labels,
                    std::array<PcaBasis, 3> pca, const LrConfig& config) {
  LrPipeline p;
  p.pca = std::move(pca);
  p.zscore = zscore_fit(features);
  std::vector<std::vector<double>> standardized;
  standardized.reserve(features.size());
  for (const auto& f : features) standardized.push_back(zscore_apply(f, p.zscore));
  p.lr = lr_fit(standardized, labels, config);
  return p;
}

LrPipeline fit_baseline(const Dataset& train, const LrConfig& config) {
  const std::vector<int> labels = labels_of(train);
  std::vector<RawSummary> summaries;
  summaries.reserve(train.records.size());
  for (const auto& r : train.records) summaries.push_back(summarize(r));

  std::array<PcaBasis, 3> pca;
  for (std::size_t k = 0; k < 3; ++k) {
    std::vector<std::vector<double>> rows;
    for (const auto& s : summaries) {
      rows.push_back(k == 0 ? s.emb_mean : k == 1 ? s.patch_mean : s.align_mean);
    }
    pca[k] = pca_fit(rows);
  }
  LrPipeline shell;
  shell.pca = pca;
  std::vector<std::vector<double>> features;
  features.reserve(train.records.size());
  for (const auto& r : train.records) features.push_back(baseline_features(r, shell));
  return lr_train(features, labels, std::move(pca), config);
}

double lr_score(const FeatureRecord& record, const LrPipeline& pipeline) {
  return lr_predict(pipeline.lr, zscore_apply(baseline_features(record, pipeline), pipeline.zscore));
}

namespace {

void push(std::vector<float>& out, std::span<const double> v) {
  for (double x : v) out.push_back(static_cast<float>(x));
}

std::vector<double> take(const std::vector<float>& payload, std::size_t& cursor, std::size_t n) {
  std::vector<double> out(payload.begin() + static_cast<std::ptrdiff_t>(cursor),
                          payload.begin() + static_cast<std::ptrdiff_t>(cursor + n));
  cursor += n;
  return out;
}

}  // namespace

std::string encode_pipeline(const LrPipeline& p) {
  // Payload order: per PCA (mean, components, explained variance), z-score
  // mean and scale, LR weights, bias, class weights.
  std::vector<float> payload;
  nlohmann::json pca = nlohmann::json::array();
  for (const auto& b : p.pca) {
    pca.push_back({{"dim", b.dim}, {"k", b.k}});
    push(payload, b.mean);
    push(payload, b.components);
    push(payload, b.explained_variance);
  }
  push(payload, p.zscore.mean);
  push(payload, p.zscore.scale);
  push(payload, p.lr.w);
  payload.push_back(static_cast<float>(p.lr.b));
  push(payload, p.lr.class_weight);
  const nlohmann::json header{{"format", "faithscan-lr"},
                              {"pca", pca},
                              {"features", p.lr.w.size()},
                              {"iterations", p.lr.iterations},
                              {"payload_floats", payload.size()}};
  return frame(kPipelineMagic, kPipelineVersion, header, payload);
}

LrPipeline decode_pipeline(std::string_view bytes) {
  const Framed f = unframe(bytes, kPipelineMagic, kPipelineVersion);
  LrPipeline p;
  try {
    if (f.header.at("format") != "faithscan-lr") {
      fail(ErrorKind::malformed_header, "not a baseline pipeline file");
    }
    const auto& pca = f.header.at("pca");
    if (!pca.is_array() || pca.size() != 3) fail(ErrorKind::malformed_header, "expected three PCA bases");
    const std::size_t features = f.header.at("features").get<std::size_t>();
    std::size_t expected = features * 3 + 3;
    std::size_t pca_out = 4;
    for (std::size_t k = 0; k < 3; ++k) {
      p.pca[k].dim = pca[k].at("dim").get<std::size_t>();
      p.pca[k].k = pca[k].at("k").get<std::size_t>();
      expected += p.pca[k].dim + p.pca[k].k * p.pca[k].dim + p.pca[k].k;
      pca_out += p.pca[k].k;
    }
    if (pca_out != features) fail(ErrorKind::malformed_header, "feature count disagrees with PCA sizes");
    if (expected != f.payload.size()) {
      fail(ErrorKind::malformed_header,
           fmt::format("header implies {} floats, payload has {}", expected, f.payload.size()));
    }
    std::size_t cursor = 0;
    for (auto& b : p.pca) {
      b.mean = take(f.payload, cursor, b.dim);
      b.components = take(f.payload, cursor, b.k * b.dim);
      b.explained_variance = take(f.payload, cursor, b.k);
    }
    p.zscore.mean = take(f.payload, cursor, features);
    p.zscore.scale = take(f.payload, cursor, features);
    p.lr.w = take(f.payload, cursor, features);
    p.lr.b = f.payload[cursor++];
    p.lr.class_weight = {f.payload[cursor], f.payload[cursor + 1]};
    p.lr.iterations = f.header.at("iterations").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::malformed_header, fmt::format("bad pipeline header: {}", e.what()));
  }
  for (double s : p.zscore.scale) {
    if (!(s > 0.0)) fail(ErrorKind::malformed_header, "z-score scale must be positive");
  }
  return p;
}

void save_pipeline(const LrPipeline& pipeline, const std::filesystem::path& path) {
  write_file_atomic(path, encode_pipeline(pipeline));
}

LrPipeline load_pipeline(const std::filesystem::path& path) {
  return decode_pipeline(read_file(path));
}

}  // namespace faithscan
