#include "dtlab/cka.hpp"

#include <cmath>

namespace dtlab {

namespace {

double biased_hsic(const Matrix& k, const Matrix& l) {
  const Index n = k.rows();
  const Matrix h = Matrix::Identity(n, n) - Matrix::Constant(n, n, 1.0 / n);
  const Matrix kc = h * k * h;
  const Matrix lc = h * l * h;
  return kc.cwiseProduct(lc).sum() / ((n - 1.0) * (n - 1.0));
}

Matrix center_columns(const Matrix& x) {
  return x.rowwise() - x.colwise().mean();
}

}  // namespace

double cka_from_gram(const Matrix& gram_k, const Matrix& gram_l) {
  require(gram_k.rows() == gram_k.cols() && gram_l.rows() == gram_l.cols(),
          "cka_from_gram: grams must be square");
  require(gram_k.rows() == gram_l.rows(), "cka_from_gram: size mismatch");
  require(gram_k.rows() >= 2, "cka_from_gram: need at least 2 samples");
  const double cross = biased_hsic(gram_k, gram_l);
  const double kk = biased_hsic(gram_k, gram_k);
  const double ll = biased_hsic(gram_l, gram_l);
  // Centered-out grams leave only rounding noise; treat that as degenerate.
  const Index n = gram_k.rows();
  const double scale_k = gram_k.squaredNorm() / ((n - 1.0) * (n - 1.0));
  const double scale_l = gram_l.squaredNorm() / ((n - 1.0) * (n - 1.0));
  if (!(kk > 1e-24 * scale_k) || !(ll > 1e-24 * scale_l))
    throw std::invalid_argument("cka_from_gram: constant representation");
  return cross / std::sqrt(kk * ll);
}

double linear_cka(const Matrix& x, const Matrix& y) {
  require(x.rows() == y.rows(), "linear_cka: sample count mismatch");
  require(x.rows() >= 2, "linear_cka: need at least 2 samples");
  const Matrix xc = center_columns(x);
  const Matrix yc = center_columns(y);
  const double cross = (yc.transpose() * xc).squaredNorm();
  const double xn = (xc.transpose() * xc).norm();
  const double yn = (yc.transpose() * yc).norm();
  if (!(xn > 0.0) || !(yn > 0.0))
    throw std::invalid_argument("linear_cka: all-constant input");
  return cross / (xn * yn);
}

namespace cka_detail {

double unbiased_hsic(const Matrix& gram_k, const Matrix& gram_l) {
  const Index n = gram_k.rows();
  Matrix kt = gram_k;
  Matrix lt = gram_l;
  kt.diagonal().setZero();
  lt.diagonal().setZero();
  const double nn = static_cast<double>(n);
  const double trace_kl = kt.cwiseProduct(lt).sum();
  const double sum_k = kt.sum();
  const double sum_l = lt.sum();
  const Vector k_row = kt.rowwise().sum();
  const Vector l_row = lt.rowwise().sum();
  const double cross = k_row.dot(l_row);  // 1' Kt Lt 1
  return (trace_kl + sum_k * sum_l / ((nn - 1.0) * (nn - 2.0)) -
          2.0 * cross / (nn - 2.0)) /
         (nn * (nn - 3.0));
}

double unbiased_hsic_reference(const Matrix& gram_k, const Matrix& gram_l) {
  const int n = static_cast<int>(gram_k.rows());
  const double nn = static_cast<double>(n);
  double trace_kl = 0.0, sum_k = 0.0, sum_l = 0.0, cross = 0.0;
  for (int i = 0; i < n; ++i) {
    double krow = 0.0, lrow = 0.0;
    for (int j = 0; j < n; ++j) {
      if (j == i) continue;
      trace_kl += gram_k(i, j) * gram_l(i, j);
      krow += gram_k(i, j);
      lrow += gram_l(i, j);
    }
    sum_k += krow;
    sum_l += lrow;
    cross += krow * lrow;
  }
  return (trace_kl + sum_k * sum_l / ((nn - 1.0) * (nn - 2.0)) -
          2.0 * cross / (nn - 2.0)) /
         (nn * (nn - 3.0));
}

}  // namespace cka_detail

double unbiased_linear_cka(const Matrix& x, const Matrix& y) {
  require(x.rows() == y.rows(), "unbiased_linear_cka: sample count mismatch");
  require(x.rows() >= 4, "unbiased_linear_cka: need at least 4 samples");
  const Matrix k = x * x.transpose();
  const Matrix l = y * y.transpose();
  const double cross = cka_detail::unbiased_hsic(k, l);
  const double kk = cka_detail::unbiased_hsic(k, k);
  const double ll = cka_detail::unbiased_hsic(l, l);
  const double denom = std::sqrt(kk * ll);
  if (!std::isfinite(denom) || !(denom > 0.0))
    throw std::invalid_argument("unbiased_linear_cka: degenerate representation");
  return cross / denom;
}

const char* token_type_name(TokenType t) {
  switch (t) {
    case TokenType::kRtg: return "rtg";
    case TokenType::kState: return "state";
    case TokenType::kAction: return "action";
  }
  return "?";
}

int last_step_token_position(TokenType type, int context_K) {
  require(context_K >= 1, "last_step_token_position: K must be >= 1");
  switch (type) {
    case TokenType::kRtg: return 3 * context_K - 3;
    case TokenType::kState: return 3 * context_K - 2;
    case TokenType::kAction: return 3 * context_K - 1;
  }
  throw std::invalid_argument("last_step_token_position: bad token type");
}

ActivationRecord slice_activation(const LayerCapture& capture,
                                  int token_position) {
  require(token_position >= 0 && token_position < capture.seq_len,
          "slice_activation: token position out of range");
  ActivationRecord rec;
  rec.layer_name = capture.layer_name;
  rec.token_position = token_position;
  rec.values.resize(capture.n_samples, capture.values.cols());
  for (int s = 0; s < capture.n_samples; ++s)
    rec.values.row(s) = capture.values.row(
        static_cast<Index>(s) * capture.seq_len + token_position);
  return rec;
}

std::vector<ActivationRecord> slice_activations(
    const std::vector<LayerCapture>& captures, TokenType type, int context_K) {
  const int pos = last_step_token_position(type, context_K);
  std::vector<ActivationRecord> out;
  out.reserve(captures.size());
  for (const auto& c : captures) out.push_back(slice_activation(c, pos));
  return out;
}

std::vector<LayerCapture> capture_activations(const Checkpoint& ckpt,
                                              const Dataset& dataset,
                                              int n_samples, int context_K,
                                              Rng& rng) {
  TrajectoryBatch batch = sample_full_windows(dataset, context_K, n_samples, rng);
  Rng dummy(0);
  CaptureOptions cap;
  cap.activations = true;
  ForwardResult fr = dt_forward(batch, ckpt, RunMode::kEval, dummy, cap);
  return std::move(fr.captures);
}

std::vector<CkaResult> layerwise_cka_profile(
    const std::vector<ActivationRecord>& model_a,
    const std::vector<ActivationRecord>& model_b, CkaEstimator estimator) {
  require(!model_a.empty(), "layerwise_cka_profile: empty inventory");
  require(model_a.size() == model_b.size(),
          "layerwise_cka_profile: inventory size mismatch");
  std::vector<CkaResult> out;
  out.reserve(model_a.size());
  for (std::size_t i = 0; i < model_a.size(); ++i) {
    require(model_a[i].layer_name == model_b[i].layer_name,
            "layerwise_cka_profile: inventory name mismatch at " +
                model_a[i].layer_name);
    CkaResult r;
    r.layer_name = model_a[i].layer_name;
    r.estimator = estimator;
    r.n_samples = static_cast<int>(model_a[i].values.rows());
    r.value = estimator == CkaEstimator::kUnbiased
                  ? unbiased_linear_cka(model_a[i].values, model_b[i].values)
                  : linear_cka(model_a[i].values, model_b[i].values);
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<CkaResult> align_profile_to_half_depth(
    const std::vector<CkaResult>& profile) {
  constexpr int kLayersPerBlock = 7;
  require(profile.size() % (2 * kLayersPerBlock) == 0,
          "align_profile_to_half_depth: profile is not an even block count");
  const int blocks2 = static_cast<int>(profile.size()) / kLayersPerBlock;
  const int blocks = blocks2 / 2;
  std::vector<CkaResult> out;
  out.reserve(static_cast<std::size_t>(blocks) * kLayersPerBlock);
  for (int bi = 0; bi < blocks; ++bi) {
    for (int leaf = 0; leaf < kLayersPerBlock; ++leaf) {
      const auto& a = profile[static_cast<std::size_t>(2 * bi) * kLayersPerBlock +
                              leaf];
      const auto& b =
          profile[static_cast<std::size_t>(2 * bi + 1) * kLayersPerBlock + leaf];
      CkaResult r = a;
      // Rename to the half-depth inventory: keep the leaf, renumber the block.
      const auto leaf_name = a.layer_name.substr(a.layer_name.find('.', 14) + 1);
      r.layer_name = "transformer.h." + std::to_string(bi) + "." + leaf_name;
      r.value = 0.5 * (a.value + b.value);
      out.push_back(std::move(r));
    }
  }
  return out;
}

Matrix cross_layer_cka_matrix(const std::vector<ActivationRecord>& acts,
                              CkaEstimator estimator) {
  return cross_model_cka_matrix(acts, acts, estimator);
}

Matrix cross_model_cka_matrix(const std::vector<ActivationRecord>& model_a,
                              const std::vector<ActivationRecord>& model_b,
                              CkaEstimator estimator) {
  require(!model_a.empty() && !model_b.empty(),
          "cross_model_cka_matrix: empty inventory");
  Matrix out(static_cast<Index>(model_a.size()),
             static_cast<Index>(model_b.size()));
  for (std::size_t i = 0; i < model_a.size(); ++i)
    for (std::size_t j = 0; j < model_b.size(); ++j)
      out(static_cast<Index>(i), static_cast<Index>(j)) =
          estimator == CkaEstimator::kUnbiased
              ? unbiased_linear_cka(model_a[i].values, model_b[j].values)
              : linear_cka(model_a[i].values, model_b[j].values);
  return out;
}

std::vector<std::string> layers_above_threshold(
    const std::vector<CkaResult>& profile, double threshold) {
  std::vector<std::string> out;
  for (const auto& r : profile)
    if (r.value > threshold) out.push_back(r.layer_name);
  return out;
}

}  // namespace dtlab
