#include "dtlab/grad_metrics.hpp"

#include <algorithm>
#include <cmath>

#include "dtlab/numerics.hpp"
#include "dtlab/optim.hpp"
#include "dtlab/param_metrics.hpp"

namespace dtlab {

std::vector<GradientSample> per_sample_gradients(const Checkpoint& ckpt,
                                                 const Dataset& dataset,
                                                 int n_samples, bool clip,
                                                 Rng& rng, double clip_max_norm,
                                                 int context_K) {
  require(n_samples >= 1, "per_sample_gradients: n_samples must be >= 1");
  const int K = context_K > 0 ? context_K : ckpt.config.context_K;
  std::vector<GradientSample> out;
  out.reserve(static_cast<std::size_t>(n_samples));
  Rng dummy(0);
  for (int i = 0; i < n_samples; ++i) {
    TrajectoryBatch batch = sample_batch(dataset, K, 1, rng);
    LossResult lr;
    try {
      lr = dt_loss_and_grads(batch, ckpt, dummy, RunMode::kEval);
    } catch (const NumericError& e) {
      throw NumericError(std::string(e.what()) + " for sample " +
                         std::to_string(i));
    }
    GradientSample sample;
    sample.sample_id = i;
    sample.flat = lr.grads.flatten();
    if (!all_finite(sample.flat))
      throw NumericError("per_sample_gradients: non-finite gradient for sample " +
                         std::to_string(i));
    sample.pre_clip_norm = sample.flat.norm();
    if (clip) {
      clip_gradients_global_norm(sample.flat, clip_max_norm);
      lr.grads.unflatten(sample.flat);
      sample.clipped = true;
    }
    sample.grads = std::move(lr.grads);
    out.push_back(std::move(sample));
  }
  return out;
}

double gradient_confusion(const std::vector<GradientSample>& samples) {
  require(samples.size() >= 2, "gradient_confusion: need at least 2 samples");
  double min_cos = 1.0;
  for (const auto& a : samples)
    for (const auto& b : samples)
      min_cos = std::min(min_cos, cosine_similarity(a.flat, b.flat));
  return min_cos;
}

BoxStats box_stats(const std::vector<double>& values) {
  require(!values.empty(), "box_stats: empty input");
  std::vector<double> sorted = values;
  std::sort(sorted.begin(), sorted.end());
  BoxStats s;
  s.q1 = percentile_sorted(sorted, 0.25);
  s.median = percentile_sorted(sorted, 0.5);
  s.q3 = percentile_sorted(sorted, 0.75);
  const double iqr = s.q3 - s.q1;
  const double lo_fence = s.q1 - 1.5 * iqr;
  const double hi_fence = s.q3 + 1.5 * iqr;
  s.whisker_lo = sorted.back();
  s.whisker_hi = sorted.front();
  for (double v : sorted) {
    if (v >= lo_fence) {
      s.whisker_lo = v;
      break;
    }
  }
  for (auto it = sorted.rbegin(); it != sorted.rend(); ++it) {
    if (*it <= hi_fence) {
      s.whisker_hi = *it;
      break;
    }
  }
  return s;
}

GradientNormStats gradient_norm_stats(const std::vector<GradientSample>& samples) {
  require(!samples.empty(), "gradient_norm_stats: empty input");
  GradientNormStats stats;
  stats.per_sample_norms.reserve(samples.size());
  for (const auto& s : samples) stats.per_sample_norms.push_back(s.flat.norm());
  stats.box = box_stats(stats.per_sample_norms);
  return stats;
}

std::vector<NamedRatio> per_paramset_norm_ratio(
    const std::vector<GradientSample>& samples) {
  require(!samples.empty(), "per_paramset_norm_ratio: empty input");
  std::vector<std::string> trunk_names;
  for (const auto& name : samples.front().grads.names)
    if (name.rfind("transformer.h.", 0) == 0) trunk_names.push_back(name);
  require(!trunk_names.empty(), "per_paramset_norm_ratio: no trunk parameters");

  std::vector<double> mean_norms(trunk_names.size(), 0.0);
  for (const auto& sample : samples)
    for (std::size_t i = 0; i < trunk_names.size(); ++i)
      mean_norms[i] += sample.grads.at(trunk_names[i]).norm();
  double total = 0.0;
  for (auto& m : mean_norms) {
    m /= static_cast<double>(samples.size());
    total += m;
  }
  std::vector<NamedRatio> out;
  out.reserve(trunk_names.size());
  for (std::size_t i = 0; i < trunk_names.size(); ++i)
    out.push_back(NamedRatio{tick_label(trunk_names[i]),
                             total > 0.0 ? mean_norms[i] / total : 0.0});
  return out;
}

}  // namespace dtlab
