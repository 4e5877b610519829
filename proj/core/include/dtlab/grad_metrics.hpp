#ifndef DTLAB_GRAD_METRICS_HPP
#define DTLAB_GRAD_METRICS_HPP

#include <string>
#include <vector>

#include "dtlab/trainer.hpp"

namespace dtlab {

struct GradientSample {
  int sample_id = 0;
  GradientSet grads;  // post-clip values when clipped
  Vector flat;        // cached flattened view, canonical order
  bool clipped = false;
  double pre_clip_norm = 0.0;
};

// Loss gradient of single-window batches, one per sample, dropout disabled.
// With clip set, each sample is clipped to clip_max_norm on its global norm.
// context_K 0 means "use the checkpoint's context length".
std::vector<GradientSample> per_sample_gradients(const Checkpoint& ckpt,
                                                 const Dataset& dataset,
                                                 int n_samples, bool clip,
                                                 Rng& rng,
                                                 double clip_max_norm = 0.25,
                                                 int context_K = 0);

// Minimum cosine similarity over the full n x n pair matrix (self-pairs
// included; they are 1 and never the minimum).
double gradient_confusion(const std::vector<GradientSample>& samples);

struct BoxStats {
  double q1 = 0.0;
  double median = 0.0;
  double q3 = 0.0;
  double whisker_lo = 0.0;  // quartiles +- 1.5 IQR, clamped to the data
  double whisker_hi = 0.0;
};

BoxStats box_stats(const std::vector<double>& values);

struct GradientNormStats {
  std::vector<double> per_sample_norms;  // post-clip global norms
  BoxStats box;
};

GradientNormStats gradient_norm_stats(const std::vector<GradientSample>& samples);

struct NamedRatio {
  std::string name;  // tick label
  double ratio = 0.0;
};

// ratio_i = mean_s ||g_i(s)|| / sum_j mean_s ||g_j(s)|| over the trunk
// parameter sets, in tick order.
std::vector<NamedRatio> per_paramset_norm_ratio(
    const std::vector<GradientSample>& samples);

}  // namespace dtlab

#endif
