#ifndef DTLAB_ATTENTION_METRICS_HPP
#define DTLAB_ATTENTION_METRICS_HPP

#include <vector>

#include "dtlab/transformer.hpp"

namespace dtlab {

struct AttentionDistanceResult {
  int block_index = 0;
  std::vector<double> per_sample;  // token-position units, in [0, L-1]
  int epoch = -1;
};

// Attention-weighted mean |query - key| distance, averaged over heads and
// query positions; one scalar per sample per block.
std::vector<AttentionDistanceResult> attention_distance(
    const std::vector<AttentionRecord>& records);

// Per-sample |d(epoch) - d(0)|, matched sample sets.
std::vector<AttentionDistanceResult> attention_distance_gap(
    const std::vector<AttentionDistanceResult>& at_epoch,
    const std::vector<AttentionDistanceResult>& at_zero);

// Runs the model on full-history windows and returns per-block attention
// probabilities.
std::vector<AttentionRecord> capture_attention(const Checkpoint& ckpt,
                                               const Dataset& dataset,
                                               int n_samples, int context_K,
                                               Rng& rng);

}  // namespace dtlab

#endif
