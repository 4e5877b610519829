#include "dtlab/attention_metrics.hpp"

#include <cmath>

namespace dtlab {

std::vector<AttentionDistanceResult> attention_distance(
    const std::vector<AttentionRecord>& records) {
  std::vector<AttentionDistanceResult> out;
  out.reserve(records.size());
  for (const auto& rec : records) {
    AttentionDistanceResult result;
    result.block_index = rec.block_index;
    const int L = rec.seq_len;
    const int H = rec.n_heads;
    for (const auto& probs : rec.probs) {
      double total = 0.0;
      for (int h = 0; h < H; ++h) {
        for (int i = 0; i < L; ++i) {
          const auto row = probs.row(static_cast<Index>(h) * L + i);
          const double row_sum = row.sum();
          if (std::abs(row_sum - 1.0) > 1e-6)
            throw std::invalid_argument(
                "attention_distance: attention row does not sum to 1");
          double dist = 0.0;
          for (int j = 0; j < L; ++j) dist += row(j) * std::abs(i - j);
          total += dist;
        }
      }
      result.per_sample.push_back(total / (static_cast<double>(H) * L));
    }
    out.push_back(std::move(result));
  }
  return out;
}

std::vector<AttentionDistanceResult> attention_distance_gap(
    const std::vector<AttentionDistanceResult>& at_epoch,
    const std::vector<AttentionDistanceResult>& at_zero) {
  require(at_epoch.size() == at_zero.size(),
          "attention_distance_gap: block inventory mismatch");
  std::vector<AttentionDistanceResult> out;
  out.reserve(at_epoch.size());
  for (std::size_t b = 0; b < at_epoch.size(); ++b) {
    require(at_epoch[b].block_index == at_zero[b].block_index,
            "attention_distance_gap: block index mismatch");
    require(at_epoch[b].per_sample.size() == at_zero[b].per_sample.size(),
            "attention_distance_gap: sample set mismatch");
    AttentionDistanceResult gap;
    gap.block_index = at_epoch[b].block_index;
    gap.epoch = at_epoch[b].epoch;
    for (std::size_t s = 0; s < at_epoch[b].per_sample.size(); ++s)
      gap.per_sample.push_back(
          std::abs(at_epoch[b].per_sample[s] - at_zero[b].per_sample[s]));
    out.push_back(std::move(gap));
  }
  return out;
}

std::vector<AttentionRecord> capture_attention(const Checkpoint& ckpt,
                                               const Dataset& dataset,
                                               int n_samples, int context_K,
                                               Rng& rng) {
  TrajectoryBatch batch = sample_full_windows(dataset, context_K, n_samples, rng);
  Rng dummy(0);
  CaptureOptions cap;
  cap.attention = true;
  ForwardResult fr = dt_forward(batch, ckpt, RunMode::kEval, dummy, cap);
  return std::move(fr.attention);
}

}  // namespace dtlab
