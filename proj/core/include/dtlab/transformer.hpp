#ifndef DTLAB_TRANSFORMER_HPP
#define DTLAB_TRANSFORMER_HPP

#include <string>
#include <vector>

#include "dtlab/checkpoint.hpp"
#include "dtlab/trajectory.hpp"

namespace dtlab {

enum class RunMode { kTrain, kEval };

struct CaptureOptions {
  bool activations = false;
  bool attention = false;
};

// Full-sequence activation capture at a named sub-layer output: one row per
// (sample, token), laid out sample-major.
struct LayerCapture {
  std::string layer_name;
  int n_samples = 0;
  int seq_len = 0;
  Matrix values;  // (n_samples * seq_len) x dim
};

// Activations sliced at a single token position (metrics consume this form).
struct ActivationRecord {
  std::string layer_name;
  int token_position = 0;
  Matrix values;  // n_samples x dim
};

// Causal attention probabilities, before attention dropout.
struct AttentionRecord {
  int block_index = 0;
  int n_heads = 0;
  int seq_len = 0;
  std::vector<Matrix> probs;  // per sample: (n_heads * seq_len) x seq_len
};

struct ForwardResult {
  Matrix actions;  // batch x (K * action_dim), tanh-squashed to action_bound
  std::vector<LayerCapture> captures;      // block_layer_inventory order
  std::vector<AttentionRecord> attention;  // one per block
};

// Interleaved (return-to-go, state, action) token embedding. The token at
// context step k and type delta sits at sequence position 3k + delta with
// delta 0 = rtg, 1 = state, 2 = action; the shared timestep embedding is
// added to all three, then embed_ln normalizes the whole sequence.
Matrix embed_inputs(const TrajectoryBatch& batch, const Checkpoint& ckpt);

ForwardResult dt_forward(const TrajectoryBatch& batch, const Checkpoint& ckpt,
                         RunMode mode, Rng& rng,
                         const CaptureOptions& capture = {});

// Mean over unmasked (sample, step) of ||a_hat - a||^2 / action_dim.
double dt_loss(const TrajectoryBatch& batch, const Checkpoint& ckpt,
               RunMode mode, Rng& rng);

struct LossResult {
  double loss = 0.0;
  GradientSet grads;
};

LossResult dt_loss_and_grads(const TrajectoryBatch& batch, const Checkpoint& ckpt,
                             Rng& rng, RunMode mode = RunMode::kTrain);

struct TokenBatch {
  int batch_size = 0;
  int seq_len = 0;
  std::vector<std::uint32_t> ids;  // row-major batch_size x seq_len

  std::uint32_t id(int b, int t) const {
    return ids[static_cast<std::size_t>(b) * seq_len + t];
  }
};

// Next-token cross-entropy over the shared trunk (wte + wpe embeddings,
// lm_head readout).
double lm_loss(const TokenBatch& batch, const Checkpoint& ckpt, RunMode mode,
               Rng& rng);

LossResult lm_loss_and_grads(const TokenBatch& batch, const Checkpoint& ckpt,
                             Rng& rng, RunMode mode = RunMode::kTrain);

}  // namespace dtlab

#endif
