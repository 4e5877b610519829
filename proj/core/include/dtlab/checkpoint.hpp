#ifndef DTLAB_CHECKPOINT_HPP
#define DTLAB_CHECKPOINT_HPP

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "dtlab/matrix.hpp"
#include "dtlab/rng.hpp"

namespace dtlab {

// Trunk layout follows the GPT2 block listing: pre-norm, c_attn/c_proj
// attention, GELU MLP. Control-head parameters exist when state_dim and
// action_dim are set; token-head parameters when vocab_size is set. The two
// heads share the trunk, so checkpoints transfer between pre-training and
// fine-tuning by parameter name.
struct ModelConfig {
  int n_blocks = 3;
  int embed_dim = 64;
  int n_heads = 1;
  int context_K = 20;
  int state_dim = 0;
  int action_dim = 0;
  int max_timestep = 1024;
  double dropout_resid = 0.2;
  double dropout_attn = 0.1;
  int vocab_size = 0;
  std::uint64_t seed = 0;
  double action_bound = 1.0;

  bool has_control_head() const { return state_dim > 0 && action_dim > 0; }
  bool has_token_head() const { return vocab_size > 0; }
  bool trunk_compatible(const ModelConfig& other) const {
    return n_blocks == other.n_blocks && embed_dim == other.embed_dim &&
           n_heads == other.n_heads;
  }
  void validate() const;

  // 3 blocks, embed 64, 1 head, K=20.
  static ModelConfig desk(int state_dim, int action_dim);
  // 12 blocks, embed 768, 1 head, K=20.
  static ModelConfig paper(int state_dim, int action_dim);
};

// Canonical parameter names for a config, in block order. Gradient vectors,
// the optimizer and the serialized payload all use this order.
std::vector<std::string> canonical_param_names(const ModelConfig& config);

// rows x cols of a named parameter; vectors are 1 x n.
std::pair<Index, Index> param_shape(const ModelConfig& config,
                                    const std::string& name);

// Trunk parameter sets ("transformer.h.*") in the block-major tick order used
// by the similarity and gradient-ratio reports.
std::vector<std::string> trunk_param_names(const ModelConfig& config);

// Capture points inside each block, in depth order:
// ln_1, attn.c_attn, attn.c_proj, ln_2, mlp.c_fc, mlp.c_proj, mlp.dropout.
std::vector<std::string> block_layer_inventory(const ModelConfig& config);

struct Checkpoint {
  ModelConfig config;
  std::string provenance = "random-init";
  std::vector<std::string> lineage;  // provenance of ancestors, oldest first
  std::vector<std::string> names;    // canonical order
  std::unordered_map<std::string, Matrix> params;

  const Matrix& at(const std::string& name) const;
  Matrix& at(const std::string& name);
  Index n_params() const;
  Vector flatten() const;
  void unflatten(const Vector& flat);

  // N(0, 0.02) weights, zero biases, unit layer-norm scales.
  static Checkpoint init_random(const ModelConfig& config, Rng& rng,
                                const std::string& provenance = "random-init");
  static Checkpoint init_random(const ModelConfig& config);
};

// Gradients (or any per-parameter tensors) matching a checkpoint's inventory.
struct GradientSet {
  std::vector<std::string> names;
  std::unordered_map<std::string, Matrix> values;

  const Matrix& at(const std::string& name) const;
  Matrix& at(const std::string& name);
  Vector flatten() const;
  void unflatten(const Vector& flat);

  static GradientSet zeros_like(const Checkpoint& ckpt);
};

// All "transformer.h.<block_index>." parameters come from donor, the rest
// from recipient. Both parents are recorded in the lineage.
Checkpoint replace_block(const Checkpoint& recipient, const Checkpoint& donor,
                         int block_index);

// Pairwise means: out[i] = (v[2i] + v[2i+1]) / 2. Used to put a 2L-deep
// model's per-layer series on an L-deep axis.
std::vector<double> align_layer_series(const std::vector<double>& values);

// Builds a control-head checkpoint from any trunk-compatible source: trunk
// parameters are copied, head parameters freshly initialized.
Checkpoint adapt_for_control(const Checkpoint& base, const ModelConfig& target,
                             Rng& rng);

}  // namespace dtlab

#endif
