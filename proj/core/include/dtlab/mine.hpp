#ifndef DTLAB_MINE_HPP
#define DTLAB_MINE_HPP

#include <string>
#include <vector>

#include "dtlab/transformer.hpp"

namespace dtlab {

struct MineConfig {
  int hidden_width = 400;
  int hidden_layers = 2;
  int iterations = 1000;
  double learning_rate = 1e-4;
  // full-batch policy: every iteration uses all n paired samples plus an
  // in-batch permutation for the marginal term
  std::uint64_t seed = 0;
};

struct MiEstimate {
  double value = 0.0;  // nats
  bool excluded = false;  // set iff the final objective was non-finite
  std::string pair;
  std::string layer;
  int token_position = -1;
  std::string token_type;
  int n_samples = 0;
};

// Variational lower bound sup_theta E_joint[T] - log E_marg[e^T], optimized
// over a ReLU MLP statistics network by Adam. Inputs are standardized per
// dimension; the reported value is the objective at the last iteration.
MiEstimate mine_estimate(const Matrix& x_samples, const Matrix& y_samples,
                         const MineConfig& config, Rng& rng);

namespace mine_detail {

struct NetSpec {
  int in_dim = 0;
  int hidden_width = 400;
  int hidden_layers = 2;
};

Index n_net_params(const NetSpec& spec);

// Linear-layer init, uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)).
Vector init_net_params(const NetSpec& spec, Rng& rng);

// Objective and its parameter gradient for a fixed permutation, in f64.
// The production estimator runs the identical template at f32 for
// throughput; this path exists for gradient verification and tests.
double objective_and_grads_f64(const NetSpec& spec, const Vector& params,
                               const Matrix& x, const Matrix& y,
                               const std::vector<int>& perm, Vector* grads);

}  // namespace mine_detail

enum class MiDirection { kInputToRepr, kReprToLabel };
enum class BlockDepth { kShallow, kMiddle, kDeep };

int block_index_for_depth(BlockDepth depth, int n_blocks);

struct MiProfilePoint {
  int token_position = -1;
  std::string token_type;  // rtg / state / action
  MiEstimate estimate;
};

// MI between each input token and the chosen block's representation at the
// last state token (input->repr), or between the last action and the
// representation at each position (repr->label). Token positions run over
// the 3K-token sequence except the final action token. Estimates fan out
// over `workers` threads; results are deterministic in the seed.
std::vector<MiProfilePoint> mi_profile_repr(const Checkpoint& ckpt,
                                            const Dataset& dataset,
                                            MiDirection direction,
                                            BlockDepth depth,
                                            const MineConfig& config,
                                            int n_samples, Rng& rng,
                                            int workers = 1);

// Array-level entry points used by mi_profile_repr and by tests that inject
// stub representations.
std::vector<MiProfilePoint> mi_profile_input_to_repr(
    const std::vector<Matrix>& token_inputs,
    const std::vector<std::string>& token_types, const Matrix& repr_last_state,
    const MineConfig& config, Rng& rng, int workers = 1);

std::vector<MiProfilePoint> mi_profile_repr_to_label(
    const std::vector<Matrix>& repr_at_positions,
    const std::vector<std::string>& token_types, const Matrix& last_action,
    const MineConfig& config, Rng& rng, int workers = 1);

enum class MiPair { kStateAction, kRtgAction };

// Data-level MI between same-step pairs over K-step windows; one estimate
// per context step.
std::vector<MiProfilePoint> mi_data_level(const Dataset& dataset, MiPair pair,
                                          int context_K, const MineConfig& config,
                                          int n_samples, Rng& rng,
                                          int workers = 1);

}  // namespace dtlab

#endif
