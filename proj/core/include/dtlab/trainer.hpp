#ifndef DTLAB_TRAINER_HPP
#define DTLAB_TRAINER_HPP

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "dtlab/corpus.hpp"
#include "dtlab/transformer.hpp"

namespace dtlab {

struct TrainConfig {
  int epochs = 2;
  int steps_per_epoch = 300;
  int batch_size = 64;
  double learning_rate = 1e-3;
  int warmup_steps = 60;
  double weight_decay = 1e-4;
  double clip_max_norm = 0.25;  // <= 0 disables clipping
  int context_K = 20;
  int eval_episodes = 10;
  double rtg_target = 0.0;  // pre-scaling return target for rollouts
  std::uint64_t seed = 0;
  int probe_batches = 20;  // fixed eval-mode batches scoring action error

  // 40 epochs x 2500 steps, batch 64, lr 1e-4, warmup 5000, clip 0.25.
  static TrainConfig paper();
  // 2 epochs x 300 steps; small-model settings used across the test suite.
  static TrainConfig desk();
};

struct EpochLog {
  int epoch = 0;
  double mean_action_error = 0.0;  // eval-mode loss on the probe batches
  double mean_return = 0.0;
  double normalized_score = 0.0;
  double grad_norm_p50 = 0.0;  // pre-clip, over the epoch's steps
  double grad_norm_max = 0.0;
  double wall_time_s = 0.0;  // diagnostics only, never serialized
};

struct StepInfo {
  std::int64_t step = 0;  // 1-based global step
  double loss = 0.0;
  double pre_clip_norm = 0.0;
  double post_clip_norm = 0.0;
  double applied_lr = 0.0;
};
using StepObserver = std::function<void(const StepInfo&)>;

struct FinetuneResult {
  Checkpoint final_checkpoint;
  std::vector<Checkpoint> epoch_checkpoints;  // index = epoch, 0 = input model
  std::vector<EpochLog> logs;                 // index = epoch
};

// Per step: sample_batch -> loss/grads -> clip -> warmup-scaled Adam.
// Per epoch: probe action error, evaluation rollouts, snapshot. The epoch-0
// snapshot is the untouched input checkpoint.
FinetuneResult finetune(const Checkpoint& init, const Dataset& dataset,
                        const TrainConfig& config, Rng& rng,
                        const StepObserver& observer = nullptr);

struct PretrainResult {
  Checkpoint checkpoint;
  double initial_loss = 0.0;         // first-step loss before any update
  std::vector<double> epoch_losses;  // mean training loss per epoch
};

// Next-token training over the corpus with the same optimizer policy.
// The checkpoint's provenance records the corpus modality.
PretrainResult pretrain(const ModelConfig& config, const Corpus& corpus,
                        const TrainConfig& train_config, Rng& rng);

struct EvalResult {
  double mean_return = 0.0;
  std::vector<double> episode_returns;
};

// A policy maps the current K-step window to the next action. The default
// checkpoint policy reads dt_forward's last-step prediction.
using Policy = std::function<Vector(const TrajectoryBatch& window)>;

Policy checkpoint_policy(const Checkpoint& ckpt);

// Autoregressive rollout with return-to-go conditioning: the first rtg token
// is rtg_target, and each received reward decrements it.
EvalResult evaluate_policy_fn(const Policy& policy, const MdpSpec& spec,
                              int context_K, int episodes, double rtg_target,
                              double return_scale, Rng& rng);

EvalResult evaluate_policy(const Checkpoint& ckpt, const MdpSpec& spec,
                           const TrainConfig& config, double return_scale,
                           Rng& rng);

struct ProtocolSeries {
  std::string label;
  std::vector<EpochLog> logs;
  std::vector<double> smoothed_action_error;  // ema factor 0.8
  std::vector<double> smoothed_mean_return;
};

// For every block index: replace into the recipient, fine-tune without
// context (K forced to 1), log the curve. The two unmodified models are
// trained as baselines, so the result has n_blocks + 2 labeled series.
// Every run consumes an identical rng stream for a controlled comparison.
std::vector<ProtocolSeries> run_block_replacement_protocol(
    const Checkpoint& random_ckpt, const Checkpoint& pretrained_ckpt,
    const Dataset& dataset, TrainConfig config, Rng& rng);

// CSV columns: epoch,action_error,mean_return,normalized_score,
// grad_norm_p50,grad_norm_max.
void write_epoch_log_csv(const std::filesystem::path& path,
                         const std::vector<EpochLog>& logs,
                         const std::string& header_comment = "");

double percentile_sorted(std::vector<double> values, double p);

}  // namespace dtlab

#endif
