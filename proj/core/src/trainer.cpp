#include "dtlab/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>

#include "dtlab/numerics.hpp"
#include "dtlab/optim.hpp"

namespace dtlab {

namespace {

constexpr std::uint64_t kTrainStream = 0x7271;
constexpr std::uint64_t kDropStream = 0xd209;
constexpr std::uint64_t kProbeStream = 0x9206e;
constexpr std::uint64_t kEvalStream = 0xe7a1;
constexpr std::uint64_t kInitStream = 0x1a17;

double probe_action_error(const Checkpoint& ckpt, const Dataset& dataset,
                          const TrainConfig& config, const Rng& base) {
  Rng probe_rng = base.derive(kProbeStream);  // same batches every epoch
  Rng dummy(0);
  double total = 0.0;
  for (int i = 0; i < config.probe_batches; ++i) {
    TrajectoryBatch batch =
        sample_batch(dataset, config.context_K, config.batch_size, probe_rng);
    total += dt_loss(batch, ckpt, RunMode::kEval, dummy);
  }
  return total / config.probe_batches;
}

}  // namespace

TrainConfig TrainConfig::paper() {
  TrainConfig c;
  c.epochs = 40;
  c.steps_per_epoch = 2500;
  c.batch_size = 64;
  c.learning_rate = 1e-4;
  c.warmup_steps = 5000;
  c.weight_decay = 1e-4;
  c.clip_max_norm = 0.25;
  c.context_K = 20;
  c.eval_episodes = 10;
  return c;
}

TrainConfig TrainConfig::desk() { return TrainConfig{}; }

double percentile_sorted(std::vector<double> values, double p) {
  if (values.empty()) return 0.0;
  std::sort(values.begin(), values.end());
  const double idx = p * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(idx));
  const auto hi = static_cast<std::size_t>(std::ceil(idx));
  const double frac = idx - std::floor(idx);
  return values[lo] * (1.0 - frac) + values[hi] * frac;
}

FinetuneResult finetune(const Checkpoint& init, const Dataset& dataset,
                        const TrainConfig& config, Rng& rng,
                        const StepObserver& observer) {
  require(init.config.has_control_head(), "finetune: checkpoint has no control head");
  require(init.config.state_dim == dataset.spec.state_dim &&
              init.config.action_dim == dataset.spec.action_dim,
          "finetune: checkpoint dims do not match dataset");
  require(config.epochs >= 1 && config.steps_per_epoch >= 1 &&
              config.batch_size >= 1,
          "finetune: counts must be positive");
  require(config.warmup_steps >= 0, "finetune: warmup_steps must be >= 0");

  FinetuneResult result;
  Checkpoint ckpt = init;
  Vector flat = ckpt.flatten();
  AdamState adam = AdamState::make(flat.size(), config.learning_rate,
                                   config.weight_decay);
  Rng train_rng = rng.derive(kTrainStream);
  Rng drop_rng = rng.derive(kDropStream);

  auto log_epoch = [&](int epoch, const std::vector<double>& pre_norms,
                       double wall_s) {
    EpochLog log;
    log.epoch = epoch;
    log.mean_action_error = probe_action_error(ckpt, dataset, config, rng);
    Rng eval_rng = rng.derive(kEvalStream + static_cast<std::uint64_t>(epoch));
    EvalResult eval = evaluate_policy(ckpt, dataset.spec, config,
                                      dataset.return_scale, eval_rng);
    log.mean_return = eval.mean_return;
    log.normalized_score =
        normalized_score(eval.mean_return, dataset.random_ref, dataset.expert_ref);
    if (!pre_norms.empty()) {
      log.grad_norm_p50 = percentile_sorted(pre_norms, 0.5);
      log.grad_norm_max = *std::max_element(pre_norms.begin(), pre_norms.end());
    }
    log.wall_time_s = wall_s;
    result.logs.push_back(log);
  };

  // Epoch 0: the untouched input model.
  Checkpoint snapshot0 = ckpt;
  snapshot0.provenance = init.provenance;
  result.epoch_checkpoints.push_back(snapshot0);
  log_epoch(0, {}, 0.0);

  std::int64_t global_step = 0;
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<double> pre_norms;
    pre_norms.reserve(static_cast<std::size_t>(config.steps_per_epoch));
    for (int step = 0; step < config.steps_per_epoch; ++step) {
      ++global_step;
      TrajectoryBatch batch =
          sample_batch(dataset, config.context_K, config.batch_size, train_rng);
      LossResult lr;
      try {
        lr = dt_loss_and_grads(batch, ckpt, drop_rng, RunMode::kTrain);
      } catch (const NumericError& e) {
        throw NumericError(std::string(e.what()) + " at step " +
                           std::to_string(global_step));
      }
      Vector grads = lr.grads.flatten();
      const double pre_norm = grads.norm();
      if (config.clip_max_norm > 0.0)
        clip_gradients_global_norm(grads, config.clip_max_norm);
      const double applied_lr =
          warmup_lr(config.learning_rate, global_step, config.warmup_steps);
      adam_step(flat, grads, adam, applied_lr);
      ckpt.unflatten(flat);
      pre_norms.push_back(pre_norm);
      if (observer)
        observer(StepInfo{global_step, lr.loss, pre_norm, grads.norm(), applied_lr});
    }
    const double wall_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
    Checkpoint snapshot = ckpt;
    snapshot.provenance = "fine-tuned@" + std::to_string(epoch);
    snapshot.lineage = init.lineage;
    snapshot.lineage.push_back(init.provenance);
    result.epoch_checkpoints.push_back(snapshot);
    log_epoch(epoch, pre_norms, wall_s);
  }
  result.final_checkpoint = result.epoch_checkpoints.back();
  return result;
}

PretrainResult pretrain(const ModelConfig& config, const Corpus& corpus,
                        const TrainConfig& train_config, Rng& rng) {
  config.validate();
  require(config.has_token_head(), "pretrain: config has no token head");
  require(!corpus.sequences.empty(), "pretrain: empty corpus");
  require(config.vocab_size == corpus.spec.vocab_size,
          "pretrain: vocab_size does not match corpus");

  const std::string provenance = corpus.spec.modality == Modality::kLanguageLike
                                     ? "language-pretrained"
                                     : "image-pretrained";
  Rng init_rng = rng.derive(kInitStream);
  Checkpoint ckpt = Checkpoint::init_random(config, init_rng, provenance);
  Vector flat = ckpt.flatten();
  AdamState adam = AdamState::make(flat.size(), train_config.learning_rate,
                                   train_config.weight_decay);
  Rng train_rng = rng.derive(kTrainStream);
  Rng drop_rng = rng.derive(kDropStream);

  PretrainResult result;
  const int T = corpus.spec.sequence_length;
  std::int64_t global_step = 0;
  for (int epoch = 1; epoch <= train_config.epochs; ++epoch) {
    double epoch_loss = 0.0;
    for (int step = 0; step < train_config.steps_per_epoch; ++step) {
      ++global_step;
      TokenBatch batch;
      batch.batch_size = train_config.batch_size;
      batch.seq_len = T;
      batch.ids.resize(static_cast<std::size_t>(batch.batch_size) * T);
      for (int b = 0; b < batch.batch_size; ++b) {
        const auto& seq =
            corpus.sequences[train_rng.uniform_index(corpus.sequences.size())];
        std::copy(seq.begin(), seq.end(),
                  batch.ids.begin() + static_cast<std::ptrdiff_t>(b) * T);
      }
      LossResult lr;
      try {
        lr = lm_loss_and_grads(batch, ckpt, drop_rng, RunMode::kTrain);
      } catch (const NumericError& e) {
        throw NumericError(std::string(e.what()) + " at step " +
                           std::to_string(global_step));
      }
      if (global_step == 1) result.initial_loss = lr.loss;
      Vector grads = lr.grads.flatten();
      if (train_config.clip_max_norm > 0.0)
        clip_gradients_global_norm(grads, train_config.clip_max_norm);
      adam_step(flat, grads, adam,
                warmup_lr(train_config.learning_rate, global_step,
                          train_config.warmup_steps));
      ckpt.unflatten(flat);
      epoch_loss += lr.loss;
    }
    result.epoch_losses.push_back(epoch_loss / train_config.steps_per_epoch);
  }
  result.checkpoint = std::move(ckpt);
  return result;
}

Policy checkpoint_policy(const Checkpoint& ckpt) {
  return [&ckpt](const TrajectoryBatch& window) -> Vector {
    Rng dummy(0);
    const ForwardResult fr = dt_forward(window, ckpt, RunMode::kEval, dummy);
    return fr.actions.row(0)
        .segment(static_cast<Index>(window.K - 1) * window.action_dim,
                 window.action_dim)
        .transpose();
  };
}

EvalResult evaluate_policy_fn(const Policy& policy, const MdpSpec& spec,
                              int context_K, int episodes, double rtg_target,
                              double return_scale, Rng& rng) {
  require(episodes >= 1, "evaluate_policy: eval_episodes must be >= 1");
  require(context_K >= 1, "evaluate_policy: context_K must be >= 1");
  EvalResult result;
  for (int ep = 0; ep < episodes; ++ep) {
    Rng env_rng = rng.derive(static_cast<std::uint64_t>(ep));
    Vector state = env_reset(spec, env_rng);
    std::vector<Vector> obs_hist, act_hist;
    std::vector<double> rtg_hist;
    double rtg_token = rtg_target;
    double episode_return = 0.0;
    for (int t = 0; t < spec.horizon; ++t) {
      obs_hist.push_back(spec.observe(state));
      act_hist.push_back(Vector::Zero(spec.action_dim));  // current step unknown
      rtg_hist.push_back(rtg_token);

      const int hist_len = static_cast<int>(obs_hist.size());
      const int window_len = std::min(context_K, hist_len);
      const int pad = context_K - window_len;
      TrajectoryBatch window;
      window.batch_size = 1;
      window.K = context_K;
      window.state_dim = spec.state_dim;
      window.action_dim = spec.action_dim;
      window.rtg = Matrix::Zero(1, context_K);
      window.states = Matrix::Zero(1, static_cast<Index>(context_K) * spec.state_dim);
      window.actions =
          Matrix::Zero(1, static_cast<Index>(context_K) * spec.action_dim);
      window.timesteps = Matrix::Zero(1, context_K);
      window.attention_mask = Matrix::Zero(1, context_K);
      for (int k = 0; k < window_len; ++k) {
        const int src = hist_len - window_len + k;
        const int col = pad + k;
        window.rtg(0, col) = rtg_hist[static_cast<std::size_t>(src)] / return_scale;
        window.states.row(0).segment(static_cast<Index>(col) * spec.state_dim,
                                     spec.state_dim) =
            obs_hist[static_cast<std::size_t>(src)].transpose();
        window.actions.row(0).segment(static_cast<Index>(col) * spec.action_dim,
                                      spec.action_dim) =
            act_hist[static_cast<std::size_t>(src)].transpose();
        window.timesteps(0, col) = src;
        window.attention_mask(0, col) = 1.0;
      }

      Vector action = clip_action(spec, policy(window));
      act_hist.back() = action;
      StepResult sr = env_step(spec, state, action, env_rng);
      state = sr.next_state;
      episode_return += sr.reward;
      rtg_token -= sr.reward;
    }
    result.episode_returns.push_back(episode_return);
    result.mean_return += episode_return;
  }
  result.mean_return /= episodes;
  return result;
}

EvalResult evaluate_policy(const Checkpoint& ckpt, const MdpSpec& spec,
                           const TrainConfig& config, double return_scale,
                           Rng& rng) {
  return evaluate_policy_fn(checkpoint_policy(ckpt), spec, config.context_K,
                            config.eval_episodes, config.rtg_target,
                            return_scale, rng);
}

std::vector<ProtocolSeries> run_block_replacement_protocol(
    const Checkpoint& random_ckpt, const Checkpoint& pretrained_ckpt,
    const Dataset& dataset, TrainConfig config, Rng& rng) {
  require(random_ckpt.config.trunk_compatible(pretrained_ckpt.config),
          "run_block_replacement_protocol: trunk config mismatch");
  config.context_K = 1;  // fine-tune without context
  const std::uint64_t run_salt = 0xb10c;

  auto run = [&](const Checkpoint& init, const std::string& label) {
    Rng run_rng = rng.derive(run_salt);  // identical stream for every run
    FinetuneResult ft = finetune(init, dataset, config, run_rng);
    ProtocolSeries series;
    series.label = label;
    series.logs = ft.logs;
    std::vector<double> err, ret;
    for (const auto& log : ft.logs) {
      err.push_back(log.mean_action_error);
      ret.push_back(log.mean_return);
    }
    series.smoothed_action_error = ema_smooth(err, 0.8);
    series.smoothed_mean_return = ema_smooth(ret, 0.8);
    return series;
  };

  std::vector<ProtocolSeries> out;
  for (int b = 0; b < random_ckpt.config.n_blocks; ++b) {
    Checkpoint replaced = replace_block(random_ckpt, pretrained_ckpt, b);
    out.push_back(run(replaced, "block_" + std::to_string(b)));
  }
  out.push_back(run(random_ckpt, "recipient"));
  out.push_back(run(pretrained_ckpt, "donor"));
  return out;
}

void write_epoch_log_csv(const std::filesystem::path& path,
                         const std::vector<EpochLog>& logs,
                         const std::string& header_comment) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
  if (!header_comment.empty()) out << "# " << header_comment << "\n";
  out << "epoch,action_error,mean_return,normalized_score,grad_norm_p50,"
         "grad_norm_max\n";
  char buf[256];
  for (const auto& log : logs) {
    std::snprintf(buf, sizeof(buf), "%d,%.10g,%.10g,%.10g,%.10g,%.10g\n",
                  log.epoch, log.mean_action_error, log.mean_return,
                  log.normalized_score, log.grad_norm_p50, log.grad_norm_max);
    out << buf;
  }
}

}  // namespace dtlab
