#include "dtlab/trajectory.hpp"

#include <algorithm>
#include <cmath>

namespace dtlab {

double Trajectory::total_return() const {
  double s = 0.0;
  for (double r : rewards) s += r;
  return s;
}

std::vector<double> compute_returns_to_go(const std::vector<double>& rewards) {
  require(!rewards.empty(), "compute_returns_to_go: empty rewards");
  std::vector<double> out(rewards.size());
  double acc = 0.0;
  for (std::size_t i = rewards.size(); i-- > 0;) {
    acc += rewards[i];
    out[i] = acc;
  }
  return out;
}

namespace {

Trajectory rollout_policy(const MdpSpec& spec, double quality,
                          double action_noise, const GreedyController& greedy,
                          Rng& rng) {
  Trajectory traj;
  Vector state = env_reset(spec, rng);
  for (int t = 0; t < spec.horizon; ++t) {
    Vector a;
    if (quality <= 0.0) {
      a = random_action(spec, rng);
    } else if (quality >= 1.0) {
      a = greedy.action(state);
    } else {
      a = (1.0 - quality) * random_action(spec, rng) +
          quality * greedy.action(state);
    }
    if (action_noise > 0.0) {
      for (int i = 0; i < spec.action_dim; ++i)
        a[i] += action_noise * rng.gaussian();
    }
    a = clip_action(spec, a);
    StepResult sr = env_step(spec, state, a, rng);
    traj.states.push_back(spec.observe(state));
    traj.actions.push_back(a);
    traj.rewards.push_back(sr.reward);
    traj.timesteps.push_back(t);
    state = sr.next_state;
  }
  traj.returns_to_go = compute_returns_to_go(traj.rewards);
  return traj;
}

double mean_policy_return(const MdpSpec& spec, double quality,
                          const GreedyController& greedy, int episodes,
                          Rng& rng) {
  double total = 0.0;
  for (int e = 0; e < episodes; ++e) {
    Rng er = rng.derive(static_cast<std::uint64_t>(e));
    total += rollout_policy(spec, quality, 0.0, greedy, er).total_return();
  }
  return total / episodes;
}

}  // namespace

Dataset generate_medium_dataset(const MdpSpec& spec, double policy_quality,
                                int n_trajectories, Rng& rng,
                                double action_noise, double return_scale,
                                int ref_episodes) {
  spec.validate();
  require(policy_quality >= 0.0 && policy_quality <= 1.0,
          "generate_medium_dataset: policy_quality must be in [0, 1]");
  require(n_trajectories > 0, "generate_medium_dataset: n_trajectories must be > 0");
  require(return_scale > 0.0, "generate_medium_dataset: return_scale must be > 0");

  GreedyController greedy(spec);
  Dataset ds;
  ds.spec = spec;
  ds.seed = rng.seed();
  ds.policy_quality = policy_quality;
  ds.action_noise = action_noise;
  ds.return_scale = return_scale;

  ds.trajectories.reserve(static_cast<std::size_t>(n_trajectories));
  for (int i = 0; i < n_trajectories; ++i) {
    Rng tr = rng.derive(0x1000 + static_cast<std::uint64_t>(i));
    ds.trajectories.push_back(
        rollout_policy(spec, policy_quality, action_noise, greedy, tr));
  }

  Rng rr = rng.derive(0xA11CE);
  Rng er = rng.derive(0xB0B00);
  ds.random_ref = mean_policy_return(spec, 0.0, greedy, ref_episodes, rr);
  ds.expert_ref = mean_policy_return(spec, 1.0, greedy, ref_episodes, er);

  ds.best_return = ds.trajectories.front().total_return();
  for (const auto& t : ds.trajectories)
    ds.best_return = std::max(ds.best_return, t.total_return());
  return ds;
}

double normalized_score(double score, double random_score, double expert_score) {
  require(expert_score != random_score,
          "normalized_score: expert and random references are equal");
  return 100.0 * (score - random_score) / (expert_score - random_score);
}

Vector TrajectoryBatch::state_at(int b, int k) const {
  return states.row(b).segment(static_cast<Index>(k) * state_dim, state_dim)
      .transpose();
}

Vector TrajectoryBatch::action_at(int b, int k) const {
  return actions.row(b).segment(static_cast<Index>(k) * action_dim, action_dim)
      .transpose();
}

namespace {

TrajectoryBatch make_batch(const Dataset& dataset, int K, int batch_size) {
  TrajectoryBatch b;
  b.batch_size = batch_size;
  b.K = K;
  b.state_dim = dataset.spec.state_dim;
  b.action_dim = dataset.spec.action_dim;
  b.rtg = Matrix::Zero(batch_size, K);
  b.states = Matrix::Zero(batch_size, static_cast<Index>(K) * b.state_dim);
  b.actions = Matrix::Zero(batch_size, static_cast<Index>(K) * b.action_dim);
  b.timesteps = Matrix::Zero(batch_size, K);
  b.attention_mask = Matrix::Zero(batch_size, K);
  return b;
}

void fill_window(TrajectoryBatch& b, const Dataset& dataset,
                 const Trajectory& traj, int end_step, int row) {
  const int K = b.K;
  const int start = std::max(0, end_step - K + 1);
  const int len = end_step - start + 1;
  const int pad = K - len;
  for (int k = 0; k < len; ++k) {
    const int t = start + k;
    const int col = pad + k;
    b.rtg(row, col) = traj.returns_to_go[static_cast<std::size_t>(t)] /
                      dataset.return_scale;
    b.states.row(row).segment(static_cast<Index>(col) * b.state_dim, b.state_dim) =
        traj.states[static_cast<std::size_t>(t)].transpose();
    b.actions.row(row).segment(static_cast<Index>(col) * b.action_dim,
                               b.action_dim) =
        traj.actions[static_cast<std::size_t>(t)].transpose();
    b.timesteps(row, col) = traj.timesteps[static_cast<std::size_t>(t)];
    b.attention_mask(row, col) = 1.0;
  }
}

}  // namespace

TrajectoryBatch sample_batch(const Dataset& dataset, int K, int batch_size,
                             Rng& rng) {
  require(!dataset.trajectories.empty(), "sample_batch: empty dataset");
  require(K >= 1, "sample_batch: K must be >= 1");
  require(batch_size >= 1, "sample_batch: batch_size must be >= 1");
  TrajectoryBatch b = make_batch(dataset, K, batch_size);
  for (int row = 0; row < batch_size; ++row) {
    const auto ti = rng.uniform_index(dataset.trajectories.size());
    const Trajectory& traj = dataset.trajectories[ti];
    const int end_step =
        static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(traj.length())));
    fill_window(b, dataset, traj, end_step, row);
  }
  return b;
}

TrajectoryBatch sample_full_windows(const Dataset& dataset, int K,
                                    int batch_size, Rng& rng) {
  require(!dataset.trajectories.empty(), "sample_full_windows: empty dataset");
  require(K >= 1, "sample_full_windows: K must be >= 1");
  TrajectoryBatch b = make_batch(dataset, K, batch_size);
  for (int row = 0; row < batch_size; ++row) {
    const auto ti = rng.uniform_index(dataset.trajectories.size());
    const Trajectory& traj = dataset.trajectories[ti];
    require(traj.length() >= K,
            "sample_full_windows: trajectory shorter than context length");
    const int end_step =
        K - 1 + static_cast<int>(rng.uniform_index(
                    static_cast<std::uint64_t>(traj.length() - K + 1)));
    fill_window(b, dataset, traj, end_step, row);
  }
  return b;
}

}  // namespace dtlab
