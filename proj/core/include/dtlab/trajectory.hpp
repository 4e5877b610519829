#ifndef DTLAB_TRAJECTORY_HPP
#define DTLAB_TRAJECTORY_HPP

#include <cstdint>
#include <vector>

#include "dtlab/mdp.hpp"

namespace dtlab {

struct Trajectory {
  std::vector<Vector> states;   // observed states
  std::vector<Vector> actions;
  std::vector<double> rewards;
  std::vector<double> returns_to_go;
  std::vector<int> timesteps;

  int length() const { return static_cast<int>(states.size()); }
  double total_return() const;
};

// Suffix sums: out[t] = sum_{i >= t} rewards[i].
std::vector<double> compute_returns_to_go(const std::vector<double>& rewards);

struct Dataset {
  MdpSpec spec;
  std::uint64_t seed = 0;
  double policy_quality = 0.5;
  double action_noise = 0.0;
  double return_scale = 1000.0;
  // Empirical reference scores for normalized_score, computed at generation.
  double random_ref = 0.0;
  double expert_ref = 0.0;
  double best_return = 0.0;
  std::vector<Trajectory> trajectories;
};

// Offline dataset from an interpolated policy:
//   a = (1 - quality) * uniform_random + quality * greedy + action_noise * gaussian
// quality 0 is the random policy, quality 1 with action_noise 0 the expert.
// Reference scores (random/expert mean returns over ref_episodes) are
// estimated with derived seeds and stored on the dataset.
Dataset generate_medium_dataset(const MdpSpec& spec, double policy_quality,
                                int n_trajectories, Rng& rng,
                                double action_noise = 0.0,
                                double return_scale = 1000.0,
                                int ref_episodes = 100);

// 100 * (score - random) / (expert - random).
double normalized_score(double score, double random_score, double expert_score);

struct TrajectoryBatch {
  int batch_size = 0;
  int K = 0;
  int state_dim = 0;
  int action_dim = 0;
  Matrix rtg;             // batch x K, already divided by return_scale
  Matrix states;          // batch x (K * state_dim)
  Matrix actions;         // batch x (K * action_dim)
  Matrix timesteps;       // batch x K (integral values)
  Matrix attention_mask;  // batch x K of {0,1}; 0 marks left padding

  Vector state_at(int b, int k) const;
  Vector action_at(int b, int k) const;
};

// Uniform trajectory, uniform end step; windows shorter than K are
// left-padded with zeros and mask 0. rtg is divided by dataset.return_scale.
TrajectoryBatch sample_batch(const Dataset& dataset, int K, int batch_size,
                             Rng& rng);

// Analysis variant: only windows with a full K steps of history, so the
// captured activations sit at unpadded positions. Requires horizon >= K.
TrajectoryBatch sample_full_windows(const Dataset& dataset, int K,
                                    int batch_size, Rng& rng);

}  // namespace dtlab

#endif
