#ifndef DTLAB_MDP_HPP
#define DTLAB_MDP_HPP

#include "dtlab/matrix.hpp"
#include "dtlab/rng.hpp"

namespace dtlab {

// Linear-Gaussian point-control task:
//   next_state = state + dynamics * clip(action) + noise_scale * gaussian
//   reward     = -||next_state - goal||_2
// observation_mask zeroes state dimensions as seen by the learner; the
// underlying state always evolves in full.
struct MdpSpec {
  int state_dim = 2;
  int action_dim = 2;
  int horizon = 100;
  Matrix dynamics;        // state_dim x action_dim
  double noise_scale = 0.0;
  Vector goal;            // state_dim
  double action_bound = 1.0;
  Vector observation_mask;  // state_dim of {0,1}; empty means all-ones

  static MdpSpec point_control(int state_dim, int action_dim, int horizon,
                               double noise_scale, double action_bound = 1.0);
  void validate() const;
  Vector observe(const Vector& state) const;
};

Vector clip_action(const MdpSpec& spec, const Vector& action);

// Initial state is standard normal.
Vector env_reset(const MdpSpec& spec, Rng& rng);

struct StepResult {
  Vector next_state;
  double reward = 0.0;
};

StepResult env_step(const MdpSpec& spec, const Vector& state,
                    const Vector& action, Rng& rng);

// Least-squares one-step controller: clip(pinv(dynamics) * (goal - state)).
// This is the expert that "medium" data interpolates toward.
class GreedyController {
 public:
  explicit GreedyController(const MdpSpec& spec);
  Vector action(const Vector& state) const;

 private:
  const MdpSpec spec_;
  Matrix dynamics_pinv_;  // action_dim x state_dim
};

// Uniform in [-action_bound, action_bound]^action_dim.
Vector random_action(const MdpSpec& spec, Rng& rng);

}  // namespace dtlab

#endif
