#include "dtlab/mdp.hpp"

namespace dtlab {

MdpSpec MdpSpec::point_control(int state_dim, int action_dim, int horizon,
                               double noise_scale, double action_bound) {
  MdpSpec s;
  s.state_dim = state_dim;
  s.action_dim = action_dim;
  s.horizon = horizon;
  s.noise_scale = noise_scale;
  s.action_bound = action_bound;
  s.dynamics = Matrix::Zero(state_dim, action_dim);
  for (int i = 0; i < std::min(state_dim, action_dim); ++i) s.dynamics(i, i) = 1.0;
  s.goal = Vector::Zero(state_dim);
  s.observation_mask = Vector::Ones(state_dim);
  return s;
}

void MdpSpec::validate() const {
  require(state_dim >= 1 && action_dim >= 1, "MdpSpec: dims must be >= 1");
  require(horizon >= 1, "MdpSpec: horizon must be >= 1");
  require(noise_scale >= 0.0, "MdpSpec: noise_scale must be >= 0");
  require(action_bound > 0.0, "MdpSpec: action_bound must be > 0");
  require(dynamics.rows() == state_dim && dynamics.cols() == action_dim,
          "MdpSpec: dynamics shape mismatch");
  require(goal.size() == state_dim, "MdpSpec: goal dim mismatch");
  require(observation_mask.size() == 0 || observation_mask.size() == state_dim,
          "MdpSpec: observation_mask dim mismatch");
}

Vector MdpSpec::observe(const Vector& state) const {
  if (observation_mask.size() == 0) return state;
  return (state.array() * observation_mask.array()).matrix();
}

Vector clip_action(const MdpSpec& spec, const Vector& action) {
  return action.cwiseMax(-spec.action_bound).cwiseMin(spec.action_bound);
}

Vector env_reset(const MdpSpec& spec, Rng& rng) {
  Vector s(spec.state_dim);
  for (int i = 0; i < spec.state_dim; ++i) s[i] = rng.gaussian();
  return s;
}

StepResult env_step(const MdpSpec& spec, const Vector& state,
                    const Vector& action, Rng& rng) {
  require(state.size() == spec.state_dim, "env_step: state dim mismatch");
  require(action.size() == spec.action_dim, "env_step: action dim mismatch");
  StepResult r;
  r.next_state = state + spec.dynamics * clip_action(spec, action);
  if (spec.noise_scale > 0.0) {
    for (int i = 0; i < spec.state_dim; ++i)
      r.next_state[i] += spec.noise_scale * rng.gaussian();
  }
  r.reward = -(r.next_state - spec.goal).norm();
  return r;
}

GreedyController::GreedyController(const MdpSpec& spec) : spec_(spec) {
  spec.validate();
  dynamics_pinv_ = spec.dynamics
                       .completeOrthogonalDecomposition()
                       .pseudoInverse();
}

Vector GreedyController::action(const Vector& state) const {
  return clip_action(spec_, dynamics_pinv_ * (spec_.goal - state));
}

Vector random_action(const MdpSpec& spec, Rng& rng) {
  Vector a(spec.action_dim);
  for (int i = 0; i < spec.action_dim; ++i)
    a[i] = rng.uniform(-spec.action_bound, spec.action_bound);
  return a;
}

}  // namespace dtlab
