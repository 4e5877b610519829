#include "dtlab/optim.hpp"

#include <cmath>
#include <string>

namespace dtlab {

AdamState AdamState::make(Index n_params, double lr, double weight_decay) {
  AdamState s;
  s.first_moment = Vector::Zero(n_params);
  s.second_moment = Vector::Zero(n_params);
  s.learning_rate = lr;
  s.weight_decay = weight_decay;
  return s;
}

void adam_step(Vector& params, const Vector& grads, AdamState& state,
               double lr_override) {
  require(params.size() == grads.size(), "adam_step: params/grads length mismatch");
  require(state.first_moment.size() == params.size() &&
              state.second_moment.size() == params.size(),
          "adam_step: state shape mismatch");
  require(state.beta1 >= 0.0 && state.beta1 < 1.0 && state.beta2 >= 0.0 &&
              state.beta2 < 1.0,
          "adam_step: betas must be in [0, 1)");
  for (Index i = 0; i < grads.size(); ++i) {
    if (!std::isfinite(grads[i]))
      throw NumericError("adam_step: non-finite gradient at index " +
                         std::to_string(i));
  }
  const double lr = lr_override < 0.0 ? state.learning_rate : lr_override;

  if (state.weight_decay != 0.0)
    params -= (lr * state.weight_decay) * params;

  state.step += 1;
  const double b1 = state.beta1;
  const double b2 = state.beta2;
  state.first_moment = b1 * state.first_moment + (1.0 - b1) * grads;
  state.second_moment =
      (b2 * state.second_moment.array() + (1.0 - b2) * grads.array().square())
          .matrix();
  const double bc1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
  params.array() -= lr * (state.first_moment.array() / bc1) /
                    ((state.second_moment.array() / bc2).sqrt() + state.epsilon);
}

ClipResult clip_gradients_global_norm(Vector& grads, double max_norm) {
  require(max_norm > 0.0, "clip_gradients_global_norm: max_norm must be > 0");
  if (!all_finite(grads))
    throw NumericError("clip_gradients_global_norm: non-finite gradient");
  ClipResult r;
  r.pre_clip_norm = grads.norm();
  if (r.pre_clip_norm > max_norm) {
    grads *= max_norm / r.pre_clip_norm;
    r.clipped = true;
  }
  return r;
}

double warmup_lr(double base_lr, std::int64_t step, std::int64_t warmup_steps) {
  if (warmup_steps <= 0 || step >= warmup_steps) return base_lr;
  return base_lr * static_cast<double>(step) / static_cast<double>(warmup_steps);
}

}  // namespace dtlab
