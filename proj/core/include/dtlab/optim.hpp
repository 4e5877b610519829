#ifndef DTLAB_OPTIM_HPP
#define DTLAB_OPTIM_HPP

#include <cstdint>
#include <span>

#include "dtlab/matrix.hpp"

namespace dtlab {

struct AdamState {
  std::int64_t step = 0;
  Vector first_moment;   // same length as the flat parameter vector
  Vector second_moment;
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.0;

  static AdamState make(Index n_params, double lr, double weight_decay = 0.0);
};

// In-place Adam update with bias correction. Decoupled weight decay is
// applied as params -= lr * wd * params before the Adam delta.
// lr_override < 0 means "use state.learning_rate"; the trainer passes the
// warmup-scaled rate here.
void adam_step(Vector& params, const Vector& grads, AdamState& state,
               double lr_override = -1.0);

struct ClipResult {
  double pre_clip_norm = 0.0;
  bool clipped = false;
};

// Scales grads so the global l2 norm is at most max_norm. Returns the
// pre-clip norm.
ClipResult clip_gradients_global_norm(Vector& grads, double max_norm);

// Linear warmup: lr * min(1, step / warmup_steps), step is 1-based.
// Constant after warmup.
double warmup_lr(double base_lr, std::int64_t step, std::int64_t warmup_steps);

}  // namespace dtlab

#endif
