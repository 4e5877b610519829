#ifndef DTLAB_PARAM_METRICS_HPP
#define DTLAB_PARAM_METRICS_HPP

#include <string>
#include <vector>

#include "dtlab/checkpoint.hpp"

namespace dtlab {

struct ParamSimilarity {
  std::string name;  // tick label, e.g. "0.ln_1.weight", or "concatenated"
  double l2_distance = 0.0;
  double cosine = 0.0;
};

// Tick label used by the parameter figures: the name without its trunk
// prefix.
std::string tick_label(const std::string& param_name);

// One (l2, cosine) pair per trunk parameter set, in block-major tick order.
std::vector<ParamSimilarity> parameter_similarity_per_set(const Checkpoint& a,
                                                          const Checkpoint& b);

// All trunk parameters concatenated into one vector.
ParamSimilarity parameter_similarity_concatenated(const Checkpoint& a,
                                                  const Checkpoint& b);

}  // namespace dtlab

#endif
