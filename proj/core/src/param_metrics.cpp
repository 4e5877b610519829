#include "dtlab/param_metrics.hpp"

#include "dtlab/numerics.hpp"

namespace dtlab {

namespace {

Vector flatten_params(const Checkpoint& ckpt,
                      const std::vector<std::string>& names) {
  Index n = 0;
  for (const auto& name : names) n += ckpt.at(name).size();
  Vector flat(n);
  Index off = 0;
  for (const auto& name : names) {
    const Matrix& m = ckpt.at(name);
    std::copy(m.data(), m.data() + m.size(), flat.data() + off);
    off += m.size();
  }
  return flat;
}

void check_inventories(const Checkpoint& a, const Checkpoint& b) {
  require(a.config.trunk_compatible(b.config),
          "parameter_similarity: trunk inventory mismatch");
}

}  // namespace

std::string tick_label(const std::string& param_name) {
  constexpr const char* kPrefix = "transformer.h.";
  if (param_name.rfind(kPrefix, 0) == 0)
    return param_name.substr(std::string(kPrefix).size());
  return param_name;
}

std::vector<ParamSimilarity> parameter_similarity_per_set(const Checkpoint& a,
                                                          const Checkpoint& b) {
  check_inventories(a, b);
  std::vector<ParamSimilarity> out;
  for (const auto& name : trunk_param_names(a.config)) {
    const Matrix& ma = a.at(name);
    const Matrix& mb = b.at(name);
    require(ma.rows() == mb.rows() && ma.cols() == mb.cols(),
            "parameter_similarity: shape mismatch at " + name);
    const Eigen::Map<const Vector> va(ma.data(), ma.size());
    const Eigen::Map<const Vector> vb(mb.data(), mb.size());
    ParamSimilarity s;
    s.name = tick_label(name);
    s.l2_distance = l2_distance(va, vb);
    s.cosine = cosine_similarity(va, vb);
    out.push_back(std::move(s));
  }
  return out;
}

ParamSimilarity parameter_similarity_concatenated(const Checkpoint& a,
                                                  const Checkpoint& b) {
  check_inventories(a, b);
  const auto names = trunk_param_names(a.config);
  const Vector va = flatten_params(a, names);
  const Vector vb = flatten_params(b, names);
  ParamSimilarity s;
  s.name = "concatenated";
  s.l2_distance = l2_distance(va, vb);
  s.cosine = cosine_similarity(va, vb);
  return s;
}

}  // namespace dtlab
