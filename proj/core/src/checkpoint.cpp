#include "dtlab/checkpoint.hpp"

#include <algorithm>

namespace dtlab {

void ModelConfig::validate() const {
  require(n_blocks >= 1, "ModelConfig: n_blocks must be >= 1");
  require(embed_dim >= 1, "ModelConfig: embed_dim must be >= 1");
  require(n_heads >= 1 && embed_dim % n_heads == 0,
          "ModelConfig: embed_dim must be divisible by n_heads");
  require(context_K >= 1, "ModelConfig: context_K must be >= 1");
  require(max_timestep >= 1, "ModelConfig: max_timestep must be >= 1");
  require(dropout_resid >= 0.0 && dropout_resid < 1.0 && dropout_attn >= 0.0 &&
              dropout_attn < 1.0,
          "ModelConfig: dropouts must be in [0, 1)");
  require(has_control_head() || has_token_head(),
          "ModelConfig: needs a control head, a token head, or both");
  if (has_control_head())
    require(action_bound > 0.0, "ModelConfig: action_bound must be > 0");
}

ModelConfig ModelConfig::desk(int state_dim, int action_dim) {
  ModelConfig c;
  c.n_blocks = 3;
  c.embed_dim = 64;
  c.n_heads = 1;
  c.context_K = 20;
  c.state_dim = state_dim;
  c.action_dim = action_dim;
  return c;
}

ModelConfig ModelConfig::paper(int state_dim, int action_dim) {
  ModelConfig c;
  c.n_blocks = 12;
  c.embed_dim = 768;
  c.n_heads = 1;
  c.context_K = 20;
  c.state_dim = state_dim;
  c.action_dim = action_dim;
  c.max_timestep = 1000;
  return c;
}

std::vector<std::string> canonical_param_names(const ModelConfig& config) {
  std::vector<std::string> names;
  if (config.has_control_head()) {
    names.insert(names.end(),
                 {"embed_timestep.weight", "embed_return.weight",
                  "embed_return.bias", "embed_state.weight", "embed_state.bias",
                  "embed_action.weight", "embed_action.bias", "embed_ln.weight",
                  "embed_ln.bias"});
  }
  if (config.has_token_head()) {
    names.push_back("transformer.wte.weight");
    names.push_back("transformer.wpe.weight");
  }
  for (int i = 0; i < config.n_blocks; ++i) {
    const std::string p = "transformer.h." + std::to_string(i) + ".";
    for (const char* leaf :
         {"ln_1.weight", "ln_1.bias", "attn.c_attn.weight", "attn.c_attn.bias",
          "attn.c_proj.weight", "attn.c_proj.bias", "ln_2.weight", "ln_2.bias",
          "mlp.c_fc.weight", "mlp.c_fc.bias", "mlp.c_proj.weight",
          "mlp.c_proj.bias"})
      names.push_back(p + leaf);
  }
  names.push_back("ln_f.weight");
  names.push_back("ln_f.bias");
  if (config.has_control_head()) {
    names.push_back("predict_action.weight");
    names.push_back("predict_action.bias");
  }
  if (config.has_token_head()) {
    names.push_back("lm_head.weight");
    names.push_back("lm_head.bias");
  }
  return names;
}

std::pair<Index, Index> param_shape(const ModelConfig& config,
                                    const std::string& name) {
  const Index d = config.embed_dim;
  if (name == "embed_timestep.weight") return {config.max_timestep, d};
  if (name == "embed_return.weight") return {1, d};
  if (name == "embed_return.bias") return {1, d};
  if (name == "embed_state.weight") return {config.state_dim, d};
  if (name == "embed_state.bias") return {1, d};
  if (name == "embed_action.weight") return {config.action_dim, d};
  if (name == "embed_action.bias") return {1, d};
  if (name == "embed_ln.weight" || name == "embed_ln.bias") return {1, d};
  if (name == "transformer.wte.weight") return {config.vocab_size, d};
  if (name == "transformer.wpe.weight") return {config.max_timestep, d};
  if (name == "ln_f.weight" || name == "ln_f.bias") return {1, d};
  if (name == "predict_action.weight") return {d, config.action_dim};
  if (name == "predict_action.bias") return {1, config.action_dim};
  if (name == "lm_head.weight") return {d, config.vocab_size};
  if (name == "lm_head.bias") return {1, config.vocab_size};
  if (name.rfind("transformer.h.", 0) == 0) {
    const auto leaf = name.substr(name.find('.', 14) + 1);
    if (leaf == "ln_1.weight" || leaf == "ln_1.bias" || leaf == "ln_2.weight" ||
        leaf == "ln_2.bias")
      return {1, d};
    if (leaf == "attn.c_attn.weight") return {d, 3 * d};
    if (leaf == "attn.c_attn.bias") return {1, 3 * d};
    if (leaf == "attn.c_proj.weight") return {d, d};
    if (leaf == "attn.c_proj.bias") return {1, d};
    if (leaf == "mlp.c_fc.weight") return {d, 4 * d};
    if (leaf == "mlp.c_fc.bias") return {1, 4 * d};
    if (leaf == "mlp.c_proj.weight") return {4 * d, d};
    if (leaf == "mlp.c_proj.bias") return {1, d};
  }
  throw std::invalid_argument("param_shape: unknown parameter " + name);
}

std::vector<std::string> trunk_param_names(const ModelConfig& config) {
  std::vector<std::string> names;
  for (const auto& n : canonical_param_names(config))
    if (n.rfind("transformer.h.", 0) == 0) names.push_back(n);
  return names;
}

std::vector<std::string> block_layer_inventory(const ModelConfig& config) {
  std::vector<std::string> names;
  for (int i = 0; i < config.n_blocks; ++i) {
    const std::string p = "transformer.h." + std::to_string(i) + ".";
    for (const char* leaf : {"ln_1", "attn.c_attn", "attn.c_proj", "ln_2",
                             "mlp.c_fc", "mlp.c_proj", "mlp.dropout"})
      names.push_back(p + leaf);
  }
  return names;
}

const Matrix& Checkpoint::at(const std::string& name) const {
  auto it = params.find(name);
  if (it == params.end())
    throw std::invalid_argument("Checkpoint: missing parameter " + name);
  return it->second;
}

Matrix& Checkpoint::at(const std::string& name) {
  auto it = params.find(name);
  if (it == params.end())
    throw std::invalid_argument("Checkpoint: missing parameter " + name);
  return it->second;
}

Index Checkpoint::n_params() const {
  Index n = 0;
  for (const auto& name : names) n += at(name).size();
  return n;
}

Vector Checkpoint::flatten() const {
  Vector flat(n_params());
  Index off = 0;
  for (const auto& name : names) {
    const Matrix& m = at(name);
    std::copy(m.data(), m.data() + m.size(), flat.data() + off);
    off += m.size();
  }
  return flat;
}

void Checkpoint::unflatten(const Vector& flat) {
  require(flat.size() == n_params(), "Checkpoint::unflatten: size mismatch");
  Index off = 0;
  for (const auto& name : names) {
    Matrix& m = at(name);
    std::copy(flat.data() + off, flat.data() + off + m.size(), m.data());
    off += m.size();
  }
}

Checkpoint Checkpoint::init_random(const ModelConfig& config, Rng& rng,
                                   const std::string& provenance) {
  config.validate();
  Checkpoint ckpt;
  ckpt.config = config;
  ckpt.provenance = provenance;
  ckpt.names = canonical_param_names(config);
  for (const auto& name : ckpt.names) {
    auto [r, c] = param_shape(config, name);
    Matrix m(r, c);
    const bool is_bias = name.ends_with(".bias");
    const bool is_ln_weight =
        name.ends_with("ln_1.weight") || name.ends_with("ln_2.weight") ||
        name == "ln_f.weight" || name == "embed_ln.weight";
    if (is_ln_weight) {
      m.setOnes();
    } else if (is_bias) {
      m.setZero();
    } else {
      for (Index i = 0; i < m.size(); ++i) m.data()[i] = 0.02 * rng.gaussian();
    }
    ckpt.params.emplace(name, std::move(m));
  }
  return ckpt;
}

Checkpoint Checkpoint::init_random(const ModelConfig& config) {
  Rng rng(config.seed);
  return init_random(config, rng);
}

const Matrix& GradientSet::at(const std::string& name) const {
  auto it = values.find(name);
  if (it == values.end())
    throw std::invalid_argument("GradientSet: missing entry " + name);
  return it->second;
}

Matrix& GradientSet::at(const std::string& name) {
  auto it = values.find(name);
  if (it == values.end())
    throw std::invalid_argument("GradientSet: missing entry " + name);
  return it->second;
}

Vector GradientSet::flatten() const {
  Index n = 0;
  for (const auto& name : names) n += at(name).size();
  Vector flat(n);
  Index off = 0;
  for (const auto& name : names) {
    const Matrix& m = at(name);
    std::copy(m.data(), m.data() + m.size(), flat.data() + off);
    off += m.size();
  }
  return flat;
}

void GradientSet::unflatten(const Vector& flat) {
  Index off = 0;
  for (const auto& name : names) {
    Matrix& m = at(name);
    require(off + m.size() <= flat.size(), "GradientSet::unflatten: size mismatch");
    std::copy(flat.data() + off, flat.data() + off + m.size(), m.data());
    off += m.size();
  }
  require(off == flat.size(), "GradientSet::unflatten: size mismatch");
}

GradientSet GradientSet::zeros_like(const Checkpoint& ckpt) {
  GradientSet g;
  g.names = ckpt.names;
  for (const auto& name : g.names)
    g.values.emplace(name, Matrix::Zero(ckpt.at(name).rows(), ckpt.at(name).cols()));
  return g;
}

Checkpoint replace_block(const Checkpoint& recipient, const Checkpoint& donor,
                         int block_index) {
  require(recipient.config.trunk_compatible(donor.config),
          "replace_block: trunk config mismatch");
  require(block_index >= 0 && block_index < recipient.config.n_blocks,
          "replace_block: block index out of range");
  Checkpoint out = recipient;
  const std::string prefix =
      "transformer.h." + std::to_string(block_index) + ".";
  for (const auto& name : out.names) {
    if (name.rfind(prefix, 0) == 0) out.params[name] = donor.at(name);
  }
  out.provenance = "block-replaced@" + std::to_string(block_index);
  out.lineage = recipient.lineage;
  out.lineage.push_back("recipient:" + recipient.provenance);
  out.lineage.push_back("donor:" + donor.provenance);
  return out;
}

std::vector<double> align_layer_series(const std::vector<double>& values) {
  require(values.size() % 2 == 0, "align_layer_series: odd-length series");
  std::vector<double> out(values.size() / 2);
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = 0.5 * (values[2 * i] + values[2 * i + 1]);
  return out;
}

Checkpoint adapt_for_control(const Checkpoint& base, const ModelConfig& target,
                             Rng& rng) {
  require(base.config.trunk_compatible(target),
          "adapt_for_control: trunk config mismatch");
  require(target.has_control_head(), "adapt_for_control: target has no control head");
  Checkpoint out = Checkpoint::init_random(target, rng, base.provenance);
  for (const auto& name : out.names) {
    auto it = base.params.find(name);
    if (it != base.params.end() && (name.rfind("transformer.h.", 0) == 0 ||
                                    name.rfind("ln_f.", 0) == 0))
      out.params[name] = it->second;
  }
  out.lineage = base.lineage;
  out.lineage.push_back(base.provenance);
  return out;
}

}  // namespace dtlab
