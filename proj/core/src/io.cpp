#include "dtlab/io.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace dtlab {

static_assert(std::endian::native == std::endian::little,
              "payload format is little-endian");

namespace {

constexpr std::uint32_t kFormatVersion = 1;

void write_container(const std::filesystem::path& path, const char magic[4],
                     const json& manifest, const std::vector<char>& payload) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
  const std::string m = manifest.dump();
  const std::uint64_t mlen = m.size();
  out.write(magic, 4);
  out.write(reinterpret_cast<const char*>(&kFormatVersion), 4);
  out.write(reinterpret_cast<const char*>(&mlen), 8);
  out.write(m.data(), static_cast<std::streamsize>(m.size()));
  out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

json read_container(const std::filesystem::path& path, const char magic[4],
                    std::vector<char>& payload) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingInputError("cannot open: " + path.string());
  char got[4];
  std::uint32_t version = 0;
  std::uint64_t mlen = 0;
  in.read(got, 4);
  in.read(reinterpret_cast<char*>(&version), 4);
  in.read(reinterpret_cast<char*>(&mlen), 8);
  if (!in || std::memcmp(got, magic, 4) != 0)
    throw std::runtime_error("bad magic in " + path.string());
  if (version != kFormatVersion)
    throw std::runtime_error("unsupported format version in " + path.string());
  std::string m(mlen, '\0');
  in.read(m.data(), static_cast<std::streamsize>(mlen));
  payload.assign(std::istreambuf_iterator<char>(in),
                 std::istreambuf_iterator<char>());
  return json::parse(m);
}

void append_f32(std::vector<char>& payload, const double* data, std::size_t n) {
  const std::size_t base = payload.size();
  payload.resize(base + n * 4);
  auto* out = reinterpret_cast<float*>(payload.data() + base);
  for (std::size_t i = 0; i < n; ++i) out[i] = static_cast<float>(data[i]);
}

void read_f32(const std::vector<char>& payload, std::size_t float_offset,
              double* data, std::size_t n) {
  const auto* in = reinterpret_cast<const float*>(payload.data()) + float_offset;
  for (std::size_t i = 0; i < n; ++i) data[i] = static_cast<double>(in[i]);
}

json matrix_to_json(const Matrix& m) {
  json j;
  j["rows"] = m.rows();
  j["cols"] = m.cols();
  j["data"] = std::vector<double>(m.data(), m.data() + m.size());
  return j;
}

Matrix matrix_from_json(const json& j) {
  Matrix m(j.at("rows").get<Index>(), j.at("cols").get<Index>());
  const auto data = j.at("data").get<std::vector<double>>();
  require(static_cast<Index>(data.size()) == m.size(), "matrix_from_json: size");
  std::copy(data.begin(), data.end(), m.data());
  return m;
}

json vector_to_json(const Vector& v) {
  return json(std::vector<double>(v.data(), v.data() + v.size()));
}

Vector vector_from_json(const json& j) {
  const auto data = j.get<std::vector<double>>();
  Vector v(static_cast<Index>(data.size()));
  std::copy(data.begin(), data.end(), v.data());
  return v;
}

}  // namespace

json to_json(const ModelConfig& c) {
  return json{{"n_blocks", c.n_blocks},
              {"embed_dim", c.embed_dim},
              {"n_heads", c.n_heads},
              {"context_K", c.context_K},
              {"state_dim", c.state_dim},
              {"action_dim", c.action_dim},
              {"max_timestep", c.max_timestep},
              {"dropout_resid", c.dropout_resid},
              {"dropout_attn", c.dropout_attn},
              {"vocab_size", c.vocab_size},
              {"seed", c.seed},
              {"action_bound", c.action_bound}};
}

ModelConfig model_config_from_json(const json& j) {
  ModelConfig c;
  c.n_blocks = j.at("n_blocks").get<int>();
  c.embed_dim = j.at("embed_dim").get<int>();
  c.n_heads = j.at("n_heads").get<int>();
  c.context_K = j.at("context_K").get<int>();
  c.state_dim = j.at("state_dim").get<int>();
  c.action_dim = j.at("action_dim").get<int>();
  c.max_timestep = j.at("max_timestep").get<int>();
  c.dropout_resid = j.at("dropout_resid").get<double>();
  c.dropout_attn = j.at("dropout_attn").get<double>();
  c.vocab_size = j.at("vocab_size").get<int>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.action_bound = j.at("action_bound").get<double>();
  return c;
}

json to_json(const MdpSpec& s) {
  return json{{"state_dim", s.state_dim},
              {"action_dim", s.action_dim},
              {"horizon", s.horizon},
              {"dynamics", matrix_to_json(s.dynamics)},
              {"noise_scale", s.noise_scale},
              {"goal", vector_to_json(s.goal)},
              {"action_bound", s.action_bound},
              {"observation_mask", vector_to_json(s.observation_mask)}};
}

MdpSpec mdp_spec_from_json(const json& j) {
  MdpSpec s;
  s.state_dim = j.at("state_dim").get<int>();
  s.action_dim = j.at("action_dim").get<int>();
  s.horizon = j.at("horizon").get<int>();
  s.dynamics = matrix_from_json(j.at("dynamics"));
  s.noise_scale = j.at("noise_scale").get<double>();
  s.goal = vector_from_json(j.at("goal"));
  s.action_bound = j.at("action_bound").get<double>();
  s.observation_mask = vector_from_json(j.at("observation_mask"));
  return s;
}

json to_json(const PretrainCorpusSpec& s) {
  return json{{"modality", s.modality == Modality::kLanguageLike ? "language-like"
                                                                 : "image-like"},
              {"vocab_size", s.vocab_size},
              {"sequence_length", s.sequence_length},
              {"transition_temperature", s.transition_temperature},
              {"zipf_exponent", s.zipf_exponent},
              {"image_side", s.image_side},
              {"shape_density", s.shape_density}};
}

PretrainCorpusSpec corpus_spec_from_json(const json& j) {
  PretrainCorpusSpec s;
  const auto modality = j.at("modality").get<std::string>();
  require(modality == "language-like" || modality == "image-like",
          "corpus spec: unknown modality " + modality);
  s.modality = modality == "language-like" ? Modality::kLanguageLike
                                           : Modality::kImageLike;
  s.vocab_size = j.at("vocab_size").get<int>();
  s.sequence_length = j.at("sequence_length").get<int>();
  s.transition_temperature = j.at("transition_temperature").get<double>();
  s.zipf_exponent = j.at("zipf_exponent").get<double>();
  s.image_side = j.at("image_side").get<int>();
  s.shape_density = j.at("shape_density").get<double>();
  return s;
}

json to_json(const TrainConfig& c) {
  return json{{"epochs", c.epochs},
              {"steps_per_epoch", c.steps_per_epoch},
              {"batch_size", c.batch_size},
              {"learning_rate", c.learning_rate},
              {"warmup_steps", c.warmup_steps},
              {"weight_decay", c.weight_decay},
              {"clip_max_norm", c.clip_max_norm},
              {"context_K", c.context_K},
              {"eval_episodes", c.eval_episodes},
              {"rtg_target", c.rtg_target},
              {"seed", c.seed},
              {"probe_batches", c.probe_batches}};
}

TrainConfig train_config_from_json(const json& j) {
  TrainConfig c;
  c.epochs = j.at("epochs").get<int>();
  c.steps_per_epoch = j.at("steps_per_epoch").get<int>();
  c.batch_size = j.at("batch_size").get<int>();
  c.learning_rate = j.at("learning_rate").get<double>();
  c.warmup_steps = j.at("warmup_steps").get<int>();
  c.weight_decay = j.at("weight_decay").get<double>();
  c.clip_max_norm = j.at("clip_max_norm").get<double>();
  c.context_K = j.at("context_K").get<int>();
  c.eval_episodes = j.at("eval_episodes").get<int>();
  c.rtg_target = j.at("rtg_target").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.probe_batches = j.at("probe_batches").get<int>();
  return c;
}

json to_json(const MineConfig& c) {
  return json{{"hidden_width", c.hidden_width},
              {"hidden_layers", c.hidden_layers},
              {"iterations", c.iterations},
              {"learning_rate", c.learning_rate},
              {"seed", c.seed}};
}

MineConfig mine_config_from_json(const json& j) {
  MineConfig c;
  c.hidden_width = j.at("hidden_width").get<int>();
  c.hidden_layers = j.at("hidden_layers").get<int>();
  c.iterations = j.at("iterations").get<int>();
  c.learning_rate = j.at("learning_rate").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  json manifest;
  manifest["type"] = "checkpoint";
  manifest["config"] = to_json(ckpt.config);
  manifest["provenance"] = ckpt.provenance;
  manifest["lineage"] = ckpt.lineage;
  json params = json::array();
  std::vector<char> payload;
  std::size_t offset = 0;
  for (const auto& name : ckpt.names) {
    const Matrix& m = ckpt.at(name);
    params.push_back(json{{"name", name},
                          {"rows", m.rows()},
                          {"cols", m.cols()},
                          {"offset", offset}});
    append_f32(payload, m.data(), static_cast<std::size_t>(m.size()));
    offset += static_cast<std::size_t>(m.size());
  }
  manifest["params"] = std::move(params);
  write_container(path, "DTCK", manifest, payload);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::vector<char> payload;
  const json manifest = read_container(path, "DTCK", payload);
  Checkpoint ckpt;
  ckpt.config = model_config_from_json(manifest.at("config"));
  ckpt.provenance = manifest.at("provenance").get<std::string>();
  ckpt.lineage = manifest.at("lineage").get<std::vector<std::string>>();
  for (const auto& p : manifest.at("params")) {
    const auto name = p.at("name").get<std::string>();
    Matrix m(p.at("rows").get<Index>(), p.at("cols").get<Index>());
    read_f32(payload, p.at("offset").get<std::size_t>(), m.data(),
             static_cast<std::size_t>(m.size()));
    ckpt.names.push_back(name);
    ckpt.params.emplace(name, std::move(m));
  }
  require(ckpt.names == canonical_param_names(ckpt.config),
          "load_checkpoint: parameter inventory mismatch");
  return ckpt;
}

void save_dataset(const std::filesystem::path& path, const Dataset& dataset) {
  const int T = dataset.spec.horizon;
  const int S = dataset.spec.state_dim;
  const int A = dataset.spec.action_dim;
  json manifest;
  manifest["type"] = "dataset";
  manifest["spec"] = to_json(dataset.spec);
  manifest["seed"] = dataset.seed;
  manifest["policy_quality"] = dataset.policy_quality;
  manifest["action_noise"] = dataset.action_noise;
  manifest["return_scale"] = dataset.return_scale;
  manifest["random_ref"] = dataset.random_ref;
  manifest["expert_ref"] = dataset.expert_ref;
  manifest["best_return"] = dataset.best_return;
  manifest["n_trajectories"] = dataset.trajectories.size();
  // Per-trajectory block layout, in floats from the block start.
  manifest["fields"] = json{
      {"states", json{{"offset", 0}, {"count", T * S}}},
      {"actions", json{{"offset", T * S}, {"count", T * A}}},
      {"rewards", json{{"offset", T * S + T * A}, {"count", T}}},
      {"returns_to_go", json{{"offset", T * S + T * A + T}, {"count", T}}}};
  manifest["floats_per_trajectory"] = T * S + T * A + 2 * T;

  std::vector<char> payload;
  for (const auto& traj : dataset.trajectories) {
    require(traj.length() == T, "save_dataset: trajectory length != horizon");
    for (const auto& s : traj.states)
      append_f32(payload, s.data(), static_cast<std::size_t>(s.size()));
    for (const auto& a : traj.actions)
      append_f32(payload, a.data(), static_cast<std::size_t>(a.size()));
    append_f32(payload, traj.rewards.data(), traj.rewards.size());
    append_f32(payload, traj.returns_to_go.data(), traj.returns_to_go.size());
  }
  write_container(path, "DTDS", manifest, payload);
}

Dataset load_dataset(const std::filesystem::path& path) {
  std::vector<char> payload;
  const json manifest = read_container(path, "DTDS", payload);
  Dataset ds;
  ds.spec = mdp_spec_from_json(manifest.at("spec"));
  ds.seed = manifest.at("seed").get<std::uint64_t>();
  ds.policy_quality = manifest.at("policy_quality").get<double>();
  ds.action_noise = manifest.at("action_noise").get<double>();
  ds.return_scale = manifest.at("return_scale").get<double>();
  ds.random_ref = manifest.at("random_ref").get<double>();
  ds.expert_ref = manifest.at("expert_ref").get<double>();
  ds.best_return = manifest.at("best_return").get<double>();
  const auto n = manifest.at("n_trajectories").get<std::size_t>();
  const int T = ds.spec.horizon;
  const int S = ds.spec.state_dim;
  const int A = ds.spec.action_dim;
  const auto stride = manifest.at("floats_per_trajectory").get<std::size_t>();
  ds.trajectories.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    Trajectory& traj = ds.trajectories[i];
    std::size_t off = i * stride;
    traj.states.assign(static_cast<std::size_t>(T), Vector(S));
    for (auto& s : traj.states) {
      read_f32(payload, off, s.data(), static_cast<std::size_t>(S));
      off += static_cast<std::size_t>(S);
    }
    traj.actions.assign(static_cast<std::size_t>(T), Vector(A));
    for (auto& a : traj.actions) {
      read_f32(payload, off, a.data(), static_cast<std::size_t>(A));
      off += static_cast<std::size_t>(A);
    }
    traj.rewards.resize(static_cast<std::size_t>(T));
    read_f32(payload, off, traj.rewards.data(), traj.rewards.size());
    off += static_cast<std::size_t>(T);
    traj.returns_to_go.resize(static_cast<std::size_t>(T));
    read_f32(payload, off, traj.returns_to_go.data(), traj.returns_to_go.size());
    traj.timesteps.resize(static_cast<std::size_t>(T));
    for (int t = 0; t < T; ++t) traj.timesteps[static_cast<std::size_t>(t)] = t;
  }
  return ds;
}

void save_corpus(const std::filesystem::path& path, const Corpus& corpus) {
  json manifest;
  manifest["type"] = "corpus";
  manifest["spec"] = to_json(corpus.spec);
  manifest["seed"] = corpus.seed;
  manifest["n_sequences"] = corpus.sequences.size();
  std::vector<char> payload;
  for (const auto& seq : corpus.sequences) {
    const auto len = static_cast<std::uint32_t>(seq.size());
    const std::size_t base = payload.size();
    payload.resize(base + 4 + seq.size() * 4);
    std::memcpy(payload.data() + base, &len, 4);
    std::memcpy(payload.data() + base + 4, seq.data(), seq.size() * 4);
  }
  write_container(path, "DTCP", manifest, payload);
}

Corpus load_corpus(const std::filesystem::path& path) {
  std::vector<char> payload;
  const json manifest = read_container(path, "DTCP", payload);
  Corpus corpus;
  corpus.spec = corpus_spec_from_json(manifest.at("spec"));
  corpus.seed = manifest.at("seed").get<std::uint64_t>();
  const auto n = manifest.at("n_sequences").get<std::size_t>();
  corpus.sequences.resize(n);
  std::size_t off = 0;
  for (std::size_t i = 0; i < n; ++i) {
    std::uint32_t len = 0;
    std::memcpy(&len, payload.data() + off, 4);
    off += 4;
    corpus.sequences[i].resize(len);
    std::memcpy(corpus.sequences[i].data(), payload.data() + off,
                static_cast<std::size_t>(len) * 4);
    off += static_cast<std::size_t>(len) * 4;
  }
  return corpus;
}

void save_activation_dump(const std::filesystem::path& path,
                          const std::string& model_tag,
                          const std::vector<ActivationRecord>& records) {
  json manifest;
  manifest["type"] = "activations";
  manifest["model_tag"] = model_tag;
  json layers = json::array();
  std::vector<char> payload;
  std::size_t offset = 0;
  for (const auto& rec : records) {
    layers.push_back(json{{"layer_name", rec.layer_name},
                          {"token_position", rec.token_position},
                          {"rows", rec.values.rows()},
                          {"cols", rec.values.cols()},
                          {"offset", offset}});
    append_f32(payload, rec.values.data(),
               static_cast<std::size_t>(rec.values.size()));
    offset += static_cast<std::size_t>(rec.values.size());
  }
  manifest["layers"] = std::move(layers);
  write_container(path, "DTAD", manifest, payload);
}

std::vector<ActivationRecord> load_activation_dump(
    const std::filesystem::path& path, std::string* model_tag) {
  std::vector<char> payload;
  const json manifest = read_container(path, "DTAD", payload);
  if (model_tag != nullptr) *model_tag = manifest.at("model_tag").get<std::string>();
  std::vector<ActivationRecord> records;
  for (const auto& l : manifest.at("layers")) {
    ActivationRecord rec;
    rec.layer_name = l.at("layer_name").get<std::string>();
    rec.token_position = l.at("token_position").get<int>();
    rec.values.resize(l.at("rows").get<Index>(), l.at("cols").get<Index>());
    read_f32(payload, l.at("offset").get<std::size_t>(), rec.values.data(),
             static_cast<std::size_t>(rec.values.size()));
    records.push_back(std::move(rec));
  }
  return records;
}

std::string config_hash(const json& j) {
  const std::string s = j.dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf);
}

}  // namespace dtlab
