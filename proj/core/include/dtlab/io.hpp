#ifndef DTLAB_IO_HPP
#define DTLAB_IO_HPP

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "dtlab/checkpoint.hpp"
#include "dtlab/corpus.hpp"
#include "dtlab/mine.hpp"
#include "dtlab/trainer.hpp"
#include "dtlab/trajectory.hpp"
#include "dtlab/transformer.hpp"

namespace dtlab {

// All artifact files share one container: magic, format version, a JSON
// manifest, then a little-endian binary payload. Numeric payloads are 32-bit
// floats; token payloads are length-prefixed 32-bit unsigned arrays. The
// manifest records the payload layout (name -> shape/offset).
//
//   bytes 0..3   magic ("DTCK" checkpoint, "DTDS" dataset, "DTCP" corpus,
//                "DTAD" activation dump)
//   bytes 4..7   u32 format version (currently 1)
//   bytes 8..15  u64 manifest length in bytes
//   manifest     UTF-8 JSON
//   payload      raw little-endian data

using json = nlohmann::json;

class MissingInputError : public std::runtime_error {
 public:
  explicit MissingInputError(const std::string& what) : std::runtime_error(what) {}
};

// JSON codecs for the config structs (also used by CLI config files).
json to_json(const ModelConfig& c);
ModelConfig model_config_from_json(const json& j);
json to_json(const MdpSpec& s);
MdpSpec mdp_spec_from_json(const json& j);
json to_json(const PretrainCorpusSpec& s);
PretrainCorpusSpec corpus_spec_from_json(const json& j);
json to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const json& j);
json to_json(const MineConfig& c);
MineConfig mine_config_from_json(const json& j);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

void save_dataset(const std::filesystem::path& path, const Dataset& dataset);
Dataset load_dataset(const std::filesystem::path& path);

void save_corpus(const std::filesystem::path& path, const Corpus& corpus);
Corpus load_corpus(const std::filesystem::path& path);

void save_activation_dump(const std::filesystem::path& path,
                          const std::string& model_tag,
                          const std::vector<ActivationRecord>& records);
std::vector<ActivationRecord> load_activation_dump(
    const std::filesystem::path& path, std::string* model_tag = nullptr);

// FNV-1a hash of a canonical JSON dump, as fixed-width hex. Carried into
// output manifests and report headers so runs are traceable to their config.
std::string config_hash(const json& j);

}  // namespace dtlab

#endif
