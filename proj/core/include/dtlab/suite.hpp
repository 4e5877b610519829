#ifndef DTLAB_SUITE_HPP
#define DTLAB_SUITE_HPP

#include <filesystem>
#include <string>
#include <vector>

#include "dtlab/io.hpp"

namespace dtlab {

// End-to-end experiment plan: pre-train on two modalities, fine-tune with
// and without context, then run the full analysis battery. One output
// directory per seed.
struct ExperimentPlan {
  std::string name = "desk";
  std::vector<std::uint64_t> seeds = {1};
  int workers = 2;

  MdpSpec mdp;
  int n_trajectories = 200;
  double policy_quality = 0.5;
  double data_action_noise = 0.05;
  double return_scale = 100.0;

  ModelConfig model;  // control-head trunk for fine-tuning
  bool paper_parity_depth = true;  // image trunk gets 2x blocks

  PretrainCorpusSpec language_corpus;
  PretrainCorpusSpec image_corpus;
  int corpus_sequences = 1000;
  TrainConfig pretrain_config;

  TrainConfig finetune_config;  // K = 20 runs
  TrainConfig k1_config;        // no-context runs

  int cka_samples = 100;
  int grad_norm_samples = 100;
  int confusion_samples = 50;
  int mi_samples = 100;
  MineConfig mine_config;
  double cka_threshold = 0.23;
  // Attention-distance comparison epoch: first epoch whose no-context
  // normalized scores differ by more than this many points.
  double divergence_points = 20.0;

  static ExperimentPlan desk();
  void validate() const;
};

json to_json(const ExperimentPlan& plan);
ExperimentPlan plan_from_json(const json& j);

struct SuiteResult {
  std::filesystem::path root;  // per-seed directories underneath
  json summary;                // merged across seeds
};

// Runs every stage for every seed and writes one artifact per analysis:
//   data/, corpora/, ckpts/, runs/, analysis/, report/
// Fails with the stage name on any error. Outputs are byte-reproducible
// from (plan, seed).
SuiteResult run_paper_suite(const ExperimentPlan& plan,
                            const std::filesystem::path& out_root);

}  // namespace dtlab

#endif
