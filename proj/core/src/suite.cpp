#include "dtlab/suite.hpp"

#include <fstream>

#include "dtlab/attention_metrics.hpp"
#include "dtlab/cka.hpp"
#include "dtlab/grad_metrics.hpp"
#include "dtlab/param_metrics.hpp"
#include "dtlab/report.hpp"

namespace dtlab {

namespace fs = std::filesystem;

ExperimentPlan ExperimentPlan::desk() {
  ExperimentPlan p;
  p.mdp = MdpSpec::point_control(4, 2, 60, 0.05);
  p.n_trajectories = 200;
  p.policy_quality = 0.5;
  p.data_action_noise = 0.05;
  p.return_scale = 100.0;

  p.model = ModelConfig::desk(p.mdp.state_dim, p.mdp.action_dim);
  p.paper_parity_depth = true;

  p.language_corpus.modality = Modality::kLanguageLike;
  p.language_corpus.vocab_size = 16;
  p.language_corpus.sequence_length = 32;
  p.image_corpus.modality = Modality::kImageLike;
  p.image_corpus.vocab_size = 8;
  p.image_corpus.image_side = 8;
  p.image_corpus.sequence_length = 64;
  p.corpus_sequences = 1000;

  p.pretrain_config.epochs = 2;
  p.pretrain_config.steps_per_epoch = 250;
  p.pretrain_config.batch_size = 32;
  p.pretrain_config.learning_rate = 1e-3;
  p.pretrain_config.warmup_steps = 50;

  p.finetune_config = TrainConfig::desk();

  p.k1_config = TrainConfig::desk();
  p.k1_config.epochs = 5;
  p.k1_config.steps_per_epoch = 200;
  p.k1_config.context_K = 1;

  // Paper-scale MINE (400x2, 1000 iterations) is kept as the library
  // default; the desk plan trims the statistics net so the full profile
  // grid stays desk-sized.
  p.mine_config.hidden_width = 128;
  p.mine_config.hidden_layers = 2;
  p.mine_config.iterations = 300;
  p.mine_config.learning_rate = 1e-3;
  return p;
}

void ExperimentPlan::validate() const {
  require(!seeds.empty(), "ExperimentPlan: seeds must be nonempty");
  require(workers >= 1, "ExperimentPlan: workers must be >= 1");
  mdp.validate();
  model.validate();
  require(model.has_control_head(), "ExperimentPlan: model needs a control head");
  require(model.state_dim == mdp.state_dim && model.action_dim == mdp.action_dim,
          "ExperimentPlan: model dims must match the MDP");
  require(mdp.horizon >= model.context_K,
          "ExperimentPlan: horizon must cover the context length");
  language_corpus.validate();
  image_corpus.validate();
}

json to_json(const ExperimentPlan& p) {
  return json{{"name", p.name},
              {"seeds", p.seeds},
              {"workers", p.workers},
              {"mdp", to_json(p.mdp)},
              {"n_trajectories", p.n_trajectories},
              {"policy_quality", p.policy_quality},
              {"data_action_noise", p.data_action_noise},
              {"return_scale", p.return_scale},
              {"model", to_json(p.model)},
              {"paper_parity_depth", p.paper_parity_depth},
              {"language_corpus", to_json(p.language_corpus)},
              {"image_corpus", to_json(p.image_corpus)},
              {"corpus_sequences", p.corpus_sequences},
              {"pretrain_config", to_json(p.pretrain_config)},
              {"finetune_config", to_json(p.finetune_config)},
              {"k1_config", to_json(p.k1_config)},
              {"cka_samples", p.cka_samples},
              {"grad_norm_samples", p.grad_norm_samples},
              {"confusion_samples", p.confusion_samples},
              {"mi_samples", p.mi_samples},
              {"mine_config", to_json(p.mine_config)},
              {"cka_threshold", p.cka_threshold},
              {"divergence_points", p.divergence_points}};
}

ExperimentPlan plan_from_json(const json& j) {
  ExperimentPlan p;
  p.name = j.at("name").get<std::string>();
  p.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
  p.workers = j.at("workers").get<int>();
  p.mdp = mdp_spec_from_json(j.at("mdp"));
  p.n_trajectories = j.at("n_trajectories").get<int>();
  p.policy_quality = j.at("policy_quality").get<double>();
  p.data_action_noise = j.at("data_action_noise").get<double>();
  p.return_scale = j.at("return_scale").get<double>();
  p.model = model_config_from_json(j.at("model"));
  p.paper_parity_depth = j.at("paper_parity_depth").get<bool>();
  p.language_corpus = corpus_spec_from_json(j.at("language_corpus"));
  p.image_corpus = corpus_spec_from_json(j.at("image_corpus"));
  p.corpus_sequences = j.at("corpus_sequences").get<int>();
  p.pretrain_config = train_config_from_json(j.at("pretrain_config"));
  p.finetune_config = train_config_from_json(j.at("finetune_config"));
  p.k1_config = train_config_from_json(j.at("k1_config"));
  p.cka_samples = j.at("cka_samples").get<int>();
  p.grad_norm_samples = j.at("grad_norm_samples").get<int>();
  p.confusion_samples = j.at("confusion_samples").get<int>();
  p.mi_samples = j.at("mi_samples").get<int>();
  p.mine_config = mine_config_from_json(j.at("mine_config"));
  p.cka_threshold = j.at("cka_threshold").get<double>();
  p.divergence_points = j.at("divergence_points").get<double>();
  return p;
}

namespace {

struct Stage {
  const char* name;
};

[[noreturn]] void stage_failure(const std::string& stage, const std::string& what) {
  throw std::runtime_error("stage '" + stage + "' failed: " + what);
}

template <typename F>
auto run_stage(const std::string& stage, F&& f) {
  try {
    return f();
  } catch (const std::exception& e) {
    stage_failure(stage, e.what());
  }
}

void write_json_file(const fs::path& path, const json& j) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
  out << j.dump(2) << "\n";
}

struct RunArtifacts {
  FinetuneResult result;
  fs::path dir;
};

RunArtifacts run_and_save_finetune(const fs::path& dir, const Checkpoint& init,
                                   const Dataset& ds, const TrainConfig& cfg,
                                   Rng rng, const std::string& hash,
                                   std::uint64_t seed) {
  fs::create_directories(dir);
  json cfg_json;
  cfg_json["train_config"] = to_json(cfg);
  cfg_json["model_config"] = to_json(init.config);
  cfg_json["config_hash"] = hash;
  cfg_json["seed"] = seed;
  write_json_file(dir / "config.json", cfg_json);

  RunArtifacts art;
  art.dir = dir;
  art.result = finetune(init, ds, cfg, rng);
  for (std::size_t e = 0; e < art.result.epoch_checkpoints.size(); ++e)
    save_checkpoint(dir / ("epoch_" + std::to_string(e) + ".ckpt"),
                    art.result.epoch_checkpoints[e]);
  write_epoch_log_csv(dir / "log.csv", art.result.logs,
                      "config_hash=" + hash + " seed=" + std::to_string(seed));
  return art;
}

double best_normalized_score(const std::vector<EpochLog>& logs) {
  double best = logs.front().normalized_score;
  for (const auto& l : logs) best = std::max(best, l.normalized_score);
  return best;
}

// First epoch where the no-context runs' normalized scores differ by more
// than `points`; falls back to the epoch of largest difference.
std::pair<int, bool> divergence_epoch(const std::vector<EpochLog>& a,
                                      const std::vector<EpochLog>& b,
                                      double points) {
  const std::size_t n = std::min(a.size(), b.size());
  int best_epoch = 1;
  double best_diff = -1.0;
  for (std::size_t e = 1; e < n; ++e) {
    const double diff =
        std::abs(a[e].normalized_score - b[e].normalized_score);
    if (diff > points) return {static_cast<int>(e), true};
    if (diff > best_diff) {
      best_diff = diff;
      best_epoch = static_cast<int>(e);
    }
  }
  return {best_epoch, false};
}

}  // namespace

SuiteResult run_paper_suite(const ExperimentPlan& plan, const fs::path& out_root) {
  plan.validate();
  const std::string plan_hash = config_hash(to_json(plan));
  fs::create_directories(out_root);
  write_json_file(out_root / "plan.json", to_json(plan));

  json summary;
  summary["plan_name"] = plan.name;
  summary["plan_hash"] = plan_hash;
  summary["seeds"] = plan.seeds;

  for (const std::uint64_t seed : plan.seeds) {
    const fs::path root = out_root / ("seed_" + std::to_string(seed));
    fs::create_directories(root);
    fs::create_directories(root / "data");
    fs::create_directories(root / "corpora");
    fs::create_directories(root / "ckpts");
    fs::create_directories(root / "runs");
    fs::create_directories(root / "analysis");
    fs::create_directories(root / "report");
    Rng master(seed);
    json seed_summary;
    seed_summary["seed"] = seed;
    MetricReport merged;

    // --- data ---
    Dataset ds = run_stage("dataset", [&] {
      Rng rng = master.derive(1);
      Dataset d = generate_medium_dataset(plan.mdp, plan.policy_quality,
                                          plan.n_trajectories, rng,
                                          plan.data_action_noise,
                                          plan.return_scale);
      save_dataset(root / "data" / "medium.dtds", d);
      return d;
    });
    seed_summary["references"] = json{{"random", ds.random_ref},
                                      {"expert", ds.expert_ref},
                                      {"best_return", ds.best_return}};
    const double rtg_target = 0.9 * ds.best_return;

    // --- corpora + pretraining ---
    Corpus lang_corpus = run_stage("corpus-language", [&] {
      Rng rng = master.derive(2);
      Corpus c = generate_pretrain_corpus(plan.language_corpus,
                                          plan.corpus_sequences, rng);
      save_corpus(root / "corpora" / "language.dtcp", c);
      return c;
    });
    Corpus image_corpus = run_stage("corpus-image", [&] {
      Rng rng = master.derive(3);
      Corpus c = generate_pretrain_corpus(plan.image_corpus,
                                          plan.corpus_sequences, rng);
      save_corpus(root / "corpora" / "image.dtcp", c);
      return c;
    });

    ModelConfig lm_lang_cfg = plan.model;
    lm_lang_cfg.state_dim = 0;
    lm_lang_cfg.action_dim = 0;
    lm_lang_cfg.vocab_size = plan.language_corpus.vocab_size;
    ModelConfig lm_image_cfg = lm_lang_cfg;
    lm_image_cfg.vocab_size = plan.image_corpus.vocab_size;
    if (plan.paper_parity_depth) lm_image_cfg.n_blocks = 2 * plan.model.n_blocks;

    Checkpoint lang_lm = run_stage("pretrain-language", [&] {
      Rng rng = master.derive(4);
      PretrainResult pr = pretrain(lm_lang_cfg, lang_corpus, plan.pretrain_config, rng);
      save_checkpoint(root / "ckpts" / "language_pretrained.ckpt", pr.checkpoint);
      seed_summary["pretrain_language_losses"] = pr.epoch_losses;
      return pr.checkpoint;
    });
    Checkpoint image_lm = run_stage("pretrain-image", [&] {
      Rng rng = master.derive(5);
      PretrainResult pr = pretrain(lm_image_cfg, image_corpus, plan.pretrain_config, rng);
      save_checkpoint(root / "ckpts" / "image_pretrained.ckpt", pr.checkpoint);
      seed_summary["pretrain_image_losses"] = pr.epoch_losses;
      return pr.checkpoint;
    });

    // --- control checkpoints ---
    Checkpoint random_init = run_stage("init-random", [&] {
      ModelConfig cfg = plan.model;
      cfg.seed = seed;
      Rng rng = master.derive(6);
      return Checkpoint::init_random(cfg, rng);
    });
    Checkpoint lang_init = run_stage("adapt-language", [&] {
      ModelConfig cfg = plan.model;
      cfg.seed = seed;
      Rng rng = master.derive(7);
      return adapt_for_control(lang_lm, cfg, rng);
    });
    Checkpoint image_init = run_stage("adapt-image", [&] {
      ModelConfig cfg = plan.model;
      cfg.n_blocks = lm_image_cfg.n_blocks;
      cfg.seed = seed;
      Rng rng = master.derive(8);
      return adapt_for_control(image_lm, cfg, rng);
    });

    // --- fine-tuning with context (K = 20) ---
    TrainConfig ft_cfg = plan.finetune_config;
    ft_cfg.rtg_target = rtg_target;
    ft_cfg.seed = seed;
    struct ModelRun {
      std::string tag;
      const Checkpoint* init;
      RunArtifacts art;
    };
    std::vector<ModelRun> k20_runs;
    k20_runs.push_back({"random-init", &random_init, {}});
    k20_runs.push_back({"language-pretrained", &lang_init, {}});
    k20_runs.push_back({"image-pretrained", &image_init, {}});
    for (std::size_t i = 0; i < k20_runs.size(); ++i) {
      auto& run = k20_runs[i];
      run.art = run_stage("finetune-k20-" + run.tag, [&] {
        return run_and_save_finetune(root / "runs" / ("ft_" + run.tag + "_k20"),
                                     *run.init, ds, ft_cfg,
                                     master.derive(10 + i), plan_hash, seed);
      });
    }

    // --- 5.1 activation similarity ---
    run_stage("cka-profile", [&] {
      MetricReport report;
      json threshold_listing;
      for (const auto& run : k20_runs) {
        Rng rng = master.derive(20);
        TrajectoryBatch batch = sample_full_windows(
            ds, run.init->config.context_K, plan.cka_samples, rng);
        Rng dummy(0);
        CaptureOptions cap;
        cap.activations = true;
        const auto pre =
            dt_forward(batch, run.art.result.epoch_checkpoints.front(),
                       RunMode::kEval, dummy, cap)
                .captures;
        const auto post = dt_forward(batch, run.art.result.final_checkpoint,
                                     RunMode::kEval, dummy, cap)
                              .captures;
        const auto pre_s =
            slice_activations(pre, TokenType::kState, run.init->config.context_K);
        const auto post_s = slice_activations(post, TokenType::kState,
                                              run.init->config.context_K);
        auto profile = layerwise_cka_profile(pre_s, post_s);
        const int final_epoch = static_cast<int>(run.art.result.logs.size()) - 1;
        for (const auto& r : profile)
          report.add(MetricRow{"cka_profile", run.tag, r.layer_name, "state",
                               final_epoch, r.value, r.n_samples, seed});
        if (run.init->config.n_blocks == 2 * plan.model.n_blocks) {
          for (const auto& r : align_profile_to_half_depth(profile))
            report.add(MetricRow{"cka_profile_aligned", run.tag, r.layer_name,
                                 "state", final_epoch, r.value, r.n_samples,
                                 seed});
        }
        threshold_listing[run.tag] =
            layers_above_threshold(profile, plan.cka_threshold);
      }
      report.write_csv(root / "analysis" / "cka_profile.csv",
                       "config_hash=" + plan_hash);
      seed_summary["cka_layers_above_threshold"] = threshold_listing;
      seed_summary["cka_threshold"] = plan.cka_threshold;
      merged.append(report);
      return 0;
    });

    // --- 5.2 mutual information profiles ---
    run_stage("mi-repr", [&] {
      MetricReport report;
      int excluded = 0;
      for (const auto& run : k20_runs) {
        for (const auto depth :
             {BlockDepth::kShallow, BlockDepth::kMiddle, BlockDepth::kDeep}) {
          for (const auto direction :
               {MiDirection::kInputToRepr, MiDirection::kReprToLabel}) {
            Rng rng = master.derive(21);
            const auto points = mi_profile_repr(
                run.art.result.final_checkpoint, ds, direction, depth,
                plan.mine_config, plan.mi_samples, rng, plan.workers);
            const char* metric = direction == MiDirection::kInputToRepr
                                     ? "mi_repr_input"
                                     : "mi_repr_label";
            const int final_epoch =
                static_cast<int>(run.art.result.logs.size()) - 1;
            for (const auto& p : points) {
              if (p.estimate.excluded) {
                ++excluded;
                continue;
              }
              MetricRow row{metric, run.tag, p.estimate.layer, p.token_type,
                            final_epoch, p.estimate.value,
                            p.estimate.n_samples, seed};
              row.layer_or_block += "@pos" + std::to_string(p.token_position);
              report.add(row);
            }
          }
        }
      }
      report.write_csv(root / "analysis" / "mi_repr.csv",
                       "config_hash=" + plan_hash);
      seed_summary["mi_excluded_points"] = excluded;
      merged.append(report);
      return 0;
    });

    // --- 5.3 parameter similarity ---
    run_stage("param-similarity", [&] {
      MetricReport report;
      for (const auto& run : k20_runs) {
        const auto& pre = run.art.result.epoch_checkpoints.front();
        const auto& post = run.art.result.final_checkpoint;
        const int final_epoch = static_cast<int>(run.art.result.logs.size()) - 1;
        for (const auto& s : parameter_similarity_per_set(pre, post)) {
          report.add(MetricRow{"param_l2", run.tag, s.name, "", final_epoch,
                               s.l2_distance, 0, seed});
          report.add(MetricRow{"param_cosine", run.tag, s.name, "", final_epoch,
                               s.cosine, 0, seed});
        }
        const auto c = parameter_similarity_concatenated(pre, post);
        report.add(MetricRow{"param_l2", run.tag, c.name, "", final_epoch,
                             c.l2_distance, 0, seed});
        report.add(MetricRow{"param_cosine", run.tag, c.name, "", final_epoch,
                             c.cosine, 0, seed});
      }
      report.write_csv(root / "analysis" / "param_similarity.csv",
                       "config_hash=" + plan_hash);
      merged.append(report);
      return 0;
    });

    // --- 5.4 gradient suite at epoch 1 ---
    run_stage("grad-suite", [&] {
      MetricReport report;
      for (const auto& run : k20_runs) {
        const Checkpoint& epoch1 = run.art.result.epoch_checkpoints.at(1);
        for (const bool clip : {true, false}) {
          const std::string mode = clip ? "clipped" : "unclipped";
          Rng rng_conf = master.derive(22);
          const auto confusion_samples = per_sample_gradients(
              epoch1, ds, plan.confusion_samples, clip, rng_conf);
          report.add(MetricRow{"grad_confusion", run.tag, "", mode, 1,
                               gradient_confusion(confusion_samples),
                               plan.confusion_samples, seed});
          Rng rng_norm = master.derive(23);
          const auto norm_samples = per_sample_gradients(
              epoch1, ds, plan.grad_norm_samples, clip, rng_norm);
          const auto stats = gradient_norm_stats(norm_samples);
          report.add(MetricRow{"grad_norm_q1", run.tag, "", mode, 1,
                               stats.box.q1, plan.grad_norm_samples, seed});
          report.add(MetricRow{"grad_norm_median", run.tag, "", mode, 1,
                               stats.box.median, plan.grad_norm_samples, seed});
          report.add(MetricRow{"grad_norm_q3", run.tag, "", mode, 1,
                               stats.box.q3, plan.grad_norm_samples, seed});
          report.add(MetricRow{"grad_norm_whisker_lo", run.tag, "", mode, 1,
                               stats.box.whisker_lo, plan.grad_norm_samples,
                               seed});
          report.add(MetricRow{"grad_norm_whisker_hi", run.tag, "", mode, 1,
                               stats.box.whisker_hi, plan.grad_norm_samples,
                               seed});
          for (const auto& r : per_paramset_norm_ratio(norm_samples))
            report.add(MetricRow{"grad_norm_ratio", run.tag, r.name, mode, 1,
                                 r.ratio, plan.grad_norm_samples, seed});
        }
      }
      report.write_csv(root / "analysis" / "grad_suite.csv",
                       "config_hash=" + plan_hash);
      merged.append(report);
      return 0;
    });

    // --- 5.5 fine-tuning without context ---
    TrainConfig k1_cfg = plan.k1_config;
    k1_cfg.context_K = 1;
    k1_cfg.rtg_target = rtg_target;
    k1_cfg.seed = seed;
    RunArtifacts k1_random = run_stage("finetune-k1-random", [&] {
      return run_and_save_finetune(root / "runs" / "ft_random-init_k1",
                                   random_init, ds, k1_cfg, master.derive(13),
                                   plan_hash, seed);
    });
    RunArtifacts k1_lang = run_stage("finetune-k1-language", [&] {
      return run_and_save_finetune(root / "runs" / "ft_language-pretrained_k1",
                                   lang_init, ds, k1_cfg, master.derive(14),
                                   plan_hash, seed);
    });
    run_stage("k1-scores", [&] {
      MetricReport report;
      const double s_rand = best_normalized_score(k1_random.result.logs);
      const double s_lang = best_normalized_score(k1_lang.result.logs);
      report.add(MetricRow{"k1_best_normalized_score", "random-init", "", "",
                           k1_cfg.epochs, s_rand, 0, seed});
      report.add(MetricRow{"k1_best_normalized_score", "language-pretrained", "",
                           "", k1_cfg.epochs, s_lang, 0, seed});
      const double s20_rand = best_normalized_score(k20_runs[0].art.result.logs);
      const double s20_lang = best_normalized_score(k20_runs[1].art.result.logs);
      report.add(MetricRow{"k20_best_normalized_score", "random-init", "", "",
                           ft_cfg.epochs, s20_rand, 0, seed});
      report.add(MetricRow{"k20_best_normalized_score", "language-pretrained",
                           "", "", ft_cfg.epochs, s20_lang, 0, seed});
      report.write_csv(root / "analysis" / "k1_scores.csv",
                       "config_hash=" + plan_hash);
      // Normalized-return table, environment rows x model columns.
      seed_summary["k1_normalized_score_table"] =
          json{{"environments", {"synthetic-point"}},
               {"models", {"language-pretrained", "random-init"}},
               {"values", {{s_lang, s_rand}}}};
      merged.append(report);
      return 0;
    });

    // --- 5.6.1 block replacement ---
    const auto replacement_series = run_stage("block-replacement", [&] {
      Rng rng = master.derive(15);
      auto series =
          run_block_replacement_protocol(random_init, lang_init, ds, k1_cfg, rng);
      MetricReport report;
      for (const auto& s : series) {
        const fs::path dir = root / "runs" / "replace" / s.label;
        fs::create_directories(dir);
        write_epoch_log_csv(dir / "log.csv", s.logs,
                            "config_hash=" + plan_hash + " label=" + s.label);
        std::ofstream sm(dir / "smoothed.csv", std::ios::trunc);
        sm << "epoch,action_error_smoothed,mean_return_smoothed\n";
        for (std::size_t e = 0; e < s.logs.size(); ++e)
          sm << s.logs[e].epoch << ',' << format_value(s.smoothed_action_error[e])
             << ',' << format_value(s.smoothed_mean_return[e]) << '\n';
        for (std::size_t e = 0; e < s.logs.size(); ++e) {
          report.add(MetricRow{"replace_action_error_smoothed", s.label, "", "",
                               s.logs[e].epoch, s.smoothed_action_error[e], 0,
                               seed});
          report.add(MetricRow{"replace_mean_return_smoothed", s.label, "", "",
                               s.logs[e].epoch, s.smoothed_mean_return[e], 0,
                               seed});
        }
      }
      report.write_csv(root / "analysis" / "replacement.csv",
                       "config_hash=" + plan_hash);
      merged.append(report);
      return series;
    });
    seed_summary["replacement_series"] = replacement_series.size();

    // --- 5.6.2 attention distance gap ---
    run_stage("attention-distance", [&] {
      const auto [epoch, detected] = divergence_epoch(
          k1_lang.result.logs, k1_random.result.logs, plan.divergence_points);
      seed_summary["attdist_epoch"] = epoch;
      seed_summary["attdist_epoch_detected"] = detected;
      MetricReport report;
      struct K1Run {
        std::string tag;
        const RunArtifacts* art;
      };
      for (const auto& run :
           {K1Run{"random-init", &k1_random}, K1Run{"language-pretrained",
                                                    &k1_lang}}) {
        Rng rng0 = master.derive(24);
        const auto rec0 =
            capture_attention(run.art->result.epoch_checkpoints.front(), ds,
                              plan.cka_samples, plan.model.context_K, rng0);
        Rng rng_e = master.derive(24);  // same windows at both epochs
        const auto rec_e =
            capture_attention(run.art->result.epoch_checkpoints.at(
                                  static_cast<std::size_t>(epoch)),
                              ds, plan.cka_samples, plan.model.context_K, rng_e);
        auto d0 = attention_distance(rec0);
        auto de = attention_distance(rec_e);
        for (auto& d : de) d.epoch = epoch;
        const auto gaps = attention_distance_gap(de, d0);
        for (const auto& g : gaps) {
          const auto box = box_stats(g.per_sample);
          const std::string block = std::to_string(g.block_index);
          const int n = static_cast<int>(g.per_sample.size());
          double mean = 0.0;
          for (double v : g.per_sample) mean += v;
          mean /= static_cast<double>(n);
          report.add(MetricRow{"attdist_gap_mean", run.tag, block, "", epoch,
                               mean, n, seed});
          report.add(MetricRow{"attdist_gap_q1", run.tag, block, "", epoch,
                               box.q1, n, seed});
          report.add(MetricRow{"attdist_gap_median", run.tag, block, "", epoch,
                               box.median, n, seed});
          report.add(MetricRow{"attdist_gap_q3", run.tag, block, "", epoch,
                               box.q3, n, seed});
        }
      }
      report.write_csv(root / "analysis" / "attdist_gap.csv",
                       "config_hash=" + plan_hash);
      merged.append(report);
      return 0;
    });

    // --- merged report ---
    run_stage("report", [&] {
      merged.write_csv(root / "report" / "report.csv",
                       "config_hash=" + plan_hash + " seed=" +
                           std::to_string(seed));
      write_json_file(root / "report" / "summary.json", seed_summary);
      return 0;
    });

    summary["seed_" + std::to_string(seed)] = seed_summary;
  }

  write_json_file(out_root / "summary.json", summary);
  SuiteResult result;
  result.root = out_root;
  result.summary = summary;
  return result;
}

}  // namespace dtlab
