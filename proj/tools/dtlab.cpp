// Command-line front end: dataset/corpus generation, pre-training,
// fine-tuning, the analysis battery, block replacement, report merging and
// the full experiment suite.

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "dtlab/attention_metrics.hpp"
#include "dtlab/cka.hpp"
#include "dtlab/grad_metrics.hpp"
#include "dtlab/param_metrics.hpp"
#include "dtlab/report.hpp"
#include "dtlab/suite.hpp"

namespace fs = std::filesystem;
using dtlab::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitBadConfig = 2;
constexpr int kExitMissingInput = 3;
constexpr int kExitNumerical = 4;

// Outputs created by the running command; removed again if it fails partway.
std::vector<fs::path> g_outputs;

void note_output(const fs::path& p) { g_outputs.push_back(p); }

void cleanup_partial_outputs() {
  for (auto it = g_outputs.rbegin(); it != g_outputs.rend(); ++it) {
    std::error_code ec;
    fs::remove_all(*it, ec);
  }
}

fs::path resolve_out(const std::string& path) {
  fs::path p(path);
  if (p.is_absolute()) return p;
  const char* root = std::getenv("DTLAB_OUT_ROOT");
  return root != nullptr ? fs::path(root) / p : p;
}

json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw dtlab::MissingInputError("cannot open config: " + path);
  json j;
  in >> j;
  return j;
}

dtlab::Checkpoint load_ckpt(const std::string& path) {
  if (!fs::exists(path)) throw dtlab::MissingInputError("missing checkpoint: " + path);
  return dtlab::load_checkpoint(path);
}

dtlab::Dataset load_ds(const std::string& path) {
  if (!fs::exists(path)) throw dtlab::MissingInputError("missing dataset: " + path);
  return dtlab::load_dataset(path);
}

dtlab::TokenType parse_token(const std::string& s) {
  if (s == "rtg") return dtlab::TokenType::kRtg;
  if (s == "state") return dtlab::TokenType::kState;
  if (s == "action") return dtlab::TokenType::kAction;
  throw std::invalid_argument("unknown token type: " + s);
}

dtlab::CkaEstimator parse_estimator(const std::string& s) {
  if (s == "biased") return dtlab::CkaEstimator::kBiased;
  if (s == "unbiased") return dtlab::CkaEstimator::kUnbiased;
  throw std::invalid_argument("unknown estimator: " + s);
}

// Shared analyze options.
struct AnalyzeArgs {
  std::string ckpt_a, ckpt_b, dataset, out;
  std::string token = "state";
  std::string estimator = "unbiased";
  std::string direction = "input";
  std::string depth = "middle";
  std::string pair = "state-action";
  std::string dump_activations;
  int samples = 100;
  int confusion_samples = 50;
  int context_K = 0;
  int epoch = -1;
  double threshold = 0.23;
  bool clip = true;
  std::uint64_t seed = 0;
  int workers = 1;
  int mine_width = 400;
  int mine_layers = 2;
  int mine_iters = 1000;
  double mine_lr = 1e-4;

  dtlab::MineConfig mine_config() const {
    dtlab::MineConfig c;
    c.hidden_width = mine_width;
    c.hidden_layers = mine_layers;
    c.iterations = mine_iters;
    c.learning_rate = mine_lr;
    c.seed = seed;
    return c;
  }
};

std::string args_hash(const AnalyzeArgs& a, const std::string& sub) {
  json j{{"sub", sub},     {"a", a.ckpt_a},       {"b", a.ckpt_b},
         {"ds", a.dataset}, {"token", a.token},    {"samples", a.samples},
         {"seed", a.seed},  {"epoch", a.epoch},    {"clip", a.clip},
         {"threshold", a.threshold}};
  return dtlab::config_hash(j);
}

// Captures both checkpoints on the same sampled windows.
std::pair<std::vector<dtlab::LayerCapture>, std::vector<dtlab::LayerCapture>>
capture_pair(const dtlab::Checkpoint& a, const dtlab::Checkpoint& b,
             const dtlab::Dataset& ds, int n_samples, std::uint64_t seed) {
  dtlab::Rng rng(seed);
  dtlab::TrajectoryBatch batch =
      dtlab::sample_full_windows(ds, a.config.context_K, n_samples, rng);
  dtlab::Rng dummy(0);
  dtlab::CaptureOptions cap;
  cap.activations = true;
  auto ra = dt_forward(batch, a, dtlab::RunMode::kEval, dummy, cap);
  auto rb = dt_forward(batch, b, dtlab::RunMode::kEval, dummy, cap);
  return {std::move(ra.captures), std::move(rb.captures)};
}

int cmd_dataset(const std::string& config_path, const std::string& out) {
  const json cfg = load_json_file(config_path);
  const dtlab::MdpSpec spec = dtlab::mdp_spec_from_json(cfg.at("mdp"));
  dtlab::Rng rng(cfg.value("seed", std::uint64_t{0}));
  dtlab::Dataset ds = dtlab::generate_medium_dataset(
      spec, cfg.value("policy_quality", 0.5), cfg.value("n_trajectories", 200),
      rng, cfg.value("action_noise", 0.0), cfg.value("return_scale", 1000.0));
  const fs::path out_path = resolve_out(out);
  note_output(out_path);
  dtlab::save_dataset(out_path, ds);
  std::cout << "dataset: " << ds.trajectories.size() << " trajectories, refs ("
            << ds.random_ref << ", " << ds.expert_ref << ") -> " << out_path
            << "\n";
  return kExitOk;
}

int cmd_corpus(const std::string& config_path, const std::string& out) {
  const json cfg = load_json_file(config_path);
  const dtlab::PretrainCorpusSpec spec =
      dtlab::corpus_spec_from_json(cfg.at("spec"));
  dtlab::Rng rng(cfg.value("seed", std::uint64_t{0}));
  dtlab::Corpus corpus = dtlab::generate_pretrain_corpus(
      spec, cfg.value("n_sequences", 1000), rng);
  const fs::path out_path = resolve_out(out);
  note_output(out_path);
  dtlab::save_corpus(out_path, corpus);
  std::cout << "corpus: " << corpus.sequences.size() << " sequences -> "
            << out_path << "\n";
  return kExitOk;
}

int cmd_pretrain(const std::string& config_path, const std::string& corpus_path,
                 const std::string& out) {
  const json cfg = load_json_file(config_path);
  if (!fs::exists(corpus_path))
    throw dtlab::MissingInputError("missing corpus: " + corpus_path);
  const dtlab::Corpus corpus = dtlab::load_corpus(corpus_path);
  dtlab::ModelConfig model = dtlab::model_config_from_json(cfg.at("model"));
  model.vocab_size = corpus.spec.vocab_size;
  const dtlab::TrainConfig train = dtlab::train_config_from_json(cfg.at("train"));
  dtlab::Rng rng(cfg.value("seed", std::uint64_t{0}));
  const auto result = dtlab::pretrain(model, corpus, train, rng);
  const fs::path out_path = resolve_out(out);
  note_output(out_path);
  dtlab::save_checkpoint(out_path, result.checkpoint);
  std::cout << "pretrain: " << result.checkpoint.provenance << ", loss "
            << result.epoch_losses.front() << " -> " << result.epoch_losses.back()
            << ", saved " << out_path << "\n";
  return kExitOk;
}

int cmd_finetune(const std::string& config_path, const std::string& dataset_path,
                 const std::string& init_path, const std::string& out_dir) {
  const json cfg = load_json_file(config_path);
  const dtlab::Dataset ds = load_ds(dataset_path);
  dtlab::TrainConfig train = dtlab::train_config_from_json(cfg.at("train"));
  const std::uint64_t seed = cfg.value("seed", std::uint64_t{0});
  dtlab::Rng rng(seed);

  dtlab::Checkpoint init = [&] {
    dtlab::ModelConfig model = dtlab::model_config_from_json(cfg.at("model"));
    model.state_dim = ds.spec.state_dim;
    model.action_dim = ds.spec.action_dim;
    model.action_bound = ds.spec.action_bound;
    if (init_path.empty()) {
      dtlab::Rng init_rng = rng.derive(0x171);
      return dtlab::Checkpoint::init_random(model, init_rng);
    }
    dtlab::Checkpoint base = load_ckpt(init_path);
    if (base.config.has_control_head() &&
        base.config.state_dim == model.state_dim &&
        base.config.action_dim == model.action_dim)
      return base;
    model.n_blocks = base.config.n_blocks;  // keep the pre-trained depth
    dtlab::Rng adapt_rng = rng.derive(0xada);
    return dtlab::adapt_for_control(base, model, adapt_rng);
  }();

  if (train.rtg_target == 0.0) train.rtg_target = 0.9 * ds.best_return;

  const fs::path dir = resolve_out(out_dir);
  note_output(dir);
  fs::create_directories(dir);
  const std::string hash = dtlab::config_hash(cfg);
  {
    json run_cfg;
    run_cfg["train_config"] = dtlab::to_json(train);
    run_cfg["model_config"] = dtlab::to_json(init.config);
    run_cfg["config_hash"] = hash;
    run_cfg["seed"] = seed;
    std::ofstream out(dir / "config.json");
    out << run_cfg.dump(2) << "\n";
  }
  const auto result = dtlab::finetune(init, ds, train, rng);
  for (std::size_t e = 0; e < result.epoch_checkpoints.size(); ++e)
    dtlab::save_checkpoint(dir / ("epoch_" + std::to_string(e) + ".ckpt"),
                           result.epoch_checkpoints[e]);
  dtlab::write_epoch_log_csv(dir / "log.csv", result.logs,
                             "config_hash=" + hash + " seed=" +
                                 std::to_string(seed));
  std::cout << "finetune: action error " << result.logs.front().mean_action_error
            << " -> " << result.logs.back().mean_action_error << ", score "
            << result.logs.back().normalized_score << " -> " << dir << "\n";
  return kExitOk;
}

int cmd_analyze(const std::string& sub, const AnalyzeArgs& a) {
  dtlab::MetricReport report;
  const std::string hash = args_hash(a, sub);
  const fs::path out_path = resolve_out(a.out);

  if (sub == "cka-profile" || sub == "cka-cross-model") {
    dtlab::Checkpoint ca = load_ckpt(a.ckpt_a);
    dtlab::Checkpoint cb = load_ckpt(a.ckpt_b);
    const dtlab::Dataset ds = load_ds(a.dataset);
    const auto [caps_a, caps_b] = capture_pair(ca, cb, ds, a.samples, a.seed);
    const auto type = parse_token(a.token);
    const auto acts_a = slice_activations(caps_a, type, ca.config.context_K);
    const auto acts_b = slice_activations(caps_b, type, cb.config.context_K);
    if (!a.dump_activations.empty()) {
      const fs::path dump = resolve_out(a.dump_activations);
      note_output(dump);
      dtlab::save_activation_dump(dump, ca.provenance, acts_a);
    }
    if (sub == "cka-profile") {
      const auto profile =
          layerwise_cka_profile(acts_a, acts_b, parse_estimator(a.estimator));
      for (const auto& r : profile)
        report.add(dtlab::MetricRow{"cka_profile", cb.provenance, r.layer_name,
                                    a.token, a.epoch, r.value, r.n_samples,
                                    a.seed});
      const auto above = layers_above_threshold(profile, a.threshold);
      std::cout << above.size() << " layers above threshold " << a.threshold
                << ":\n";
      for (const auto& name : above) std::cout << "  " << name << "\n";
    } else {
      const dtlab::Matrix m =
          cross_model_cka_matrix(acts_a, acts_b, parse_estimator(a.estimator));
      for (dtlab::Index i = 0; i < m.rows(); ++i)
        for (dtlab::Index j = 0; j < m.cols(); ++j)
          report.add(dtlab::MetricRow{
              "cka_cross_model", ca.provenance + "|" + cb.provenance,
              acts_a[static_cast<std::size_t>(i)].layer_name + "|" +
                  acts_b[static_cast<std::size_t>(j)].layer_name,
              a.token, a.epoch, m(i, j), a.samples, a.seed});
    }
  } else if (sub == "cka-cross-layer") {
    dtlab::Checkpoint ca = load_ckpt(a.ckpt_a);
    const dtlab::Dataset ds = load_ds(a.dataset);
    dtlab::Rng rng(a.seed);
    const auto caps =
        capture_activations(ca, ds, a.samples, ca.config.context_K, rng);
    const auto acts = slice_activations(caps, parse_token(a.token),
                                        ca.config.context_K);
    const dtlab::Matrix m =
        cross_layer_cka_matrix(acts, parse_estimator(a.estimator));
    for (dtlab::Index i = 0; i < m.rows(); ++i)
      for (dtlab::Index j = 0; j < m.cols(); ++j)
        report.add(dtlab::MetricRow{
            "cka_cross_layer", ca.provenance,
            acts[static_cast<std::size_t>(i)].layer_name + "|" +
                acts[static_cast<std::size_t>(j)].layer_name,
            a.token, a.epoch, m(i, j), a.samples, a.seed});
  } else if (sub == "params") {
    const dtlab::Checkpoint ca = load_ckpt(a.ckpt_a);
    const dtlab::Checkpoint cb = load_ckpt(a.ckpt_b);
    for (const auto& s : parameter_similarity_per_set(ca, cb)) {
      report.add(dtlab::MetricRow{"param_l2", cb.provenance, s.name, "", a.epoch,
                                  s.l2_distance, 0, a.seed});
      report.add(dtlab::MetricRow{"param_cosine", cb.provenance, s.name, "",
                                  a.epoch, s.cosine, 0, a.seed});
    }
    const auto c = parameter_similarity_concatenated(ca, cb);
    report.add(dtlab::MetricRow{"param_l2", cb.provenance, c.name, "", a.epoch,
                                c.l2_distance, 0, a.seed});
    report.add(dtlab::MetricRow{"param_cosine", cb.provenance, c.name, "",
                                a.epoch, c.cosine, 0, a.seed});
  } else if (sub == "grads") {
    const dtlab::Checkpoint ckpt = load_ckpt(a.ckpt_a);
    const dtlab::Dataset ds = load_ds(a.dataset);
    const std::string mode = a.clip ? "clipped" : "unclipped";
    dtlab::Rng rng_c(a.seed);
    const auto conf =
        per_sample_gradients(ckpt, ds, a.confusion_samples, a.clip, rng_c);
    report.add(dtlab::MetricRow{"grad_confusion", ckpt.provenance, "", mode,
                                a.epoch, gradient_confusion(conf),
                                a.confusion_samples, a.seed});
    dtlab::Rng rng_n(a.seed + 1);
    const auto norms = per_sample_gradients(ckpt, ds, a.samples, a.clip, rng_n);
    const auto stats = gradient_norm_stats(norms);
    report.add(dtlab::MetricRow{"grad_norm_q1", ckpt.provenance, "", mode,
                                a.epoch, stats.box.q1, a.samples, a.seed});
    report.add(dtlab::MetricRow{"grad_norm_median", ckpt.provenance, "", mode,
                                a.epoch, stats.box.median, a.samples, a.seed});
    report.add(dtlab::MetricRow{"grad_norm_q3", ckpt.provenance, "", mode,
                                a.epoch, stats.box.q3, a.samples, a.seed});
    for (const auto& r : per_paramset_norm_ratio(norms))
      report.add(dtlab::MetricRow{"grad_norm_ratio", ckpt.provenance, r.name,
                                  mode, a.epoch, r.ratio, a.samples, a.seed});
  } else if (sub == "attdist") {
    const dtlab::Checkpoint ckpt = load_ckpt(a.ckpt_a);
    const dtlab::Dataset ds = load_ds(a.dataset);
    const int K = a.context_K > 0 ? a.context_K : ckpt.config.context_K;
    dtlab::Rng rng(a.seed);
    const auto recs = capture_attention(ckpt, ds, a.samples, K, rng);
    for (const auto& d : attention_distance(recs)) {
      double mean = 0.0;
      for (double v : d.per_sample) mean += v;
      mean /= static_cast<double>(d.per_sample.size());
      report.add(dtlab::MetricRow{"attdist_mean", ckpt.provenance,
                                  std::to_string(d.block_index), "", a.epoch,
                                  mean, static_cast<int>(d.per_sample.size()),
                                  a.seed});
    }
  } else if (sub == "attdist-gap") {
    const dtlab::Checkpoint at_epoch = load_ckpt(a.ckpt_a);
    const dtlab::Checkpoint at_zero = load_ckpt(a.ckpt_b);
    const dtlab::Dataset ds = load_ds(a.dataset);
    const int K = a.context_K > 0 ? a.context_K : at_epoch.config.context_K;
    dtlab::Rng rng_a(a.seed);
    dtlab::Rng rng_b(a.seed);  // same windows
    const auto rec_e = capture_attention(at_epoch, ds, a.samples, K, rng_a);
    const auto rec_0 = capture_attention(at_zero, ds, a.samples, K, rng_b);
    const auto gaps =
        attention_distance_gap(attention_distance(rec_e), attention_distance(rec_0));
    for (const auto& g : gaps) {
      double mean = 0.0;
      for (double v : g.per_sample) mean += v;
      mean /= static_cast<double>(g.per_sample.size());
      report.add(dtlab::MetricRow{"attdist_gap_mean", at_epoch.provenance,
                                  std::to_string(g.block_index), "", a.epoch,
                                  mean, static_cast<int>(g.per_sample.size()),
                                  a.seed});
    }
  } else if (sub == "mi-repr") {
    const dtlab::Checkpoint ckpt = load_ckpt(a.ckpt_a);
    const dtlab::Dataset ds = load_ds(a.dataset);
    const auto direction = a.direction == "input"
                               ? dtlab::MiDirection::kInputToRepr
                               : dtlab::MiDirection::kReprToLabel;
    const auto depth = a.depth == "shallow"   ? dtlab::BlockDepth::kShallow
                       : a.depth == "middle" ? dtlab::BlockDepth::kMiddle
                                              : dtlab::BlockDepth::kDeep;
    dtlab::Rng rng(a.seed);
    const auto points = mi_profile_repr(ckpt, ds, direction, depth,
                                        a.mine_config(), a.samples, rng,
                                        a.workers);
    const char* metric =
        direction == dtlab::MiDirection::kInputToRepr ? "mi_repr_input"
                                                      : "mi_repr_label";
    for (const auto& p : points) {
      if (p.estimate.excluded) continue;
      report.add(dtlab::MetricRow{
          metric, ckpt.provenance,
          p.estimate.layer + "@pos" + std::to_string(p.token_position),
          p.token_type, a.epoch, p.estimate.value, p.estimate.n_samples,
          a.seed});
    }
  } else if (sub == "mi-data") {
    const dtlab::Dataset ds = load_ds(a.dataset);
    const auto pair = a.pair == "state-action" ? dtlab::MiPair::kStateAction
                                               : dtlab::MiPair::kRtgAction;
    const int K = a.context_K > 0 ? a.context_K : 20;
    dtlab::Rng rng(a.seed);
    const auto points =
        mi_data_level(ds, pair, K, a.mine_config(), a.samples, rng, a.workers);
    for (const auto& p : points) {
      if (p.estimate.excluded) continue;
      report.add(dtlab::MetricRow{"mi_data", "dataset",
                                  "step_" + std::to_string(p.token_position),
                                  p.token_type, a.epoch, p.estimate.value,
                                  p.estimate.n_samples, a.seed});
    }
  } else {
    throw std::invalid_argument("unknown analyze sub-metric: " + sub);
  }

  note_output(out_path);
  report.write_csv(out_path, "config_hash=" + hash);
  std::cout << "analyze " << sub << ": " << report.rows.size() << " rows -> "
            << out_path << "\n";
  return kExitOk;
}

int cmd_replace(const std::string& recipient_path, const std::string& donor_path,
                const std::string& dataset_path, const std::string& config_path,
                const std::string& out_dir) {
  const json cfg = load_json_file(config_path);
  const dtlab::Checkpoint recipient = load_ckpt(recipient_path);
  const dtlab::Checkpoint donor = load_ckpt(donor_path);
  const dtlab::Dataset ds = load_ds(dataset_path);
  dtlab::TrainConfig train = dtlab::train_config_from_json(cfg.at("train"));
  if (train.rtg_target == 0.0) train.rtg_target = 0.9 * ds.best_return;
  const std::uint64_t seed = cfg.value("seed", std::uint64_t{0});
  dtlab::Rng rng(seed);
  const std::string hash = dtlab::config_hash(cfg);

  const fs::path dir = resolve_out(out_dir);
  note_output(dir);
  const auto series =
      run_block_replacement_protocol(recipient, donor, ds, train, rng);
  for (const auto& s : series) {
    fs::create_directories(dir / s.label);
    dtlab::write_epoch_log_csv(dir / s.label / "log.csv", s.logs,
                               "config_hash=" + hash + " label=" + s.label);
    std::ofstream sm(dir / s.label / "smoothed.csv", std::ios::trunc);
    sm << "epoch,action_error_smoothed,mean_return_smoothed\n";
    for (std::size_t e = 0; e < s.logs.size(); ++e)
      sm << s.logs[e].epoch << ','
         << dtlab::format_value(s.smoothed_action_error[e]) << ','
         << dtlab::format_value(s.smoothed_mean_return[e]) << '\n';
  }
  std::cout << "replace: " << series.size() << " series -> " << dir << "\n";
  return kExitOk;
}

int cmd_report(const std::vector<std::string>& inputs, const std::string& out_dir) {
  dtlab::MetricReport merged;
  for (const auto& input : inputs) {
    if (!fs::exists(input))
      throw dtlab::MissingInputError("missing report input: " + input);
    merged.append(dtlab::MetricReport::read_csv(input));
  }
  const fs::path dir = resolve_out(out_dir);
  note_output(dir);
  fs::create_directories(dir);
  json inputs_json(inputs);
  const std::string hash = dtlab::config_hash(inputs_json);
  merged.write_csv(dir / "report.csv", "config_hash=" + hash);
  json summary;
  summary["config_hash"] = hash;
  summary["n_rows"] = merged.rows.size();
  std::map<std::string, int> per_metric;
  for (const auto& r : merged.rows) ++per_metric[r.metric];
  summary["rows_per_metric"] = per_metric;
  summary["rows"] = merged.to_json();
  std::ofstream out(dir / "summary.json");
  out << summary.dump(2) << "\n";
  std::cout << "report: " << merged.rows.size() << " rows -> " << dir << "\n";
  return kExitOk;
}

int cmd_suite(const std::string& plan_path, bool desk, const std::string& out_dir,
              std::uint64_t seed_override) {
  dtlab::ExperimentPlan plan;
  if (desk) {
    plan = dtlab::ExperimentPlan::desk();
  } else {
    plan = dtlab::plan_from_json(load_json_file(plan_path));
  }
  if (seed_override != 0) plan.seeds = {seed_override};
  const fs::path dir = resolve_out(out_dir);
  note_output(dir);
  const auto result = dtlab::run_paper_suite(plan, dir);
  std::cout << "suite: plan '" << plan.name << "' -> " << result.root << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Decision-transformer training and introspection toolkit"};
  app.require_subcommand(1);

  std::string config_path, out, corpus_path, dataset_path, init_path, out_dir;
  std::string recipient_path, donor_path, plan_path;
  std::vector<std::string> report_inputs;
  bool desk_plan = false;
  std::uint64_t suite_seed = 0;
  AnalyzeArgs a;

  auto* dataset_cmd = app.add_subcommand("dataset", "Generate an offline dataset");
  dataset_cmd->add_option("--config", config_path)->required();
  dataset_cmd->add_option("--out", out)->required();

  auto* corpus_cmd = app.add_subcommand("corpus", "Generate a pre-training corpus");
  corpus_cmd->add_option("--config", config_path)->required();
  corpus_cmd->add_option("--out", out)->required();

  auto* pretrain_cmd = app.add_subcommand("pretrain", "Pre-train on a corpus");
  pretrain_cmd->add_option("--config", config_path)->required();
  pretrain_cmd->add_option("--corpus", corpus_path)->required();
  pretrain_cmd->add_option("--out", out)->required();

  auto* finetune_cmd = app.add_subcommand("finetune", "Fine-tune on a dataset");
  finetune_cmd->add_option("--config", config_path)->required();
  finetune_cmd->add_option("--dataset", dataset_path)->required();
  finetune_cmd->add_option("--init", init_path);
  finetune_cmd->add_option("--out-dir", out_dir)->required();

  auto* analyze_cmd = app.add_subcommand("analyze", "Run one analysis metric");
  std::string sub;
  analyze_cmd
      ->add_option("metric", sub,
                   "cka-profile|cka-cross-layer|cka-cross-model|params|grads|"
                   "attdist|attdist-gap|mi-repr|mi-data")
      ->required();
  analyze_cmd->add_option("--a", a.ckpt_a);
  analyze_cmd->add_option("--b", a.ckpt_b);
  analyze_cmd->add_option("--dataset", a.dataset);
  analyze_cmd->add_option("--out", a.out)->required();
  analyze_cmd->add_option("--token", a.token);
  analyze_cmd->add_option("--estimator", a.estimator);
  analyze_cmd->add_option("--direction", a.direction);
  analyze_cmd->add_option("--depth", a.depth);
  analyze_cmd->add_option("--pair", a.pair);
  analyze_cmd->add_option("--samples", a.samples);
  analyze_cmd->add_option("--confusion-samples", a.confusion_samples);
  analyze_cmd->add_option("--context", a.context_K);
  analyze_cmd->add_option("--epoch", a.epoch);
  analyze_cmd->add_option("--threshold", a.threshold);
  analyze_cmd->add_flag("--clip,!--no-clip", a.clip);
  analyze_cmd->add_option("--seed", a.seed);
  analyze_cmd->add_option("--workers", a.workers);
  analyze_cmd->add_option("--mine-width", a.mine_width);
  analyze_cmd->add_option("--mine-layers", a.mine_layers);
  analyze_cmd->add_option("--mine-iters", a.mine_iters);
  analyze_cmd->add_option("--mine-lr", a.mine_lr);
  analyze_cmd->add_option("--dump-activations", a.dump_activations);

  auto* replace_cmd =
      app.add_subcommand("replace", "Block-replacement protocol");
  replace_cmd->add_option("--recipient", recipient_path)->required();
  replace_cmd->add_option("--donor", donor_path)->required();
  replace_cmd->add_option("--dataset", dataset_path)->required();
  replace_cmd->add_option("--config", config_path)->required();
  replace_cmd->add_option("--out-dir", out_dir)->required();

  auto* report_cmd = app.add_subcommand("report", "Merge metric reports");
  report_cmd->add_option("--inputs", report_inputs)->required();
  report_cmd->add_option("--out-dir", out_dir)->required();

  auto* suite_cmd = app.add_subcommand("suite", "Run the full experiment suite");
  suite_cmd->add_option("--plan", plan_path);
  suite_cmd->add_flag("--desk", desk_plan, "Use the built-in desk plan");
  suite_cmd->add_option("--out-dir", out_dir)->required();
  suite_cmd->add_option("--seed", suite_seed, "Override the plan's seed list");

  CLI11_PARSE(app, argc, argv);

  try {
    if (dataset_cmd->parsed()) return cmd_dataset(config_path, out);
    if (corpus_cmd->parsed()) return cmd_corpus(config_path, out);
    if (pretrain_cmd->parsed()) return cmd_pretrain(config_path, corpus_path, out);
    if (finetune_cmd->parsed())
      return cmd_finetune(config_path, dataset_path, init_path, out_dir);
    if (analyze_cmd->parsed()) return cmd_analyze(sub, a);
    if (replace_cmd->parsed())
      return cmd_replace(recipient_path, donor_path, dataset_path, config_path,
                         out_dir);
    if (report_cmd->parsed()) return cmd_report(report_inputs, out_dir);
    if (suite_cmd->parsed())
      return cmd_suite(plan_path, desk_plan, out_dir, suite_seed);
  } catch (const dtlab::MissingInputError& e) {
    cleanup_partial_outputs();
    std::cerr << "error (missing input): " << e.what() << "\n";
    return kExitMissingInput;
  } catch (const dtlab::NumericError& e) {
    cleanup_partial_outputs();
    std::cerr << "error (numerical): " << e.what() << "\n";
    return kExitNumerical;
  } catch (const std::invalid_argument& e) {
    cleanup_partial_outputs();
    std::cerr << "error (bad config): " << e.what() << "\n";
    return kExitBadConfig;
  } catch (const json::exception& e) {
    cleanup_partial_outputs();
    std::cerr << "error (bad config): " << e.what() << "\n";
    return kExitBadConfig;
  } catch (const std::exception& e) {
    cleanup_partial_outputs();
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumerical;
  }
  return kExitOk;
}
