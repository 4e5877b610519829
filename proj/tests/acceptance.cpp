// Acceptance suite: runs every acceptance criterion at its stated tolerance
// and prints one pass/fail line per criterion. Exit code is the number of
// failed criteria.

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

#include "dtlab/attention_metrics.hpp"
#include "dtlab/cka.hpp"
#include "dtlab/grad_metrics.hpp"
#include "dtlab/numerics.hpp"
#include "dtlab/optim.hpp"
#include "dtlab/report.hpp"
#include "dtlab/suite.hpp"

using namespace dtlab;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;

  void check(bool cond, const std::string& msg) {
    if (!cond) {
      pass = false;
      if (!detail.empty()) detail += "; ";
      detail += msg;
    }
  }
};

double seconds_since(const std::chrono::steady_clock::time_point& t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
      .count();
}

Matrix randn(Index rows, Index cols, Rng& rng) {
  Matrix m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = rng.gaussian();
  return m;
}

Matrix random_orthogonal(Index n, Rng& rng) {
  const Matrix a = randn(n, n, rng);
  return Eigen::HouseholderQR<Matrix>(a).householderQ();
}

std::pair<Matrix, Matrix> gaussian_pair(int n, double rho, Rng& rng) {
  Matrix x(n, 1), y(n, 1);
  for (int i = 0; i < n; ++i) {
    const double z1 = rng.gaussian();
    const double z2 = rng.gaussian();
    x(i, 0) = z1;
    y(i, 0) = rho * z1 + std::sqrt(1.0 - rho * rho) * z2;
  }
  return {x, y};
}

TrajectoryBatch random_dt_batch(const ModelConfig& cfg, int batch_size, Rng& rng,
                                bool include_padding) {
  TrajectoryBatch b;
  b.batch_size = batch_size;
  b.K = cfg.context_K;
  b.state_dim = cfg.state_dim;
  b.action_dim = cfg.action_dim;
  b.rtg = Matrix::Zero(batch_size, b.K);
  b.states = Matrix::Zero(batch_size, static_cast<Index>(b.K) * b.state_dim);
  b.actions = Matrix::Zero(batch_size, static_cast<Index>(b.K) * b.action_dim);
  b.timesteps = Matrix::Zero(batch_size, b.K);
  b.attention_mask = Matrix::Ones(batch_size, b.K);
  for (int s = 0; s < batch_size; ++s) {
    const int pad = include_padding && s == 0 ? b.K - 1 : 0;
    for (int k = 0; k < b.K; ++k) {
      if (k < pad) {
        b.attention_mask(s, k) = 0.0;
        continue;
      }
      b.rtg(s, k) = rng.gaussian();
      for (int i = 0; i < b.state_dim; ++i)
        b.states(s, static_cast<Index>(k) * b.state_dim + i) = rng.gaussian();
      for (int i = 0; i < b.action_dim; ++i)
        b.actions(s, static_cast<Index>(k) * b.action_dim + i) =
            0.5 * rng.gaussian();
      b.timesteps(s, k) = k - pad;
    }
  }
  return b;
}

double fd_rel_err(double analytic, double fd) {
  const double scale = std::max({std::abs(analytic), std::abs(fd), 1e-6});
  return std::abs(analytic - fd) / scale;
}

// ---- criterion 1: CKA estimator suite ----

Outcome criterion_cka(double* elapsed) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome out;
  Rng rng(101);

  const Matrix x = randn(50, 8, rng);
  out.check(std::abs(linear_cka(x, x) - 1.0) <= 1e-9,
            "linear_cka self-similarity");
  out.check(std::abs(unbiased_linear_cka(x, x) - 1.0) <= 1e-9,
            "unbiased self-similarity");

  const Matrix q = random_orthogonal(8, rng);
  const Matrix y = 3.0 * (x * q);
  out.check(std::abs(linear_cka(x, y) - 1.0) <= 1e-9,
            "rotation/scaling invariance");

  for (int trial = 0; trial < 10; ++trial) {
    const Index n = 6 + static_cast<Index>(rng.uniform_index(10));
    const Matrix a = randn(n, 1 + static_cast<Index>(rng.uniform_index(5)), rng);
    const Matrix b = randn(n, 1 + static_cast<Index>(rng.uniform_index(5)), rng);
    const double direct = linear_cka(a, b);
    const double via_gram =
        cka_from_gram(Matrix(a * a.transpose()), Matrix(b * b.transpose()));
    out.check(std::abs(direct - via_gram) <= 1e-9,
              "linear_cka vs cka_from_gram at trial " + std::to_string(trial));
  }

  for (int trial = 0; trial < 50; ++trial) {
    const Matrix a = randn(8, 3, rng);
    const Matrix b = randn(8, 3, rng);
    const Matrix k = a * a.transpose();
    const Matrix l = b * b.transpose();
    out.check(std::abs(cka_detail::unbiased_hsic(k, l) -
                       cka_detail::unbiased_hsic_reference(k, l)) <= 1e-10,
              "unbiased HSIC vs brute force at trial " + std::to_string(trial));
  }

  *elapsed = seconds_since(t0);
  out.check(*elapsed < 10.0, "runtime over 10 s");
  return out;
}

// ---- criterion 2: MINE calibration ----

Outcome criterion_mine(double* elapsed) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome out;
  const double rhos[3] = {0.0, 0.5, 0.9};
  const double lo[3] = {-0.05, 0.05, 0.60};
  const double hi[3] = {0.08, 0.18, 0.90};

  struct Task {
    std::uint64_t seed;
    int rho_index;
  };
  std::vector<Task> tasks;
  for (std::uint64_t seed = 1; seed <= 5; ++seed)
    for (int r = 0; r < 3; ++r) tasks.push_back({seed, r});
  std::vector<double> values(tasks.size());
  std::vector<char> excluded(tasks.size(), 0);

  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= tasks.size()) return;
      const auto [seed, ri] = tasks[i];
      Rng drng = Rng(seed).derive(0xDA7A + static_cast<std::uint64_t>(ri));
      const auto [x, y] = gaussian_pair(2000, rhos[ri], drng);
      MineConfig cfg;  // library defaults: 400x2, 1000 iterations, lr 1e-4
      Rng erng = Rng(seed).derive(0xACC0 + static_cast<std::uint64_t>(ri));
      const MiEstimate est = mine_estimate(x, y, cfg, erng);
      values[i] = est.value;
      excluded[i] = est.excluded ? 1 : 0;
    }
  };
  const unsigned n_workers =
      std::max(1u, std::min(2u, std::thread::hardware_concurrency()));
  std::vector<std::thread> pool;
  for (unsigned w = 0; w < n_workers; ++w) pool.emplace_back(worker);
  for (auto& t : pool) t.join();

  for (std::size_t i = 0; i < tasks.size(); ++i) {
    const auto [seed, ri] = tasks[i];
    char label[64];
    std::snprintf(label, sizeof(label), "seed %llu rho %.1f = %.4f",
                  static_cast<unsigned long long>(seed), rhos[ri], values[i]);
    out.check(excluded[i] == 0, std::string(label) + " excluded");
    out.check(values[i] >= lo[ri] && values[i] <= hi[ri],
              std::string(label) + " outside band");
  }
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const std::size_t base = (seed - 1) * 3;
    out.check(values[base] < values[base + 1] &&
                  values[base + 1] < values[base + 2],
              "not strictly increasing for seed " + std::to_string(seed));
  }

  *elapsed = seconds_since(t0);
  out.check(*elapsed < 300.0, "runtime over 5 min");
  return out;
}

// ---- criterion 3: gradient correctness ----

Outcome criterion_gradients(double* elapsed) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome out;
  const double h = 1e-5;

  ModelConfig cfg;
  cfg.n_blocks = 2;
  cfg.embed_dim = 8;
  cfg.n_heads = 2;
  cfg.context_K = 3;
  cfg.state_dim = 3;
  cfg.action_dim = 2;
  cfg.max_timestep = 16;
  cfg.dropout_attn = 0.0;
  cfg.dropout_resid = 0.0;

  {
    Rng irng(301);
    Checkpoint ckpt = Checkpoint::init_random(cfg, irng);
    Rng brng(302);
    const TrajectoryBatch batch = random_dt_batch(cfg, 2, brng, true);
    Rng dummy(0);
    const Vector grads =
        dt_loss_and_grads(batch, ckpt, dummy, RunMode::kEval).grads.flatten();
    Vector flat = ckpt.flatten();
    Checkpoint probe = ckpt;
    double max_err = 0.0;
    for (Index i = 0; i < flat.size(); ++i) {
      Vector p = flat;
      p[i] += h;
      probe.unflatten(p);
      const double up = dt_loss(batch, probe, RunMode::kEval, dummy);
      p[i] -= 2 * h;
      probe.unflatten(p);
      const double down = dt_loss(batch, probe, RunMode::kEval, dummy);
      max_err = std::max(max_err, fd_rel_err(grads[i], (up - down) / (2 * h)));
    }
    char buf[96];
    std::snprintf(buf, sizeof(buf), "action-loss fd max rel err %.2e", max_err);
    out.check(max_err <= 1e-4, buf);
  }

  {
    ModelConfig lm_cfg = cfg;
    lm_cfg.vocab_size = 7;
    Rng irng(303);
    Checkpoint ckpt = Checkpoint::init_random(lm_cfg, irng);
    TokenBatch batch;
    batch.batch_size = 2;
    batch.seq_len = 5;
    Rng trng(304);
    for (int i = 0; i < 10; ++i)
      batch.ids.push_back(static_cast<std::uint32_t>(trng.uniform_index(7)));
    Rng dummy(0);
    const Vector grads =
        lm_loss_and_grads(batch, ckpt, dummy, RunMode::kEval).grads.flatten();
    Vector flat = ckpt.flatten();
    Checkpoint probe = ckpt;
    double max_err = 0.0;
    for (Index i = 0; i < flat.size(); ++i) {
      Vector p = flat;
      p[i] += h;
      probe.unflatten(p);
      const double up = lm_loss(batch, probe, RunMode::kEval, dummy);
      p[i] -= 2 * h;
      probe.unflatten(p);
      const double down = lm_loss(batch, probe, RunMode::kEval, dummy);
      max_err = std::max(max_err, fd_rel_err(grads[i], (up - down) / (2 * h)));
    }
    char buf[96];
    std::snprintf(buf, sizeof(buf), "token-loss fd max rel err %.2e", max_err);
    out.check(max_err <= 1e-4, buf);
  }

  {
    mine_detail::NetSpec spec;
    spec.in_dim = 3;
    spec.hidden_width = 8;
    spec.hidden_layers = 2;
    Rng rng(305);
    const Vector params = mine_detail::init_net_params(spec, rng);
    const int n = 40;
    Matrix x(n, 2), y(n, 1);
    for (int i = 0; i < n; ++i) {
      x(i, 0) = rng.gaussian();
      x(i, 1) = rng.gaussian();
      y(i, 0) = 0.6 * x(i, 0) + 0.4 * rng.gaussian();
    }
    std::vector<int> perm(n);
    for (int i = 0; i < n; ++i) perm[static_cast<std::size_t>(i)] = (i + 11) % n;
    Vector grads;
    mine_detail::objective_and_grads_f64(spec, params, x, y, perm, &grads);
    double max_err = 0.0;
    for (Index i = 0; i < params.size(); ++i) {
      Vector p = params;
      p[i] += h;
      const double up =
          mine_detail::objective_and_grads_f64(spec, p, x, y, perm, nullptr);
      p[i] -= 2 * h;
      const double down =
          mine_detail::objective_and_grads_f64(spec, p, x, y, perm, nullptr);
      max_err = std::max(max_err, fd_rel_err(grads[i], (up - down) / (2 * h)));
    }
    char buf[96];
    std::snprintf(buf, sizeof(buf), "statistics-net fd max rel err %.2e", max_err);
    out.check(max_err <= 1e-4, buf);
  }

  *elapsed = seconds_since(t0);
  out.check(*elapsed < 120.0, "runtime over 2 min");
  return out;
}

// ---- criterion 4: gradient metrics against oracles ----

Outcome criterion_grad_metrics(double* elapsed) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome out;
  Rng rng(401);
  for (int set = 0; set < 20; ++set) {
    std::vector<GradientSample> samples;
    const int n = 3 + static_cast<int>(rng.uniform_index(10));
    for (int i = 0; i < n; ++i) {
      GradientSample s;
      s.flat.resize(6);
      for (int j = 0; j < 6; ++j) s.flat[j] = rng.gaussian();
      samples.push_back(std::move(s));
    }
    double expect = 1.0;
    for (const auto& a : samples)
      for (const auto& b : samples)
        expect = std::min(expect, cosine_similarity(a.flat, b.flat));
    out.check(gradient_confusion(samples) == expect,
              "confusion differs from brute force at set " + std::to_string(set));
  }

  MdpSpec spec = MdpSpec::point_control(3, 2, 24, 0.1);
  Rng drng(402);
  const Dataset ds = generate_medium_dataset(spec, 0.5, 12, drng, 0.05, 100.0, 10);
  ModelConfig cfg;
  cfg.n_blocks = 2;
  cfg.embed_dim = 16;
  cfg.n_heads = 1;
  cfg.context_K = 8;
  cfg.state_dim = 3;
  cfg.action_dim = 2;
  cfg.max_timestep = 32;
  Rng irng(403);
  const Checkpoint ckpt = Checkpoint::init_random(cfg, irng);
  Rng grng(404);
  const auto samples = per_sample_gradients(ckpt, ds, 50, true, grng, 0.25);
  for (const auto& s : samples)
    out.check(s.flat.norm() <= 0.25 + 1e-9,
              "post-clip norm above threshold for sample " +
                  std::to_string(s.sample_id));

  *elapsed = seconds_since(t0);
  return out;
}

// ---- criterion 5: attention distance against oracles ----

Outcome criterion_attention(double* elapsed) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome out;
  Rng rng(501);

  for (int trial = 0; trial < 25; ++trial) {
    const int L = 2 + static_cast<int>(rng.uniform_index(11));
    const int heads = 1 + static_cast<int>(rng.uniform_index(3));
    AttentionRecord rec;
    rec.block_index = trial;
    rec.n_heads = heads;
    rec.seq_len = L;
    Matrix probs = Matrix::Zero(static_cast<Index>(heads) * L, L);
    for (int h = 0; h < heads; ++h)
      for (int i = 0; i < L; ++i) {
        double sum = 0.0;
        for (int j = 0; j <= i; ++j) {
          const double w = rng.uniform(0.01, 1.0);
          probs(static_cast<Index>(h) * L + i, j) = w;
          sum += w;
        }
        probs.row(static_cast<Index>(h) * L + i) /= sum;
      }
    rec.probs.push_back(probs);
    const auto d = attention_distance({rec});
    double brute = 0.0;
    for (int h = 0; h < heads; ++h)
      for (int i = 0; i < L; ++i)
        for (int j = 0; j < L; ++j)
          brute += probs(static_cast<Index>(h) * L + i, j) * std::abs(i - j);
    brute /= static_cast<double>(heads) * L;
    out.check(std::abs(d[0].per_sample[0] - brute) <= 1e-9,
              "brute-force mismatch at trial " + std::to_string(trial));
    out.check(d[0].per_sample[0] >= 0.0 &&
                  d[0].per_sample[0] <= static_cast<double>(L - 1),
              "distance out of range at trial " + std::to_string(trial));

    const auto gap = attention_distance_gap(d, d);
    out.check(gap[0].per_sample[0] == 0.0, "gap(epoch0, epoch0) nonzero");
  }

  AttentionRecord uniform;
  uniform.block_index = 0;
  uniform.n_heads = 1;
  uniform.seq_len = 3;
  Matrix p = Matrix::Zero(3, 3);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j <= i; ++j) p(i, j) = 1.0 / (i + 1);
  uniform.probs.push_back(p);
  const auto d = attention_distance({uniform});
  out.check(std::abs(d[0].per_sample[0] - 0.5) <= 1e-12,
            "uniform causal L=3 is not 0.5");

  *elapsed = seconds_since(t0);
  return out;
}

// ---- criterion 6: training sanity ----

Outcome criterion_training(double* elapsed) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome out;

  MdpSpec spec = MdpSpec::point_control(4, 2, 60, 0.0);  // noise-free
  Rng drng(601);
  const Dataset ds = generate_medium_dataset(spec, 1.0, 100, drng, 0.0, 100.0, 20);

  ModelConfig mcfg = ModelConfig::desk(4, 2);  // 3 blocks, d=64, K=20
  mcfg.seed = 601;
  Rng irng(602);
  const Checkpoint init = Checkpoint::init_random(mcfg, irng);

  TrainConfig tcfg = TrainConfig::desk();  // 2 epochs x 300 steps
  tcfg.rtg_target = 0.9 * ds.best_return;

  Rng rng(603);
  const FinetuneResult result = finetune(init, ds, tcfg, rng);
  const double err0 = result.logs.front().mean_action_error;
  const double err_last = result.logs.back().mean_action_error;
  {
    char buf[128];
    std::snprintf(buf, sizeof(buf),
                  "action error %.5f -> %.5f (%.1f%% reduction, need >= 90%%)",
                  err0, err_last, 100.0 * (1.0 - err_last / err0));
    out.check(err_last <= 0.1 * err0, buf);
  }

  {
    TrainConfig frozen = tcfg;
    frozen.learning_rate = 0.0;
    frozen.epochs = 1;
    frozen.steps_per_epoch = 25;
    Rng rng2(604);
    const FinetuneResult still = finetune(init, ds, frozen, rng2);
    out.check((still.final_checkpoint.flatten() - init.flatten())
                      .cwiseAbs()
                      .maxCoeff() == 0.0,
              "lr=0 run changed the checkpoint");
  }

  {
    Rng srng(605);
    const TrajectoryBatch batch = sample_batch(ds, tcfg.context_K, 32, srng);
    Checkpoint ckpt = init;
    Vector flat = ckpt.flatten();
    AdamState adam = AdamState::make(flat.size(), tcfg.learning_rate);
    Rng dummy(0);
    std::vector<double> losses;
    for (int step = 0; step < 20; ++step) {
      const LossResult lr = dt_loss_and_grads(batch, ckpt, dummy, RunMode::kEval);
      losses.push_back(lr.loss);
      Vector grads = lr.grads.flatten();
      adam_step(flat, grads, adam);
      ckpt.unflatten(flat);
    }
    int violations = 0;
    for (std::size_t i = 1; i < losses.size(); ++i)
      if (losses[i] > losses[i - 1]) ++violations;
    out.check(violations <= 2, "fixed-batch loss increased " +
                                   std::to_string(violations) + " times");
  }

  *elapsed = seconds_since(t0);
  out.check(*elapsed < 300.0, "runtime over 5 min");
  return out;
}

// ---- criteria 7 and 8: protocol reproduction and determinism ----

std::string read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in),
                     std::istreambuf_iterator<char>());
}

Outcome criterion_suite(const fs::path& out_a, double* elapsed) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome out;

  ExperimentPlan plan = ExperimentPlan::desk();
  plan.seeds = {1};
  fs::remove_all(out_a);
  try {
    run_paper_suite(plan, out_a);
  } catch (const std::exception& e) {
    out.check(false, std::string("suite aborted: ") + e.what());
    *elapsed = seconds_since(t0);
    return out;
  }

  const fs::path seed_dir = out_a / "seed_1";
  // One artifact per analysis section.
  for (const char* artifact :
       {"analysis/cka_profile.csv", "analysis/mi_repr.csv",
        "analysis/param_similarity.csv", "analysis/grad_suite.csv",
        "analysis/k1_scores.csv", "analysis/replacement.csv",
        "analysis/attdist_gap.csv", "report/report.csv",
        "report/summary.json"})
    out.check(fs::exists(seed_dir / artifact),
              std::string("missing artifact ") + artifact);

  // Block replacement: n_blocks + 2 labeled series.
  int series = 0;
  if (fs::exists(seed_dir / "runs" / "replace"))
    for (const auto& entry : fs::directory_iterator(seed_dir / "runs" / "replace"))
      if (entry.is_directory() && fs::exists(entry.path() / "log.csv")) ++series;
  out.check(series == plan.model.n_blocks + 2,
            "replacement series count " + std::to_string(series) + " != " +
                std::to_string(plan.model.n_blocks + 2));

  // K=1 and K=20 fine-tunes completed.
  for (const char* run :
       {"runs/ft_random-init_k20/log.csv",
        "runs/ft_language-pretrained_k20/log.csv",
        "runs/ft_image-pretrained_k20/log.csv", "runs/ft_random-init_k1/log.csv",
        "runs/ft_language-pretrained_k1/log.csv"})
    out.check(fs::exists(seed_dir / run), std::string("missing run ") + run);

  // Normalized-score table has the environment x model shape.
  try {
    std::ifstream in(seed_dir / "report" / "summary.json");
    json summary;
    in >> summary;
    const auto& table = summary.at("k1_normalized_score_table");
    const auto envs = table.at("environments").get<std::vector<std::string>>();
    const auto models = table.at("models").get<std::vector<std::string>>();
    const auto values = table.at("values");
    out.check(envs.size() == 1 && models.size() == 2,
              "score table is not environments x models");
    out.check(values.size() == envs.size() &&
                  values.at(0).size() == models.size(),
              "score table values shape mismatch");
  } catch (const std::exception& e) {
    out.check(false, std::string("summary.json: ") + e.what());
  }

  // Self-replacement reproduces the baseline bit-exactly (donor = recipient)
  // on a compact run.
  {
    MdpSpec spec = MdpSpec::point_control(3, 2, 12, 0.0);
    Rng drng(701);
    const Dataset ds = generate_medium_dataset(spec, 0.5, 10, drng, 0.0, 100.0, 5);
    ModelConfig mcfg;
    mcfg.n_blocks = 2;
    mcfg.embed_dim = 16;
    mcfg.n_heads = 1;
    mcfg.context_K = 4;
    mcfg.state_dim = 3;
    mcfg.action_dim = 2;
    mcfg.max_timestep = 16;
    Rng irng(702);
    const Checkpoint recipient = Checkpoint::init_random(mcfg, irng);
    TrainConfig tcfg;
    tcfg.epochs = 2;
    tcfg.steps_per_epoch = 10;
    tcfg.batch_size = 8;
    tcfg.eval_episodes = 2;
    tcfg.probe_batches = 3;
    tcfg.rtg_target = 0.9 * ds.best_return;
    Rng prng(703);
    const auto series_list =
        run_block_replacement_protocol(recipient, recipient, ds, tcfg, prng);
    const auto& baseline = series_list[static_cast<std::size_t>(mcfg.n_blocks)];
    auto to_csv = [](const ProtocolSeries& s) {
      std::ostringstream os;
      for (const auto& log : s.logs)
        os << log.epoch << ',' << format_value(log.mean_action_error) << ','
           << format_value(log.mean_return) << '\n';
      return os.str();
    };
    const std::string base_csv = to_csv(baseline);
    for (int b = 0; b < mcfg.n_blocks; ++b)
      out.check(to_csv(series_list[static_cast<std::size_t>(b)]) == base_csv,
                "self-replacement curve differs for block " + std::to_string(b));
  }

  *elapsed = seconds_since(t0);
  out.check(*elapsed < 3600.0, "runtime over 60 min");
  return out;
}

Outcome criterion_determinism(const fs::path& out_a, const fs::path& out_b,
                              double* elapsed) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome out;

  ExperimentPlan plan = ExperimentPlan::desk();
  plan.seeds = {1};
  fs::remove_all(out_b);
  try {
    run_paper_suite(plan, out_b);
  } catch (const std::exception& e) {
    out.check(false, std::string("second suite run aborted: ") + e.what());
    *elapsed = seconds_since(t0);
    return out;
  }

  std::size_t compared = 0;
  for (const auto& entry : fs::recursive_directory_iterator(out_a)) {
    if (!entry.is_regular_file()) continue;
    const fs::path rel = fs::relative(entry.path(), out_a);
    const fs::path other = out_b / rel;
    if (!fs::exists(other)) {
      out.check(false, "missing in second run: " + rel.string());
      continue;
    }
    if (read_bytes(entry.path()) != read_bytes(other))
      out.check(false, "bytes differ: " + rel.string());
    ++compared;
  }
  for (const auto& entry : fs::recursive_directory_iterator(out_b)) {
    if (!entry.is_regular_file()) continue;
    const fs::path rel = fs::relative(entry.path(), out_b);
    if (!fs::exists(out_a / rel))
      out.check(false, "extra file in second run: " + rel.string());
  }
  out.check(compared > 0, "nothing compared");

  *elapsed = seconds_since(t0);
  return out;
}

// ---- criterion 9: formula unit checks ----

Outcome criterion_formulas(double* elapsed) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome out;

  out.check(compute_returns_to_go({1, 2, 3}) == std::vector<double>({6, 5, 3}),
            "returns-to-go (1,2,3)");

  out.check(normalized_score(10.0, 10.0, 30.0) == 0.0, "normalized score 0");
  out.check(normalized_score(30.0, 10.0, 30.0) == 100.0, "normalized score 100");
  out.check(normalized_score(20.0, 10.0, 30.0) == 50.0, "normalized score 50");

  Vector g(2);
  g << 0.3, 0.4;
  const auto clip = clip_gradients_global_norm(g, 0.25);
  out.check(std::abs(g[0] - 0.15) <= 1e-15 && std::abs(g[1] - 0.20) <= 1e-15 &&
                std::abs(clip.pre_clip_norm - 0.5) <= 1e-15,
            "clip (0.3,0.4) at 0.25");

  out.check(align_layer_series({1, 3, 2, 4}) == std::vector<double>({2, 3}),
            "align_layer_series (1,3,2,4)");

  const auto ema = ema_smooth({0.0, 1.0}, 0.8);
  out.check(ema[0] == 0.0 && std::abs(ema[1] - 0.2) <= 1e-15,
            "ema_smooth ((0,1), 0.8)");

  *elapsed = seconds_since(t0);
  return out;
}

}  // namespace

int main() {
  struct Row {
    int id;
    const char* name;
    Outcome outcome;
    double seconds = 0.0;
  };
  std::vector<Row> rows;
  const fs::path work = fs::current_path() / "acceptance_out";
  fs::create_directories(work);
  const fs::path suite_a = work / "suite_run_a";
  const fs::path suite_b = work / "suite_run_b";

  auto report = [&](const Row& row) {
    std::printf("[%s] %d. %s (%.1f s)%s%s\n", row.outcome.pass ? "PASS" : "FAIL",
                row.id, row.name, row.seconds,
                row.outcome.detail.empty() ? "" : " -- ",
                row.outcome.detail.c_str());
    std::fflush(stdout);
  };

  {
    Row row{1, "CKA estimator suite", {}, 0.0};
    row.outcome = criterion_cka(&row.seconds);
    report(row);
    rows.push_back(row);
  }
  {
    Row row{9, "formula unit checks", {}, 0.0};
    row.outcome = criterion_formulas(&row.seconds);
    report(row);
    rows.push_back(row);
  }
  {
    Row row{3, "gradient correctness vs finite differences", {}, 0.0};
    row.outcome = criterion_gradients(&row.seconds);
    report(row);
    rows.push_back(row);
  }
  {
    Row row{4, "gradient metrics vs oracles", {}, 0.0};
    row.outcome = criterion_grad_metrics(&row.seconds);
    report(row);
    rows.push_back(row);
  }
  {
    Row row{5, "attention distance vs oracles", {}, 0.0};
    row.outcome = criterion_attention(&row.seconds);
    report(row);
    rows.push_back(row);
  }
  {
    Row row{6, "training sanity", {}, 0.0};
    row.outcome = criterion_training(&row.seconds);
    report(row);
    rows.push_back(row);
  }
  {
    Row row{2, "MINE calibration", {}, 0.0};
    row.outcome = criterion_mine(&row.seconds);
    report(row);
    rows.push_back(row);
  }
  {
    Row row{7, "desk-scale protocol reproduction", {}, 0.0};
    row.outcome = criterion_suite(suite_a, &row.seconds);
    report(row);
    rows.push_back(row);
  }
  {
    Row row{8, "pipeline determinism", {}, 0.0};
    row.outcome = criterion_determinism(suite_a, suite_b, &row.seconds);
    report(row);
    rows.push_back(row);
  }

  int failed = 0;
  for (const auto& row : rows)
    if (!row.outcome.pass) ++failed;
  std::printf("%d/%zu criteria passed\n", static_cast<int>(rows.size()) - failed,
              rows.size());
  return failed;
}
