#include "dtlab/mine.hpp"

#include <atomic>
#include <cmath>
#include <thread>

#include "dtlab/cka.hpp"
#include "dtlab/optim.hpp"

namespace dtlab {

namespace mine_detail {

Index n_net_params(const NetSpec& spec) {
  Index n = 0;
  int in = spec.in_dim;
  for (int l = 0; l < spec.hidden_layers; ++l) {
    n += static_cast<Index>(in) * spec.hidden_width + spec.hidden_width;
    in = spec.hidden_width;
  }
  n += static_cast<Index>(in) + 1;  // scalar output layer
  return n;
}

Vector init_net_params(const NetSpec& spec, Rng& rng) {
  Vector params(n_net_params(spec));
  Index off = 0;
  int in = spec.in_dim;
  auto fill = [&](Index count, double bound) {
    for (Index i = 0; i < count; ++i)
      params[off + i] = rng.uniform(-bound, bound);
    off += count;
  };
  for (int l = 0; l < spec.hidden_layers; ++l) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    fill(static_cast<Index>(in) * spec.hidden_width, bound);
    fill(spec.hidden_width, bound);
    in = spec.hidden_width;
  }
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  fill(in, bound);
  fill(1, bound);
  return params;
}

namespace {

template <typename S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename S>
using Row = Eigen::Matrix<S, 1, Eigen::Dynamic>;
template <typename S>
using Col = Eigen::Matrix<S, Eigen::Dynamic, 1>;

// Estimator state with preallocated buffers; one instance serves all
// iterations of a run, so the hot loop performs no allocation.
template <typename S>
struct Workspace {
  NetSpec spec;
  std::vector<Mat<S>> w;
  std::vector<Row<S>> b;
  Col<S> w_out;
  S b_out = S(0);

  Mat<S> z;  // stacked [joint; marginal] inputs
  std::vector<Mat<S>> hidden;
  Col<S> t;
  Col<S> d_out;
  Mat<S> d_a, d_b;  // ping-pong buffers for hidden gradients
  std::vector<Mat<S>> g_w;
  std::vector<Row<S>> g_b;
  Col<S> g_w_out;

  void init(const NetSpec& s, Index n_rows) {
    spec = s;
    w.resize(static_cast<std::size_t>(s.hidden_layers));
    b.resize(static_cast<std::size_t>(s.hidden_layers));
    g_w.resize(static_cast<std::size_t>(s.hidden_layers));
    g_b.resize(static_cast<std::size_t>(s.hidden_layers));
    hidden.resize(static_cast<std::size_t>(s.hidden_layers));
    int in = s.in_dim;
    for (int l = 0; l < s.hidden_layers; ++l) {
      w[static_cast<std::size_t>(l)].resize(in, s.hidden_width);
      b[static_cast<std::size_t>(l)].resize(s.hidden_width);
      g_w[static_cast<std::size_t>(l)].resize(in, s.hidden_width);
      g_b[static_cast<std::size_t>(l)].resize(s.hidden_width);
      hidden[static_cast<std::size_t>(l)].resize(n_rows, s.hidden_width);
      in = s.hidden_width;
    }
    w_out.resize(in);
    g_w_out.resize(in);
    z.resize(n_rows, s.in_dim);
    t.resize(n_rows);
    d_out.resize(n_rows);
    d_a.resize(n_rows, s.hidden_width);
    d_b.resize(n_rows, s.hidden_width);
  }

  void load_params(const Vector& params) {
    Index off = 0;
    for (int l = 0; l < spec.hidden_layers; ++l) {
      auto& wl = w[static_cast<std::size_t>(l)];
      auto& bl = b[static_cast<std::size_t>(l)];
      for (Index i = 0; i < wl.size(); ++i)
        wl.data()[i] = static_cast<S>(params[off + i]);
      off += wl.size();
      for (Index i = 0; i < bl.size(); ++i)
        bl[i] = static_cast<S>(params[off + i]);
      off += bl.size();
    }
    for (Index i = 0; i < w_out.size(); ++i)
      w_out[i] = static_cast<S>(params[off + i]);
    off += w_out.size();
    b_out = static_cast<S>(params[off]);
  }

  void forward() {
    const Mat<S>* cur = &z;
    for (int l = 0; l < spec.hidden_layers; ++l) {
      auto& h = hidden[static_cast<std::size_t>(l)];
      h.noalias() = (*cur) * w[static_cast<std::size_t>(l)];
      h.rowwise() += b[static_cast<std::size_t>(l)];
      h = h.cwiseMax(S(0));  // ReLU
      cur = &h;
    }
    t.noalias() = (*cur) * w_out;
    t.array() += b_out;
  }

  // Parameter gradients for the per-row output gradients in d_out,
  // accumulated into a flat f64 vector.
  void backward(Vector& grads) {
    g_w_out.noalias() = hidden.back().transpose() * d_out;
    const S g_b_out = d_out.sum();
    Mat<S>* d_cur = &d_a;
    Mat<S>* d_next = &d_b;
    d_cur->noalias() = d_out * w_out.transpose();
    for (int l = spec.hidden_layers - 1; l >= 0; --l) {
      const auto& h = hidden[static_cast<std::size_t>(l)];
      d_cur->array() *= (h.array() > S(0)).template cast<S>();  // ReLU mask
      const Mat<S>& input = l == 0 ? z : hidden[static_cast<std::size_t>(l - 1)];
      g_w[static_cast<std::size_t>(l)].noalias() = input.transpose() * (*d_cur);
      g_b[static_cast<std::size_t>(l)] = d_cur->colwise().sum();
      if (l > 0) {
        d_next->noalias() = (*d_cur) * w[static_cast<std::size_t>(l)].transpose();
        std::swap(d_cur, d_next);
      }
    }
    Index off = 0;
    for (int l = 0; l < spec.hidden_layers; ++l) {
      const auto& gw = g_w[static_cast<std::size_t>(l)];
      for (Index i = 0; i < gw.size(); ++i)
        grads[off + i] += static_cast<double>(gw.data()[i]);
      off += gw.size();
      const auto& gb = g_b[static_cast<std::size_t>(l)];
      for (Index i = 0; i < gb.size(); ++i)
        grads[off + i] += static_cast<double>(gb[i]);
      off += gb.size();
    }
    for (Index i = 0; i < g_w_out.size(); ++i)
      grads[off + i] += static_cast<double>(g_w_out[i]);
    off += g_w_out.size();
    grads[off] += static_cast<double>(g_b_out);
  }
};

// Fills the joint rows once per run; the marginal rows change per iteration.
template <typename S>
void fill_joint_rows(Workspace<S>& ws, const Matrix& x, const Matrix& y) {
  const Index n = x.rows();
  const Index dx = x.cols();
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < dx; ++j) {
      const S xv = static_cast<S>(x(i, j));
      ws.z(i, j) = xv;
      ws.z(n + i, j) = xv;
    }
    for (Index j = 0; j < y.cols(); ++j)
      ws.z(i, dx + j) = static_cast<S>(y(i, j));
  }
}

template <typename S>
void fill_marginal_rows(Workspace<S>& ws, const Matrix& y, Index dx,
                        const std::vector<int>& perm) {
  const Index n = y.rows();
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < y.cols(); ++j)
      ws.z(n + i, dx + j) =
          static_cast<S>(y(perm[static_cast<std::size_t>(i)], j));
}

// Objective on the current workspace contents; optionally fills dV/dtheta.
template <typename S>
double objective_step(Workspace<S>& ws, Index n, Vector* grads) {
  ws.forward();
  double joint_mean = 0.0;
  for (Index i = 0; i < n; ++i) joint_mean += static_cast<double>(ws.t[i]);
  joint_mean /= static_cast<double>(n);

  double t_max = -std::numeric_limits<double>::infinity();
  for (Index i = 0; i < n; ++i)
    t_max = std::max(t_max, static_cast<double>(ws.t[n + i]));
  double exp_sum = 0.0;
  for (Index i = 0; i < n; ++i)
    exp_sum += std::exp(static_cast<double>(ws.t[n + i]) - t_max);
  const double value =
      joint_mean - (t_max + std::log(exp_sum / static_cast<double>(n)));

  if (grads != nullptr) {
    grads->setZero(n_net_params(ws.spec));
    const S inv_n = static_cast<S>(1.0 / static_cast<double>(n));
    for (Index i = 0; i < n; ++i) ws.d_out[i] = inv_n;
    for (Index i = 0; i < n; ++i) {
      const double soft =
          std::exp(static_cast<double>(ws.t[n + i]) - t_max) / exp_sum;
      ws.d_out[n + i] = static_cast<S>(-soft);
    }
    ws.backward(*grads);
  }
  return value;
}

template <typename S>
double objective_and_grads_impl(const NetSpec& spec, const Vector& params,
                                const Matrix& x, const Matrix& y,
                                const std::vector<int>& perm, Vector* grads) {
  Workspace<S> ws;
  ws.init(spec, 2 * x.rows());
  ws.load_params(params);
  fill_joint_rows(ws, x, y);
  fill_marginal_rows(ws, y, x.cols(), perm);
  return objective_step(ws, x.rows(), grads);
}

}  // namespace

double objective_and_grads_f64(const NetSpec& spec, const Vector& params,
                               const Matrix& x, const Matrix& y,
                               const std::vector<int>& perm, Vector* grads) {
  return objective_and_grads_impl<double>(spec, params, x, y, perm, grads);
}

}  // namespace mine_detail

namespace {

Matrix standardize_columns(const Matrix& x) {
  Matrix out = x;
  for (Index j = 0; j < x.cols(); ++j) {
    const double mean = x.col(j).mean();
    const double var = (x.col(j).array() - mean).square().mean();
    const double sd = std::sqrt(var);
    if (sd > 1e-12)
      out.col(j) = (x.col(j).array() - mean) / sd;
    else
      out.col(j) = x.col(j).array() - mean;
  }
  return out;
}

std::vector<int> random_permutation(Index n, Rng& rng) {
  std::vector<int> perm(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) perm[static_cast<std::size_t>(i)] = static_cast<int>(i);
  for (Index i = n - 1; i > 0; --i) {
    const auto j = rng.uniform_index(static_cast<std::uint64_t>(i + 1));
    std::swap(perm[static_cast<std::size_t>(i)], perm[j]);
  }
  return perm;
}

}  // namespace

MiEstimate mine_estimate(const Matrix& x_samples, const Matrix& y_samples,
                         const MineConfig& config, Rng& rng) {
  require(x_samples.rows() == y_samples.rows(),
          "mine_estimate: x and y must be paired");
  require(x_samples.rows() >= 10, "mine_estimate: need at least 10 samples");
  require(x_samples.cols() >= 1 && y_samples.cols() >= 1,
          "mine_estimate: empty dimensions");
  require(config.hidden_width >= 1 && config.hidden_layers >= 1 &&
              config.iterations >= 1,
          "mine_estimate: counts must be positive");

  const Matrix x = standardize_columns(x_samples);
  const Matrix y = standardize_columns(y_samples);

  mine_detail::NetSpec spec;
  spec.in_dim = static_cast<int>(x.cols() + y.cols());
  spec.hidden_width = config.hidden_width;
  spec.hidden_layers = config.hidden_layers;

  Rng init_rng = rng.derive(0x317e);
  Rng perm_rng = rng.derive(0x9e21);
  Vector params = mine_detail::init_net_params(spec, init_rng);
  AdamState adam = AdamState::make(params.size(), config.learning_rate);

  mine_detail::Workspace<float> ws;
  ws.init(spec, 2 * x.rows());
  mine_detail::fill_joint_rows(ws, x, y);

  // The reported value is the mean objective over the trailing tenth of the
  // iterations: the per-iteration value jitters with the marginal
  // permutation draw, and the trailing mean removes that noise without the
  // optimistic bias a max would introduce.
  const int window = std::max(1, config.iterations / 10);
  double window_sum = 0.0;
  Vector grads;
  for (int it = 0; it < config.iterations; ++it) {
    const auto perm = random_permutation(x.rows(), perm_rng);
    mine_detail::fill_marginal_rows(ws, y, x.cols(), perm);
    ws.load_params(params);
    const double value = mine_detail::objective_step(ws, x.rows(), &grads);
    if (!std::isfinite(value) || !all_finite(grads)) {
      MiEstimate bad;
      bad.excluded = true;
      bad.n_samples = static_cast<int>(x.rows());
      return bad;
    }
    if (it >= config.iterations - window) window_sum += value;
    grads = -grads;  // ascend the lower bound
    adam_step(params, grads, adam);
  }

  MiEstimate est;
  est.value = window_sum / window;
  est.excluded = !std::isfinite(est.value);
  est.n_samples = static_cast<int>(x.rows());
  return est;
}

int block_index_for_depth(BlockDepth depth, int n_blocks) {
  switch (depth) {
    case BlockDepth::kShallow: return 0;
    case BlockDepth::kMiddle: return n_blocks / 2;
    case BlockDepth::kDeep: return n_blocks - 1;
  }
  throw std::invalid_argument("block_index_for_depth: bad depth");
}

namespace {

// Runs one mine_estimate per position on a worker pool; per-position rngs
// are derived from the position index so results are scheduling-independent.
std::vector<MiEstimate> fan_out_estimates(
    const std::vector<std::pair<Matrix, Matrix>>& pairs, const MineConfig& config,
    Rng& rng, int workers) {
  std::vector<MiEstimate> results(pairs.size());
  const int n_workers =
      std::max(1, std::min<int>(workers, static_cast<int>(pairs.size())));
  std::vector<Rng> seeds;
  seeds.reserve(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i)
    seeds.push_back(rng.derive(0x3a90 + static_cast<std::uint64_t>(i)));

  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= pairs.size()) return;
      Rng local = seeds[i];
      results[i] = mine_estimate(pairs[i].first, pairs[i].second, config, local);
    }
  };
  if (n_workers == 1) {
    worker();
  } else {
    std::vector<std::thread> threads;
    threads.reserve(static_cast<std::size_t>(n_workers));
    for (int w = 0; w < n_workers; ++w) threads.emplace_back(worker);
    for (auto& t : threads) t.join();
  }
  return results;
}

std::string type_at_position(int pos) {
  switch (pos % 3) {
    case 0: return "rtg";
    case 1: return "state";
    default: return "action";
  }
}

Matrix token_input_at(const TrajectoryBatch& batch, int pos) {
  const int k = pos / 3;
  const int B = batch.batch_size;
  switch (pos % 3) {
    case 0: {
      Matrix m(B, 1);
      for (int b = 0; b < B; ++b) m(b, 0) = batch.rtg(b, k);
      return m;
    }
    case 1: {
      Matrix m(B, batch.state_dim);
      for (int b = 0; b < B; ++b) m.row(b) = batch.state_at(b, k).transpose();
      return m;
    }
    default: {
      Matrix m(B, batch.action_dim);
      for (int b = 0; b < B; ++b) m.row(b) = batch.action_at(b, k).transpose();
      return m;
    }
  }
}

}  // namespace

std::vector<MiProfilePoint> mi_profile_input_to_repr(
    const std::vector<Matrix>& token_inputs,
    const std::vector<std::string>& token_types, const Matrix& repr_last_state,
    const MineConfig& config, Rng& rng, int workers) {
  require(token_inputs.size() == token_types.size(),
          "mi_profile_input_to_repr: size mismatch");
  std::vector<std::pair<Matrix, Matrix>> pairs;
  pairs.reserve(token_inputs.size());
  for (const auto& x : token_inputs) pairs.emplace_back(x, repr_last_state);
  const auto estimates = fan_out_estimates(pairs, config, rng, workers);
  std::vector<MiProfilePoint> out(estimates.size());
  for (std::size_t i = 0; i < estimates.size(); ++i) {
    out[i].token_position = static_cast<int>(i);
    out[i].token_type = token_types[i];
    out[i].estimate = estimates[i];
    out[i].estimate.token_position = static_cast<int>(i);
    out[i].estimate.token_type = token_types[i];
  }
  return out;
}

std::vector<MiProfilePoint> mi_profile_repr_to_label(
    const std::vector<Matrix>& repr_at_positions,
    const std::vector<std::string>& token_types, const Matrix& last_action,
    const MineConfig& config, Rng& rng, int workers) {
  require(repr_at_positions.size() == token_types.size(),
          "mi_profile_repr_to_label: size mismatch");
  std::vector<std::pair<Matrix, Matrix>> pairs;
  pairs.reserve(repr_at_positions.size());
  for (const auto& r : repr_at_positions) pairs.emplace_back(last_action, r);
  const auto estimates = fan_out_estimates(pairs, config, rng, workers);
  std::vector<MiProfilePoint> out(estimates.size());
  for (std::size_t i = 0; i < estimates.size(); ++i) {
    out[i].token_position = static_cast<int>(i);
    out[i].token_type = token_types[i];
    out[i].estimate = estimates[i];
    out[i].estimate.token_position = static_cast<int>(i);
    out[i].estimate.token_type = token_types[i];
  }
  return out;
}

std::vector<MiProfilePoint> mi_profile_repr(const Checkpoint& ckpt,
                                            const Dataset& dataset,
                                            MiDirection direction,
                                            BlockDepth depth,
                                            const MineConfig& config,
                                            int n_samples, Rng& rng,
                                            int workers) {
  const int K = ckpt.config.context_K;
  const int L = 3 * K;
  Rng sample_rng = rng.derive(0xda7a);
  TrajectoryBatch batch = sample_full_windows(dataset, K, n_samples, sample_rng);
  Rng dummy(0);
  CaptureOptions cap;
  cap.activations = true;
  const ForwardResult fr = dt_forward(batch, ckpt, RunMode::kEval, dummy, cap);

  const int block = block_index_for_depth(depth, ckpt.config.n_blocks);
  const std::string layer_name =
      "transformer.h." + std::to_string(block) + ".mlp.dropout";
  const LayerCapture* capture = nullptr;
  for (const auto& c : fr.captures)
    if (c.layer_name == layer_name) capture = &c;
  require(capture != nullptr, "mi_profile_repr: capture not found");

  // All token positions except the final action token (the label).
  const int n_positions = L - 1;
  std::vector<std::string> types;
  types.reserve(static_cast<std::size_t>(n_positions));
  for (int pos = 0; pos < n_positions; ++pos) types.push_back(type_at_position(pos));

  Rng est_rng = rng.derive(0xe571);
  std::vector<MiProfilePoint> points;
  if (direction == MiDirection::kInputToRepr) {
    std::vector<Matrix> inputs;
    inputs.reserve(static_cast<std::size_t>(n_positions));
    for (int pos = 0; pos < n_positions; ++pos)
      inputs.push_back(token_input_at(batch, pos));
    const Matrix repr =
        slice_activation(*capture, last_step_token_position(TokenType::kState, K))
            .values;
    points = mi_profile_input_to_repr(inputs, types, repr, config, est_rng, workers);
  } else {
    std::vector<Matrix> reprs;
    reprs.reserve(static_cast<std::size_t>(n_positions));
    for (int pos = 0; pos < n_positions; ++pos)
      reprs.push_back(slice_activation(*capture, pos).values);
    const Matrix label = token_input_at(batch, L - 1);  // a_K
    points = mi_profile_repr_to_label(reprs, types, label, config, est_rng, workers);
  }
  for (auto& p : points) p.estimate.layer = layer_name;
  return points;
}

std::vector<MiProfilePoint> mi_data_level(const Dataset& dataset, MiPair pair,
                                          int context_K, const MineConfig& config,
                                          int n_samples, Rng& rng, int workers) {
  Rng sample_rng = rng.derive(0xda7a);
  TrajectoryBatch batch =
      sample_full_windows(dataset, context_K, n_samples, sample_rng);
  std::vector<std::pair<Matrix, Matrix>> pairs;
  pairs.reserve(static_cast<std::size_t>(context_K));
  for (int k = 0; k < context_K; ++k) {
    Matrix x;
    if (pair == MiPair::kStateAction) {
      x = token_input_at(batch, 3 * k + 1);
    } else {
      x = token_input_at(batch, 3 * k);
    }
    Matrix y = token_input_at(batch, 3 * k + 2);
    pairs.emplace_back(std::move(x), std::move(y));
  }
  Rng est_rng = rng.derive(0xe571);
  const auto estimates = fan_out_estimates(pairs, config, est_rng, workers);
  std::vector<MiProfilePoint> out(estimates.size());
  const std::string pair_name =
      pair == MiPair::kStateAction ? "state-action" : "rtg-action";
  for (std::size_t k = 0; k < estimates.size(); ++k) {
    out[k].token_position = static_cast<int>(k);
    out[k].token_type = pair_name;
    out[k].estimate = estimates[k];
    out[k].estimate.pair = pair_name;
    out[k].estimate.token_position = static_cast<int>(k);
  }
  return out;
}

}  // namespace dtlab
