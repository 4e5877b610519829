#include "dtlab/transformer.hpp"

#include <cmath>

#include "dtlab/numerics.hpp"

namespace dtlab {

namespace {

// ---- row-wise layer norm over an (N x d) activation matrix ----

void ln_rows_forward(const Matrix& x, const Matrix& gamma, const Matrix& beta,
                     Matrix& y, Vector& mean, Vector& rstd) {
  constexpr double kEps = 1e-5;
  const Index n = x.rows();
  const Index d = x.cols();
  y.resize(n, d);
  mean.resize(n);
  rstd.resize(n);
  for (Index i = 0; i < n; ++i) {
    const double mu = x.row(i).mean();
    const double var = (x.row(i).array() - mu).square().mean();
    const double r = 1.0 / std::sqrt(var + kEps);
    mean[i] = mu;
    rstd[i] = r;
    y.row(i) = (((x.row(i).array() - mu) * r) * gamma.row(0).array() +
                beta.row(0).array())
                   .matrix();
  }
}

void ln_rows_backward(const Matrix& x, const Vector& mean, const Vector& rstd,
                      const Matrix& gamma, const Matrix& dy, Matrix& dx,
                      Matrix& dgamma, Matrix& dbeta) {
  const Index n = x.rows();
  const Index d = x.cols();
  dx.resize(n, d);
  for (Index i = 0; i < n; ++i) {
    const auto xhat = ((x.row(i).array() - mean[i]) * rstd[i]);
    dgamma.row(0).array() += dy.row(i).array() * xhat;
    dbeta.row(0).array() += dy.row(i).array();
    const auto dxhat = dy.row(i).array() * gamma.row(0).array();
    const double m1 = dxhat.mean();
    const double m2 = (dxhat * xhat).mean();
    dx.row(i) = (rstd[i] * (dxhat - m1 - xhat * m2)).matrix();
  }
}

// ---- linear y = x * W + b with W (in x out), b (1 x out) ----

Matrix linear_forward(const Matrix& x, const Matrix& w, const Matrix& b) {
  Matrix y = x * w;
  y.rowwise() += b.row(0);
  return y;
}

void linear_backward(const Matrix& x, const Matrix& w, const Matrix& dy,
                     Matrix& dx, Matrix& dw, Matrix& db) {
  dx.noalias() = dy * w.transpose();
  dw.noalias() += x.transpose() * dy;
  db.row(0) += dy.colwise().sum();
}

// Inverted dropout; mask entries are 0 or 1/(1-p) so backward is a product.
Matrix dropout_mask(Index rows, Index cols, double p, Rng& rng) {
  Matrix m(rows, cols);
  const double keep = 1.0 / (1.0 - p);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) m(i, j) = rng.bernoulli(p) ? 0.0 : keep;
  return m;
}

struct BlockTrace {
  Matrix x_in;
  Vector ln1_mean, ln1_rstd;
  Matrix ln1_out;
  Matrix qkv;
  std::vector<Matrix> probs;      // per sample (H*L x L), pre-dropout
  std::vector<Matrix> attn_mask;  // dropout masks, empty when not training
  Matrix attn_concat;
  Matrix attn_proj;
  Matrix resid_mask;
  Matrix after_attn;
  Vector ln2_mean, ln2_rstd;
  Matrix ln2_out;
  Matrix fc_out;
  Matrix gelu_out;
  Matrix mlp_proj;
  Matrix mlp_mask;
  Matrix mlp_dropped;
  Matrix y;
};

struct TrunkTrace {
  int batch = 0;
  int seq_len = 0;
  Matrix token_mask;  // batch x seq_len, 1 = valid token
  std::vector<BlockTrace> blocks;
  Vector lnf_mean, lnf_rstd;
  Matrix lnf_out;
};

std::string block_prefix(int i) { return "transformer.h." + std::to_string(i) + "."; }

void capture(std::vector<LayerCapture>* captures, const std::string& name,
             const Matrix& values, int batch, int seq_len) {
  if (captures == nullptr) return;
  captures->push_back(LayerCapture{name, batch, seq_len, values});
}

// Causal self-attention for one sample. Padded query rows (token_mask 0)
// attend only to themselves and carry no gradient; valid queries never see
// padded keys.
void attention_sample_forward(const Matrix& qkv, Index row0, int L, int d,
                              int H, const double* tmask, double attn_p,
                              RunMode mode, Rng& rng, Matrix& probs,
                              Matrix& attn_mask, Matrix& concat_out) {
  const int hd = d / H;
  const double scale = 1.0 / std::sqrt(static_cast<double>(hd));
  const bool train_drop = (mode == RunMode::kTrain && attn_p > 0.0);
  probs.setZero(static_cast<Index>(H) * L, L);
  if (train_drop) attn_mask.resize(static_cast<Index>(H) * L, L);
  for (int h = 0; h < H; ++h) {
    const auto q = qkv.block(row0, static_cast<Index>(h) * hd, L, hd);
    const auto k = qkv.block(row0, d + static_cast<Index>(h) * hd, L, hd);
    const auto v = qkv.block(row0, 2 * d + static_cast<Index>(h) * hd, L, hd);
    Matrix scores = (q * k.transpose()) * scale;  // L x L
    for (int i = 0; i < L; ++i) {
      auto prow = probs.row(static_cast<Index>(h) * L + i);
      if (tmask[i] == 0.0) {
        prow(i) = 1.0;
        continue;
      }
      double mx = -std::numeric_limits<double>::infinity();
      for (int j = 0; j <= i; ++j)
        if (tmask[j] != 0.0) mx = std::max(mx, scores(i, j));
      double sum = 0.0;
      for (int j = 0; j <= i; ++j) {
        if (tmask[j] == 0.0) continue;
        const double e = std::exp(scores(i, j) - mx);
        prow(j) = e;
        sum += e;
      }
      prow /= sum;
    }
    Matrix p_used = probs.middleRows(static_cast<Index>(h) * L, L);
    if (train_drop) {
      Matrix m = dropout_mask(L, L, attn_p, rng);
      attn_mask.middleRows(static_cast<Index>(h) * L, L) = m;
      p_used = p_used.cwiseProduct(m);
    }
    concat_out.block(row0, static_cast<Index>(h) * hd, L, hd).noalias() =
        p_used * v;
  }
}

void attention_sample_backward(const Matrix& qkv, Index row0, int L, int d,
                               int H, const double* tmask, const Matrix& probs,
                               const Matrix& attn_mask, const Matrix& d_concat,
                               Matrix& d_qkv) {
  const int hd = d / H;
  const double scale = 1.0 / std::sqrt(static_cast<double>(hd));
  const bool has_drop = attn_mask.size() > 0;
  for (int h = 0; h < H; ++h) {
    const auto q = qkv.block(row0, static_cast<Index>(h) * hd, L, hd);
    const auto k = qkv.block(row0, d + static_cast<Index>(h) * hd, L, hd);
    const auto v = qkv.block(row0, 2 * d + static_cast<Index>(h) * hd, L, hd);
    const auto p = probs.middleRows(static_cast<Index>(h) * L, L);
    const auto dO = d_concat.block(row0, static_cast<Index>(h) * hd, L, hd);

    Matrix p_used = p;
    if (has_drop)
      p_used = p.cwiseProduct(attn_mask.middleRows(static_cast<Index>(h) * L, L));

    Matrix dP = dO * v.transpose();  // grad wrt dropped probs
    d_qkv.block(row0, 2 * d + static_cast<Index>(h) * hd, L, hd).noalias() +=
        p_used.transpose() * dO;
    if (has_drop)
      dP = dP.cwiseProduct(attn_mask.middleRows(static_cast<Index>(h) * L, L));

    Matrix dS = Matrix::Zero(L, L);
    for (int i = 0; i < L; ++i) {
      if (tmask[i] == 0.0) continue;  // constant row, no gradient
      const double rowdot = dP.row(i).dot(p.row(i));
      dS.row(i) = (p.row(i).array() * (dP.row(i).array() - rowdot)).matrix();
    }
    d_qkv.block(row0, static_cast<Index>(h) * hd, L, hd).noalias() +=
        (dS * k) * scale;
    d_qkv.block(row0, d + static_cast<Index>(h) * hd, L, hd).noalias() +=
        (dS.transpose() * q) * scale;
  }
}

Matrix trunk_forward(const Matrix& x0, const Matrix& token_mask,
                     const Checkpoint& ckpt, RunMode mode, Rng& rng,
                     TrunkTrace& trace, std::vector<LayerCapture>* captures,
                     std::vector<AttentionRecord>* attention) {
  const ModelConfig& cfg = ckpt.config;
  const int B = static_cast<int>(token_mask.rows());
  const int L = static_cast<int>(token_mask.cols());
  const int d = cfg.embed_dim;
  const int H = cfg.n_heads;
  require(x0.rows() == static_cast<Index>(B) * L && x0.cols() == d,
          "trunk_forward: input shape mismatch");
  trace.batch = B;
  trace.seq_len = L;
  trace.token_mask = token_mask;
  trace.blocks.resize(static_cast<std::size_t>(cfg.n_blocks));

  Matrix x = x0;
  for (int bi = 0; bi < cfg.n_blocks; ++bi) {
    BlockTrace& bt = trace.blocks[static_cast<std::size_t>(bi)];
    const std::string prefix = block_prefix(bi);
    bt.x_in = x;

    ln_rows_forward(bt.x_in, ckpt.at(prefix + "ln_1.weight"),
                    ckpt.at(prefix + "ln_1.bias"), bt.ln1_out, bt.ln1_mean,
                    bt.ln1_rstd);
    capture(captures, prefix + "ln_1", bt.ln1_out, B, L);

    bt.qkv = linear_forward(bt.ln1_out, ckpt.at(prefix + "attn.c_attn.weight"),
                            ckpt.at(prefix + "attn.c_attn.bias"));
    capture(captures, prefix + "attn.c_attn", bt.qkv, B, L);

    bt.probs.resize(static_cast<std::size_t>(B));
    bt.attn_mask.resize(static_cast<std::size_t>(B));
    bt.attn_concat.setZero(static_cast<Index>(B) * L, d);
    for (int s = 0; s < B; ++s) {
      attention_sample_forward(bt.qkv, static_cast<Index>(s) * L, L, d, H,
                               token_mask.row(s).data(), cfg.dropout_attn, mode,
                               rng, bt.probs[static_cast<std::size_t>(s)],
                               bt.attn_mask[static_cast<std::size_t>(s)],
                               bt.attn_concat);
    }
    if (attention != nullptr) {
      AttentionRecord rec;
      rec.block_index = bi;
      rec.n_heads = H;
      rec.seq_len = L;
      rec.probs = bt.probs;
      attention->push_back(std::move(rec));
    }

    bt.attn_proj =
        linear_forward(bt.attn_concat, ckpt.at(prefix + "attn.c_proj.weight"),
                       ckpt.at(prefix + "attn.c_proj.bias"));
    capture(captures, prefix + "attn.c_proj", bt.attn_proj, B, L);

    Matrix attn_out = bt.attn_proj;
    if (mode == RunMode::kTrain && cfg.dropout_resid > 0.0) {
      bt.resid_mask =
          dropout_mask(attn_out.rows(), attn_out.cols(), cfg.dropout_resid, rng);
      attn_out = attn_out.cwiseProduct(bt.resid_mask);
    }
    bt.after_attn = bt.x_in + attn_out;

    ln_rows_forward(bt.after_attn, ckpt.at(prefix + "ln_2.weight"),
                    ckpt.at(prefix + "ln_2.bias"), bt.ln2_out, bt.ln2_mean,
                    bt.ln2_rstd);
    capture(captures, prefix + "ln_2", bt.ln2_out, B, L);

    bt.fc_out = linear_forward(bt.ln2_out, ckpt.at(prefix + "mlp.c_fc.weight"),
                               ckpt.at(prefix + "mlp.c_fc.bias"));
    capture(captures, prefix + "mlp.c_fc", bt.fc_out, B, L);

    bt.gelu_out = bt.fc_out.unaryExpr([](double v) { return gelu(v); });

    bt.mlp_proj =
        linear_forward(bt.gelu_out, ckpt.at(prefix + "mlp.c_proj.weight"),
                       ckpt.at(prefix + "mlp.c_proj.bias"));
    capture(captures, prefix + "mlp.c_proj", bt.mlp_proj, B, L);

    if (mode == RunMode::kTrain && cfg.dropout_resid > 0.0) {
      bt.mlp_mask = dropout_mask(bt.mlp_proj.rows(), bt.mlp_proj.cols(),
                                 cfg.dropout_resid, rng);
      bt.mlp_dropped = bt.mlp_proj.cwiseProduct(bt.mlp_mask);
    } else {
      bt.mlp_dropped = bt.mlp_proj;
    }
    capture(captures, prefix + "mlp.dropout", bt.mlp_dropped, B, L);

    bt.y = bt.after_attn + bt.mlp_dropped;
    x = bt.y;
  }

  ln_rows_forward(x, ckpt.at("ln_f.weight"), ckpt.at("ln_f.bias"), trace.lnf_out,
                  trace.lnf_mean, trace.lnf_rstd);
  return trace.lnf_out;
}

// Returns gradient wrt the trunk input x0.
Matrix trunk_backward(const Matrix& d_lnf_out, const TrunkTrace& trace,
                      const Checkpoint& ckpt, GradientSet& grads) {
  const ModelConfig& cfg = ckpt.config;
  const int B = trace.batch;
  const int L = trace.seq_len;
  const int d = cfg.embed_dim;
  const int H = cfg.n_heads;

  const Matrix& top_y = trace.blocks.back().y;
  Matrix dy;
  ln_rows_backward(top_y, trace.lnf_mean, trace.lnf_rstd, ckpt.at("ln_f.weight"),
                   d_lnf_out, dy, grads.at("ln_f.weight"), grads.at("ln_f.bias"));

  for (int bi = cfg.n_blocks - 1; bi >= 0; --bi) {
    const BlockTrace& bt = trace.blocks[static_cast<std::size_t>(bi)];
    const std::string prefix = block_prefix(bi);

    // y = after_attn + mlp_dropped
    Matrix d_after_attn = dy;
    Matrix d_mlp_proj = dy;
    if (bt.mlp_mask.size() > 0) d_mlp_proj = d_mlp_proj.cwiseProduct(bt.mlp_mask);

    Matrix d_gelu;
    linear_backward(bt.gelu_out, ckpt.at(prefix + "mlp.c_proj.weight"),
                    d_mlp_proj, d_gelu, grads.at(prefix + "mlp.c_proj.weight"),
                    grads.at(prefix + "mlp.c_proj.bias"));
    Matrix d_fc = d_gelu.binaryExpr(
        bt.fc_out, [](double g, double x) { return g * gelu_grad(x); });
    Matrix d_ln2_out;
    linear_backward(bt.ln2_out, ckpt.at(prefix + "mlp.c_fc.weight"), d_fc,
                    d_ln2_out, grads.at(prefix + "mlp.c_fc.weight"),
                    grads.at(prefix + "mlp.c_fc.bias"));
    Matrix d_after_attn_ln;
    ln_rows_backward(bt.after_attn, bt.ln2_mean, bt.ln2_rstd,
                     ckpt.at(prefix + "ln_2.weight"), d_ln2_out, d_after_attn_ln,
                     grads.at(prefix + "ln_2.weight"),
                     grads.at(prefix + "ln_2.bias"));
    d_after_attn += d_after_attn_ln;

    // after_attn = x_in + resid_drop(attn_proj)
    Matrix dx = d_after_attn;
    Matrix d_attn_proj = d_after_attn;
    if (bt.resid_mask.size() > 0)
      d_attn_proj = d_attn_proj.cwiseProduct(bt.resid_mask);

    Matrix d_attn_concat;
    linear_backward(bt.attn_concat, ckpt.at(prefix + "attn.c_proj.weight"),
                    d_attn_proj, d_attn_concat,
                    grads.at(prefix + "attn.c_proj.weight"),
                    grads.at(prefix + "attn.c_proj.bias"));

    Matrix d_qkv = Matrix::Zero(static_cast<Index>(B) * L, 3 * d);
    for (int s = 0; s < B; ++s) {
      attention_sample_backward(
          bt.qkv, static_cast<Index>(s) * L, L, d, H,
          trace.token_mask.row(s).data(), bt.probs[static_cast<std::size_t>(s)],
          bt.attn_mask[static_cast<std::size_t>(s)], d_attn_concat, d_qkv);
    }

    Matrix d_ln1_out;
    linear_backward(bt.ln1_out, ckpt.at(prefix + "attn.c_attn.weight"), d_qkv,
                    d_ln1_out, grads.at(prefix + "attn.c_attn.weight"),
                    grads.at(prefix + "attn.c_attn.bias"));
    Matrix d_x_ln;
    ln_rows_backward(bt.x_in, bt.ln1_mean, bt.ln1_rstd,
                     ckpt.at(prefix + "ln_1.weight"), d_ln1_out, d_x_ln,
                     grads.at(prefix + "ln_1.weight"),
                     grads.at(prefix + "ln_1.bias"));
    dx += d_x_ln;
    dy = std::move(dx);
  }
  return dy;
}

// ---- control (decision) path ----

struct DtTrace {
  Matrix tokens_pre_ln;  // BL x d, before embed_ln
  Vector embln_mean, embln_rstd;
  Matrix embln_out;
  Matrix emb_mask;
  TrunkTrace trunk;
  Matrix head_in;  // (B*K) x d rows of ln_f output at state tokens
  Matrix tanh_out; // (B*K) x action_dim
};

void check_dt_batch(const TrajectoryBatch& batch, const ModelConfig& cfg) {
  require(cfg.has_control_head(), "dt_forward: checkpoint has no control head");
  require(batch.state_dim == cfg.state_dim && batch.action_dim == cfg.action_dim,
          "dt_forward: batch dims do not match config");
  require(batch.batch_size >= 1 && batch.K >= 1, "dt_forward: empty batch");
  for (int b = 0; b < batch.batch_size; ++b)
    for (int k = 0; k < batch.K; ++k) {
      const double t = batch.timesteps(b, k);
      require(t >= 0.0 && t < cfg.max_timestep,
              "dt_forward: timestep >= max_timestep");
    }
}

Matrix dt_embed_tokens(const TrajectoryBatch& batch, const Checkpoint& ckpt) {
  const ModelConfig& cfg = ckpt.config;
  const int B = batch.batch_size;
  const int K = batch.K;
  const int L = 3 * K;
  const int d = cfg.embed_dim;
  const Matrix& w_r = ckpt.at("embed_return.weight");
  const Matrix& b_r = ckpt.at("embed_return.bias");
  const Matrix& w_s = ckpt.at("embed_state.weight");
  const Matrix& b_s = ckpt.at("embed_state.bias");
  const Matrix& w_a = ckpt.at("embed_action.weight");
  const Matrix& b_a = ckpt.at("embed_action.bias");
  const Matrix& w_t = ckpt.at("embed_timestep.weight");

  Matrix tokens(static_cast<Index>(B) * L, d);
  for (int b = 0; b < B; ++b) {
    for (int k = 0; k < K; ++k) {
      const Index row = static_cast<Index>(b) * L + 3 * k;
      const auto t_emb = w_t.row(static_cast<Index>(batch.timesteps(b, k)));
      tokens.row(row) = batch.rtg(b, k) * w_r.row(0) + b_r.row(0) + t_emb;
      tokens.row(row + 1) =
          batch.states.row(b).segment(static_cast<Index>(k) * batch.state_dim,
                                      batch.state_dim) *
              w_s +
          b_s.row(0) + t_emb;
      tokens.row(row + 2) =
          batch.actions.row(b).segment(static_cast<Index>(k) * batch.action_dim,
                                       batch.action_dim) *
              w_a +
          b_a.row(0) + t_emb;
    }
  }
  return tokens;
}

Matrix dt_token_mask(const TrajectoryBatch& batch) {
  const int B = batch.batch_size;
  const int K = batch.K;
  Matrix m(B, 3 * K);
  for (int b = 0; b < B; ++b)
    for (int k = 0; k < K; ++k) {
      const double v = batch.attention_mask(b, k);
      m(b, 3 * k) = v;
      m(b, 3 * k + 1) = v;
      m(b, 3 * k + 2) = v;
    }
  return m;
}

Matrix dt_forward_impl(const TrajectoryBatch& batch, const Checkpoint& ckpt,
                       RunMode mode, Rng& rng, DtTrace& trace,
                       std::vector<LayerCapture>* captures,
                       std::vector<AttentionRecord>* attention) {
  const ModelConfig& cfg = ckpt.config;
  check_dt_batch(batch, cfg);
  const int B = batch.batch_size;
  const int K = batch.K;
  const int L = 3 * K;

  trace.tokens_pre_ln = dt_embed_tokens(batch, ckpt);
  ln_rows_forward(trace.tokens_pre_ln, ckpt.at("embed_ln.weight"),
                  ckpt.at("embed_ln.bias"), trace.embln_out, trace.embln_mean,
                  trace.embln_rstd);
  Matrix x0 = trace.embln_out;
  if (mode == RunMode::kTrain && cfg.dropout_attn > 0.0) {
    trace.emb_mask = dropout_mask(x0.rows(), x0.cols(), cfg.dropout_attn, rng);
    x0 = x0.cwiseProduct(trace.emb_mask);
  }

  const Matrix lnf_out = trunk_forward(x0, dt_token_mask(batch), ckpt, mode, rng,
                                       trace.trunk, captures, attention);

  // Action head reads the state token (position 3k + 1).
  trace.head_in.resize(static_cast<Index>(B) * K, cfg.embed_dim);
  for (int b = 0; b < B; ++b)
    for (int k = 0; k < K; ++k)
      trace.head_in.row(static_cast<Index>(b) * K + k) =
          lnf_out.row(static_cast<Index>(b) * L + 3 * k + 1);

  Matrix z = linear_forward(trace.head_in, ckpt.at("predict_action.weight"),
                            ckpt.at("predict_action.bias"));
  trace.tanh_out = z.unaryExpr([](double v) { return std::tanh(v); });

  Matrix actions(B, static_cast<Index>(K) * cfg.action_dim);
  for (int b = 0; b < B; ++b)
    for (int k = 0; k < K; ++k)
      actions.row(b).segment(static_cast<Index>(k) * cfg.action_dim,
                             cfg.action_dim) =
          cfg.action_bound * trace.tanh_out.row(static_cast<Index>(b) * K + k);
  return actions;
}

double dt_loss_from_actions(const TrajectoryBatch& batch, const Matrix& actions) {
  double m_count = batch.attention_mask.sum();
  require(m_count > 0.0, "dt_loss: all positions masked");
  double total = 0.0;
  for (int b = 0; b < batch.batch_size; ++b)
    for (int k = 0; k < batch.K; ++k) {
      if (batch.attention_mask(b, k) == 0.0) continue;
      const auto pred = actions.row(b).segment(
          static_cast<Index>(k) * batch.action_dim, batch.action_dim);
      const auto target = batch.actions.row(b).segment(
          static_cast<Index>(k) * batch.action_dim, batch.action_dim);
      total += (pred - target).squaredNorm();
    }
  const double loss = total / (m_count * batch.action_dim);
  if (!std::isfinite(loss)) throw NumericError("dt_loss: non-finite loss");
  return loss;
}

}  // namespace

Matrix embed_inputs(const TrajectoryBatch& batch, const Checkpoint& ckpt) {
  check_dt_batch(batch, ckpt.config);
  const Matrix tokens = dt_embed_tokens(batch, ckpt);
  Matrix out;
  Vector mean, rstd;
  ln_rows_forward(tokens, ckpt.at("embed_ln.weight"), ckpt.at("embed_ln.bias"),
                  out, mean, rstd);
  return out;
}

ForwardResult dt_forward(const TrajectoryBatch& batch, const Checkpoint& ckpt,
                         RunMode mode, Rng& rng, const CaptureOptions& cap) {
  ForwardResult result;
  DtTrace trace;
  result.actions = dt_forward_impl(
      batch, ckpt, mode, rng, trace, cap.activations ? &result.captures : nullptr,
      cap.attention ? &result.attention : nullptr);
  return result;
}

double dt_loss(const TrajectoryBatch& batch, const Checkpoint& ckpt, RunMode mode,
               Rng& rng) {
  DtTrace trace;
  const Matrix actions = dt_forward_impl(batch, ckpt, mode, rng, trace, nullptr,
                                         nullptr);
  return dt_loss_from_actions(batch, actions);
}

LossResult dt_loss_and_grads(const TrajectoryBatch& batch, const Checkpoint& ckpt,
                             Rng& rng, RunMode mode) {
  const ModelConfig& cfg = ckpt.config;
  DtTrace trace;
  const Matrix actions =
      dt_forward_impl(batch, ckpt, mode, rng, trace, nullptr, nullptr);

  LossResult result;
  result.loss = dt_loss_from_actions(batch, actions);
  result.grads = GradientSet::zeros_like(ckpt);
  GradientSet& g = result.grads;

  const int B = batch.batch_size;
  const int K = batch.K;
  const int L = 3 * K;
  const double m_count = batch.attention_mask.sum();

  // d loss / d action_hat, then through the tanh head.
  Matrix d_tanh = Matrix::Zero(static_cast<Index>(B) * K, cfg.action_dim);
  for (int b = 0; b < B; ++b)
    for (int k = 0; k < K; ++k) {
      if (batch.attention_mask(b, k) == 0.0) continue;
      const auto pred = actions.row(b).segment(
          static_cast<Index>(k) * cfg.action_dim, cfg.action_dim);
      const auto target = batch.actions.row(b).segment(
          static_cast<Index>(k) * cfg.action_dim, cfg.action_dim);
      d_tanh.row(static_cast<Index>(b) * K + k) =
          (2.0 / (m_count * cfg.action_dim)) * (pred - target) * cfg.action_bound;
    }
  Matrix d_z = d_tanh.binaryExpr(
      trace.tanh_out, [](double gv, double t) { return gv * (1.0 - t * t); });

  Matrix d_head_in;
  linear_backward(trace.head_in, ckpt.at("predict_action.weight"), d_z, d_head_in,
                  g.at("predict_action.weight"), g.at("predict_action.bias"));

  Matrix d_lnf = Matrix::Zero(static_cast<Index>(B) * L, cfg.embed_dim);
  for (int b = 0; b < B; ++b)
    for (int k = 0; k < K; ++k)
      d_lnf.row(static_cast<Index>(b) * L + 3 * k + 1) =
          d_head_in.row(static_cast<Index>(b) * K + k);

  Matrix d_x0 = trunk_backward(d_lnf, trace.trunk, ckpt, g);

  if (trace.emb_mask.size() > 0) d_x0 = d_x0.cwiseProduct(trace.emb_mask);
  Matrix d_tokens;
  ln_rows_backward(trace.tokens_pre_ln, trace.embln_mean, trace.embln_rstd,
                   ckpt.at("embed_ln.weight"), d_x0, d_tokens,
                   g.at("embed_ln.weight"), g.at("embed_ln.bias"));

  Matrix& d_wt = g.at("embed_timestep.weight");
  for (int b = 0; b < B; ++b)
    for (int k = 0; k < K; ++k) {
      const Index row = static_cast<Index>(b) * L + 3 * k;
      const auto d_rtg_row = d_tokens.row(row);
      const auto d_state_row = d_tokens.row(row + 1);
      const auto d_action_row = d_tokens.row(row + 2);
      g.at("embed_return.weight").row(0) += batch.rtg(b, k) * d_rtg_row;
      g.at("embed_return.bias").row(0) += d_rtg_row;
      g.at("embed_state.weight").noalias() +=
          batch.states.row(b)
              .segment(static_cast<Index>(k) * batch.state_dim, batch.state_dim)
              .transpose() *
          d_state_row;
      g.at("embed_state.bias").row(0) += d_state_row;
      g.at("embed_action.weight").noalias() +=
          batch.actions.row(b)
              .segment(static_cast<Index>(k) * batch.action_dim, batch.action_dim)
              .transpose() *
          d_action_row;
      g.at("embed_action.bias").row(0) += d_action_row;
      const auto t = static_cast<Index>(batch.timesteps(b, k));
      d_wt.row(t) += d_rtg_row + d_state_row + d_action_row;
    }
  return result;
}

// ---- token (language-model) path ----

namespace {

struct LmTrace {
  Matrix x_pre_drop;  // BT x d
  Matrix emb_mask;
  TrunkTrace trunk;
};

void check_token_batch(const TokenBatch& batch, const ModelConfig& cfg) {
  require(cfg.has_token_head(), "lm_loss: checkpoint has no token head");
  require(batch.batch_size >= 1 && batch.seq_len >= 2,
          "lm_loss: need batch >= 1 and seq_len >= 2");
  require(batch.seq_len <= cfg.max_timestep,
          "lm_loss: sequence longer than position table");
  require(batch.ids.size() == static_cast<std::size_t>(batch.batch_size) *
                                  static_cast<std::size_t>(batch.seq_len),
          "lm_loss: id buffer size mismatch");
  for (const auto id : batch.ids)
    require(id < static_cast<std::uint32_t>(cfg.vocab_size),
            "lm_loss: token id overflows vocab_size");
}

Matrix lm_forward_impl(const TokenBatch& batch, const Checkpoint& ckpt,
                       RunMode mode, Rng& rng, LmTrace& trace) {
  const ModelConfig& cfg = ckpt.config;
  check_token_batch(batch, cfg);
  const int B = batch.batch_size;
  const int T = batch.seq_len;
  const Matrix& wte = ckpt.at("transformer.wte.weight");
  const Matrix& wpe = ckpt.at("transformer.wpe.weight");

  trace.x_pre_drop.resize(static_cast<Index>(B) * T, cfg.embed_dim);
  for (int b = 0; b < B; ++b)
    for (int t = 0; t < T; ++t)
      trace.x_pre_drop.row(static_cast<Index>(b) * T + t) =
          wte.row(batch.id(b, t)) + wpe.row(t);

  Matrix x0 = trace.x_pre_drop;
  if (mode == RunMode::kTrain && cfg.dropout_attn > 0.0) {
    trace.emb_mask = dropout_mask(x0.rows(), x0.cols(), cfg.dropout_attn, rng);
    x0 = x0.cwiseProduct(trace.emb_mask);
  }
  const Matrix mask = Matrix::Ones(B, T);
  const Matrix lnf_out =
      trunk_forward(x0, mask, ckpt, mode, rng, trace.trunk, nullptr, nullptr);
  return linear_forward(lnf_out, ckpt.at("lm_head.weight"),
                        ckpt.at("lm_head.bias"));
}

// Cross-entropy on next-token prediction; optionally fills d_logits.
double lm_ce(const TokenBatch& batch, const Matrix& logits, Matrix* d_logits) {
  const int B = batch.batch_size;
  const int T = batch.seq_len;
  const int V = static_cast<int>(logits.cols());
  const double count = static_cast<double>(B) * (T - 1);
  double loss = 0.0;
  if (d_logits != nullptr) d_logits->setZero(logits.rows(), V);
  for (int b = 0; b < B; ++b)
    for (int t = 0; t < T - 1; ++t) {
      const Index row = static_cast<Index>(b) * T + t;
      const auto l = logits.row(row);
      const double mx = l.maxCoeff();
      const double lse = mx + std::log((l.array() - mx).exp().sum());
      const auto target = batch.id(b, t + 1);
      loss -= (l(target) - lse) / count;
      if (d_logits != nullptr) {
        d_logits->row(row) = ((l.array() - lse).exp() / count).matrix();
        (*d_logits)(row, target) -= 1.0 / count;
      }
    }
  if (!std::isfinite(loss)) throw NumericError("lm_loss: non-finite loss");
  return loss;
}

}  // namespace

double lm_loss(const TokenBatch& batch, const Checkpoint& ckpt, RunMode mode,
               Rng& rng) {
  LmTrace trace;
  const Matrix logits = lm_forward_impl(batch, ckpt, mode, rng, trace);
  return lm_ce(batch, logits, nullptr);
}

LossResult lm_loss_and_grads(const TokenBatch& batch, const Checkpoint& ckpt,
                             Rng& rng, RunMode mode) {
  LmTrace trace;
  const Matrix logits = lm_forward_impl(batch, ckpt, mode, rng, trace);

  LossResult result;
  result.grads = GradientSet::zeros_like(ckpt);
  GradientSet& g = result.grads;
  Matrix d_logits;
  result.loss = lm_ce(batch, logits, &d_logits);

  Matrix d_lnf;
  linear_backward(trace.trunk.lnf_out, ckpt.at("lm_head.weight"), d_logits, d_lnf,
                  g.at("lm_head.weight"), g.at("lm_head.bias"));

  Matrix d_x0 = trunk_backward(d_lnf, trace.trunk, ckpt, g);
  if (trace.emb_mask.size() > 0) d_x0 = d_x0.cwiseProduct(trace.emb_mask);

  Matrix& d_wte = g.at("transformer.wte.weight");
  Matrix& d_wpe = g.at("transformer.wpe.weight");
  for (int b = 0; b < batch.batch_size; ++b)
    for (int t = 0; t < batch.seq_len; ++t) {
      const auto row = d_x0.row(static_cast<Index>(b) * batch.seq_len + t);
      d_wte.row(batch.id(b, t)) += row;
      d_wpe.row(t) += row;
    }
  return result;
}

}  // namespace dtlab
