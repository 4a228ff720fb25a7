#pragma once

// Conditional flow matching over normalised hit vectors. The velocity MLP is
// modulated block-wise by FiLM parameters generated from the game context and
// a jointly learned per-player embedding.

#include "hitspace/context.hpp"
#include "hitspace/core.hpp"
#include "hitspace/hitformer.hpp"
#include "hitspace/nn.hpp"
#include "hitspace/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <numeric>
#include <vector>

namespace hitspace {

struct HitFlowConfig {
  int hidden = 128;
  int blocks = 3;
  int embedding_dim = 32;
  int time_features = 16;
  int film_hidden = 128;
  double p_embedding = 0.1;
  double p_condition = 0.8;
  double p_modulation = 0.6;
  int epochs = 3000;
  int batch_size = 256;
  // Batches per epoch; 0 means ceil(records / batch_size).
  int batches_per_epoch = 0;
  double lr_main = 1e-4;
  double lr_film = 1e-5;
  double lr_terminal = 1e-6;
  double weight_decay = 1e-2;
  bool balanced_sampling = true;
  int ode_steps = 50;

  void validate() const {
    if (hidden < 2 || blocks < 1 || embedding_dim < 1 || film_hidden < 1)
      throw Error(ErrorKind::Config, "hitflow: widths and block count must be positive");
    if (time_features < 2 || time_features % 2 != 0)
      throw Error(ErrorKind::Config, "hitflow: time_features must be even and >= 2");
    for (double p : {p_embedding, p_condition, p_modulation})
      if (!(p >= 0.0 && p <= 1.0)) throw Error(ErrorKind::Config, "hitflow: dropout rates must lie in [0, 1]");
    if (epochs < 1 || batch_size < 1 || batches_per_epoch < 0)
      throw Error(ErrorKind::Config, "hitflow: epochs and batch_size must be >= 1");
    if (!(lr_main > 0.0 && lr_film > 0.0 && lr_terminal > 0.0))
      throw Error(ErrorKind::Config, "hitflow: learning rates must be > 0");
    if (ode_steps < 1) throw Error(ErrorKind::Config, "hitflow: ode_steps must be >= 1");
  }
};

/// Linear interpolant between source noise x0 (t=0) and data x1 (t=1).
struct FlowPair {
  Eigen::VectorXd x_t;
  Eigen::VectorXd u_target;
};

inline FlowPair fm_pair(const Eigen::VectorXd& x1, const Eigen::VectorXd& x0, double t) {
  if (!(t >= 0.0 && t <= 1.0)) throw Error(ErrorKind::InvalidInput, "fm_pair: t must lie in [0, 1]");
  if (x1.size() != x0.size()) throw Error(ErrorKind::InvalidInput, "fm_pair: size mismatch");
  return {(1.0 - t) * x0 + t * x1, x1 - x0};
}

template <typename T>
nn::Mat<T> time_embedding(const Eigen::VectorXd& t, int width) {
  nn::Mat<T> out(t.size(), width);
  for (Eigen::Index i = 0; i < t.size(); ++i)
    for (int k = 0; k < width / 2; ++k) {
      const double w = std::numbers::pi * std::pow(2.0, k);
      out(i, 2 * k) = static_cast<T>(std::sin(w * t[i]));
      out(i, 2 * k + 1) = static_cast<T>(std::cos(w * t[i]));
    }
  return out;
}

/// Per-sample conditioning switches.
struct ConditionFlags {
  std::vector<std::array<bool, kContextParts>> null_part;  // replace part by its null vector
  std::vector<bool> drop_embedding;                       // zero the embedding
  std::vector<bool> bypass_film;                          // identity modulation
};

template <typename T>
struct HitFlowNet {
  using M = nn::Mat<T>;
  HitFlowConfig cfg;
  nn::Dense<T> in_proj, out_proj;
  std::vector<nn::LayerNorm<T>> norms;
  std::vector<nn::Dense<T>> fcs;
  std::vector<nn::Silu<T>> acts;
  nn::Dense<T> gen1, gen2;
  nn::Silu<T> gen_act;
  std::array<nn::TensorBuf<T>, kContextParts> nulls;
  nn::TensorBuf<T> embeddings;  // players x embedding_dim
  // Forces gamma=1, beta=0 everywhere (evaluation switch).
  bool force_identity_film = false;

  // Forward caches.
  std::vector<M> h_in_, normed_;
  std::vector<nn::FilmParams<T>> film_;
  ConditionFlags flags_;
  std::vector<int> players_;

  HitFlowNet() = default;
  HitFlowNet(const HitFlowConfig& c, int n_players, Rng& rng) : cfg(c) {
    cfg.validate();
    if (n_players < 1) throw Error(ErrorKind::InvalidInput, "hitflow: need at least one player");
    const int H = cfg.hidden;
    in_proj = nn::Dense<T>("flow.in", kHitDim + cfg.time_features, H, rng);
    for (int b = 0; b < cfg.blocks; ++b) {
      norms.emplace_back("flow.block" + std::to_string(b) + ".ln", H);
      fcs.emplace_back("flow.block" + std::to_string(b) + ".fc", H, H, rng);
      acts.emplace_back();
    }
    out_proj = nn::Dense<T>("flow.out", H, kHitDim, rng);
    const int cond_width = context_width() + cfg.embedding_dim;
    gen1 = nn::Dense<T>("film.fc1", cond_width, cfg.film_hidden, rng, nn::ParamGroup::FilmGenerator);
    gen2 = nn::Dense<T>("film.fc2", cfg.film_hidden, 2 * H * cfg.blocks, rng, nn::ParamGroup::FilmGenerator);
    // Start near identity modulation.
    gen2.W.value *= T(0.1);
    gen2.b.value.setZero();
    for (int i = 0; i < kContextParts; ++i) {
      nulls[static_cast<std::size_t>(i)] =
          nn::TensorBuf<T>("null." + std::to_string(i), 1, kContextPartWidths[static_cast<std::size_t>(i)]);
      nn::init_normal(nulls[static_cast<std::size_t>(i)], 0.02, rng);
    }
    embeddings = nn::TensorBuf<T>("embeddings", n_players, cfg.embedding_dim);
    nn::init_normal(embeddings, 0.1, rng);
  }

  int n_players() const { return static_cast<int>(embeddings.value.rows()); }

  nn::ParamList<T> params() {
    nn::ParamList<T> out;
    in_proj.params(out);
    for (int b = 0; b < cfg.blocks; ++b) {
      norms[static_cast<std::size_t>(b)].params(out);
      fcs[static_cast<std::size_t>(b)].params(out);
    }
    out_proj.params(out);
    gen1.params(out);
    gen2.params(out);
    for (auto& n : nulls) out.push_back(&n);
    out.push_back(&embeddings);
    return out;
  }

  /// Conditioning input rows from normalised contexts, player embeddings and
  /// dropout flags. `emb_override`, when non-empty, replaces table lookups.
  M condition(const M& ctx, const std::vector<int>& players, const ConditionFlags& flags,
              const M* emb_override) const {
    const Eigen::Index B = ctx.rows();
    M cond(B, context_width() + cfg.embedding_dim);
    cond.leftCols(context_width()) = ctx;
    for (Eigen::Index i = 0; i < B; ++i) {
      const auto ui = static_cast<std::size_t>(i);
      for (int part = 0; part < kContextParts; ++part)
        if (flags.null_part[ui][static_cast<std::size_t>(part)])
          cond.block(i, context_offset(part), 1, kContextPartWidths[static_cast<std::size_t>(part)]) =
              nulls[static_cast<std::size_t>(part)].value;
      if (flags.drop_embedding[ui]) cond.block(i, context_width(), 1, cfg.embedding_dim).setZero();
      else if (emb_override) cond.block(i, context_width(), 1, cfg.embedding_dim) = emb_override->row(i);
      else {
        const int p = players[ui];
        if (p < 0 || p >= n_players()) throw Error(ErrorKind::InvalidInput, "hitflow: unknown player id");
        cond.block(i, context_width(), 1, cfg.embedding_dim) = embeddings.value.row(p);
      }
    }
    return cond;
  }

  /// Velocity for a batch. ctx rows are normalised flattened contexts.
  M forward(const M& x, const Eigen::VectorXd& t, const M& ctx, const std::vector<int>& players,
            const ConditionFlags& flags, const M* emb_override = nullptr) {
    const Eigen::Index B = x.rows();
    if (x.cols() != kHitDim || ctx.cols() != context_width() || t.size() != B || ctx.rows() != B)
      throw Error(ErrorKind::InvalidInput, "hitflow: input width mismatch");
    flags_ = flags;
    players_ = players;
    const int H = cfg.hidden;
    const M g = gen2.forward(gen_act.forward(gen1.forward(condition(ctx, players, flags, emb_override))));
    M in(B, kHitDim + cfg.time_features);
    in << x, time_embedding<T>(t, cfg.time_features);
    M h = in_proj.forward(in);
    h_in_.assign(static_cast<std::size_t>(cfg.blocks), M());
    normed_.assign(static_cast<std::size_t>(cfg.blocks), M());
    film_.assign(static_cast<std::size_t>(cfg.blocks), nn::FilmParams<T>());
    for (int b = 0; b < cfg.blocks; ++b) {
      const auto ub = static_cast<std::size_t>(b);
      nn::FilmParams<T>& fp = film_[ub];
      fp.gamma = M::Ones(B, H) + g.middleCols(2 * b * H, H);
      fp.beta = g.middleCols((2 * b + 1) * H, H);
      for (Eigen::Index i = 0; i < B; ++i)
        if (force_identity_film || flags.bypass_film[static_cast<std::size_t>(i)]) {
          fp.gamma.row(i).setOnes();
          fp.beta.row(i).setZero();
        }
      h_in_[ub] = h;
      normed_[ub] = norms[ub].forward(h);
      h = h + fcs[ub].forward(acts[ub].forward(nn::film_modulate(normed_[ub], fp)));
    }
    return out_proj.forward(h);
  }

  /// Accumulates gradients from dL/d(velocity).
  void backward(const M& dout) {
    const Eigen::Index B = dout.rows();
    const int H = cfg.hidden;
    M dh = out_proj.backward(dout);
    M dg = M::Zero(B, 2 * H * cfg.blocks);
    for (int b = cfg.blocks - 1; b >= 0; --b) {
      const auto ub = static_cast<std::size_t>(b);
      const M dmod = acts[ub].backward(fcs[ub].backward(dh));
      M dnormed, dgamma, dbeta;
      nn::film_backward(dmod, normed_[ub], film_[ub], dnormed, dgamma, dbeta);
      for (Eigen::Index i = 0; i < B; ++i)
        if (force_identity_film || flags_.bypass_film[static_cast<std::size_t>(i)]) {
          dgamma.row(i).setZero();
          dbeta.row(i).setZero();
        }
      dg.middleCols(2 * b * H, H) = dgamma;
      dg.middleCols((2 * b + 1) * H, H) = dbeta;
      dh = dh + norms[ub].backward(dnormed);
    }
    in_proj.backward(dh);
    const M dcond = gen1.backward(gen_act.backward(gen2.backward(dg)));
    for (Eigen::Index i = 0; i < B; ++i) {
      const auto ui = static_cast<std::size_t>(i);
      for (int part = 0; part < kContextParts; ++part)
        if (flags_.null_part[ui][static_cast<std::size_t>(part)])
          nulls[static_cast<std::size_t>(part)].grad +=
              dcond.block(i, context_offset(part), 1, kContextPartWidths[static_cast<std::size_t>(part)]);
      if (!flags_.drop_embedding[ui] && !players_.empty() && players_[ui] >= 0)
        embeddings.grad.row(players_[ui]) += dcond.block(i, context_width(), 1, cfg.embedding_dim);
    }
  }
};

inline ConditionFlags no_dropout(std::size_t n) {
  ConditionFlags f;
  f.null_part.assign(n, {});
  f.drop_embedding.assign(n, false);
  f.bypass_film.assign(n, false);
  return f;
}

struct HitFlowModel {
  HitFlowConfig cfg;
  HitFlowNet<float> net;
  Standardizer hit_stats;
  Standardizer ctx_stats;
  std::vector<double> loss_curve;
};

struct FlowExample {
  Eigen::RowVectorXd context;  // raw flattened context
  HitVector response;
  int player_id = 0;
};

inline std::vector<FlowExample> flow_examples(const std::vector<RallyRecord>& records) {
  std::vector<FlowExample> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back({flatten(r.context).transpose(), r.response, r.player_id});
  return out;
}

inline HitFlowModel init_hitflow(const HitFlowConfig& cfg, const std::vector<FlowExample>& data, int n_players,
                                 std::uint64_t seed) {
  cfg.validate();
  if (data.empty()) throw Error(ErrorKind::Data, "hitflow: empty training set");
  HitFlowModel model;
  model.cfg = cfg;
  Rng rng = substream(seed, "hitflow-init");
  model.net = HitFlowNet<float>(cfg, n_players, rng);
  Eigen::MatrixXd hits(static_cast<Eigen::Index>(data.size()), kHitDim);
  Eigen::MatrixXd ctx(static_cast<Eigen::Index>(data.size()), context_width());
  for (std::size_t i = 0; i < data.size(); ++i) {
    hits.row(static_cast<Eigen::Index>(i)) = hit_row(data[i].response);
    ctx.row(static_cast<Eigen::Index>(i)) = data[i].context;
  }
  model.hit_stats = Standardizer::fit(hits);
  model.ctx_stats = Standardizer::fit(ctx);
  return model;
}

inline nn::OptimState<float> hitflow_optimizer(const HitFlowConfig& cfg) {
  nn::OptimState<float> opt;
  opt.weight_decay = cfg.weight_decay;
  opt.schedule.lr_main = cfg.lr_main;
  opt.schedule.lr_film = cfg.lr_film;
  opt.schedule.lr_terminal = cfg.lr_terminal;
  opt.schedule.horizon_epochs = cfg.epochs;
  return opt;
}

/// One epoch of balanced (per-player uniform) or uniform batch sampling.
inline double train_hitflow_epoch(HitFlowModel& model, nn::OptimState<float>& opt,
                                  const std::vector<FlowExample>& data, std::uint64_t seed, int epoch) {
  const HitFlowConfig& cfg = model.cfg;
  std::vector<std::vector<std::size_t>> by_player(static_cast<std::size_t>(model.net.n_players()));
  for (std::size_t i = 0; i < data.size(); ++i) {
    const int p = data[i].player_id;
    if (p < 0 || p >= model.net.n_players()) throw Error(ErrorKind::Data, "hitflow: record with unknown player id");
    by_player[static_cast<std::size_t>(p)].push_back(i);
  }
  std::vector<int> active;
  for (std::size_t p = 0; p < by_player.size(); ++p)
    if (!by_player[p].empty()) active.push_back(static_cast<int>(p));

  Rng rng = substream(seed, "hitflow-epoch", static_cast<std::uint64_t>(epoch));
  const int n_batches = cfg.batches_per_epoch > 0
                            ? cfg.batches_per_epoch
                            : static_cast<int>((data.size() + static_cast<std::size_t>(cfg.batch_size) - 1) /
                                               static_cast<std::size_t>(cfg.batch_size));
  const nn::ParamList<float> params = model.net.params();
  const auto B = static_cast<Eigen::Index>(cfg.batch_size);
  double total = 0.0;
  for (int bi = 0; bi < n_batches; ++bi) {
    nn::Mat<float> x(B, kHitDim), ctx(B, context_width()), target(B, kHitDim);
    Eigen::VectorXd t(B);
    std::vector<int> players(static_cast<std::size_t>(B));
    ConditionFlags flags = no_dropout(static_cast<std::size_t>(B));
    for (Eigen::Index i = 0; i < B; ++i) {
      std::size_t idx;
      if (cfg.balanced_sampling) {
        const int p = active[std::uniform_int_distribution<std::size_t>(0, active.size() - 1)(rng)];
        const auto& rows = by_player[static_cast<std::size_t>(p)];
        idx = rows[std::uniform_int_distribution<std::size_t>(0, rows.size() - 1)(rng)];
      } else {
        idx = std::uniform_int_distribution<std::size_t>(0, data.size() - 1)(rng);
      }
      const FlowExample& ex = data[idx];
      const Eigen::VectorXd x1 = model.hit_stats.apply(hit_row(ex.response)).transpose();
      Eigen::VectorXd x0(kHitDim);
      for (int k = 0; k < kHitDim; ++k) x0[k] = gaussian(rng, 1.0);
      t[i] = uniform(rng, 0.0, 1.0);
      const FlowPair fp = fm_pair(x1, x0, t[i]);
      x.row(i) = fp.x_t.transpose().cast<float>();
      target.row(i) = fp.u_target.transpose().cast<float>();
      ctx.row(i) = model.ctx_stats.apply(ex.context).cast<float>();
      players[static_cast<std::size_t>(i)] = ex.player_id;
      const auto ui = static_cast<std::size_t>(i);
      flags.drop_embedding[ui] = nn::dropout_embedding(cfg.p_embedding, rng);
      const std::vector<bool> parts = nn::dropout_condition(kContextParts, cfg.p_condition, rng);
      for (int k = 0; k < kContextParts; ++k) flags.null_part[ui][static_cast<std::size_t>(k)] = parts[static_cast<std::size_t>(k)];
      flags.bypass_film[ui] = nn::dropout_modulation(cfg.p_modulation, rng);
    }
    nn::zero_grads(params);
    const nn::Mat<float> v = model.net.forward(x, t, ctx, players, flags);
    const nn::Mat<float> diff = v - target;
    const double loss = diff.cast<double>().squaredNorm() / static_cast<double>(B * kHitDim);
    if (!std::isfinite(loss)) throw Error(ErrorKind::Numeric, "hitflow: non-finite training loss");
    model.net.backward(diff * (2.0f / static_cast<float>(B * kHitDim)));
    nn::adamw_step(params, opt, static_cast<double>(epoch) + static_cast<double>(bi) / n_batches);
    total += loss;
  }
  const double mean = total / n_batches;
  model.loss_curve.push_back(mean);
  return mean;
}

inline HitFlowModel train_hitflow(const std::vector<FlowExample>& data, int n_players, const HitFlowConfig& cfg,
                                  std::uint64_t seed, const EpochCallback& on_epoch = {}) {
  if (n_players < 1) throw Error(ErrorKind::InvalidInput, "hitflow: need at least one player");
  HitFlowModel model = init_hitflow(cfg, data, n_players, seed);
  nn::OptimState<float> opt = hitflow_optimizer(cfg);
  for (int e = 0; e < cfg.epochs; ++e) {
    const double loss = train_hitflow_epoch(model, opt, data, seed, e);
    if (on_epoch) on_epoch(e, loss);
  }
  return model;
}

inline HitFlowModel train_hitflow(const std::vector<RallyRecord>& rallies, int n_players, const HitFlowConfig& cfg,
                                  std::uint64_t seed, const EpochCallback& on_epoch = {}) {
  if (n_players < 2) throw Error(ErrorKind::InvalidInput, "hitflow: need at least two players");
  std::vector<int> count(static_cast<std::size_t>(n_players), 0);
  for (const auto& r : rallies) {
    if (r.player_id < 0 || r.player_id >= n_players) throw Error(ErrorKind::Data, "hitflow: unknown player id");
    ++count[static_cast<std::size_t>(r.player_id)];
  }
  for (int p = 0; p < n_players; ++p)
    if (count[static_cast<std::size_t>(p)] == 0)
      throw Error(ErrorKind::Data, "hitflow: player " + std::to_string(p) + " has no records");
  return train_hitflow(flow_examples(rallies), n_players, cfg, seed, on_epoch);
}

/// Velocity for one (x_t, t, context, embedding) in normalised units.
inline Eigen::VectorXd velocity(HitFlowModel& model, const Eigen::VectorXd& x_t, double t, const GameContext& ctx,
                                const Eigen::VectorXd& embedding) {
  if (embedding.size() != model.cfg.embedding_dim) throw Error(ErrorKind::InvalidInput, "hitflow: embedding width");
  nn::Mat<float> x = x_t.transpose().cast<float>();
  nn::Mat<float> c = model.ctx_stats.apply(flatten(ctx).transpose()).cast<float>();
  nn::Mat<float> e = embedding.transpose().cast<float>();
  Eigen::VectorXd tv(1);
  tv[0] = t;
  return model.net.forward(x, tv, c, {-1}, no_dropout(1), &e).row(0).transpose().cast<double>();
}

inline Eigen::VectorXd player_embedding(const HitFlowModel& model, int player_id) {
  if (player_id < 0 || player_id >= model.net.n_players())
    throw Error(ErrorKind::InvalidInput, "unknown player id " + std::to_string(player_id));
  return model.net.embeddings.value.row(player_id).transpose().cast<double>();
}

inline Eigen::MatrixXd embedding_table(const HitFlowModel& model) {
  return model.net.embeddings.value.cast<double>();
}

/// Euler integration of the learned field from Gaussian noise at t=0 to t=1.
inline std::vector<HitVector> sample_hits(HitFlowModel& model, const GameContext& ctx,
                                          const Eigen::VectorXd& embedding, int n, int ode_steps,
                                          std::uint64_t seed) {
  if (n < 1 || ode_steps < 1) throw Error(ErrorKind::InvalidInput, "sample_hits: n and ode_steps must be >= 1");
  if (embedding.size() != model.cfg.embedding_dim) throw Error(ErrorKind::InvalidInput, "hitflow: embedding width");
  Rng rng = substream(seed, "hitflow-sample");
  nn::Mat<float> x(n, kHitDim);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = static_cast<float>(gaussian(rng, 1.0));
  const nn::Mat<float> c = model.ctx_stats.apply(flatten(ctx).transpose()).cast<float>().replicate(n, 1);
  const nn::Mat<float> e = embedding.transpose().cast<float>().replicate(n, 1);
  const std::vector<int> players(static_cast<std::size_t>(n), -1);
  const ConditionFlags flags = no_dropout(static_cast<std::size_t>(n));
  const double dt = 1.0 / ode_steps;
  for (int s = 0; s < ode_steps; ++s) {
    const Eigen::VectorXd t = Eigen::VectorXd::Constant(n, s * dt);
    const nn::Mat<float> v = model.net.forward(x, t, c, players, flags, &e);
    x += static_cast<float>(dt) * v;
  }
  std::vector<HitVector> out;
  out.reserve(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i)
    out.push_back(HitVector::from_array(model.hit_stats.invert(x.row(i).cast<double>()).transpose()));
  return out;
}

inline std::vector<HitVector> sample_hits(HitFlowModel& model, const GameContext& ctx, int player_id, int n,
                                          std::uint64_t seed) {
  return sample_hits(model, ctx, player_embedding(model, player_id), n, model.cfg.ode_steps, seed);
}

inline nn::BlobMap hitflow_blobs(HitFlowModel& model) {
  nn::BlobMap blobs;
  nn::store_params(model.net.params(), blobs);
  blobs["stats.hit_mean"] = model.hit_stats.mean;
  blobs["stats.hit_std"] = model.hit_stats.stddev;
  blobs["stats.ctx_mean"] = model.ctx_stats.mean;
  blobs["stats.ctx_std"] = model.ctx_stats.stddev;
  if (!model.loss_curve.empty())
    blobs["train.loss_curve"] = Eigen::Map<const nn::Blob>(model.loss_curve.data(), 1,
                                                           static_cast<Eigen::Index>(model.loss_curve.size()));
  return blobs;
}

inline void load_hitflow_blobs(HitFlowModel& model, const nn::BlobMap& blobs) {
  nn::load_params(model.net.params(), blobs);
  auto get = [&](const std::string& k) -> Eigen::RowVectorXd {
    const auto it = blobs.find(k);
    if (it == blobs.end()) throw Error(ErrorKind::Data, "checkpoint lacks '" + k + "'");
    return it->second.row(0);
  };
  model.hit_stats.mean = get("stats.hit_mean");
  model.hit_stats.stddev = get("stats.hit_std");
  model.ctx_stats.mean = get("stats.ctx_mean");
  model.ctx_stats.stddev = get("stats.ctx_std");
  model.loss_curve.clear();
  if (const auto it = blobs.find("train.loss_curve"); it != blobs.end())
    model.loss_curve.assign(it->second.data(), it->second.data() + it->second.size());
}

}  // namespace hitspace
