#pragma once

// Hit-vector recovery from a single-camera 2D ball track: a transformer over
// per-frame Plücker ray tokens gives an initial estimate, then damped least
// squares on the reprojection residual of simulate-then-project refines it.

#include "hitspace/core.hpp"
#include "hitspace/geometry.hpp"
#include "hitspace/least_squares.hpp"
#include "hitspace/nn.hpp"
#include "hitspace/parallel.hpp"
#include "hitspace/physics.hpp"
#include "hitspace/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <vector>

namespace hitspace {

struct HitFormerConfig {
  int layers = 4;
  int heads = 4;
  int width = 128;
  int ff_ratio = 2;
  double fps = 30.0;
  double window_s = 1.0;
  // Moments are divided by this before entering the network (metres).
  double moment_scale = 5.0;
  // Per-sample augmentation ranges, redrawn every epoch.
  double mask_rate_min = 0.0;
  double mask_rate_max = 0.3;
  double pixel_sigma_max = 1.5;
  double hit_loss_weight = 1.0;
  double point_loss_weight = 0.5;
  int epochs = 8;
  int batch_size = 64;
  double lr = 1e-3;
  double lr_terminal = 1e-5;
  double weight_decay = 1e-4;

  int max_frames() const { return static_cast<int>(std::floor(window_s * fps + 1e-9)) + 1; }

  void validate() const {
    if (layers < 1 || heads < 1 || width < 2) throw Error(ErrorKind::Config, "hitformer: layers/heads/width must be positive");
    if (width % heads != 0) throw Error(ErrorKind::Config, "hitformer: width must be divisible by heads");
    if (width % 2 != 0) throw Error(ErrorKind::Config, "hitformer: width must be even");
    if (ff_ratio < 1) throw Error(ErrorKind::Config, "hitformer: ff_ratio must be >= 1");
    if (!(fps > 0.0 && window_s > 0.0)) throw Error(ErrorKind::Config, "hitformer: fps and window_s must be > 0");
    if (!(moment_scale > 0.0)) throw Error(ErrorKind::Config, "hitformer: moment_scale must be > 0");
    if (!(mask_rate_min >= 0.0 && mask_rate_min <= mask_rate_max && mask_rate_max < 1.0))
      throw Error(ErrorKind::Config, "hitformer: mask rate range must satisfy 0 <= min <= max < 1");
    if (!(pixel_sigma_max >= 0.0)) throw Error(ErrorKind::Config, "hitformer: pixel_sigma_max must be >= 0");
    if (!(hit_loss_weight >= 0.0 && point_loss_weight >= 0.0))
      throw Error(ErrorKind::Config, "hitformer: loss weights must be >= 0");
    if (epochs < 1 || batch_size < 1) throw Error(ErrorKind::Config, "hitformer: epochs and batch_size must be >= 1");
    if (!(lr > 0.0 && lr_terminal > 0.0 && lr_terminal <= lr))
      throw Error(ErrorKind::Config, "hitformer: need 0 < lr_terminal <= lr");
  }
};

inline constexpr int kTokenFeatures = 8;

/// Per-frame token inputs of one observation.
struct TokenSequence {
  // max_frames x kTokenFeatures: direction (3), moment / scale (3),
  // normalised time, visibility flag.
  Eigen::MatrixXd features;
  std::vector<std::uint8_t> visible;  // 1 = observed, 0 = masked
  std::vector<std::uint8_t> present;  // 1 = frame exists, 0 = padding
  std::vector<double> times;
};

inline TokenSequence tokenize(const Observation2D& obs, const CameraIntrinsics& intr, const CameraPose& pose,
                              const HitFormerConfig& cfg, int min_visible = 3) {
  const int max_frames = cfg.max_frames();
  if (static_cast<int>(obs.frames.size()) > max_frames)
    throw Error(ErrorKind::InvalidInput, "observation has " + std::to_string(obs.frames.size()) +
                                             " frames, more than the model's " + std::to_string(max_frames));
  if (obs.visible_count() < static_cast<std::size_t>(min_visible))
    throw Error(ErrorKind::RecoveryInfeasible,
                "only " + std::to_string(obs.visible_count()) + " visible frames; need " + std::to_string(min_visible));
  TokenSequence seq;
  seq.features = Eigen::MatrixXd::Zero(max_frames, kTokenFeatures);
  seq.visible.assign(static_cast<std::size_t>(max_frames), 0);
  seq.present.assign(static_cast<std::size_t>(max_frames), 0);
  for (std::size_t k = 0; k < obs.frames.size(); ++k) {
    const ObservationFrame& f = obs.frames[k];
    seq.present[k] = 1;
    seq.times.push_back(f.t_s);
    const auto row = static_cast<Eigen::Index>(k);
    seq.features(row, 6) = f.t_s / cfg.window_s;
    if (!f.visible) continue;
    const PluckerLine line = pixel_to_pluecker(f.pixel, intr, pose);
    seq.visible[k] = 1;
    seq.features.block<1, 3>(row, 0) = line.direction.transpose();
    seq.features.block<1, 3>(row, 3) = (line.moment / cfg.moment_scale).transpose();
    seq.features(row, 7) = 1.0;
  }
  return seq;
}

/// Z-score statistics.
struct Standardizer {
  Eigen::RowVectorXd mean, stddev;

  static Standardizer fit(const Eigen::MatrixXd& rows) {
    Standardizer s;
    s.mean = rows.colwise().mean();
    s.stddev = ((rows.rowwise() - s.mean).array().square().colwise().sum() / std::max<Eigen::Index>(1, rows.rows()))
                   .sqrt()
                   .matrix();
    for (Eigen::Index j = 0; j < s.stddev.size(); ++j)
      if (!(s.stddev[j] > 1e-9)) s.stddev[j] = 1.0;
    return s;
  }
  Eigen::RowVectorXd apply(const Eigen::RowVectorXd& x) const { return (x - mean).cwiseQuotient(stddev); }
  Eigen::RowVectorXd invert(const Eigen::RowVectorXd& z) const { return z.cwiseProduct(stddev) + mean; }
};

inline Eigen::RowVectorXd hit_row(const HitVector& h) { return h.to_array().transpose(); }

/// The network itself, templated on the scalar so gradient checks can run in
/// double while training runs in float.
template <typename T>
struct HitFormerNet {
  using M = nn::Mat<T>;
  int width = 0;
  int max_frames = 0;
  nn::Dense<T> embed;
  nn::TensorBuf<T> cls_token, mask_token;
  std::vector<nn::TransformerBlock<T>> blocks;
  nn::LayerNorm<T> final_ln;
  nn::Dense<T> hit_fc1, hit_fc2, point_fc;
  nn::Gelu<T> hit_act;
  M pe;  // (max_frames + 1) x width

  // Forward caches.
  Eigen::Index batch_ = 0;
  std::vector<std::uint8_t> vis_, present_;

  HitFormerNet() = default;
  HitFormerNet(const HitFormerConfig& cfg, Rng& rng) {
    cfg.validate();
    width = cfg.width;
    max_frames = cfg.max_frames();
    embed = nn::Dense<T>("embed", kTokenFeatures, width, rng);
    cls_token = nn::TensorBuf<T>("cls_token", 1, width);
    mask_token = nn::TensorBuf<T>("mask_token", 1, width);
    nn::init_normal(cls_token, 0.02, rng);
    nn::init_normal(mask_token, 0.02, rng);
    for (int l = 0; l < cfg.layers; ++l)
      blocks.emplace_back("block" + std::to_string(l), width, cfg.heads, width * cfg.ff_ratio, rng);
    final_ln = nn::LayerNorm<T>("final_ln", width);
    hit_fc1 = nn::Dense<T>("hit_fc1", width, width, rng);
    hit_fc2 = nn::Dense<T>("hit_fc2", width, kHitDim, rng);
    point_fc = nn::Dense<T>("point_fc", width, 3, rng);
    const int len = max_frames + 1;
    pe = M::Zero(len, width);
    for (int pos = 0; pos < len; ++pos)
      for (int i = 0; i < width / 2; ++i) {
        const double freq = std::pow(10000.0, -2.0 * i / width);
        pe(pos, 2 * i) = static_cast<T>(std::sin(pos * freq));
        pe(pos, 2 * i + 1) = static_cast<T>(std::cos(pos * freq));
      }
  }

  Eigen::Index seq_len() const { return max_frames + 1; }

  nn::ParamList<T> params() {
    nn::ParamList<T> out;
    embed.params(out);
    out.push_back(&cls_token);
    out.push_back(&mask_token);
    for (auto& b : blocks) b.params(out);
    final_ln.params(out);
    hit_fc1.params(out);
    hit_fc2.params(out);
    point_fc.params(out);
    return out;
  }

  /// feats: (batch*max_frames) x kTokenFeatures. Returns the normalised hit
  /// (batch x 9) and per-frame points (batch*max_frames x 3).
  std::pair<M, M> forward(const M& feats, const std::vector<std::uint8_t>& visible,
                          const std::vector<std::uint8_t>& present) {
    const Eigen::Index F = max_frames, L = seq_len();
    batch_ = feats.rows() / F;
    if (feats.rows() != batch_ * F || feats.cols() != kTokenFeatures)
      throw Error(ErrorKind::InvalidInput, "hitformer: token block has the wrong shape");
    vis_ = visible;
    present_ = present;
    const M e = embed.forward(feats);
    M x(batch_ * L, width);
    nn::KeyMask mask(batch_, L);
    for (Eigen::Index b = 0; b < batch_; ++b) {
      x.row(b * L) = cls_token.value.row(0) + pe.row(0);
      mask(b, 0) = 1;
      for (Eigen::Index k = 0; k < F; ++k) {
        const auto i = static_cast<std::size_t>(b * F + k);
        const Eigen::Index r = b * L + k + 1;
        if (!present[i]) x.row(r) = pe.row(k + 1);
        else if (visible[i]) x.row(r) = e.row(b * F + k) + pe.row(k + 1);
        else x.row(r) = mask_token.value.row(0) + pe.row(k + 1);
        mask(b, k + 1) = present[i];
      }
    }
    for (auto& blk : blocks) x = blk.forward(x, mask);
    const M h = final_ln.forward(x);
    M cls(batch_, width), frames(batch_ * F, width);
    for (Eigen::Index b = 0; b < batch_; ++b) {
      cls.row(b) = h.row(b * L);
      frames.middleRows(b * F, F) = h.middleRows(b * L + 1, F);
    }
    M hit = hit_fc2.forward(hit_act.forward(hit_fc1.forward(cls)));
    M points = point_fc.forward(frames);
    return {std::move(hit), std::move(points)};
  }

  /// Accumulates parameter gradients given upstream gradients of both heads.
  void backward(const M& dhit, const M& dpoints) {
    const Eigen::Index F = max_frames, L = seq_len();
    const M dcls = hit_fc1.backward(hit_act.backward(hit_fc2.backward(dhit)));
    const M dframes = point_fc.backward(dpoints);
    M dh = M::Zero(batch_ * L, width);
    for (Eigen::Index b = 0; b < batch_; ++b) {
      dh.row(b * L) = dcls.row(b);
      dh.middleRows(b * L + 1, F) = dframes.middleRows(b * F, F);
    }
    M dx = final_ln.backward(dh);
    for (auto it = blocks.rbegin(); it != blocks.rend(); ++it) dx = it->backward(dx);
    M de = M::Zero(batch_ * F, width);
    for (Eigen::Index b = 0; b < batch_; ++b) {
      cls_token.grad.row(0) += dx.row(b * L);
      for (Eigen::Index k = 0; k < F; ++k) {
        const auto i = static_cast<std::size_t>(b * F + k);
        if (!present_[i]) continue;
        if (vis_[i]) de.row(b * F + k) = dx.row(b * L + k + 1);
        else mask_token.grad.row(0) += dx.row(b * L + k + 1);
      }
    }
    embed.backward(de);
  }
};

struct HitFormerModel {
  HitFormerConfig cfg;
  HitFormerNet<float> net;
  Standardizer hit_stats;
  Standardizer point_stats;
  std::vector<double> loss_curve;  // mean training loss per epoch
};

/// Prediction for one observation, in physical units.
struct HitFormerOutput {
  HitVector hit;
  std::vector<Vec3> points;  // one per present frame
};

namespace detail {

struct TokenBatch {
  nn::Mat<float> feats;
  std::vector<std::uint8_t> visible, present;
};

inline void append_tokens(TokenBatch& tb, const TokenSequence& seq, Eigen::Index row0) {
  for (Eigen::Index k = 0; k < seq.features.rows(); ++k) {
    tb.feats.row(row0 + k) = seq.features.row(k).cast<float>();
    tb.visible.push_back(seq.visible[static_cast<std::size_t>(k)]);
    tb.present.push_back(seq.present[static_cast<std::size_t>(k)]);
  }
}

}  // namespace detail

inline std::vector<HitFormerOutput> hitformer_forward_batch(HitFormerModel& model,
                                                            const std::vector<TokenSequence>& seqs) {
  const Eigen::Index F = model.net.max_frames;
  detail::TokenBatch tb;
  tb.feats.resize(static_cast<Eigen::Index>(seqs.size()) * F, kTokenFeatures);
  for (std::size_t b = 0; b < seqs.size(); ++b) detail::append_tokens(tb, seqs[b], static_cast<Eigen::Index>(b) * F);
  auto [hit, points] = model.net.forward(tb.feats, tb.visible, tb.present);
  std::vector<HitFormerOutput> out(seqs.size());
  for (std::size_t b = 0; b < seqs.size(); ++b) {
    const auto bi = static_cast<Eigen::Index>(b);
    const Eigen::RowVectorXd h = model.hit_stats.invert(hit.row(bi).cast<double>());
    out[b].hit = HitVector::from_array(h.transpose());
    for (Eigen::Index k = 0; k < F; ++k) {
      if (!seqs[b].present[static_cast<std::size_t>(k)]) continue;
      const Eigen::RowVectorXd p = model.point_stats.invert(points.row(bi * F + k).cast<double>());
      out[b].points.emplace_back(p[0], p[1], p[2]);
    }
  }
  return out;
}

inline HitFormerOutput hitformer_forward(HitFormerModel& model, const TokenSequence& seq) {
  return hitformer_forward_batch(model, {seq}).front();
}

/// Re-observe a stored record with fresh pixel noise and masking.
inline Observation2D augment_observation(const HitRecord& rec, double pixel_sigma, double mask_rate, Rng& rng) {
  Observation2D obs;
  obs.fps = rec.observation.fps;
  obs.camera_id = rec.observation.camera_id;
  for (std::size_t k = 0; k < rec.trajectory.points.size(); ++k) {
    ObservationFrame f;
    f.t_s = rec.trajectory.times[k];
    const double noise_u = gaussian(rng, pixel_sigma), noise_v = gaussian(rng, pixel_sigma);
    const bool masked = bernoulli(rng, mask_rate);
    const Vec3 pc = rec.camera.pose.rotation * rec.trajectory.points[k] + rec.camera.pose.translation;
    if (pc.z() > 1e-6) {
      f.pixel = project(rec.trajectory.points[k], rec.camera.intrinsics, rec.camera.pose) + Pixel(noise_u, noise_v);
      f.visible = !masked && inside_image(f.pixel, rec.camera.intrinsics);
    }
    obs.frames.push_back(f);
  }
  return obs;
}

/// Loss for one batch; fills gradients when `grads` is set.
struct HitFormerBatch {
  detail::TokenBatch tokens;
  nn::Mat<float> hit_target;    // batch x 9, normalised
  nn::Mat<float> point_target;  // batch*max_frames x 3, normalised
};

inline double hitformer_loss(HitFormerModel& model, const HitFormerBatch& batch, bool grads) {
  auto [hit, points] = model.net.forward(batch.tokens.feats, batch.tokens.visible, batch.tokens.present);
  const Eigen::Index B = hit.rows();
  std::size_t n_points = 0;
  for (auto p : batch.tokens.present) n_points += p;
  const double wh = model.cfg.hit_loss_weight / static_cast<double>(B * kHitDim);
  const double wp = n_points > 0 ? model.cfg.point_loss_weight / static_cast<double>(n_points * 3) : 0.0;
  const nn::Mat<float> dh = hit - batch.hit_target;
  nn::Mat<float> dp = points - batch.point_target;
  for (Eigen::Index r = 0; r < dp.rows(); ++r)
    if (!batch.tokens.present[static_cast<std::size_t>(r)]) dp.row(r).setZero();
  const double loss = wh * dh.cwiseAbs().cast<double>().sum() + wp * dp.cwiseAbs().cast<double>().sum();
  if (grads) {
    const nn::Mat<float> ghit = dh.unaryExpr([](float v) { return v > 0 ? 1.0f : (v < 0 ? -1.0f : 0.0f); }) *
                                static_cast<float>(wh);
    const nn::Mat<float> gpts = dp.unaryExpr([](float v) { return v > 0 ? 1.0f : (v < 0 ? -1.0f : 0.0f); }) *
                                static_cast<float>(wp);
    model.net.backward(ghit, gpts);
  }
  return loss;
}

inline HitFormerBatch make_hitformer_batch(const HitFormerModel& model, const std::vector<HitRecord>& records,
                                           const std::vector<std::size_t>& idx, std::uint64_t seed, long salt) {
  const HitFormerConfig& cfg = model.cfg;
  const Eigen::Index F = model.net.max_frames;
  HitFormerBatch batch;
  batch.tokens.feats.resize(static_cast<Eigen::Index>(idx.size()) * F, kTokenFeatures);
  batch.hit_target.resize(static_cast<Eigen::Index>(idx.size()), kHitDim);
  batch.point_target = nn::Mat<float>::Zero(static_cast<Eigen::Index>(idx.size()) * F, 3);
  for (std::size_t b = 0; b < idx.size(); ++b) {
    const HitRecord& rec = records[idx[b]];
    Rng rng = substream(seed, "hitformer-augment", static_cast<std::uint64_t>(salt) * 1000003ULL + idx[b]);
    const double sigma = uniform(rng, 0.0, cfg.pixel_sigma_max);
    const double rate = cfg.mask_rate_max > cfg.mask_rate_min ? uniform(rng, cfg.mask_rate_min, cfg.mask_rate_max)
                                                               : cfg.mask_rate_min;
    const Observation2D obs = augment_observation(rec, sigma, rate, rng);
    const TokenSequence seq = tokenize(obs, rec.camera.intrinsics, rec.camera.pose, cfg, 0);
    const auto bi = static_cast<Eigen::Index>(b);
    detail::append_tokens(batch.tokens, seq, bi * F);
    batch.hit_target.row(bi) = model.hit_stats.apply(hit_row(rec.hit)).cast<float>();
    for (std::size_t k = 0; k < rec.trajectory.points.size() && static_cast<Eigen::Index>(k) < F; ++k)
      batch.point_target.row(bi * F + static_cast<Eigen::Index>(k)) =
          model.point_stats.apply(rec.trajectory.points[k].transpose()).cast<float>();
  }
  return batch;
}

inline HitFormerModel init_hitformer(const HitFormerConfig& cfg, const std::vector<HitRecord>& records,
                                     std::uint64_t seed) {
  cfg.validate();
  if (records.empty()) throw Error(ErrorKind::Data, "hitformer: empty training set");
  HitFormerModel model;
  model.cfg = cfg;
  Rng rng = substream(seed, "hitformer-init");
  model.net = HitFormerNet<float>(cfg, rng);
  Eigen::MatrixXd hits(static_cast<Eigen::Index>(records.size()), kHitDim);
  std::size_t n_points = 0;
  for (const auto& r : records) n_points += r.trajectory.points.size();
  Eigen::MatrixXd pts(static_cast<Eigen::Index>(n_points), 3);
  Eigen::Index pi = 0;
  for (std::size_t i = 0; i < records.size(); ++i) {
    hits.row(static_cast<Eigen::Index>(i)) = hit_row(records[i].hit);
    for (const Vec3& p : records[i].trajectory.points) pts.row(pi++) = p.transpose();
  }
  model.hit_stats = Standardizer::fit(hits);
  model.point_stats = Standardizer::fit(pts);
  return model;
}

struct HitFormerTrainState {
  nn::OptimState<float> opt;
  int next_epoch = 0;
};

inline nn::OptimState<float> hitformer_optimizer(const HitFormerConfig& cfg) {
  nn::OptimState<float> opt;
  opt.weight_decay = cfg.weight_decay;
  opt.schedule.lr_main = cfg.lr;
  opt.schedule.lr_film = cfg.lr;
  opt.schedule.lr_terminal = cfg.lr_terminal;
  opt.schedule.horizon_epochs = cfg.epochs;
  return opt;
}

/// One pass over the data with fresh augmentation. Epoch e depends only on
/// (seed, e) and the model/optimiser state, which makes runs resumable.
inline double train_hitformer_epoch(HitFormerModel& model, nn::OptimState<float>& opt,
                                    const std::vector<HitRecord>& records, std::uint64_t seed, int epoch) {
  const HitFormerConfig& cfg = model.cfg;
  std::vector<std::size_t> order(records.size());
  std::iota(order.begin(), order.end(), 0);
  Rng shuffle_rng = substream(seed, "hitformer-shuffle", static_cast<std::uint64_t>(epoch));
  std::shuffle(order.begin(), order.end(), shuffle_rng);
  const nn::ParamList<float> params = model.net.params();
  const std::size_t bs = static_cast<std::size_t>(cfg.batch_size);
  const std::size_t n_batches = (order.size() + bs - 1) / bs;
  double total = 0.0;
  for (std::size_t bi = 0; bi < n_batches; ++bi) {
    const std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(bi * bs),
                                       order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), (bi + 1) * bs)));
    const HitFormerBatch batch = make_hitformer_batch(model, records, idx, seed, epoch);
    nn::zero_grads(params);
    const double loss = hitformer_loss(model, batch, true);
    if (!std::isfinite(loss)) throw Error(ErrorKind::Numeric, "hitformer: non-finite training loss");
    nn::adamw_step(params, opt, static_cast<double>(epoch) + static_cast<double>(bi) / static_cast<double>(n_batches));
    total += loss * static_cast<double>(idx.size());
  }
  const double mean = total / static_cast<double>(records.size());
  model.loss_curve.push_back(mean);
  return mean;
}

using EpochCallback = std::function<void(int epoch, double loss)>;

inline HitFormerModel train_hitformer(const std::vector<HitRecord>& records, const HitFormerConfig& cfg,
                                      std::uint64_t seed, const EpochCallback& on_epoch = {}) {
  HitFormerModel model = init_hitformer(cfg, records, seed);
  nn::OptimState<float> opt = hitformer_optimizer(cfg);
  for (int e = 0; e < cfg.epochs; ++e) {
    const double loss = train_hitformer_epoch(model, opt, records, seed, e);
    if (on_epoch) on_epoch(e, loss);
  }
  return model;
}

// ---------------------------------------------------------------------------
// Refinement

struct RecoveryThresholds {
  double trigger_px = 3.0;
  double accept_px = 8.0;
};

namespace detail {

inline std::vector<std::size_t> visible_indices(const Observation2D& obs) {
  std::vector<std::size_t> idx;
  for (std::size_t k = 0; k < obs.frames.size(); ++k)
    if (obs.frames[k].visible) idx.push_back(k);
  return idx;
}

inline SimulationOptions refinement_sim_options(const Observation2D& obs) {
  SimulationOptions sim;
  double last = 0.0;
  for (const auto& f : obs.frames) last = std::max(last, f.t_s);
  sim.horizon_s = last + 2.0 * sim.dt_s;
  return sim;
}

// Pixel residuals (u, v per visible frame), or nullopt if a point falls
// behind the camera.
inline std::optional<Eigen::VectorXd> reprojection_residuals(const HitVector& hit, const Observation2D& obs,
                                                             const std::vector<std::size_t>& vis,
                                                             const Camera& cam, const PhysParams& p,
                                                             const TableGeometry& table, const SimulationOptions& sim) {
  const Trajectory traj = simulate(hit, p, table, sim);
  Eigen::VectorXd r(2 * static_cast<Eigen::Index>(vis.size()));
  for (std::size_t i = 0; i < vis.size(); ++i) {
    const ObservationFrame& f = obs.frames[vis[i]];
    const Vec3 x = state_at(traj, f.t_s, p).pos_m;
    const Vec3 pc = cam.pose.rotation * x + cam.pose.translation;
    if (!(pc.z() > 1e-6)) return std::nullopt;
    const Pixel px = project(x, cam.intrinsics, cam.pose);
    r.segment<2>(2 * static_cast<Eigen::Index>(i)) = px - f.pixel;
  }
  return r;
}

inline double mean_pixel_error(const Eigen::VectorXd& r) {
  if (r.size() == 0) return 0.0;
  double sum = 0.0;
  for (Eigen::Index i = 0; i < r.size(); i += 2) sum += std::hypot(r[i], r[i + 1]);
  return sum / static_cast<double>(r.size() / 2);
}

inline HitVector clamp_to_valid(HitVector h, const TableGeometry& table, const PhysParams& p) {
  h.pos_m.z() = std::max(h.pos_m.z(), table.floor_z() + p.radius_m + 1e-3);
  return h;
}

}  // namespace detail

/// Mean pixel distance between the simulated-then-projected hit and the
/// visible observed frames; +inf if the hit cannot be evaluated.
inline double reprojection_error(const HitVector& hit, const Observation2D& obs, const Camera& cam,
                                 const PhysParams& p, const TableGeometry& table = {}) {
  const auto vis = detail::visible_indices(obs);
  try {
    const auto r = detail::reprojection_residuals(hit, obs, vis, cam, p, table, detail::refinement_sim_options(obs));
    return r ? detail::mean_pixel_error(*r) : std::numeric_limits<double>::infinity();
  } catch (const Error&) {
    return std::numeric_limits<double>::infinity();
  }
}

struct RefineResult {
  HitVector hit;
  double initial_error_px = 0.0;
  double reproj_error_px = 0.0;
  int iterations = 0;
  StopReason reason = StopReason::MaxIterations;
};

/// Damped least squares over the 9 hit parameters on the pixel residuals.
/// Never returns a hit with larger mean pixel error than hit0.
inline RefineResult refine_hit(const HitVector& hit0, const Observation2D& obs, const Camera& cam,
                               const PhysParams& p, const TableGeometry& table = {},
                               const LeastSquaresOptions& opt = {}) {
  if (!hit0.finite()) throw Error(ErrorKind::InvalidInput, "refine_hit: initial hit is not finite");
  const auto vis = detail::visible_indices(obs);
  if (vis.size() < 3) throw Error(ErrorKind::RecoveryInfeasible, "refine_hit: fewer than 3 visible frames");
  const SimulationOptions sim = detail::refinement_sim_options(obs);
  auto residuals = [&](const Eigen::VectorXd& x) -> std::optional<Eigen::VectorXd> {
    const HitVector h = HitVector::from_array(x);
    return detail::reprojection_residuals(h, obs, vis, cam, p, table, sim);
  };
  RefineResult out;
  out.hit = hit0;
  out.initial_error_px = reprojection_error(hit0, obs, cam, p, table);
  out.reproj_error_px = out.initial_error_px;
  if (!std::isfinite(out.initial_error_px)) return out;

  Eigen::VectorXd typical(kHitDim);
  typical << 1.0, 1.0, 1.0, 10.0, 10.0, 10.0, 100.0, 100.0, 100.0;
  const LeastSquaresResult ls = least_squares(residuals, hit0.to_array(), typical, opt);
  out.iterations = ls.iterations;
  out.reason = ls.reason;
  const HitVector refined = HitVector::from_array(ls.x);
  const double err = reprojection_error(refined, obs, cam, p, table);
  if (err <= out.initial_error_px) {
    out.hit = refined;
    out.reproj_error_px = err;
  }
  return out;
}

struct RecoveryResult {
  HitVector hit;
  HitVector network_hit;
  std::vector<Vec3> refined_points_3d;  // at the observation frame times
  double network_error_px = 0.0;
  double reproj_error_px = 0.0;
  bool refined = false;
  bool accepted = false;
};

/// Network estimate, refined when its reprojection error exceeds the trigger.
inline RecoveryResult recover_from_estimate(const HitVector& estimate, const Observation2D& obs, const Camera& cam,
                                            const PhysParams& p, const TableGeometry& table,
                                            const RecoveryThresholds& th, const LeastSquaresOptions& lso = {}) {
  RecoveryResult res;
  res.network_hit = detail::clamp_to_valid(estimate, table, p);
  res.hit = res.network_hit;
  res.network_error_px = reprojection_error(res.hit, obs, cam, p, table);
  res.reproj_error_px = res.network_error_px;
  if (!(res.network_error_px <= th.trigger_px)) {
    if (std::isfinite(res.network_error_px)) {
      const RefineResult rr = refine_hit(res.hit, obs, cam, p, table, lso);
      res.hit = rr.hit;
      res.reproj_error_px = rr.reproj_error_px;
    }
    res.refined = true;
  }
  res.accepted = res.reproj_error_px <= th.accept_px;
  const Trajectory traj = simulate(res.hit, p, table, detail::refinement_sim_options(obs));
  for (const auto& f : obs.frames) res.refined_points_3d.push_back(state_at(traj, f.t_s, p).pos_m);
  return res;
}

inline RecoveryResult recover_hit(const Observation2D& obs, const Camera& cam, HitFormerModel& model,
                                  const PhysParams& p, const TableGeometry& table = {},
                                  const RecoveryThresholds& th = {}) {
  const TokenSequence seq = tokenize(obs, cam.intrinsics, cam.pose, model.cfg);
  const HitFormerOutput net = hitformer_forward(model, seq);
  return recover_from_estimate(net.hit, obs, cam, p, table, th);
}

/// Batched recovery: one network pass per chunk, refinement in parallel.
inline std::vector<RecoveryResult> recover_batch(const std::vector<Observation2D>& observations,
                                                 const std::vector<Camera>& cams, HitFormerModel& model,
                                                 const PhysParams& p, const TableGeometry& table,
                                                 const RecoveryThresholds& th, int jobs = 1) {
  if (observations.size() != cams.size()) throw Error(ErrorKind::InvalidInput, "recover_batch: size mismatch");
  std::vector<TokenSequence> seqs;
  for (std::size_t i = 0; i < observations.size(); ++i)
    seqs.push_back(tokenize(observations[i], cams[i].intrinsics, cams[i].pose, model.cfg));
  std::vector<HitVector> estimates;
  for (std::size_t start = 0; start < seqs.size(); start += 256) {
    const std::vector<TokenSequence> chunk(seqs.begin() + static_cast<std::ptrdiff_t>(start),
                                           seqs.begin() + static_cast<std::ptrdiff_t>(std::min(seqs.size(), start + 256)));
    for (auto& o : hitformer_forward_batch(model, chunk)) estimates.push_back(o.hit);
  }
  std::vector<RecoveryResult> out(observations.size());
  parallel_for(out.size(), jobs, [&](std::size_t i) {
    out[i] = recover_from_estimate(estimates[i], observations[i], cams[i], p, table, th);
  });
  return out;
}

/// Mean Euclidean distance between two point sequences.
inline double trajectory_mae(const std::vector<Vec3>& a, const std::vector<Vec3>& b) {
  const std::size_t n = std::min(a.size(), b.size());
  if (n == 0) return 0.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) sum += (a[i] - b[i]).norm();
  return sum / static_cast<double>(n);
}

// ---------------------------------------------------------------------------
// Checkpointing

inline nn::BlobMap hitformer_blobs(HitFormerModel& model) {
  nn::BlobMap blobs;
  nn::store_params(model.net.params(), blobs);
  blobs["stats.hit_mean"] = model.hit_stats.mean;
  blobs["stats.hit_std"] = model.hit_stats.stddev;
  blobs["stats.point_mean"] = model.point_stats.mean;
  blobs["stats.point_std"] = model.point_stats.stddev;
  if (!model.loss_curve.empty())
    blobs["train.loss_curve"] = Eigen::Map<const nn::Blob>(model.loss_curve.data(), 1,
                                                           static_cast<Eigen::Index>(model.loss_curve.size()));
  return blobs;
}

inline void load_hitformer_blobs(HitFormerModel& model, const nn::BlobMap& blobs) {
  nn::load_params(model.net.params(), blobs);
  auto get = [&](const std::string& k) -> Eigen::RowVectorXd {
    const auto it = blobs.find(k);
    if (it == blobs.end()) throw Error(ErrorKind::Data, "checkpoint lacks '" + k + "'");
    return it->second.row(0);
  };
  model.hit_stats.mean = get("stats.hit_mean");
  model.hit_stats.stddev = get("stats.hit_std");
  model.point_stats.mean = get("stats.point_mean");
  model.point_stats.stddev = get("stats.point_std");
  model.loss_curve.clear();
  if (const auto it = blobs.find("train.loss_curve"); it != blobs.end())
    model.loss_curve.assign(it->second.data(), it->second.data() + it->second.size());
}

template <typename T>
void store_optimizer(const nn::OptimState<T>& opt, nn::BlobMap& blobs) {
  for (const auto& [name, m] : opt.m) blobs["opt.m." + name] = m.template cast<double>();
  for (const auto& [name, v] : opt.v) blobs["opt.v." + name] = v.template cast<double>();
  nn::Blob step(1, 1);
  step(0, 0) = static_cast<double>(opt.step);
  blobs["opt.step"] = step;
}

template <typename T>
void load_optimizer(nn::OptimState<T>& opt, const nn::BlobMap& blobs) {
  opt.m.clear();
  opt.v.clear();
  for (const auto& [name, b] : blobs) {
    if (name.rfind("opt.m.", 0) == 0) opt.m[name.substr(6)] = b.template cast<T>();
    else if (name.rfind("opt.v.", 0) == 0) opt.v[name.substr(6)] = b.template cast<T>();
  }
  if (const auto it = blobs.find("opt.step"); it != blobs.end()) opt.step = static_cast<long>(it->second(0, 0));
}

}  // namespace hitspace
