#pragma once

// Skill read-out from player embeddings: energy score, RankNet-trained
// SkillNet with leave-one-out and leave-two-out protocols, linear probing
// with MCC, and Spearman correlation.

#include "hitspace/core.hpp"
#include "hitspace/nn.hpp"
#include "hitspace/parallel.hpp"
#include "hitspace/physics.hpp"

#include <boost/math/distributions/students_t.hpp>

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <numeric>
#include <vector>

namespace hitspace {

// ---------------------------------------------------------------------------
// Energy score

/// Mean absolute difference over all coordinates.
inline double mae_distance(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  if (a.size() != b.size()) throw Error(ErrorKind::InvalidInput, "distance: size mismatch");
  if (a.size() == 0) return 0.0;
  return (a - b).cwiseAbs().mean();
}

using Distance = std::function<double(const Eigen::VectorXd&, const Eigen::VectorXd&)>;

/// mean_i d(x_i, y) - 1/(2 n^2) sum_ij d(x_i, x_j), self pairs included.
inline double energy_score(const std::vector<Eigen::VectorXd>& samples, const Eigen::VectorXd& y,
                           const Distance& d = mae_distance) {
  if (samples.empty()) throw Error(ErrorKind::InvalidInput, "energy_score: empty sample set");
  const double n = static_cast<double>(samples.size());
  double first = 0.0;
  for (const auto& x : samples) first += d(x, y);
  double second = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i)
    for (std::size_t j = i + 1; j < samples.size(); ++j) second += 2.0 * d(samples[i], samples[j]);
  return first / n - second / (2.0 * n * n);
}

/// Ball positions at `fps` over [0, horizon_s], zero after the trajectory
/// terminates, flattened to one vector.
inline Eigen::VectorXd trajectory_signature(const HitVector& hit, const PhysParams& p, const TableGeometry& table,
                                            double fps = 30.0, double horizon_s = 1.0) {
  SimulationOptions sim;
  sim.horizon_s = horizon_s + sim.dt_s;
  const auto n = static_cast<Eigen::Index>(std::floor(horizon_s * fps + 1e-9)) + 1;
  Eigen::VectorXd out = Eigen::VectorXd::Zero(3 * n);
  Trajectory traj;
  try {
    traj = simulate(hit, p, table, sim);
  } catch (const Error&) {
    return out;
  }
  const bool terminated = terminated_before(traj, horizon_s + sim.dt_s);
  for (Eigen::Index k = 0; k < n; ++k) {
    const double t = static_cast<double>(k) / fps;
    if (terminated && t > traj.end_time()) break;
    out.segment<3>(3 * k) = state_at(traj, t, p).pos_m;
  }
  return out;
}

inline double energy_score_hits(const std::vector<HitVector>& samples, const HitVector& y, const PhysParams& p,
                                const TableGeometry& table) {
  std::vector<Eigen::VectorXd> sig;
  sig.reserve(samples.size());
  for (const auto& s : samples) sig.push_back(trajectory_signature(s, p, table));
  return energy_score(sig, trajectory_signature(y, p, table));
}

// ---------------------------------------------------------------------------
// Statistics

/// softplus(-(s_i - s_j)): loss for the preference i over j.
inline double ranknet_loss(double s_i, double s_j) {
  const double z = -(s_i - s_j);
  return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z)));
}

/// d loss / d s_i (the derivative w.r.t. s_j is the negative).
inline double ranknet_grad(double s_i, double s_j) {
  const double z = s_i - s_j;
  return -1.0 / (1.0 + std::exp(z));
}

inline double mcc(double tp, double tn, double fp, double fn) {
  if (tp < 0 || tn < 0 || fp < 0 || fn < 0) throw Error(ErrorKind::InvalidInput, "mcc: negative count");
  const double den = (tp + fp) * (tp + fn) * (tn + fp) * (tn + fn);
  if (den == 0.0) return 0.0;
  return (tp * tn - fp * fn) / std::sqrt(den);
}

/// Ranks starting at 1 with ties sharing their average rank.
inline std::vector<double> average_ranks(const std::vector<double>& v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) r[idx[k]] = avg;
    i = j + 1;
  }
  return r;
}

inline double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  if (saa == 0.0 || sbb == 0.0) return 0.0;
  return sab / std::sqrt(saa * sbb);
}

struct Correlation {
  double rho = 0.0;
  double p = 1.0;
};

inline constexpr std::size_t kExactPermutationMaxN = 10;

/// Two-sided p-value: exact permutation for N <= 10, Student t with N-2
/// degrees of freedom otherwise.
inline Correlation spearman(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw Error(ErrorKind::InvalidInput, "spearman: length mismatch");
  if (a.size() < 3) throw Error(ErrorKind::InvalidInput, "spearman: need at least 3 observations");
  const std::vector<double> ra = average_ranks(a), rb = average_ranks(b);
  Correlation c;
  c.rho = pearson(ra, rb);
  const std::size_t n = a.size();
  if (n <= kExactPermutationMaxN) {
    std::vector<double> perm = rb;
    std::sort(perm.begin(), perm.end());
    long hits = 0, total = 0;
    do {
      ++total;
      if (std::abs(pearson(ra, perm)) >= std::abs(c.rho) - 1e-12) ++hits;
    } while (std::next_permutation(perm.begin(), perm.end()));
    c.p = static_cast<double>(hits) / static_cast<double>(total);
  } else {
    const double df = static_cast<double>(n) - 2.0;
    if (std::abs(c.rho) >= 1.0) {
      c.p = 0.0;
    } else {
      const double t = c.rho * std::sqrt(df / (1.0 - c.rho * c.rho));
      boost::math::students_t dist(df);
      c.p = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t)));
    }
  }
  return c;
}

inline Correlation spearman(const std::vector<int>& a, const std::vector<int>& b) {
  return spearman(std::vector<double>(a.begin(), a.end()), std::vector<double>(b.begin(), b.end()));
}

struct PairedTest {
  double mean_difference = 0.0;
  double t = 0.0;
  double p_one_sided = 1.0;  // H1: mean(a - b) < 0
};

/// One-sided paired t-test that a is smaller than b.
inline PairedTest paired_t_less(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size() || a.size() < 2) throw Error(ErrorKind::InvalidInput, "paired test: need >= 2 pairs");
  const double n = static_cast<double>(a.size());
  std::vector<double> d(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) d[i] = a[i] - b[i];
  const double mean = std::accumulate(d.begin(), d.end(), 0.0) / n;
  double var = 0.0;
  for (double x : d) var += (x - mean) * (x - mean);
  var /= (n - 1.0);
  PairedTest out;
  out.mean_difference = mean;
  if (var == 0.0) {
    out.t = mean < 0 ? -std::numeric_limits<double>::infinity() : std::numeric_limits<double>::infinity();
    out.p_one_sided = mean < 0 ? 0.0 : 1.0;
    return out;
  }
  out.t = mean / std::sqrt(var / n);
  boost::math::students_t dist(n - 1.0);
  out.p_one_sided = boost::math::cdf(dist, out.t);
  return out;
}

// ---------------------------------------------------------------------------
// SkillNet

struct SkillNetConfig {
  std::vector<int> hidden = {16};
  int epochs = 400;
  double lr = 1e-2;
  double weight_decay = 1e-3;
  // Z-score inputs with statistics of the training embeddings.
  bool standardize = true;

  void validate() const {
    for (int h : hidden)
      if (h < 1) throw Error(ErrorKind::Config, "skillnet: hidden widths must be >= 1");
    if (epochs < 1) throw Error(ErrorKind::Config, "skillnet: epochs must be >= 1");
    if (!(lr > 0.0)) throw Error(ErrorKind::Config, "skillnet: lr must be > 0");
    if (!(weight_decay >= 0.0)) throw Error(ErrorKind::Config, "skillnet: weight_decay must be >= 0");
  }
};

struct RankLabel {
  int winner_id = 0;  // winner is the more skilled player
  int loser_id = 0;
};

/// Scorer shared by both members of a pair: dense layers with tanh, then a
/// scalar output.
struct SkillNet {
  std::vector<nn::Dense<double>> layers;
  std::vector<nn::Mat<double>> acts_;
  Eigen::RowVectorXd mean, scale;

  nn::ParamList<double> params() {
    nn::ParamList<double> out;
    for (auto& l : layers) l.params(out);
    return out;
  }

  nn::Mat<double> forward(const nn::Mat<double>& x_raw) {
    nn::Mat<double> h = (x_raw.rowwise() - mean).array().rowwise() / scale.array();
    acts_.clear();
    for (std::size_t i = 0; i < layers.size(); ++i) {
      h = layers[i].forward(h);
      if (i + 1 < layers.size()) {
        h = h.array().tanh().matrix();
        acts_.push_back(h);
      }
    }
    return h;
  }

  void backward(const nn::Mat<double>& dout) {
    nn::Mat<double> d = dout;
    for (std::size_t i = layers.size(); i-- > 0;) {
      if (i + 1 < layers.size()) d = d.cwiseProduct((1.0 - acts_[i].array().square()).matrix());
      d = layers[i].backward(d);
    }
  }

  std::vector<double> score(const Eigen::MatrixXd& embeddings) {
    const nn::Mat<double> s = forward(embeddings);
    return std::vector<double>(s.data(), s.data() + s.size());
  }
};

inline std::vector<RankLabel> labels_from_ranks(const std::vector<int>& ids, const std::vector<int>& true_ranks) {
  std::vector<RankLabel> out;
  for (std::size_t a = 0; a < ids.size(); ++a)
    for (std::size_t b = a + 1; b < ids.size(); ++b) {
      const int ra = true_ranks[static_cast<std::size_t>(ids[a])], rb = true_ranks[static_cast<std::size_t>(ids[b])];
      if (ra == rb) continue;
      out.push_back(ra < rb ? RankLabel{ids[a], ids[b]} : RankLabel{ids[b], ids[a]});
    }
  return out;
}

/// Full-batch Adam on the mean RankNet loss over all labels. Rows of
/// `embeddings` are indexed by player id.
inline SkillNet train_skillnet(const Eigen::MatrixXd& embeddings, const std::vector<RankLabel>& labels,
                               const SkillNetConfig& cfg, std::uint64_t seed,
                               std::vector<double>* loss_curve = nullptr) {
  cfg.validate();
  const auto n = static_cast<int>(embeddings.rows());
  std::vector<int> used;
  for (const auto& l : labels) {
    if (l.winner_id == l.loser_id) throw Error(ErrorKind::InvalidInput, "rank label with identical ids");
    for (int id : {l.winner_id, l.loser_id}) {
      if (id < 0 || id >= n) throw Error(ErrorKind::InvalidInput, "rank label references unknown id " + std::to_string(id));
      used.push_back(id);
    }
  }
  std::sort(used.begin(), used.end());
  used.erase(std::unique(used.begin(), used.end()), used.end());

  Rng rng = substream(seed, "skillnet-init");
  SkillNet net;
  Eigen::Index in = embeddings.cols();
  for (std::size_t i = 0; i < cfg.hidden.size(); ++i) {
    net.layers.emplace_back("skill.fc" + std::to_string(i), in, cfg.hidden[i], rng);
    in = cfg.hidden[i];
  }
  net.layers.emplace_back("skill.out", in, 1, rng);

  net.mean = Eigen::RowVectorXd::Zero(embeddings.cols());
  net.scale = Eigen::RowVectorXd::Ones(embeddings.cols());
  if (cfg.standardize && !used.empty()) {
    Eigen::MatrixXd sub(static_cast<Eigen::Index>(used.size()), embeddings.cols());
    for (std::size_t i = 0; i < used.size(); ++i) sub.row(static_cast<Eigen::Index>(i)) = embeddings.row(used[i]);
    net.mean = sub.colwise().mean();
    net.scale = ((sub.rowwise() - net.mean).array().square().colwise().mean()).sqrt().matrix();
    for (Eigen::Index j = 0; j < net.scale.size(); ++j)
      if (!(net.scale[j] > 1e-12)) net.scale[j] = 1.0;
  }
  if (labels.empty()) return net;

  nn::OptimState<double> opt;
  opt.weight_decay = cfg.weight_decay;
  opt.schedule.lr_main = cfg.lr;
  opt.schedule.lr_film = cfg.lr;
  opt.schedule.lr_terminal = cfg.lr;  // constant rate
  opt.schedule.horizon_epochs = cfg.epochs;
  const nn::ParamList<double> params = net.params();
  nn::Mat<double> x = embeddings;
  for (int e = 0; e < cfg.epochs; ++e) {
    nn::zero_grads(params);
    const nn::Mat<double> s = net.forward(x);
    nn::Mat<double> ds = nn::Mat<double>::Zero(s.rows(), 1);
    if (loss_curve) {
      double sum = 0.0;
      for (const auto& l : labels) sum += ranknet_loss(s(l.winner_id, 0), s(l.loser_id, 0));
      loss_curve->push_back(sum / static_cast<double>(labels.size()));
    }
    for (const auto& l : labels) {
      const double g = ranknet_grad(s(l.winner_id, 0), s(l.loser_id, 0)) / static_cast<double>(labels.size());
      ds(l.winner_id, 0) += g;
      ds(l.loser_id, 0) -= g;
    }
    net.backward(ds);
    nn::adamw_step(params, opt, e);
  }
  return net;
}

inline double skillnet_loss(SkillNet& net, const Eigen::MatrixXd& embeddings, const std::vector<RankLabel>& labels) {
  const std::vector<double> s = net.score(embeddings);
  double sum = 0.0;
  for (const auto& l : labels) sum += ranknet_loss(s[static_cast<std::size_t>(l.winner_id)], s[static_cast<std::size_t>(l.loser_id)]);
  return labels.empty() ? 0.0 : sum / static_cast<double>(labels.size());
}

struct KnownGroupResult {
  std::vector<int> predicted_ranks;  // by player id
  Correlation correlation;
  // Set when some held-out scores tie with the group they are inserted
  // into; ranks then use the optimistic (shared) position.
  bool degenerate_ties = false;
};

/// Leave-one-out: fit on N-1 players, insert the held-out player's score
/// among theirs to get its rank.
inline KnownGroupResult rank_known_group(const Eigen::MatrixXd& embeddings, const std::vector<int>& true_ranks,
                                         const SkillNetConfig& cfg, std::uint64_t seed, int jobs = 1) {
  const int n = static_cast<int>(embeddings.rows());
  if (n < 4) throw Error(ErrorKind::InvalidInput, "rank_known_group: need N >= 4");
  if (static_cast<int>(true_ranks.size()) != n) throw Error(ErrorKind::InvalidInput, "rank_known_group: rank count");
  KnownGroupResult res;
  res.predicted_ranks.assign(static_cast<std::size_t>(n), 0);
  std::vector<std::uint8_t> tie(static_cast<std::size_t>(n), 0);
  parallel_for(static_cast<std::size_t>(n), jobs, [&](std::size_t held) {
    std::vector<int> ids;
    for (int i = 0; i < n; ++i)
      if (i != static_cast<int>(held)) ids.push_back(i);
    SkillNet net = train_skillnet(embeddings, labels_from_ranks(ids, true_ranks), cfg, substream_seed(seed, "loo", held));
    const std::vector<double> s = net.score(embeddings);
    int above = 0;
    for (int i : ids) {
      if (s[static_cast<std::size_t>(i)] > s[held]) ++above;
      if (std::abs(s[static_cast<std::size_t>(i)] - s[held]) <= 1e-12 * std::max(1.0, std::abs(s[held]))) tie[held] = 1;
    }
    res.predicted_ranks[held] = 1 + above;
  });
  res.degenerate_ties = std::any_of(tie.begin(), tie.end(), [](std::uint8_t t) { return t != 0; });
  res.correlation = spearman(res.predicted_ranks, true_ranks);
  return res;
}

struct PairOutcome {
  int a = 0, b = 0;
  int gap = 0;
  bool correct = false;
};

struct UnknownPairsResult {
  double accuracy = 0.0;
  std::map<int, std::pair<int, int>> by_gap;  // gap -> (correct, total)
  int gap_threshold = 0;
  double accuracy_small_gap = 0.0;  // gap <= threshold
  double accuracy_large_gap = 0.0;  // gap > threshold
  std::vector<PairOutcome> pairs;
};

/// Leave-two-out over all C(N,2) pairs.
inline UnknownPairsResult rank_unknown_pairs(const Eigen::MatrixXd& embeddings, const std::vector<int>& true_ranks,
                                             const SkillNetConfig& cfg, std::uint64_t seed, int gap_threshold = -1,
                                             int jobs = 1) {
  const int n = static_cast<int>(embeddings.rows());
  if (n < 4) throw Error(ErrorKind::InvalidInput, "rank_unknown_pairs: need N >= 4");
  if (static_cast<int>(true_ranks.size()) != n) throw Error(ErrorKind::InvalidInput, "rank_unknown_pairs: rank count");
  std::vector<std::pair<int, int>> pairs;
  for (int a = 0; a < n; ++a)
    for (int b = a + 1; b < n; ++b) pairs.emplace_back(a, b);
  UnknownPairsResult res;
  res.gap_threshold = gap_threshold >= 0 ? gap_threshold : n / 3;
  res.pairs.resize(pairs.size());
  parallel_for(pairs.size(), jobs, [&](std::size_t k) {
    const auto [a, b] = pairs[k];
    std::vector<int> ids;
    for (int i = 0; i < n; ++i)
      if (i != a && i != b) ids.push_back(i);
    SkillNet net = train_skillnet(embeddings, labels_from_ranks(ids, true_ranks), cfg, substream_seed(seed, "l2o", k));
    const std::vector<double> s = net.score(embeddings);
    const int ra = true_ranks[static_cast<std::size_t>(a)], rb = true_ranks[static_cast<std::size_t>(b)];
    PairOutcome o;
    o.a = a;
    o.b = b;
    o.gap = std::abs(ra - rb);
    o.correct = (s[static_cast<std::size_t>(a)] > s[static_cast<std::size_t>(b)]) == (ra < rb) &&
                s[static_cast<std::size_t>(a)] != s[static_cast<std::size_t>(b)];
    res.pairs[k] = o;
  });
  int correct = 0, small_c = 0, small_n = 0, large_c = 0, large_n = 0;
  for (const auto& o : res.pairs) {
    correct += o.correct;
    auto& g = res.by_gap[o.gap];
    g.first += o.correct;
    g.second += 1;
    if (o.gap <= res.gap_threshold) {
      small_c += o.correct;
      ++small_n;
    } else {
      large_c += o.correct;
      ++large_n;
    }
  }
  res.accuracy = static_cast<double>(correct) / static_cast<double>(res.pairs.size());
  res.accuracy_small_gap = small_n ? static_cast<double>(small_c) / small_n : 0.0;
  res.accuracy_large_gap = large_n ? static_cast<double>(large_c) / large_n : 0.0;
  return res;
}

// ---------------------------------------------------------------------------
// Linear probe

struct LinearProbeConfig {
  double l2 = 1.0;
  int resamples = 200;
  int newton_iterations = 50;
};

/// L2-regularised logistic regression by Newton's method on standardised
/// features; returns weights with the bias last.
inline Eigen::VectorXd fit_logistic(const Eigen::MatrixXd& x, const std::vector<int>& y, double l2, int iterations) {
  const Eigen::Index n = x.rows(), d = x.cols();
  Eigen::MatrixXd xa(n, d + 1);
  xa << x, Eigen::VectorXd::Ones(n);
  Eigen::VectorXd w = Eigen::VectorXd::Zero(d + 1);
  Eigen::VectorXd reg = Eigen::VectorXd::Constant(d + 1, l2);
  reg[d] = 1e-8;
  for (int it = 0; it < iterations; ++it) {
    const Eigen::VectorXd z = xa * w;
    Eigen::VectorXd p(n), g = reg.cwiseProduct(w);
    Eigen::MatrixXd h = reg.asDiagonal();
    for (Eigen::Index i = 0; i < n; ++i) {
      p[i] = 1.0 / (1.0 + std::exp(-z[i]));
      g += (p[i] - y[static_cast<std::size_t>(i)]) * xa.row(i).transpose();
      h += p[i] * (1.0 - p[i]) * xa.row(i).transpose() * xa.row(i);
    }
    const Eigen::VectorXd step = h.ldlt().solve(g);
    w -= step;
    if (step.norm() < 1e-10) break;
  }
  return w;
}

/// Mean test-set MCC over resampled labeled subsets containing both classes.
inline double linear_probe(const Eigen::MatrixXd& embeddings, const std::vector<int>& labels, int n_labeled,
                           std::uint64_t seed, const LinearProbeConfig& cfg = {}) {
  const int n = static_cast<int>(embeddings.rows());
  if (static_cast<int>(labels.size()) != n) throw Error(ErrorKind::InvalidInput, "linear_probe: label count");
  if (n_labeled < 2 || n_labeled > n) throw Error(ErrorKind::InvalidInput, "linear_probe: need 2 <= n_labeled <= N");
  int positives = 0;
  for (int l : labels) {
    if (l != 0 && l != 1) throw Error(ErrorKind::InvalidInput, "linear_probe: labels must be 0/1");
    positives += l;
  }
  if (positives == 0 || positives == n) throw Error(ErrorKind::InvalidInput, "linear_probe: only one class present");
  Rng rng = substream(seed, "probe");
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  double total = 0.0;
  int done = 0;
  for (int attempt = 0; done < cfg.resamples && attempt < cfg.resamples * 100; ++attempt) {
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<int> train(order.begin(), order.begin() + n_labeled), test(order.begin() + n_labeled, order.end());
    std::vector<int> ytr;
    for (int i : train) ytr.push_back(labels[static_cast<std::size_t>(i)]);
    const int pos = std::accumulate(ytr.begin(), ytr.end(), 0);
    if (pos == 0 || pos == n_labeled) continue;
    Eigen::MatrixXd xtr(n_labeled, embeddings.cols());
    for (int i = 0; i < n_labeled; ++i) xtr.row(i) = embeddings.row(train[static_cast<std::size_t>(i)]);
    const Eigen::RowVectorXd mu = xtr.colwise().mean();
    Eigen::RowVectorXd sd = ((xtr.rowwise() - mu).array().square().colwise().mean()).sqrt().matrix();
    for (Eigen::Index j = 0; j < sd.size(); ++j)
      if (!(sd[j] > 1e-12)) sd[j] = 1.0;
    const Eigen::MatrixXd xs = (xtr.rowwise() - mu).array().rowwise() / sd.array();
    const Eigen::VectorXd w = fit_logistic(xs, ytr, cfg.l2, cfg.newton_iterations);
    double tp = 0, tn = 0, fp = 0, fn = 0;
    for (int i : test) {
      const Eigen::RowVectorXd xi = (embeddings.row(i) - mu).array() / sd.array();
      const double z = xi.dot(w.head(w.size() - 1)) + w[w.size() - 1];
      const int pred = z > 0.0 ? 1 : 0;
      const int truth = labels[static_cast<std::size_t>(i)];
      if (pred == 1 && truth == 1) ++tp;
      else if (pred == 0 && truth == 0) ++tn;
      else if (pred == 1) ++fp;
      else ++fn;
    }
    total += test.empty() ? 0.0 : mcc(tp, tn, fp, fn);
    ++done;
  }
  if (done == 0) throw Error(ErrorKind::Estimation, "linear_probe: no labeled subset contained both classes");
  return total / done;
}

}  // namespace hitspace
