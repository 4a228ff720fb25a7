#pragma once

// Command implementations behind the command-line driver. Each command reads
// its inputs, writes artifacts atomically and finishes with a manifest, so an
// output directory without a manifest is known to be incomplete.

#include "hitspace/config.hpp"
#include "hitspace/io.hpp"
#include "hitspace/skill.hpp"

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace hitspace {

inline constexpr const char* kConfigEnvVar = "HITSPACE_CONFIG";

struct CommonOptions {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out = ".";
  int jobs = 1;
};

/// Config precedence: --config, then the environment variable, then the
/// built-in defaults. --seed overrides the file's seed.
inline ExperimentConfig resolve_config(const CommonOptions& o) {
  std::string path = o.config_path;
  if (path.empty())
    if (const char* env = std::getenv(kConfigEnvVar); env && *env) path = env;
  ExperimentConfig cfg = path.empty() ? ExperimentConfig{} : load_config(path);
  if (o.seed) cfg.seed = *o.seed;
  if (o.jobs < 1) throw Error(ErrorKind::Config, "--jobs must be >= 1");
  return cfg;
}

inline ArtifactStamp stamp_for(const ExperimentConfig& cfg, const std::string& kind) {
  return {config_hash(cfg), cfg.seed, kind};
}

namespace detail {

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

inline std::string join(const std::string& dir, const std::string& name) { return (fs::path(dir) / name).string(); }

inline double median(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

inline void finish(const std::string& out, const ArtifactStamp& stamp, std::vector<std::string> files,
                   const Stopwatch& sw) {
  RunManifest m{stamp, std::move(files)};
  const std::string path = m.write(out);
  write_timing(out, stamp.kind, sw.seconds());
  std::cerr << stamp.kind << ": wrote " << path << " (" << sw.seconds() << " s)\n";
}

}  // namespace detail

// ---------------------------------------------------------------------------
// synthhit

struct SynthHitOptions {
  std::string kind = "shots";  // shots | match
  std::optional<int> n_records;
  std::optional<int> players;
  std::optional<int> rallies;
};

inline void cmd_synthhit(const CommonOptions& common, const SynthHitOptions& o) {
  detail::Stopwatch sw;
  ExperimentConfig cfg = resolve_config(common);
  if (o.n_records) cfg.synthhit.n_records = static_cast<std::size_t>(*o.n_records);
  if (o.players) cfg.match.players = *o.players;
  if (o.rallies) cfg.match.rallies = *o.rallies;
  cfg.validate();
  ensure_dir(common.out);
  if (o.kind == "shots") {
    const ArtifactStamp stamp = stamp_for(cfg, "synthhit-shots");
    const SynthHitDataset ds = generate_synthhit(cfg.synthhit, cfg.physics, cfg.table, cfg.seed, common.jobs);
    std::vector<Json> rows;
    rows.reserve(ds.records.size());
    for (std::size_t i = 0; i < ds.records.size(); ++i) rows.push_back(record_json(ds.records[i], i));
    write_text_atomic(detail::join(common.out, "synthhit.ndjson"), ndjson_with_header(stamp, rows));
    Json per_type = Json::object();
    std::size_t attempts = 0, accepted = 0;
    for (const auto& [type, n] : ds.stats.attempts) {
      const std::size_t a = ds.stats.accepted.at(type);
      per_type[to_string(type)] = {{"attempts", n}, {"accepted", a}};
      attempts += n;
      accepted += a;
    }
    Json stats = {{"stats", stamp.json()}, {"attempts", attempts}, {"accepted", accepted}, {"by_type", per_type}};
    write_text_atomic(detail::join(common.out, "synthhit_stats.json"), stats.dump(2) + "\n");
    detail::finish(common.out, stamp, {"synthhit.ndjson", "synthhit_stats.json"}, sw);
  } else if (o.kind == "match") {
    const ArtifactStamp stamp = stamp_for(cfg, "synthhit-match");
    const std::vector<PlayerArchetype> players = make_archetypes(cfg.match.players, cfg.seed);
    const MatchDataset ds = generate_match_dataset(players, cfg.match.rallies, cfg.seed, cfg.physics, cfg.table, common.jobs);
    Json pj = Json::array();
    const std::vector<int> ranks = ds.true_ranks();
    for (const auto& p : ds.players) {
      Json e = archetype_json(p);
      e["true_rank"] = ranks[static_cast<std::size_t>(p.player_id)];
      pj.push_back(e);
    }
    write_text_atomic(detail::join(common.out, "players.json"), Json{{"header", stamp.json()}, {"players", pj}}.dump(2) + "\n");
    std::vector<Json> rows;
    rows.reserve(ds.records.size());
    for (const auto& r : ds.records) rows.push_back(rally_json(r));
    write_text_atomic(detail::join(common.out, "rallies.ndjson"), ndjson_with_header(stamp, rows));
    detail::finish(common.out, stamp, {"players.json", "rallies.ndjson"}, sw);
  } else {
    throw Error(ErrorKind::Config, "synthhit --kind must be 'shots' or 'match'");
  }
}

// ---------------------------------------------------------------------------
// simulate

struct SimulateOptions {
  std::optional<std::vector<double>> hit;  // 9 values
  std::optional<std::string> shot_type;
};

inline void cmd_simulate(const CommonOptions& common, const SimulateOptions& o) {
  detail::Stopwatch sw;
  const ExperimentConfig cfg = resolve_config(common);
  cfg.validate();
  HitVector hit;
  if (o.hit) {
    if (o.hit->size() != static_cast<std::size_t>(kHitDim)) throw Error(ErrorKind::Config, "--hit needs 9 values");
    HitArray a;
    for (int i = 0; i < kHitDim; ++i) a[i] = (*o.hit)[static_cast<std::size_t>(i)];
    hit = HitVector::from_array(a);
  } else {
    const ShotType type = parse_shot_type(o.shot_type.value_or("drive"));
    Rng rng = substream(cfg.seed, "simulate");
    hit = type == ShotType::Random ? sample_random_shot(rng, cfg.synthhit.spaces) : sample_hit(type, rng, cfg.synthhit.spaces);
  }
  const Trajectory traj = simulate(hit, cfg.physics, cfg.table, cfg.simulation);
  const ArtifactStamp stamp = stamp_for(cfg, "simulate");
  ensure_dir(common.out);
  write_text_atomic(detail::join(common.out, "trajectory.csv"), trajectory_csv(traj, stamp));
  write_text_atomic(detail::join(common.out, "events.csv"), events_csv(traj, stamp));
  std::vector<std::string> files{"trajectory.csv", "events.csv"};
  // Each configured camera observes the shot with the dataset's noise model.
  for (std::size_t c = 0; c < cfg.synthhit.cameras.size(); ++c) {
    const Camera& cam = cfg.synthhit.cameras[c];
    Rng rng = substream(cfg.seed, "simulate-observe", c);
    Observation2D obs = project_trajectory(traj, cam, cfg.synthhit.fps, cfg.synthhit.noise, cfg.physics, rng);
    obs.camera_id = static_cast<int>(c);
    files.push_back("observation_" + cam.name + ".csv");
    write_text_atomic(detail::join(common.out, files.back()), observation_csv(obs, stamp));
    files.push_back("camera_" + cam.name + ".txt");
    write_text_atomic(detail::join(common.out, files.back()), camera_text(cam));
  }
  detail::finish(common.out, stamp, files, sw);
}

// ---------------------------------------------------------------------------
// recover

struct RecoveryEvaluation {
  std::vector<std::string> camera_names;
  // Per shot.
  std::vector<int> camera_id;
  std::vector<double> network_mae_m, refined_mae_m;
  std::vector<double> network_px, refined_px;
  std::vector<bool> refined, accepted;
  // Clean re-projection of the same shots; only shots whose every frame is
  // on-image count toward the noiseless summary.
  std::vector<double> noiseless_mae_m;
  std::vector<bool> noiseless_full;

  double median_refined_mae_m(int cam = -1) const { return median_of(refined_mae_m, cam); }
  double median_network_mae_m(int cam = -1) const { return median_of(network_mae_m, cam); }
  double median_noiseless_mae_m() const {
    std::vector<double> v;
    for (std::size_t i = 0; i < noiseless_mae_m.size(); ++i)
      if (noiseless_full[i]) v.push_back(noiseless_mae_m[i]);
    return detail::median(v);
  }
  std::size_t noiseless_count() const { return static_cast<std::size_t>(std::count(noiseless_full.begin(), noiseless_full.end(), true)); }

  double median_of(const std::vector<double>& v, int cam) const {
    std::vector<double> sel;
    for (std::size_t i = 0; i < v.size(); ++i)
      if (cam < 0 || camera_id[i] == cam) sel.push_back(v[i]);
    return detail::median(sel);
  }
};

inline std::vector<Vec3> points_at_frames(const HitVector& hit, const Observation2D& obs, const PhysParams& p,
                                          const TableGeometry& table) {
  const Trajectory traj = simulate(hit, p, table, detail::refinement_sim_options(obs));
  std::vector<Vec3> out;
  for (const auto& f : obs.frames) out.push_back(state_at(traj, f.t_s, p).pos_m);
  return out;
}

inline RecoveryEvaluation evaluate_recovery(const std::vector<HitRecord>& records, HitFormerModel& model,
                                            const ExperimentConfig& cfg, bool noiseless, int jobs) {
  RecoveryEvaluation ev;
  for (const auto& c : cfg.cameras) ev.camera_names.push_back(c.name);
  std::vector<Observation2D> obs;
  std::vector<Camera> cams;
  for (const auto& r : records) {
    obs.push_back(r.observation);
    cams.push_back(r.camera);
  }
  const PhysParams& p = cfg.physics;
  const std::vector<RecoveryResult> res = recover_batch(obs, cams, model, p, cfg.table, cfg.recovery.thresholds, jobs);
  const std::size_t n = records.size();
  ev.network_mae_m.resize(n);
  parallel_for(n, jobs, [&](std::size_t i) {
    ev.network_mae_m[i] = trajectory_mae(points_at_frames(res[i].network_hit, obs[i], p, cfg.table), records[i].trajectory.points);
  });
  for (std::size_t i = 0; i < n; ++i) {
    ev.camera_id.push_back(records[i].observation.camera_id);
    ev.refined_mae_m.push_back(trajectory_mae(res[i].refined_points_3d, records[i].trajectory.points));
    ev.network_px.push_back(res[i].network_error_px);
    ev.refined_px.push_back(res[i].reproj_error_px);
    ev.refined.push_back(res[i].refined);
    ev.accepted.push_back(res[i].accepted);
  }
  if (noiseless) {
    std::vector<Observation2D> clean(n);
    std::vector<std::vector<Vec3>> truth(n);
    ev.noiseless_full.assign(n, false);
    ObservationNoise none;
    none.window_s = cfg.synthhit.noise.window_s;
    parallel_for(n, jobs, [&](std::size_t i) {
      const Trajectory traj = simulate(records[i].hit, p, cfg.table, cfg.simulation);
      Rng rng = substream(cfg.seed, "noiseless", i);
      clean[i] = project_trajectory(traj, records[i].camera, records[i].observation.fps, none, p, rng);
      clean[i].camera_id = records[i].observation.camera_id;
      for (const auto& f : clean[i].frames) truth[i].push_back(state_at(traj, f.t_s, p).pos_m);
      ev.noiseless_full[i] = clean[i].visible_count() == clean[i].frames.size() && clean[i].visible_count() >= 3;
    });
    std::vector<Observation2D> usable;
    std::vector<Camera> ucams;
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < n; ++i)
      if (ev.noiseless_full[i]) {
        usable.push_back(clean[i]);
        ucams.push_back(records[i].camera);
        idx.push_back(i);
      }
    ev.noiseless_mae_m.assign(n, std::numeric_limits<double>::quiet_NaN());
    if (!usable.empty()) {
      const std::vector<RecoveryResult> cres = recover_batch(usable, ucams, model, p, cfg.table, cfg.recovery.thresholds, jobs);
      for (std::size_t k = 0; k < idx.size(); ++k)
        ev.noiseless_mae_m[idx[k]] = trajectory_mae(cres[k].refined_points_3d, truth[idx[k]]);
    }
  }
  return ev;
}

inline std::string recovery_report_csv(const RecoveryEvaluation& ev, const ArtifactStamp& stamp) {
  std::ostringstream os;
  os << stamp.csv_comment() << "metric";
  for (const auto& n : ev.camera_names) os << ',' << n;
  os << ",all\n";
  const int nc = static_cast<int>(ev.camera_names.size());
  auto row = [&](const std::string& name, auto&& f) {
    os << name;
    for (int c = 0; c < nc; ++c) os << ',' << fmt_double(f(c));
    os << ',' << fmt_double(f(-1)) << '\n';
  };
  auto noiseless_at = [&](int cam) {
    std::vector<double> v;
    for (std::size_t i = 0; i < ev.noiseless_mae_m.size(); ++i)
      if (ev.noiseless_full[i] && (cam < 0 || ev.camera_id[i] == cam)) v.push_back(ev.noiseless_mae_m[i]);
    return detail::median(v);
  };
  row("shots", [&](int c) {
    return static_cast<double>(std::count_if(ev.camera_id.begin(), ev.camera_id.end(), [&](int k) { return c < 0 || k == c; }));
  });
  row("median_mae_cm_network", [&](int c) { return 100.0 * ev.median_network_mae_m(c); });
  row("median_mae_cm_refined", [&](int c) { return 100.0 * ev.median_refined_mae_m(c); });
  row("median_reproj_px_network", [&](int c) { return ev.median_of(ev.network_px, c); });
  row("median_reproj_px_refined", [&](int c) { return ev.median_of(ev.refined_px, c); });
  if (!ev.noiseless_full.empty()) row("median_mae_cm_noiseless_refined", [&](int c) { return 100.0 * noiseless_at(c); });
  return os.str();
}

struct RecoverOptions {
  std::string data;
  std::string model;
  std::optional<int> n;
  bool noiseless = true;
};

inline void cmd_recover(const CommonOptions& common, const RecoverOptions& o) {
  detail::Stopwatch sw;
  const ExperimentConfig cfg = resolve_config(common);
  cfg.validate();
  std::vector<HitRecord> records = load_hit_records(o.data);
  const std::size_t n = std::min(records.size(), static_cast<std::size_t>(o.n.value_or(cfg.recovery.n_eval)));
  records.resize(n);
  HitFormerModel model = load_hitformer_checkpoint(o.model, cfg.hitformer);
  const RecoveryEvaluation ev = evaluate_recovery(records, model, cfg, o.noiseless, common.jobs);
  const ArtifactStamp stamp = stamp_for(cfg, "recover");
  ensure_dir(common.out);
  std::vector<Json> rows;
  for (std::size_t i = 0; i < n; ++i) {
    Json r = {{"id", i},
              {"camera", ev.camera_names.at(static_cast<std::size_t>(ev.camera_id[i]))},
              {"network_mae_m", ev.network_mae_m[i]},
              {"refined_mae_m", ev.refined_mae_m[i]},
              {"network_reproj_px", ev.network_px[i]},
              {"refined_reproj_px", ev.refined_px[i]},
              {"refined", static_cast<bool>(ev.refined[i])},
              {"accepted", static_cast<bool>(ev.accepted[i])}};
    if (!ev.noiseless_full.empty() && ev.noiseless_full[i]) r["noiseless_mae_m"] = ev.noiseless_mae_m[i];
    rows.push_back(r);
  }
  write_text_atomic(detail::join(common.out, "recovery.ndjson"), ndjson_with_header(stamp, rows));
  write_text_atomic(detail::join(common.out, "recovery_report.csv"), recovery_report_csv(ev, stamp));
  detail::finish(common.out, stamp, {"recovery.ndjson", "recovery_report.csv"}, sw);
}

// ---------------------------------------------------------------------------
// train

struct TrainOptions {
  std::string kind;  // hitformer | hitflow | skillnet
  std::string data;     // synthhit.ndjson or rallies.ndjson
  std::string players;  // players.json (hitflow, skillnet)
  std::string embeddings;  // embeddings.csv (skillnet)
  std::optional<int> epochs;
  bool resume = false;
  // Stop after this many epochs in this invocation; the checkpoint stays
  // resumable. Used to exercise interruption.
  std::optional<int> stop_after;
};

namespace detail {

template <typename Model, typename SaveFn, typename EpochFn>
void run_epochs(Model& model, nn::OptimState<float>& opt, int start, int epochs, const TrainOptions& o,
                const std::string& ckpt, const ArtifactStamp& stamp, SaveFn save, EpochFn epoch_fn) {
  int done = 0;
  for (int e = start; e < epochs; ++e) {
    const double loss = epoch_fn(e);
    save(ckpt, model, &opt, e + 1, stamp);
    std::cerr << stamp.kind << ": epoch " << e << " loss " << loss << "\n";
    if (o.stop_after && ++done >= *o.stop_after && e + 1 < epochs) {
      std::cerr << stamp.kind << ": stopping early at epoch " << e + 1 << "; rerun with --resume\n";
      return;
    }
  }
}

inline void check_resume_hash(const CheckpointInfo& ci, const ArtifactStamp& stamp) {
  if (ci.config_hash != stamp.config_hash || ci.seed != stamp.seed)
    throw Error(ErrorKind::Config, "cannot resume: checkpoint was written with a different config or seed");
}

}  // namespace detail

/// Returns true when training reached the final epoch.
inline bool cmd_train(const CommonOptions& common, const TrainOptions& o) {
  detail::Stopwatch sw;
  ExperimentConfig cfg = resolve_config(common);
  if (o.epochs) {
    cfg.hitformer.epochs = *o.epochs;
    cfg.hitflow.epochs = *o.epochs;
    cfg.skillnet.epochs = *o.epochs;
  }
  cfg.validate();
  ensure_dir(common.out);
  if (o.kind == "hitformer") {
    const ArtifactStamp stamp = stamp_for(cfg, "train-hitformer");
    const std::string ckpt = detail::join(common.out, "hitformer.ckpt");
    const std::vector<HitRecord> records = load_hit_records(o.data);
    HitFormerModel model;
    nn::OptimState<float> opt = hitformer_optimizer(cfg.hitformer);
    int start = 0;
    if (o.resume && fs::exists(ckpt)) {
      CheckpointInfo ci;
      model = load_hitformer_checkpoint(ckpt, cfg.hitformer, &opt, &ci);
      detail::check_resume_hash(ci, stamp);
      start = ci.next_epoch;
    } else {
      model = init_hitformer(cfg.hitformer, records, cfg.seed);
    }
    detail::run_epochs(model, opt, start, cfg.hitformer.epochs, o, ckpt, stamp, save_hitformer_checkpoint,
                       [&](int e) { return train_hitformer_epoch(model, opt, records, cfg.seed, e); });
    if (static_cast<int>(model.loss_curve.size()) < cfg.hitformer.epochs) return false;
    write_text_atomic(detail::join(common.out, "loss_hitformer.csv"), loss_curve_csv(model.loss_curve, stamp));
    detail::finish(common.out, stamp, {"hitformer.ckpt", "loss_hitformer.csv"}, sw);
    return true;
  }
  if (o.kind == "hitflow") {
    const ArtifactStamp stamp = stamp_for(cfg, "train-hitflow");
    const std::string ckpt = detail::join(common.out, "hitflow.ckpt");
    const std::vector<RallyRecord> rallies = load_rallies(o.data);
    int n_players = 0;
    if (!o.players.empty()) {
      n_players = static_cast<int>(load_players(o.players).size());
    } else {
      for (const auto& r : rallies) n_players = std::max(n_players, r.player_id + 1);
    }
    for (const auto& r : rallies)
      if (r.player_id < 0 || r.player_id >= n_players) throw Error(ErrorKind::Data, "rally references unknown player");
    const std::vector<FlowExample> data = flow_examples(rallies);
    HitFlowModel model;
    nn::OptimState<float> opt = hitflow_optimizer(cfg.hitflow);
    int start = 0;
    if (o.resume && fs::exists(ckpt)) {
      CheckpointInfo ci;
      model = load_hitflow_checkpoint(ckpt, cfg.hitflow, &opt, &ci);
      detail::check_resume_hash(ci, stamp);
      start = ci.next_epoch;
    } else {
      model = init_hitflow(cfg.hitflow, data, n_players, cfg.seed);
    }
    detail::run_epochs(model, opt, start, cfg.hitflow.epochs, o, ckpt, stamp, save_hitflow_checkpoint,
                       [&](int e) { return train_hitflow_epoch(model, opt, data, cfg.seed, e); });
    if (static_cast<int>(model.loss_curve.size()) < cfg.hitflow.epochs) return false;
    write_text_atomic(detail::join(common.out, "loss_hitflow.csv"), loss_curve_csv(model.loss_curve, stamp));
    detail::finish(common.out, stamp, {"hitflow.ckpt", "loss_hitflow.csv"}, sw);
    return true;
  }
  if (o.kind == "skillnet") {
    const ArtifactStamp stamp = stamp_for(cfg, "train-skillnet");
    const Eigen::MatrixXd emb = load_embeddings_csv(o.embeddings);
    const std::vector<PlayerArchetype> players = load_players(o.players);
    if (static_cast<std::size_t>(emb.rows()) != players.size())
      throw Error(ErrorKind::Data, "embedding rows differ from player count");
    const std::vector<int> ranks = MatchDataset{players, {}, rank_order_by_skill(players)}.true_ranks();
    std::vector<int> ids(players.size());
    std::iota(ids.begin(), ids.end(), 0);
    std::vector<double> curve;
    SkillNet net = train_skillnet(emb, labels_from_ranks(ids, ranks), cfg.skillnet, cfg.seed, &curve);
    nn::BlobMap blobs;
    nn::store_params(net.params(), blobs);
    blobs["stats.mean"] = net.mean;
    blobs["stats.scale"] = net.scale;
    nn::write_file(detail::join(common.out, "skillnet.ckpt"), nn::encode_checkpoint(blobs, stamp.config_hash));
    write_text_atomic(detail::join(common.out, "loss_skillnet.csv"), loss_curve_csv(curve, stamp));
    const std::vector<double> scores = net.score(emb);
    std::string sc = stamp.csv_comment() + "player_id,score,true_rank\n";
    for (std::size_t i = 0; i < scores.size(); ++i)
      sc += std::to_string(i) + "," + fmt_double(scores[i]) + "," + std::to_string(ranks[i]) + "\n";
    write_text_atomic(detail::join(common.out, "skill_scores.csv"), sc);
    detail::finish(common.out, stamp, {"skillnet.ckpt", "loss_skillnet.csv", "skill_scores.csv"}, sw);
    return true;
  }
  throw Error(ErrorKind::Config, "train --kind must be hitformer, hitflow or skillnet");
}

// ---------------------------------------------------------------------------
// sample / export-embeddings

struct SampleOptions {
  std::string model;
  std::string data;  // rallies.ndjson providing the context
  int record = 0;
  std::optional<int> player;
  std::optional<int> n;
};

inline void cmd_sample(const CommonOptions& common, const SampleOptions& o) {
  detail::Stopwatch sw;
  const ExperimentConfig cfg = resolve_config(common);
  cfg.validate();
  const std::vector<RallyRecord> rallies = load_rallies(o.data);
  if (o.record < 0 || o.record >= static_cast<int>(rallies.size()))
    throw Error(ErrorKind::Config, "--record out of range (dataset has " + std::to_string(rallies.size()) + ")");
  const RallyRecord& rec = rallies[static_cast<std::size_t>(o.record)];
  HitFlowModel model = load_hitflow_checkpoint(o.model, cfg.hitflow);
  const int player = o.player.value_or(rec.player_id);
  const int n = o.n.value_or(cfg.sample.n);
  const std::vector<HitVector> hits =
      sample_hits(model, rec.context, player_embedding(model, player), n, cfg.sample.ode_steps, cfg.seed);
  const ArtifactStamp stamp = stamp_for(cfg, "sample");
  std::ostringstream os;
  os << stamp.csv_comment() << "# record=" << o.record << " player_id=" << player << "\n";
  os << "x,y,z,vx,vy,vz,wx,wy,wz\n";
  for (const auto& h : hits) {
    const HitArray a = h.to_array();
    for (int k = 0; k < kHitDim; ++k) os << (k ? "," : "") << fmt_double(a[k]);
    os << '\n';
  }
  ensure_dir(common.out);
  write_text_atomic(detail::join(common.out, "samples.csv"), os.str());
  detail::finish(common.out, stamp, {"samples.csv"}, sw);
}

inline void cmd_export_embeddings(const CommonOptions& common, const std::string& model_path) {
  detail::Stopwatch sw;
  const ExperimentConfig cfg = resolve_config(common);
  cfg.validate();
  const HitFlowModel model = load_hitflow_checkpoint(model_path, cfg.hitflow);
  const ArtifactStamp stamp = stamp_for(cfg, "export-embeddings");
  ensure_dir(common.out);
  write_text_atomic(detail::join(common.out, "embeddings.csv"), embeddings_csv(embedding_table(model), stamp));
  detail::finish(common.out, stamp, {"embeddings.csv"}, sw);
}

// ---------------------------------------------------------------------------
// rank / probe

/// Binary attribute labels per player. "dummy" is a balanced random label
/// unrelated to any planted trait.
inline std::vector<int> attribute_labels(const std::vector<PlayerArchetype>& players, const std::string& attribute,
                                         std::uint64_t seed) {
  std::vector<int> y;
  if (attribute == "handedness") {
    for (const auto& p : players) y.push_back(p.hand == Handedness::Left ? 1 : 0);
  } else if (attribute == "sex_tag") {
    for (const auto& p : players) y.push_back(p.sex_tag != 0 ? 1 : 0);
  } else if (attribute == "dummy") {
    y.assign(players.size(), 0);
    for (std::size_t i = 0; i < players.size() / 2; ++i) y[i] = 1;
    Rng rng = substream(seed, "dummy-attribute");
    std::shuffle(y.begin(), y.end(), rng);
  } else {
    throw Error(ErrorKind::Config, "unknown attribute '" + attribute + "' (handedness, sex_tag, dummy)");
  }
  return y;
}

struct ProbeRow {
  std::string attribute;
  int n_labeled = 0;
  double mcc = 0.0;
};

inline std::vector<ProbeRow> probe_sweep(const Eigen::MatrixXd& emb, const std::vector<PlayerArchetype>& players,
                                         const std::vector<std::string>& attributes, int lo, int hi,
                                         const LinearProbeConfig& pc, std::uint64_t seed) {
  std::vector<ProbeRow> rows;
  const int n = static_cast<int>(emb.rows());
  for (const auto& a : attributes) {
    const std::vector<int> y = attribute_labels(players, a, seed);
    for (int k = lo; k <= std::min(hi, n - 1); ++k)
      rows.push_back({a, k, linear_probe(emb, y, k, substream_seed(seed, "probe-" + a, static_cast<std::uint64_t>(k)), pc)});
  }
  return rows;
}

struct RankOptions {
  std::string embeddings;
  std::string players;
  std::string protocol = "known";  // known | pairs | probe
  std::vector<std::string> attributes = {"handedness", "sex_tag", "dummy"};
};

inline void cmd_rank(const CommonOptions& common, const RankOptions& o) {
  detail::Stopwatch sw;
  const ExperimentConfig cfg = resolve_config(common);
  cfg.validate();
  const Eigen::MatrixXd emb = load_embeddings_csv(o.embeddings);
  const std::vector<PlayerArchetype> players = load_players(o.players);
  if (static_cast<std::size_t>(emb.rows()) != players.size())
    throw Error(ErrorKind::Data, "embedding rows differ from player count");
  const std::vector<int> ranks = MatchDataset{players, {}, rank_order_by_skill(players)}.true_ranks();
  ensure_dir(common.out);
  if (o.protocol == "known") {
    const ArtifactStamp stamp = stamp_for(cfg, "rank-known");
    const KnownGroupResult r = rank_known_group(emb, ranks, cfg.skillnet, cfg.seed, common.jobs);
    const Json j = {{"report", stamp.json()},
                    {"spearman_rho", r.correlation.rho},
                    {"p_value", r.correlation.p},
                    {"predicted_ranks", r.predicted_ranks},
                    {"true_ranks", ranks},
                    {"degenerate_ties", r.degenerate_ties}};
    write_text_atomic(detail::join(common.out, "rank_known.json"), j.dump(2) + "\n");
    detail::finish(common.out, stamp, {"rank_known.json"}, sw);
  } else if (o.protocol == "pairs") {
    const ArtifactStamp stamp = stamp_for(cfg, "rank-pairs");
    const UnknownPairsResult r = rank_unknown_pairs(emb, ranks, cfg.skillnet, cfg.seed, -1, common.jobs);
    Json by_gap = Json::array();
    for (const auto& [gap, ct] : r.by_gap) by_gap.push_back({{"gap", gap}, {"correct", ct.first}, {"total", ct.second}});
    const Json j = {{"report", stamp.json()},
                    {"accuracy", r.accuracy},
                    {"gap_threshold", r.gap_threshold},
                    {"accuracy_gap_le_threshold", r.accuracy_small_gap},
                    {"accuracy_gap_gt_threshold", r.accuracy_large_gap},
                    {"by_gap", by_gap}};
    write_text_atomic(detail::join(common.out, "rank_pairs.json"), j.dump(2) + "\n");
    detail::finish(common.out, stamp, {"rank_pairs.json"}, sw);
  } else if (o.protocol == "probe") {
    const ArtifactStamp stamp = stamp_for(cfg, "probe");
    const std::vector<ProbeRow> rows =
        probe_sweep(emb, players, o.attributes, cfg.probe.n_labeled_min, cfg.probe.n_labeled_max, cfg.probe.probe, cfg.seed);
    std::string csv = stamp.csv_comment() + "attribute,n_labeled,mcc\n";
    for (const auto& r : rows) csv += r.attribute + "," + std::to_string(r.n_labeled) + "," + fmt_double(r.mcc) + "\n";
    write_text_atomic(detail::join(common.out, "probe.csv"), csv);
    detail::finish(common.out, stamp, {"probe.csv"}, sw);
  } else {
    throw Error(ErrorKind::Config, "rank --protocol must be known, pairs or probe");
  }
}

// ---------------------------------------------------------------------------
// report

/// Collects whichever result files exist in a run directory into one
/// markdown summary.
inline void cmd_report(const CommonOptions& common, const std::string& dir) {
  detail::Stopwatch sw;
  const ExperimentConfig cfg = resolve_config(common);
  const ArtifactStamp stamp = stamp_for(cfg, "report");
  std::ostringstream md;
  md << "# Run report\n\nconfig_hash " << hex64(stamp.config_hash) << ", seed " << stamp.seed << "\n";
  auto read_json = [&](const std::string& name) -> std::optional<Json> {
    const std::string p = detail::join(dir, name);
    if (!fs::exists(p)) return std::nullopt;
    try {
      return Json::parse(nn::read_file(p));
    } catch (const nlohmann::json::parse_error&) {
      throw Error(ErrorKind::Data, p + ": invalid JSON");
    }
  };
  auto copy_table = [&](const std::string& name, const std::string& title) {
    const std::string p = detail::join(dir, name);
    if (!fs::exists(p)) return;
    md << "\n## " << title << "\n\n```\n";
    std::istringstream in(nn::read_file(p));
    std::string line;
    while (std::getline(in, line))
      if (!line.empty() && line[0] != '#') md << line << "\n";
    md << "```\n";
  };
  if (const auto s = read_json("synthhit_stats.json"))
    md << "\n## Shot generation\n\naccepted " << (*s)["accepted"] << " of " << (*s)["attempts"] << " attempts\n";
  copy_table("recovery_report.csv", "Recovery");
  for (const char* k : {"hitformer", "hitflow", "skillnet"}) {
    const std::string p = detail::join(dir, std::string("loss_") + k + ".csv");
    if (!fs::exists(p)) continue;
    std::istringstream in(nn::read_file(p));
    std::string line, last;
    int n = 0;
    while (std::getline(in, line))
      if (!line.empty() && line[0] != '#' && line.rfind("epoch", 0) != 0) {
        last = line;
        ++n;
      }
    md << "\n## Training " << k << "\n\n" << n << " epochs, last (epoch,loss) " << last << "\n";
  }
  if (const auto j = read_json("rank_known.json"))
    md << "\n## Known-group ranking\n\nSpearman rho " << (*j)["spearman_rho"] << ", p " << (*j)["p_value"] << "\n";
  if (const auto j = read_json("rank_pairs.json"))
    md << "\n## Unknown-pair ranking\n\naccuracy " << (*j)["accuracy"] << "; gap <= " << (*j)["gap_threshold"] << ": "
       << (*j)["accuracy_gap_le_threshold"] << "; gap > " << (*j)["gap_threshold"] << ": "
       << (*j)["accuracy_gap_gt_threshold"] << "\n";
  copy_table("probe.csv", "Attribute probe");
  ensure_dir(common.out);
  write_text_atomic(detail::join(common.out, "report.md"), md.str());
  detail::finish(common.out, stamp, {"report.md"}, sw);
}

/// Maps an error kind to the process exit code.
inline int exit_code(ErrorKind k) {
  switch (k) {
    case ErrorKind::Config: return 2;
    case ErrorKind::Data:
    case ErrorKind::InvalidInput:
    case ErrorKind::Io:
    case ErrorKind::RecoveryInfeasible:
    case ErrorKind::Projection: return 3;
    case ErrorKind::Numeric:
    case ErrorKind::SimulationDiverged:
    case ErrorKind::Estimation: return 4;
  }
  return 1;
}

}  // namespace hitspace
