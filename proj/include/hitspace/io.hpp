#pragma once

// On-disk formats: NDJSON datasets with a header line, CSV tables with a
// leading comment line, and a manifest with per-file checksums. Numbers are
// written in shortest round-trip form so identical runs give identical bytes.

#include "hitspace/config.hpp"
#include "hitspace/core.hpp"
#include "hitspace/hitflow.hpp"
#include "hitspace/hitformer.hpp"
#include "hitspace/nn.hpp"
#include "hitspace/synthdata.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace hitspace {

namespace fs = std::filesystem;

inline constexpr const char* kToolVersion = "0.1.0";

/// (config hash, seed) stamped on every artifact.
struct ArtifactStamp {
  std::uint64_t config_hash = 0;
  std::uint64_t seed = 0;
  std::string kind;

  Json json() const { return {{"config_hash", hex64(config_hash)}, {"seed", seed}, {"kind", kind}, {"tool_version", kToolVersion}}; }
  std::string csv_comment() const {
    return "# kind=" + kind + " config_hash=" + hex64(config_hash) + " seed=" + std::to_string(seed) + "\n";
  }
};

inline std::string fmt_double(double v) {
  Json j = v;
  return j.dump();
}

// ---------------------------------------------------------------------------
// JSON encoders

inline Json hit_json(const HitVector& h) {
  const HitArray a = h.to_array();
  Json out = Json::array();
  for (int i = 0; i < kHitDim; ++i) out.push_back(a[i]);
  return out;
}

inline HitVector hit_from_json(const Json& j) {
  if (!j.is_array() || j.size() != static_cast<std::size_t>(kHitDim))
    throw Error(ErrorKind::Data, "hit vector must be an array of 9 numbers");
  HitArray a;
  for (int i = 0; i < kHitDim; ++i) a[i] = j[static_cast<std::size_t>(i)].get<double>();
  return HitVector::from_array(a);
}

inline Json camera_json(const Camera& c) {
  Json r = Json::array(), t = Json::array();
  for (int i = 0; i < 3; ++i)
    for (int k = 0; k < 3; ++k) r.push_back(c.pose.rotation(i, k));
  for (int i = 0; i < 3; ++i) t.push_back(c.pose.translation[i]);
  return {{"name", c.name},
          {"fx", c.intrinsics.fx},
          {"fy", c.intrinsics.fy},
          {"cx", c.intrinsics.cx},
          {"cy", c.intrinsics.cy},
          {"image_w", c.intrinsics.image_w},
          {"image_h", c.intrinsics.image_h},
          {"rotation", r},
          {"translation", t}};
}

inline Camera camera_from_json(const Json& j) {
  Camera c;
  c.name = j.at("name").get<std::string>();
  c.intrinsics.fx = j.at("fx").get<double>();
  c.intrinsics.fy = j.at("fy").get<double>();
  c.intrinsics.cx = j.at("cx").get<double>();
  c.intrinsics.cy = j.at("cy").get<double>();
  c.intrinsics.image_w = j.at("image_w").get<int>();
  c.intrinsics.image_h = j.at("image_h").get<int>();
  for (int i = 0; i < 3; ++i)
    for (int k = 0; k < 3; ++k) c.pose.rotation(i, k) = j.at("rotation").at(static_cast<std::size_t>(3 * i + k)).get<double>();
  for (int i = 0; i < 3; ++i) c.pose.translation[i] = j.at("translation").at(static_cast<std::size_t>(i)).get<double>();
  return c;
}

inline EventKind parse_event_kind(const std::string& s) {
  for (EventKind k : {EventKind::TableBounce, EventKind::NetContact, EventKind::FloorContact, EventKind::OutOfVolume})
    if (s == to_string(k)) return k;
  throw Error(ErrorKind::Data, "unknown event kind '" + s + "'");
}

inline Json event_json(const TrajectoryEvent& e) {
  return {{"kind", to_string(e.kind)},
          {"t_s", e.t_s},
          {"pos", detail::vec3_json(e.pos_m)},
          {"side", e.side == TableSide::Negative ? "negative" : "positive"},
          {"in_bounds", e.in_bounds}};
}

inline Vec3 vec3_from_json(const Json& j) {
  return {j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>()};
}

inline Json record_json(const HitRecord& r, std::size_t id) {
  Json frames = Json::array();
  for (const auto& f : r.observation.frames) frames.push_back({f.t_s, f.pixel.x(), f.pixel.y(), f.visible ? 1 : 0});
  Json points = Json::array();
  for (const auto& p : r.trajectory.points) points.push_back(detail::vec3_json(p));
  Json events = Json::array();
  for (const auto& e : r.trajectory.events) events.push_back(event_json(e));
  return {{"id", id},
          {"shot_type", to_string(r.shot_type)},
          {"valid", r.valid},
          {"hit", hit_json(r.hit)},
          {"camera_id", r.observation.camera_id},
          {"camera", camera_json(r.camera)},
          {"fps", r.observation.fps},
          {"times", r.trajectory.times},
          {"points", points},
          {"events", events},
          {"frames", frames}};
}

inline HitRecord record_from_json(const Json& j) {
  HitRecord r;
  try {
    r.shot_type = parse_shot_type(j.at("shot_type").get<std::string>());
    r.valid = j.at("valid").get<bool>();
    r.hit = hit_from_json(j.at("hit"));
    r.camera = camera_from_json(j.at("camera"));
    r.observation.camera_id = j.at("camera_id").get<int>();
    r.observation.fps = j.at("fps").get<double>();
    r.trajectory.times = j.at("times").get<std::vector<double>>();
    for (const auto& p : j.at("points")) r.trajectory.points.push_back(vec3_from_json(p));
    for (const auto& e : j.at("events")) {
      TrajectoryEvent ev;
      ev.kind = parse_event_kind(e.at("kind").get<std::string>());
      ev.t_s = e.at("t_s").get<double>();
      ev.pos_m = vec3_from_json(e.at("pos"));
      ev.side = e.at("side").get<std::string>() == "negative" ? TableSide::Negative : TableSide::Positive;
      ev.in_bounds = e.at("in_bounds").get<bool>();
      r.trajectory.events.push_back(ev);
    }
    for (const auto& f : j.at("frames")) {
      ObservationFrame fr;
      fr.t_s = f.at(0).get<double>();
      fr.pixel = Pixel(f.at(1).get<double>(), f.at(2).get<double>());
      fr.visible = f.at(3).get<int>() != 0;
      r.observation.frames.push_back(fr);
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Data, std::string("malformed hit record: ") + e.what());
  }
  if (r.trajectory.times.size() != r.trajectory.points.size())
    throw Error(ErrorKind::Data, "hit record: times and points differ in length");
  return r;
}

inline Json context_json(const GameContext& c) {
  Json motion = Json::array();
  for (int p = 0; p < 2; ++p) {
    Json rows = Json::array();
    const Eigen::MatrixXd& m = c.motion[static_cast<std::size_t>(p)];
    for (Eigen::Index s = 0; s < m.rows(); ++s) {
      Json row = Json::array();
      for (Eigen::Index k = 0; k < m.cols(); ++k) row.push_back(m(s, k));
      rows.push_back(row);
    }
    motion.push_back(rows);
  }
  return {{"motion", motion},
          {"location", Json::array({detail::vec3_json(c.location[0]), detail::vec3_json(c.location[1])})},
          {"orientation", Json::array({c.orientation[0], c.orientation[1]})},
          {"opponent_hit", hit_json(c.opponent_hit)},
          {"end_step", c.end_step}};
}

inline GameContext context_from_json(const Json& j) {
  GameContext c;
  for (int p = 0; p < 2; ++p) {
    const Json& rows = j.at("motion").at(static_cast<std::size_t>(p));
    if (rows.size() != static_cast<std::size_t>(kContextSteps))
      throw Error(ErrorKind::Data, "context motion must have " + std::to_string(kContextSteps) + " steps");
    for (int s = 0; s < kContextSteps; ++s) {
      const Json& row = rows.at(static_cast<std::size_t>(s));
      if (row.size() != static_cast<std::size_t>(kMotionWidth)) throw Error(ErrorKind::Data, "context motion width");
      for (int k = 0; k < kMotionWidth; ++k) c.motion[static_cast<std::size_t>(p)](s, k) = row.at(static_cast<std::size_t>(k)).get<double>();
    }
    c.location[static_cast<std::size_t>(p)] = vec3_from_json(j.at("location").at(static_cast<std::size_t>(p)));
    c.orientation[static_cast<std::size_t>(p)] = j.at("orientation").at(static_cast<std::size_t>(p)).get<double>();
  }
  c.opponent_hit = hit_from_json(j.at("opponent_hit"));
  c.end_step = j.at("end_step").get<int>();
  return c;
}

inline Json rally_json(const RallyRecord& r) {
  return {{"rally_id", r.rally_id},
          {"response_step", r.response_step},
          {"player_id", r.player_id},
          {"opponent_id", r.opponent_id},
          {"response", hit_json(r.response)},
          {"context", context_json(r.context)}};
}

inline RallyRecord rally_from_json(const Json& j) {
  RallyRecord r;
  try {
    r.rally_id = j.at("rally_id").get<int>();
    r.response_step = j.at("response_step").get<int>();
    r.player_id = j.at("player_id").get<int>();
    r.opponent_id = j.at("opponent_id").get<int>();
    r.response = hit_from_json(j.at("response"));
    r.context = context_from_json(j.at("context"));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Data, std::string("malformed rally record: ") + e.what());
  }
  return r;
}

inline Json archetype_json(const PlayerArchetype& a) {
  return {{"player_id", a.player_id},
          {"skill", a.skill},
          {"handedness", a.hand == Handedness::Left ? "L" : "R"},
          {"aggression", a.style.aggression},
          {"spin_bias", a.style.spin_bias},
          {"placement_variance", a.style.placement_variance},
          {"sex_tag", a.sex_tag}};
}

inline PlayerArchetype archetype_from_json(const Json& j) {
  PlayerArchetype a;
  try {
    a.player_id = j.at("player_id").get<int>();
    a.skill = j.at("skill").get<double>();
    a.hand = j.at("handedness").get<std::string>() == "L" ? Handedness::Left : Handedness::Right;
    a.style.aggression = j.at("aggression").get<double>();
    a.style.spin_bias = j.at("spin_bias").get<double>();
    a.style.placement_variance = j.at("placement_variance").get<double>();
    a.sex_tag = j.at("sex_tag").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Data, std::string("malformed player entry: ") + e.what());
  }
  return a;
}

// ---------------------------------------------------------------------------
// Files

inline void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw Error(ErrorKind::Io, "cannot create directory '" + dir + "'");
}

/// Writes via a temporary file and rename, so readers never see a partial
/// artifact.
inline void write_text_atomic(const std::string& path, const std::string& text) {
  const std::string tmp = path + ".tmp";
  nn::write_file(tmp, text);
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw Error(ErrorKind::Io, "cannot move '" + tmp + "' to '" + path + "'");
}

inline std::string ndjson_with_header(const ArtifactStamp& stamp, const std::vector<Json>& rows) {
  std::string out = Json{{"header", stamp.json()}}.dump() + "\n";
  for (const auto& r : rows) out += r.dump() + "\n";
  return out;
}

/// Returns the body rows; the header is checked for presence.
inline std::vector<Json> read_ndjson(const std::string& path, Json* header = nullptr) {
  std::ifstream f(path);
  if (!f) throw Error(ErrorKind::Io, "cannot open '" + path + "'");
  std::vector<Json> rows;
  std::string line;
  bool first = true;
  std::size_t lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty()) continue;
    Json j;
    try {
      j = Json::parse(line);
    } catch (const nlohmann::json::parse_error&) {
      throw Error(ErrorKind::Data, path + ":" + std::to_string(lineno) + ": invalid JSON");
    }
    if (first) {
      first = false;
      if (!j.contains("header")) throw Error(ErrorKind::Data, path + ": missing header line");
      if (header) *header = j.at("header");
      continue;
    }
    rows.push_back(std::move(j));
  }
  if (first) throw Error(ErrorKind::Data, path + ": empty file");
  return rows;
}

inline std::vector<HitRecord> load_hit_records(const std::string& path) {
  std::vector<HitRecord> out;
  for (const auto& j : read_ndjson(path)) out.push_back(record_from_json(j));
  if (out.empty()) throw Error(ErrorKind::Data, path + ": no records");
  return out;
}

inline std::vector<RallyRecord> load_rallies(const std::string& path) {
  std::vector<RallyRecord> out;
  for (const auto& j : read_ndjson(path)) out.push_back(rally_from_json(j));
  if (out.empty()) throw Error(ErrorKind::Data, path + ": no records");
  return out;
}

inline std::vector<PlayerArchetype> load_players(const std::string& path) {
  const std::string text = nn::read_file(path);
  Json j;
  try {
    j = Json::parse(text);
  } catch (const nlohmann::json::parse_error&) {
    throw Error(ErrorKind::Data, path + ": invalid JSON");
  }
  std::vector<PlayerArchetype> out;
  for (const auto& p : j.at("players")) out.push_back(archetype_from_json(p));
  for (std::size_t i = 0; i < out.size(); ++i)
    if (out[i].player_id != static_cast<int>(i)) throw Error(ErrorKind::Data, path + ": player ids must be 0..k-1 in order");
  return out;
}

inline std::string trajectory_csv(const Trajectory& traj, const ArtifactStamp& stamp) {
  std::ostringstream os;
  os << stamp.csv_comment() << "t_s,x,y,z,vx,vy,vz,wx,wy,wz\n";
  for (const auto& s : traj.states) {
    os << fmt_double(s.t_s);
    for (const Vec3* v : {&s.pos_m, &s.vel_mps, &s.angvel_radps})
      for (int i = 0; i < 3; ++i) os << ',' << fmt_double((*v)[i]);
    os << '\n';
  }
  return os.str();
}

inline std::string events_csv(const Trajectory& traj, const ArtifactStamp& stamp) {
  std::ostringstream os;
  os << stamp.csv_comment() << "kind,t_s,x,y,z,side,in_bounds\n";
  for (const auto& e : traj.events)
    os << to_string(e.kind) << ',' << fmt_double(e.t_s) << ',' << fmt_double(e.pos_m.x()) << ','
       << fmt_double(e.pos_m.y()) << ',' << fmt_double(e.pos_m.z()) << ','
       << (e.side == TableSide::Negative ? "negative" : "positive") << ',' << (e.in_bounds ? 1 : 0) << '\n';
  return os.str();
}

/// One row per frame: t_s,u,v,visible. Masked frames keep their pixel.
inline std::string observation_csv(const Observation2D& obs, const ArtifactStamp& stamp) {
  std::ostringstream os;
  os << stamp.csv_comment() << "# fps=" << fmt_double(obs.fps) << " camera_id=" << obs.camera_id << "\n";
  os << "t_s,u,v,visible\n";
  for (const auto& f : obs.frames)
    os << fmt_double(f.t_s) << ',' << fmt_double(f.pixel.x()) << ',' << fmt_double(f.pixel.y()) << ','
       << (f.visible ? 1 : 0) << '\n';
  return os.str();
}

inline Observation2D observation_from_csv(const std::string& text) {
  Observation2D obs;
  std::istringstream in(text);
  bool header = false;
  for (std::string line; std::getline(in, line);) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      if (const auto k = line.find("fps="); k != std::string::npos) obs.fps = std::stod(line.substr(k + 4));
      if (const auto k = line.find("camera_id="); k != std::string::npos) obs.camera_id = std::stoi(line.substr(k + 10));
      continue;
    }
    if (!header) {
      if (line != "t_s,u,v,visible") throw Error(ErrorKind::Data, "observation: unexpected header '" + line + "'");
      header = true;
      continue;
    }
    ObservationFrame f;
    char c1, c2, c3;
    int vis = 0;
    std::istringstream row(line);
    if (!(row >> f.t_s >> c1 >> f.pixel.x() >> c2 >> f.pixel.y() >> c3 >> vis) || c1 != ',' || c2 != ',' || c3 != ',' ||
        (vis != 0 && vis != 1))
      throw Error(ErrorKind::Data, "observation: malformed row '" + line + "'");
    f.visible = vis == 1;
    obs.frames.push_back(f);
  }
  if (!header) throw Error(ErrorKind::Data, "observation: missing header");
  return obs;
}

/// Plain "key value..." lines: name, fx, fy, cx, cy, image_w, image_h,
/// R (row-major, 9 values), t (3 values).
inline std::string camera_text(const Camera& cam) {
  std::ostringstream os;
  const CameraIntrinsics& k = cam.intrinsics;
  os << "name " << cam.name << "\n";
  os << "fx " << fmt_double(k.fx) << "\nfy " << fmt_double(k.fy) << "\ncx " << fmt_double(k.cx) << "\ncy "
     << fmt_double(k.cy) << "\n";
  os << "image_w " << k.image_w << "\nimage_h " << k.image_h << "\n";
  os << "R";
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) os << ' ' << fmt_double(cam.pose.rotation(r, c));
  os << "\nt";
  for (int i = 0; i < 3; ++i) os << ' ' << fmt_double(cam.pose.translation[i]);
  os << "\n";
  return os.str();
}

inline Camera camera_from_text(const std::string& text) {
  Camera cam;
  std::map<std::string, std::vector<std::string>> kv;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream row(line);
    std::string key, v;
    row >> key;
    while (row >> v) kv[key].push_back(v);
  }
  auto nums = [&](const std::string& key, std::size_t n) {
    const auto it = kv.find(key);
    if (it == kv.end() || it->second.size() != n)
      throw Error(ErrorKind::Data, "camera: '" + key + "' needs " + std::to_string(n) + " value(s)");
    std::vector<double> out;
    for (const auto& s : it->second) out.push_back(std::stod(s));
    return out;
  };
  if (kv.count("name") && !kv["name"].empty()) cam.name = kv["name"].front();
  cam.intrinsics.fx = nums("fx", 1)[0];
  cam.intrinsics.fy = nums("fy", 1)[0];
  cam.intrinsics.cx = nums("cx", 1)[0];
  cam.intrinsics.cy = nums("cy", 1)[0];
  if (kv.count("image_w")) cam.intrinsics.image_w = static_cast<int>(nums("image_w", 1)[0]);
  if (kv.count("image_h")) cam.intrinsics.image_h = static_cast<int>(nums("image_h", 1)[0]);
  const auto r = nums("R", 9), t = nums("t", 3);
  for (int i = 0; i < 9; ++i) cam.pose.rotation(i / 3, i % 3) = r[static_cast<std::size_t>(i)];
  cam.pose.translation = Vec3(t[0], t[1], t[2]);
  if (!((cam.pose.rotation * cam.pose.rotation.transpose() - Eigen::Matrix3d::Identity()).norm() < 1e-6))
    throw Error(ErrorKind::Data, "camera: R is not a rotation");
  return cam;
}

inline std::string checksum_file(const std::string& path) { return hex64(fnv1a(nn::read_file(path))); }

/// Manifest listing every artifact of one command with its checksum.
/// Wall-clock time goes to a separate timing file so the manifest itself is
/// reproducible.
struct RunManifest {
  ArtifactStamp stamp;
  std::vector<std::string> files;  // relative to the output directory

  std::string write(const std::string& dir) const {
    Json list = Json::array();
    for (const auto& f : files) list.push_back({{"path", f}, {"checksum_fnv1a64", checksum_file((fs::path(dir) / f).string())}});
    const Json j = {{"manifest", stamp.json()}, {"artifacts", list}};
    const std::string path = (fs::path(dir) / ("manifest." + stamp.kind + ".json")).string();
    write_text_atomic(path, j.dump(2) + "\n");
    return path;
  }
};

inline void write_timing(const std::string& dir, const std::string& stage, double seconds) {
  const std::string path = (fs::path(dir) / "timing.json").string();
  Json j = Json::object();
  if (fs::exists(path)) {
    try {
      j = Json::parse(nn::read_file(path));
    } catch (const nlohmann::json::parse_error&) {
      j = Json::object();
    }
  }
  j[stage] = seconds;
  write_text_atomic(path, j.dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// Checkpoints. Besides the weights a checkpoint carries the optimiser state
// and the next epoch to run, so an interrupted training run can resume.

namespace detail {

inline void put_meta(nn::BlobMap& blobs, std::uint64_t seed, int next_epoch) {
  nn::Blob s(1, 2);
  s(0, 0) = static_cast<double>(seed >> 32);
  s(0, 1) = static_cast<double>(seed & 0xffffffffULL);
  blobs["meta.seed"] = s;
  nn::Blob e(1, 1);
  e(0, 0) = next_epoch;
  blobs["meta.next_epoch"] = e;
}

inline int next_epoch_of(const nn::BlobMap& blobs) {
  const auto it = blobs.find("meta.next_epoch");
  return it == blobs.end() ? 0 : static_cast<int>(it->second(0, 0));
}

inline std::uint64_t seed_of(const nn::BlobMap& blobs) {
  const auto it = blobs.find("meta.seed");
  if (it == blobs.end()) return 0;
  return (static_cast<std::uint64_t>(it->second(0, 0)) << 32) | static_cast<std::uint64_t>(it->second(0, 1));
}

inline nn::BlobMap read_checkpoint(const std::string& path, std::uint64_t* hash) {
  return nn::decode_checkpoint(nn::read_file(path), hash);
}

}  // namespace detail

struct CheckpointInfo {
  std::uint64_t config_hash = 0;
  std::uint64_t seed = 0;
  int next_epoch = 0;
};

inline void save_hitformer_checkpoint(const std::string& path, HitFormerModel& model,
                                      const nn::OptimState<float>* opt, int next_epoch, const ArtifactStamp& stamp) {
  nn::BlobMap blobs = hitformer_blobs(model);
  if (opt) store_optimizer(*opt, blobs);
  detail::put_meta(blobs, stamp.seed, next_epoch);
  const std::string tmp = path + ".tmp";
  nn::write_file(tmp, nn::encode_checkpoint(blobs, stamp.config_hash));
  fs::rename(tmp, path);
}

inline HitFormerModel load_hitformer_checkpoint(const std::string& path, const HitFormerConfig& cfg,
                                                nn::OptimState<float>* opt = nullptr, CheckpointInfo* info = nullptr) {
  CheckpointInfo ci;
  const nn::BlobMap blobs = detail::read_checkpoint(path, &ci.config_hash);
  HitFormerModel model;
  model.cfg = cfg;
  Rng rng(0);
  model.net = HitFormerNet<float>(cfg, rng);
  load_hitformer_blobs(model, blobs);
  if (opt) load_optimizer(*opt, blobs);
  ci.seed = detail::seed_of(blobs);
  ci.next_epoch = detail::next_epoch_of(blobs);
  if (info) *info = ci;
  return model;
}

inline void save_hitflow_checkpoint(const std::string& path, HitFlowModel& model, const nn::OptimState<float>* opt,
                                    int next_epoch, const ArtifactStamp& stamp) {
  nn::BlobMap blobs = hitflow_blobs(model);
  if (opt) store_optimizer(*opt, blobs);
  detail::put_meta(blobs, stamp.seed, next_epoch);
  const std::string tmp = path + ".tmp";
  nn::write_file(tmp, nn::encode_checkpoint(blobs, stamp.config_hash));
  fs::rename(tmp, path);
}

inline HitFlowModel load_hitflow_checkpoint(const std::string& path, const HitFlowConfig& cfg,
                                            nn::OptimState<float>* opt = nullptr, CheckpointInfo* info = nullptr) {
  CheckpointInfo ci;
  const nn::BlobMap blobs = detail::read_checkpoint(path, &ci.config_hash);
  const auto it = blobs.find("embeddings");
  if (it == blobs.end()) throw Error(ErrorKind::Data, "checkpoint lacks 'embeddings'");
  HitFlowModel model;
  model.cfg = cfg;
  Rng rng(0);
  model.net = HitFlowNet<float>(cfg, static_cast<int>(it->second.rows()), rng);
  load_hitflow_blobs(model, blobs);
  if (opt) load_optimizer(*opt, blobs);
  ci.seed = detail::seed_of(blobs);
  ci.next_epoch = detail::next_epoch_of(blobs);
  if (info) *info = ci;
  return model;
}

inline std::string loss_curve_csv(const std::vector<double>& curve, const ArtifactStamp& stamp) {
  std::string out = stamp.csv_comment() + "epoch,loss\n";
  for (std::size_t e = 0; e < curve.size(); ++e) out += std::to_string(e) + "," + fmt_double(curve[e]) + "\n";
  return out;
}

inline std::string embeddings_csv(const Eigen::MatrixXd& emb, const ArtifactStamp& stamp) {
  std::ostringstream os;
  os << stamp.csv_comment() << "player_id";
  for (Eigen::Index k = 0; k < emb.cols(); ++k) os << ",e" << k;
  os << '\n';
  for (Eigen::Index i = 0; i < emb.rows(); ++i) {
    os << i;
    for (Eigen::Index k = 0; k < emb.cols(); ++k) os << ',' << fmt_double(emb(i, k));
    os << '\n';
  }
  return os.str();
}

/// Reads the table written by embeddings_csv. Rows must be ordered by id.
inline Eigen::MatrixXd load_embeddings_csv(const std::string& path) {
  std::istringstream in(nn::read_file(path));
  std::string line;
  std::vector<std::vector<double>> rows;
  bool header_seen = false;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (!header_seen) {
      header_seen = true;
      continue;
    }
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    bool first = true;
    while (std::getline(ss, cell, ',')) {
      try {
        if (first) {
          if (std::stoi(cell) != static_cast<int>(rows.size()))
            throw Error(ErrorKind::Data, path + ": rows must be ordered by player_id");
          first = false;
        } else {
          row.push_back(std::stod(cell));
        }
      } catch (const std::logic_error&) {
        throw Error(ErrorKind::Data, path + ": bad number '" + cell + "'");
      }
    }
    if (!rows.empty() && row.size() != rows.front().size()) throw Error(ErrorKind::Data, path + ": ragged rows");
    rows.push_back(std::move(row));
  }
  if (rows.empty() || rows.front().empty()) throw Error(ErrorKind::Data, path + ": no embeddings");
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t k = 0; k < rows[i].size(); ++k) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = rows[i][k];
  return m;
}

}  // namespace hitspace
