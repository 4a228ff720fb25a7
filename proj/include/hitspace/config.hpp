#pragma once

// Experiment configuration: one JSON document covering every stage. Unknown
// keys are rejected by name; the canonical serialisation is hashed and the
// hash travels with every artifact.

#include "hitspace/core.hpp"
#include "hitspace/geometry.hpp"
#include "hitspace/hitflow.hpp"
#include "hitspace/hitformer.hpp"
#include "hitspace/physics.hpp"
#include "hitspace/skill.hpp"
#include "hitspace/synthdata.hpp"

#include <nlohmann/json.hpp>

#include <fstream>
#include <set>
#include <string>

namespace hitspace {

using Json = nlohmann::json;

struct CameraSpec {
  std::string name;
  CameraIntrinsics intrinsics;
  Vec3 eye = Vec3::Zero();
  Vec3 target = Vec3::Zero();

  Camera camera() const { return {name, intrinsics, CameraPose::look_at(eye, target)}; }
};

struct RecoveryConfig {
  RecoveryThresholds thresholds;
  int n_eval = 200;
  double eval_pixel_sigma = 1.0;
  double eval_mask_rate = 0.2;
};

struct MatchConfig {
  int players = 12;
  int rallies = 1200;
};

struct ProbeConfig {
  LinearProbeConfig probe;
  int n_labeled_min = 6;
  int n_labeled_max = 30;
};

struct SampleConfig {
  int n = 100;
  int ode_steps = 50;
};

struct ExperimentConfig {
  std::uint64_t seed = 1;
  PhysParams physics;
  TableGeometry table;
  SimulationOptions simulation;
  SynthHitConfig synthhit;
  std::vector<CameraSpec> cameras;
  HitFormerConfig hitformer;
  RecoveryConfig recovery;
  MatchConfig match;
  HitFlowConfig hitflow;
  SampleConfig sample;
  SkillNetConfig skillnet;
  ProbeConfig probe;

  ExperimentConfig() {
    CameraIntrinsics intr;
    intr.fx = intr.fy = 900.0;
    cameras = {{"side", intr, Vec3(0.0, -5.5, 1.6), Vec3(0.0, 0.0, 0.0)},
               {"oblique", intr, Vec3(-4.2, -4.2, 1.9), Vec3(0.2, 0.0, 0.0)},
               {"back", intr, Vec3(-6.0, 0.0, 2.0), Vec3(0.5, 0.0, 0.0)}};
    sync_cameras();
  }

  void sync_cameras() {
    synthhit.cameras.clear();
    for (const auto& c : cameras) synthhit.cameras.push_back(c.camera());
    synthhit.sim = simulation;
  }

  void validate() const {
    physics.validate();
    table.validate();
    if (!(simulation.dt_s > 0.0 && simulation.horizon_s > 0.0))
      throw Error(ErrorKind::Config, "simulation: dt_s and horizon_s must be > 0");
    if (cameras.empty()) throw Error(ErrorKind::Config, "cameras: at least one camera is required");
    for (const auto& c : cameras) c.intrinsics.validate();
    validate_spaces(synthhit.spaces);
    if (synthhit.n_records == 0) throw Error(ErrorKind::Config, "synthhit.n_records must be > 0");
    if (!(synthhit.max_rejection_rate > 0.0 && synthhit.max_rejection_rate < 1.0))
      throw Error(ErrorKind::Config, "synthhit.max_rejection_rate must lie in (0, 1)");
    hitformer.validate();
    hitflow.validate();
    skillnet.validate();
    if (match.players < 2) throw Error(ErrorKind::Config, "match.players must be >= 2");
    if (match.rallies < 1) throw Error(ErrorKind::Config, "match.rallies must be >= 1");
    if (recovery.n_eval < 1) throw Error(ErrorKind::Config, "recovery.n_eval must be >= 1");
    if (!(recovery.thresholds.trigger_px >= 0.0 && recovery.thresholds.accept_px >= 0.0))
      throw Error(ErrorKind::Config, "recovery thresholds must be >= 0");
    if (sample.n < 1 || sample.ode_steps < 1) throw Error(ErrorKind::Config, "sample.n and sample.ode_steps must be >= 1");
    if (probe.n_labeled_min < 2 || probe.n_labeled_max < probe.n_labeled_min)
      throw Error(ErrorKind::Config, "probe: need 2 <= n_labeled_min <= n_labeled_max");
  }
};

namespace detail {

inline Json vec3_json(const Vec3& v) { return Json::array({v.x(), v.y(), v.z()}); }

/// Reads fields of one JSON object and rejects keys nobody asked for.
class ObjectReader {
 public:
  ObjectReader(const Json& j, std::string path, std::vector<std::string>& unknown)
      : j_(j), path_(std::move(path)), unknown_(unknown) {
    if (!j_.is_object()) throw Error(ErrorKind::Config, "'" + (path_.empty() ? "config" : path_) + "' must be an object");
  }
  ObjectReader(const ObjectReader&) = delete;
  ObjectReader& operator=(const ObjectReader&) = delete;
  // Keys never read are reported through `unknown`.
  ~ObjectReader() {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key())) unknown_.push_back(join(it.key()));
  }

  bool has(const std::string& key) const { return j_.contains(key); }
  const Json* sub(const std::string& key) {
    seen_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }
  std::string join(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  template <typename U>
  void get(const std::string& key, U& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<U>();
    } catch (const nlohmann::json::exception&) {
      throw Error(ErrorKind::Config, "field '" + join(key) + "' has the wrong type");
    }
  }
  void get_vec3(const std::string& key, Vec3& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    const Json& a = j_.at(key);
    if (!a.is_array() || a.size() != 3) throw Error(ErrorKind::Config, "field '" + join(key) + "' must be [x, y, z]");
    for (int i = 0; i < 3; ++i) {
      if (!a[static_cast<std::size_t>(i)].is_number())
        throw Error(ErrorKind::Config, "field '" + join(key) + "' must be numeric");
      out[i] = a[static_cast<std::size_t>(i)].get<double>();
    }
  }
  void get_interval(const std::string& key, Interval& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    const Json& a = j_.at(key);
    if (!a.is_array() || a.size() != 2 || !a[0].is_number() || !a[1].is_number())
      throw Error(ErrorKind::Config, "field '" + join(key) + "' must be [lo, hi]");
    out = {a[0].get<double>(), a[1].get<double>()};
  }

 private:
  const Json& j_;
  std::string path_;
  std::vector<std::string>& unknown_;
  std::set<std::string> seen_;
};

inline Json space_json(const ShotParamSpace& s) {
  auto iv = [](const Interval& i) { return Json::array({i.lo, i.hi}); };
  return {{"x", iv(s.x)},
          {"y", iv(s.y)},
          {"z", iv(s.z)},
          {"speed_mps", iv(s.speed_mps)},
          {"elevation_deg", iv(s.elevation_deg)},
          {"azimuth_deg", iv(s.azimuth_deg)},
          {"spin_radps", iv(s.spin_radps)},
          {"spin_axis", vec3_json(s.spin_axis)},
          {"spin_cone_deg", s.spin_cone_deg}};
}

}  // namespace detail

inline Json to_json(const ExperimentConfig& c) {
  Json j;
  j["seed"] = c.seed;
  j["physics"] = {{"mass_kg", c.physics.mass_kg},
                  {"radius_m", c.physics.radius_m},
                  {"drag_coeff", c.physics.drag_coeff},
                  {"magnus_coeff", c.physics.magnus_coeff},
                  {"gravity", detail::vec3_json(c.physics.gravity)},
                  {"restitution", c.physics.restitution},
                  {"friction", c.physics.friction},
                  {"alpha_mode", c.physics.alpha_mode == AlphaMode::PaperVerbatim ? "paper_verbatim" : "standard_corrected"},
                  {"slip_epsilon", c.physics.slip_epsilon}};
  j["table"] = {{"length_m", c.table.length_m},
                {"width_m", c.table.width_m},
                {"surface_height_m", c.table.surface_height_m},
                {"net_height_m", c.table.net_height_m},
                {"net_overhang_m", c.table.net_overhang_m}};
  j["simulation"] = {{"horizon_s", c.simulation.horizon_s}, {"dt_s", c.simulation.dt_s}};
  Json mix = Json::object();
  for (const auto& [t, w] : c.synthhit.shot_mix) mix[to_string(t)] = w;
  Json spaces = Json::object();
  for (const auto& [t, s] : c.synthhit.spaces) spaces[to_string(t)] = detail::space_json(s);
  j["synthhit"] = {{"n_records", c.synthhit.n_records},
                   {"fps", c.synthhit.fps},
                   {"pixel_sigma", c.synthhit.noise.pixel_sigma},
                   {"mask_rate", c.synthhit.noise.mask_rate},
                   {"window_s", c.synthhit.noise.window_s},
                   {"camera_jitter_m", c.synthhit.camera_jitter_m},
                   {"max_rejection_rate", c.synthhit.max_rejection_rate},
                   {"shot_mix", mix},
                   {"spaces", spaces}};
  Json cams = Json::array();
  for (const auto& cs : c.cameras)
    cams.push_back({{"name", cs.name},
                    {"fx", cs.intrinsics.fx},
                    {"fy", cs.intrinsics.fy},
                    {"cx", cs.intrinsics.cx},
                    {"cy", cs.intrinsics.cy},
                    {"image_w", cs.intrinsics.image_w},
                    {"image_h", cs.intrinsics.image_h},
                    {"eye", detail::vec3_json(cs.eye)},
                    {"target", detail::vec3_json(cs.target)}});
  j["cameras"] = cams;
  const HitFormerConfig& h = c.hitformer;
  j["hitformer"] = {{"layers", h.layers},           {"heads", h.heads},
                    {"width", h.width},             {"ff_ratio", h.ff_ratio},
                    {"fps", h.fps},                 {"window_s", h.window_s},
                    {"moment_scale", h.moment_scale}, {"mask_rate_min", h.mask_rate_min},
                    {"mask_rate_max", h.mask_rate_max}, {"pixel_sigma_max", h.pixel_sigma_max},
                    {"hit_loss_weight", h.hit_loss_weight}, {"point_loss_weight", h.point_loss_weight},
                    {"epochs", h.epochs},           {"batch_size", h.batch_size},
                    {"lr", h.lr},                   {"lr_terminal", h.lr_terminal},
                    {"weight_decay", h.weight_decay}, {"activation", "gelu"}};
  j["recovery"] = {{"trigger_px", c.recovery.thresholds.trigger_px},
                   {"accept_px", c.recovery.thresholds.accept_px},
                   {"n_eval", c.recovery.n_eval},
                   {"eval_pixel_sigma", c.recovery.eval_pixel_sigma},
                   {"eval_mask_rate", c.recovery.eval_mask_rate}};
  j["match"] = {{"players", c.match.players}, {"rallies", c.match.rallies}};
  const HitFlowConfig& f = c.hitflow;
  j["hitflow"] = {{"hidden", f.hidden},
                  {"blocks", f.blocks},
                  {"embedding_dim", f.embedding_dim},
                  {"time_features", f.time_features},
                  {"film_hidden", f.film_hidden},
                  {"p_embedding", f.p_embedding},
                  {"p_condition", f.p_condition},
                  {"p_modulation", f.p_modulation},
                  {"epochs", f.epochs},
                  {"batch_size", f.batch_size},
                  {"batches_per_epoch", f.batches_per_epoch},
                  {"lr_main", f.lr_main},
                  {"lr_film", f.lr_film},
                  {"lr_terminal", f.lr_terminal},
                  {"weight_decay", f.weight_decay},
                  {"balanced_sampling", f.balanced_sampling},
                  {"ode_steps", f.ode_steps},
                  {"activation", "silu"}};
  j["sample"] = {{"n", c.sample.n}, {"ode_steps", c.sample.ode_steps}};
  j["skillnet"] = {{"hidden", c.skillnet.hidden},
                   {"epochs", c.skillnet.epochs},
                   {"lr", c.skillnet.lr},
                   {"weight_decay", c.skillnet.weight_decay},
                   {"standardize", c.skillnet.standardize},
                   {"activation", "tanh"}};
  j["probe"] = {{"l2", c.probe.probe.l2},
                {"resamples", c.probe.probe.resamples},
                {"n_labeled_min", c.probe.n_labeled_min},
                {"n_labeled_max", c.probe.n_labeled_max}};
  return j;
}

/// Applies a (possibly partial) JSON document on top of `base`.
inline ExperimentConfig config_from_json(const Json& j, ExperimentConfig c = {}) {
  using detail::ObjectReader;
  std::vector<std::string> unknown;
  {
  ObjectReader root(j, "", unknown);
  root.get("seed", c.seed);
  if (const Json* s = root.sub("physics")) {
    ObjectReader r(*s, "physics", unknown);
    r.get("mass_kg", c.physics.mass_kg);
    r.get("radius_m", c.physics.radius_m);
    r.get("drag_coeff", c.physics.drag_coeff);
    r.get("magnus_coeff", c.physics.magnus_coeff);
    r.get_vec3("gravity", c.physics.gravity);
    r.get("restitution", c.physics.restitution);
    r.get("friction", c.physics.friction);
    r.get("slip_epsilon", c.physics.slip_epsilon);
    std::string mode;
    r.get("alpha_mode", mode);
    if (mode == "paper_verbatim") c.physics.alpha_mode = AlphaMode::PaperVerbatim;
    else if (mode == "standard_corrected") c.physics.alpha_mode = AlphaMode::StandardCorrected;
    else if (!mode.empty()) throw Error(ErrorKind::Config, "field 'physics.alpha_mode': unknown value '" + mode + "'");
  }
  if (const Json* s = root.sub("table")) {
    ObjectReader r(*s, "table", unknown);
    r.get("length_m", c.table.length_m);
    r.get("width_m", c.table.width_m);
    r.get("surface_height_m", c.table.surface_height_m);
    r.get("net_height_m", c.table.net_height_m);
    r.get("net_overhang_m", c.table.net_overhang_m);
  }
  if (const Json* s = root.sub("simulation")) {
    ObjectReader r(*s, "simulation", unknown);
    r.get("horizon_s", c.simulation.horizon_s);
    r.get("dt_s", c.simulation.dt_s);
  }
  if (const Json* s = root.sub("synthhit")) {
    ObjectReader r(*s, "synthhit", unknown);
    r.get("n_records", c.synthhit.n_records);
    r.get("fps", c.synthhit.fps);
    r.get("pixel_sigma", c.synthhit.noise.pixel_sigma);
    r.get("mask_rate", c.synthhit.noise.mask_rate);
    r.get("window_s", c.synthhit.noise.window_s);
    r.get("camera_jitter_m", c.synthhit.camera_jitter_m);
    r.get("max_rejection_rate", c.synthhit.max_rejection_rate);
    if (const Json* m = r.sub("shot_mix")) {
      if (!m->is_object()) throw Error(ErrorKind::Config, "'synthhit.shot_mix' must be an object");
      c.synthhit.shot_mix.clear();
      for (auto it = m->begin(); it != m->end(); ++it) {
        const ShotType t = parse_shot_type(it.key());
        if (!it.value().is_number() || it.value().get<double>() < 0.0)
          throw Error(ErrorKind::Config, "field 'synthhit.shot_mix." + it.key() + "' must be a weight >= 0");
        if (it.value().get<double>() > 0.0) c.synthhit.shot_mix.emplace_back(t, it.value().get<double>());
      }
      if (c.synthhit.shot_mix.empty()) throw Error(ErrorKind::Config, "'synthhit.shot_mix' has no positive weight");
    }
    if (const Json* sp = r.sub("spaces")) {
      if (!sp->is_object()) throw Error(ErrorKind::Config, "'synthhit.spaces' must be an object");
      for (auto it = sp->begin(); it != sp->end(); ++it) {
        const ShotType t = parse_shot_type(it.key());
        if (t == ShotType::Random) throw Error(ErrorKind::Config, "'synthhit.spaces.random' is derived, not configurable");
        ShotParamSpace& space = c.synthhit.spaces[t];
        ObjectReader sr(it.value(), "synthhit.spaces." + it.key(), unknown);
        sr.get_interval("x", space.x);
        sr.get_interval("y", space.y);
        sr.get_interval("z", space.z);
        sr.get_interval("speed_mps", space.speed_mps);
        sr.get_interval("elevation_deg", space.elevation_deg);
        sr.get_interval("azimuth_deg", space.azimuth_deg);
        sr.get_interval("spin_radps", space.spin_radps);
        sr.get_vec3("spin_axis", space.spin_axis);
        sr.get("spin_cone_deg", space.spin_cone_deg);
      }
    }
  }
  if (const Json* s = root.sub("cameras")) {
    if (!s->is_array()) throw Error(ErrorKind::Config, "'cameras' must be an array");
    c.cameras.clear();
    for (std::size_t i = 0; i < s->size(); ++i) {
      ObjectReader r((*s)[i], "cameras[" + std::to_string(i) + "]", unknown);
      CameraSpec cs;
      cs.intrinsics.fx = cs.intrinsics.fy = 900.0;
      r.get("name", cs.name);
      r.get("fx", cs.intrinsics.fx);
      r.get("fy", cs.intrinsics.fy);
      r.get("cx", cs.intrinsics.cx);
      r.get("cy", cs.intrinsics.cy);
      r.get("image_w", cs.intrinsics.image_w);
      r.get("image_h", cs.intrinsics.image_h);
      r.get_vec3("eye", cs.eye);
      r.get_vec3("target", cs.target);
      c.cameras.push_back(cs);
    }
  }
  if (const Json* s = root.sub("hitformer")) {
    ObjectReader r(*s, "hitformer", unknown);
    HitFormerConfig& h = c.hitformer;
    r.get("layers", h.layers);
    r.get("heads", h.heads);
    r.get("width", h.width);
    r.get("ff_ratio", h.ff_ratio);
    r.get("fps", h.fps);
    r.get("window_s", h.window_s);
    r.get("moment_scale", h.moment_scale);
    r.get("mask_rate_min", h.mask_rate_min);
    r.get("mask_rate_max", h.mask_rate_max);
    r.get("pixel_sigma_max", h.pixel_sigma_max);
    r.get("hit_loss_weight", h.hit_loss_weight);
    r.get("point_loss_weight", h.point_loss_weight);
    r.get("epochs", h.epochs);
    r.get("batch_size", h.batch_size);
    r.get("lr", h.lr);
    r.get("lr_terminal", h.lr_terminal);
    r.get("weight_decay", h.weight_decay);
    std::string act = "gelu";
    r.get("activation", act);
    if (act != "gelu") throw Error(ErrorKind::Config, "field 'hitformer.activation': only 'gelu' is supported");
  }
  if (const Json* s = root.sub("recovery")) {
    ObjectReader r(*s, "recovery", unknown);
    r.get("trigger_px", c.recovery.thresholds.trigger_px);
    r.get("accept_px", c.recovery.thresholds.accept_px);
    r.get("n_eval", c.recovery.n_eval);
    r.get("eval_pixel_sigma", c.recovery.eval_pixel_sigma);
    r.get("eval_mask_rate", c.recovery.eval_mask_rate);
  }
  if (const Json* s = root.sub("match")) {
    ObjectReader r(*s, "match", unknown);
    r.get("players", c.match.players);
    r.get("rallies", c.match.rallies);
  }
  if (const Json* s = root.sub("hitflow")) {
    ObjectReader r(*s, "hitflow", unknown);
    HitFlowConfig& f = c.hitflow;
    r.get("hidden", f.hidden);
    r.get("blocks", f.blocks);
    r.get("embedding_dim", f.embedding_dim);
    r.get("time_features", f.time_features);
    r.get("film_hidden", f.film_hidden);
    r.get("p_embedding", f.p_embedding);
    r.get("p_condition", f.p_condition);
    r.get("p_modulation", f.p_modulation);
    r.get("epochs", f.epochs);
    r.get("batch_size", f.batch_size);
    r.get("batches_per_epoch", f.batches_per_epoch);
    r.get("lr_main", f.lr_main);
    r.get("lr_film", f.lr_film);
    r.get("lr_terminal", f.lr_terminal);
    r.get("weight_decay", f.weight_decay);
    r.get("balanced_sampling", f.balanced_sampling);
    r.get("ode_steps", f.ode_steps);
    std::string act = "silu";
    r.get("activation", act);
    if (act != "silu") throw Error(ErrorKind::Config, "field 'hitflow.activation': only 'silu' is supported");
  }
  if (const Json* s = root.sub("sample")) {
    ObjectReader r(*s, "sample", unknown);
    r.get("n", c.sample.n);
    r.get("ode_steps", c.sample.ode_steps);
  }
  if (const Json* s = root.sub("skillnet")) {
    ObjectReader r(*s, "skillnet", unknown);
    r.get("hidden", c.skillnet.hidden);
    r.get("epochs", c.skillnet.epochs);
    r.get("lr", c.skillnet.lr);
    r.get("weight_decay", c.skillnet.weight_decay);
    r.get("standardize", c.skillnet.standardize);
    std::string act = "tanh";
    r.get("activation", act);
    if (act != "tanh") throw Error(ErrorKind::Config, "field 'skillnet.activation': only 'tanh' is supported");
  }
  if (const Json* s = root.sub("probe")) {
    ObjectReader r(*s, "probe", unknown);
    r.get("l2", c.probe.probe.l2);
    r.get("resamples", c.probe.probe.resamples);
    r.get("n_labeled_min", c.probe.n_labeled_min);
    r.get("n_labeled_max", c.probe.n_labeled_max);
  }
  }
  if (!unknown.empty()) throw Error(ErrorKind::Config, "unknown field '" + unknown.front() + "'");
  c.sync_cameras();
  c.validate();
  return c;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw Error(ErrorKind::Config, "cannot open config file '" + path + "'");
  Json j;
  try {
    j = Json::parse(f);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorKind::Config, "config '" + path + "' is not valid JSON: " + e.what());
  }
  return config_from_json(j);
}

/// FNV-1a over the canonical (sorted-key) serialisation.
inline std::uint64_t config_hash(const ExperimentConfig& c) { return fnv1a(to_json(c).dump()); }

}  // namespace hitspace
