#pragma once

// Shot sampling over typed parameter spaces, SynthHit dataset generation with
// legality filtering, and planted player archetypes that play synthetic
// rallies with a known skill ordering.
//
// Every shot is sampled in the hitter's frame: the hitter stands on the -x
// half and plays towards +x.

#include "hitspace/context.hpp"
#include "hitspace/core.hpp"
#include "hitspace/geometry.hpp"
#include "hitspace/parallel.hpp"
#include "hitspace/physics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <numbers>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

namespace hitspace {

enum class ShotType {
  BananaFlick,
  Chop,
  Drive,
  Lob,
  Serve,
  Smash,
  Push,
  OtherLong,
  OtherShort,
  Other,
  Random,
};

inline constexpr std::array<ShotType, 11> kAllShotTypes{
    ShotType::BananaFlick, ShotType::Chop,      ShotType::Drive,      ShotType::Lob,
    ShotType::Serve,       ShotType::Smash,     ShotType::Push,       ShotType::OtherLong,
    ShotType::OtherShort,  ShotType::Other,     ShotType::Random};

inline constexpr std::array<ShotType, 10> kNamedShotTypes{
    ShotType::BananaFlick, ShotType::Chop,  ShotType::Drive,     ShotType::Lob,        ShotType::Serve,
    ShotType::Smash,       ShotType::Push,  ShotType::OtherLong, ShotType::OtherShort, ShotType::Other};

inline const char* to_string(ShotType t) {
  switch (t) {
    case ShotType::BananaFlick: return "banana_flick";
    case ShotType::Chop: return "chop";
    case ShotType::Drive: return "drive";
    case ShotType::Lob: return "lob";
    case ShotType::Serve: return "serve";
    case ShotType::Smash: return "smash";
    case ShotType::Push: return "push";
    case ShotType::OtherLong: return "other_long";
    case ShotType::OtherShort: return "other_short";
    case ShotType::Other: return "other";
    case ShotType::Random: return "random";
  }
  return "unknown";
}

inline ShotType parse_shot_type(const std::string& s) {
  for (ShotType t : kAllShotTypes)
    if (s == to_string(t)) return t;
  throw Error(ErrorKind::Config, "unknown shot type '" + s + "'");
}

struct Interval {
  double lo = 0.0, hi = 0.0;

  bool contains(double x, double tol = 1e-9) const { return x >= lo - tol && x <= hi + tol; }
  double sample(Rng& rng) const { return lo == hi ? lo : uniform(rng, lo, hi); }
  Interval hull(const Interval& o) const { return {std::min(lo, o.lo), std::max(hi, o.hi)}; }
  double width() const { return hi - lo; }
};

inline double deg2rad(double d) { return d * std::numbers::pi / 180.0; }
inline double rad2deg(double r) { return r * 180.0 / std::numbers::pi; }

/// Shot parameters in launch form. Angles in degrees; azimuth is measured
/// from +x towards +y, elevation from the horizontal.
struct ShotParamSpace {
  Interval x, y, z;
  Interval speed_mps;
  Interval elevation_deg;
  Interval azimuth_deg;
  Interval spin_radps;
  Vec3 spin_axis = Vec3::UnitY();
  double spin_cone_deg = 30.0;

  void validate(const std::string& name) const {
    for (const Interval* iv : {&x, &y, &z, &speed_mps, &elevation_deg, &azimuth_deg, &spin_radps}) {
      if (!(iv->lo <= iv->hi)) throw Error(ErrorKind::Config, "space '" + name + "': interval with lo > hi");
    }
    if (!(spin_axis.norm() > 0.0)) throw Error(ErrorKind::Config, "space '" + name + "': zero spin axis");
    if (!(spin_cone_deg >= 0.0 && spin_cone_deg <= 180.0))
      throw Error(ErrorKind::Config, "space '" + name + "': spin cone outside [0, 180] degrees");
  }

  bool contains(const HitVector& h, double tol = 1e-6) const {
    const double speed = h.vel_mps.norm();
    if (!(x.contains(h.pos_m.x(), tol) && y.contains(h.pos_m.y(), tol) && z.contains(h.pos_m.z(), tol)))
      return false;
    if (!speed_mps.contains(speed, tol)) return false;
    if (speed > 0.0) {
      const double el = rad2deg(std::asin(std::clamp(h.vel_mps.z() / speed, -1.0, 1.0)));
      const double az = rad2deg(std::atan2(h.vel_mps.y(), h.vel_mps.x()));
      if (!elevation_deg.contains(el, tol) || !azimuth_deg.contains(az, tol)) return false;
    }
    const double spin = h.angvel_radps.norm();
    if (!spin_radps.contains(spin, tol)) return false;
    if (spin > 1e-12) {
      const double c = std::clamp(h.angvel_radps.dot(spin_axis.normalized()) / spin, -1.0, 1.0);
      if (rad2deg(std::acos(c)) > spin_cone_deg + 1e-6) return false;
    }
    return true;
  }
};

/// Bounds every configured space must respect.
inline const ShotParamSpace& plausibility_box() {
  static const ShotParamSpace box{{-5.0, -0.5}, {-2.0, 2.0},     {-0.6, 1.6},   {0.5, 40.0},
                                  {-45.0, 70.0}, {-45.0, 45.0}, {0.0, 300.0}, Vec3::UnitY(), 180.0};
  return box;
}

inline bool within_box(const ShotParamSpace& s, const ShotParamSpace& box) {
  auto in = [](const Interval& a, const Interval& b) { return a.lo >= b.lo && a.hi <= b.hi; };
  return in(s.x, box.x) && in(s.y, box.y) && in(s.z, box.z) && in(s.speed_mps, box.speed_mps) &&
         in(s.elevation_deg, box.elevation_deg) && in(s.azimuth_deg, box.azimuth_deg) &&
         in(s.spin_radps, box.spin_radps);
}

using ShotSpaces = std::map<ShotType, ShotParamSpace>;

inline ShotSpaces default_shot_spaces() {
  const Vec3 top = Vec3::UnitY();
  const Vec3 back = -Vec3::UnitY();
  ShotSpaces s;
  //                          x              y             z             speed         elev          azim          spin          axis  cone
  s[ShotType::Smash] =       {{-2.4, -1.5}, {-0.6, 0.6}, {0.35, 0.9}, {18.0, 32.0}, {-14.0, -4.0}, {-10.0, 10.0}, {20.0, 120.0}, top, 30.0};
  s[ShotType::Drive] =       {{-2.4, -1.5}, {-0.7, 0.7}, {0.05, 0.4}, {8.0, 14.0},  {0.0, 12.0},    {-12.0, 12.0}, {50.0, 180.0}, top, 25.0};
  s[ShotType::Lob] =         {{-4.0, -2.5}, {-1.0, 1.0}, {-0.2, 0.4}, {6.5, 10.0},  {20.0, 40.0},  {-10.0, 10.0}, {30.0, 150.0}, top, 30.0};
  s[ShotType::Chop] =        {{-3.0, -2.0}, {-0.8, 0.8}, {-0.3, 0.2}, {5.0, 8.5},   {5.0, 20.0},   {-10.0, 10.0}, {60.0, 150.0}, back, 25.0};
  s[ShotType::Push] =        {{-1.6, -1.2}, {-0.5, 0.5}, {0.05, 0.25}, {3.5, 6.0},  {10.0, 30.0},  {-15.0, 15.0}, {20.0, 80.0},  back, 30.0};
  s[ShotType::BananaFlick] = {{-1.6, -1.15}, {-0.5, 0.5}, {0.05, 0.3}, {5.0, 9.0},  {5.0, 22.0},   {-15.0, 15.0}, {60.0, 150.0}, Vec3(0.0, 0.6, 0.8).normalized(), 25.0};
  s[ShotType::OtherLong] =   {{-2.6, -1.5}, {-0.7, 0.7}, {-0.1, 0.5}, {6.0, 11.0},  {2.0, 20.0},   {-12.0, 12.0}, {0.0, 100.0},  top, 90.0};
  s[ShotType::OtherShort] =  {{-1.7, -1.1}, {-0.6, 0.6}, {0.0, 0.3},  {3.0, 6.5},   {5.0, 30.0},   {-15.0, 15.0}, {0.0, 80.0},   top, 90.0};
  s[ShotType::Other] =       {{-3.0, -1.1}, {-0.8, 0.8}, {-0.2, 0.8}, {3.0, 20.0},  {-10.0, 35.0}, {-15.0, 15.0}, {0.0, 150.0},  top, 180.0};
  s[ShotType::Serve] =       {{-1.75, -1.4}, {-0.6, 0.6}, {0.05, 0.35}, {3.0, 9.0}, {-25.0, -5.0}, {-15.0, 15.0}, {20.0, 120.0}, top, 180.0};
  return s;
}

inline void validate_spaces(const ShotSpaces& spaces) {
  for (const auto& [type, space] : spaces) {
    space.validate(to_string(type));
    if (!within_box(space, plausibility_box()))
      throw Error(ErrorKind::Config, std::string("space '") + to_string(type) + "' exceeds the plausibility box");
  }
}

namespace detail {

inline Vec3 any_orthogonal(const Vec3& a) {
  const Vec3 helper = std::abs(a.x()) < 0.9 ? Vec3::UnitX() : Vec3::UnitY();
  return a.cross(helper).normalized();
}

// Uniform direction within a cone of the given half-angle.
inline Vec3 sample_cone(const Vec3& axis, double half_angle_deg, Rng& rng) {
  const Vec3 a = axis.normalized();
  const double cos_max = std::cos(deg2rad(half_angle_deg));
  const double c = 1.0 - uniform(rng, 0.0, 1.0) * (1.0 - cos_max);
  const double s = std::sqrt(std::max(0.0, 1.0 - c * c));
  const double phi = uniform(rng, 0.0, 2.0 * std::numbers::pi);
  const Vec3 u = any_orthogonal(a);
  const Vec3 v = a.cross(u);
  return c * a + s * (std::cos(phi) * u + std::sin(phi) * v);
}

inline Vec3 launch_velocity(double speed, double elevation_deg, double azimuth_deg) {
  const double el = deg2rad(elevation_deg), az = deg2rad(azimuth_deg);
  return speed * Vec3(std::cos(el) * std::cos(az), std::cos(el) * std::sin(az), std::sin(el));
}

}  // namespace detail

inline HitVector sample_from_space(const ShotParamSpace& s, Rng& rng) {
  HitVector h;
  h.pos_m = Vec3(s.x.sample(rng), s.y.sample(rng), s.z.sample(rng));
  const double speed = s.speed_mps.sample(rng);
  const double el = s.elevation_deg.sample(rng);
  const double az = s.azimuth_deg.sample(rng);
  h.vel_mps = detail::launch_velocity(speed, el, az);
  const double spin = s.spin_radps.sample(rng);
  h.angvel_radps = spin * detail::sample_cone(s.spin_axis, s.spin_cone_deg, rng);
  return h;
}

inline HitVector sample_hit(ShotType type, Rng& rng, const ShotSpaces& spaces = default_shot_spaces()) {
  if (type == ShotType::Random) throw Error(ErrorKind::InvalidInput, "use sample_random_shot for random shots");
  const auto it = spaces.find(type);
  if (it == spaces.end()) throw Error(ErrorKind::Config, std::string("no space configured for ") + to_string(type));
  return sample_from_space(it->second, rng);
}

inline HitVector sample_hit(ShotType type, std::uint64_t seed, const ShotSpaces& spaces = default_shot_spaces()) {
  Rng rng(seed);
  return sample_hit(type, rng, spaces);
}

/// Component-wise hull of every non-serve space. Random shots are drawn from
/// it, which fills the gaps between the named clusters.
inline ShotParamSpace bridging_box(const ShotSpaces& spaces) {
  std::optional<ShotParamSpace> hull;
  for (const auto& [type, s] : spaces) {
    if (type == ShotType::Serve || type == ShotType::Random) continue;
    if (!hull) {
      hull = s;
      continue;
    }
    hull->x = hull->x.hull(s.x);
    hull->y = hull->y.hull(s.y);
    hull->z = hull->z.hull(s.z);
    hull->speed_mps = hull->speed_mps.hull(s.speed_mps);
    hull->elevation_deg = hull->elevation_deg.hull(s.elevation_deg);
    hull->azimuth_deg = hull->azimuth_deg.hull(s.azimuth_deg);
    hull->spin_radps = hull->spin_radps.hull(s.spin_radps);
  }
  if (!hull) throw Error(ErrorKind::Config, "no non-serve spaces configured");
  hull->spin_cone_deg = 180.0;
  return *hull;
}

/// Scalars uniform over the bridging box; spin axis uniform over the union of
/// the non-serve spin cones.
inline HitVector sample_bridging_shot(Rng& rng, const ShotSpaces& spaces = default_shot_spaces()) {
  const ShotParamSpace box = bridging_box(spaces);
  HitVector h = sample_from_space(box, rng);
  const double spin = h.angvel_radps.norm();
  for (int attempt = 0; attempt < 10000; ++attempt) {
    const Vec3 axis = detail::sample_cone(Vec3::UnitZ(), 180.0, rng);
    for (const auto& [type, s] : spaces) {
      if (type == ShotType::Serve || type == ShotType::Random) continue;
      if (std::acos(std::clamp(axis.dot(s.spin_axis.normalized()), -1.0, 1.0)) <= deg2rad(s.spin_cone_deg)) {
        h.angvel_radps = spin * axis;
        return h;
      }
    }
  }
  throw Error(ErrorKind::Config, "spin cones of the non-serve spaces are empty");
}

/// Half the draws come from a non-serve space picked uniformly, half from the
/// bridging box so the regions between the named clusters are populated too.
inline HitVector sample_random_shot(Rng& rng, const ShotSpaces& spaces = default_shot_spaces()) {
  std::vector<const ShotParamSpace*> named;
  for (const auto& [type, s] : spaces)
    if (type != ShotType::Serve && type != ShotType::Random) named.push_back(&s);
  if (named.empty()) throw Error(ErrorKind::Config, "no non-serve spaces configured");
  if (bernoulli(rng, 0.5)) return sample_bridging_shot(rng, spaces);
  return sample_from_space(*named[rng() % named.size()], rng);
}

inline HitVector sample_random_shot(std::uint64_t seed, const ShotSpaces& spaces = default_shot_spaces()) {
  Rng rng(seed);
  return sample_random_shot(rng, spaces);
}

// ---------------------------------------------------------------------------
// SynthHit

/// Ball positions at the observation frame times, plus the simulator events.
struct SampledTrajectory {
  std::vector<double> times;
  std::vector<Vec3> points;
  std::vector<TrajectoryEvent> events;
};

inline SampledTrajectory sample_trajectory(const Trajectory& traj, const std::vector<double>& times,
                                           const PhysParams& p) {
  SampledTrajectory out;
  out.times = times;
  out.points.reserve(times.size());
  for (double t : times) out.points.push_back(state_at(traj, t, p).pos_m);
  out.events = traj.events;
  return out;
}

struct HitRecord {
  HitVector hit;
  ShotType shot_type = ShotType::Drive;
  SampledTrajectory trajectory;
  Observation2D observation;
  Camera camera;
  bool valid = false;
};

inline std::vector<Camera> default_cameras() {
  CameraIntrinsics intr;
  intr.fx = intr.fy = 900.0;
  std::vector<Camera> cams;
  cams.push_back({"side", intr, CameraPose::look_at(Vec3(0.0, -5.5, 1.6), Vec3(0.0, 0.0, 0.0))});
  cams.push_back({"oblique", intr, CameraPose::look_at(Vec3(-4.2, -4.2, 1.9), Vec3(0.2, 0.0, 0.0))});
  cams.push_back({"back", intr, CameraPose::look_at(Vec3(-6.0, 0.0, 2.0), Vec3(0.5, 0.0, 0.0))});
  return cams;
}

struct SynthHitConfig {
  std::size_t n_records = 50000;
  std::vector<std::pair<ShotType, double>> shot_mix = [] {
    std::vector<std::pair<ShotType, double>> mix;
    for (ShotType t : kAllShotTypes) mix.emplace_back(t, 1.0);
    return mix;
  }();
  ShotSpaces spaces = default_shot_spaces();
  std::vector<Camera> cameras = default_cameras();
  // Uniform jitter applied to each camera position per record.
  double camera_jitter_m = 0.25;
  double fps = 30.0;
  ObservationNoise noise{1.0, 0.2, 1.0};
  SimulationOptions sim{};
  double max_rejection_rate = 0.99;
  // Hard cap on draws for a single record.
  int max_attempts_per_record = 20000;
};

inline Camera jitter_camera(const Camera& cam, double jitter_m, Rng& rng) {
  if (jitter_m <= 0.0) return cam;
  const Vec3 eye = cam.pose.center() + Vec3(uniform(rng, -jitter_m, jitter_m), uniform(rng, -jitter_m, jitter_m),
                                             uniform(rng, -jitter_m, jitter_m));
  const Vec3 forward = cam.pose.rotation.row(2).transpose();
  // Keep the look-at target on the original optical axis near the table.
  const double depth = std::max(1.0, -cam.pose.center().dot(forward));
  const Vec3 target = cam.pose.center() + depth * forward +
                      Vec3(uniform(rng, -0.2, 0.2), uniform(rng, -0.2, 0.2), uniform(rng, -0.1, 0.1));
  Camera out = cam;
  out.pose = CameraPose::look_at(eye, target);
  return out;
}

struct SynthHitStats {
  std::map<ShotType, std::size_t> attempts;
  std::map<ShotType, std::size_t> accepted;
};

struct SynthHitDataset {
  std::vector<HitRecord> records;
  SynthHitStats stats;
};

inline ShotType draw_shot_type(const std::vector<std::pair<ShotType, double>>& mix, Rng& rng) {
  double total = 0.0;
  for (const auto& [t, w] : mix) total += w;
  double u = uniform(rng, 0.0, total);
  for (const auto& [t, w] : mix) {
    if (u < w) return t;
    u -= w;
  }
  return mix.back().first;
}

/// Draw one legal shot of the given type together with its trajectory.
/// Returns the number of draws it took.
inline int draw_valid_shot(ShotType type, const SynthHitConfig& cfg, const PhysParams& phys,
                           const TableGeometry& table, Rng& rng, HitVector& hit, Trajectory& traj) {
  for (int attempt = 1; attempt <= cfg.max_attempts_per_record; ++attempt) {
    hit = type == ShotType::Random ? sample_random_shot(rng, cfg.spaces) : sample_hit(type, rng, cfg.spaces);
    traj = simulate(hit, phys, table, cfg.sim);
    if (is_valid_shot(traj, table, type == ShotType::Serve, TableSide::Negative)) return attempt;
  }
  throw Error(ErrorKind::Config, std::string("space '") + to_string(type) + "' produced no valid shot in " +
                                     std::to_string(cfg.max_attempts_per_record) + " draws");
}

inline HitRecord make_record(ShotType type, const HitVector& hit, const Trajectory& traj, const SynthHitConfig& cfg,
                             const PhysParams& phys, Rng& rng) {
  HitRecord rec;
  rec.hit = hit;
  rec.shot_type = type;
  rec.valid = true;
  const std::size_t cam_index =
      static_cast<std::size_t>(std::uniform_int_distribution<std::size_t>(0, cfg.cameras.size() - 1)(rng));
  rec.camera = jitter_camera(cfg.cameras[cam_index], cfg.camera_jitter_m, rng);
  rec.observation = project_trajectory(traj, rec.camera, cfg.fps, cfg.noise, phys, rng);
  rec.observation.camera_id = static_cast<int>(cam_index);
  rec.trajectory = sample_trajectory(traj, frame_times(traj, cfg.fps, cfg.noise.window_s), phys);
  return rec;
}

/// Rejection-samples legal shots until n_records are collected. Record i
/// depends only on (seed, i), so the output is identical for any job count.
inline SynthHitDataset generate_synthhit(const SynthHitConfig& cfg, const PhysParams& phys,
                                         const TableGeometry& table, std::uint64_t seed, int jobs = 1) {
  if (cfg.n_records == 0) throw Error(ErrorKind::Config, "n_records must be > 0");
  if (cfg.cameras.empty()) throw Error(ErrorKind::Config, "camera set is empty");
  if (cfg.shot_mix.empty()) throw Error(ErrorKind::Config, "shot mix is empty");
  validate_spaces(cfg.spaces);

  SynthHitDataset ds;
  ds.records.resize(cfg.n_records);
  std::vector<std::pair<ShotType, int>> draws(cfg.n_records);
  parallel_for(cfg.n_records, jobs, [&](std::size_t i) {
    Rng rng = substream(seed, "synthhit", i);
    const ShotType type = draw_shot_type(cfg.shot_mix, rng);
    HitVector hit;
    Trajectory traj;
    const int attempts = draw_valid_shot(type, cfg, phys, table, rng, hit, traj);
    ds.records[i] = make_record(type, hit, traj, cfg, phys, rng);
    draws[i] = {type, attempts};
  });
  for (const auto& [type, attempts] : draws) {
    ds.stats.attempts[type] += static_cast<std::size_t>(attempts);
    ds.stats.accepted[type] += 1;
  }
  for (const auto& [type, attempts] : ds.stats.attempts) {
    const double rejection = 1.0 - static_cast<double>(ds.stats.accepted[type]) / static_cast<double>(attempts);
    if (attempts >= 200 && rejection > cfg.max_rejection_rate)
      throw Error(ErrorKind::Config, std::string("space '") + to_string(type) + "' rejection rate " +
                                         std::to_string(rejection) + " exceeds the limit");
  }
  return ds;
}

// ---------------------------------------------------------------------------
// Planted players

enum class Handedness { Left, Right };

struct PlayStyle {
  double aggression = 0.5;  // [0, 1]: pace and early timing
  double spin_bias = 0.5;   // [0, 1]: topspin emphasis
  double placement_variance = 0.01;  // m^2, landing-point variance per axis
};

struct PlayerArchetype {
  int player_id = 0;
  double skill = 0.5;
  Handedness hand = Handedness::Right;
  PlayStyle style;
  int sex_tag = 0;
};

/// Default skill-to-placement mapping; strictly decreasing in skill.
inline double placement_variance_for_skill(double skill) {
  const double sigma = 0.04 + 0.30 * (1.0 - skill);
  return sigma * sigma;
}

/// k players with skills equispaced over [0.1, 0.9], assigned to ids in a
/// seeded random order; handedness and sex tags balanced and independent.
inline std::vector<PlayerArchetype> make_archetypes(int k, std::uint64_t seed) {
  if (k < 2) throw Error(ErrorKind::InvalidInput, "need at least two archetypes");
  Rng rng = substream(seed, "archetypes");
  std::vector<int> skill_order(static_cast<std::size_t>(k));
  std::iota(skill_order.begin(), skill_order.end(), 0);
  std::shuffle(skill_order.begin(), skill_order.end(), rng);
  std::vector<int> hand_order = skill_order;
  std::shuffle(hand_order.begin(), hand_order.end(), rng);
  std::vector<int> sex_order = skill_order;
  std::shuffle(sex_order.begin(), sex_order.end(), rng);

  std::vector<PlayerArchetype> out(static_cast<std::size_t>(k));
  for (int i = 0; i < k; ++i) {
    PlayerArchetype& a = out[static_cast<std::size_t>(i)];
    a.player_id = i;
    a.skill = 0.1 + 0.8 * static_cast<double>(skill_order[static_cast<std::size_t>(i)]) / static_cast<double>(k - 1);
    a.hand = hand_order[static_cast<std::size_t>(i)] < k / 2 ? Handedness::Left : Handedness::Right;
    a.sex_tag = sex_order[static_cast<std::size_t>(i)] < k / 2 ? 1 : 0;
    a.style.aggression = uniform(rng, 0.2, 0.8);
    a.style.spin_bias = uniform(rng, 0.0, 1.0);
    a.style.placement_variance = placement_variance_for_skill(a.skill);
  }
  return out;
}

namespace detail {

// Where the first table bounce of a shot played towards +x lands along x.
// Short shots (net, own half, floor before the net) map to -inf, long ones
// to +inf.
inline double landing_x(const HitVector& hit, const PhysParams& phys, const TableGeometry& table,
                        const SimulationOptions& sim) {
  const Trajectory traj = simulate(hit, phys, table, sim);
  for (const auto& e : traj.events) {
    if (e.kind == EventKind::OutOfVolume) continue;
    if (e.kind == EventKind::TableBounce)
      return e.side == TableSide::Positive ? e.pos_m.x() : -std::numeric_limits<double>::infinity();
    if (e.kind == EventKind::NetContact) return -std::numeric_limits<double>::infinity();
    return e.pos_m.x() < 0.0 ? -std::numeric_limits<double>::infinity() : std::numeric_limits<double>::infinity();
  }
  return traj.states.back().pos_m.x() < 0.0 ? -std::numeric_limits<double>::infinity()
                                            : std::numeric_limits<double>::infinity();
}

// Launch elevation that lands the ball at target_x, by bisection.
inline double solve_elevation(HitVector hit, double speed, double azimuth_deg, double target_x,
                              const PhysParams& phys, const TableGeometry& table) {
  SimulationOptions sim;
  sim.horizon_s = 1.2;
  auto landing = [&](double el) {
    hit.vel_mps = launch_velocity(speed, el, azimuth_deg);
    return landing_x(hit, phys, table, sim);
  };
  double lo = -25.0, hi = 50.0;
  if (landing(lo) >= target_x) return lo;
  if (landing(hi) <= target_x) return hi;
  for (int it = 0; it < 18; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (landing(mid) < target_x) lo = mid;
    else hi = mid;
  }
  return 0.5 * (lo + hi);
}

inline HitVector first_responder_contact_default() {
  HitVector h;
  h.pos_m = Vec3(-1.8, 0.0, 0.25);
  return h;
}

}  // namespace detail

/// Where the responder meets the incoming ball: shortly after its bounce on
/// the responder's half, earlier for aggressive players.
inline Vec3 contact_point(const PlayerArchetype& arch, const GameContext& ctx, const PhysParams& phys,
                          const TableGeometry& table) {
  Vec3 contact = detail::first_responder_contact_default().pos_m;
  SimulationOptions sim;
  sim.horizon_s = 1.5;
  const Trajectory incoming = simulate(ctx.opponent_hit, phys, table, sim);
  for (const auto& e : incoming.events) {
    if (e.kind != EventKind::TableBounce) continue;
    if (e.side != TableSide::Negative) continue;
    const double delay = 0.10 + 0.12 * (1.0 - arch.style.aggression);
    contact = state_at(incoming, e.t_s + delay, phys).pos_m;
    break;
  }
  contact.x() = std::clamp(contact.x(), -3.0, -1.0);
  contact.y() = std::clamp(contact.y(), -0.9, 0.9);
  contact.z() = std::clamp(contact.z(), 0.02, 0.8);
  return contact;
}

/// Draw a response from the archetype's conditional distribution. A
/// right-hander's response is computed directly; a left-hander plays the
/// lateral mirror image of the same situation.
inline HitVector sample_player_response(const PlayerArchetype& arch, const GameContext& ctx, Rng& rng,
                                        const PhysParams& phys = {}, const TableGeometry& table = {}) {
  const bool left = arch.hand == Handedness::Left;
  GameContext local = ctx;
  if (left) local.opponent_hit = mirror_lateral(ctx.opponent_hit);

  const PlayStyle& st = arch.style;
  const double sigma = std::sqrt(st.placement_variance);
  Vec3 pos = contact_point(arch, local, phys, table);
  pos += Vec3(gaussian(rng, 0.03), 0.08 + gaussian(rng, 0.03), gaussian(rng, 0.02));
  pos.z() = std::max(pos.z(), 0.02);

  // Right-handers favour their forehand diagonal (+y on the far half).
  const double target_x = std::clamp(0.95 + 0.2 * st.aggression + gaussian(rng, 0.4 * sigma), 0.2, 1.3);
  const double target_y = std::clamp(0.25 - 0.3 * pos.y() + gaussian(rng, sigma), -0.7, 0.7);
  const double speed = std::max(3.0, 7.0 + 9.0 * arch.skill + 3.0 * st.aggression + gaussian(rng, 0.6));
  const double topspin = 40.0 + 120.0 * arch.skill * (0.5 + st.spin_bias) + gaussian(rng, 10.0);
  const double sidespin = 20.0 + gaussian(rng, 8.0);

  HitVector h;
  h.pos_m = pos;
  h.angvel_radps = Vec3(0.0, topspin, sidespin);
  const double azimuth = rad2deg(std::atan2(target_y - pos.y(), target_x - pos.x()));
  const double elevation = detail::solve_elevation(h, speed, azimuth, target_x, phys, table);
  h.vel_mps = detail::launch_velocity(speed, elevation, azimuth);
  return left ? mirror_lateral(h) : h;
}

inline HitVector sample_player_response(const PlayerArchetype& arch, const GameContext& ctx, std::uint64_t seed,
                                        const PhysParams& phys = {}, const TableGeometry& table = {}) {
  Rng rng(seed);
  return sample_player_response(arch, ctx, rng, phys, table);
}

// ---------------------------------------------------------------------------
// Rallies

struct RallyRecord {
  GameContext context;
  int player_id = 0;
  int opponent_id = 0;
  HitVector response;
  int rally_id = 0;
  int response_step = 0;
};

struct MatchDataset {
  std::vector<PlayerArchetype> players;
  std::vector<RallyRecord> records;
  // Player ids ordered from highest to lowest skill.
  std::vector<int> rank_order;

  /// 1-based true rank of each player id (1 = most skilled).
  std::vector<int> true_ranks() const {
    std::vector<int> ranks(players.size(), 0);
    for (std::size_t r = 0; r < rank_order.size(); ++r) ranks[static_cast<std::size_t>(rank_order[r])] = static_cast<int>(r) + 1;
    return ranks;
  }
};

inline std::vector<int> rank_order_by_skill(const std::vector<PlayerArchetype>& players) {
  std::vector<int> ids;
  for (const auto& p : players) ids.push_back(p.player_id);
  std::sort(ids.begin(), ids.end(), [&](int a, int b) {
    return players[static_cast<std::size_t>(a)].skill > players[static_cast<std::size_t>(b)].skill;
  });
  return ids;
}

inline constexpr int kStepsPerShot = 12;
inline constexpr int kContextGap = 2;

namespace detail {

// Fixed projection from kinematic summaries to motion features.
inline const Eigen::MatrixXd& motion_basis() {
  static const Eigen::MatrixXd basis = [] {
    Rng rng = substream(0x6d6f74696f6eULL, "motion-basis");
    Eigen::MatrixXd b(kMotionWidth, 8);
    for (Eigen::Index i = 0; i < b.rows(); ++i)
      for (Eigen::Index j = 0; j < b.cols(); ++j) b(i, j) = gaussian(rng, 0.6);
    return b;
  }();
  return basis;
}

inline Eigen::VectorXd motion_features(const Vec3& loc, const Vec3& vel, double orientation, double phase, Rng& rng) {
  Eigen::Matrix<double, 8, 1> b;
  b << loc.x() + 2.0, loc.y(), loc.z(), vel.x(), vel.y(), std::cos(orientation), std::sin(orientation), phase;
  Eigen::VectorXd out = motion_basis() * b;
  for (Eigen::Index i = 0; i < out.size(); ++i) out[i] = std::tanh(out[i] + gaussian(rng, 0.1));
  return out;
}

}  // namespace detail

/// Assemble the context for a response at `response_step`: the motion window
/// covers the kContextSteps steps ending kContextGap steps before it.
/// `self_from`/`self_to` bound the responder's movement, `opp_from`/`opp_to`
/// the opponent's, over one shot cycle.
inline GameContext build_context(const HitVector& opponent_hit_local, const Vec3& self_from, const Vec3& self_to,
                                 const Vec3& opp_from, const Vec3& opp_to, int response_step, Rng& rng) {
  GameContext ctx;
  ctx.opponent_hit = opponent_hit_local;
  ctx.end_step = response_step - kContextGap;
  const int cycle_start = response_step - kStepsPerShot;
  const std::array<Vec3, 2> from{self_from, opp_from};
  const std::array<Vec3, 2> to{self_to, opp_to};
  const std::array<double, 2> facing{0.0, std::numbers::pi};
  for (int p = 0; p < 2; ++p) {
    const auto up = static_cast<std::size_t>(p);
    const Vec3 vel = (to[up] - from[up]) / static_cast<double>(kStepsPerShot);
    for (int s = 0; s < kContextSteps; ++s) {
      const int step = ctx.end_step - (kContextSteps - 1) + s;
      const double f = std::clamp(static_cast<double>(step - cycle_start) / (kStepsPerShot - kContextGap), 0.0, 1.0);
      const Vec3 loc = from[up] + f * (to[up] - from[up]);
      const double orient = facing[up] + gaussian(rng, 0.05);
      ctx.motion[up].row(s) =
          detail::motion_features(loc, vel, orient, std::sin(0.5 * static_cast<double>(step)), rng).transpose();
      if (s == kContextSteps - 1) {
        ctx.location[up] = loc;
        ctx.orientation[up] = orient;
      }
    }
  }
  return ctx;
}

/// Alternating-shot rallies between scheduled pairs. Every response after the
/// serve becomes one record, expressed in the responder's frame.
inline MatchDataset generate_match_dataset(const std::vector<PlayerArchetype>& players, int n_rallies,
                                           std::uint64_t seed, const PhysParams& phys = {},
                                           const TableGeometry& table = {}, int jobs = 1) {
  if (players.size() < 2) throw Error(ErrorKind::InvalidInput, "need at least two players");
  for (std::size_t i = 0; i < players.size(); ++i)
    if (players[i].player_id != static_cast<int>(i))
      throw Error(ErrorKind::InvalidInput, "player ids must be 0..k-1 in order");

  std::vector<std::pair<int, int>> pairs;
  for (int a = 0; a < static_cast<int>(players.size()); ++a)
    for (int b = a + 1; b < static_cast<int>(players.size()); ++b) pairs.emplace_back(a, b);
  {
    Rng sched = substream(seed, "schedule");
    std::shuffle(pairs.begin(), pairs.end(), sched);
  }

  SynthHitConfig serve_cfg;
  serve_cfg.sim.horizon_s = 1.5;
  std::vector<std::vector<RallyRecord>> per_rally(static_cast<std::size_t>(std::max(0, n_rallies)));
  parallel_for(per_rally.size(), jobs, [&](std::size_t r) {
    Rng rng = substream(seed, "rally", r);
    auto [a, b] = pairs[r % pairs.size()];
    if ((r / pairs.size()) % 2 == 1) std::swap(a, b);
    int hitter = a;
    HitVector prev_hit;
    Trajectory scratch;
    draw_valid_shot(ShotType::Serve, serve_cfg, phys, table, rng, prev_hit, scratch);
    const int n_responses = 2 + static_cast<int>(rng() % 5);
    Vec3 loc[2] = {Vec3(-2.0, 0.0, 0.14), Vec3(-2.0, 0.0, 0.14)};  // each in its own frame
    int step = 0;
    for (int k = 0; k < n_responses; ++k) {
      const int responder = hitter == a ? b : a;
      const std::size_t ri = responder == a ? 0 : 1, hi = 1 - ri;
      step += kStepsPerShot;
      const HitVector incoming = rotate_half_turn(prev_hit);
      const PlayerArchetype& arch = players[static_cast<std::size_t>(responder)];
      const Vec3 contact = contact_point(arch, GameContext{.opponent_hit = incoming}, phys, table);
      const Vec3 self_to(contact.x() - 0.4, contact.y(), 0.14);
      const Vec3 opp_hit_spot(-incoming.pos_m.x() - 0.4, -incoming.pos_m.y(), 0.14);
      const Vec3 opp_from(-opp_hit_spot.x(), -opp_hit_spot.y(), 0.14);
      const Vec3 opp_to(2.0, 0.0, 0.14);
      GameContext ctx = build_context(incoming, loc[ri], self_to, opp_from, opp_to, step, rng);
      RallyRecord rec;
      rec.context = std::move(ctx);
      rec.player_id = responder;
      rec.opponent_id = hitter;
      rec.response = sample_player_response(arch, rec.context, rng, phys, table);
      rec.rally_id = static_cast<int>(r);
      rec.response_step = step;
      per_rally[r].push_back(rec);
      loc[ri] = self_to;
      loc[hi] = Vec3(-2.0, 0.0, 0.14);
      prev_hit = rec.response;
      hitter = responder;
    }
  });

  MatchDataset ds;
  ds.players = players;
  ds.rank_order = rank_order_by_skill(players);
  for (auto& rally : per_rally)
    for (auto& rec : rally) ds.records.push_back(std::move(rec));
  return ds;
}

}  // namespace hitspace
