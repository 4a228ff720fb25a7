#pragma once

// Ball flight under gravity, drag and Magnus force, table bounces through the
// Coulomb-friction transition matrices, and shot legality checks.
//
// World frame: origin at the table centre on the playing surface, x along the
// table length, y across it, z up. The net lies in the plane x = 0 and the
// floor at z = -surface_height_m.

#include "hitspace/core.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <vector>

namespace hitspace {

enum class AlphaMode { PaperVerbatim, StandardCorrected };

struct PhysParams {
  double mass_kg = 0.0027;
  double radius_m = 0.02;
  double drag_coeff = 3.0e-4;    // k_D, kg/m
  double magnus_coeff = 9.0e-6;  // k_M, kg
  Vec3 gravity{0.0, 0.0, -9.81};
  double restitution = 0.93;
  double friction = 0.25;
  AlphaMode alpha_mode = AlphaMode::PaperVerbatim;
  // Tangential slip below this is treated as zero slip (specular bounce).
  double slip_epsilon = 1e-9;

  void validate() const {
    if (!(mass_kg > 0.0)) throw Error(ErrorKind::Config, "mass_kg must be > 0");
    if (!(radius_m > 0.0)) throw Error(ErrorKind::Config, "radius_m must be > 0");
    if (!(restitution > 0.0 && restitution <= 1.0))
      throw Error(ErrorKind::Config, "restitution must lie in (0, 1]");
    if (!(friction >= 0.0)) throw Error(ErrorKind::Config, "friction must be >= 0");
    if (!(drag_coeff >= 0.0)) throw Error(ErrorKind::Config, "drag_coeff must be >= 0");
    if (!(magnus_coeff >= 0.0)) throw Error(ErrorKind::Config, "magnus_coeff must be >= 0");
    if (!gravity.allFinite()) throw Error(ErrorKind::Config, "gravity must be finite");
  }
};

struct TableGeometry {
  double length_m = 2.74;
  double width_m = 1.525;
  double surface_height_m = 0.76;
  double net_height_m = 0.1525;
  // Net posts stand this far outside each sideline.
  double net_overhang_m = 0.1525;

  double half_length() const { return 0.5 * length_m; }
  double half_width() const { return 0.5 * width_m; }
  double floor_z() const { return -surface_height_m; }

  void validate() const {
    if (!(length_m > 0 && width_m > 0 && surface_height_m > 0 && net_height_m > 0))
      throw Error(ErrorKind::Config, "table dimensions must be > 0");
  }

  /// Playing-surface corners, counter-clockwise seen from above, starting at
  /// the (-x, -y) corner.
  std::array<Vec3, 4> corners() const {
    const double hx = half_length(), hy = half_width();
    return {Vec3(-hx, -hy, 0.0), Vec3(hx, -hy, 0.0), Vec3(hx, hy, 0.0), Vec3(-hx, hy, 0.0)};
  }
};

struct BallState {
  double t_s = 0.0;
  Vec3 pos_m = Vec3::Zero();
  Vec3 vel_mps = Vec3::Zero();
  Vec3 angvel_radps = Vec3::Zero();

  bool finite() const {
    return std::isfinite(t_s) && pos_m.allFinite() && vel_mps.allFinite() &&
           angvel_radps.allFinite();
  }
};

using HitArray = Eigen::Matrix<double, 9, 1>;

/// Initial state at racket contact; determines the whole trajectory.
struct HitVector {
  Vec3 pos_m = Vec3::Zero();
  Vec3 vel_mps = Vec3::Zero();
  Vec3 angvel_radps = Vec3::Zero();

  HitArray to_array() const {
    HitArray a;
    a << pos_m, vel_mps, angvel_radps;
    return a;
  }

  static HitVector from_array(const HitArray& a) {
    return {a.segment<3>(0), a.segment<3>(3), a.segment<3>(6)};
  }

  bool finite() const { return pos_m.allFinite() && vel_mps.allFinite() && angvel_radps.allFinite(); }

  void validate(const TableGeometry& table) const {
    if (!finite()) throw Error(ErrorKind::InvalidInput, "hit vector is not finite");
    if (pos_m.z() < table.floor_z())
      throw Error(ErrorKind::InvalidInput, "hit position lies below the floor");
  }

  BallState as_state() const { return {0.0, pos_m, vel_mps, angvel_radps}; }
};

enum class TableSide { Negative, Positive };

inline TableSide other(TableSide s) {
  return s == TableSide::Negative ? TableSide::Positive : TableSide::Negative;
}

inline TableSide side_of(double x) { return x < 0.0 ? TableSide::Negative : TableSide::Positive; }

enum class EventKind { TableBounce, NetContact, FloorContact, OutOfVolume };

inline const char* to_string(EventKind k) {
  switch (k) {
    case EventKind::TableBounce: return "table_bounce";
    case EventKind::NetContact: return "net";
    case EventKind::FloorContact: return "floor";
    case EventKind::OutOfVolume: return "out_of_volume";
  }
  return "unknown";
}

struct TrajectoryEvent {
  EventKind kind = EventKind::TableBounce;
  double t_s = 0.0;
  Vec3 pos_m = Vec3::Zero();
  // Table bounces only.
  TableSide side = TableSide::Negative;
  bool in_bounds = false;
  // State immediately after the event (post-bounce velocities for bounces).
  BallState after;
};

struct Trajectory {
  double dt_s = 0.0;
  std::vector<BallState> states;
  std::vector<TrajectoryEvent> events;

  bool empty() const { return states.empty(); }
  double end_time() const { return states.empty() ? 0.0 : states.back().t_s; }
};

// ---------------------------------------------------------------------------
// Flight

inline Vec3 flight_acceleration(const Vec3& vel, const Vec3& angvel, const PhysParams& p) {
  return (-p.drag_coeff * vel.norm() * vel + p.magnus_coeff * angvel.cross(vel)) / p.mass_kg +
         p.gravity;
}

/// m dv/dt = -k_D |v| v + k_M (w x v) + m g
inline Vec3 flight_derivative(const BallState& state, const PhysParams& p) {
  if (!state.finite()) throw Error(ErrorKind::InvalidInput, "non-finite ball state");
  if (!(p.mass_kg > 0.0)) throw Error(ErrorKind::InvalidInput, "mass_kg must be > 0");
  return flight_acceleration(state.vel_mps, state.angvel_radps, p);
}

/// One classical Runge-Kutta step. Spin is constant in flight.
inline BallState rk4_step(const BallState& s, double h, const PhysParams& p) {
  const Vec3& w = s.angvel_radps;
  const Vec3 v1 = s.vel_mps;
  const Vec3 a1 = flight_acceleration(v1, w, p);
  const Vec3 v2 = s.vel_mps + 0.5 * h * a1;
  const Vec3 a2 = flight_acceleration(v2, w, p);
  const Vec3 v3 = s.vel_mps + 0.5 * h * a2;
  const Vec3 a3 = flight_acceleration(v3, w, p);
  const Vec3 v4 = s.vel_mps + h * a3;
  const Vec3 a4 = flight_acceleration(v4, w, p);
  BallState out;
  out.t_s = s.t_s + h;
  out.pos_m = s.pos_m + (h / 6.0) * (v1 + 2.0 * v2 + 2.0 * v3 + v4);
  out.vel_mps = s.vel_mps + (h / 6.0) * (a1 + 2.0 * a2 + 2.0 * a3 + a4);
  out.angvel_radps = w;
  return out;
}

// ---------------------------------------------------------------------------
// Bounce

/// Rolling/sliding transition coefficient. std::nullopt signals zero
/// tangential slip, where the friction direction is undefined.
inline std::optional<double> compute_alpha(const Vec3& v_minus, const Vec3& w_minus,
                                           const PhysParams& p) {
  if (!v_minus.allFinite() || !w_minus.allFinite())
    throw Error(ErrorKind::InvalidInput, "non-finite velocity at bounce");
  const double r = p.radius_m;
  double numerator = 0.0;
  double slip_x = v_minus.x() - w_minus.y() * r;
  double slip_y = 0.0;
  if (p.alpha_mode == AlphaMode::PaperVerbatim) {
    numerator = p.friction * (1.0 + p.restitution * std::abs(v_minus.z()));
    slip_y = v_minus.y() - w_minus.x() * r;
  } else {
    numerator = p.friction * (1.0 + p.restitution) * std::abs(v_minus.z());
    slip_y = v_minus.y() + w_minus.x() * r;
  }
  const double denominator = std::sqrt(slip_x * slip_x + slip_y * slip_y);
  if (denominator < p.slip_epsilon) return std::nullopt;
  return numerator / denominator;
}

struct BounceMatrices {
  Mat3 A, B, C, D;
};

inline constexpr double kRollingThreshold = 0.4;

/// Matrices of the rolling-dominated regime, parameterised by alpha.
inline BounceMatrices rolling_matrices(double a, const PhysParams& p) {
  const double r = p.radius_m;
  BounceMatrices m;
  m.A << 1.0 - a, 0.0, 0.0,
         0.0, 1.0 - a, 0.0,
         0.0, 0.0, -p.restitution;
  m.B << 0.0, a * r, 0.0,
         -a * r, 0.0, 0.0,
         0.0, 0.0, 0.0;
  m.C << 0.0, -1.5 * a / r, 0.0,
         1.5 * a / r, 0.0, 0.0,
         0.0, 0.0, 0.0;
  m.D << 1.0 - 1.5 * a, 0.0, 0.0,
         0.0, 1.0 - 1.5 * a, 0.0,
         0.0, 0.0, 1.0;
  return m;
}

/// Fixed matrices of the sliding-dominated regime.
inline BounceMatrices sliding_matrices(const PhysParams& p) {
  const double r = p.radius_m;
  BounceMatrices m;
  m.A << 0.6, 0.0, 0.0,
         0.0, 0.6, 0.0,
         0.0, 0.0, -p.restitution;
  m.B << 0.0, 0.4 * r, 0.0,
         -0.4 * r, 0.0, 0.0,
         0.0, 0.0, 0.0;
  m.C << 0.0, -0.6 / r, 0.0,
         0.6 / r, 0.0, 0.0,
         0.0, 0.0, 0.0;
  m.D << 0.4, 0.0, 0.0,
         0.0, 0.4, 0.0,
         0.0, 0.0, 1.0;
  return m;
}

/// alpha < 0.4 selects the sliding matrices, alpha >= 0.4 the rolling ones
/// (the two coincide at the threshold).
inline BounceMatrices bounce_matrices(double alpha, const PhysParams& p) {
  if (!std::isfinite(alpha) || alpha < 0.0)
    throw Error(ErrorKind::InvalidInput, "alpha must be finite and >= 0");
  return alpha < kRollingThreshold ? sliding_matrices(p) : rolling_matrices(alpha, p);
}

struct BounceResult {
  Vec3 vel_mps;
  Vec3 angvel_radps;
  bool zero_slip = false;
};

inline BounceResult apply_bounce(const Vec3& v_minus, const Vec3& w_minus, const PhysParams& p) {
  if (!(v_minus.z() < 0.0))
    throw Error(ErrorKind::InvalidInput, "bounce requires the ball to approach the table (v_z < 0)");
  const auto alpha = compute_alpha(v_minus, w_minus, p);
  if (!alpha) {
    return {Vec3(v_minus.x(), v_minus.y(), -p.restitution * v_minus.z()), w_minus, true};
  }
  const BounceMatrices m = bounce_matrices(*alpha, p);
  BounceResult out;
  out.vel_mps = m.A * v_minus + m.B * w_minus;
  // Pin the normal component to the exact restitution law; the product above
  // can differ in the last ulp when a fused multiply-add is used.
  out.vel_mps.z() = -p.restitution * v_minus.z();
  out.angvel_radps = m.C * v_minus + m.D * w_minus;
  return out;
}

// ---------------------------------------------------------------------------
// Simulation

struct SimulationOptions {
  double horizon_s = 1.5;
  double dt_s = 1.0 / 600.0;
  // Event-time bracket width at which bisection stops.
  double event_tolerance_s = 1e-12;
  // Half-extents of the tracked volume beyond the table footprint.
  double volume_margin_m = 4.0;
  double volume_ceiling_m = 6.0;
  int max_events_per_step = 8;
};

namespace detail {

enum class Crossing { None, Table, Net, Floor };

// Locate the first time in (0, h] at which g(rk4_step(start, tau)) <= 0,
// given g(start) > 0 and g(rk4_step(start, h)) <= 0.
template <typename G>
double bisect_event(const BallState& start, double h, const PhysParams& p, double tol, G g) {
  double lo = 0.0, hi = h;
  while (hi - lo > tol) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    if (g(rk4_step(start, mid, p)) > 0.0) lo = mid;
    else hi = mid;
  }
  return hi;
}

}  // namespace detail

/// Integrates the flight equation on a fixed grid with classical RK4. Table
/// crossings, net crossings and floor contact are located by bisection inside
/// the step and handled at the event time; the grid is then resumed so every
/// stored state sits at an exact multiple of dt. Terminates on floor or net
/// contact.
inline Trajectory simulate(const HitVector& hit, const PhysParams& p, const TableGeometry& table,
                           const SimulationOptions& opt = {}) {
  if (!(opt.dt_s > 0.0)) throw Error(ErrorKind::InvalidInput, "dt_s must be > 0");
  if (!(opt.horizon_s > 0.0)) throw Error(ErrorKind::InvalidInput, "horizon_s must be > 0");
  hit.validate(table);

  const double r = p.radius_m;
  const double hx = table.half_length(), hy = table.half_width();
  const double floor_contact_z = table.floor_z() + r;

  auto g_table = [r](const BallState& s) { return s.pos_m.z() - r; };
  auto g_floor = [floor_contact_z](const BallState& s) { return s.pos_m.z() - floor_contact_z; };
  auto out_of_volume = [&](const Vec3& x) {
    return std::abs(x.x()) > hx + opt.volume_margin_m || std::abs(x.y()) > hy + opt.volume_margin_m ||
           x.z() > opt.volume_ceiling_m;
  };

  Trajectory traj;
  traj.dt_s = opt.dt_s;
  const auto n_steps = static_cast<long>(std::floor(opt.horizon_s / opt.dt_s + 1e-9));
  traj.states.reserve(static_cast<std::size_t>(n_steps) + 1);

  BallState cur = hit.as_state();
  traj.states.push_back(cur);
  bool left_volume = out_of_volume(cur.pos_m);
  if (left_volume) {
    TrajectoryEvent e;
    e.kind = EventKind::OutOfVolume;
    e.t_s = 0.0;
    e.pos_m = cur.pos_m;
    e.after = cur;
    traj.events.push_back(e);
  }

  for (long k = 0; k < n_steps; ++k) {
    const double t_next = static_cast<double>(k + 1) * opt.dt_s;
    bool terminated = false;
    int events_this_step = 0;
    BallState end_state;
    while (true) {
      const double h = t_next - cur.t_s;
      BallState trial = rk4_step(cur, h, p);
      if (!trial.finite())
        throw Error(ErrorKind::SimulationDiverged, "non-finite state at t=" + std::to_string(trial.t_s));

      // Candidate crossings in this sub-step; pick the earliest.
      double best_tau = h + 1.0;
      detail::Crossing best = detail::Crossing::None;
      if (events_this_step < opt.max_events_per_step) {
        if (g_table(cur) > 0.0 && g_table(trial) <= 0.0) {
          const double tau = detail::bisect_event(cur, h, p, opt.event_tolerance_s, g_table);
          const BallState at = rk4_step(cur, tau, p);
          const bool over_table = std::abs(at.pos_m.x()) <= hx + r && std::abs(at.pos_m.y()) <= hy + r;
          if (over_table && at.vel_mps.z() < 0.0 && tau < best_tau) {
            best_tau = tau;
            best = detail::Crossing::Table;
          }
        }
        const double x0 = cur.pos_m.x(), x1 = trial.pos_m.x();
        if ((x0 < 0.0 && x1 >= 0.0) || (x0 > 0.0 && x1 <= 0.0)) {
          const double sgn = x0 < 0.0 ? -1.0 : 1.0;
          auto g_net = [sgn](const BallState& s) { return sgn * s.pos_m.x(); };
          const double tau = detail::bisect_event(cur, h, p, opt.event_tolerance_s, g_net);
          const BallState at = rk4_step(cur, tau, p);
          const bool hits_net = at.pos_m.z() >= 0.0 && at.pos_m.z() < table.net_height_m &&
                                std::abs(at.pos_m.y()) <= hy + table.net_overhang_m;
          if (hits_net && tau < best_tau) {
            best_tau = tau;
            best = detail::Crossing::Net;
          }
        }
        if (g_floor(cur) > 0.0 && g_floor(trial) <= 0.0) {
          const double tau = detail::bisect_event(cur, h, p, opt.event_tolerance_s, g_floor);
          if (tau < best_tau) {
            best_tau = tau;
            best = detail::Crossing::Floor;
          }
        }
      }

      if (best == detail::Crossing::None) {
        end_state = trial;
        break;
      }

      ++events_this_step;
      BallState at = rk4_step(cur, best_tau, p);
      TrajectoryEvent e;
      e.t_s = at.t_s;
      e.pos_m = at.pos_m;
      if (best == detail::Crossing::Table) {
        const BounceResult b = apply_bounce(at.vel_mps, at.angvel_radps, p);
        e.kind = EventKind::TableBounce;
        e.side = side_of(at.pos_m.x());
        e.in_bounds = std::abs(at.pos_m.x()) <= hx && std::abs(at.pos_m.y()) <= hy;
        at.vel_mps = b.vel_mps;
        at.angvel_radps = b.angvel_radps;
        e.after = at;
        traj.events.push_back(e);
        cur = at;
        if (best_tau >= h) {
          // Event landed on the grid point itself.
          end_state = cur;
          break;
        }
        continue;
      }
      e.kind = best == detail::Crossing::Net ? EventKind::NetContact : EventKind::FloorContact;
      e.after = at;
      traj.events.push_back(e);
      terminated = true;
      break;
    }
    if (terminated) break;

    end_state.t_s = t_next;
    traj.states.push_back(end_state);
    cur = end_state;
    if (!left_volume && out_of_volume(cur.pos_m)) {
      left_volume = true;
      TrajectoryEvent e;
      e.kind = EventKind::OutOfVolume;
      e.t_s = cur.t_s;
      e.pos_m = cur.pos_m;
      e.after = cur;
      traj.events.push_back(e);
    }
  }
  return traj;
}

/// Exact state at an arbitrary time: integrates forward from the latest grid
/// state or event at or before t. Times past the end clamp to the last state.
inline BallState state_at(const Trajectory& traj, double t, const PhysParams& p) {
  if (traj.empty()) throw Error(ErrorKind::InvalidInput, "empty trajectory");
  if (t <= traj.states.front().t_s) return traj.states.front();
  if (t >= traj.end_time()) return traj.states.back();
  auto idx = static_cast<std::size_t>(std::floor(t / traj.dt_s));
  idx = std::min(idx, traj.states.size() - 1);
  while (idx > 0 && traj.states[idx].t_s > t) --idx;
  while (idx + 1 < traj.states.size() && traj.states[idx + 1].t_s <= t) ++idx;
  BallState base = traj.states[idx];
  for (const auto& e : traj.events) {
    if (e.kind == EventKind::TableBounce && e.t_s > base.t_s && e.t_s <= t) base = e.after;
  }
  if (t - base.t_s <= 0.0) return base;
  BallState s = rk4_step(base, t - base.t_s, p);
  s.t_s = t;
  return s;
}

/// True when the ball ends at or before t (floor or net contact).
inline bool terminated_before(const Trajectory& traj, double t) {
  for (const auto& e : traj.events) {
    if ((e.kind == EventKind::FloorContact || e.kind == EventKind::NetContact) && e.t_s <= t) return true;
  }
  return false;
}

// ---------------------------------------------------------------------------
// Legality

/// Non-serve: the first table bounce lands in bounds on the opponent's half
/// with no earlier net or floor contact. Serve: first bounce in bounds on the
/// server's half, second in bounds on the opponent's half.
inline bool is_valid_shot(const Trajectory& traj, const TableGeometry& /*table*/, bool is_serve,
                          TableSide hitter_side) {
  const TableSide opponent = other(hitter_side);
  int bounce_index = 0;
  for (const auto& e : traj.events) {
    if (e.kind == EventKind::OutOfVolume) continue;
    if (e.kind != EventKind::TableBounce) return false;
    if (!e.in_bounds) return false;
    if (!is_serve) return e.side == opponent;
    if (bounce_index == 0) {
      if (e.side != hitter_side) return false;
      bounce_index = 1;
      continue;
    }
    return e.side == opponent;
  }
  return false;
}

}  // namespace hitspace
