#pragma once

// Conditioning block shared by the match generator and the generative model.

#include "hitspace/core.hpp"
#include "hitspace/physics.hpp"

#include <Eigen/Dense>

#include <array>

namespace hitspace {

inline constexpr int kContextSteps = 10;
inline constexpr int kMotionWidth = 32;
inline constexpr int kHitDim = 9;

/// Index 0 is the player about to respond, index 1 the opponent. All vectors
/// are expressed in the responder's frame (responder on the -x half).
struct GameContext {
  // kContextSteps x kMotionWidth synthetic motion features per player.
  std::array<Eigen::MatrixXd, 2> motion{Eigen::MatrixXd::Zero(kContextSteps, kMotionWidth),
                                        Eigen::MatrixXd::Zero(kContextSteps, kMotionWidth)};
  std::array<Vec3, 2> location{Vec3::Zero(), Vec3::Zero()};
  std::array<double, 2> orientation{0.0, 0.0};
  HitVector opponent_hit;
  // Step index of the last motion row; the window ends two steps before the
  // response it conditions.
  int end_step = 0;
};

/// Constituent condition vectors, each independently replaceable by a null
/// vector during training.
enum class ContextPart { MotionSelf = 0, MotionOpponent, Locations, Orientations, OpponentHit };
inline constexpr int kContextParts = 5;

inline constexpr std::array<int, kContextParts> kContextPartWidths{
    kContextSteps * kMotionWidth, kContextSteps * kMotionWidth, 6, 2, kHitDim};

inline constexpr int context_width() {
  int w = 0;
  for (int x : kContextPartWidths) w += x;
  return w;
}

inline constexpr int context_offset(int part) {
  int off = 0;
  for (int i = 0; i < part; ++i) off += kContextPartWidths[static_cast<std::size_t>(i)];
  return off;
}

/// Flatten to raw features. The opponent hit is left in physical units;
/// models apply their own normalisation.
inline Eigen::VectorXd flatten(const GameContext& ctx) {
  Eigen::VectorXd out(context_width());
  int off = 0;
  for (int p = 0; p < 2; ++p) {
    const Eigen::MatrixXd& m = ctx.motion[static_cast<std::size_t>(p)];
    for (int s = 0; s < kContextSteps; ++s)
      for (int j = 0; j < kMotionWidth; ++j) out[off++] = m(s, j);
  }
  for (int p = 0; p < 2; ++p)
    for (int j = 0; j < 3; ++j) out[off++] = ctx.location[static_cast<std::size_t>(p)][j];
  out[off++] = ctx.orientation[0];
  out[off++] = ctx.orientation[1];
  const HitArray h = ctx.opponent_hit.to_array();
  for (int j = 0; j < kHitDim; ++j) out[off++] = h[j];
  return out;
}

/// Half-turn about the vertical axis: maps one player's frame to the other's.
inline HitVector rotate_half_turn(const HitVector& h) {
  auto flip = [](const Vec3& v) { return Vec3(-v.x(), -v.y(), v.z()); };
  return {flip(h.pos_m), flip(h.vel_mps), flip(h.angvel_radps)};
}

/// Reflection y -> -y. Angular velocity is a pseudovector, so its x and z
/// components change sign instead.
inline HitVector mirror_lateral(const HitVector& h) {
  return {Vec3(h.pos_m.x(), -h.pos_m.y(), h.pos_m.z()), Vec3(h.vel_mps.x(), -h.vel_mps.y(), h.vel_mps.z()),
          Vec3(-h.angvel_radps.x(), h.angvel_radps.y(), -h.angvel_radps.z())};
}

}  // namespace hitspace
