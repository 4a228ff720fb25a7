#include "hitspace/physics.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace hitspace;

namespace {

PhysParams defaults() { return PhysParams{}; }

// Random non-degenerate incoming velocity/spin for bounce properties.
std::pair<Vec3, Vec3> random_bounce(Rng& rng) {
  const Vec3 v(uniform(rng, -15, 15), uniform(rng, -6, 6), uniform(rng, -12, -0.2));
  const Vec3 w(uniform(rng, -400, 400), uniform(rng, -400, 400), uniform(rng, -200, 200));
  return {v, w};
}

}  // namespace

TEST(FlightDerivative, GravityOnlyAtRest) {
  const BallState s{0.0, Vec3::Zero(), Vec3::Zero(), Vec3::Zero()};
  const Vec3 a = flight_derivative(s, defaults());
  EXPECT_DOUBLE_EQ(a.x(), 0.0);
  EXPECT_DOUBLE_EQ(a.y(), 0.0);
  EXPECT_DOUBLE_EQ(a.z(), -9.81);
}

TEST(FlightDerivative, ZeroCoefficientsLeaveGravity) {
  PhysParams p;
  p.drag_coeff = 0.0;
  p.magnus_coeff = 0.0;
  const BallState s{0.0, Vec3::Zero(), Vec3(3, -2, 7), Vec3(100, 20, -50)};
  EXPECT_TRUE(flight_derivative(s, p).isApprox(p.gravity, 1e-15));
}

TEST(FlightDerivative, DragAndMagnusByHand) {
  // drag -kD|v|v/m = -3e-4/0.0027, Magnus kM (w x v)/m = 9e-6*10/0.0027 along +y
  const BallState s{0.0, Vec3::Zero(), Vec3(1, 0, 0), Vec3(0, 0, 10)};
  const Vec3 a = flight_derivative(s, defaults());
  EXPECT_NEAR(a.x(), -0.111111111111, 1e-10);
  EXPECT_NEAR(a.y(), 0.0333333333333, 1e-10);
  EXPECT_NEAR(a.z(), -9.81, 1e-12);
}

TEST(FlightDerivative, RejectsNonFiniteState) {
  const BallState s{0.0, Vec3::Zero(), Vec3(NAN, 0, 0), Vec3::Zero()};
  EXPECT_THROW(flight_derivative(s, defaults()), Error);
}

TEST(Alpha, VerbatimByHand) {
  // slip sqrt((2 - 50*0.02)^2) = 1, numerator 0.25 (1 + 0.93*4) = 1.18
  const auto a = compute_alpha(Vec3(2, 0, -4), Vec3(0, 50, 0), defaults());
  ASSERT_TRUE(a.has_value());
  EXPECT_NEAR(*a, 1.18, 1e-12);
}

TEST(Alpha, CorrectedModeByHand) {
  PhysParams p;
  p.alpha_mode = AlphaMode::StandardCorrected;
  // 0.25 * 1.93 * 4 / 1
  const auto a = compute_alpha(Vec3(2, 0, -4), Vec3(0, 50, 0), p);
  ASSERT_TRUE(a.has_value());
  EXPECT_NEAR(*a, 1.93, 1e-12);
}

TEST(Alpha, ZeroSlipIsDegenerate) {
  EXPECT_FALSE(compute_alpha(Vec3(0, 0, -3), Vec3::Zero(), defaults()).has_value());
}

TEST(Alpha, FrictionlessGivesZero) {
  PhysParams p;
  p.friction = 0.0;
  const auto a = compute_alpha(Vec3(3, 1, -2), Vec3(10, -20, 5), p);
  ASSERT_TRUE(a.has_value());
  EXPECT_EQ(*a, 0.0);
}

TEST(BounceMatrices, BranchesCoincideAtThreshold) {
  const PhysParams p = defaults();
  const BounceMatrices s = sliding_matrices(p), r = rolling_matrices(kRollingThreshold, p);
  for (const auto& [a, b] : {std::pair{&s.A, &r.A}, {&s.B, &r.B}, {&s.C, &r.C}, {&s.D, &r.D}})
    EXPECT_LE((*a - *b).cwiseAbs().maxCoeff(), 1e-12);
  const BounceMatrices at = bounce_matrices(0.4, p);
  EXPECT_NEAR(at.A(0, 0), 0.6, 1e-15);
  EXPECT_NEAR(at.D(0, 0), 0.4, 1e-15);
  EXPECT_NEAR(at.B(0, 1), 0.4 * p.radius_m, 1e-15);
  EXPECT_NEAR(at.C(1, 0), 0.6 / p.radius_m, 1e-12);
  EXPECT_EQ(at.A(2, 2), -p.restitution);
}

TEST(BounceMatrices, BranchSelection) {
  EXPECT_EQ(bounce_matrices(0.2, defaults()).A(0, 0), 0.6);
  EXPECT_NEAR(bounce_matrices(1.0, defaults()).D(0, 0), -0.5, 1e-15);
  EXPECT_THROW(bounce_matrices(-0.1, defaults()), Error);
}

TEST(BounceMatrices, ContinuityApproachingThresholdFromBelow) {
  const PhysParams p = defaults();
  const BounceMatrices r = rolling_matrices(0.4, p);
  for (double eps : {1e-3, 1e-6, 1e-9, 1e-13}) {
    const BounceMatrices below = rolling_matrices(0.4 - eps, p);
    EXPECT_LE((below.D - r.D).cwiseAbs().maxCoeff(), 2 * eps + 1e-15);
  }
}

TEST(Bounce, SpecularWhenNoSlip) {
  const BounceResult b = apply_bounce(Vec3(0, 0, -3), Vec3::Zero(), defaults());
  EXPECT_TRUE(b.zero_slip);
  EXPECT_TRUE(b.vel_mps.isApprox(Vec3(0, 0, 2.79), 1e-15));
  EXPECT_EQ(b.angvel_radps, Vec3::Zero());
}

TEST(Bounce, RollingBranchByHand) {
  // alpha = 1.18: vx+ = (1-a)*2 + a*r*50, wy+ = 1.5a/r*2 + (1-1.5a)*50
  const BounceResult b = apply_bounce(Vec3(2, 0, -4), Vec3(0, 50, 0), defaults());
  EXPECT_FALSE(b.zero_slip);
  EXPECT_NEAR(b.vel_mps.x(), 0.82, 1e-12);
  EXPECT_NEAR(b.vel_mps.y(), 0.0, 1e-12);
  EXPECT_NEAR(b.vel_mps.z(), 3.72, 1e-12);
  EXPECT_NEAR(b.angvel_radps.x(), 0.0, 1e-10);
  EXPECT_NEAR(b.angvel_radps.y(), 138.5, 1e-10);
  EXPECT_NEAR(b.angvel_radps.z(), 0.0, 1e-12);
}

TEST(Bounce, RejectsReceding) { EXPECT_THROW(apply_bounce(Vec3(1, 0, 0.5), Vec3::Zero(), defaults()), Error); }

TEST(BounceProperty, NormalRestitutionExactAndZeroSlipRule) {
  Rng rng(11);
  PhysParams p;
  for (int i = 0; i < 10000; ++i) {
    auto [v, w] = random_bounce(rng);
    // Every 50th case is forced to zero slip.
    if (i % 50 == 0) w = Vec3(v.y() / p.radius_m, v.x() / p.radius_m, w.z());
    const BounceResult b = apply_bounce(v, w, p);
    EXPECT_EQ(b.vel_mps.z(), -p.restitution * v.z());
    const double slip = std::hypot(v.x() - w.y() * p.radius_m, v.y() - w.x() * p.radius_m);
    EXPECT_EQ(b.zero_slip, slip < p.slip_epsilon) << "case " << i;
  }
}

TEST(Simulate, FreeFallApexDecay) {
  PhysParams p;
  p.drag_coeff = 0.0;
  p.magnus_coeff = 0.0;
  SimulationOptions opt;
  opt.horizon_s = 2.5;
  const HitVector h{Vec3(0.5, 0.2, 0.5), Vec3::Zero(), Vec3::Zero()};
  const Trajectory t = simulate(h, p, TableGeometry{}, opt);
  std::vector<double> apex;
  for (std::size_t i = 1; i + 1 < t.states.size(); ++i)
    if (t.states[i].vel_mps.z() > 0 && t.states[i + 1].vel_mps.z() <= 0) apex.push_back(t.states[i].pos_m.z());
  ASSERT_GE(apex.size(), 2u);
  // Contact happens with the centre one radius above the surface.
  const double k2 = p.restitution * p.restitution, r = p.radius_m;
  EXPECT_NEAR((apex[0] - r) / (0.5 - r), k2, 2e-3);
  EXPECT_NEAR((apex[1] - r) / (apex[0] - r), k2, 2e-3);
}

TEST(Simulate, DragOnlySpeedNonIncreasing) {
  PhysParams p;
  p.gravity = Vec3::Zero();
  p.magnus_coeff = 0.0;
  const HitVector h{Vec3(-1.5, 0, 0.3), Vec3(12, 1, 0.5), Vec3(0, 100, 0)};
  const Trajectory t = simulate(h, p, TableGeometry{}, SimulationOptions{});
  for (std::size_t i = 1; i < t.states.size(); ++i)
    EXPECT_LE(t.states[i].vel_mps.norm(), t.states[i - 1].vel_mps.norm() * (1 + 1e-15));
}

TEST(Simulate, MagnusOnlySpeedConstant) {
  PhysParams p;
  p.gravity = Vec3::Zero();
  p.drag_coeff = 0.0;
  // High above the table so no bounce occurs.
  const HitVector h{Vec3(-1.5, 0, 1.0), Vec3(8, 1, 0.2), Vec3(30, 150, -40)};
  const Trajectory t = simulate(h, p, TableGeometry{}, SimulationOptions{});
  const double s0 = h.vel_mps.norm();
  for (const auto& s : t.states) EXPECT_NEAR(s.vel_mps.norm() / s0, 1.0, 1e-9);
}

TEST(Simulate, FourthOrderConvergence) {
  PhysParams p;
  const HitVector h{Vec3(-1.4, 0.1, 1.2), Vec3(6, 0.5, 3), Vec3(20, 120, -30)};
  auto final_pos = [&](double dt) {
    TableGeometry far;
    far.surface_height_m = 0.76;
    SimulationOptions o;
    o.dt_s = dt;
    o.horizon_s = 0.24;
    // Stays above the table: apex well above it for this short horizon.
    return simulate(h, p, far, o).states.back().pos_m;
  };
  const Vec3 a = final_pos(0.24 / 6), b = final_pos(0.24 / 12), c = final_pos(0.24 / 24);
  const double order = std::log2((a - b).norm() / (b - c).norm());
  EXPECT_GE(order, 3.5);
}

TEST(Simulate, TimestampsStrictlyIncreaseAndEventsOrdered) {
  Rng rng(3);
  for (int i = 0; i < 50; ++i) {
    const HitVector h{Vec3(uniform(rng, -1.8, -1.3), uniform(rng, -0.6, 0.6), uniform(rng, 0.0, 0.4)),
                      Vec3(uniform(rng, 5, 15), uniform(rng, -1, 1), uniform(rng, -1, 3)),
                      Vec3(uniform(rng, -50, 50), uniform(rng, -150, 150), uniform(rng, -50, 50))};
    const Trajectory t = simulate(h, defaults(), TableGeometry{}, SimulationOptions{});
    for (std::size_t k = 1; k < t.states.size(); ++k) EXPECT_GT(t.states[k].t_s, t.states[k - 1].t_s);
    for (std::size_t k = 1; k < t.events.size(); ++k) EXPECT_GE(t.events[k].t_s, t.events[k - 1].t_s);
  }
}

TEST(Simulate, Deterministic) {
  const HitVector h{Vec3(-1.5, 0.2, 0.25), Vec3(10, -0.4, 1.5), Vec3(0, 150, 20)};
  const Trajectory a = simulate(h, defaults(), TableGeometry{}, SimulationOptions{});
  const Trajectory b = simulate(h, defaults(), TableGeometry{}, SimulationOptions{});
  ASSERT_EQ(a.states.size(), b.states.size());
  for (std::size_t i = 0; i < a.states.size(); ++i) {
    EXPECT_EQ(a.states[i].pos_m, b.states[i].pos_m);
    EXPECT_EQ(a.states[i].vel_mps, b.states[i].vel_mps);
  }
}

TEST(Simulate, StaysAboveTableBetweenBounces) {
  const HitVector h{Vec3(-1.5, 0.2, 0.25), Vec3(10, -0.4, 1.5), Vec3(0, 150, 20)};
  const TableGeometry table;
  const Trajectory t = simulate(h, defaults(), table, SimulationOptions{});
  for (const auto& s : t.states)
    if (std::abs(s.pos_m.x()) < table.half_length() && std::abs(s.pos_m.y()) < table.half_width()) {
      EXPECT_GE(s.pos_m.z(), -1e-9);
    }
}

TEST(Validity, NetFaultIsInvalid) {
  // Close to the net and below its top edge.
  const HitVector h{Vec3(-0.3, 0, 0.08), Vec3(6, 0, 0.0), Vec3::Zero()};
  const Trajectory t = simulate(h, defaults(), TableGeometry{}, SimulationOptions{});
  ASSERT_FALSE(t.events.empty());
  EXPECT_EQ(t.events.front().kind, EventKind::NetContact);
  EXPECT_FALSE(is_valid_shot(t, TableGeometry{}, false, TableSide::Negative));
}

TEST(Validity, SmashToOpponentCentreIsValid) {
  const HitVector h{Vec3(-1.2, 0, 0.5), Vec3(16, 0, -2.5), Vec3(0, 150, 0)};
  const Trajectory t = simulate(h, defaults(), TableGeometry{}, SimulationOptions{});
  ASSERT_FALSE(t.events.empty());
  EXPECT_EQ(t.events.front().kind, EventKind::TableBounce);
  EXPECT_EQ(t.events.front().side, TableSide::Positive);
  EXPECT_TRUE(is_valid_shot(t, TableGeometry{}, false, TableSide::Negative));
}

TEST(Validity, ServeMustBounceOwnSideFirst) {
  // A drive that only lands on the opponent side is not a legal serve.
  const HitVector h{Vec3(-1.2, 0, 0.5), Vec3(16, 0, -2.5), Vec3(0, 150, 0)};
  const Trajectory t = simulate(h, defaults(), TableGeometry{}, SimulationOptions{});
  EXPECT_FALSE(is_valid_shot(t, TableGeometry{}, true, TableSide::Negative));
}

TEST(StateAt, ClampsBeyondEnd) {
  const HitVector h{Vec3(-1.2, 0, 0.5), Vec3(16, 0, -2.5), Vec3(0, 150, 0)};
  const Trajectory t = simulate(h, defaults(), TableGeometry{}, SimulationOptions{});
  const BallState s = state_at(t, t.end_time() + 5.0, defaults());
  EXPECT_EQ(s.pos_m, t.states.back().pos_m);
}
