#include "hitspace/synthdata.hpp"

#include <gtest/gtest.h>

#include <set>

using namespace hitspace;

namespace {

SynthHitConfig small_config(std::size_t n) {
  SynthHitConfig cfg;
  cfg.n_records = n;
  return cfg;
}

GameContext symmetric_context() {
  GameContext ctx;
  ctx.opponent_hit = {Vec3(-1.6, 0.0, 0.2), Vec3(10.0, 0.0, 1.0), Vec3(0.0, 120.0, 0.0)};
  return ctx;
}

std::optional<Vec3> first_bounce(const HitVector& h) {
  const Trajectory t = simulate(h, PhysParams{}, TableGeometry{}, SimulationOptions{});
  for (const auto& e : t.events)
    if (e.kind == EventKind::TableBounce) return e.pos_m;
  return std::nullopt;
}

double landing_y_variance(double skill, int n, std::uint64_t seed) {
  PlayerArchetype a;
  a.skill = skill;
  a.style.placement_variance = placement_variance_for_skill(skill);
  const GameContext ctx = symmetric_context();
  std::vector<double> ys;
  for (int i = 0; i < n; ++i) {
    const HitVector h = sample_player_response(a, ctx, substream_seed(seed, "resp", static_cast<std::uint64_t>(i)));
    if (const auto p = first_bounce(h)) ys.push_back(p->y());
  }
  double m = 0;
  for (double y : ys) m += y;
  m /= static_cast<double>(ys.size());
  double v = 0;
  for (double y : ys) v += (y - m) * (y - m);
  return v / static_cast<double>(ys.size() - 1);
}

}  // namespace

TEST(ShotSpaces, DefaultsValidate) { EXPECT_NO_THROW(validate_spaces(default_shot_spaces())); }

TEST(ShotSpaces, OutOfBoxRejected) {
  ShotSpaces s = default_shot_spaces();
  s[ShotType::Smash].speed_mps = {18.0, 60.0};
  try {
    validate_spaces(s);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Config);
    EXPECT_NE(std::string(e.what()).find("smash"), std::string::npos);
  }
}

TEST(SampleHit, SmashSpeedWithinSpace) {
  Rng rng(1);
  for (int i = 0; i < 10000; ++i) {
    const HitVector h = sample_hit(ShotType::Smash, rng);
    const double s = h.vel_mps.norm();
    EXPECT_GE(s, 18.0 - 1e-9);
    EXPECT_LE(s, 32.0 + 1e-9);
    EXPECT_TRUE(default_shot_spaces().at(ShotType::Smash).contains(h));
  }
}

TEST(SampleHit, ServeBehindEndLine) {
  Rng rng(2);
  const TableGeometry table;
  for (int i = 0; i < 2000; ++i) EXPECT_LT(sample_hit(ShotType::Serve, rng).pos_m.x(), -table.half_length());
}

TEST(SampleHit, SeedDeterminism) {
  for (ShotType t : kNamedShotTypes) {
    const HitVector a = sample_hit(t, 77), b = sample_hit(t, 77);
    EXPECT_EQ(a.to_array(), b.to_array());
  }
  EXPECT_EQ(sample_random_shot(5).to_array(), sample_random_shot(5).to_array());
}

TEST(RandomShot, MembershipAndCoverage) {
  const ShotSpaces spaces = default_shot_spaces();
  const ShotParamSpace box = bridging_box(spaces);
  std::map<ShotType, int> hits;
  Rng rng(3);
  for (int i = 0; i < 100000; ++i) {
    const HitVector h = sample_random_shot(rng, spaces);
    bool named = false;
    for (const auto& [t, s] : spaces) {
      if (t == ShotType::Serve) continue;
      if (s.contains(h)) {
        named = true;
        ++hits[t];
      }
    }
    EXPECT_TRUE(named || box.contains(h));
  }
  for (const auto& [t, s] : spaces) {
    if (t == ShotType::Serve) continue;
    EXPECT_GT(hits[t], 0) << to_string(t);
  }
}

TEST(SynthHit, RecordsValidAndReproducible) {
  const SynthHitConfig cfg = small_config(150);
  const SynthHitDataset a = generate_synthhit(cfg, PhysParams{}, TableGeometry{}, 42, 1);
  const SynthHitDataset b = generate_synthhit(cfg, PhysParams{}, TableGeometry{}, 42, 3);
  ASSERT_EQ(a.records.size(), 150u);
  for (std::size_t i = 0; i < a.records.size(); ++i) {
    const HitRecord& r = a.records[i];
    const Trajectory t = simulate(r.hit, PhysParams{}, TableGeometry{}, cfg.sim);
    EXPECT_TRUE(is_valid_shot(t, TableGeometry{}, r.shot_type == ShotType::Serve, TableSide::Negative));
    const SampledTrajectory s = sample_trajectory(t, r.trajectory.times, PhysParams{});
    for (std::size_t k = 0; k < s.points.size(); ++k) EXPECT_EQ(s.points[k], r.trajectory.points[k]);
    EXPECT_EQ(r.observation.frames.size(), r.trajectory.times.size());
    // Job count does not change the output.
    EXPECT_EQ(r.hit.to_array(), b.records[i].hit.to_array());
    EXPECT_EQ(r.observation.camera_id, b.records[i].observation.camera_id);
  }
}

TEST(SynthHit, SingleTypeMix) {
  SynthHitConfig cfg = small_config(40);
  cfg.shot_mix = {{ShotType::Smash, 1.0}};
  for (const auto& r : generate_synthhit(cfg, PhysParams{}, TableGeometry{}, 7).records)
    EXPECT_EQ(r.shot_type, ShotType::Smash);
}

TEST(SynthHit, DefaultMixWithinMultinomialInterval) {
  // Only the type draws matter here, so count them directly.
  const SynthHitConfig cfg;
  const int n = 22000;
  std::map<ShotType, int> counts;
  for (int i = 0; i < n; ++i) {
    Rng rng = substream(9, "record", static_cast<std::uint64_t>(i));
    ++counts[draw_shot_type(cfg.shot_mix, rng)];
  }
  const double p = 1.0 / 11.0, sd = std::sqrt(n * p * (1 - p));
  for (ShotType t : kAllShotTypes) EXPECT_NEAR(counts[t], n * p, 4 * sd) << to_string(t);
}

TEST(SynthHit, ImpossibleSpaceNamedInError) {
  SynthHitConfig cfg = small_config(5);
  cfg.shot_mix = {{ShotType::Push, 1.0}};
  // Straight down into the hitter's own half.
  cfg.spaces[ShotType::Push].elevation_deg = {-45.0, -40.0};
  cfg.max_attempts_per_record = 300;
  try {
    generate_synthhit(cfg, PhysParams{}, TableGeometry{}, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Config);
    EXPECT_NE(std::string(e.what()).find("push"), std::string::npos);
  }
}

TEST(Archetypes, DistinctEquispacedBalanced) {
  const auto a = make_archetypes(12, 5);
  std::set<double> skills;
  int left = 0, tagged = 0;
  for (const auto& p : a) {
    skills.insert(p.skill);
    left += p.hand == Handedness::Left;
    tagged += p.sex_tag;
  }
  ASSERT_EQ(skills.size(), 12u);
  std::vector<double> sorted(skills.begin(), skills.end());
  EXPECT_NEAR(sorted.front(), 0.1, 1e-12);
  EXPECT_NEAR(sorted.back(), 0.9, 1e-12);
  for (std::size_t i = 1; i < sorted.size(); ++i) EXPECT_NEAR(sorted[i] - sorted[i - 1], 0.8 / 11, 1e-12);
  EXPECT_EQ(left, 6);
  EXPECT_EQ(tagged, 6);
  const auto b = make_archetypes(12, 5);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].skill, b[i].skill);
}

TEST(PlayerResponse, HigherSkillTighterPlacement) {
  const double lo = landing_y_variance(0.0, 1000, 11), hi = landing_y_variance(1.0, 1000, 11);
  EXPECT_LT(hi, lo);
}

TEST(PlayerResponse, DispersionDecreasesAcrossSkillLevels) {
  std::vector<double> v;
  for (double s : {0.1, 0.5, 0.9}) v.push_back(landing_y_variance(s, 400, 12));
  EXPECT_GT(v[0], v[1]);
  EXPECT_GT(v[1], v[2]);
}

TEST(PlayerResponse, LeftHanderMirrorsRightHander) {
  PlayerArchetype r;
  r.skill = 0.6;
  PlayerArchetype l = r;
  l.hand = Handedness::Left;
  GameContext ctx = symmetric_context();
  ctx.opponent_hit.pos_m.y() = 0.15;
  GameContext mirrored = ctx;
  mirrored.opponent_hit = mirror_lateral(ctx.opponent_hit);
  double mean_r = 0, mean_l = 0;
  for (int i = 0; i < 200; ++i) {
    const HitVector hl = sample_player_response(l, ctx, static_cast<std::uint64_t>(i));
    const HitVector hr = sample_player_response(r, mirrored, static_cast<std::uint64_t>(i));
    EXPECT_EQ(hl.to_array(), mirror_lateral(hr).to_array());
    mean_r += sample_player_response(r, symmetric_context(), static_cast<std::uint64_t>(i)).vel_mps.y();
    mean_l += sample_player_response(l, symmetric_context(), static_cast<std::uint64_t>(i)).vel_mps.y();
  }
  EXPECT_NEAR(mean_l, -mean_r, 1e-9 * std::abs(mean_r) + 1e-9);
  EXPECT_NE(mean_r, 0.0);
}

TEST(PlayerResponse, Deterministic) {
  PlayerArchetype a;
  EXPECT_EQ(sample_player_response(a, symmetric_context(), 3).to_array(),
            sample_player_response(a, symmetric_context(), 3).to_array());
}

TEST(MatchDataset, CoverageContextGapAndDeterminism) {
  const auto players = make_archetypes(4, 8);
  const int n_rallies = 60;
  const MatchDataset a = generate_match_dataset(players, n_rallies, 21, {}, {}, 2);
  const MatchDataset b = generate_match_dataset(players, n_rallies, 21, {}, {}, 1);
  std::vector<int> count(players.size(), 0);
  for (const auto& r : a.records) {
    ++count[static_cast<std::size_t>(r.player_id)];
    EXPECT_EQ(r.context.end_step, r.response_step - 2);
    EXPECT_NE(r.player_id, r.opponent_id);
  }
  for (int c : count) EXPECT_GE(c, n_rallies / (2 * 4));
  ASSERT_EQ(a.records.size(), b.records.size());
  for (std::size_t i = 0; i < a.records.size(); ++i) {
    EXPECT_EQ(a.records[i].response.to_array(), b.records[i].response.to_array());
    EXPECT_EQ(flatten(a.records[i].context), flatten(b.records[i].context));
  }
  const std::vector<int> ranks = a.true_ranks();
  for (std::size_t i = 0; i < players.size(); ++i)
    for (std::size_t j = 0; j < players.size(); ++j)
      if (players[i].skill > players[j].skill) {
        EXPECT_LT(ranks[i], ranks[j]);
      }
}
