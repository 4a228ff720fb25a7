#include "hitspace/geometry.hpp"

#include <gtest/gtest.h>

using namespace hitspace;

namespace {

CameraIntrinsics intr1000() { return CameraIntrinsics{}; }

Camera side_camera() {
  CameraIntrinsics k;
  k.fx = k.fy = 900;
  return {"side", k, CameraPose::look_at(Vec3(0, -5.5, 1.6), Vec3(0, 0, 0))};
}

Trajectory long_rally_shot() {
  // Lobbed ball that stays in flight beyond one second.
  const HitVector h{Vec3(-1.6, 0, 0.4), Vec3(5, 0, 5.5), Vec3(0, 40, 0)};
  SimulationOptions o;
  o.horizon_s = 1.5;
  return simulate(h, PhysParams{}, TableGeometry{}, o);
}

}  // namespace

TEST(Project, OpticalAxisMapsToPrincipalPoint) {
  for (double depth : {0.5, 3.0, 40.0}) {
    const Pixel px = project(Vec3(0, 0, depth), intr1000(), CameraPose{});
    EXPECT_DOUBLE_EQ(px.x(), 640.0);
    EXPECT_DOUBLE_EQ(px.y(), 360.0);
  }
}

TEST(Project, PinholeByHand) {
  const Pixel px = project(Vec3(0.1, 0, 1), intr1000(), CameraPose{});
  EXPECT_NEAR(px.x(), 740.0, 1e-12);
  EXPECT_NEAR(px.y(), 360.0, 1e-12);
}

TEST(Project, BehindCameraThrows) {
  try {
    project(Vec3(0, 0, -1), intr1000(), CameraPose{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Projection);
  }
}

TEST(Pluecker, CentralPixelAtOrigin) {
  const PluckerLine l = pixel_to_pluecker(Pixel(640, 360), intr1000(), CameraPose{});
  EXPECT_TRUE(l.direction.isApprox(Vec3(0, 0, 1), 1e-15));
  EXPECT_LE(l.moment.norm(), 1e-15);
}

TEST(PlueckerProperty, InvariantAndRoundTrip) {
  Rng rng(5);
  const Camera cam = side_camera();
  for (int i = 0; i < 2000; ++i) {
    const Vec3 p(uniform(rng, -1.5, 1.5), uniform(rng, -0.8, 0.8), uniform(rng, 0, 1));
    const Pixel px = project(p, cam.intrinsics, cam.pose);
    const PluckerLine l = pixel_to_pluecker(px, cam.intrinsics, cam.pose);
    EXPECT_LE(std::abs(l.direction.dot(l.moment)), 1e-12);
    EXPECT_NEAR(l.direction.norm(), 1.0, 1e-14);
    EXPECT_LE(l.distance_to(p), 1e-9);
    // Another point on the ray projects back to the same pixel.
    const Vec3 q = cam.pose.center() + 2.7 * l.direction;
    EXPECT_LE((project(q, cam.intrinsics, cam.pose) - px).norm(), 1e-9);
  }
}

TEST(ProjectTrajectory, NoiselessIsExactAnd31Frames) {
  const Trajectory t = long_rally_shot();
  ASSERT_GE(t.end_time(), 1.0);
  Rng rng(1);
  const Camera cam = side_camera();
  const Observation2D o = project_trajectory(t, cam, 30.0, ObservationNoise{}, PhysParams{}, rng);
  ASSERT_EQ(o.frames.size(), 31u);
  for (const auto& f : o.frames) {
    const Pixel exact = project(state_at(t, f.t_s, PhysParams{}).pos_m, cam.intrinsics, cam.pose);
    EXPECT_EQ(f.pixel, exact);
    EXPECT_TRUE(f.visible);
  }
}

TEST(ProjectTrajectory, MaskRateWithinBinomialInterval) {
  const Trajectory t = long_rally_shot();
  const Camera cam = side_camera();
  ObservationNoise noise;
  noise.mask_rate = 0.3;
  std::size_t visible = 0, total = 0;
  for (int s = 0; s < 400; ++s) {
    Rng rng = substream(9, "mask", static_cast<std::uint64_t>(s));
    const Observation2D o = project_trajectory(t, cam, 30.0, noise, PhysParams{}, rng);
    visible += o.visible_count();
    total += o.frames.size();
  }
  const double frac = static_cast<double>(visible) / static_cast<double>(total);
  const double sd = std::sqrt(0.7 * 0.3 / static_cast<double>(total));
  EXPECT_NEAR(frac, 0.7, 4 * sd);
}

TEST(ProjectTrajectory, EmptyTrajectoryRejected) {
  Rng rng(1);
  EXPECT_THROW(project_trajectory(Trajectory{}, side_camera(), 30.0, ObservationNoise{}, PhysParams{}, rng), Error);
}

TEST(Pose, RoundTripFromTableCorners) {
  const TableGeometry table;
  const auto corners = table.corners();
  Rng rng(21);
  for (int i = 0; i < 20; ++i) {
    const Vec3 eye(uniform(rng, -6, -3), uniform(rng, -5, 5), uniform(rng, 1, 3));
    const CameraPose truth = CameraPose::look_at(eye, Vec3(uniform(rng, -0.5, 0.5), 0, 0));
    std::array<Pixel, 4> px;
    for (std::size_t k = 0; k < 4; ++k) px[k] = project(corners[k], intr1000(), truth);
    const CameraPose est = estimate_camera_pose(px, corners, intr1000());
    const Eigen::AngleAxisd d(est.rotation * truth.rotation.transpose());
    EXPECT_LT(std::abs(d.angle()), 1e-3);
    EXPECT_LT((est.translation - truth.translation).norm(), 1e-3);
    EXPECT_LT(corner_reprojection_rmse(px, corners, intr1000(), est), 0.5);
  }
}

TEST(Pose, OnePixelNoiseReprojection) {
  const TableGeometry table;
  const auto corners = table.corners();
  const CameraPose truth = CameraPose::look_at(Vec3(-5, -2, 2), Vec3(0, 0, 0));
  for (int s = 0; s < 30; ++s) {
    Rng rng = substream(4, "pose-noise", static_cast<std::uint64_t>(s));
    std::array<Pixel, 4> px;
    for (std::size_t k = 0; k < 4; ++k)
      px[k] = project(corners[k], intr1000(), truth) + Pixel(gaussian(rng, 1.0), gaussian(rng, 1.0));
    const CameraPose est = estimate_camera_pose(px, corners, intr1000());
    EXPECT_LE(corner_reprojection_rmse(px, corners, intr1000(), est), 2.0);
  }
}

TEST(Pose, FrontalSquare) {
  const std::array<Vec3, 4> sq{Vec3(-1, -1, 0), Vec3(1, -1, 0), Vec3(1, 1, 0), Vec3(-1, 1, 0)};
  CameraPose truth;
  truth.rotation = Eigen::AngleAxisd(M_PI, Vec3::UnitX()).toRotationMatrix();
  truth.translation = Vec3(0, 0, 5);
  std::array<Pixel, 4> px;
  for (std::size_t k = 0; k < 4; ++k) px[k] = project(sq[k], intr1000(), truth);
  const CameraPose est = estimate_camera_pose(px, sq, intr1000());
  EXPECT_LT((est.rotation - truth.rotation).cwiseAbs().maxCoeff(), 1e-6);
  EXPECT_LT((est.translation - truth.translation).norm(), 1e-6);
}

TEST(Pose, CyclicRelabelingInvariant) {
  const TableGeometry table;
  const auto corners = table.corners();
  const CameraPose truth = CameraPose::look_at(Vec3(-4, 3, 2.5), Vec3(0.2, 0, 0));
  std::array<Pixel, 4> px;
  for (std::size_t k = 0; k < 4; ++k) px[k] = project(corners[k], intr1000(), truth);
  const CameraPose a = estimate_camera_pose(px, corners, intr1000());
  std::array<Pixel, 4> px2;
  std::array<Vec3, 4> c2;
  for (std::size_t k = 0; k < 4; ++k) {
    px2[k] = px[(k + 1) % 4];
    c2[k] = corners[(k + 1) % 4];
  }
  const CameraPose b = estimate_camera_pose(px2, c2, intr1000());
  EXPECT_LT((a.rotation - b.rotation).cwiseAbs().maxCoeff(), 1e-6);
  EXPECT_LT((a.translation - b.translation).norm(), 1e-6);
}

TEST(Pose, CollinearCornersRejected) {
  const std::array<Vec3, 4> bad{Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(2, 0, 0), Vec3(0, 1, 0)};
  std::array<Pixel, 4> px{Pixel(100, 100), Pixel(200, 100), Pixel(300, 100), Pixel(100, 200)};
  try {
    estimate_camera_pose(px, bad, intr1000());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Estimation);
  }
}
