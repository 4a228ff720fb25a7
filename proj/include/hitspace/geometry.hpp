#pragma once

// Pinhole cameras, Pluecker back-projection rays, synthetic 2D observations,
// and planar pose estimation from the four table corners.

#include "hitspace/core.hpp"
#include "hitspace/least_squares.hpp"
#include "hitspace/physics.hpp"

#include <Eigen/Dense>
#include <Eigen/Geometry>

#include <array>
#include <cmath>
#include <span>
#include <string>
#include <vector>

namespace hitspace {

struct CameraIntrinsics {
  double fx = 1000.0, fy = 1000.0;
  double cx = 640.0, cy = 360.0;
  int image_w = 1280, image_h = 720;

  void validate() const {
    if (!(fx > 0.0 && fy > 0.0)) throw Error(ErrorKind::Config, "focal lengths must be > 0");
    if (!(cx >= 0.0 && cx <= image_w && cy >= 0.0 && cy <= image_h))
      throw Error(ErrorKind::Config, "principal point must lie inside the image");
  }

  Mat3 matrix() const {
    Mat3 K;
    K << fx, 0.0, cx, 0.0, fy, cy, 0.0, 0.0, 1.0;
    return K;
  }
};

/// World-to-camera rigid transform: x_cam = rotation * x_world + translation.
/// Camera axes: x right, y down, z forward.
struct CameraPose {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  Vec3 center() const { return -rotation.transpose() * translation; }

  void validate() const {
    const double orth = (rotation * rotation.transpose() - Mat3::Identity()).cwiseAbs().maxCoeff();
    if (!(orth < 1e-9) || !(std::abs(rotation.determinant() - 1.0) < 1e-9))
      throw Error(ErrorKind::InvalidInput, "camera rotation is not a proper rotation");
    if (!translation.allFinite()) throw Error(ErrorKind::InvalidInput, "camera translation not finite");
  }

  static CameraPose look_at(const Vec3& eye, const Vec3& target, const Vec3& up = Vec3::UnitZ()) {
    const Vec3 forward = (target - eye).normalized();
    Vec3 right = forward.cross(up);
    if (right.norm() < 1e-9) right = forward.cross(Vec3::UnitY());
    right.normalize();
    const Vec3 down = forward.cross(right);
    CameraPose pose;
    pose.rotation.row(0) = right.transpose();
    pose.rotation.row(1) = down.transpose();
    pose.rotation.row(2) = forward.transpose();
    pose.translation = -pose.rotation * eye;
    return pose;
  }
};

struct Camera {
  std::string name;
  CameraIntrinsics intrinsics;
  CameraPose pose;
};

using Pixel = Eigen::Vector2d;

/// Unit direction plus moment (camera centre x direction).
struct PluckerLine {
  Vec3 direction = Vec3::UnitZ();
  Vec3 moment = Vec3::Zero();

  /// Perpendicular distance from a point to the line.
  double distance_to(const Vec3& p) const { return (p.cross(direction) - moment).norm(); }

  /// Same line expressed in a frame whose origin sits at `origin` of this one.
  PluckerLine shifted_origin(const Vec3& origin) const {
    return {direction, moment - origin.cross(direction)};
  }
};

struct ObservationFrame {
  double t_s = 0.0;
  Pixel pixel = Pixel::Zero();
  bool visible = false;
};

struct Observation2D {
  double fps = 30.0;
  int camera_id = 0;
  std::vector<ObservationFrame> frames;

  std::size_t visible_count() const {
    std::size_t n = 0;
    for (const auto& f : frames) n += f.visible ? 1 : 0;
    return n;
  }

  void validate() const {
    for (std::size_t i = 1; i < frames.size(); ++i) {
      if (!(frames[i].t_s > frames[i - 1].t_s))
        throw Error(ErrorKind::InvalidInput, "observation timestamps must increase strictly");
    }
  }
};

inline Pixel project(const Vec3& point_world, const CameraIntrinsics& intr, const CameraPose& pose) {
  const Vec3 pc = pose.rotation * point_world + pose.translation;
  if (!(pc.z() > 1e-6)) throw Error(ErrorKind::Projection, "point is behind the camera");
  return {intr.fx * pc.x() / pc.z() + intr.cx, intr.fy * pc.y() / pc.z() + intr.cy};
}

inline PluckerLine pixel_to_pluecker(const Pixel& px, const CameraIntrinsics& intr, const CameraPose& pose) {
  const Vec3 dir_cam((px.x() - intr.cx) / intr.fx, (px.y() - intr.cy) / intr.fy, 1.0);
  PluckerLine line;
  line.direction = (pose.rotation.transpose() * dir_cam).normalized();
  line.moment = pose.center().cross(line.direction);
  return line;
}

inline bool inside_image(const Pixel& px, const CameraIntrinsics& intr) {
  return px.x() >= 0.0 && px.y() >= 0.0 && px.x() <= intr.image_w && px.y() <= intr.image_h;
}

/// Frame times k / fps covering [0, min(window_s, trajectory end)].
inline std::vector<double> frame_times(const Trajectory& traj, double fps, double window_s) {
  if (!(fps > 0.0)) throw Error(ErrorKind::InvalidInput, "fps must be > 0");
  const double end = std::min(traj.end_time(), window_s);
  std::vector<double> times;
  for (long k = 0;; ++k) {
    const double t = static_cast<double>(k) / fps;
    if (t > end + 1e-9) break;
    times.push_back(t);
  }
  return times;
}

struct ObservationNoise {
  double pixel_sigma = 0.0;
  // Independent per-frame occlusion probability.
  double mask_rate = 0.0;
  // Observation window length.
  double window_s = 1.0;
};

/// Sample the trajectory at the frame rate, project, add isotropic Gaussian
/// pixel noise and apply the occlusion mask. Frames that fall behind the
/// camera or outside the image are marked invisible.
inline Observation2D project_trajectory(const Trajectory& traj, const Camera& cam, double fps,
                                        const ObservationNoise& noise, const PhysParams& params,
                                        Rng& rng) {
  if (traj.empty()) throw Error(ErrorKind::InvalidInput, "empty trajectory");
  Observation2D obs;
  obs.fps = fps;
  for (double t : frame_times(traj, fps, noise.window_s)) {
    ObservationFrame f;
    f.t_s = t;
    const Vec3 p = state_at(traj, t, params).pos_m;
    // Always draw noise and mask so the stream position is independent of visibility.
    const double nu = gaussian(rng, 1.0), nv = gaussian(rng, 1.0);
    const bool masked = bernoulli(rng, noise.mask_rate);
    const Vec3 pc = cam.pose.rotation * p + cam.pose.translation;
    if (pc.z() > 1e-6) {
      f.pixel = project(p, cam.intrinsics, cam.pose) + noise.pixel_sigma * Pixel(nu, nv);
      f.visible = !masked && inside_image(f.pixel, cam.intrinsics);
    }
    obs.frames.push_back(f);
  }
  return obs;
}

/// Explicit-mask variant: frames whose mask entry is false are hidden.
inline Observation2D project_trajectory(const Trajectory& traj, const Camera& cam, double fps,
                                        double pixel_sigma, std::span<const bool> visible_mask,
                                        const PhysParams& params, Rng& rng, double window_s = 1.0) {
  ObservationNoise noise;
  noise.pixel_sigma = pixel_sigma;
  noise.window_s = window_s;
  Observation2D obs = project_trajectory(traj, cam, fps, noise, params, rng);
  for (std::size_t i = 0; i < obs.frames.size() && i < visible_mask.size(); ++i)
    obs.frames[i].visible = obs.frames[i].visible && visible_mask[i];
  return obs;
}

// ---------------------------------------------------------------------------
// Pose from four coplanar points

namespace detail {

inline double triangle_area2(const Eigen::Vector2d& a, const Eigen::Vector2d& b, const Eigen::Vector2d& c) {
  const Eigen::Vector2d u = b - a, v = c - a;
  return std::abs(u.x() * v.y() - u.y() * v.x());
}

inline CameraPose pose_from_params(const Eigen::Matrix<double, 6, 1>& x) {
  const Vec3 rv = x.head<3>();
  const double angle = rv.norm();
  CameraPose pose;
  pose.rotation = angle > 0.0 ? Eigen::AngleAxisd(angle, rv / angle).toRotationMatrix() : Mat3::Identity();
  pose.translation = x.tail<3>();
  return pose;
}

inline Eigen::Matrix<double, 6, 1> params_from_pose(const CameraPose& pose) {
  Eigen::AngleAxisd aa(pose.rotation);
  Eigen::Matrix<double, 6, 1> x;
  x << aa.angle() * aa.axis(), pose.translation;
  return x;
}

}  // namespace detail

/// Homography-based planar pose followed by reprojection-error refinement.
inline CameraPose estimate_camera_pose(const std::array<Pixel, 4>& corners_px,
                                       const std::array<Vec3, 4>& corners_world,
                                       const CameraIntrinsics& intr) {
  // Plane frame: origin at the centroid, in-plane axes from the first edge.
  Vec3 origin = Vec3::Zero();
  for (const auto& c : corners_world) origin += c / 4.0;
  const Vec3 e1 = (corners_world[1] - corners_world[0]).normalized();
  Vec3 normal = (corners_world[1] - corners_world[0]).cross(corners_world[3] - corners_world[0]);
  if (!(normal.norm() > 1e-12)) throw Error(ErrorKind::Estimation, "degenerate world corners");
  normal.normalize();
  const Vec3 e2 = normal.cross(e1);
  Mat3 basis;
  basis.col(0) = e1;
  basis.col(1) = e2;
  basis.col(2) = normal;

  std::array<Eigen::Vector2d, 4> plane, img;
  double scale_plane = 0.0, scale_img = 0.0;
  for (int i = 0; i < 4; ++i) {
    const Vec3 local = basis.transpose() * (corners_world[static_cast<std::size_t>(i)] - origin);
    if (std::abs(local.z()) > 1e-6 * std::max(1.0, local.head<2>().norm()))
      throw Error(ErrorKind::Estimation, "world corners are not coplanar");
    plane[static_cast<std::size_t>(i)] = local.head<2>();
    const Pixel& px = corners_px[static_cast<std::size_t>(i)];
    img[static_cast<std::size_t>(i)] = Eigen::Vector2d((px.x() - intr.cx) / intr.fx, (px.y() - intr.cy) / intr.fy);
    scale_plane = std::max(scale_plane, plane[static_cast<std::size_t>(i)].norm());
    scale_img = std::max(scale_img, (img[static_cast<std::size_t>(i)] - img[0]).norm());
  }
  for (int a = 0; a < 4; ++a) {
    for (int b = a + 1; b < 4; ++b) {
      for (int c = b + 1; c < 4; ++c) {
        const auto ua = static_cast<std::size_t>(a), ub = static_cast<std::size_t>(b), uc = static_cast<std::size_t>(c);
        if (detail::triangle_area2(plane[ua], plane[ub], plane[uc]) < 1e-6 * scale_plane * scale_plane ||
            detail::triangle_area2(img[ua], img[ub], img[uc]) < 1e-6 * scale_img * scale_img)
          throw Error(ErrorKind::Estimation, "three corners are collinear");
      }
    }
  }

  // DLT for H: img ~ H * [plane; 1].
  Eigen::Matrix<double, 8, 9> M;
  for (int i = 0; i < 4; ++i) {
    const double X = plane[static_cast<std::size_t>(i)].x(), Y = plane[static_cast<std::size_t>(i)].y();
    const double u = img[static_cast<std::size_t>(i)].x(), v = img[static_cast<std::size_t>(i)].y();
    M.row(2 * i) << X, Y, 1, 0, 0, 0, -u * X, -u * Y, -u;
    M.row(2 * i + 1) << 0, 0, 0, X, Y, 1, -v * X, -v * Y, -v;
  }
  Eigen::JacobiSVD<Eigen::Matrix<double, 8, 9>> svd(M, Eigen::ComputeFullV);
  const Eigen::Matrix<double, 9, 1> h = svd.matrixV().col(8);
  Mat3 H;
  H << h(0), h(1), h(2), h(3), h(4), h(5), h(6), h(7), h(8);

  Vec3 h1 = H.col(0), h2 = H.col(1), h3 = H.col(2);
  const double lambda = 2.0 / (h1.norm() + h2.norm());
  // The plane origin must end up in front of the camera.
  if (h3.z() < 0.0) {
    h1 = -h1;
    h2 = -h2;
    h3 = -h3;
  }
  Mat3 Rp;
  Rp.col(0) = lambda * h1;
  Rp.col(1) = lambda * h2;
  Rp.col(2) = Rp.col(0).cross(Rp.col(1));
  Eigen::JacobiSVD<Mat3> rsvd(Rp, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 R_plane = rsvd.matrixU() * rsvd.matrixV().transpose();
  if (R_plane.determinant() < 0.0) {
    Mat3 U = rsvd.matrixU();
    U.col(2) = -U.col(2);
    R_plane = U * rsvd.matrixV().transpose();
  }
  const Vec3 t_plane = lambda * h3;

  CameraPose init;
  init.rotation = R_plane * basis.transpose();
  init.translation = t_plane - init.rotation * origin;

  // Refine on pixel reprojection error over rotation vector + translation.
  auto residuals = [&](const Eigen::VectorXd& x) -> std::optional<Eigen::VectorXd> {
    const CameraPose pose = detail::pose_from_params(x);
    Eigen::VectorXd r(8);
    for (int i = 0; i < 4; ++i) {
      const Vec3 pc = pose.rotation * corners_world[static_cast<std::size_t>(i)] + pose.translation;
      if (!(pc.z() > 1e-6)) return std::nullopt;
      const Pixel p = project(corners_world[static_cast<std::size_t>(i)], intr, pose);
      r.segment<2>(2 * i) = p - corners_px[static_cast<std::size_t>(i)];
    }
    return r;
  };
  Eigen::VectorXd typical(6);
  typical << 1.0, 1.0, 1.0, 1.0, 1.0, 1.0;
  LeastSquaresOptions lso;
  lso.gradient_tolerance = 1e-12;
  lso.step_tolerance = 1e-14;
  Eigen::VectorXd x0 = detail::params_from_pose(init);
  if (!residuals(x0)) throw Error(ErrorKind::Estimation, "initial pose places corners behind the camera");
  const LeastSquaresResult res = least_squares(residuals, x0, typical, lso);
  CameraPose pose = detail::pose_from_params(res.x);
  return pose;
}

inline double corner_reprojection_rmse(const std::array<Pixel, 4>& corners_px,
                                       const std::array<Vec3, 4>& corners_world,
                                       const CameraIntrinsics& intr, const CameraPose& pose) {
  double sum = 0.0;
  for (std::size_t i = 0; i < 4; ++i) sum += (project(corners_world[i], intr, pose) - corners_px[i]).squaredNorm();
  return std::sqrt(sum / 4.0);
}

}  // namespace hitspace
