#include <cmath>
#include <numbers>

#include "coralvol/view.hpp"

namespace coralvol::view {

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

void check_trajectory(int n, const TrajectoryOptions& opt) {
  if (n < 1) throw ConfigError("camera trajectory needs at least one pose");
  // The unit bbox (centered) has half-diagonal sqrt(3)/2.
  if (!(opt.radius > std::sqrt(3.0) / 2.0))
    throw ConfigError("camera radius " + std::to_string(opt.radius) +
                      " lies inside the unit bounding box");
  if (opt.jitter < 0.0) throw ConfigError("camera jitter must be non-negative");
  if (!(opt.fov_min_deg > 0.0 && opt.fov_min_deg <= opt.fov_max_deg && opt.fov_max_deg < 180.0))
    throw ConfigError("invalid field-of-view range");
  if (opt.width < 8 || opt.height < 8) throw ConfigError("resolution must be at least 8x8");
}

CameraPose make_pose(const Vec3& dir, const TrajectoryOptions& opt, Rng& rng) {
  CameraPose pose;
  auto jitter = [&] {
    return Vec3(rng.uniform(-opt.jitter, opt.jitter), rng.uniform(-opt.jitter, opt.jitter),
                rng.uniform(-opt.jitter, opt.jitter));
  };
  pose.position = opt.radius * dir;
  pose.look_at = Vec3::Zero();
  if (opt.jitter > 0.0) {
    pose.position += jitter();
    pose.look_at += jitter();
  }
  pose.up = Vec3::UnitZ();
  pose.fov_y_deg = rng.uniform(opt.fov_min_deg, opt.fov_max_deg);
  pose.width = opt.width;
  pose.height = opt.height;
  return pose;
}

}  // namespace

CameraFrame camera_frame(const CameraPose& pose) {
  CameraFrame f;
  f.center = pose.position;
  const Vec3 fwd = pose.look_at - pose.position;
  if (!(fwd.norm() > 0.0)) throw ConfigError("camera position coincides with look-at point");
  f.forward = fwd.normalized();
  Vec3 right = f.forward.cross(pose.up);
  if (right.norm() < 1e-12) throw ConfigError("camera up vector is parallel to the view direction");
  f.right = right.normalized();
  f.down = f.forward.cross(f.right);
  return f;
}

Vec3 pixel_ray(const CameraPose& pose, const CameraFrame& frame, int row, int col) {
  const double tan_half = std::tan(0.5 * pose.fov_y_deg * kDeg);
  const double aspect = static_cast<double>(pose.width) / pose.height;
  const double x = ((col + 0.5) / pose.width * 2.0 - 1.0) * tan_half * aspect;
  const double y = ((row + 0.5) / pose.height * 2.0 - 1.0) * tan_half;
  return (frame.forward + x * frame.right + y * frame.down).normalized();
}

std::array<double, 2> project(const CameraPose& pose, const CameraFrame& frame, const Vec3& p) {
  const double tan_half = std::tan(0.5 * pose.fov_y_deg * kDeg);
  const double aspect = static_cast<double>(pose.width) / pose.height;
  const Vec3 d = p - frame.center;
  const double z = d.dot(frame.forward);
  const double x = d.dot(frame.right) / z;
  const double y = d.dot(frame.down) / z;
  return {(x / (tan_half * aspect) + 1.0) * 0.5 * pose.width,
          (y / tan_half + 1.0) * 0.5 * pose.height};
}

std::vector<CameraPose> sample_ring_poses(int n, const TrajectoryOptions& opt, std::uint64_t seed) {
  check_trajectory(n, opt);
  Rng rng(mix_seed(seed, 0x72696e67ULL));
  std::vector<CameraPose> poses;
  poses.reserve(n);
  for (int i = 0; i < n; ++i) {
    const double az = 2.0 * std::numbers::pi * i / n;
    poses.push_back(make_pose(Vec3(std::cos(az), std::sin(az), 0.0), opt, rng));
  }
  return poses;
}

std::vector<CameraPose> sample_sector_poses(int n, double sector_deg, const TrajectoryOptions& opt,
                                            std::uint64_t seed) {
  check_trajectory(n, opt);
  if (!(sector_deg > 0.0 && sector_deg <= 360.0))
    throw ConfigError("sector must lie in (0, 360] degrees");
  Rng rng(mix_seed(seed, 0x736563746f72ULL));
  // R2 sequence (plastic-number lattice).
  const double g = 1.32471795724474602596;
  const double a1 = 1.0 / g, a2 = 1.0 / (g * g);
  const double el_span = std::min(sector_deg, 160.0);
  std::vector<CameraPose> poses;
  poses.reserve(n);
  for (int i = 0; i < n; ++i) {
    const double u = std::fmod(0.5 + a1 * i, 1.0);
    const double v = std::fmod(0.5 + a2 * i, 1.0);
    const double az = (u - 0.5) * sector_deg * kDeg;
    const double el = (v - 0.5) * el_span * kDeg;
    const Vec3 dir(std::cos(el) * std::cos(az), std::cos(el) * std::sin(az), std::sin(el));
    poses.push_back(make_pose(dir, opt, rng));
  }
  return poses;
}

}  // namespace coralvol::view
