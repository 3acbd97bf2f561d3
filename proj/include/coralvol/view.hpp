#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "coralvol/geom.hpp"

namespace coralvol::view {

using geom::Vec3;

struct CameraPose {
  Vec3 position = Vec3(4, 0, 0);
  Vec3 look_at = Vec3::Zero();
  Vec3 up = Vec3::UnitZ();
  double fov_y_deg = 30.0;
  int width = 160;
  int height = 120;
};

// Orthonormal camera frame (OpenCV convention: x right, y down, z forward).
struct CameraFrame {
  Vec3 right, down, forward;
  Vec3 center;
};
CameraFrame camera_frame(const CameraPose& pose);

// World direction through the center of pixel (row, col).
Vec3 pixel_ray(const CameraPose& pose, const CameraFrame& frame, int row, int col);

std::array<double, 12> extrinsic_from_pose(const CameraPose& pose);
CameraPose pose_from_extrinsic(const std::array<double, 12>& extrinsic, double fov_y_deg, int width,
                               int height);

// Continuous pixel coordinates (col, row) of a world point; integer parts name the pixel.
std::array<double, 2> project(const CameraPose& pose, const CameraFrame& frame, const Vec3& p);

struct TrajectoryOptions {
  double radius = 4.0;  // must exceed the unit bbox half-diagonal
  double jitter = 0.05;  // uniform per-coordinate perturbation of position and look-at
  double fov_min_deg = 22.0;
  double fov_max_deg = 40.0;
  int width = 160;
  int height = 120;
};

// n cameras evenly spaced in azimuth on a horizontal ring (elevation 0).
std::vector<CameraPose> sample_ring_poses(int n, const TrajectoryOptions& opt, std::uint64_t seed);

// n cameras on a low-discrepancy (R2) lattice over a sector of `sector_deg`
// in azimuth and min(sector_deg, 160) in elevation, centered on azimuth 0.
std::vector<CameraPose> sample_sector_poses(int n, double sector_deg, const TrajectoryOptions& opt,
                                            std::uint64_t seed);

struct PixelSample {
  Vec3 point = Vec3::Zero();
  double confidence = 0.0;
  bool valid = false;
};

struct PointMap {
  int width = 0;
  int height = 0;
  CameraPose pose;
  double noise_sigma = 0.0;
  std::array<double, 12> extrinsic{};  // world-to-camera [R|t], row-major
  std::vector<PixelSample> pixels;     // row-major

  const PixelSample& at(int row, int col) const {
    return pixels[static_cast<std::size_t>(row) * width + col];
  }
  std::size_t valid_count() const;
};

inline constexpr double kConfidenceSigma0 = 0.01;
inline constexpr double kMinConfidence = 1e-6;

// Ray casts every pixel against the mesh. Missed pixels are invalid (black
// background). Valid points carry Gaussian noise along the viewing ray and a
// confidence |n.r| * exp(-noise_sigma / 0.01) clamped into (0, 1].
PointMap render_pointmap(const geom::TriMesh& mesh, const CameraPose& pose, double noise_sigma,
                         std::uint64_t seed);
PointMap render_pointmap(const geom::Bvh& bvh, const CameraPose& pose, double noise_sigma,
                         std::uint64_t seed);

// --- PMAP interchange files --------------------------------------------------
//
// Little-endian:
//   char[4] "PMAP" | u32 version (=1) | u32 width | u32 height
//   f64[12] world-to-camera extrinsic [R|t], row-major 3x4
//   f64 fov_y_deg | f64 noise_sigma
//   width*height records, row-major: f32 x, f32 y, f32 z, f32 confidence, u8 valid
// Invalid records carry zeros.

inline constexpr std::uint32_t kPmapVersion = 1;
inline constexpr std::size_t kPmapHeaderBytes = 4 + 4 * 3 + 8 * 14;
inline constexpr std::size_t kPmapRecordBytes = 17;

struct PmapValidation {
  bool ok = false;
  std::string error;  // empty when ok
};

PmapValidation validate_pmap(std::string_view bytes);
std::string encode_pmap(const PointMap& map);
PointMap decode_pmap(std::string_view bytes);  // throws DataError if invalid
void write_pmap(const PointMap& map, const std::string& path);
PointMap read_pmap(const std::string& path);

}  // namespace coralvol::view
