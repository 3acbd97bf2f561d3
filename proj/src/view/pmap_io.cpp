#include <cmath>

#include "coralvol/view.hpp"

namespace coralvol::view {

std::array<double, 12> extrinsic_from_pose(const CameraPose& pose) {
  const CameraFrame f = camera_frame(pose);
  const Vec3 rows[3] = {f.right, f.down, f.forward};
  std::array<double, 12> e{};
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) e[r * 4 + c] = rows[r][c];
    e[r * 4 + 3] = -rows[r].dot(f.center);
  }
  return e;
}

CameraPose pose_from_extrinsic(const std::array<double, 12>& e, double fov_y_deg, int width,
                               int height) {
  Vec3 rows[3];
  Vec3 t;
  for (int r = 0; r < 3; ++r) {
    rows[r] = Vec3(e[r * 4], e[r * 4 + 1], e[r * 4 + 2]);
    t[r] = e[r * 4 + 3];
  }
  CameraPose pose;
  pose.position = -(rows[0] * t[0] + rows[1] * t[1] + rows[2] * t[2]);
  pose.look_at = pose.position + rows[2];
  pose.up = -rows[1];
  pose.fov_y_deg = fov_y_deg;
  pose.width = width;
  pose.height = height;
  return pose;
}

namespace {

struct Header {
  std::uint32_t version = 0, width = 0, height = 0;
  std::array<double, 12> extrinsic{};
  double fov = 0.0, noise = 0.0;
};

Header read_header(ByteReader& in) {
  if (in.remaining() < kPmapHeaderBytes) throw DataError("file shorter than the PMAP header");
  if (in.bytes(4) != "PMAP") throw DataError("bad magic (expected PMAP)");
  Header h;
  h.version = in.u32();
  h.width = in.u32();
  h.height = in.u32();
  for (auto& v : h.extrinsic) v = in.f64();
  h.fov = in.f64();
  h.noise = in.f64();
  return h;
}

// Returns an error message, or an empty string for a well-formed file.
std::string check(std::string_view bytes) {
  try {
    ByteReader in(bytes);
    const Header h = read_header(in);
    if (h.version != kPmapVersion) return "unsupported version " + std::to_string(h.version);
    if (h.width == 0 || h.height == 0) return "zero-sized grid";
    const std::size_t n = static_cast<std::size_t>(h.width) * h.height;
    if (in.remaining() != n * kPmapRecordBytes)
      return "payload has " + std::to_string(in.remaining()) + " bytes, expected " +
             std::to_string(n * kPmapRecordBytes);
    for (double v : h.extrinsic)
      if (!std::isfinite(v)) return "non-finite extrinsic";
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b) {
        double dot = 0.0;
        for (int c = 0; c < 3; ++c) dot += h.extrinsic[a * 4 + c] * h.extrinsic[b * 4 + c];
        if (std::abs(dot - (a == b ? 1.0 : 0.0)) > 1e-5) return "extrinsic rotation is not orthonormal";
      }
    if (!(h.fov > 0.0 && h.fov < 180.0)) return "field of view outside (0, 180)";
    if (!(h.noise >= 0.0) || !std::isfinite(h.noise)) return "invalid noise_sigma";
    for (std::size_t i = 0; i < n; ++i) {
      const float x = in.f32(), y = in.f32(), z = in.f32(), conf = in.f32();
      const std::uint8_t valid = in.u8();
      if (valid > 1) return "record " + std::to_string(i) + ": valid flag must be 0 or 1";
      if (valid) {
        if (!std::isfinite(x) || !std::isfinite(y) || !std::isfinite(z))
          return "record " + std::to_string(i) + ": non-finite point";
        if (!(conf > 0.0f) || !std::isfinite(conf))
          return "record " + std::to_string(i) + ": confidence must be positive";
      } else if (x != 0.0f || y != 0.0f || z != 0.0f || conf != 0.0f) {
        return "record " + std::to_string(i) + ": invalid pixel carries data";
      }
    }
  } catch (const DataError& e) {
    return e.what();
  }
  return {};
}

}  // namespace

PmapValidation validate_pmap(std::string_view bytes) {
  auto err = check(bytes);
  return {err.empty(), err};
}

std::string encode_pmap(const PointMap& map) {
  if (map.pixels.size() != static_cast<std::size_t>(map.width) * map.height)
    throw std::invalid_argument("encode_pmap: pixel count does not match width*height");
  ByteWriter w;
  w.bytes("PMAP");
  w.u32(kPmapVersion);
  w.u32(static_cast<std::uint32_t>(map.width));
  w.u32(static_cast<std::uint32_t>(map.height));
  for (double v : map.extrinsic) w.f64(v);
  w.f64(map.pose.fov_y_deg);
  w.f64(map.noise_sigma);
  for (const auto& px : map.pixels) {
    if (px.valid) {
      w.f32(static_cast<float>(px.point.x()));
      w.f32(static_cast<float>(px.point.y()));
      w.f32(static_cast<float>(px.point.z()));
      w.f32(static_cast<float>(px.confidence));
      w.u8(1);
    } else {
      for (int k = 0; k < 4; ++k) w.f32(0.0f);
      w.u8(0);
    }
  }
  return w.str();
}

PointMap decode_pmap(std::string_view bytes) {
  if (auto err = check(bytes); !err.empty()) throw DataError("invalid PMAP: " + err);
  ByteReader in(bytes);
  const Header h = read_header(in);
  PointMap map;
  map.width = static_cast<int>(h.width);
  map.height = static_cast<int>(h.height);
  map.extrinsic = h.extrinsic;
  map.pose = pose_from_extrinsic(h.extrinsic, h.fov, map.width, map.height);
  map.noise_sigma = h.noise;
  map.pixels.resize(static_cast<std::size_t>(map.width) * map.height);
  for (auto& px : map.pixels) {
    const float x = in.f32(), y = in.f32(), z = in.f32(), conf = in.f32();
    px.valid = in.u8() == 1;
    px.point = Vec3(x, y, z);
    px.confidence = conf;
  }
  return map;
}

void write_pmap(const PointMap& map, const std::string& path) { write_file(path, encode_pmap(map)); }

PointMap read_pmap(const std::string& path) {
  try {
    return decode_pmap(read_file(path));
  } catch (const DataError& e) {
    throw DataError(path + ": " + e.what());
  }
}

}  // namespace coralvol::view
