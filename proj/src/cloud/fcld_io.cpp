#include "coralvol/cloud.hpp"

namespace coralvol::cloud {

std::string encode_fcld(const FeatureCloud& cloud) {
  ByteWriter w;
  w.bytes("FCLD");
  w.u32(kFcldVersion);
  w.u64(cloud.size());
  w.u64(fnv1a64(cloud.shape_id));
  for (const auto& f : cloud.features)
    for (double v : f) w.f32(static_cast<float>(v));
  return w.str();
}

FeatureCloud decode_fcld(std::string_view bytes, const std::string& shape_id) {
  ByteReader in(bytes);
  if (in.remaining() < 24) throw DataError("file shorter than the FCLD header");
  if (in.bytes(4) != "FCLD") throw DataError("bad magic (expected FCLD)");
  if (const auto version = in.u32(); version != kFcldVersion)
    throw DataError("unsupported FCLD version " + std::to_string(version));
  const std::uint64_t n = in.u64();
  const std::uint64_t hash = in.u64();
  if (in.remaining() != n * 16) throw DataError("FCLD payload size does not match N");
  if (!shape_id.empty() && hash != fnv1a64(shape_id))
    throw DataError("FCLD shape id hash does not match '" + shape_id + "'");
  FeatureCloud cloud;
  cloud.shape_id = shape_id;
  cloud.features.resize(n);
  for (auto& f : cloud.features)
    for (auto& v : f) v = in.f32();
  check_cloud(cloud);
  return cloud;
}

void write_fcld(const FeatureCloud& cloud, const std::string& path) {
  write_file(path, encode_fcld(cloud));
}

FeatureCloud read_fcld(const std::string& path, const std::string& shape_id) {
  try {
    return decode_fcld(read_file(path), shape_id);
  } catch (const DataError& e) {
    throw DataError(path + ": " + e.what());
  }
}

}  // namespace coralvol::cloud
