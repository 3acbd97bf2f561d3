#include "coralvol/autodiff.hpp"

namespace coralvol::ad {

std::string encode_params(const ParamSet& params, std::string_view header) {
  ByteWriter w;
  w.bytes("PARM");
  w.u32(kParamVersion);
  w.u32(static_cast<std::uint32_t>(header.size()));
  w.bytes(header);
  w.u32(static_cast<std::uint32_t>(params.count()));
  for (const auto& [name, t] : params.items()) {
    w.u32(static_cast<std::uint32_t>(name.size()));
    w.bytes(name);
    w.u32(static_cast<std::uint32_t>(t.rank()));
    for (auto d : t.shape) w.u64(d);
    for (double v : t.data) w.f64(v);
  }
  return w.str();
}

ParamFile decode_params(std::string_view bytes) {
  ByteReader in(bytes);
  ParamFile out;
  try {
    if (in.bytes(4) != "PARM") throw DataError("bad magic (expected PARM)");
    if (const auto version = in.u32(); version != kParamVersion)
      throw DataError("unsupported parameter file version " + std::to_string(version));
    out.header = std::string(in.bytes(in.u32()));
    const std::uint32_t count = in.u32();
    for (std::uint32_t i = 0; i < count; ++i) {
      std::string name(in.bytes(in.u32()));
      const std::uint32_t rank = in.u32();
      if (rank > 8) throw DataError("parameter '" + name + "' has implausible rank");
      Shape shape(rank);
      for (auto& d : shape) d = in.u64();
      const std::size_t n = shape_size(shape);
      if (n > in.remaining() / 8) throw DataError("parameter '" + name + "' is truncated");
      std::vector<double> values(n);
      for (auto& v : values) v = in.f64();
      out.params.add(name, Tensor(std::move(shape), std::move(values)));
    }
  } catch (const ConfigError& e) {
    throw DataError(e.what());
  }
  if (in.remaining() != 0) throw DataError("trailing bytes after parameter arrays");
  if (!out.params.all_finite()) throw DataError("parameter file holds non-finite values");
  return out;
}

void save_params(const ParamSet& params, const std::string& path, std::string_view header) {
  write_file(path, encode_params(params, header));
}

ParamFile load_params(const std::string& path) {
  try {
    return decode_params(read_file(path));
  } catch (const DataError& e) {
    throw DataError(path + ": " + e.what());
  }
}

}  // namespace coralvol::ad
