#include <charconv>
#include <cstdio>
#include <sstream>

#include "coralvol/geom.hpp"

namespace coralvol::geom {

namespace {

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t' && line[j] != '\r') ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

double to_double(std::string_view s, const std::string& where) {
  double v = 0.0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size())
    throw MeshStructureError(where + ": bad number '" + std::string(s) + "'");
  return v;
}

}  // namespace

TriMesh parse_obj(std::string_view text, const std::string& origin) {
  TriMesh mesh;
  std::size_t pos = 0, line_no = 0;
  while (pos < text.size()) {
    std::size_t nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    const auto line = text.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    const auto tok = split_ws(line);
    if (tok.empty() || tok[0].front() == '#') continue;
    const std::string where = origin + ":" + std::to_string(line_no);
    if (tok[0] == "v") {
      if (tok.size() < 4) throw MeshStructureError(where + ": vertex needs 3 coordinates");
      mesh.vertices.emplace_back(to_double(tok[1], where), to_double(tok[2], where),
                                 to_double(tok[3], where));
    } else if (tok[0] == "f") {
      if (tok.size() != 4) throw MeshStructureError(where + ": only triangular faces are supported");
      Face f{};
      for (int k = 0; k < 3; ++k) {
        auto idx_str = tok[k + 1].substr(0, tok[k + 1].find('/'));
        long idx = 0;
        auto [p, ec] = std::from_chars(idx_str.data(), idx_str.data() + idx_str.size(), idx);
        if (ec != std::errc() || p != idx_str.data() + idx_str.size() || idx < 1)
          throw MeshStructureError(where + ": bad face index '" + std::string(tok[k + 1]) + "'");
        f[k] = static_cast<std::uint32_t>(idx - 1);
      }
      mesh.faces.push_back(f);
    } else if (tok[0] == "o" || tok[0] == "g") {
      if (tok.size() > 1 && mesh.name.empty()) mesh.name = std::string(tok[1]);
    }
    // vn, vt, s, usemtl, mtllib ... are ignored.
  }
  for (const auto& f : mesh.faces)
    for (auto idx : f)
      if (idx >= mesh.vertices.size())
        throw MeshStructureError(origin + ": face index " + std::to_string(idx + 1) + " exceeds the " +
                                 std::to_string(mesh.vertices.size()) + " vertices");
  return mesh;
}

TriMesh read_obj(const std::string& path) { return parse_obj(read_file(path), path); }

std::string format_obj(const TriMesh& mesh) {
  std::string out;
  out.reserve(mesh.vertices.size() * 64 + mesh.faces.size() * 24);
  char buf[128];
  if (!mesh.name.empty()) out += "o " + mesh.name + "\n";
  for (const auto& v : mesh.vertices) {
    std::snprintf(buf, sizeof buf, "v %.17g %.17g %.17g\n", v.x(), v.y(), v.z());
    out += buf;
  }
  for (const auto& f : mesh.faces) {
    std::snprintf(buf, sizeof buf, "f %u %u %u\n", f[0] + 1, f[1] + 1, f[2] + 1);
    out += buf;
  }
  return out;
}

void write_obj(const TriMesh& mesh, const std::string& path) { write_file(path, format_obj(mesh)); }

}  // namespace coralvol::geom
