#include <algorithm>
#include <bit>
#include <cctype>
#include <charconv>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>
#include <sstream>
#include <tuple>

#include "cvsync/mesh.hpp"

namespace cvsync {
namespace {

[[noreturn]] void parse_fail(const std::string& what, std::size_t line) {
  throw Error(ErrorCode::parse_error, "line " + std::to_string(line) + ": " + what);
}

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

double parse_real(std::string_view tok, std::size_t line) {
  double v = 0.0;
  const char* first = tok.data();
  if (!tok.empty() && tok.front() == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, tok.data() + tok.size(), v);
  if (ec != std::errc{} || ptr != tok.data() + tok.size() || !std::isfinite(v)) {
    parse_fail("invalid number '" + std::string(tok) + "'", line);
  }
  return v;
}

long long parse_int(std::string_view tok, std::size_t line) {
  long long v = 0;
  auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc{} || ptr != tok.data() + tok.size()) {
    parse_fail("invalid index '" + std::string(tok) + "'", line);
  }
  return v;
}

template <typename Fn>
void for_each_line(ByteView bytes, Fn&& fn) {
  std::string_view text(reinterpret_cast<const char*>(bytes.data()), bytes.size());
  std::size_t line_no = 1;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto nl = text.find('\n', start);
    const auto end = nl == std::string_view::npos ? text.size() : nl;
    fn(text.substr(start, end - start), line_no);
    if (nl == std::string_view::npos) break;
    start = nl + 1;
    ++line_no;
  }
}

bool distinct(const Triangle& t) { return t[0] != t[1] && t[1] != t[2] && t[0] != t[2]; }

TriangleMesh load_obj(ByteView bytes) {
  TriangleMesh mesh;
  for_each_line(bytes, [&](std::string_view line, std::size_t line_no) {
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    const auto tok = split_ws(line);
    if (tok.empty()) return;
    if (tok[0] == "v") {
      if (tok.size() < 4 || tok.size() > 5) parse_fail("vertex needs 3 coordinates", line_no);
      mesh.vertices.push_back({parse_real(tok[1], line_no), parse_real(tok[2], line_no),
                               parse_real(tok[3], line_no)});
    } else if (tok[0] == "f") {
      if (tok.size() < 4) parse_fail("face needs at least 3 vertices", line_no);
      std::vector<std::uint32_t> face;
      for (std::size_t i = 1; i < tok.size(); ++i) {
        const auto slash = tok[i].find('/');
        const long long raw = parse_int(tok[i].substr(0, slash), line_no);
        const long long count = static_cast<long long>(mesh.vertices.size());
        const long long idx = raw < 0 ? count + raw : raw - 1;
        if (raw == 0 || idx < 0 || idx >= count) {
          parse_fail("vertex index " + std::to_string(raw) + " out of range (have " +
                         std::to_string(count) + ")",
                     line_no);
        }
        face.push_back(static_cast<std::uint32_t>(idx));
      }
      for (std::size_t i = 1; i + 1 < face.size(); ++i) {
        const Triangle t{face[0], face[i], face[i + 1]};
        if (distinct(t)) mesh.triangles.push_back(t);
      }
    }
  });
  return mesh;
}

class VertexWelder {
 public:
  explicit VertexWelder(TriangleMesh& mesh) : mesh_(mesh) {}

  std::uint32_t index_of(const Vec3& v) {
    const Key key{std::bit_cast<std::uint64_t>(v.x), std::bit_cast<std::uint64_t>(v.y),
                  std::bit_cast<std::uint64_t>(v.z)};
    auto [it, inserted] = index_.try_emplace(key, static_cast<std::uint32_t>(mesh_.vertices.size()));
    if (inserted) mesh_.vertices.push_back(v);
    return it->second;
  }

 private:
  using Key = std::tuple<std::uint64_t, std::uint64_t, std::uint64_t>;
  TriangleMesh& mesh_;
  std::map<Key, std::uint32_t> index_;
};

TriangleMesh load_stl_ascii(ByteView bytes) {
  TriangleMesh mesh;
  VertexWelder welder(mesh);
  std::vector<std::uint32_t> facet;
  bool in_solid = false;
  bool in_facet = false;
  for_each_line(bytes, [&](std::string_view line, std::size_t line_no) {
    const auto tok = split_ws(line);
    if (tok.empty()) return;
    if (tok[0] == "solid") {
      in_solid = true;
    } else if (!in_solid) {
      parse_fail("expected 'solid'", line_no);
    } else if (tok[0] == "facet") {
      if (in_facet) parse_fail("nested facet", line_no);
      in_facet = true;
      facet.clear();
    } else if (tok[0] == "outer" || tok[0] == "endloop") {
      if (!in_facet) parse_fail("loop outside facet", line_no);
    } else if (tok[0] == "vertex") {
      if (!in_facet || tok.size() != 4) parse_fail("malformed vertex record", line_no);
      facet.push_back(welder.index_of(
          {parse_real(tok[1], line_no), parse_real(tok[2], line_no), parse_real(tok[3], line_no)}));
    } else if (tok[0] == "endfacet") {
      if (!in_facet || facet.size() != 3) parse_fail("facet must have exactly 3 vertices", line_no);
      const Triangle t{facet[0], facet[1], facet[2]};
      if (distinct(t)) mesh.triangles.push_back(t);
      in_facet = false;
    } else if (tok[0] == "endsolid") {
      if (in_facet) parse_fail("endsolid inside facet", line_no);
      in_solid = false;
    } else {
      parse_fail("unknown record '" + std::string(tok[0]) + "'", line_no);
    }
  });
  if (in_facet) throw Error(ErrorCode::parse_error, "unterminated facet at end of input");
  return mesh;
}

TriangleMesh load_stl_binary(ByteView bytes) {
  if (bytes.size() < 84) {
    throw Error(ErrorCode::parse_error,
                "offset " + std::to_string(bytes.size()) + ": binary STL shorter than its 84-byte header");
  }
  ByteReader r(bytes.subspan(80));
  const std::uint32_t count = r.u32("facet count");
  const std::size_t expected = 84 + std::size_t{count} * 50;
  if (bytes.size() != expected) {
    throw Error(ErrorCode::parse_error, "offset 80: facet count " + std::to_string(count) +
                                            " implies " + std::to_string(expected) +
                                            " bytes, input has " + std::to_string(bytes.size()));
  }
  TriangleMesh mesh;
  VertexWelder welder(mesh);
  for (std::uint32_t f = 0; f < count; ++f) {
    const std::size_t base = 84 + std::size_t{f} * 50;
    r.raw(12, "facet normal");
    Triangle t{};
    for (auto& idx : t) {
      const double x = r.f32("vertex");
      const double y = r.f32("vertex");
      const double z = r.f32("vertex");
      if (!std::isfinite(x) || !std::isfinite(y) || !std::isfinite(z)) {
        throw Error(ErrorCode::parse_error, "offset " + std::to_string(base) + ": non-finite vertex");
      }
      idx = welder.index_of({x, y, z});
    }
    r.u16("attribute byte count");
    if (distinct(t)) mesh.triangles.push_back(t);
  }
  return mesh;
}

bool starts_with_solid(ByteView bytes) {
  std::size_t i = 0;
  while (i < bytes.size() && (bytes[i] == ' ' || bytes[i] == '\t' || bytes[i] == '\n' || bytes[i] == '\r')) ++i;
  return bytes.size() - i >= 5 && std::memcmp(bytes.data() + i, "solid", 5) == 0;
}

}  // namespace

void TriangleMesh::validate() const {
  for (const auto& v : vertices) {
    if (!v.finite()) throw Error(ErrorCode::invalid_argument, "mesh vertex is not finite");
  }
  for (std::size_t i = 0; i < triangles.size(); ++i) {
    const auto& t = triangles[i];
    for (auto idx : t) {
      if (idx >= vertices.size()) {
        throw Error(ErrorCode::invalid_argument, "triangle " + std::to_string(i) + " index out of range");
      }
    }
    if (!distinct(t)) {
      throw Error(ErrorCode::invalid_argument, "triangle " + std::to_string(i) + " repeats a vertex");
    }
  }
}

MeshFormat detect_format(std::string_view path, ByteView bytes) {
  auto ends_with = [&](std::string_view suffix) {
    if (path.size() < suffix.size()) return false;
    return std::equal(suffix.rbegin(), suffix.rend(), path.rbegin(),
                      [](char a, char b) { return a == std::tolower(static_cast<unsigned char>(b)); });
  };
  if (ends_with(".obj")) return MeshFormat::obj;
  if (ends_with(".stl")) {
    if (bytes.size() >= 84) {
      std::uint32_t count = 0;
      std::memcpy(&count, bytes.data() + 80, 4);
      if (bytes.size() == 84 + std::size_t{count} * 50) return MeshFormat::stl_binary;
    }
    return starts_with_solid(bytes) ? MeshFormat::stl_ascii : MeshFormat::stl_binary;
  }
  throw Error(ErrorCode::invalid_argument, "unrecognized mesh file extension: " + std::string(path));
}

TriangleMesh load_mesh(ByteView bytes, MeshFormat format, std::string name) {
  if (bytes.empty()) throw Error(ErrorCode::parse_error, "empty mesh input");
  TriangleMesh mesh;
  switch (format) {
    case MeshFormat::obj: mesh = load_obj(bytes); break;
    case MeshFormat::stl_ascii: mesh = load_stl_ascii(bytes); break;
    case MeshFormat::stl_binary: mesh = load_stl_binary(bytes); break;
  }
  mesh.name = std::move(name);
  return mesh;
}

TriangleMesh load_mesh_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::io_error, "cannot open " + path);
  Bytes bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const auto slash = path.find_last_of('/');
  return load_mesh(bytes, detect_format(path, bytes),
                   slash == std::string::npos ? path : path.substr(slash + 1));
}

std::string save_obj(const TriangleMesh& mesh) {
  std::ostringstream out;
  out.precision(17);
  if (!mesh.name.empty()) out << "o " << mesh.name << '\n';
  for (const auto& v : mesh.vertices) out << "v " << v.x << ' ' << v.y << ' ' << v.z << '\n';
  for (const auto& t : mesh.triangles) out << "f " << t[0] + 1 << ' ' << t[1] + 1 << ' ' << t[2] + 1 << '\n';
  return out.str();
}

Bytes save_stl_binary(const TriangleMesh& mesh) {
  ByteWriter w;
  std::string header = mesh.name.substr(0, 80);
  header.resize(80, ' ');
  w.raw(header);
  w.u32(static_cast<std::uint32_t>(mesh.triangles.size()));
  for (std::size_t i = 0; i < mesh.triangles.size(); ++i) {
    const auto [a, b, c] = mesh.corners(i);
    const Vec3 n = cross(b - a, c - a);
    const double len = n.norm();
    const Vec3 unit = len > 0.0 ? n / len : Vec3{};
    for (const Vec3& v : {unit, a, b, c}) {
      w.f32(static_cast<float>(v.x));
      w.f32(static_cast<float>(v.y));
      w.f32(static_cast<float>(v.z));
    }
    w.u16(0);
  }
  return std::move(w).take();
}

std::string polylines_to_obj(const std::vector<Polyline>& lines) {
  std::ostringstream out;
  out.precision(17);
  std::size_t base = 1;
  for (const auto& line : lines) {
    for (const auto& p : line.points) out << "v " << p.x << ' ' << p.y << ' ' << p.z << '\n';
    out << 'l';
    for (std::size_t i = 0; i < line.points.size(); ++i) out << ' ' << base + i;
    if (line.closed && !line.points.empty()) out << ' ' << base;
    out << '\n';
    base += line.points.size();
  }
  return out.str();
}

}  // namespace cvsync
