#include "ims/mesh.hpp"

#include "ims/spatial_index.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <random>
#include <sstream>
#include <unordered_map>

namespace ims {
namespace {

std::string line_message(const std::string& what, std::size_t line) {
  return line == 0 ? what : "line " + std::to_string(line) + ": " + what;
}

std::vector<std::string_view> split_ws(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
    const auto start = i;
    while (i < s.size() && !std::isspace(static_cast<unsigned char>(s[i]))) ++i;
    if (i > start) out.push_back(s.substr(start, i - start));
  }
  return out;
}

double parse_double(std::string_view tok, std::size_t line) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc{} || ptr != tok.data() + tok.size() || !std::isfinite(v)) {
    throw ParseError("invalid number '" + std::string(tok) + "'", line);
  }
  return v;
}

std::int64_t parse_int(std::string_view tok, std::size_t line) {
  std::int64_t v = 0;
  const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc{} || ptr != tok.data() + tok.size()) {
    throw ParseError("invalid integer '" + std::string(tok) + "'", line);
  }
  return v;
}

std::ifstream open_for_read(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return in;
}

void write_point(std::ostream& out, const Point3& p) {
  out << p.x() << ' ' << p.y() << ' ' << p.z();
}

}  // namespace

ParseError::ParseError(const std::string& what, std::size_t line)
    : std::runtime_error(line_message(what, line)), line_(line) {}

double euclidean_distance(const Point3& a, const Point3& b) noexcept {
  return std::sqrt(squared_distance(a, b));
}

double squared_distance(const Point3& a, const Point3& b) noexcept {
  const double dx = a.x() - b.x();
  const double dy = a.y() - b.y();
  const double dz = a.z() - b.z();
  return dx * dx + dy * dy + dz * dz;
}

Mesh::Mesh(std::vector<Point3> vertices, std::vector<Triangle> faces,
           std::vector<std::int64_t> source_ids)
    : vertices_(std::move(vertices)), faces_(std::move(faces)), source_ids_(std::move(source_ids)) {
  if (!source_ids_.empty() && source_ids_.size() != vertices_.size()) {
    throw MeshError("source id table does not match vertex count");
  }
  for (const auto& p : vertices_) {
    if (!p.allFinite()) throw MeshError("non-finite vertex coordinate");
  }
  for (std::size_t f = 0; f < faces_.size(); ++f) {
    const auto& t = faces_[f];
    for (auto v : t) {
      if (v >= vertices_.size()) {
        throw MeshError("face " + std::to_string(f) + " references vertex " + std::to_string(v) +
                        " but mesh has " + std::to_string(vertices_.size()) + " vertices");
      }
    }
    if (t[0] == t[1] || t[1] == t[2] || t[0] == t[2]) {
      throw MeshError("face " + std::to_string(f) + " repeats a vertex");
    }
    for (int e = 0; e < 3; ++e) {
      if (!(euclidean_distance(vertices_[t[e]], vertices_[t[(e + 1) % 3]]) > 0.0)) {
        throw MeshError("face " + std::to_string(f) + " has a zero-length edge");
      }
    }
  }
}

std::optional<VertexId> Mesh::vertex_for_source_id(std::int64_t id) const {
  const auto it = std::find(source_ids_.begin(), source_ids_.end(), id);
  if (it == source_ids_.end()) return std::nullopt;
  return static_cast<VertexId>(it - source_ids_.begin());
}

std::pair<Point3, Point3> Mesh::bounding_box() const {
  if (vertices_.empty()) return {Point3::Zero(), Point3::Zero()};
  Point3 lo = vertices_.front(), hi = lo;
  for (const auto& p : vertices_) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  return {lo, hi};
}

// ---- OBJ subset -------------------------------------------------------------

Mesh parse_obj(std::istream& in) {
  std::vector<Point3> vertices;
  std::vector<Triangle> faces;
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string_view line(raw);
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    const auto tok = split_ws(line);
    if (tok.empty()) continue;
    if (tok[0] == "v") {
      if (tok.size() != 4) throw ParseError("vertex record needs 3 coordinates", line_no);
      vertices.emplace_back(parse_double(tok[1], line_no), parse_double(tok[2], line_no),
                            parse_double(tok[3], line_no));
    } else if (tok[0] == "f") {
      if (tok.size() != 4) {
        throw ParseError("face record must be a triangle (got " + std::to_string(tok.size() - 1) +
                             " indices)",
                         line_no);
      }
      Triangle t{};
      for (int i = 0; i < 3; ++i) {
        const auto idx = parse_int(tok[i + 1], line_no);
        if (idx < 1 || static_cast<std::size_t>(idx) > vertices.size()) {
          throw ParseError("face index " + std::to_string(idx) + " out of range (" +
                               std::to_string(vertices.size()) + " vertices defined)",
                           line_no);
        }
        t[i] = static_cast<VertexId>(idx - 1);
      }
      faces.push_back(t);
    } else {
      throw ParseError("unsupported record '" + std::string(tok[0]) + "'", line_no);
    }
  }
  try {
    return Mesh(std::move(vertices), std::move(faces));
  } catch (const MeshError& e) {
    throw ParseError(e.what(), 0);
  }
}

Mesh load_obj(const std::filesystem::path& path) {
  auto in = open_for_read(path);
  return parse_obj(in);
}

void write_obj(std::ostream& out, const Mesh& mesh) {
  out << std::setprecision(17);
  for (const auto& p : mesh.vertices()) {
    out << "v ";
    write_point(out, p);
    out << '\n';
  }
  for (const auto& t : mesh.faces()) {
    out << "f " << t[0] + 1 << ' ' << t[1] + 1 << ' ' << t[2] + 1 << '\n';
  }
}

void save_obj(const std::filesystem::path& path, const Mesh& mesh) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  write_obj(out, mesh);
}

// ---- simplified .pat --------------------------------------------------------

Mesh parse_pat(std::istream& in) {
  std::vector<Point3> vertices;
  std::vector<std::int64_t> ids;
  std::unordered_map<std::int64_t, VertexId> dense;
  std::vector<std::pair<std::array<std::int64_t, 3>, std::size_t>> elements;
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto tok = split_ws(raw);
    if (tok.empty()) continue;
    if (tok[0] == "N") {
      if (tok.size() != 5) throw ParseError("node card needs id and 3 coordinates", line_no);
      const auto id = parse_int(tok[1], line_no);
      if (id <= 0) throw ParseError("node id must be positive", line_no);
      if (!dense.emplace(id, static_cast<VertexId>(vertices.size())).second) {
        throw ParseError("duplicate node id " + std::to_string(id), line_no);
      }
      ids.push_back(id);
      vertices.emplace_back(parse_double(tok[2], line_no), parse_double(tok[3], line_no),
                            parse_double(tok[4], line_no));
    } else if (tok[0] == "E") {
      if (tok.size() != 5) throw ParseError("element card needs id and 3 node ids", line_no);
      if (parse_int(tok[1], line_no) <= 0) throw ParseError("element id must be positive", line_no);
      elements.push_back({{parse_int(tok[2], line_no), parse_int(tok[3], line_no),
                           parse_int(tok[4], line_no)},
                          line_no});
    } else {
      throw ParseError("unknown card type '" + std::string(tok[0]) + "'", line_no);
    }
  }
  // Elements may precede the nodes they reference, so resolve after reading.
  std::vector<Triangle> faces;
  faces.reserve(elements.size());
  for (const auto& [nodes, at] : elements) {
    Triangle t{};
    for (int i = 0; i < 3; ++i) {
      const auto it = dense.find(nodes[i]);
      if (it == dense.end()) {
        throw ParseError("element references missing node " + std::to_string(nodes[i]), at);
      }
      t[i] = it->second;
    }
    faces.push_back(t);
  }
  try {
    return Mesh(std::move(vertices), std::move(faces), std::move(ids));
  } catch (const MeshError& e) {
    throw ParseError(e.what(), 0);
  }
}

Mesh load_pat(const std::filesystem::path& path) {
  auto in = open_for_read(path);
  return parse_pat(in);
}

void write_pat(std::ostream& out, const Mesh& mesh) {
  out << std::setprecision(17);
  const auto& ids = mesh.source_ids();
  auto id_of = [&](VertexId v) -> std::int64_t { return ids.empty() ? v + 1 : ids[v]; };
  for (VertexId v = 0; v < mesh.vertex_count(); ++v) {
    out << "N " << id_of(v) << ' ';
    write_point(out, mesh.vertices()[v]);
    out << '\n';
  }
  for (std::size_t f = 0; f < mesh.face_count(); ++f) {
    const auto& t = mesh.faces()[f];
    out << "E " << f + 1 << ' ' << id_of(t[0]) << ' ' << id_of(t[1]) << ' ' << id_of(t[2]) << '\n';
  }
}

void save_pat(const std::filesystem::path& path, const Mesh& mesh) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  write_pat(out, mesh);
}

MeshFormat sniff_mesh_format(std::string_view text) {
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    const auto tok = split_ws(text.substr(pos, end - pos));
    pos = end + 1;
    if (tok.empty() || tok[0].front() == '#') continue;
    return (tok[0] == "N" || tok[0] == "E") ? MeshFormat::Pat : MeshFormat::Obj;
  }
  return MeshFormat::Obj;
}

Mesh parse_mesh(std::string_view text) {
  std::istringstream in{std::string(text)};
  return sniff_mesh_format(text) == MeshFormat::Pat ? parse_pat(in) : parse_obj(in);
}

Mesh load_mesh(const std::filesystem::path& path) {
  return path.extension() == ".pat" ? load_pat(path) : load_obj(path);
}

// ---- graph ------------------------------------------------------------------

MeshGraph::MeshGraph(const Mesh& mesh) {
  std::vector<std::pair<VertexId, VertexId>> edges;
  edges.reserve(mesh.face_count() * 3);
  for (const auto& t : mesh.faces()) {
    for (int e = 0; e < 3; ++e) {
      const auto a = t[e], b = t[(e + 1) % 3];
      edges.emplace_back(std::min(a, b), std::max(a, b));
    }
  }
  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());

  const auto n = mesh.vertex_count();
  std::vector<std::size_t> degree(n, 0);
  for (const auto& [a, b] : edges) {
    ++degree[a];
    ++degree[b];
  }
  offsets_.assign(n + 1, 0);
  for (std::size_t v = 0; v < n; ++v) offsets_[v + 1] = offsets_[v] + degree[v];
  neighbors_.resize(offsets_[n]);
  std::vector<std::size_t> cursor(offsets_.begin(), offsets_.end() - 1);
  for (const auto& [a, b] : edges) {
    const double w = euclidean_distance(mesh.vertices()[a], mesh.vertices()[b]);
    neighbors_[cursor[a]++] = {b, w};
    neighbors_[cursor[b]++] = {a, w};
  }
}

std::span<const MeshGraph::Neighbor> MeshGraph::neighbors(VertexId v) const {
  if (v >= vertex_count()) throw std::out_of_range("vertex id out of range");
  return {neighbors_.data() + offsets_[v], offsets_[v + 1] - offsets_[v]};
}

// ---- spatial queries --------------------------------------------------------

std::vector<VertexId> knn_euclidean(const Mesh& mesh, VertexId query, std::size_t k) {
  if (query >= mesh.vertex_count()) throw std::out_of_range("query vertex out of range");
  if (k < 1 || k > mesh.vertex_count()) {
    throw std::invalid_argument("k must be in [1, " + std::to_string(mesh.vertex_count()) + "]");
  }
  const KdTree tree(mesh.vertices());
  return tree.nearest(mesh.vertices()[query], k);
}

std::vector<VertexId> subsample(const Mesh& mesh, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction <= 1.0)) {
    throw std::invalid_argument("subsample fraction must be in (0, 1]");
  }
  const auto n = mesh.vertex_count();
  const auto count = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n)));
  std::vector<VertexId> ids(n);
  for (VertexId i = 0; i < n; ++i) ids[i] = i;
  std::mt19937_64 rng(seed);
  // Partial Fisher-Yates: the first `count` slots become the sample.
  for (std::size_t i = 0; i < count; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, n - 1);
    std::swap(ids[i], ids[pick(rng)]);
  }
  ids.resize(count);
  std::sort(ids.begin(), ids.end());
  return ids;
}

}  // namespace ims
