#pragma once

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <filesystem>
#include <istream>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace ims {

using VertexId = std::uint32_t;
using Point3 = Eigen::Vector3d;
using Triangle = std::array<VertexId, 3>;

/// Raised by the mesh loaders. `line()` is 1-based, 0 when not tied to a line.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t line);
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class MeshError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Straight-line distance, evaluated as sqrt(dx*dx + dy*dy + dz*dz) in that
/// order. Every edge weight in the library goes through this function.
double euclidean_distance(const Point3& a, const Point3& b) noexcept;
double squared_distance(const Point3& a, const Point3& b) noexcept;

/// Triangle surface mesh. Immutable after construction; the constructor
/// enforces index range, non-degenerate index triples, and positive edge
/// lengths.
class Mesh {
 public:
  Mesh() = default;
  Mesh(std::vector<Point3> vertices, std::vector<Triangle> faces,
       std::vector<std::int64_t> source_ids = {});

  const std::vector<Point3>& vertices() const noexcept { return vertices_; }
  const std::vector<Triangle>& faces() const noexcept { return faces_; }
  std::size_t vertex_count() const noexcept { return vertices_.size(); }
  std::size_t face_count() const noexcept { return faces_.size(); }
  const Point3& vertex(VertexId v) const { return vertices_.at(v); }

  /// Node ids from the source file (simplified .pat), in dense vertex order.
  /// Empty for OBJ input.
  const std::vector<std::int64_t>& source_ids() const noexcept { return source_ids_; }
  std::optional<VertexId> vertex_for_source_id(std::int64_t id) const;

  /// Axis-aligned bounding box as {min, max}.
  std::pair<Point3, Point3> bounding_box() const;

 private:
  std::vector<Point3> vertices_;
  std::vector<Triangle> faces_;
  std::vector<std::int64_t> source_ids_;
};

Mesh parse_obj(std::istream& in);
Mesh load_obj(const std::filesystem::path& path);
void write_obj(std::ostream& out, const Mesh& mesh);
void save_obj(const std::filesystem::path& path, const Mesh& mesh);

/// Simplified PATRAN-neutral subset: "N <id> <x> <y> <z>" and
/// "E <id> <n1> <n2> <n3>" records. Node ids are remapped densely in order of
/// appearance; the original ids are kept in Mesh::source_ids().
Mesh parse_pat(std::istream& in);
Mesh load_pat(const std::filesystem::path& path);
void write_pat(std::ostream& out, const Mesh& mesh);
void save_pat(const std::filesystem::path& path, const Mesh& mesh);

enum class MeshFormat { Obj, Pat };

/// Sniffs the first record: 'N'/'E' cards mean .pat, anything else OBJ.
MeshFormat sniff_mesh_format(std::string_view text);
Mesh parse_mesh(std::string_view text);
/// Dispatches on file extension (.pat, otherwise OBJ).
Mesh load_mesh(const std::filesystem::path& path);

/// Edge-length weighted adjacency in compressed-row form.
class MeshGraph {
 public:
  struct Neighbor {
    VertexId vertex;
    double weight;
  };

  explicit MeshGraph(const Mesh& mesh);

  std::size_t vertex_count() const noexcept { return offsets_.size() - 1; }
  std::size_t edge_count() const noexcept { return neighbors_.size() / 2; }
  std::span<const Neighbor> neighbors(VertexId v) const;

 private:
  std::vector<std::size_t> offsets_;
  std::vector<Neighbor> neighbors_;
};

inline MeshGraph build_graph(const Mesh& mesh) { return MeshGraph(mesh); }

inline constexpr double kUnreachable = std::numeric_limits<double>::infinity();

/// Single-source shortest path lengths (Dijkstra). Unreachable vertices hold
/// kUnreachable.
std::vector<double> geodesic_distances(const MeshGraph& graph, VertexId source);

/// The k vertices closest to `query` by Euclidean distance, ordered by
/// (distance, index). The query vertex itself is included.
std::vector<VertexId> knn_euclidean(const Mesh& mesh, VertexId query, std::size_t k);

/// floor(fraction * n) distinct vertex ids drawn uniformly without
/// replacement, returned in ascending order.
std::vector<VertexId> subsample(const Mesh& mesh, double fraction, std::uint64_t seed);

}  // namespace ims
