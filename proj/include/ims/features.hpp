#pragma once

#include "ims/gates.hpp"
#include "ims/mesh.hpp"

#include <array>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace ims {

/// Geodesic distances [gate][vertex] from each gate's node.
class GateDistanceTable {
 public:
  GateDistanceTable() = default;
  GateDistanceTable(std::size_t vertex_count, std::vector<std::vector<double>> rows);

  static GateDistanceTable compute(const MeshGraph& graph, std::span<const Gate> gates);

  std::size_t gate_count() const noexcept { return rows_.size(); }
  std::size_t vertex_count() const noexcept { return vertex_count_; }
  double at(std::size_t gate, VertexId v) const { return rows_.at(gate).at(v); }
  std::span<const double> row(std::size_t gate) const { return rows_.at(gate); }

 private:
  std::size_t vertex_count_ = 0;
  std::vector<std::vector<double>> rows_;
};

/// The 8 gate predictors of one surface point.
struct GateFeatureVector {
  double d1 = 0, d2 = 0, d3 = 0;  // mm, ascending
  double t1 = 0, t2 = 0, t3 = 0;  // s
  double cos_a1 = 1, cos_a2 = 1;

  static constexpr std::size_t kWidth = 8;
  std::array<double, kWidth> as_array() const { return {d1, d2, d3, t1, t2, t3, cos_a1, cos_a2}; }
};

/// Row-major feature matrix with a fixed width.
struct FeatureTable {
  std::size_t width = GateFeatureVector::kWidth;
  std::vector<double> values;
  std::vector<std::string> column_names;

  std::size_t rows() const noexcept { return width == 0 ? 0 : values.size() / width; }
  std::span<const double> row(std::size_t r) const { return {values.data() + r * width, width}; }
  void append(std::span<const double> row);
};

struct FeatureOptions {
  /// Append the 7 technological parameters after the 8 gate features.
  bool append_parameters = false;
};

class FeatureError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Three nearest gates by geodesic distance, ties to the lower gate index.
/// With fewer than three gates the nearest one is repeated.
std::array<std::size_t, 3> nearest_gates(const GateDistanceTable& table, VertexId point);

struct Orientation {
  Point3 direction = Point3::Zero();  // unit, or zero when coincident
  bool coincident = false;
};

/// Normalized chord from the point to the gate node.
Orientation gate_orientation(const Mesh& mesh, VertexId point, const Gate& gate);

GateFeatureVector gate_features(const Mesh& mesh, std::span<const Gate> gates,
                                const GateDistanceTable& table, VertexId point);

FeatureTable extract_features(const Mesh& mesh, std::span<const Gate> gates,
                              const GateDistanceTable& table, std::span<const VertexId> points,
                              const FeatureOptions& options = {},
                              const TechnologicalParameters& parameters = {});

/// Comma-separated export with header d1,...,cos_a2[,extras],target.
void write_feature_csv(std::ostream& out, const FeatureTable& table,
                       std::span<const double> targets);

}  // namespace ims
