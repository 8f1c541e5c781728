#include "ims/features.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>

namespace ims {
namespace {

const std::vector<std::string> kGateColumns = {"d1", "d2", "d3", "t1", "t2", "t3", "cos_a1", "cos_a2"};
const std::vector<std::string> kParameterColumns = {
    "melt_temperature", "cooling_time",     "duration",     "filling_pressure",
    "ambient_temperature", "mold_temperature", "fill_end_time"};

double cosine(const Orientation& a, const Orientation& b) {
  if (a.coincident || b.coincident) return 1.0;
  return std::clamp(a.direction.dot(b.direction), -1.0, 1.0);
}

}  // namespace

GateDistanceTable::GateDistanceTable(std::size_t vertex_count, std::vector<std::vector<double>> rows)
    : vertex_count_(vertex_count), rows_(std::move(rows)) {
  for (const auto& r : rows_) {
    if (r.size() != vertex_count_) throw std::invalid_argument("distance row length mismatch");
  }
}

GateDistanceTable GateDistanceTable::compute(const MeshGraph& graph, std::span<const Gate> gates) {
  std::vector<std::vector<double>> rows;
  rows.reserve(gates.size());
  for (const auto& g : gates) rows.push_back(geodesic_distances(graph, g.node_id));
  return GateDistanceTable(graph.vertex_count(), std::move(rows));
}

void FeatureTable::append(std::span<const double> row) {
  if (row.size() != width) throw std::invalid_argument("feature row width mismatch");
  values.insert(values.end(), row.begin(), row.end());
}

std::array<std::size_t, 3> nearest_gates(const GateDistanceTable& table, VertexId point) {
  const auto n = table.gate_count();
  if (n == 0) throw FeatureError("no gates");
  if (point >= table.vertex_count()) throw std::out_of_range("point out of range");
  std::vector<std::size_t> order(n);
  for (std::size_t g = 0; g < n; ++g) order[g] = g;
  const auto take = std::min<std::size_t>(3, n);
  std::partial_sort(order.begin(), order.begin() + take, order.end(),
                    [&](std::size_t a, std::size_t b) {
                      const double da = table.at(a, point), db = table.at(b, point);
                      return da < db || (da == db && a < b);
                    });
  std::array<std::size_t, 3> out{};
  for (std::size_t i = 0; i < 3; ++i) out[i] = i < take ? order[i] : order[0];
  return out;
}

Orientation gate_orientation(const Mesh& mesh, VertexId point, const Gate& gate) {
  const Point3 chord = mesh.vertex(gate.node_id) - mesh.vertex(point);
  const double norm = chord.norm();
  if (norm == 0.0) return {Point3::Zero(), true};
  return {chord / norm, false};
}

GateFeatureVector gate_features(const Mesh& mesh, std::span<const Gate> gates,
                                const GateDistanceTable& table, VertexId point) {
  const auto nearest = nearest_gates(table, point);
  GateFeatureVector f;
  f.d1 = table.at(nearest[0], point);
  f.d2 = table.at(nearest[1], point);
  f.d3 = table.at(nearest[2], point);
  if (f.d3 == kUnreachable) {
    throw FeatureError("vertex " + std::to_string(point) + " cannot reach its nearest gates");
  }
  f.t1 = gates[nearest[0]].opening_time;
  f.t2 = gates[nearest[1]].opening_time;
  f.t3 = gates[nearest[2]].opening_time;
  const auto o1 = gate_orientation(mesh, point, gates[nearest[0]]);
  const auto o2 = gate_orientation(mesh, point, gates[nearest[1]]);
  const auto o3 = gate_orientation(mesh, point, gates[nearest[2]]);
  f.cos_a1 = cosine(o1, o2);
  f.cos_a2 = cosine(o1, o3);
  return f;
}

FeatureTable extract_features(const Mesh& mesh, std::span<const Gate> gates,
                              const GateDistanceTable& table, std::span<const VertexId> points,
                              const FeatureOptions& options,
                              const TechnologicalParameters& parameters) {
  if (gates.empty()) throw FeatureError("no gates");
  if (table.gate_count() != gates.size()) {
    throw FeatureError("distance table has " + std::to_string(table.gate_count()) +
                       " rows for " + std::to_string(gates.size()) + " gates");
  }
  FeatureTable out;
  out.column_names = kGateColumns;
  std::vector<double> extras;
  if (options.append_parameters) {
    extras = parameters.as_vector();
    out.column_names.insert(out.column_names.end(), kParameterColumns.begin(),
                            kParameterColumns.end());
  }
  out.width = GateFeatureVector::kWidth + extras.size();
  out.values.reserve(points.size() * out.width);
  for (const auto p : points) {
    const auto f = gate_features(mesh, gates, table, p).as_array();
    out.values.insert(out.values.end(), f.begin(), f.end());
    out.values.insert(out.values.end(), extras.begin(), extras.end());
  }
  return out;
}

void write_feature_csv(std::ostream& out, const FeatureTable& table,
                       std::span<const double> targets) {
  if (targets.size() != table.rows()) throw std::invalid_argument("target count mismatch");
  for (const auto& name : table.column_names) out << name << ',';
  out << "target\n" << std::setprecision(17);
  for (std::size_t r = 0; r < table.rows(); ++r) {
    for (const double v : table.row(r)) out << v << ',';
    out << targets[r] << '\n';
  }
}

}  // namespace ims
