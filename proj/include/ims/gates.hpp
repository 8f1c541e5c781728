#pragma once

#include "ims/mesh.hpp"

#include <json.hpp>

#include <filesystem>
#include <optional>
#include <vector>

namespace ims {

struct Gate {
  VertexId node_id = 0;
  double opening_time = 0.0;  // s

  bool operator==(const Gate&) const = default;
};

/// Process settings carried with a sample as metadata. All optional.
struct TechnologicalParameters {
  std::optional<double> melt_temperature;     // degC
  std::optional<double> cooling_time;         // s
  std::optional<double> duration;             // s
  std::optional<double> filling_pressure;     // MPa
  std::optional<double> ambient_temperature;  // degC
  std::optional<double> mold_temperature;     // degC
  std::optional<double> fill_end_time;        // s

  bool operator==(const TechnologicalParameters&) const = default;

  /// Throws std::invalid_argument on non-finite temperatures or negative
  /// times/pressure.
  void validate() const;
  /// Values in declaration order; absent entries become 0.
  std::vector<double> as_vector() const;
};

struct GateSet {
  std::vector<Gate> gates;
  TechnologicalParameters parameters;
};

class GateError : public std::invalid_argument {
 public:
  GateError(const std::string& what, std::size_t gate_index);
  std::size_t gate_index() const noexcept { return gate_index_; }

 private:
  std::size_t gate_index_;
};

/// Checks every gate node against the mesh; the error names the first bad gate.
void validate_gates(const Mesh& mesh, const std::vector<Gate>& gates);

/// Gates document:
///   {"node_id_space": "vertex" | "source",
///    "gates": [{"node_id": 12, "opening_time": 0.5}, ...],
///    "parameters": {"melt_temperature": 230, ...}}
/// With "source" the ids are looked up through Mesh::source_ids().
GateSet gates_from_json(const nlohmann::json& doc, const Mesh& mesh);
nlohmann::json gates_to_json(const GateSet& set);
GateSet load_gates(const std::filesystem::path& path, const Mesh& mesh);
void save_gates(const std::filesystem::path& path, const GateSet& set);

}  // namespace ims
