#include "ims/gates.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>

namespace ims {
namespace {

using json = nlohmann::json;

struct ParamField {
  const char* name;
  std::optional<double> TechnologicalParameters::*member;
  bool temperature;
};

constexpr ParamField kParamFields[] = {
    {"melt_temperature", &TechnologicalParameters::melt_temperature, true},
    {"cooling_time", &TechnologicalParameters::cooling_time, false},
    {"duration", &TechnologicalParameters::duration, false},
    {"filling_pressure", &TechnologicalParameters::filling_pressure, false},
    {"ambient_temperature", &TechnologicalParameters::ambient_temperature, true},
    {"mold_temperature", &TechnologicalParameters::mold_temperature, true},
    {"fill_end_time", &TechnologicalParameters::fill_end_time, false},
};

}  // namespace

GateError::GateError(const std::string& what, std::size_t gate_index)
    : std::invalid_argument("gate " + std::to_string(gate_index) + ": " + what),
      gate_index_(gate_index) {}

void TechnologicalParameters::validate() const {
  for (const auto& f : kParamFields) {
    const auto& v = this->*f.member;
    if (!v) continue;
    if (!std::isfinite(*v)) throw std::invalid_argument(std::string(f.name) + " is not finite");
    if (!f.temperature && *v < 0.0) throw std::invalid_argument(std::string(f.name) + " is negative");
  }
}

std::vector<double> TechnologicalParameters::as_vector() const {
  std::vector<double> out;
  for (const auto& f : kParamFields) out.push_back((this->*f.member).value_or(0.0));
  return out;
}

void validate_gates(const Mesh& mesh, const std::vector<Gate>& gates) {
  for (std::size_t i = 0; i < gates.size(); ++i) {
    if (gates[i].node_id >= mesh.vertex_count()) {
      throw GateError("node " + std::to_string(gates[i].node_id) + " is not a vertex (mesh has " +
                          std::to_string(mesh.vertex_count()) + ")",
                      i);
    }
    if (!(gates[i].opening_time >= 0.0) || !std::isfinite(gates[i].opening_time)) {
      throw GateError("opening_time must be finite and >= 0", i);
    }
  }
}

GateSet gates_from_json(const json& doc, const Mesh& mesh) {
  GateSet set;
  const auto space = doc.value("node_id_space", std::string("vertex"));
  if (space != "vertex" && space != "source") {
    throw std::invalid_argument("node_id_space must be 'vertex' or 'source'");
  }
  const auto& gates = doc.at("gates");
  for (std::size_t i = 0; i < gates.size(); ++i) {
    const auto& g = gates[i];
    const auto raw = g.at("node_id").get<std::int64_t>();
    Gate gate;
    gate.opening_time = g.value("opening_time", 0.0);
    if (space == "source") {
      const auto v = mesh.vertex_for_source_id(raw);
      if (!v) throw GateError("source node id " + std::to_string(raw) + " not in mesh", i);
      gate.node_id = *v;
    } else {
      if (raw < 0 || static_cast<std::uint64_t>(raw) >= mesh.vertex_count()) {
        throw GateError("node " + std::to_string(raw) + " is not a vertex (mesh has " +
                            std::to_string(mesh.vertex_count()) + ")",
                        i);
      }
      gate.node_id = static_cast<VertexId>(raw);
    }
    set.gates.push_back(gate);
  }
  validate_gates(mesh, set.gates);
  if (const auto it = doc.find("parameters"); it != doc.end()) {
    for (const auto& f : kParamFields) {
      if (const auto p = it->find(f.name); p != it->end() && !p->is_null()) {
        set.parameters.*f.member = p->get<double>();
      }
    }
  }
  set.parameters.validate();
  return set;
}

json gates_to_json(const GateSet& set) {
  json doc;
  doc["node_id_space"] = "vertex";
  doc["gates"] = json::array();
  for (const auto& g : set.gates) {
    doc["gates"].push_back({{"node_id", g.node_id}, {"opening_time", g.opening_time}});
  }
  json params = json::object();
  for (const auto& f : kParamFields) {
    if (const auto& v = set.parameters.*f.member) params[f.name] = *v;
  }
  doc["parameters"] = params;
  return doc;
}

GateSet load_gates(const std::filesystem::path& path, const Mesh& mesh) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return gates_from_json(json::parse(in), mesh);
}

void save_gates(const std::filesystem::path& path, const GateSet& set) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << gates_to_json(set).dump(2) << '\n';
}

}  // namespace ims
