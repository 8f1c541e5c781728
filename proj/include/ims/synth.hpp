#pragma once

#include "ims/gates.hpp"
#include "ims/mesh.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace ims {

enum class Provenance { Synthetic, Imported };

/// One molding case: geometry, gates, and optional ground-truth fields.
struct SimulationSample {
  std::string name;
  Mesh mesh;
  GateSet gates;
  std::optional<std::vector<double>> fill_time;   // s, per vertex
  std::optional<std::vector<double>> deflection;  // mm, per vertex
  Provenance provenance = Provenance::Synthetic;

  bool has_truth() const noexcept { return fill_time.has_value() && deflection.has_value(); }
  /// Field lengths, non-negative fill times, valid gates.
  void validate() const;
};

struct SynthConfig {
  int sample_count = 40;
  int min_vertices = 2000;
  int max_vertices = 10000;
  int min_gates = 1;
  int max_gates = 5;
  double flow_speed = 100.0;  // mm/s
  double deflection_a = 1.0;  // mm/s
  double deflection_b = 0.5;  // mm
  std::uint64_t seed = 0;

  void validate() const;
};

nlohmann::json to_json(const SynthConfig& config);
SynthConfig synth_config_from_json(const nlohmann::json& doc, SynthConfig base = {});

/// t(p) = min over gates of opening_time + geodesic(p, gate) / flow_speed.
std::vector<double> fill_time_oracle(const MeshGraph& graph, const std::vector<Gate>& gates,
                                     double flow_speed);

/// d(p) = a * t(p) * |p - centroid| / L + b * q(p)^2, L the bounding-box
/// diagonal and q the position along the fitted plane's long axis rescaled to
/// [-1, 1]. Both terms are visible in the projected raster.
std::vector<double> deflection_oracle(const Mesh& mesh, std::span<const double> fill_time,
                                      double a, double b);

/// Bent rectangular plate with a sloped rim flange and up to two rectangular
/// cutouts, roughly `target_vertices` vertices, randomly oriented in space.
Mesh synth_plate(int target_vertices, std::mt19937_64& rng);

std::vector<SimulationSample> synth_generate(const SynthConfig& config);

// ---- dataset directories ----------------------------------------------------

/// Per-vertex CSV with header vertex_id,fill_time,deflection.
void write_fields_csv(std::ostream& out, std::span<const double> fill_time,
                      std::span<const double> deflection);
struct FieldColumns {
  std::vector<double> fill_time;
  std::vector<double> deflection;
};
FieldColumns read_fields_csv(std::istream& in, std::size_t vertex_count);

/// Writes manifest.json plus <name>.obj, <name>.gates.json and, when the
/// sample has truth, <name>.fields.csv.
void save_dataset(const std::filesystem::path& dir, const std::vector<SimulationSample>& samples,
                  const nlohmann::json& extra = nlohmann::json::object());
std::vector<SimulationSample> load_dataset(const std::filesystem::path& dir);

SimulationSample import_sample(const std::filesystem::path& mesh_path,
                               const std::filesystem::path& gates_path,
                               const std::optional<std::filesystem::path>& fields_path = {});

}  // namespace ims
