#include "ims/synth.hpp"
#include "ims/projection.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <queue>

namespace ims {

void SimulationSample::validate() const {
  const auto n = mesh.vertex_count();
  if (fill_time && fill_time->size() != n) {
    throw std::invalid_argument(name + ": fill_time has " + std::to_string(fill_time->size()) +
                                " values for " + std::to_string(n) + " vertices");
  }
  if (deflection && deflection->size() != n) {
    throw std::invalid_argument(name + ": deflection has " + std::to_string(deflection->size()) +
                                " values for " + std::to_string(n) + " vertices");
  }
  if (fill_time) {
    for (const double t : *fill_time) {
      if (!(t >= 0.0) || !std::isfinite(t)) {
        throw std::invalid_argument(name + ": fill times must be finite and >= 0");
      }
    }
  }
  validate_gates(mesh, gates.gates);
}

void SynthConfig::validate() const {
  if (sample_count < 1) throw std::invalid_argument("sample_count must be >= 1");
  if (min_vertices < 16 || max_vertices < min_vertices) {
    throw std::invalid_argument("vertex range must satisfy 16 <= min <= max");
  }
  if (min_gates < 1 || max_gates < min_gates) {
    throw std::invalid_argument("gate range must satisfy 1 <= min <= max");
  }
  if (!(flow_speed > 0.0) || !std::isfinite(flow_speed)) {
    throw std::invalid_argument("flow_speed must be > 0");
  }
  if (!std::isfinite(deflection_a) || !std::isfinite(deflection_b)) {
    throw std::invalid_argument("deflection coefficients must be finite");
  }
}

nlohmann::json to_json(const SynthConfig& c) {
  return {{"sample_count", c.sample_count}, {"min_vertices", c.min_vertices},
          {"max_vertices", c.max_vertices}, {"min_gates", c.min_gates},
          {"max_gates", c.max_gates},       {"flow_speed", c.flow_speed},
          {"deflection_a", c.deflection_a}, {"deflection_b", c.deflection_b},
          {"seed", c.seed}};
}

SynthConfig synth_config_from_json(const nlohmann::json& doc, SynthConfig c) {
  c.sample_count = doc.value("sample_count", c.sample_count);
  c.min_vertices = doc.value("min_vertices", c.min_vertices);
  c.max_vertices = doc.value("max_vertices", c.max_vertices);
  c.min_gates = doc.value("min_gates", c.min_gates);
  c.max_gates = doc.value("max_gates", c.max_gates);
  c.flow_speed = doc.value("flow_speed", c.flow_speed);
  c.deflection_a = doc.value("deflection_a", c.deflection_a);
  c.deflection_b = doc.value("deflection_b", c.deflection_b);
  c.seed = doc.value("seed", c.seed);
  return c;
}

std::vector<double> fill_time_oracle(const MeshGraph& graph, const std::vector<Gate>& gates,
                                     double flow_speed) {
  if (gates.empty()) throw std::invalid_argument("at least one gate is required");
  std::vector<double> t(graph.vertex_count(), kUnreachable);
  for (const auto& g : gates) {
    const auto d = geodesic_distances(graph, g.node_id);
    for (std::size_t v = 0; v < t.size(); ++v) t[v] = std::min(t[v], g.opening_time + d[v] / flow_speed);
  }
  return t;
}

std::vector<double> deflection_oracle(const Mesh& mesh, std::span<const double> fill_time,
                                      double a, double b) {
  const auto n = mesh.vertex_count();
  if (fill_time.size() != n) throw std::invalid_argument("fill time field length mismatch");
  Point3 centroid = Point3::Zero();
  for (const auto& p : mesh.vertices()) centroid += p;
  centroid /= static_cast<double>(n);
  const auto [lo, hi] = mesh.bounding_box();
  const double diagonal = euclidean_distance(lo, hi);

  // Bow along the long in-plane axis: 0 on the middle line, 1 at both ends.
  const auto plane = fit_plane(mesh.vertices());
  std::vector<double> u(n);
  for (std::size_t v = 0; v < n; ++v) u[v] = (mesh.vertices()[v] - plane.origin).dot(plane.basis_u);
  const auto [u_min, u_max] = std::minmax_element(u.begin(), u.end());
  const double mid = (*u_min + *u_max) / 2, half = (*u_max - *u_min) / 2;

  std::vector<double> d(n);
  for (std::size_t v = 0; v < n; ++v) {
    const double q = half > 0.0 ? (u[v] - mid) / half : 0.0;
    const double r = euclidean_distance(mesh.vertices()[v], centroid) / diagonal;
    d[v] = a * fill_time[v] * r + b * q * q;
  }
  return d;
}

namespace {

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

int uniform_int(std::mt19937_64& rng, int lo, int hi) {
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}

bool connected(const Mesh& mesh) {
  const MeshGraph graph(mesh);
  std::vector<std::uint8_t> seen(mesh.vertex_count(), 0);
  std::queue<VertexId> queue;
  queue.push(0);
  seen[0] = 1;
  std::size_t count = 1;
  while (!queue.empty()) {
    const auto v = queue.front();
    queue.pop();
    for (const auto& e : graph.neighbors(v)) {
      if (!seen[e.vertex]) {
        seen[e.vertex] = 1;
        ++count;
        queue.push(e.vertex);
      }
    }
  }
  return count == mesh.vertex_count();
}

struct Rect {
  double u0, u1, v0, v1;
  bool contains(double u, double v) const { return u > u0 && u < u1 && v > v0 && v < v1; }
};

Mesh try_plate(int target_vertices, std::mt19937_64& rng) {
  const double length = uniform(rng, 100.0, 220.0);
  const double width = length * uniform(rng, 0.4, 0.7);
  const int rim_rows = uniform_int(rng, 2, 4);
  // Grid spacing so the plate plus rim holds about target_vertices points.
  double h = std::sqrt(length * width / target_vertices);
  for (int it = 0; it < 4; ++it) {
    const double nu = length / h + 1 + 2 * rim_rows, nv = width / h + 1 + 2 * rim_rows;
    h *= std::sqrt(nu * nv / target_vertices);
  }
  const int nu = std::max(3, static_cast<int>(std::lround(length / h))) + 1;
  const int nv = std::max(3, static_cast<int>(std::lround(width / h))) + 1;
  const double hu = length / (nu - 1), hv = width / (nv - 1);
  const int cols = nu + 2 * rim_rows, rows = nv + 2 * rim_rows;

  const double bend = uniform(rng, 0.0, 0.12) / length;  // sag up to ~3% of length
  const double twist = uniform(rng, -0.05, 0.05) / width;
  const double slope = uniform(rng, 1.5, 3.0);
  const double jitter = 0.2;

  std::vector<Rect> cutouts;
  const int n_cut = uniform_int(rng, 0, 2);
  for (int c = 0; c < n_cut; ++c) {
    const double cw = length * uniform(rng, 0.08, 0.2), ch = width * uniform(rng, 0.1, 0.3);
    const double u0 = uniform(rng, 0.1 * length, 0.9 * length - cw);
    const double v0 = uniform(rng, 0.15 * width, 0.85 * width - ch);
    cutouts.push_back({u0, u0 + cw, v0, v0 + ch});
  }

  std::vector<Point3> grid(std::size_t(cols) * rows);
  std::vector<Eigen::Vector2d> param(grid.size());
  for (int j = 0; j < rows; ++j) {
    for (int i = 0; i < cols; ++i) {
      double u = (i - rim_rows) * hu, v = (j - rim_rows) * hv;
      const bool interior = i > rim_rows && i < rim_rows + nu - 1 && j > rim_rows &&
                            j < rim_rows + nv - 1;
      if (interior) {
        u += uniform(rng, -jitter, jitter) * hu;
        v += uniform(rng, -jitter, jitter) * hv;
      }
      const double eu = std::max({0.0, -u, u - length});
      const double ev = std::max({0.0, -v, v - width});
      const double cu = std::clamp(u, 0.0, length) - 0.5 * length;
      const double cv = std::clamp(v, 0.0, width) - 0.5 * width;
      double z = bend * cu * cu + twist * cu * cv - slope * std::sqrt(eu * eu + ev * ev);
      grid[std::size_t(j) * cols + i] = Point3(u, v, z);
      param[std::size_t(j) * cols + i] = {u, v};
    }
  }

  std::vector<Triangle> faces;
  auto id = [&](int i, int j) { return static_cast<VertexId>(j * cols + i); };
  for (int j = 0; j + 1 < rows; ++j) {
    for (int i = 0; i + 1 < cols; ++i) {
      const auto a = id(i, j), b = id(i + 1, j), c = id(i + 1, j + 1), d = id(i, j + 1);
      const Eigen::Vector2d centre = 0.25 * (param[a] + param[b] + param[c] + param[d]);
      const bool cut = std::any_of(cutouts.begin(), cutouts.end(),
                                   [&](const Rect& r) { return r.contains(centre.x(), centre.y()); });
      if (cut) continue;
      if ((i + j) % 2 == 0) {
        faces.push_back({a, b, c});
        faces.push_back({a, c, d});
      } else {
        faces.push_back({a, b, d});
        faces.push_back({b, c, d});
      }
    }
  }

  // Drop vertices no face uses.
  std::vector<std::int64_t> remap(grid.size(), -1);
  for (const auto& f : faces) {
    for (const auto v : f) remap[v] = 0;
  }
  std::vector<Point3> vertices;
  for (std::size_t v = 0; v < grid.size(); ++v) {
    if (remap[v] == 0) {
      remap[v] = static_cast<std::int64_t>(vertices.size());
      vertices.push_back(grid[v]);
    }
  }
  for (auto& f : faces) {
    for (auto& v : f) v = static_cast<VertexId>(remap[v]);
  }

  // Random rigid placement.
  Eigen::Vector4d q(uniform(rng, -1, 1), uniform(rng, -1, 1), uniform(rng, -1, 1),
                    uniform(rng, -1, 1));
  if (q.norm() < 1e-3) q = Eigen::Vector4d(1, 0, 0, 0);
  const Eigen::Matrix3d rot = Eigen::Quaterniond(q.normalized()).toRotationMatrix();
  const Point3 shift(uniform(rng, -50, 50), uniform(rng, -50, 50), uniform(rng, -50, 50));
  for (auto& p : vertices) p = rot * p + shift;
  return Mesh(std::move(vertices), std::move(faces));
}

}  // namespace

Mesh synth_plate(int target_vertices, std::mt19937_64& rng) {
  if (target_vertices < 16) throw std::invalid_argument("target_vertices must be >= 16");
  constexpr int kAttempts = 20;
  for (int attempt = 0; attempt < kAttempts; ++attempt) {
    try {
      Mesh mesh = try_plate(target_vertices, rng);
      if (connected(mesh)) return mesh;
    } catch (const MeshError&) {
      // Degenerate draw; try again.
    }
  }
  throw std::runtime_error("synthetic plate generation failed after " + std::to_string(kAttempts) +
                           " attempts");
}

std::vector<SimulationSample> synth_generate(const SynthConfig& config) {
  config.validate();
  std::mt19937_64 rng(config.seed);
  std::vector<SimulationSample> out;
  out.reserve(config.sample_count);
  for (int s = 0; s < config.sample_count; ++s) {
    SimulationSample sample;
    char name[32];
    std::snprintf(name, sizeof name, "sample_%03d", s);
    sample.name = name;
    sample.mesh = synth_plate(uniform_int(rng, config.min_vertices, config.max_vertices), rng);

    const int n_gates = std::min<int>(uniform_int(rng, config.min_gates, config.max_gates),
                                      static_cast<int>(sample.mesh.vertex_count()));
    std::vector<VertexId> nodes(sample.mesh.vertex_count());
    std::iota(nodes.begin(), nodes.end(), VertexId{0});
    for (int g = 0; g < n_gates; ++g) {
      std::uniform_int_distribution<std::size_t> pick(g, nodes.size() - 1);
      std::swap(nodes[g], nodes[pick(rng)]);
      sample.gates.gates.push_back({nodes[g], uniform(rng, 0.0, 2.0)});
    }

    const MeshGraph graph(sample.mesh);
    sample.fill_time = fill_time_oracle(graph, sample.gates.gates, config.flow_speed);
    sample.deflection =
        deflection_oracle(sample.mesh, *sample.fill_time, config.deflection_a, config.deflection_b);
    sample.provenance = Provenance::Synthetic;
    out.push_back(std::move(sample));
  }
  return out;
}

}  // namespace ims
