#pragma once

#include "ims/features.hpp"
#include "ims/mesh.hpp"
#include "ims/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace ims::test {

// Grid with integer spacings taken from a Pythagorean triple, so every edge
// (axis or diagonal) has an integer length and every path sum is exact.
// Random diagonal directions and a few removed cells make it irregular.
inline Mesh lattice_mesh(std::mt19937_64& rng, int max_vertices = 100) {
  static constexpr std::array<std::array<int, 3>, 4> kTriples = {
      {{3, 4, 5}, {5, 12, 13}, {8, 15, 17}, {7, 24, 25}}};
  std::uniform_int_distribution<int> triple_pick(0, 3);
  const auto& t = kTriples[triple_pick(rng)];
  const bool swap = std::bernoulli_distribution(0.5)(rng);
  const double sx = swap ? t[1] : t[0];
  const double sy = swap ? t[0] : t[1];

  int rows = 0, cols = 0;
  do {
    rows = std::uniform_int_distribution<int>(2, 10)(rng);
    cols = std::uniform_int_distribution<int>(2, 10)(rng);
  } while (rows * cols > max_vertices || rows * cols < 4);

  const double ox = std::uniform_int_distribution<int>(-50, 50)(rng);
  const double oy = std::uniform_int_distribution<int>(-50, 50)(rng);
  const double oz = std::uniform_int_distribution<int>(-50, 50)(rng);
  std::vector<Point3> vertices;
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) vertices.emplace_back(ox + c * sx, oy + r * sy, oz);
  }
  std::bernoulli_distribution drop(0.12), diag(0.5);
  std::vector<Triangle> faces;
  auto id = [cols](int r, int c) { return static_cast<VertexId>(r * cols + c); };
  for (int r = 0; r + 1 < rows; ++r) {
    for (int c = 0; c + 1 < cols; ++c) {
      if (drop(rng)) continue;
      const auto a = id(r, c), b = id(r, c + 1), d = id(r + 1, c), e = id(r + 1, c + 1);
      if (diag(rng)) {
        faces.push_back({a, b, e});
        faces.push_back({a, e, d});
      } else {
        faces.push_back({a, b, d});
        faces.push_back({b, e, d});
      }
    }
  }
  if (faces.empty()) faces.push_back({id(0, 0), id(0, 1), id(1, 0)});
  return Mesh(std::move(vertices), std::move(faces));
}

// Jittered grid with random heights: generic floating-point edge lengths.
inline Mesh irregular_mesh(std::mt19937_64& rng, int rows, int cols) {
  std::uniform_real_distribution<double> jitter(-0.3, 0.3), height(-2.0, 2.0);
  std::vector<Point3> vertices;
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      vertices.emplace_back(c * 1.7 + jitter(rng), r * 1.3 + jitter(rng), height(rng));
    }
  }
  std::bernoulli_distribution diag(0.5);
  std::vector<Triangle> faces;
  auto id = [cols](int r, int c) { return static_cast<VertexId>(r * cols + c); };
  for (int r = 0; r + 1 < rows; ++r) {
    for (int c = 0; c + 1 < cols; ++c) {
      const auto a = id(r, c), b = id(r, c + 1), d = id(r + 1, c), e = id(r + 1, c + 1);
      if (diag(rng)) {
        faces.push_back({a, b, e});
        faces.push_back({a, e, d});
      } else {
        faces.push_back({a, b, d});
        faces.push_back({b, e, d});
      }
    }
  }
  return Mesh(std::move(vertices), std::move(faces));
}

// All-pairs shortest paths by Floyd-Warshall over the face edges.
inline std::vector<std::vector<double>> floyd_warshall(const Mesh& mesh) {
  const std::size_t n = mesh.vertex_count();
  std::vector<std::vector<double>> d(n, std::vector<double>(n, kUnreachable));
  for (std::size_t i = 0; i < n; ++i) d[i][i] = 0.0;
  for (const auto& f : mesh.faces()) {
    for (int e = 0; e < 3; ++e) {
      const auto a = f[e], b = f[(e + 1) % 3];
      const double w = euclidean_distance(mesh.vertex(a), mesh.vertex(b));
      d[a][b] = std::min(d[a][b], w);
      d[b][a] = std::min(d[b][a], w);
    }
  }
  for (std::size_t k = 0; k < n; ++k) {
    for (std::size_t i = 0; i < n; ++i) {
      if (d[i][k] == kUnreachable) continue;
      for (std::size_t j = 0; j < n; ++j) {
        const double via = d[i][k] + d[k][j];
        if (via < d[i][j]) d[i][j] = via;
      }
    }
  }
  return d;
}

// Meshes shared by the property tests.
inline std::vector<Mesh> suite_meshes() {
  std::vector<Mesh> out;
  std::mt19937_64 rng(7);
  out.push_back(lattice_mesh(rng, 100));
  out.push_back(irregular_mesh(rng, 6, 9));
  out.push_back(irregular_mesh(rng, 12, 5));
  for (int target : {300, 1200, 3000}) out.push_back(synth_plate(target, rng));
  return out;
}

// Regression datasets shared by the boosting tests.
struct Dataset {
  FeatureTable x;
  std::vector<double> y;
};

inline Dataset random_dataset(std::mt19937_64& rng, std::size_t rows, std::size_t width,
                              bool noisy) {
  Dataset d;
  d.x.width = width;
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::normal_distribution<double> noise(0.0, noisy ? 0.3 : 0.0);
  std::vector<double> row(width);
  for (std::size_t r = 0; r < rows; ++r) {
    for (auto& v : row) v = u(rng);
    d.x.append(row);
    double y = 2.0 * row[0] + (width > 1 ? std::sin(3.0 * row[1]) : 0.0);
    if (width > 2) y += row[2] > 0.2 ? 1.5 : 0.0;
    d.y.push_back(y + noise(rng));
  }
  return d;
}

inline std::vector<Dataset> suite_datasets() {
  std::vector<Dataset> out;
  std::mt19937_64 rng(11);
  out.push_back(random_dataset(rng, 40, 1, false));
  out.push_back(random_dataset(rng, 200, 3, true));
  out.push_back(random_dataset(rng, 500, 8, true));
  // Heavy ties: integer-valued features.
  Dataset ties;
  ties.x.width = 2;
  std::uniform_int_distribution<int> small(0, 3);
  for (int r = 0; r < 120; ++r) {
    const std::vector<double> row = {double(small(rng)), double(small(rng))};
    ties.x.append(row);
    ties.y.push_back(row[0] * row[1] + 0.1 * small(rng));
  }
  out.push_back(std::move(ties));
  return out;
}

inline std::string obj_text(const Mesh& mesh) {
  std::ostringstream out;
  write_obj(out, mesh);
  return out.str();
}

}  // namespace ims::test
