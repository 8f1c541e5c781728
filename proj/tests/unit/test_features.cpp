#include "fixtures.hpp"
#include "ims/features.hpp"
#include "ims/gates.hpp"

#include <doctest.h>

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

using namespace ims;

namespace {

Mesh three_points(const Point3& a, const Point3& b, const Point3& c) {
  return Mesh({a, b, c}, {Triangle{0, 1, 2}});
}

// Independent cosine of the angle at `p` between chords to `a` and `b`.
double chord_cosine(const Point3& p, const Point3& a, const Point3& b) {
  const double ux = a.x() - p.x(), uy = a.y() - p.y(), uz = a.z() - p.z();
  const double vx = b.x() - p.x(), vy = b.y() - p.y(), vz = b.z() - p.z();
  const double nu = std::sqrt(ux * ux + uy * uy + uz * uz);
  const double nv = std::sqrt(vx * vx + vy * vy + vz * vz);
  if (nu == 0.0 || nv == 0.0) return 1.0;
  return (ux * vx + uy * vy + uz * vz) / (nu * nv);
}

std::vector<Gate> random_gates(std::mt19937_64& rng, const Mesh& m, int count) {
  std::vector<Gate> gates;
  std::uniform_real_distribution<double> t(0.0, 2.0);
  while (static_cast<int>(gates.size()) < count) {
    const auto v = static_cast<VertexId>(rng() % m.vertex_count());
    if (std::none_of(gates.begin(), gates.end(), [&](const Gate& g) { return g.node_id == v; })) {
      gates.push_back({v, t(rng)});
    }
  }
  return gates;
}

Mesh transformed(const Mesh& m, const Eigen::Matrix3d& rot, const Point3& shift, double scale) {
  std::vector<Point3> v;
  for (const auto& p : m.vertices()) v.push_back(scale * (rot * p) + shift);
  return Mesh(std::move(v), m.faces());
}

}  // namespace

TEST_SUITE("features") {

TEST_CASE("orientation is the normalized chord") {
  const auto m = three_points(Point3(0, 0, 0), Point3(2, 0, 0), Point3(1, 1, std::sqrt(2.0)));
  const auto o = gate_orientation(m, 0, {1, 0.0});
  CHECK(o.direction == Point3(1, 0, 0));
  CHECK_FALSE(o.coincident);
  const auto o2 = gate_orientation(m, 0, {2, 0.0});
  CHECK(o2.direction.x() == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(o2.direction.y() == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(o2.direction.z() == doctest::Approx(std::sqrt(2.0) / 2).epsilon(1e-12));
  CHECK(o2.direction.norm() == doctest::Approx(1.0).epsilon(1e-12));
  const auto same = gate_orientation(m, 1, {1, 0.0});
  CHECK(same.coincident);
  CHECK(same.direction == Point3::Zero());
}

TEST_CASE("nearest gates sort by distance, ties to the lower index, pad with the nearest") {
  const GateDistanceTable table(2, {{5.0, 1.0}, {2.0, 1.0}, {2.0, 3.0}, {9.0, 0.5}});
  CHECK(nearest_gates(table, 0) == std::array<std::size_t, 3>{1, 2, 0});
  CHECK(nearest_gates(table, 1) == std::array<std::size_t, 3>{3, 0, 1});
  const GateDistanceTable one(1, {{4.0}});
  CHECK(nearest_gates(one, 0) == std::array<std::size_t, 3>{0, 0, 0});
  const GateDistanceTable none(1, {});
  CHECK_THROWS_AS(nearest_gates(none, 0), FeatureError);
}

TEST_CASE("collinear gates on one ray give unit cosines; orthogonal gives zero") {
  const Mesh line({Point3(0, 0, 0), Point3(1, 0, 0), Point3(2, 0, 0), Point3(3, 0, 0),
                   Point3(0, 1, 0)},
                  {Triangle{0, 1, 4}, Triangle{1, 2, 4}, Triangle{2, 3, 4}});
  const MeshGraph g(line);
  const std::vector<Gate> gates = {{1, 0.0}, {2, 0.0}, {3, 0.0}};
  const auto table = GateDistanceTable::compute(g, gates);
  const auto f = gate_features(line, gates, table, 0);
  CHECK(f.cos_a1 == 1.0);
  CHECK(f.cos_a2 == 1.0);
  const std::vector<Gate> ortho = {{1, 0.0}, {4, 0.0}};
  const auto t2 = GateDistanceTable::compute(g, ortho);
  CHECK(gate_features(line, ortho, t2, 0).cos_a1 == doctest::Approx(0.0));
}

TEST_CASE("coincident point and gate yields cosine 1") {
  const auto m = three_points(Point3(0, 0, 0), Point3(1, 0, 0), Point3(0, 1, 0));
  const std::vector<Gate> gates = {{0, 0.0}, {1, 0.5}, {2, 1.0}};
  const auto table = GateDistanceTable::compute(MeshGraph(m), gates);
  const auto f = gate_features(m, gates, table, 0);
  CHECK(f.d1 == 0.0);
  CHECK(f.cos_a1 == 1.0);
  CHECK(f.cos_a2 == 1.0);
  CHECK(f.t1 == 0.0);
}

TEST_CASE("plate with three gates matches floyd-warshall and a scalar dot product") {
  std::mt19937_64 rng(31);
  const auto m = test::lattice_mesh(rng, 100);
  const auto all = test::floyd_warshall(m);
  const auto gates = random_gates(rng, m, 3);
  const auto table = GateDistanceTable::compute(MeshGraph(m), gates);
  for (VertexId p = 0; p < m.vertex_count(); ++p) {
    if (all[gates[0].node_id][p] == kUnreachable || all[gates[1].node_id][p] == kUnreachable ||
        all[gates[2].node_id][p] == kUnreachable) {
      continue;
    }
    const auto f = gate_features(m, gates, table, p);
    std::array<std::pair<double, std::size_t>, 3> ranked;
    for (std::size_t i = 0; i < 3; ++i) ranked[i] = {all[gates[i].node_id][p], i};
    std::sort(ranked.begin(), ranked.end());
    CHECK(f.d1 == ranked[0].first);
    CHECK(f.d2 == ranked[1].first);
    CHECK(f.d3 == ranked[2].first);
    CHECK(f.t1 == gates[ranked[0].second].opening_time);
    const auto& g0 = m.vertex(gates[ranked[0].second].node_id);
    const auto& g1 = m.vertex(gates[ranked[1].second].node_id);
    const auto& g2 = m.vertex(gates[ranked[2].second].node_id);
    CHECK(f.cos_a1 == doctest::Approx(chord_cosine(m.vertex(p), g0, g1)).epsilon(1e-12));
    CHECK(f.cos_a2 == doctest::Approx(chord_cosine(m.vertex(p), g0, g2)).epsilon(1e-12));
  }
}

TEST_CASE("features are invariant under gate permutation") {
  std::mt19937_64 rng(17);
  const auto m = synth_plate(800, rng);
  auto gates = random_gates(rng, m, 5);
  const MeshGraph g(m);
  const auto points = subsample(m, 0.2, 3);
  const auto before = extract_features(m, gates, GateDistanceTable::compute(g, gates), points);
  std::shuffle(gates.begin(), gates.end(), rng);
  const auto after = extract_features(m, gates, GateDistanceTable::compute(g, gates), points);
  CHECK(before.values == after.values);
}

TEST_CASE("rigid motion preserves features; scaling scales distances only") {
  std::mt19937_64 rng(23);
  const auto m = synth_plate(600, rng);
  const auto gates = random_gates(rng, m, 4);
  const auto points = subsample(m, 0.25, 1);
  const auto base = extract_features(m, gates, GateDistanceTable::compute(MeshGraph(m), gates), points);

  const Eigen::Matrix3d rot =
      Eigen::AngleAxisd(0.7, Eigen::Vector3d(1, 2, 3).normalized()).toRotationMatrix();
  const double s = 2.5;
  for (double scale : {1.0, s}) {
    const auto m2 = transformed(m, rot, Point3(10, -4, 7), scale);
    const auto f2 =
        extract_features(m2, gates, GateDistanceTable::compute(MeshGraph(m2), gates), points);
    for (std::size_t r = 0; r < base.rows(); ++r) {
      const auto a = base.row(r), b = f2.row(r);
      for (int i = 0; i < 3; ++i) CHECK(b[i] == doctest::Approx(scale * a[i]).epsilon(1e-9));
      for (int i = 3; i < 6; ++i) CHECK(b[i] == a[i]);
      for (int i = 6; i < 8; ++i) CHECK(b[i] == doctest::Approx(a[i]).epsilon(1e-9));
    }
  }
}

TEST_CASE("technological parameters are appended only on request") {
  const auto m = three_points(Point3(0, 0, 0), Point3(1, 0, 0), Point3(0, 1, 0));
  const std::vector<Gate> gates = {{0, 0.0}};
  const auto table = GateDistanceTable::compute(MeshGraph(m), gates);
  const std::vector<VertexId> pts = {0, 1, 2};
  TechnologicalParameters params;
  params.melt_temperature = 230.0;
  params.fill_end_time = 1.5;
  CHECK(extract_features(m, gates, table, pts).width == 8);
  const auto with = extract_features(m, gates, table, pts, {true}, params);
  CHECK(with.width == 15);
  CHECK(with.column_names.size() == 15);
  CHECK(with.row(1)[8] == 230.0);
  CHECK(with.row(1)[14] == 1.5);
  CHECK(with.row(1)[9] == 0.0);
  CHECK_THROWS_AS(extract_features(m, std::vector<Gate>{}, table, pts), FeatureError);
}

TEST_CASE("feature csv header and rows") {
  const auto m = three_points(Point3(0, 0, 0), Point3(3, 0, 0), Point3(0, 4, 0));
  const std::vector<Gate> gates = {{0, 0.25}};
  const auto table = GateDistanceTable::compute(MeshGraph(m), gates);
  const std::vector<VertexId> pts = {1};
  const auto f = extract_features(m, gates, table, pts);
  std::ostringstream out;
  const std::vector<double> target = {0.5};
  write_feature_csv(out, f, target);
  CHECK(out.str() == "d1,d2,d3,t1,t2,t3,cos_a1,cos_a2,target\n3,3,3,0.25,0.25,0.25,1,1,0.5\n");
}

TEST_CASE("gates document validation") {
  std::istringstream in("N 7 0 0 0\nN 9 1 0 0\nN 11 0 1 0\nE 1 7 9 11\n");
  const auto m = parse_pat(in);
  const auto set = gates_from_json(
      nlohmann::json::parse(R"({"node_id_space":"source","gates":[{"node_id":11,"opening_time":0.5}],
                                "parameters":{"melt_temperature":240}})"),
      m);
  CHECK(set.gates.front().node_id == 2);
  CHECK(set.parameters.melt_temperature == 240.0);
  try {
    gates_from_json(nlohmann::json::parse(R"({"gates":[{"node_id":0},{"node_id":5}]})"), m);
    FAIL("expected GateError");
  } catch (const GateError& e) {
    CHECK(e.gate_index() == 1);
  }
  CHECK_THROWS_AS(gates_from_json(nlohmann::json::parse(R"({"gates":[{"node_id":0,"opening_time":-1}]})"), m),
                  GateError);
  CHECK_THROWS_AS(gates_from_json(nlohmann::json::parse(R"({"node_id_space":"source","gates":[{"node_id":8}]})"), m),
                  GateError);
  CHECK_THROWS(gates_from_json(nlohmann::json::parse(R"({"gates":[{"node_id":0}],"parameters":{"cooling_time":-2}})"), m));
  const auto doc = gates_to_json(set);
  const auto again = gates_from_json(doc, m);
  CHECK(again.gates == set.gates);
  CHECK(again.parameters == set.parameters);
}

}
