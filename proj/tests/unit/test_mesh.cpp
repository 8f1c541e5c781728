#include "fixtures.hpp"
#include "ims/mesh.hpp"
#include "ims/spatial_index.hpp"

#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

using namespace ims;

namespace {

Mesh parse_obj_text(const std::string& text) {
  std::istringstream in(text);
  return parse_obj(in);
}

std::size_t error_line(const std::string& text) {
  try {
    parse_mesh(text);
  } catch (const ParseError& e) {
    return e.line();
  }
  FAIL("expected a parse error");
  return 0;
}

}  // namespace

TEST_SUITE("mesh_core") {

TEST_CASE("single triangle") {
  const auto m = parse_obj_text("v 0 0 0\nv 3 0 0\nv 0 4 0\nf 1 2 3\n");
  CHECK(m.vertex_count() == 3);
  CHECK(m.face_count() == 1);
  const MeshGraph g(m);
  CHECK(g.edge_count() == 3);
  const auto d = geodesic_distances(g, 0);
  CHECK(d == std::vector<double>{0.0, 3.0, 4.0});
  const auto d1 = geodesic_distances(g, 1);
  CHECK(d1[2] == 5.0);
}

TEST_CASE("comments and blank lines are ignored") {
  const auto m = parse_obj_text("# header\n\nv 0 0 0 # origin\nv 1 0 0\nv 0 1 0\n  \nf 1 2 3\n");
  CHECK(m.vertex_count() == 3);
}

TEST_CASE("parse errors carry the line number") {
  CHECK(error_line("v 0 0 0\nv 1 0 0\nv 0 1\n") == 3);
  CHECK(error_line("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 4\n") == 4);
  CHECK(error_line("v 0 0 0\nv 1 0 0\nv 0 1 0\nv 1 1 0\nf 1 2 3 4\n") == 5);
  CHECK(error_line("v 0 0 0\nv x 0 0\n") == 2);
  CHECK(error_line("v 0 0 0\nvt 0 0\n") == 2);
  CHECK(error_line("N 1 0 0 0\nN 2 1 0 0\nN 2 0 1 0\n") == 3);
  CHECK(error_line("N 1 0 0 0\nN 2 1 0 0\nN 3 0 1 0\nE 1 1 2 9\n") == 4);
  CHECK(error_line("N 1 0 0 0\nQ 1\n") == 2);
}

TEST_CASE("structural errors are reported without a line") {
  CHECK_THROWS_AS(parse_obj_text("v 0 0 0\nv 0 0 0\nv 1 0 0\nf 1 2 3\n"), ParseError);
  CHECK_THROWS_AS(parse_obj_text("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 1 2\n"), ParseError);
  CHECK_THROWS_AS(Mesh({Point3(0, 0, 0)}, {Triangle{0, 1, 2}}), MeshError);
}

TEST_CASE("pat roundtrip keeps source ids") {
  const std::string text =
      "N 10 0 0 0\nN 20 2 0 0\nN 30 0 2 0\nN 40 2 2 0\nE 1 10 20 30\nE 2 20 40 30\n";
  std::istringstream in(text);
  const auto m = parse_pat(in);
  CHECK(m.source_ids() == std::vector<std::int64_t>{10, 20, 30, 40});
  CHECK(m.vertex_for_source_id(40) == VertexId{3});
  CHECK_FALSE(m.vertex_for_source_id(5).has_value());
  std::ostringstream out;
  write_pat(out, m);
  const auto again = parse_mesh(out.str());
  CHECK(again.vertices() == m.vertices());
  CHECK(again.faces() == m.faces());
  CHECK(again.source_ids() == m.source_ids());
}

TEST_CASE("obj roundtrip is exact") {
  std::mt19937_64 rng(3);
  const auto m = test::irregular_mesh(rng, 5, 7);
  const auto again = parse_mesh(test::obj_text(m));
  CHECK(again.vertices() == m.vertices());
  CHECK(again.faces() == m.faces());
  CHECK(sniff_mesh_format(test::obj_text(m)) == MeshFormat::Obj);
}

TEST_CASE("edge count matches a brute-force set of undirected edges") {
  for (const auto& m : test::suite_meshes()) {
    std::set<std::pair<VertexId, VertexId>> edges;
    for (const auto& f : m.faces()) {
      for (int e = 0; e < 3; ++e) {
        edges.insert(std::minmax(f[e], f[(e + 1) % 3]));
      }
    }
    const MeshGraph g(m);
    CHECK(g.edge_count() == edges.size());
    std::size_t degree_sum = 0;
    for (VertexId v = 0; v < m.vertex_count(); ++v) {
      for (const auto& n : g.neighbors(v)) {
        CHECK(edges.count(std::minmax(v, n.vertex)) == 1);
        CHECK(n.weight == euclidean_distance(m.vertex(v), m.vertex(n.vertex)));
      }
      degree_sum += g.neighbors(v).size();
    }
    CHECK(degree_sum == 2 * edges.size());
  }
}

TEST_CASE("dijkstra equals floyd-warshall exactly on integer-length lattices") {
  std::mt19937_64 rng(101);
  for (int trial = 0; trial < 10; ++trial) {
    const auto m = test::lattice_mesh(rng, 100);
    const auto all = test::floyd_warshall(m);
    const MeshGraph g(m);
    for (VertexId s = 0; s < m.vertex_count(); ++s) {
      REQUIRE(geodesic_distances(g, s) == all[s]);
    }
  }
}

TEST_CASE("dijkstra matches floyd-warshall on irregular meshes") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 5; ++trial) {
    const auto m = test::irregular_mesh(rng, 5 + trial, 8);
    const auto all = test::floyd_warshall(m);
    const MeshGraph g(m);
    for (VertexId s = 0; s < m.vertex_count(); s += 3) {
      const auto d = geodesic_distances(g, s);
      for (std::size_t v = 0; v < d.size(); ++v) CHECK(d[v] == doctest::Approx(all[s][v]).epsilon(1e-12));
    }
  }
}

TEST_CASE("geodesic distance properties") {
  std::mt19937_64 rng(9);
  const auto m = test::irregular_mesh(rng, 9, 9);
  const MeshGraph g(m);
  const auto d0 = geodesic_distances(g, 0);
  const auto d40 = geodesic_distances(g, 40);
  CHECK(d0[0] == 0.0);
  CHECK(d0[40] == d40[0]);
  for (VertexId v = 0; v < m.vertex_count(); ++v) {
    CHECK(d0[v] >= euclidean_distance(m.vertex(0), m.vertex(v)) * (1 - 1e-15));
    CHECK(d0[v] <= d0[40] + d40[v] + 1e-12);
    for (const auto& n : g.neighbors(v)) CHECK(d0[n.vertex] <= d0[v] + n.weight + 1e-12);
  }
  CHECK_THROWS_AS(geodesic_distances(g, 1000), std::out_of_range);
}

TEST_CASE("disconnected components are unreachable") {
  const Mesh m({Point3(0, 0, 0), Point3(1, 0, 0), Point3(0, 1, 0), Point3(5, 0, 0),
                Point3(6, 0, 0), Point3(5, 1, 0)},
               {Triangle{0, 1, 2}, Triangle{3, 4, 5}});
  const auto d = geodesic_distances(MeshGraph(m), 0);
  CHECK(d[3] == kUnreachable);
  CHECK(d[5] == kUnreachable);
  CHECK(d[2] == 1.0);
}

TEST_CASE("knn equals brute-force sort by (distance, index)") {
  std::mt19937_64 rng(21);
  for (const auto& m : test::suite_meshes()) {
    for (int q = 0; q < 10; ++q) {
      const auto query = static_cast<VertexId>(rng() % m.vertex_count());
      const std::size_t k = 1 + rng() % std::min<std::size_t>(120, m.vertex_count());
      std::vector<VertexId> order(m.vertex_count());
      std::iota(order.begin(), order.end(), 0);
      std::sort(order.begin(), order.end(), [&](VertexId a, VertexId b) {
        const double da = squared_distance(m.vertex(query), m.vertex(a));
        const double db = squared_distance(m.vertex(query), m.vertex(b));
        return da != db ? da < db : a < b;
      });
      order.resize(k);
      REQUIRE(knn_euclidean(m, query, k) == order);
    }
  }
}

TEST_CASE("knn breaks ties by index") {
  // Four points equidistant from the centre.
  const Mesh m({Point3(0, 0, 0), Point3(1, 0, 0), Point3(0, 1, 0), Point3(-1, 0, 0),
                Point3(0, -1, 0)},
               {Triangle{0, 1, 2}, Triangle{0, 3, 4}});
  CHECK(knn_euclidean(m, 0, 3) == std::vector<VertexId>{0, 1, 2});
  CHECK(knn_euclidean(m, 0, 5).size() == 5);
  CHECK_THROWS_AS(knn_euclidean(m, 0, 6), std::invalid_argument);
}

TEST_CASE("kd-tree nearest_one agrees with exhaustive scan") {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-10, 10);
  std::vector<Point3> pts(500);
  for (auto& p : pts) p = Point3(u(rng), u(rng), std::round(u(rng)));
  const KdTree tree(pts);
  for (int q = 0; q < 200; ++q) {
    const Point3 query(u(rng), u(rng), u(rng));
    std::uint32_t best = 0;
    for (std::uint32_t i = 1; i < pts.size(); ++i) {
      if (squared_distance(query, pts[i]) < squared_distance(query, pts[best])) best = i;
    }
    CHECK(tree.nearest_one(query) == best);
  }
}

TEST_CASE("subsample size, order, and determinism") {
  std::mt19937_64 rng(8);
  const auto m = test::irregular_mesh(rng, 10, 10);
  const auto s = subsample(m, 0.125, 42);
  CHECK(s.size() == 12);
  CHECK(std::is_sorted(s.begin(), s.end()));
  CHECK(std::adjacent_find(s.begin(), s.end()) == s.end());
  CHECK(s == subsample(m, 0.125, 42));
  CHECK(s != subsample(m, 0.125, 43));
  CHECK(subsample(m, 1.0, 0).size() == 100);
  CHECK_THROWS(subsample(m, 0.0, 0));
}

}
