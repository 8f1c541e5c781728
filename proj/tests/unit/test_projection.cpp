#include "fixtures.hpp"
#include "ims/projection.hpp"

#include <doctest.h>

#include <Eigen/Geometry>

#include <map>
#include <random>
#include <sstream>

using namespace ims;

namespace {

double plane_sse(const Mesh& m, const Point3& origin, const Point3& normal) {
  double s = 0.0;
  for (const auto& p : m.vertices()) {
    const double h = (p - origin).dot(normal);
    s += h * h;
  }
  return s;
}

Point3 centroid(const Mesh& m) {
  Point3 c = Point3::Zero();
  for (const auto& p : m.vertices()) c += p;
  return c / static_cast<double>(m.vertex_count());
}

// Barycentric sign test of a pixel centre with a slack band around edges.
int coverage(const Eigen::Vector2d& a, const Eigen::Vector2d& b, const Eigen::Vector2d& c,
             const Eigen::Vector2d& p) {
  auto cross = [](const Eigen::Vector2d& u, const Eigen::Vector2d& v, const Eigen::Vector2d& q) {
    return (v.x() - u.x()) * (q.y() - u.y()) - (v.y() - u.y()) * (q.x() - u.x());
  };
  const double area = cross(a, b, c);
  if (area == 0.0) return 0;
  const double s = area > 0 ? 1.0 : -1.0;
  const double w0 = s * cross(b, c, p), w1 = s * cross(c, a, p), w2 = s * cross(a, b, p);
  const double eps = 1e-9 * std::abs(area);
  if (w0 > eps && w1 > eps && w2 > eps) return 2;  // clearly inside
  if (w0 >= -eps && w1 >= -eps && w2 >= -eps) return 1;  // on the boundary band
  return 0;
}

}  // namespace

TEST_SUITE("projection") {

TEST_CASE("plane of a flat mesh") {
  const Mesh m({Point3(0, 0, 5), Point3(4, 0, 5), Point3(0, 2, 5), Point3(4, 2, 5)},
               {Triangle{0, 1, 2}, Triangle{1, 3, 2}});
  const auto plane = fit_plane(m.vertices());
  CHECK(plane.normal.isApprox(Point3(0, 0, 1)));
  CHECK(plane.basis_u.isApprox(Point3(1, 0, 0)));
  CHECK(plane.origin.isApprox(Point3(2, 1, 5)));
  CHECK(plane.basis_u.cross(plane.basis_v).isApprox(plane.normal));
  for (const auto& p : m.vertices()) CHECK(plane.height(p) == doctest::Approx(0.0));
}

TEST_CASE("degenerate point sets are rejected") {
  const std::vector<Point3> line = {Point3(0, 0, 0), Point3(1, 1, 1), Point3(2, 2, 2)};
  CHECK_THROWS_AS(fit_plane(line), ProjectionError);
  const std::vector<Point3> two = {Point3(0, 0, 0), Point3(1, 0, 0)};
  CHECK_THROWS_AS(fit_plane(two), ProjectionError);
}

TEST_CASE("fitted plane beats 1000 random planes through the centroid") {
  std::mt19937_64 rng(12);
  std::normal_distribution<double> g(0, 1);
  for (const auto& m : test::suite_meshes()) {
    const auto plane = fit_plane(m.vertices());
    const double best = plane_sse(m, plane.origin, plane.normal);
    const auto c = centroid(m);
    for (int i = 0; i < 1000; ++i) {
      const Point3 n = Point3(g(rng), g(rng), g(rng)).normalized();
      REQUIRE(best <= plane_sse(m, c, n) * (1 + 1e-12));
    }
    CHECK(std::abs(plane.normal.norm() - 1.0) < 1e-12);
    CHECK(std::abs(plane.basis_u.dot(plane.normal)) < 1e-12);
    CHECK(std::abs(plane.basis_v.dot(plane.basis_u)) < 1e-12);
  }
}

TEST_CASE("constant field reprojects exactly") {
  for (const auto& m : test::suite_meshes()) {
    const std::vector<double> field(m.vertex_count(), 0.37);
    const auto [raster, corr] = project(m, field, fit_plane(m.vertices()));
    CHECK(raster.height() == kRasterHeight);
    CHECK(raster.width() == kRasterWidth);
    CHECK(reproject(raster.values, corr) == field);
    for (int r = 0; r < raster.height(); ++r) {
      for (int c = 0; c < raster.width(); ++c) {
        REQUIRE(raster.values.at(r, c) == (raster.masked(r, c) ? 0.37 : 0.0));
      }
    }
  }
}

TEST_CASE("reprojected values are the per-pixel vertex means") {
  std::mt19937_64 rng(13);
  const auto m = synth_plate(2000, rng);
  std::vector<double> field(m.vertex_count());
  std::uniform_real_distribution<double> u(0, 1);
  for (auto& v : field) v = u(rng);
  const auto [raster, corr] = project(m, field, fit_plane(m.vertices()));
  std::map<std::pair<int, int>, std::vector<double>> by_pixel;
  for (std::size_t v = 0; v < corr.size(); ++v) by_pixel[{corr[v].row, corr[v].col}].push_back(field[v]);
  const auto back = reproject(raster.values, corr);
  for (std::size_t v = 0; v < corr.size(); ++v) {
    const auto& vals = by_pixel[{corr[v].row, corr[v].col}];
    double s = 0;
    for (double x : vals) s += x;
    CHECK(back[v] == doctest::Approx(s / vals.size()).epsilon(1e-14));
    CHECK(raster.masked(corr[v].row, corr[v].col));
  }
}

TEST_CASE("projection fits the mesh inside the margin, centred") {
  std::mt19937_64 rng(14);
  const auto m = synth_plate(1500, rng);
  const auto plane = fit_plane(m.vertices());
  const auto [raster, corr] = project(m, std::vector<double>(m.vertex_count(), 1.0), plane);
  int rmin = 1 << 30, rmax = -1, cmin = 1 << 30, cmax = -1;
  for (const auto& p : corr) {
    rmin = std::min(rmin, p.row), rmax = std::max(rmax, p.row);
    cmin = std::min(cmin, p.col), cmax = std::max(cmax, p.col);
  }
  CHECK(rmin >= kRasterMargin - 1);
  CHECK(cmin >= kRasterMargin - 1);
  CHECK(rmax <= kRasterHeight - kRasterMargin);
  CHECK(cmax <= kRasterWidth - kRasterMargin);
  // One axis is filled edge to edge.
  CHECK(((cmax - cmin) >= kRasterWidth - 2 * kRasterMargin - 2 ||
         (rmax - rmin) >= kRasterHeight - 2 * kRasterMargin - 2));
}

TEST_CASE("mask is triangle coverage united with vertex pixels") {
  const RasterSize small{48, 96, 2};
  for (const auto& m : test::suite_meshes()) {
    const auto plane = fit_plane(m.vertices());
    const auto [raster, corr] = project(m, std::vector<double>(m.vertex_count(), 0.0), plane, small);
    std::vector<int> oracle(std::size_t(small.height) * small.width, 0);
    std::vector<Eigen::Vector2d> px(m.vertex_count());
    for (std::size_t v = 0; v < px.size(); ++v) {
      const auto uv = plane.to_plane(m.vertex(v));
      px[v] = {uv.x() / raster.scale + raster.offset_col, uv.y() / raster.scale + raster.offset_row};
    }
    for (const auto& t : m.faces()) {
      for (int r = 0; r < small.height; ++r) {
        for (int c = 0; c < small.width; ++c) {
          auto& o = oracle[std::size_t(r) * small.width + c];
          o = std::max(o, coverage(px[t[0]], px[t[1]], px[t[2]], Eigen::Vector2d(c + 0.5, r + 0.5)));
        }
      }
    }
    for (const auto& p : corr) oracle[std::size_t(p.row) * small.width + p.col] = 2;
    for (int r = 0; r < small.height; ++r) {
      for (int c = 0; c < small.width; ++c) {
        const int o = oracle[std::size_t(r) * small.width + c];
        if (o == 2) REQUIRE(raster.masked(r, c));
        if (o == 0) REQUIRE_FALSE(raster.masked(r, c));
      }
    }
  }
}

TEST_CASE("project_like reuses the frame") {
  std::mt19937_64 rng(15);
  const auto m = synth_plate(900, rng);
  std::vector<double> a(m.vertex_count()), b(m.vertex_count());
  for (std::size_t v = 0; v < a.size(); ++v) {
    a[v] = double(v);
    b[v] = 2.0 * double(v);
  }
  const auto plane = fit_plane(m.vertices());
  const auto [ra, corr] = project(m, a, plane);
  const auto rb = project_like(ra, m, corr, b);
  const auto [rb_direct, corr_b] = project(m, b, plane);
  CHECK(rb.mask == ra.mask);
  CHECK(rb.values == rb_direct.values);
  CHECK(corr_b == corr);
}

TEST_CASE("flips are bit-exact involutions") {
  std::mt19937_64 rng(16);
  Grid2D g(5, 7);
  std::uniform_real_distribution<double> u(-1, 1);
  for (auto& v : g.values) v = u(rng);
  for (auto f : kAllFlips) CHECK(flip(flip(g, f), f) == g);
  CHECK(flip(flip(g, Flip::Horizontal), Flip::Vertical) == flip(g, Flip::Both));
  CHECK(flip(g, Flip::Horizontal).at(0, 0) == g.at(0, 6));
  CHECK(flip(g, Flip::Vertical).at(0, 0) == g.at(4, 0));
  CHECK(flip(g, Flip::None) == g);

  const auto m = synth_plate(600, rng);
  const auto [raster, corr] = project(m, std::vector<double>(m.vertex_count(), 1.0), fit_plane(m.vertices()));
  const auto variants = mirror_variants(raster);
  for (int i = 0; i < 4; ++i) {
    const auto back = flip(variants[i], kAllFlips[i]);
    CHECK(back.values == raster.values);
    CHECK(back.mask == raster.mask);
  }
  CHECK(variants[1].masked(10, 20) == raster.masked(10, kRasterWidth - 21));
}

TEST_CASE("bilinear upscaling") {
  Grid2D low(2, 2);
  low.values = {0.0, 1.0, 2.0, 3.0};
  const auto up = upscale_bilinear(low, 3, 3);
  CHECK(up.at(0, 0) == 0.0);
  CHECK(up.at(0, 2) == 1.0);
  CHECK(up.at(2, 0) == 2.0);
  CHECK(up.at(2, 2) == 3.0);
  CHECK(up.at(1, 1) == 1.5);
  CHECK(up.at(0, 1) == 0.5);

  Grid2D flat(kTargetHeight, kTargetWidth, 4.25);
  const auto big = upscale_bilinear(flat);
  CHECK(big.height == kRasterHeight);
  CHECK(big.width == kRasterWidth);
  for (double v : big.values) REQUIRE(v == 4.25);

  // Affine ramps survive bilinear interpolation.
  Grid2D ramp(kTargetHeight, kTargetWidth);
  for (int r = 0; r < ramp.height; ++r)
    for (int c = 0; c < ramp.width; ++c) ramp.at(r, c) = 2.0 * r - 0.5 * c;
  const auto ramp_up = upscale_bilinear(ramp);
  for (int r = 0; r < kRasterHeight; r += 17) {
    for (int c = 0; c < kRasterWidth; c += 13) {
      const double y = r * double(kTargetHeight - 1) / (kRasterHeight - 1);
      const double x = c * double(kTargetWidth - 1) / (kRasterWidth - 1);
      CHECK(ramp_up.at(r, c) == doctest::Approx(2.0 * y - 0.5 * x).epsilon(1e-12));
    }
  }
  CHECK_THROWS_AS(upscale_bilinear(Grid2D(), 2, 2), ProjectionError);
}

TEST_CASE("masked block average") {
  RasterMap r;
  r.values = Grid2D(4, 4);
  r.mask.assign(16, 0);
  for (int i = 0; i < 16; ++i) r.values.values[i] = i;
  // Mask the top-left block fully and one pixel of the bottom-right block.
  for (int i : {0, 1, 4, 5, 15}) r.mask[i] = 1;
  const auto d = downsample_masked(r, 2, 2);
  CHECK(d.at(0, 0) == 2.5);
  CHECK(d.at(1, 1) == 15.0);
  // Empty blocks copy the nearest filled one (breadth-first, up before right).
  CHECK(d.at(0, 1) == 2.5);
  CHECK(d.at(1, 0) == 2.5);
  r.mask.assign(16, 0);
  CHECK_THROWS_AS(downsample_masked(r, 2, 2), ProjectionError);
}

TEST_CASE("reprojection and projection input checks") {
  const Grid2D g(2, 2);
  CHECK_THROWS_AS(reproject(g, Correspondence{{2, 0}}), ProjectionError);
  std::mt19937_64 rng(1);
  const auto m = test::irregular_mesh(rng, 3, 3);
  CHECK_THROWS_AS(project(m, std::vector<double>(2, 0.0), fit_plane(m.vertices())), ProjectionError);
}

TEST_CASE("pgm output") {
  Grid2D g(1, 3);
  g.values = {0.0, 0.5, 1.0};
  std::ostringstream out;
  write_pgm(out, g, 0.0, 1.0);
  const std::string s = out.str();
  CHECK(s.substr(0, 11) == "P5\n3 1\n255\n");
  CHECK(static_cast<unsigned char>(s[11]) == 0);
  CHECK(static_cast<unsigned char>(s[12]) == 128);
  CHECK(static_cast<unsigned char>(s[13]) == 255);
}

}
