#include "ims/projection.hpp"

#include "ims/spatial_index.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <ostream>

namespace ims {
namespace {

// Largest-magnitude component made positive; ties go to the earlier axis.
Point3 canonical_sign(const Point3& v) {
  int axis = 0;
  for (int i = 1; i < 3; ++i) {
    if (std::abs(v[i]) > std::abs(v[axis])) axis = i;
  }
  return v[axis] < 0.0 ? Point3(-v) : v;
}

double lerp_clamped(double a, double b, double t) {
  if (a == b) return a;
  const double v = a + t * (b - a);
  return std::clamp(v, std::min(a, b), std::max(a, b));
}

struct Vec2 {
  double x, y;
};

double edge(const Vec2& a, const Vec2& b, const Vec2& p) {
  return (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x);
}

// Marks pixel centres covered by the triangle. Boundary centres belong to the
// triangle only on its top or left edges.
void rasterize_triangle(Vec2 a, Vec2 b, Vec2 c, int height, int width,
                        std::vector<std::uint8_t>& mask) {
  double area = edge(a, b, c);
  if (area == 0.0) return;
  if (area < 0.0) {
    std::swap(b, c);
    area = -area;
  }
  const auto owns = [](const Vec2& from, const Vec2& to) {
    const double dx = to.x - from.x, dy = to.y - from.y;
    return dy < 0.0 || (dy == 0.0 && dx > 0.0);
  };
  const bool own_ab = owns(a, b), own_bc = owns(b, c), own_ca = owns(c, a);
  const int c0 = std::max(0, static_cast<int>(std::floor(std::min({a.x, b.x, c.x}) - 0.5)));
  const int c1 = std::min(width - 1, static_cast<int>(std::ceil(std::max({a.x, b.x, c.x}))));
  const int r0 = std::max(0, static_cast<int>(std::floor(std::min({a.y, b.y, c.y}) - 0.5)));
  const int r1 = std::min(height - 1, static_cast<int>(std::ceil(std::max({a.y, b.y, c.y}))));
  for (int r = r0; r <= r1; ++r) {
    for (int col = c0; col <= c1; ++col) {
      const Vec2 p{col + 0.5, r + 0.5};
      const double w0 = edge(b, c, p), w1 = edge(c, a, p), w2 = edge(a, b, p);
      const bool in0 = w0 > 0.0 || (w0 == 0.0 && own_bc);
      const bool in1 = w1 > 0.0 || (w1 == 0.0 && own_ca);
      const bool in2 = w2 > 0.0 || (w2 == 0.0 && own_ab);
      if (in0 && in1 && in2) mask[std::size_t(r) * width + col] = 1;
    }
  }
}

// Per-pixel mean of vertex values, then breadth-first fill of the remaining
// mask pixels from the nearest valued pixel.
Grid2D fill_values(int height, int width, const std::vector<std::uint8_t>& mask,
                   const Correspondence& corr, std::span<const double> field) {
  const std::size_t pixels = std::size_t(height) * width;
  std::vector<double> sum(pixels, 0.0), count(pixels, 0.0);
  std::vector<double> lo(pixels, std::numeric_limits<double>::infinity());
  std::vector<double> hi(pixels, -std::numeric_limits<double>::infinity());
  for (std::size_t v = 0; v < corr.size(); ++v) {
    const auto idx = std::size_t(corr[v].row) * width + corr[v].col;
    sum[idx] += field[v];
    count[idx] += 1.0;
    lo[idx] = std::min(lo[idx], field[v]);
    hi[idx] = std::max(hi[idx], field[v]);
  }

  Grid2D out(height, width, 0.0);
  std::vector<std::int32_t> source(pixels, -1);
  std::deque<std::size_t> queue;
  for (std::size_t i = 0; i < pixels; ++i) {
    if (count[i] > 0) {
      out.values[i] = std::clamp(sum[i] / count[i], lo[i], hi[i]);
      source[i] = static_cast<std::int32_t>(i);
      queue.push_back(i);
    }
  }
  while (!queue.empty()) {
    const auto i = queue.front();
    queue.pop_front();
    const int r = static_cast<int>(i / width), c = static_cast<int>(i % width);
    const int dr[] = {-1, 0, 0, 1}, dc[] = {0, -1, 1, 0};
    for (int k = 0; k < 4; ++k) {
      const int rr = r + dr[k], cc = c + dc[k];
      if (rr < 0 || rr >= height || cc < 0 || cc >= width) continue;
      const auto j = std::size_t(rr) * width + cc;
      if (!mask[j] || source[j] >= 0) continue;
      source[j] = source[i];
      out.values[j] = out.values[i];
      queue.push_back(j);
    }
  }

  // Mask islands that hold no vertex: nearest valued pixel by straight line.
  std::vector<std::size_t> orphans;
  for (std::size_t i = 0; i < pixels; ++i) {
    if (mask[i] && source[i] < 0) orphans.push_back(i);
  }
  if (!orphans.empty()) {
    std::vector<Point3> centres;
    std::vector<std::size_t> valued;
    for (std::size_t i = 0; i < pixels; ++i) {
      if (count[i] > 0) {
        centres.emplace_back(double(i % width), double(i / width), 0.0);
        valued.push_back(i);
      }
    }
    const KdTree tree(centres);
    for (const auto i : orphans) {
      const auto nearest = valued[tree.nearest_one(Point3(double(i % width), double(i / width), 0.0))];
      out.values[i] = out.values[nearest];
    }
  }
  return out;
}

}  // namespace

Eigen::Vector2d ProjectionPlane::to_plane(const Point3& p) const {
  const Point3 d = p - origin;
  return {d.dot(basis_u), d.dot(basis_v)};
}

double ProjectionPlane::height(const Point3& p) const { return (p - origin).dot(normal); }

ProjectionPlane fit_plane(std::span<const Point3> points) {
  if (points.size() < 3) throw ProjectionError("plane fit needs at least 3 points");
  Point3 centroid = Point3::Zero();
  for (const auto& p : points) centroid += p;
  centroid /= static_cast<double>(points.size());
  Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
  for (const auto& p : points) {
    const Point3 d = p - centroid;
    cov += d * d.transpose();
  }
  cov /= static_cast<double>(points.size());

  const Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(cov);
  if (eig.info() != Eigen::Success) throw ProjectionError("eigen decomposition failed");
  const auto& lambda = eig.eigenvalues();  // ascending
  if (!(lambda[2] > 0.0) || lambda[1] <= 1e-12 * lambda[2]) {
    throw ProjectionError("degenerate point set (collinear or coincident)");
  }
  ProjectionPlane plane;
  plane.origin = centroid;
  plane.normal = canonical_sign(eig.eigenvectors().col(0).normalized());
  plane.basis_u = canonical_sign(eig.eigenvectors().col(2).normalized());
  plane.basis_v = plane.normal.cross(plane.basis_u);
  return plane;
}

std::size_t RasterMap::mask_count() const {
  return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), std::uint8_t{1}));
}

std::pair<RasterMap, Correspondence> project(const Mesh& mesh, std::span<const double> field,
                                             const ProjectionPlane& plane,
                                             const RasterSize& size) {
  const auto n = mesh.vertex_count();
  if (n == 0) throw ProjectionError("empty mesh");
  if (field.size() != n) throw ProjectionError("field is not aligned with vertices");
  if (size.height <= 2 * size.margin || size.width <= 2 * size.margin) {
    throw ProjectionError("raster too small for its margin");
  }

  std::vector<Eigen::Vector2d> uv(n);
  Eigen::Vector2d lo = Eigen::Vector2d::Constant(std::numeric_limits<double>::infinity());
  Eigen::Vector2d hi = -lo;
  for (std::size_t v = 0; v < n; ++v) {
    uv[v] = plane.to_plane(mesh.vertices()[v]);
    lo = lo.cwiseMin(uv[v]);
    hi = hi.cwiseMax(uv[v]);
  }
  const double span_a = hi.x() - lo.x(), span_b = hi.y() - lo.y();
  const double avail_w = size.width - 2 * size.margin, avail_h = size.height - 2 * size.margin;
  double px_per_mm = std::numeric_limits<double>::infinity();
  if (span_a > 0.0) px_per_mm = std::min(px_per_mm, avail_w / span_a);
  if (span_b > 0.0) px_per_mm = std::min(px_per_mm, avail_h / span_b);
  if (!std::isfinite(px_per_mm)) throw ProjectionError("mesh projects to a single point");

  RasterMap raster;
  raster.plane = plane;
  raster.scale = 1.0 / px_per_mm;
  raster.offset_col = size.width / 2.0 - (lo.x() + hi.x()) / 2.0 / raster.scale;
  raster.offset_row = size.height / 2.0 - (lo.y() + hi.y()) / 2.0 / raster.scale;

  std::vector<Vec2> pixel(n);
  Correspondence corr(n);
  raster.mask.assign(std::size_t(size.height) * size.width, 0);
  for (std::size_t v = 0; v < n; ++v) {
    pixel[v] = {uv[v].x() / raster.scale + raster.offset_col,
                uv[v].y() / raster.scale + raster.offset_row};
    corr[v].col = std::clamp(static_cast<int>(std::floor(pixel[v].x)), 0, size.width - 1);
    corr[v].row = std::clamp(static_cast<int>(std::floor(pixel[v].y)), 0, size.height - 1);
  }
  for (const auto& t : mesh.faces()) {
    rasterize_triangle(pixel[t[0]], pixel[t[1]], pixel[t[2]], size.height, size.width, raster.mask);
  }
  for (const auto& p : corr) raster.mask[std::size_t(p.row) * size.width + p.col] = 1;

  raster.values = fill_values(size.height, size.width, raster.mask, corr, field);
  return {std::move(raster), std::move(corr)};
}

RasterMap project_like(const RasterMap& frame, const Mesh& mesh, const Correspondence& corr,
                       std::span<const double> field) {
  if (field.size() != mesh.vertex_count() || corr.size() != mesh.vertex_count()) {
    throw ProjectionError("field/correspondence not aligned with vertices");
  }
  RasterMap out;
  out.mask = frame.mask;
  out.scale = frame.scale;
  out.offset_col = frame.offset_col;
  out.offset_row = frame.offset_row;
  out.plane = frame.plane;
  out.values = fill_values(frame.height(), frame.width(), frame.mask, corr, field);
  return out;
}

Grid2D upscale_bilinear(const Grid2D& low, int out_height, int out_width) {
  if (low.height < 1 || low.width < 1 || out_height < 1 || out_width < 1) {
    throw ProjectionError("invalid grid shape for upscaling");
  }
  Grid2D out(out_height, out_width);
  const double sy = out_height > 1 ? double(low.height - 1) / double(out_height - 1) : 0.0;
  const double sx = out_width > 1 ? double(low.width - 1) / double(out_width - 1) : 0.0;
  for (int r = 0; r < out_height; ++r) {
    const double y = r * sy;
    const int y0 = std::min(static_cast<int>(y), low.height - 1);
    const int y1 = std::min(y0 + 1, low.height - 1);
    const double fy = y - y0;
    for (int c = 0; c < out_width; ++c) {
      const double x = c * sx;
      const int x0 = std::min(static_cast<int>(x), low.width - 1);
      const int x1 = std::min(x0 + 1, low.width - 1);
      const double fx = x - x0;
      const double top = lerp_clamped(low.at(y0, x0), low.at(y0, x1), fx);
      const double bottom = lerp_clamped(low.at(y1, x0), low.at(y1, x1), fx);
      out.at(r, c) = lerp_clamped(top, bottom, fy);
    }
  }
  return out;
}

Grid2D downsample_masked(const RasterMap& raster, int out_height, int out_width) {
  const int h = raster.height(), w = raster.width();
  if (out_height < 1 || out_width < 1 || out_height > h || out_width > w) {
    throw ProjectionError("invalid downsample shape");
  }
  const std::size_t cells = std::size_t(out_height) * out_width;
  std::vector<double> sum(cells, 0.0), count(cells, 0.0);
  std::vector<double> lo(cells, std::numeric_limits<double>::infinity());
  std::vector<double> hi(cells, -std::numeric_limits<double>::infinity());
  for (int r = 0; r < h; ++r) {
    const int br = static_cast<int>(std::int64_t(r) * out_height / h);
    for (int c = 0; c < w; ++c) {
      if (!raster.masked(r, c)) continue;
      const auto cell = std::size_t(br) * out_width + static_cast<int>(std::int64_t(c) * out_width / w);
      const double v = raster.values.at(r, c);
      sum[cell] += v;
      count[cell] += 1.0;
      lo[cell] = std::min(lo[cell], v);
      hi[cell] = std::max(hi[cell], v);
    }
  }
  Grid2D out(out_height, out_width);
  std::vector<char> done(cells, 0);
  std::deque<std::size_t> queue;
  for (std::size_t i = 0; i < cells; ++i) {
    if (count[i] > 0) {
      out.values[i] = std::clamp(sum[i] / count[i], lo[i], hi[i]);
      done[i] = 1;
      queue.push_back(i);
    }
  }
  if (queue.empty()) throw ProjectionError("raster has an empty mask");
  while (!queue.empty()) {
    const auto i = queue.front();
    queue.pop_front();
    const int r = static_cast<int>(i / out_width), c = static_cast<int>(i % out_width);
    const int dr[] = {-1, 0, 0, 1}, dc[] = {0, -1, 1, 0};
    for (int k = 0; k < 4; ++k) {
      const int rr = r + dr[k], cc = c + dc[k];
      if (rr < 0 || rr >= out_height || cc < 0 || cc >= out_width) continue;
      const auto j = std::size_t(rr) * out_width + cc;
      if (done[j]) continue;
      done[j] = 1;
      out.values[j] = out.values[i];
      queue.push_back(j);
    }
  }
  return out;
}

std::vector<double> reproject(const Grid2D& image, const Correspondence& corr) {
  std::vector<double> out(corr.size());
  for (std::size_t v = 0; v < corr.size(); ++v) {
    const auto& p = corr[v];
    if (p.row < 0 || p.row >= image.height || p.col < 0 || p.col >= image.width) {
      throw ProjectionError("correspondence of vertex " + std::to_string(v) +
                            " lies outside the image");
    }
    out[v] = image.at(p.row, p.col);
  }
  return out;
}

Grid2D flip(const Grid2D& grid, Flip f) {
  if (f == Flip::None) return grid;
  const bool h = f == Flip::Horizontal || f == Flip::Both;
  const bool v = f == Flip::Vertical || f == Flip::Both;
  Grid2D out(grid.height, grid.width);
  for (int r = 0; r < grid.height; ++r) {
    const int sr = v ? grid.height - 1 - r : r;
    for (int c = 0; c < grid.width; ++c) {
      out.at(r, c) = grid.at(sr, h ? grid.width - 1 - c : c);
    }
  }
  return out;
}

RasterMap flip(const RasterMap& map, Flip f) {
  RasterMap out = map;
  out.values = flip(map.values, f);
  if (f != Flip::None) {
    const bool h = f == Flip::Horizontal || f == Flip::Both;
    const bool v = f == Flip::Vertical || f == Flip::Both;
    const int H = map.height(), W = map.width();
    for (int r = 0; r < H; ++r) {
      for (int c = 0; c < W; ++c) {
        out.mask[std::size_t(r) * W + c] =
            map.mask[std::size_t(v ? H - 1 - r : r) * W + (h ? W - 1 - c : c)];
      }
    }
  }
  return out;
}

std::array<RasterMap, 4> mirror_variants(const RasterMap& map) {
  return {flip(map, Flip::None), flip(map, Flip::Horizontal), flip(map, Flip::Vertical),
          flip(map, Flip::Both)};
}

void write_pgm(std::ostream& out, const Grid2D& grid, double lo, double hi) {
  out << "P5\n" << grid.width << ' ' << grid.height << "\n255\n";
  const double range = hi > lo ? hi - lo : 1.0;
  for (const double v : grid.values) {
    const double t = std::clamp((v - lo) / range, 0.0, 1.0);
    out.put(static_cast<char>(static_cast<unsigned char>(std::lround(t * 255.0))));
  }
}

}  // namespace ims
