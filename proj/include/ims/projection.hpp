#pragma once

#include "ims/mesh.hpp"

#include <array>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <utility>
#include <vector>

namespace ims {

/// Least-squares plane through a point set. (basis_u, basis_v, normal) is a
/// right-handed orthonormal frame; basis_u is the dominant in-plane direction.
struct ProjectionPlane {
  Point3 origin = Point3::Zero();
  Point3 basis_u = Point3::UnitX();
  Point3 basis_v = Point3::UnitY();
  Point3 normal = Point3::UnitZ();

  /// Coordinates of p in the (basis_u, basis_v) frame, relative to origin.
  Eigen::Vector2d to_plane(const Point3& p) const;
  /// Signed distance of p along the normal.
  double height(const Point3& p) const;
};

class ProjectionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Plane through the centroid whose normal is the smallest-eigenvalue
/// eigenvector of the coordinate covariance. Each axis vector is signed so its
/// largest-magnitude component is positive (ties to the earlier axis).
ProjectionPlane fit_plane(std::span<const Point3> points);

/// Dense single-channel image, row-major.
struct Grid2D {
  int height = 0;
  int width = 0;
  std::vector<double> values;

  Grid2D() = default;
  Grid2D(int h, int w, double fill = 0.0) : height(h), width(w), values(std::size_t(h) * w, fill) {}

  double& at(int r, int c) { return values[std::size_t(r) * width + c]; }
  double at(int r, int c) const { return values[std::size_t(r) * width + c]; }
  bool operator==(const Grid2D&) const = default;
};

struct PixelIndex {
  int row = 0;
  int col = 0;
  bool operator==(const PixelIndex&) const = default;
};

/// Vertex to pixel map recorded at projection time.
using Correspondence = std::vector<PixelIndex>;

inline constexpr int kRasterHeight = 384;
inline constexpr int kRasterWidth = 768;
inline constexpr int kRasterMargin = 4;
inline constexpr int kTargetHeight = 12;
inline constexpr int kTargetWidth = 24;

/// Two-channel projection: `values` holds the per-pixel field (0 outside the
/// mask), `mask` the silhouette. Continuous pixel coordinates of a plane point
/// (a, b) are col = a / scale + offset_col, row = b / scale + offset_row.
struct RasterMap {
  Grid2D values;
  std::vector<std::uint8_t> mask;
  double scale = 1.0;  // mm per pixel
  double offset_col = 0.0;
  double offset_row = 0.0;
  ProjectionPlane plane;

  int height() const noexcept { return values.height; }
  int width() const noexcept { return values.width; }
  bool masked(int r, int c) const { return mask[std::size_t(r) * values.width + c] != 0; }
  std::size_t mask_count() const;
};

struct RasterSize {
  int height = kRasterHeight;
  int width = kRasterWidth;
  int margin = kRasterMargin;
};

/// Rasterizes the mesh silhouette and the per-vertex field onto the plane.
/// The mask is the union of triangle coverage (pixel centres, top-left rule)
/// and the pixels that vertices land on. Each vertex pixel carries the mean of
/// its vertices' values; remaining mask pixels copy the nearest valued pixel
/// (breadth-first).
std::pair<RasterMap, Correspondence> project(const Mesh& mesh, std::span<const double> field,
                                             const ProjectionPlane& plane,
                                             const RasterSize& size = {});

/// Same framing and mask, different field: reuses a previous projection.
RasterMap project_like(const RasterMap& frame, const Mesh& mesh, const Correspondence& corr,
                       std::span<const double> field);

/// Corner-aligned bilinear resampling to out_height x out_width.
Grid2D upscale_bilinear(const Grid2D& low, int out_height = kRasterHeight,
                        int out_width = kRasterWidth);

/// Block average of the masked pixels of `raster` onto a coarse grid. Blocks
/// with no mask pixel copy the nearest block that has one.
Grid2D downsample_masked(const RasterMap& raster, int out_height = kTargetHeight,
                         int out_width = kTargetWidth);

std::vector<double> reproject(const Grid2D& image, const Correspondence& corr);

enum class Flip { None = 0, Horizontal = 1, Vertical = 2, Both = 3 };
inline constexpr Flip kAllFlips[] = {Flip::None, Flip::Horizontal, Flip::Vertical, Flip::Both};

Grid2D flip(const Grid2D& grid, Flip f);
RasterMap flip(const RasterMap& map, Flip f);
/// Identity, flip-horizontal, flip-vertical, flip-both.
std::array<RasterMap, 4> mirror_variants(const RasterMap& map);

/// Binary portable graymap (P5) scaled so [lo, hi] maps to [0, 255].
void write_pgm(std::ostream& out, const Grid2D& grid, double lo, double hi);

}  // namespace ims
