#include "ims/gbm.hpp"
#include "ims/spatial_index.hpp"

#include <algorithm>
#include <limits>

namespace ims {

SmoothingAreas smoothing_areas(const Mesh& mesh, std::span<const VertexId> sampled, std::size_t k) {
  if (sampled.empty()) throw std::invalid_argument("smoothing needs at least one sampled point");
  if (k < 1) throw std::invalid_argument("k must be >= 1");
  const auto n = mesh.vertex_count();
  k = std::min(k, n);

  SmoothingAreas out;
  out.vertex_count = n;
  const KdTree all(mesh.vertices());
  out.areas.reserve(sampled.size());
  for (const auto s : sampled) out.areas.push_back(all.nearest(mesh.vertex(s), k));

  std::vector<Point3> sample_points;
  sample_points.reserve(sampled.size());
  for (const auto v : sampled) sample_points.push_back(mesh.vertex(v));
  const KdTree samples(sample_points);
  out.nearest_sample.resize(n);
  for (VertexId v = 0; v < n; ++v) out.nearest_sample[v] = samples.nearest_one(mesh.vertex(v));
  return out;
}

std::vector<double> smooth_predictions(const SmoothingAreas& areas,
                                       std::span<const double> predictions) {
  if (areas.areas.size() != predictions.size()) {
    throw std::invalid_argument("predictions are not aligned with sampled points");
  }
  const auto n = areas.vertex_count;
  std::vector<double> sum(n, 0.0), count(n, 0.0);
  std::vector<double> lo(n, std::numeric_limits<double>::infinity());
  std::vector<double> hi(n, -std::numeric_limits<double>::infinity());
  for (std::size_t s = 0; s < predictions.size(); ++s) {
    const double value = predictions[s];
    for (const auto v : areas.areas[s]) {
      sum[v] += value;
      count[v] += 1.0;
      lo[v] = std::min(lo[v], value);
      hi[v] = std::max(hi[v], value);
    }
  }
  std::vector<double> field(n);
  for (std::size_t v = 0; v < n; ++v) {
    if (count[v] > 0) {
      // The rounded mean may drift an ulp outside the contributions.
      field[v] = std::clamp(sum[v] / count[v], lo[v], hi[v]);
    } else {
      field[v] = predictions[areas.nearest_sample[v]];
    }
  }
  return field;
}

std::vector<double> smooth_predictions(const Mesh& mesh, std::span<const VertexId> sampled,
                                       std::span<const double> predictions, std::size_t k) {
  if (sampled.size() != predictions.size()) {
    throw std::invalid_argument("predictions are not aligned with sampled points");
  }
  return smooth_predictions(smoothing_areas(mesh, sampled, k), predictions);
}

}  // namespace ims
