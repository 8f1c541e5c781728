#pragma once

#include "ims/features.hpp"
#include "ims/mesh.hpp"

#include <json.hpp>

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace ims {

/// Boosting hyperparameters. Defaults are the fill-time regressor settings.
struct GbmConfig {
  double learning_rate = 0.08;
  int max_depth = 8;
  int n_estimators = 200;
  int min_samples_leaf = 1;
  std::uint64_t seed = 0;

  void validate() const;
  bool operator==(const GbmConfig&) const = default;
};

/// Binary regression tree. A node is a leaf when `feature < 0`; otherwise
/// rows with `x[feature] <= threshold` go to `left`.
struct RegressionTree {
  struct Node {
    std::int32_t feature = -1;
    double threshold = 0.0;
    std::int32_t left = -1;
    std::int32_t right = -1;
    double value = 0.0;

    bool is_leaf() const noexcept { return feature < 0; }
    bool operator==(const Node&) const = default;
  };

  std::vector<Node> nodes;  // nodes[0] is the root

  double predict(std::span<const double> row) const;
  int depth() const;
  std::size_t leaf_count() const;
};

class GbmError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// prediction = base_score + learning_rate * sum of tree outputs.
class GbmModel {
 public:
  GbmModel() = default;
  GbmModel(GbmConfig config, std::size_t feature_count, double base_score,
           std::vector<RegressionTree> trees);

  const GbmConfig& config() const noexcept { return config_; }
  std::size_t feature_count() const noexcept { return feature_count_; }
  double base_score() const noexcept { return base_score_; }
  const std::vector<RegressionTree>& trees() const noexcept { return trees_; }

  double predict(std::span<const double> row) const;
  std::vector<double> predict(const FeatureTable& table) const;

  nlohmann::json to_json() const;
  static GbmModel from_json(const nlohmann::json& doc);
  std::string serialize() const;
  static GbmModel deserialize(std::string_view text);

 private:
  GbmConfig config_;
  std::size_t feature_count_ = 0;
  double base_score_ = 0.0;
  std::vector<RegressionTree> trees_;
};

/// Squared-error gradient boosting with exact greedy splits. Candidate
/// thresholds are midpoints between consecutive distinct feature values;
/// ties go to the lower feature index, then the lower threshold. If
/// `mse_history` is given it receives the training MSE before the first round
/// and after every round.
GbmModel fit(const FeatureTable& features, std::span<const double> targets,
             const GbmConfig& config, std::vector<double>* mse_history = nullptr);

/// Neighbourhoods used by smoothing: the k Euclidean nearest vertices of each
/// sampled point, and for every vertex the index of its nearest sampled point.
struct SmoothingAreas {
  std::size_t vertex_count = 0;
  std::vector<std::vector<VertexId>> areas;
  std::vector<std::size_t> nearest_sample;
};

SmoothingAreas smoothing_areas(const Mesh& mesh, std::span<const VertexId> sampled,
                               std::size_t k = 100);

/// Copies each sampled prediction onto its area and averages overlaps.
/// Vertices outside every area take the value of the nearest sampled point.
std::vector<double> smooth_predictions(const SmoothingAreas& areas,
                                       std::span<const double> predictions);
std::vector<double> smooth_predictions(const Mesh& mesh, std::span<const VertexId> sampled,
                                       std::span<const double> predictions, std::size_t k = 100);

}  // namespace ims
