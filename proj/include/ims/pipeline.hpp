#pragma once

#include "ims/cnn.hpp"
#include "ims/features.hpp"
#include "ims/gbm.hpp"
#include "ims/projection.hpp"
#include "ims/synth.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace ims {

struct PipelineConfig {
  double subsample_fraction = 0.125;
  std::size_t knn_k = 100;
  FeatureOptions features;
  GbmConfig gbm;
  cnn::TrainConfig cnn;
  /// Seeds the per-sample point subsample at prediction time.
  std::uint64_t smoothing_seed = 0;

  void validate() const;
};

nlohmann::json to_json(const PipelineConfig& config);
PipelineConfig pipeline_config_from_json(const nlohmann::json& doc, PipelineConfig base = {});

/// Stream of independent seeds: the i-th value of a SplitMix64 sequence
/// started at `seed`.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index);

// ---- fill time --------------------------------------------------------------

/// Geometry work that does not depend on the models.
struct Preprocessed {
  std::vector<VertexId> sampled;
  GateDistanceTable distances;
  SmoothingAreas areas;
};

/// Per-gate geodesic rows; the default runs Dijkstra from the gate node.
using DistanceLookup = std::function<std::vector<double>(VertexId)>;

Preprocessed preprocess(const Mesh& mesh, const MeshGraph& graph, const std::vector<Gate>& gates,
                        double subsample_fraction, std::size_t knn_k, std::uint64_t seed,
                        const DistanceLookup& distances = {});

/// GBM plus the feature settings it was trained with.
struct FillTimeModel {
  GbmModel gbm;
  FeatureOptions features;
  double subsample_fraction = 0.125;
  std::size_t knn_k = 100;

  nlohmann::json to_json() const;
  static FillTimeModel from_json(const nlohmann::json& doc);
  void save(const std::filesystem::path& path) const;
  static FillTimeModel load(const std::filesystem::path& path);
};

/// Per-sample subsample (seed derive_seed(seed, i)), features, and true fill
/// times of the sampled points, stacked in sample order.
struct FillTimeTrainingSet {
  FeatureTable features;
  std::vector<double> targets;
};
FillTimeTrainingSet fill_time_training_set(const std::vector<const SimulationSample*>& samples,
                                           const PipelineConfig& config, std::uint64_t seed);

FillTimeModel train_fill_time(const std::vector<const SimulationSample*>& samples,
                              const PipelineConfig& config, std::uint64_t seed,
                              std::vector<double>* mse_history = nullptr);

/// Features and GBM prediction on the sampled points, then kNN smoothing.
std::vector<double> predict_fill_time(const FillTimeModel& model, const Mesh& mesh,
                                      const std::vector<Gate>& gates, const Preprocessed& pre,
                                      const TechnologicalParameters& parameters = {});

// ---- deflection -------------------------------------------------------------

/// Inputs for the deflection network built from one sample: the predicted and
/// the true fill-time rasters, both paired with the true deflection target.
std::vector<cnn::TrainingRow> deflection_rows(const Mesh& mesh,
                                              std::span<const double> predicted_fill,
                                              std::span<const double> true_fill,
                                              std::span<const double> true_deflection);

/// Mirror-averaged network output, upscaled and read back at every vertex.
std::vector<double> predict_deflection_field(const cnn::DeflectionNet& net, const Mesh& mesh,
                                             std::span<const double> fill_time);

/// Training-set maxima of fill time and deflection (1 when not positive).
cnn::Scaling scaling_from_samples(const std::vector<const SimulationSample*>& samples);

// ---- end to end -------------------------------------------------------------

struct StageTimings {
  double preprocessing = 0.0;  // s
  double fill_time = 0.0;
  double deflection = 0.0;
  double total = 0.0;
};

struct Prediction {
  std::vector<double> fill_time;
  std::optional<std::vector<double>> deflection;
  StageTimings timings;
};

struct PredictOptions {
  bool fill_time = true;
  bool deflection = true;
  std::uint64_t seed = 0;
};

/// Prediction on an in-memory mesh; the graph is built here and counted as
/// pre-processing. Deflection needs a network; it is skipped when `net` is
/// null or the option is off.
Prediction predict(const FillTimeModel& fill_model, const cnn::DeflectionNet* net,
                   const Mesh& mesh, const GateSet& gates, const PredictOptions& options);

/// Same with a prebuilt graph and optional cached geodesic rows.
Prediction predict(const FillTimeModel& fill_model, const cnn::DeflectionNet* net,
                   const Mesh& mesh, const MeshGraph& graph, const GateSet& gates,
                   const PredictOptions& options, const DistanceLookup& distances = {});

/// Same from mesh file text and a gates document; parsing counts as
/// pre-processing.
Prediction predict_from_text(std::string_view mesh_text, const nlohmann::json& gates_doc,
                             const FillTimeModel& fill_model, const cnn::DeflectionNet* net,
                             const PredictOptions& options);

// ---- cross-validation -------------------------------------------------------

/// Test-set index lists: a seeded shuffle cut into `folds` contiguous parts,
/// the first n mod folds parts one sample larger.
std::vector<std::vector<std::size_t>> fold_partition(std::size_t n, int folds, std::uint64_t seed);

struct MetricSet {
  double mean_rmse = 0.0;  // mean over samples of per-sample RMSE
  double mean_mae = 0.0;
  double pooled_rmse = 0.0;  // over all points merged
  double pooled_mae = 0.0;
  double pooled_mse = 0.0;
  std::size_t point_count = 0;
};

MetricSet aggregate_metrics(const std::vector<std::vector<double>>& predictions,
                            const std::vector<std::vector<double>>& truths);

struct FoldReport {
  std::vector<std::size_t> test_samples;
  MetricSet fill_time;
  MetricSet deflection;
  MetricSet baseline_deflection;  // constant mean training deflection
  double baseline_value = 0.0;
  std::vector<double> cnn_loss_history;
};

struct CVReport {
  std::vector<FoldReport> folds;
  MetricSet mean_fill_time;  // fold averages
  MetricSet mean_deflection;
  MetricSet mean_baseline_deflection;
  MetricSet pooled_fill_time;  // every test point of every fold merged
  MetricSet pooled_deflection;
  MetricSet pooled_baseline_deflection;
  double fill_time_range = 0.0;  // max - min over the whole dataset

  nlohmann::json to_json() const;
};

struct PointRecord {
  int fold;
  std::size_t sample;
  VertexId vertex;
  double true_fill, pred_fill, true_deflection, pred_deflection;
};

using CVProgress = std::function<void(const std::string& message)>;

CVReport crossvalidate(const std::vector<SimulationSample>& samples, int folds,
                       const PipelineConfig& config, std::uint64_t seed,
                       std::vector<PointRecord>* points = nullptr,
                       const CVProgress& progress = {});

// ---- deflection training over a dataset --------------------------------------

/// Predicts fill time for each sample with `fill_model`, builds the rows, sets
/// the scaling from the samples, and trains a fresh network. `seed` drives the
/// point subsample, the initial weights and the batch order; `config.cnn.seed`
/// is not used.
cnn::DeflectionNet train_deflection(const std::vector<const SimulationSample*>& samples,
                                    const FillTimeModel& fill_model, const PipelineConfig& config,
                                    std::uint64_t seed, cnn::TrainResult* result = nullptr,
                                    const cnn::EpochCallback& on_epoch = {});

// ---- benchmark --------------------------------------------------------------

struct MachineInfo {
  std::string cpu;
  unsigned hardware_threads = 0;
  std::string compiler;
};
MachineInfo machine_info();

struct BenchmarkRecord {
  StageTimings timings;
  std::size_t vertex_count = 0;
  MachineInfo machine;

  nlohmann::json to_json() const;
};

/// Times one full prediction from mesh text to per-vertex fields. The stage
/// times are contiguous and sum to the total.
BenchmarkRecord benchmark(const FillTimeModel& fill_model, const cnn::DeflectionNet& net,
                          std::string_view mesh_text, const nlohmann::json& gates_doc,
                          std::uint64_t seed);

nlohmann::json to_json(const MetricSet& m);

}  // namespace ims
