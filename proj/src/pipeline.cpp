#include "ims/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>

namespace ims {
namespace {

using json = nlohmann::json;
using Clock = std::chrono::steady_clock;

double seconds(Clock::time_point a, Clock::time_point b) {
  return std::chrono::duration<double>(b - a).count();
}

constexpr const char* kFillModelFormat = "ims-filltime-model";
constexpr int kFillModelVersion = 1;

}  // namespace

void PipelineConfig::validate() const {
  if (!(subsample_fraction > 0.0 && subsample_fraction <= 1.0)) {
    throw std::invalid_argument("subsample_fraction must lie in (0, 1]");
  }
  if (knn_k < 1) throw std::invalid_argument("knn_k must be >= 1");
  gbm.validate();
  cnn.validate();
}

json to_json(const PipelineConfig& c) {
  return {{"subsample_fraction", c.subsample_fraction},
          {"knn_k", c.knn_k},
          {"append_parameters", c.features.append_parameters},
          {"gbm",
           {{"learning_rate", c.gbm.learning_rate},
            {"max_depth", c.gbm.max_depth},
            {"n_estimators", c.gbm.n_estimators},
            {"min_samples_leaf", c.gbm.min_samples_leaf},
            {"seed", c.gbm.seed}}},
          {"cnn",
           {{"optimizer", c.cnn.optimizer == cnn::Optimizer::Adam ? "adam" : "sgd"},
            {"step_size", c.cnn.step_size},
            {"batch_size", c.cnn.batch_size},
            {"epochs", c.cnn.epochs},
            {"mirror_augment", c.cnn.mirror_augment},
            {"shuffle", c.cnn.shuffle},
            {"beta1", c.cnn.beta1},
            {"beta2", c.cnn.beta2},
            {"epsilon", c.cnn.epsilon}}},
          {"smoothing_seed", c.smoothing_seed}};
}

PipelineConfig pipeline_config_from_json(const json& doc, PipelineConfig c) {
  c.subsample_fraction = doc.value("subsample_fraction", c.subsample_fraction);
  c.knn_k = doc.value("knn_k", c.knn_k);
  c.features.append_parameters = doc.value("append_parameters", c.features.append_parameters);
  if (doc.contains("gbm")) {
    const auto& g = doc.at("gbm");
    c.gbm.learning_rate = g.value("learning_rate", c.gbm.learning_rate);
    c.gbm.max_depth = g.value("max_depth", c.gbm.max_depth);
    c.gbm.n_estimators = g.value("n_estimators", c.gbm.n_estimators);
    c.gbm.min_samples_leaf = g.value("min_samples_leaf", c.gbm.min_samples_leaf);
    c.gbm.seed = g.value("seed", c.gbm.seed);
  }
  if (doc.contains("cnn")) {
    const auto& n = doc.at("cnn");
    const auto opt = n.value("optimizer", std::string("adam"));
    if (opt != "adam" && opt != "sgd") throw std::invalid_argument("optimizer must be adam or sgd");
    c.cnn.optimizer = opt == "adam" ? cnn::Optimizer::Adam : cnn::Optimizer::Sgd;
    c.cnn.step_size = n.value("step_size", c.cnn.step_size);
    c.cnn.batch_size = n.value("batch_size", c.cnn.batch_size);
    c.cnn.epochs = n.value("epochs", c.cnn.epochs);
    c.cnn.mirror_augment = n.value("mirror_augment", c.cnn.mirror_augment);
    c.cnn.shuffle = n.value("shuffle", c.cnn.shuffle);
    c.cnn.beta1 = n.value("beta1", c.cnn.beta1);
    c.cnn.beta2 = n.value("beta2", c.cnn.beta2);
    c.cnn.epsilon = n.value("epsilon", c.cnn.epsilon);
  }
  c.smoothing_seed = doc.value("smoothing_seed", c.smoothing_seed);
  c.validate();
  return c;
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
  std::uint64_t z = seed + (index + 1) * 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

// ---- fill time --------------------------------------------------------------

Preprocessed preprocess(const Mesh& mesh, const MeshGraph& graph, const std::vector<Gate>& gates,
                        double subsample_fraction, std::size_t knn_k, std::uint64_t seed,
                        const DistanceLookup& distances) {
  validate_gates(mesh, gates);
  Preprocessed pre;
  if (distances) {
    std::vector<std::vector<double>> rows;
    rows.reserve(gates.size());
    for (const auto& g : gates) rows.push_back(distances(g.node_id));
    pre.distances = GateDistanceTable(mesh.vertex_count(), std::move(rows));
  } else {
    pre.distances = GateDistanceTable::compute(graph, gates);
  }
  pre.sampled = subsample(mesh, subsample_fraction, seed);
  if (pre.sampled.empty()) {
    throw std::invalid_argument("subsample is empty: mesh has too few vertices for fraction " +
                                std::to_string(subsample_fraction));
  }
  pre.areas = smoothing_areas(mesh, pre.sampled, knn_k);
  return pre;
}

json FillTimeModel::to_json() const {
  return {{"format", kFillModelFormat},
          {"version", kFillModelVersion},
          {"subsample_fraction", subsample_fraction},
          {"knn_k", knn_k},
          {"append_parameters", features.append_parameters},
          {"gbm", gbm.to_json()}};
}

FillTimeModel FillTimeModel::from_json(const json& doc) {
  try {
    if (doc.at("format").get<std::string>() != kFillModelFormat) {
      throw GbmError("not a fill-time model document");
    }
    if (doc.at("version").get<int>() != kFillModelVersion) {
      throw GbmError("unsupported fill-time model version");
    }
    FillTimeModel m;
    m.subsample_fraction = doc.at("subsample_fraction").get<double>();
    m.knn_k = doc.at("knn_k").get<std::size_t>();
    m.features.append_parameters = doc.at("append_parameters").get<bool>();
    m.gbm = GbmModel::from_json(doc.at("gbm"));
    const std::size_t width = GateFeatureVector::kWidth + (m.features.append_parameters ? 7 : 0);
    if (m.gbm.feature_count() != width) throw GbmError("model feature count does not match options");
    return m;
  } catch (const json::exception& e) {
    throw GbmError(std::string("malformed fill-time model: ") + e.what());
  }
}

void FillTimeModel::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << to_json().dump() << '\n';
}

FillTimeModel FillTimeModel::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw GbmError(path.string() + ": " + e.what());
  }
  return from_json(doc);
}

namespace {

void require_truth(const SimulationSample& s) {
  if (!s.has_truth()) {
    throw std::invalid_argument(s.name + ": sample has no ground-truth fields (prediction-only)");
  }
}

}  // namespace

FillTimeTrainingSet fill_time_training_set(const std::vector<const SimulationSample*>& samples,
                                           const PipelineConfig& config, std::uint64_t seed) {
  if (samples.empty()) throw std::invalid_argument("no training samples");
  FillTimeTrainingSet set;
  bool first = true;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& s = *samples[i];
    require_truth(s);
    const MeshGraph graph(s.mesh);
    const auto table = GateDistanceTable::compute(graph, s.gates.gates);
    const auto points = subsample(s.mesh, config.subsample_fraction, derive_seed(seed, i));
    auto rows = extract_features(s.mesh, s.gates.gates, table, points, config.features,
                                 s.gates.parameters);
    if (first) {
      set.features = std::move(rows);
      first = false;
    } else {
      set.features.values.insert(set.features.values.end(), rows.values.begin(), rows.values.end());
    }
    for (const auto v : points) set.targets.push_back((*s.fill_time)[v]);
  }
  return set;
}

FillTimeModel train_fill_time(const std::vector<const SimulationSample*>& samples,
                              const PipelineConfig& config, std::uint64_t seed,
                              std::vector<double>* mse_history) {
  config.validate();
  const auto set = fill_time_training_set(samples, config, seed);
  FillTimeModel model;
  model.gbm = fit(set.features, set.targets, config.gbm, mse_history);
  model.features = config.features;
  model.subsample_fraction = config.subsample_fraction;
  model.knn_k = config.knn_k;
  return model;
}

std::vector<double> predict_fill_time(const FillTimeModel& model, const Mesh& mesh,
                                      const std::vector<Gate>& gates, const Preprocessed& pre,
                                      const TechnologicalParameters& parameters) {
  const auto table = extract_features(mesh, gates, pre.distances, pre.sampled, model.features,
                                      parameters);
  const auto values = model.gbm.predict(table);
  return smooth_predictions(pre.areas, values);
}

// ---- deflection -------------------------------------------------------------

std::vector<cnn::TrainingRow> deflection_rows(const Mesh& mesh,
                                              std::span<const double> predicted_fill,
                                              std::span<const double> true_fill,
                                              std::span<const double> true_deflection) {
  const auto plane = fit_plane(mesh.vertices());
  const auto [truth_raster, corr] = project(mesh, true_fill, plane);
  const auto pred_raster = project_like(truth_raster, mesh, corr, predicted_fill);
  const auto target = downsample_masked(project_like(truth_raster, mesh, corr, true_deflection));
  std::vector<cnn::TrainingRow> rows;
  rows.push_back({cnn::raster_to_tensor(pred_raster), target, 1.0});
  rows.push_back({cnn::raster_to_tensor(truth_raster), target, 1.0});
  return rows;
}

std::vector<double> predict_deflection_field(const cnn::DeflectionNet& net, const Mesh& mesh,
                                             std::span<const double> fill_time) {
  const auto plane = fit_plane(mesh.vertices());
  const auto [raster, corr] = project(mesh, fill_time, plane);
  const auto low = cnn::predict_deflection(net, raster);
  return reproject(upscale_bilinear(low, raster.height(), raster.width()), corr);
}

cnn::Scaling scaling_from_samples(const std::vector<const SimulationSample*>& samples) {
  double fill_max = 0.0, defl_max = 0.0;
  for (const auto* s : samples) {
    require_truth(*s);
    for (const double t : *s->fill_time) fill_max = std::max(fill_max, t);
    for (const double d : *s->deflection) defl_max = std::max(defl_max, d);
  }
  return {fill_max > 0.0 ? fill_max : 1.0, defl_max > 0.0 ? defl_max : 1.0};
}

cnn::DeflectionNet train_deflection(const std::vector<const SimulationSample*>& samples,
                                    const FillTimeModel& fill_model, const PipelineConfig& config,
                                    std::uint64_t seed, cnn::TrainResult* result,
                                    const cnn::EpochCallback& on_epoch) {
  config.validate();
  if (samples.empty()) throw std::invalid_argument("no training samples");
  std::vector<cnn::TrainingRow> rows;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& s = *samples[i];
    require_truth(s);
    const MeshGraph graph(s.mesh);
    const auto pre = preprocess(s.mesh, graph, s.gates.gates, fill_model.subsample_fraction,
                                fill_model.knn_k, derive_seed(derive_seed(seed, 0), i));
    const auto fill = predict_fill_time(fill_model, s.mesh, s.gates.gates, pre, s.gates.parameters);
    for (auto& r : deflection_rows(s.mesh, fill, *s.fill_time, *s.deflection)) {
      rows.push_back(std::move(r));
    }
  }
  auto net = cnn::build_network<float>(cnn::Architecture::deflection(), derive_seed(seed, 1),
                                       scaling_from_samples(samples));
  auto train_config = config.cnn;
  train_config.seed = derive_seed(seed, 2);
  auto trained = cnn::train(net, rows, train_config, on_epoch);
  if (result) *result = std::move(trained);
  return net;
}

// ---- end to end -------------------------------------------------------------

namespace {

// Stages are measured between consecutive timestamps, so the total is their
// sum. `t0` marks the start of pre-processing.
Prediction run_stages(Clock::time_point t0, const FillTimeModel& fill_model,
                      const cnn::DeflectionNet* net, const Mesh& mesh, const MeshGraph& graph,
                      const GateSet& gates, const PredictOptions& options,
                      const DistanceLookup& distances) {
  Prediction out;
  const auto pre = preprocess(mesh, graph, gates.gates, fill_model.subsample_fraction,
                              fill_model.knn_k, options.seed, distances);
  const auto t1 = Clock::now();
  out.fill_time = predict_fill_time(fill_model, mesh, gates.gates, pre, gates.parameters);
  const auto t2 = Clock::now();
  if (options.deflection && net != nullptr) {
    out.deflection = predict_deflection_field(*net, mesh, out.fill_time);
  }
  const auto t3 = Clock::now();
  out.timings.preprocessing = seconds(t0, t1);
  out.timings.fill_time = seconds(t1, t2);
  out.timings.deflection = seconds(t2, t3);
  out.timings.total = out.timings.preprocessing + out.timings.fill_time + out.timings.deflection;
  return out;
}

}  // namespace

Prediction predict(const FillTimeModel& fill_model, const cnn::DeflectionNet* net,
                   const Mesh& mesh, const MeshGraph& graph, const GateSet& gates,
                   const PredictOptions& options, const DistanceLookup& distances) {
  return run_stages(Clock::now(), fill_model, net, mesh, graph, gates, options, distances);
}

Prediction predict(const FillTimeModel& fill_model, const cnn::DeflectionNet* net,
                   const Mesh& mesh, const GateSet& gates, const PredictOptions& options) {
  const auto t0 = Clock::now();
  const MeshGraph graph(mesh);
  return run_stages(t0, fill_model, net, mesh, graph, gates, options, {});
}

Prediction predict_from_text(std::string_view mesh_text, const nlohmann::json& gates_doc,
                             const FillTimeModel& fill_model, const cnn::DeflectionNet* net,
                             const PredictOptions& options) {
  const auto t0 = Clock::now();
  const auto mesh = parse_mesh(mesh_text);
  const auto gates = gates_from_json(gates_doc, mesh);
  const MeshGraph graph(mesh);
  return run_stages(t0, fill_model, net, mesh, graph, gates, options, {});
}

}  // namespace ims
