#include "ims/metrics.hpp"
#include "ims/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <iterator>
#include <numeric>
#include <random>

namespace ims {
namespace {

using json = nlohmann::json;

// Seed streams within one cross-validation run.
constexpr std::uint64_t kPartitionStream = 0;
constexpr std::uint64_t kFoldStream = 1000;

std::vector<double> predicted_fill(const FillTimeModel& model, const SimulationSample& s,
                                   std::uint64_t seed) {
  const MeshGraph graph(s.mesh);
  const auto pre = preprocess(s.mesh, graph, s.gates.gates, model.subsample_fraction, model.knn_k,
                              seed);
  return predict_fill_time(model, s.mesh, s.gates.gates, pre, s.gates.parameters);
}

MetricSet mean_of(const std::vector<MetricSet>& sets) {
  MetricSet m;
  for (const auto& s : sets) {
    m.mean_rmse += s.mean_rmse;
    m.mean_mae += s.mean_mae;
    m.pooled_rmse += s.pooled_rmse;
    m.pooled_mae += s.pooled_mae;
    m.pooled_mse += s.pooled_mse;
    m.point_count += s.point_count;
  }
  const double n = static_cast<double>(sets.size());
  m.mean_rmse /= n;
  m.mean_mae /= n;
  m.pooled_rmse /= n;
  m.pooled_mae /= n;
  m.pooled_mse /= n;
  return m;
}

}  // namespace

std::vector<std::vector<std::size_t>> fold_partition(std::size_t n, int folds, std::uint64_t seed) {
  if (folds < 2) throw std::invalid_argument("need at least 2 folds");
  if (n < static_cast<std::size_t>(folds)) {
    throw std::invalid_argument("dataset of " + std::to_string(n) + " samples is smaller than " +
                                std::to_string(folds) + " folds");
  }
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(perm.begin(), perm.end(), rng);
  const std::size_t base = n / folds, extra = n % folds;
  std::vector<std::vector<std::size_t>> out;
  std::size_t at = 0;
  for (int f = 0; f < folds; ++f) {
    const std::size_t size = base + (static_cast<std::size_t>(f) < extra ? 1 : 0);
    std::vector<std::size_t> part(perm.begin() + at, perm.begin() + at + size);
    std::sort(part.begin(), part.end());
    out.push_back(std::move(part));
    at += size;
  }
  return out;
}

MetricSet aggregate_metrics(const std::vector<std::vector<double>>& predictions,
                            const std::vector<std::vector<double>>& truths) {
  if (predictions.size() != truths.size() || predictions.empty()) {
    throw std::invalid_argument("metrics need matching, non-empty sample lists");
  }
  MetricSet m;
  double sq = 0.0, abs = 0.0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    m.mean_rmse += rmse(predictions[i], truths[i]);
    m.mean_mae += mae(predictions[i], truths[i]);
    for (std::size_t v = 0; v < predictions[i].size(); ++v) {
      const double d = predictions[i][v] - truths[i][v];
      sq += d * d;
      abs += std::abs(d);
    }
    m.point_count += predictions[i].size();
  }
  const double n = static_cast<double>(predictions.size());
  m.mean_rmse /= n;
  m.mean_mae /= n;
  m.pooled_mse = sq / static_cast<double>(m.point_count);
  m.pooled_rmse = std::sqrt(m.pooled_mse);
  m.pooled_mae = abs / static_cast<double>(m.point_count);
  return m;
}

json to_json(const MetricSet& m) {
  return {{"mean_rmse", m.mean_rmse},     {"mean_mae", m.mean_mae},
          {"pooled_rmse", m.pooled_rmse}, {"pooled_mae", m.pooled_mae},
          {"pooled_mse", m.pooled_mse},   {"point_count", m.point_count}};
}

json CVReport::to_json() const {
  json fold_docs = json::array();
  for (const auto& f : folds) {
    fold_docs.push_back({{"test_samples", f.test_samples},
                         {"fill_time", ims::to_json(f.fill_time)},
                         {"deflection", ims::to_json(f.deflection)},
                         {"baseline_deflection", ims::to_json(f.baseline_deflection)},
                         {"baseline_value", f.baseline_value},
                         {"cnn_loss_history", f.cnn_loss_history}});
  }
  return {{"folds", fold_docs},
          {"mean",
           {{"fill_time", ims::to_json(mean_fill_time)},
            {"deflection", ims::to_json(mean_deflection)},
            {"baseline_deflection", ims::to_json(mean_baseline_deflection)}}},
          {"pooled",
           {{"fill_time", ims::to_json(pooled_fill_time)},
            {"deflection", ims::to_json(pooled_deflection)},
            {"baseline_deflection", ims::to_json(pooled_baseline_deflection)}}},
          {"fill_time_range", fill_time_range}};
}

CVReport crossvalidate(const std::vector<SimulationSample>& samples, int folds,
                       const PipelineConfig& config, std::uint64_t seed,
                       std::vector<PointRecord>* points, const CVProgress& progress) {
  config.validate();
  for (const auto& s : samples) {
    if (!s.has_truth()) throw std::invalid_argument(s.name + ": cross-validation needs truth fields");
  }
  const auto parts = fold_partition(samples.size(), folds, derive_seed(seed, kPartitionStream));

  CVReport report;
  double lo = INFINITY, hi = -INFINITY;
  for (const auto& s : samples) {
    const auto [a, b] = std::minmax_element(s.fill_time->begin(), s.fill_time->end());
    lo = std::min(lo, *a);
    hi = std::max(hi, *b);
  }
  report.fill_time_range = hi - lo;
  if (points) points->clear();
  std::vector<std::vector<double>> all_fill_pred, all_fill_true, all_defl_pred, all_defl_true, all_baseline;

  for (int f = 0; f < folds; ++f) {
    const auto fold_seed = derive_seed(seed, kFoldStream + f);
    const auto& test = parts[f];
    std::vector<const SimulationSample*> train;
    for (std::size_t i = 0; i < samples.size(); ++i) {
      if (!std::binary_search(test.begin(), test.end(), i)) train.push_back(&samples[i]);
    }
    if (progress) {
      progress("fold " + std::to_string(f + 1) + "/" + std::to_string(folds) + ": " +
               std::to_string(train.size()) + " train, " + std::to_string(test.size()) + " test");
    }
    const auto fill_model = train_fill_time(train, config, derive_seed(fold_seed, 0));
    if (progress) progress("fold " + std::to_string(f + 1) + ": fill-time model trained");

    FoldReport fold;
    fold.test_samples = test;
    cnn::TrainResult trained;
    cnn::EpochCallback on_epoch;
    if (progress) {
      on_epoch = [&](int epoch, double loss) {
        progress("fold " + std::to_string(f + 1) + ": epoch " + std::to_string(epoch + 1) +
                 " loss " + std::to_string(loss));
      };
    }
    const auto net = train_deflection(train, fill_model, config, derive_seed(fold_seed, 1),
                                      &trained, on_epoch);
    fold.cnn_loss_history = trained.loss_history;

    double sum = 0.0;
    std::size_t count = 0;
    for (const auto* s : train) {
      for (const double d : *s->deflection) sum += d;
      count += s->deflection->size();
    }
    fold.baseline_value = sum / static_cast<double>(count);

    std::vector<std::vector<double>> fill_pred, fill_true, defl_pred, defl_true, baseline;
    for (const auto i : test) {
      const auto& s = samples[i];
      auto fill = predicted_fill(fill_model, s, derive_seed(fold_seed, 2 + i));
      auto defl = predict_deflection_field(net, s.mesh, fill);
      if (points) {
        for (VertexId v = 0; v < s.mesh.vertex_count(); ++v) {
          points->push_back({f, i, v, (*s.fill_time)[v], fill[v], (*s.deflection)[v], defl[v]});
        }
      }
      fill_pred.push_back(std::move(fill));
      fill_true.push_back(*s.fill_time);
      defl_pred.push_back(std::move(defl));
      defl_true.push_back(*s.deflection);
      baseline.emplace_back(s.mesh.vertex_count(), fold.baseline_value);
    }
    fold.fill_time = aggregate_metrics(fill_pred, fill_true);
    fold.deflection = aggregate_metrics(defl_pred, defl_true);
    fold.baseline_deflection = aggregate_metrics(baseline, defl_true);
    auto append = [](auto& to, auto& from) { std::move(from.begin(), from.end(), std::back_inserter(to)); };
    append(all_fill_pred, fill_pred);
    append(all_fill_true, fill_true);
    append(all_defl_pred, defl_pred);
    append(all_defl_true, defl_true);
    append(all_baseline, baseline);
    if (progress) {
      progress("fold " + std::to_string(f + 1) + ": fill RMSE " +
               std::to_string(fold.fill_time.pooled_rmse) + ", deflection RMSE " +
               std::to_string(fold.deflection.pooled_rmse) + " (baseline " +
               std::to_string(fold.baseline_deflection.pooled_rmse) + ")");
    }
    report.folds.push_back(std::move(fold));
  }

  std::vector<MetricSet> fill, defl, base;
  for (const auto& f : report.folds) {
    fill.push_back(f.fill_time);
    defl.push_back(f.deflection);
    base.push_back(f.baseline_deflection);
  }
  report.mean_fill_time = mean_of(fill);
  report.mean_deflection = mean_of(defl);
  report.mean_baseline_deflection = mean_of(base);
  report.pooled_fill_time = aggregate_metrics(all_fill_pred, all_fill_true);
  report.pooled_deflection = aggregate_metrics(all_defl_pred, all_defl_true);
  report.pooled_baseline_deflection = aggregate_metrics(all_baseline, all_defl_true);
  return report;
}

}  // namespace ims
