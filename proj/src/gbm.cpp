#include "ims/gbm.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace ims {
namespace {

using json = nlohmann::json;

constexpr const char* kFormat = "ims-gbm";
constexpr int kVersion = 1;

struct SplitCandidate {
  double gain = 0.0;
  std::int32_t feature = -1;
  double threshold = 0.0;
};

// Threshold t with lo <= t < hi, so "x <= t" separates the two values.
double midpoint(double lo, double hi) {
  const double mid = lo + (hi - lo) / 2.0;
  return (mid >= hi || mid < lo) ? lo : mid;
}

double sse_gain(double sum_left, double n_left, double sum_total, double n_total) {
  const double sum_right = sum_total - sum_left;
  const double n_right = n_total - n_left;
  return sum_left * sum_left / n_left + sum_right * sum_right / n_right -
         sum_total * sum_total / n_total;
}

class TreeBuilder {
 public:
  TreeBuilder(const std::vector<double>& x, std::size_t width,
              const std::vector<std::vector<std::uint32_t>>& sorted, const GbmConfig& config)
      : x_(x), width_(width), sorted_(sorted), config_(config),
        rows_(width == 0 ? 0 : x.size() / width) {}

  RegressionTree build(const std::vector<double>& residual) {
    RegressionTree tree;
    tree.nodes.assign(1, {});
    node_of_.assign(rows_, 0);
    std::vector<std::int32_t> frontier{0};

    for (int depth = 0; depth < config_.max_depth && !frontier.empty(); ++depth) {
      const auto slots = tree.nodes.size();
      std::vector<double> total_sum(slots, 0.0), total_n(slots, 0.0);
      for (std::size_t r = 0; r < rows_; ++r) {
        total_sum[node_of_[r]] += residual[r];
        total_n[node_of_[r]] += 1.0;
      }
      std::vector<char> open(slots, 0);
      for (auto nd : frontier) open[nd] = 1;

      std::vector<SplitCandidate> best(slots);
      std::vector<double> left_sum(slots), left_n(slots), last(slots);
      std::vector<char> seen(slots);
      const double min_leaf = config_.min_samples_leaf;
      for (std::size_t f = 0; f < width_; ++f) {
        std::fill(left_sum.begin(), left_sum.end(), 0.0);
        std::fill(left_n.begin(), left_n.end(), 0.0);
        std::fill(seen.begin(), seen.end(), 0);
        for (const auto r : sorted_[f]) {
          const auto nd = node_of_[r];
          if (!open[nd]) continue;
          const double value = x_[r * width_ + f];
          if (seen[nd] && value != last[nd] && left_n[nd] >= min_leaf &&
              total_n[nd] - left_n[nd] >= min_leaf) {
            const double gain = sse_gain(left_sum[nd], left_n[nd], total_sum[nd], total_n[nd]);
            if (gain > best[nd].gain) {
              best[nd] = {gain, static_cast<std::int32_t>(f), midpoint(last[nd], value)};
            }
          }
          left_sum[nd] += residual[r];
          left_n[nd] += 1.0;
          last[nd] = value;
          seen[nd] = 1;
        }
      }

      std::vector<std::int32_t> next;
      for (const auto nd : frontier) {
        if (best[nd].feature < 0) continue;
        const auto left = static_cast<std::int32_t>(tree.nodes.size());
        tree.nodes.emplace_back();
        tree.nodes.emplace_back();
        auto& node = tree.nodes[nd];
        node.feature = best[nd].feature;
        node.threshold = best[nd].threshold;
        node.left = left;
        node.right = left + 1;
        next.push_back(left);
        next.push_back(left + 1);
      }
      for (std::size_t r = 0; r < rows_; ++r) {
        const auto& node = tree.nodes[node_of_[r]];
        if (node.is_leaf()) continue;
        node_of_[r] = x_[r * width_ + node.feature] <= node.threshold ? node.left : node.right;
      }
      frontier = std::move(next);
    }

    std::vector<double> sum(tree.nodes.size(), 0.0), count(tree.nodes.size(), 0.0);
    for (std::size_t r = 0; r < rows_; ++r) {
      sum[node_of_[r]] += residual[r];
      count[node_of_[r]] += 1.0;
    }
    for (std::size_t nd = 0; nd < tree.nodes.size(); ++nd) {
      if (tree.nodes[nd].is_leaf()) tree.nodes[nd].value = count[nd] > 0 ? sum[nd] / count[nd] : 0.0;
    }
    return tree;
  }

  /// Leaf reached by each training row during the last build().
  const std::vector<std::int32_t>& leaf_of_rows() const { return node_of_; }

 private:
  const std::vector<double>& x_;
  std::size_t width_;
  const std::vector<std::vector<std::uint32_t>>& sorted_;
  const GbmConfig& config_;
  std::size_t rows_;
  std::vector<std::int32_t> node_of_;
};

double mean_squared(const std::vector<double>& residual) {
  double acc = 0.0;
  for (const double r : residual) acc += r * r;
  return acc / static_cast<double>(residual.size());
}

}  // namespace

void GbmConfig::validate() const {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    throw GbmError("learning_rate must be > 0");
  }
  if (max_depth < 1) throw GbmError("max_depth must be >= 1");
  if (n_estimators < 1) throw GbmError("n_estimators must be >= 1");
  if (min_samples_leaf < 1) throw GbmError("min_samples_leaf must be >= 1");
}

double RegressionTree::predict(std::span<const double> row) const {
  std::int32_t nd = 0;
  while (!nodes[nd].is_leaf()) {
    const auto& node = nodes[nd];
    nd = row[node.feature] <= node.threshold ? node.left : node.right;
  }
  return nodes[nd].value;
}

int RegressionTree::depth() const {
  std::vector<int> level(nodes.size(), 0);
  int deepest = 0;
  for (std::size_t nd = 0; nd < nodes.size(); ++nd) {
    deepest = std::max(deepest, level[nd]);
    if (!nodes[nd].is_leaf()) {
      level[nodes[nd].left] = level[nd] + 1;
      level[nodes[nd].right] = level[nd] + 1;
    }
  }
  return deepest;
}

std::size_t RegressionTree::leaf_count() const {
  return static_cast<std::size_t>(
      std::count_if(nodes.begin(), nodes.end(), [](const Node& n) { return n.is_leaf(); }));
}

GbmModel::GbmModel(GbmConfig config, std::size_t feature_count, double base_score,
                   std::vector<RegressionTree> trees)
    : config_(config), feature_count_(feature_count), base_score_(base_score),
      trees_(std::move(trees)) {}

double GbmModel::predict(std::span<const double> row) const {
  if (row.size() != feature_count_) {
    throw GbmError("row has " + std::to_string(row.size()) + " features, model expects " +
                   std::to_string(feature_count_));
  }
  double sum = 0.0;
  for (const auto& tree : trees_) sum += tree.predict(row);
  return base_score_ + config_.learning_rate * sum;
}

std::vector<double> GbmModel::predict(const FeatureTable& table) const {
  std::vector<double> out(table.rows());
  for (std::size_t r = 0; r < table.rows(); ++r) out[r] = predict(table.row(r));
  return out;
}

json GbmModel::to_json() const {
  json trees = json::array();
  for (const auto& tree : trees_) {
    json nodes = json::array();
    for (const auto& n : tree.nodes) {
      nodes.push_back(json::array({n.feature, n.threshold, n.left, n.right, n.value}));
    }
    trees.push_back(std::move(nodes));
  }
  return {
      {"format", kFormat},
      {"version", kVersion},
      {"config",
       {{"learning_rate", config_.learning_rate},
        {"max_depth", config_.max_depth},
        {"n_estimators", config_.n_estimators},
        {"min_samples_leaf", config_.min_samples_leaf},
        {"seed", config_.seed}}},
      {"feature_count", feature_count_},
      {"base_score", base_score_},
      {"trees", std::move(trees)},
  };
}

GbmModel GbmModel::from_json(const json& doc) {
  try {
    if (doc.at("format").get<std::string>() != kFormat) throw GbmError("not a gbm model document");
    if (const auto v = doc.at("version").get<int>(); v != kVersion) {
      throw GbmError("unsupported model version " + std::to_string(v));
    }
    GbmConfig config;
    const auto& c = doc.at("config");
    config.learning_rate = c.at("learning_rate").get<double>();
    config.max_depth = c.at("max_depth").get<int>();
    config.n_estimators = c.at("n_estimators").get<int>();
    config.min_samples_leaf = c.at("min_samples_leaf").get<int>();
    config.seed = c.at("seed").get<std::uint64_t>();
    config.validate();
    const auto width = doc.at("feature_count").get<std::size_t>();
    std::vector<RegressionTree> trees;
    for (const auto& t : doc.at("trees")) {
      RegressionTree tree;
      for (const auto& n : t) {
        if (!n.is_array() || n.size() != 5) throw GbmError("malformed tree node");
        tree.nodes.push_back({n[0].get<std::int32_t>(), n[1].get<double>(),
                              n[2].get<std::int32_t>(), n[3].get<std::int32_t>(),
                              n[4].get<double>()});
      }
      if (tree.nodes.empty()) throw GbmError("empty tree");
      const auto size = static_cast<std::int32_t>(tree.nodes.size());
      for (std::int32_t i = 0; i < size; ++i) {
        const auto& n = tree.nodes[i];
        if (n.is_leaf()) continue;
        if (static_cast<std::size_t>(n.feature) >= width || n.left <= i || n.right <= i ||
            n.left >= size || n.right >= size) {
          throw GbmError("tree node " + std::to_string(i) + " has invalid links");
        }
      }
      trees.push_back(std::move(tree));
    }
    if (trees.size() != static_cast<std::size_t>(config.n_estimators)) {
      throw GbmError("document has " + std::to_string(trees.size()) + " trees, config says " +
                     std::to_string(config.n_estimators));
    }
    return GbmModel(config, width, doc.at("base_score").get<double>(), std::move(trees));
  } catch (const json::exception& e) {
    throw GbmError(std::string("malformed gbm model: ") + e.what());
  }
}

std::string GbmModel::serialize() const { return to_json().dump(); }

GbmModel GbmModel::deserialize(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw GbmError(std::string("malformed gbm model: ") + e.what());
  }
  return from_json(doc);
}

GbmModel fit(const FeatureTable& features, std::span<const double> targets,
             const GbmConfig& config, std::vector<double>* mse_history) {
  config.validate();
  const auto width = features.width;
  const auto n = features.rows();
  if (n == 0 || width == 0) throw GbmError("empty training set");
  if (targets.size() != n) throw GbmError("target count does not match feature rows");
  for (const double v : features.values) {
    if (!std::isfinite(v)) throw GbmError("non-finite feature value");
  }
  for (const double v : targets) {
    if (!std::isfinite(v)) throw GbmError("non-finite target value");
  }

  // Canonical row order makes the model independent of input row order.
  std::vector<std::uint32_t> canon(n);
  std::iota(canon.begin(), canon.end(), 0u);
  std::stable_sort(canon.begin(), canon.end(), [&](std::uint32_t a, std::uint32_t b) {
    const auto ra = features.row(a), rb = features.row(b);
    for (std::size_t f = 0; f < width; ++f) {
      if (ra[f] != rb[f]) return ra[f] < rb[f];
    }
    return targets[a] < targets[b];
  });
  std::vector<double> x(n * width), y(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto src = features.row(canon[i]);
    std::copy(src.begin(), src.end(), x.begin() + i * width);
    y[i] = targets[canon[i]];
  }

  std::vector<std::vector<std::uint32_t>> sorted(width);
  for (std::size_t f = 0; f < width; ++f) {
    auto& order = sorted[f];
    order.resize(n);
    std::iota(order.begin(), order.end(), 0u);
    std::stable_sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) {
      return x[a * width + f] < x[b * width + f];
    });
  }

  double base = 0.0;
  for (const double v : y) base += v;
  base /= static_cast<double>(n);

  std::vector<double> tree_sum(n, 0.0), residual(n);
  for (std::size_t i = 0; i < n; ++i) residual[i] = y[i] - base;
  if (mse_history) {
    mse_history->clear();
    mse_history->push_back(mean_squared(residual));
  }

  TreeBuilder builder(x, width, sorted, config);
  std::vector<RegressionTree> trees;
  trees.reserve(config.n_estimators);
  for (int round = 0; round < config.n_estimators; ++round) {
    auto tree = builder.build(residual);
    const auto& leaf = builder.leaf_of_rows();
    for (std::size_t i = 0; i < n; ++i) {
      tree_sum[i] += tree.nodes[leaf[i]].value;
      residual[i] = y[i] - (base + config.learning_rate * tree_sum[i]);
    }
    if (mse_history) mse_history->push_back(mean_squared(residual));
    trees.push_back(std::move(tree));
  }
  return GbmModel(config, width, base, std::move(trees));
}

}  // namespace ims
