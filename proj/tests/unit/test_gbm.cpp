#include "fixtures.hpp"
#include "ims/gbm.hpp"

#include <doctest.h>

#include <algorithm>
#include <limits>
#include <numeric>
#include <random>

using namespace ims;

namespace {

FeatureTable one_column(const std::vector<double>& xs) {
  FeatureTable t;
  t.width = 1;
  t.values = xs;
  return t;
}

// Exhaustive scan over all midpoints: threshold with the least total SSE,
// ties to the lower threshold.
double best_threshold(std::vector<double> xs, const std::vector<double>& ys) {
  std::vector<double> distinct = xs;
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
  double best_sse = std::numeric_limits<double>::infinity(), best_t = 0.0;
  for (std::size_t i = 0; i + 1 < distinct.size(); ++i) {
    const double t = distinct[i] + (distinct[i + 1] - distinct[i]) / 2.0;
    double sl = 0, nl = 0, sr = 0, nr = 0;
    for (std::size_t r = 0; r < xs.size(); ++r) (xs[r] <= t ? (sl += ys[r], nl += 1) : (sr += ys[r], nr += 1));
    const double ml = sl / nl, mr = sr / nr;
    double sse = 0;
    for (std::size_t r = 0; r < xs.size(); ++r) {
      const double d = ys[r] - (xs[r] <= t ? ml : mr);
      sse += d * d;
    }
    if (sse < best_sse) {
      best_sse = sse;
      best_t = t;
    }
  }
  return best_t;
}

}  // namespace

TEST_SUITE("gbm") {

TEST_CASE("one boosting round on the step example") {
  const auto x = one_column({-4, -3, -2, -1, 1, 2, 3, 4});
  const std::vector<double> y = {0, 0, 0, 0, 10, 10, 10, 10};
  GbmConfig cfg;
  cfg.n_estimators = 1;
  const auto model = fit(x, y, cfg);
  CHECK(model.base_score() == 5.0);
  const auto& tree = model.trees().front();
  REQUIRE(tree.nodes.size() == 3);
  CHECK(tree.nodes[0].threshold == 0.0);
  CHECK(tree.nodes[1].value == -5.0);
  CHECK(tree.nodes[2].value == 5.0);
  const double left = model.predict(std::vector<double>{-2.0});
  const double right = model.predict(std::vector<double>{2.0});
  CHECK(std::abs(left - 4.6) <= 1e-12);
  CHECK(std::abs(right - 5.4) <= 1e-12);
}

TEST_CASE("step model converges geometrically") {
  const auto x = one_column({-4, -3, -2, -1, 1, 2, 3, 4});
  const std::vector<double> y = {0, 0, 0, 0, 10, 10, 10, 10};
  const auto model = fit(x, y, GbmConfig{});
  // Independent loop: residual r_{k+1} = (1 - lr) r_k starting at 5.
  double r = 5.0;
  for (int i = 0; i < 200; ++i) r -= 0.08 * r;
  CHECK(std::abs(model.predict(std::vector<double>{-3.0}) - 0.0) <= 1e-6);
  CHECK(std::abs(model.predict(std::vector<double>{3.0}) - 10.0) <= 1e-6);
  CHECK(model.predict(std::vector<double>{3.0}) == doctest::Approx(10.0 - r).epsilon(1e-9));
}

TEST_CASE("constant target gives zero leaves") {
  const auto x = one_column({1, 2, 3, 4, 5});
  const std::vector<double> y(5, 3.25);
  const auto model = fit(x, y, GbmConfig{});
  CHECK(model.base_score() == 3.25);
  for (const auto& t : model.trees()) {
    for (const auto& n : t.nodes) {
      if (n.is_leaf()) CHECK(n.value == 0.0);
    }
  }
  CHECK(model.predict(std::vector<double>{100.0}) == 3.25);
}

TEST_CASE("training MSE never increases on the suite datasets") {
  for (const auto& d : test::suite_datasets()) {
    std::vector<double> history;
    GbmConfig cfg;
    cfg.n_estimators = 60;
    cfg.max_depth = 4;
    fit(d.x, d.y, cfg, &history);
    REQUIRE(history.size() == 61);
    for (std::size_t r = 1; r < history.size(); ++r) CHECK(history[r] <= history[r - 1]);
  }
}

TEST_CASE("depth-1 split equals the exhaustive optimum") {
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> u(-5, 5);
  std::normal_distribution<double> noise(0, 1);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 5 + static_cast<int>(rng() % 40);
    std::vector<double> xs(n), ys(n);
    for (int i = 0; i < n; ++i) {
      xs[i] = std::round(u(rng) * 4) / 4;
      ys[i] = (xs[i] > 1 ? 3.0 : 0.0) + noise(rng);
    }
    GbmConfig cfg;
    cfg.max_depth = 1;
    cfg.n_estimators = 1;
    const auto model = fit(one_column(xs), ys, cfg);
    const auto& root = model.trees().front().nodes.front();
    if (root.is_leaf()) continue;  // all x equal
    CHECK(root.threshold == best_threshold(xs, ys));
  }
}

TEST_CASE("row order does not change the model") {
  std::mt19937_64 rng(5);
  auto d = test::random_dataset(rng, 150, 4, true);
  GbmConfig cfg;
  cfg.n_estimators = 20;
  cfg.max_depth = 3;
  const auto a = fit(d.x, d.y, cfg);
  std::vector<std::size_t> perm(d.y.size());
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  FeatureTable x2;
  x2.width = d.x.width;
  std::vector<double> y2;
  for (auto i : perm) {
    x2.append(d.x.row(i));
    y2.push_back(d.y[i]);
  }
  const auto b = fit(x2, y2, cfg);
  CHECK(a.serialize() == b.serialize());
}

TEST_CASE("serialization roundtrip is bit exact") {
  std::mt19937_64 rng(6);
  auto d = test::random_dataset(rng, 300, 8, true);
  const auto model = fit(d.x, d.y, GbmConfig{});
  CHECK(model.trees().size() == 200);
  const auto again = GbmModel::deserialize(model.serialize());
  REQUIRE(again.trees().size() == model.trees().size());
  for (std::size_t t = 0; t < model.trees().size(); ++t) CHECK(again.trees()[t].nodes == model.trees()[t].nodes);
  CHECK(again.config() == model.config());
  std::uniform_real_distribution<double> u(-1.5, 1.5);
  std::vector<double> row(8);
  for (int i = 0; i < 1000; ++i) {
    for (auto& v : row) v = u(rng);
    REQUIRE(again.predict(row) == model.predict(row));
  }

  const auto constant = fit(one_column({1, 2}), std::vector<double>{4, 4}, GbmConfig{});
  CHECK(GbmModel::deserialize(constant.serialize()).base_score() == 4.0);
}

TEST_CASE("malformed documents are rejected") {
  std::mt19937_64 rng(7);
  auto d = test::random_dataset(rng, 50, 2, false);
  GbmConfig cfg;
  cfg.n_estimators = 5;
  const auto text = fit(d.x, d.y, cfg).serialize();
  CHECK_THROWS_AS(GbmModel::deserialize(text.substr(0, text.size() / 2)), GbmError);
  auto doc = nlohmann::json::parse(text);
  doc["version"] = 99;
  CHECK_THROWS_AS(GbmModel::from_json(doc), GbmError);
  doc = nlohmann::json::parse(text);
  doc["trees"].erase(0);
  CHECK_THROWS_AS(GbmModel::from_json(doc), GbmError);
  CHECK_THROWS_AS(GbmModel::deserialize("{}"), GbmError);
}

TEST_CASE("fit input validation") {
  FeatureTable empty;
  CHECK_THROWS_AS(fit(empty, std::vector<double>{}, GbmConfig{}), GbmError);
  const auto x = one_column({1, 2});
  CHECK_THROWS_AS(fit(x, std::vector<double>{1}, GbmConfig{}), GbmError);
  CHECK_THROWS_AS(fit(x, std::vector<double>{1, std::nan("")}, GbmConfig{}), GbmError);
  GbmConfig bad;
  bad.max_depth = 0;
  CHECK_THROWS_AS(fit(x, std::vector<double>{1, 2}, bad), GbmError);
  const auto model = fit(x, std::vector<double>{1, 2}, GbmConfig{});
  CHECK_THROWS_AS(model.predict(std::vector<double>{1, 2}), GbmError);
}

TEST_CASE("synthetic fill-time style target is fit closely") {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> d(0, 200), t(0, 2), c(-1, 1);
  FeatureTable x;
  std::vector<double> y;
  for (int i = 0; i < 800; ++i) {
    const double d1 = d(rng), d2 = d1 + d(rng) / 4, d3 = d2 + d(rng) / 4;
    const double t1 = t(rng);
    x.append(std::vector<double>{d1, d2, d3, t1, t(rng), t(rng), c(rng), c(rng)});
    y.push_back(t1 + d1 / 100.0);
  }
  std::vector<double> history;
  fit(x, y, GbmConfig{}, &history);
  CHECK(1.0 - history.back() / history.front() > 0.99);
}

}

TEST_SUITE("smoothing") {

TEST_CASE("two overlapping areas average") {
  const Mesh m({Point3(0, 0, 0), Point3(1, 0, 0), Point3(2, 0, 0), Point3(1, 1, 0)},
               {Triangle{0, 1, 3}, Triangle{1, 2, 3}});
  const std::vector<VertexId> sampled = {0, 2};
  const std::vector<double> preds = {1.0, 3.0};
  // k = 2: vertex 0 -> {0, 1}, vertex 2 -> {2, 1}. Vertex 3 is uncovered and
  // takes the nearest sample (0 and 2 tie, so the lower sample index).
  const auto field = smooth_predictions(m, sampled, preds, 2);
  CHECK(field == std::vector<double>{1.0, 2.0, 3.0, 1.0});
}

TEST_CASE("k equal to the vertex count spreads one value everywhere") {
  std::mt19937_64 rng(1);
  const auto m = test::irregular_mesh(rng, 4, 5);
  const std::vector<VertexId> sampled = {7};
  const auto field = smooth_predictions(m, sampled, std::vector<double>{2.5}, m.vertex_count());
  CHECK(std::all_of(field.begin(), field.end(), [](double v) { return v == 2.5; }));
}

TEST_CASE("field equals an accumulate-and-divide oracle") {
  std::mt19937_64 rng(2);
  const auto m = test::irregular_mesh(rng, 20, 25);
  const auto sampled = subsample(m, 60.0 / 500.0, 9);
  REQUIRE(sampled.size() == 60);
  std::uniform_real_distribution<double> u(0, 3);
  std::vector<double> preds(sampled.size());
  for (auto& p : preds) p = u(rng);
  const auto field = smooth_predictions(m, sampled, preds, 100);

  const auto n = m.vertex_count();
  std::vector<double> sum(n, 0), cnt(n, 0), lo(n, 1e300), hi(n, -1e300);
  for (std::size_t s = 0; s < sampled.size(); ++s) {
    for (auto v : knn_euclidean(m, sampled[s], 100)) {
      sum[v] += preds[s];
      cnt[v] += 1;
      lo[v] = std::min(lo[v], preds[s]);
      hi[v] = std::max(hi[v], preds[s]);
    }
  }
  for (std::size_t v = 0; v < n; ++v) {
    double expect;
    if (cnt[v] > 0) {
      expect = std::clamp(sum[v] / cnt[v], lo[v], hi[v]);
    } else {
      std::size_t best = 0;
      for (std::size_t s = 1; s < sampled.size(); ++s) {
        if (squared_distance(m.vertex(v), m.vertex(sampled[s])) <
            squared_distance(m.vertex(v), m.vertex(sampled[best]))) {
          best = s;
        }
      }
      expect = preds[best];
    }
    REQUIRE(field[v] == expect);
  }
  const auto [mn, mx] = std::minmax_element(preds.begin(), preds.end());
  for (double f : field) CHECK((f >= *mn && f <= *mx));
}

TEST_CASE("smoothing input validation") {
  std::mt19937_64 rng(3);
  const auto m = test::irregular_mesh(rng, 3, 3);
  CHECK_THROWS(smooth_predictions(m, std::vector<VertexId>{}, std::vector<double>{}, 3));
  CHECK_THROWS(smooth_predictions(m, std::vector<VertexId>{1}, std::vector<double>{1, 2}, 3));
}

}
