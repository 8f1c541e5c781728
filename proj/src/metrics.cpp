#include "ims/metrics.hpp"

#include <cmath>
#include <stdexcept>

namespace ims {
namespace {

void check(std::span<const double> pred, std::span<const double> truth) {
  if (pred.size() != truth.size()) {
    throw std::invalid_argument("length mismatch: " + std::to_string(pred.size()) + " predictions, " +
                                std::to_string(truth.size()) + " truth values");
  }
  if (pred.empty()) throw std::invalid_argument("metrics need at least one value");
}

}  // namespace

double mse(std::span<const double> pred, std::span<const double> truth) {
  check(pred, truth);
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred[i] - truth[i];
    acc += d * d;
  }
  return acc / static_cast<double>(pred.size());
}

double rmse(std::span<const double> pred, std::span<const double> truth) {
  return std::sqrt(mse(pred, truth));
}

double mae(std::span<const double> pred, std::span<const double> truth) {
  check(pred, truth);
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) acc += std::abs(pred[i] - truth[i]);
  return acc / static_cast<double>(pred.size());
}

}  // namespace ims
