#include "ims/cnn.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace ims::cnn {

void TrainConfig::validate() const {
  if (!(step_size > 0.0) || !std::isfinite(step_size)) throw TrainingError("step size must be > 0");
  if (batch_size < 1) throw TrainingError("batch size must be >= 1");
  if (epochs < 0) throw TrainingError("epoch count must be >= 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw TrainingError("Adam betas must lie in [0, 1)");
  }
  if (!(epsilon > 0.0)) throw TrainingError("epsilon must be > 0");
}

namespace {

struct RowRef {
  std::size_t row;
  Flip flip;
};

void check_rows(const DeflectionNet& net, const std::vector<TrainingRow>& rows) {
  const auto& arch = net.architecture();
  const auto out_shape = arch.summary().back();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    if (r.input.height != arch.input_height || r.input.width != arch.input_width ||
        r.input.channels != arch.input_channels) {
      throw ShapeError("row " + std::to_string(i) + ": input shape does not match the network");
    }
    if (r.target.height != out_shape.height || r.target.width != out_shape.width) {
      throw ShapeError("row " + std::to_string(i) + ": target shape does not match the network");
    }
    if (!(r.weight > 0.0) || !std::isfinite(r.weight)) {
      throw TrainingError("row " + std::to_string(i) + ": weight must be finite and > 0");
    }
  }
}

}  // namespace

std::vector<TrainingRow> expand_mirrors(const std::vector<TrainingRow>& rows) {
  std::vector<TrainingRow> out;
  out.reserve(rows.size() * 4);
  for (const auto& r : rows) {
    for (const auto f : kAllFlips) out.push_back({flip(r.input, f), flip(r.target, f), r.weight});
  }
  return out;
}

TrainResult train(DeflectionNet& net, const std::vector<TrainingRow>& rows,
                  const TrainConfig& config, const EpochCallback& on_epoch) {
  config.validate();
  if (rows.empty()) throw TrainingError("training set is empty");
  check_rows(net, rows);

  std::vector<RowRef> order;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (config.mirror_augment) {
      for (const auto f : kAllFlips) order.push_back({i, f});
    } else {
      order.push_back({i, Flip::None});
    }
  }

  auto& params = net.parameters();
  const auto n_params = params.size();
  std::vector<float> grad(n_params), acc(n_params);
  std::vector<float> m(n_params, 0.0f), v(n_params, 0.0f);
  const float step = static_cast<float>(config.step_size);
  const float b1 = static_cast<float>(config.beta1);
  const float b2 = static_cast<float>(config.beta2);
  const float eps = static_cast<float>(config.epsilon);
  float b1_power = 1.0f, b2_power = 1.0f;

  std::mt19937_64 rng(config.seed);
  ForwardCache<float> cache;
  Tensor<float> out_grad;
  TrainResult result;
  const auto batch = static_cast<std::size_t>(config.batch_size);

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    if (config.shuffle) std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0, epoch_weight = 0.0;
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const auto stop = std::min(order.size(), start + batch);
      std::fill(acc.begin(), acc.end(), 0.0f);
      float batch_weight = 0.0f;
      for (std::size_t i = start; i < stop; ++i) {
        const auto& ref = order[i];
        const auto& row = rows[ref.row];
        const auto input = flip(row.input, ref.flip);
        const auto target = grid_to_tensor(flip(row.target, ref.flip));
        const auto output = net.forward(input, cache);
        const float loss = DeflectionNet::mse(output, target, &out_grad);
        if (!std::isfinite(loss)) {
          throw TrainingError("non-finite loss at epoch " + std::to_string(epoch + 1));
        }
        net.backward(cache, out_grad, grad);
        const float w = static_cast<float>(row.weight);
        for (std::size_t p = 0; p < n_params; ++p) acc[p] += w * grad[p];
        batch_weight += w;
        epoch_loss += row.weight * double(loss);
        epoch_weight += row.weight;
      }
      const float scale = 1.0f / batch_weight;
      if (config.optimizer == Optimizer::Sgd) {
        for (std::size_t p = 0; p < n_params; ++p) params[p] -= step * (acc[p] * scale);
      } else {
        b1_power *= b1;
        b2_power *= b2;
        const float c1 = 1.0f - b1_power, c2 = 1.0f - b2_power;
        for (std::size_t p = 0; p < n_params; ++p) {
          const float g = acc[p] * scale;
          m[p] = b1 * m[p] + (1.0f - b1) * g;
          v[p] = b2 * v[p] + (1.0f - b2) * g * g;
          params[p] -= step * (m[p] / c1) / (std::sqrt(v[p] / c2) + eps);
        }
      }
    }
    const double mean = epoch_loss / epoch_weight;
    result.loss_history.push_back(mean);
    if (on_epoch) on_epoch(epoch, mean);
  }
  return result;
}

double evaluate(const DeflectionNet& net, const std::vector<TrainingRow>& rows) {
  if (rows.empty()) throw TrainingError("evaluation set is empty");
  check_rows(net, rows);
  double total = 0.0, weight = 0.0;
  for (const auto& r : rows) {
    const auto out = net.forward(r.input);
    total += r.weight * double(DeflectionNet::mse(out, grid_to_tensor(r.target)));
    weight += r.weight;
  }
  return total / weight;
}

}  // namespace ims::cnn
