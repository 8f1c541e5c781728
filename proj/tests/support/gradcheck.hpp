#pragma once

#include "ims/cnn.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace ims::test {

inline cnn::Tensor<double> random_tensor(int h, int w, int c, std::mt19937_64& rng) {
  cnn::Tensor<double> t(h, w, c);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (auto& v : t.data) v = u(rng);
  return t;
}

// Toy variant with even kernels (asymmetric same padding).
inline cnn::Architecture even_kernel_toy() {
  cnn::Architecture a = cnn::Architecture::toy();
  a.encoder[0].kernel = 4;
  a.encoder[1].kernel = 2;
  a.up.kernel = 4;
  a.decoder[0].kernel = 2;
  return a;
}

struct FdResult {
  std::size_t checked = 0;
  std::size_t failed = 0;
  double worst = 0.0;
};

inline double rel_error(double a, double b) {
  const double scale = std::max({std::abs(a), std::abs(b), 1e-6});
  return std::abs(a - b) / scale;
}

// Central differences of the MSE loss against every parameter and input.
inline FdResult finite_difference_check(const cnn::Architecture& arch, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto net = cnn::build_network<double>(arch, seed, cnn::Scaling{1.7, 2.3});
  // Non-zero biases so that every bias gradient is exercised.
  std::uniform_real_distribution<double> ub(-0.1, 0.3);
  for (std::size_t l = 0; l < arch.convolutions().size(); ++l) {
    for (int c = 0; c < arch.convolutions()[l].out_channels; ++c) net.parameters()[net.bias_offset(l) + c] = ub(rng);
  }
  const auto input = random_tensor(arch.input_height, arch.input_width, arch.input_channels, rng);
  cnn::ForwardCache<double> cache;
  const auto out = net.forward(input, cache);
  const auto target = random_tensor(out.height, out.width, out.channels, rng);
  cnn::Tensor<double> dout;
  cnn::BasicNet<double>::mse(out, target, &dout);
  std::vector<double> grad;
  cnn::Tensor<double> dinput;
  net.backward(cache, dout, grad, &dinput);

  auto loss = [&](const cnn::Tensor<double>& x) { return cnn::BasicNet<double>::mse(net.forward(x), target); };
  const double h = 1e-6;
  FdResult r;
  auto& p = net.parameters();
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double keep = p[i];
    p[i] = keep + h;
    const double up = loss(input);
    p[i] = keep - h;
    const double down = loss(input);
    p[i] = keep;
    const double e = rel_error(grad[i], (up - down) / (2 * h));
    r.worst = std::max(r.worst, e);
    ++r.checked;
    if (e > 1e-3) ++r.failed;
  }
  for (std::size_t i = 0; i < input.data.size(); ++i) {
    auto x = input;
    x.data[i] += h;
    const double up = loss(x);
    x.data[i] -= 2 * h;
    const double down = loss(x);
    const double e = rel_error(dinput.data[i], (up - down) / (2 * h));
    r.worst = std::max(r.worst, e);
    ++r.checked;
    if (e > 1e-3) ++r.failed;
  }
  return r;
}

}  // namespace ims::test
