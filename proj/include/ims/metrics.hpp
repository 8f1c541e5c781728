#pragma once

#include <span>

namespace ims {

/// All three throw std::invalid_argument on empty or mismatched input.
double mse(std::span<const double> pred, std::span<const double> truth);
double rmse(std::span<const double> pred, std::span<const double> truth);
double mae(std::span<const double> pred, std::span<const double> truth);

}  // namespace ims
