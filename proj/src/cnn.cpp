#include "ims/cnn.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>
#include <sstream>

namespace ims::cnn {
namespace {

using json = nlohmann::json;

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMatrix<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMatrix<T>>;

// Sliding-window geometry between a large image and the grid of window
// positions. For a regular convolution the image is the input; for a
// transposed one it is the output.
struct Geometry {
  int image_h, image_w;
  int grid_h, grid_w;
  int kernel, stride;
  int pad_top, pad_left;
};

Geometry same_geometry(int image_h, int image_w, int kernel, int stride) {
  Geometry g{};
  g.image_h = image_h;
  g.image_w = image_w;
  g.grid_h = (image_h + stride - 1) / stride;
  g.grid_w = (image_w + stride - 1) / stride;
  g.kernel = kernel;
  g.stride = stride;
  g.pad_top = std::max((g.grid_h - 1) * stride + kernel - image_h, 0) / 2;
  g.pad_left = std::max((g.grid_w - 1) * stride + kernel - image_w, 0) / 2;
  return g;
}

// Grid columns whose tap lands inside the image: [lo, hi).
std::pair<int, int> valid_range(int grid, int image, int stride, int tap, int pad) {
  // ix = o * stride + tap - pad must satisfy 0 <= ix < image.
  const int offset = tap - pad;
  int lo = offset >= 0 ? 0 : (-offset + stride - 1) / stride;
  int hi = image - offset <= 0 ? 0 : (image - offset + stride - 1) / stride;
  lo = std::min(lo, grid);
  hi = std::clamp(hi, lo, grid);
  return {lo, hi};
}

// cols: (channels * k * k) x ((oy1 - oy0) * grid_w), row-major, for grid rows
// [oy0, oy1).
template <typename T>
void im2col(const T* image, int channels, const Geometry& g, int oy0, int oy1, T* cols) {
  const std::size_t n = std::size_t(oy1 - oy0) * g.grid_w;
  const std::size_t plane = std::size_t(g.image_h) * g.image_w;
  for (int c = 0; c < channels; ++c) {
    for (int ky = 0; ky < g.kernel; ++ky) {
      auto [oy_lo, oy_hi] = valid_range(g.grid_h, g.image_h, g.stride, ky, g.pad_top);
      oy_lo = std::max(oy_lo, oy0);
      oy_hi = std::max(std::min(oy_hi, oy1), oy_lo);
      for (int kx = 0; kx < g.kernel; ++kx) {
        const auto [ox_lo, ox_hi] = valid_range(g.grid_w, g.image_w, g.stride, kx, g.pad_left);
        T* row = cols + (std::size_t(c * g.kernel + ky) * g.kernel + kx) * n;
        std::fill(row, row + n, T(0));
        for (int oy = oy_lo; oy < oy_hi; ++oy) {
          const int iy = oy * g.stride + ky - g.pad_top;
          const T* src = image + c * plane + std::size_t(iy) * g.image_w;
          T* dst = row + std::size_t(oy - oy0) * g.grid_w;
          if (g.stride == 1) {
            const int ix0 = ox_lo + kx - g.pad_left;
            std::copy(src + ix0, src + ix0 + (ox_hi - ox_lo), dst + ox_lo);
          } else {
            for (int ox = ox_lo; ox < ox_hi; ++ox) dst[ox] = src[ox * g.stride + kx - g.pad_left];
          }
        }
      }
    }
  }
}

// Adjoint of im2col for grid rows [oy0, oy1): scatter-adds into `image`.
template <typename T>
void col2im_add(const T* cols, int channels, const Geometry& g, int oy0, int oy1, T* image) {
  const std::size_t n = std::size_t(oy1 - oy0) * g.grid_w;
  const std::size_t plane = std::size_t(g.image_h) * g.image_w;
  for (int c = 0; c < channels; ++c) {
    for (int ky = 0; ky < g.kernel; ++ky) {
      auto [oy_lo, oy_hi] = valid_range(g.grid_h, g.image_h, g.stride, ky, g.pad_top);
      oy_lo = std::max(oy_lo, oy0);
      oy_hi = std::max(std::min(oy_hi, oy1), oy_lo);
      for (int kx = 0; kx < g.kernel; ++kx) {
        const auto [ox_lo, ox_hi] = valid_range(g.grid_w, g.image_w, g.stride, kx, g.pad_left);
        const T* row = cols + (std::size_t(c * g.kernel + ky) * g.kernel + kx) * n;
        for (int oy = oy_lo; oy < oy_hi; ++oy) {
          const int iy = oy * g.stride + ky - g.pad_top;
          T* dst = image + c * plane + std::size_t(iy) * g.image_w;
          const T* src = row + std::size_t(oy - oy0) * g.grid_w;
          for (int ox = ox_lo; ox < ox_hi; ++ox) dst[ox * g.stride + kx - g.pad_left] += src[ox];
        }
      }
    }
  }
}

// Grid rows per im2col tile, sized so one tile stays cache resident.
int tile_rows(const Geometry& g, std::size_t kk) {
  constexpr std::size_t kTileElements = std::size_t(1) << 15;
  const auto per_row = kk * std::size_t(g.grid_w);
  return static_cast<int>(std::clamp<std::size_t>(kTileElements / per_row, 1, g.grid_h));
}

template <typename T>
std::vector<T>& scratch_a() {
  thread_local std::vector<T> buffer;
  return buffer;
}

template <typename T>
std::vector<T>& scratch_b() {
  thread_local std::vector<T> buffer;
  return buffer;
}

template <typename T>
using StridedMap = Eigen::Map<RowMatrix<T>, Eigen::Unaligned, Eigen::OuterStride<>>;
template <typename T>
using ConstStridedMap = Eigen::Map<const RowMatrix<T>, Eigen::Unaligned, Eigen::OuterStride<>>;

template <typename T>
Tensor<T> conv_forward(const ConvSpec& spec, const T* weights, const T* bias, const Tensor<T>& x) {
  if (x.channels != spec.in_channels) {
    throw ShapeError(spec.name + ": expected " + std::to_string(spec.in_channels) +
                     " input channels, got " + std::to_string(x.channels));
  }
  const int k = spec.kernel, cin = spec.in_channels, cout = spec.out_channels;
  auto& cols = scratch_a<T>();
  Tensor<T> y;
  if (!spec.transpose) {
    const auto g = same_geometry(x.height, x.width, k, spec.stride);
    const auto kk = std::size_t(cin) * k * k;
    const auto plane = std::size_t(g.grid_h) * g.grid_w;
    y = Tensor<T>(g.grid_h, g.grid_w, cout);
    const int rows = tile_rows(g, kk);
    cols.resize(kk * std::size_t(rows) * g.grid_w);
    ConstMatMap<T> w(weights, cout, kk);
    for (int oy0 = 0; oy0 < g.grid_h; oy0 += rows) {
      const int oy1 = std::min(g.grid_h, oy0 + rows);
      const auto n = std::size_t(oy1 - oy0) * g.grid_w;
      im2col(x.data.data(), cin, g, oy0, oy1, cols.data());
      StridedMap<T> out(y.data.data() + std::size_t(oy0) * g.grid_w, cout, n,
                        Eigen::OuterStride<>(plane));
      out.noalias() = w * ConstMatMap<T>(cols.data(), kk, n);
    }
  } else {
    const auto g = same_geometry(x.height * spec.stride, x.width * spec.stride, k, spec.stride);
    const auto kk = std::size_t(cout) * k * k;
    const auto n = x.plane();
    cols.resize(kk * n);
    MatMap<T> c(cols.data(), kk, n);
    c.noalias() = ConstMatMap<T>(weights, cin, kk).transpose() * ConstMatMap<T>(x.data.data(), cin, n);
    y = Tensor<T>(g.image_h, g.image_w, cout);
    col2im_add(cols.data(), cout, g, 0, g.grid_h, y.data.data());
  }
  const auto plane = y.plane();
  for (int c = 0; c < cout; ++c) {
    T* p = y.data.data() + c * plane;
    const T b = bias[c];
    if (spec.relu) {
      for (std::size_t i = 0; i < plane; ++i) p[i] = std::max(p[i] + b, T(0));
    } else {
      for (std::size_t i = 0; i < plane; ++i) p[i] += b;
    }
  }
  return y;
}

// `dy` is the gradient w.r.t. the post-activation output and is masked in
// place. Writes weight and bias gradients; fills `dx` when non-null.
template <typename T>
void conv_backward(const ConvSpec& spec, const T* weights, const Tensor<T>& x, const Tensor<T>& y,
                   Tensor<T>& dy, T* dweights, T* dbias, Tensor<T>* dx) {
  const int k = spec.kernel, cin = spec.in_channels, cout = spec.out_channels;
  if (spec.relu) {
    for (std::size_t i = 0; i < dy.data.size(); ++i) {
      if (!(y.data[i] > T(0))) dy.data[i] = T(0);
    }
  }
  const auto plane = dy.plane();
  for (int c = 0; c < cout; ++c) {
    T acc = T(0);
    const T* p = dy.data.data() + c * plane;
    for (std::size_t i = 0; i < plane; ++i) acc += p[i];
    dbias[c] = acc;
  }
  auto& cols = scratch_a<T>();
  auto& dcols = scratch_b<T>();
  if (!spec.transpose) {
    const auto g = same_geometry(x.height, x.width, k, spec.stride);
    const auto kk = std::size_t(cin) * k * k;
    const int rows = tile_rows(g, kk);
    cols.resize(kk * std::size_t(rows) * g.grid_w);
    if (dx) {
      dcols.resize(cols.size());
      *dx = Tensor<T>(x.height, x.width, cin);
    }
    MatMap<T> dw(dweights, cout, kk);
    dw.setZero();
    ConstMatMap<T> w(weights, cout, kk);
    for (int oy0 = 0; oy0 < g.grid_h; oy0 += rows) {
      const int oy1 = std::min(g.grid_h, oy0 + rows);
      const auto n = std::size_t(oy1 - oy0) * g.grid_w;
      ConstStridedMap<T> dy_m(dy.data.data() + std::size_t(oy0) * g.grid_w, cout, n,
                              Eigen::OuterStride<>(plane));
      im2col(x.data.data(), cin, g, oy0, oy1, cols.data());
      dw.noalias() += dy_m * ConstMatMap<T>(cols.data(), kk, n).transpose();
      if (dx) {
        MatMap<T>(dcols.data(), kk, n).noalias() = w.transpose() * dy_m;
        col2im_add(dcols.data(), cin, g, oy0, oy1, dx->data.data());
      }
    }
  } else {
    const auto g = same_geometry(dy.height, dy.width, k, spec.stride);
    const auto kk = std::size_t(cout) * k * k;
    const auto n = x.plane();
    dcols.resize(kk * n);
    im2col(dy.data.data(), cout, g, 0, g.grid_h, dcols.data());
    ConstMatMap<T> dc(dcols.data(), kk, n);
    ConstMatMap<T> x_m(x.data.data(), cin, n);
    MatMap<T>(dweights, cin, kk).noalias() = x_m * dc.transpose();
    if (dx) {
      *dx = Tensor<T>(x.height, x.width, cin);
      MatMap<T>(dx->data.data(), cin, n).noalias() = ConstMatMap<T>(weights, cin, kk) * dc;
    }
  }
}

ConvSpec conv(std::string name, int kernel, int stride, int in, int out, bool relu = true) {
  return {std::move(name), kernel, stride, in, out, false, relu};
}

std::pair<int, int> output_hw(const ConvSpec& s, int h, int w) {
  if (s.transpose) return {h * s.stride, w * s.stride};
  return {(h + s.stride - 1) / s.stride, (w + s.stride - 1) / s.stride};
}

json spec_to_json(const ConvSpec& s) {
  return {{"name", s.name},           {"kernel", s.kernel},
          {"stride", s.stride},       {"in_channels", s.in_channels},
          {"out_channels", s.out_channels}, {"transpose", s.transpose},
          {"relu", s.relu}};
}

ConvSpec spec_from_json(const json& j) {
  ConvSpec s;
  s.name = j.at("name").get<std::string>();
  s.kernel = j.at("kernel").get<int>();
  s.stride = j.at("stride").get<int>();
  s.in_channels = j.at("in_channels").get<int>();
  s.out_channels = j.at("out_channels").get<int>();
  s.transpose = j.at("transpose").get<bool>();
  s.relu = j.at("relu").get<bool>();
  return s;
}

}  // namespace

// ---- architecture -----------------------------------------------------------

Architecture Architecture::deflection() {
  Architecture a;
  a.input_height = kRasterHeight;
  a.input_width = kRasterWidth;
  a.input_channels = 2;
  a.encoder = {
      conv("conv2d", 5, 1, 2, 8),      conv("conv2d_1", 5, 2, 8, 8),
      conv("conv2d_2", 5, 1, 8, 16),   conv("conv2d_3", 5, 2, 16, 16),
      conv("conv2d_4", 3, 1, 16, 32),  conv("conv2d_5", 3, 2, 32, 32),
      conv("conv2d_6", 3, 1, 32, 64),  conv("conv2d_7", 3, 2, 64, 64),
      conv("conv2d_8", 3, 1, 64, 64),  conv("conv2d_9", 3, 2, 64, 64),
      conv("conv2d_10", 3, 1, 64, 64), conv("conv2d_11", 3, 2, 64, 64),
  };
  a.skip_from = 9;
  a.up = {"conv2d_transpose", 3, 2, 64, 32, true, true};
  a.decoder = {
      conv("conv2d_12", 3, 1, 96, 32),
      conv("conv2d_13", 3, 1, 32, 32),
      conv("conv2d_14", 3, 1, 32, 1, false),
      conv("conv2d_15", 3, 1, 1, 1, false),
  };
  return a;
}

Architecture Architecture::toy() {
  Architecture a;
  a.input_height = 8;
  a.input_width = 8;
  a.input_channels = 2;
  a.encoder = {
      conv("toy_conv", 5, 1, 2, 3),
      conv("toy_conv_1", 5, 2, 3, 3),
      conv("toy_conv_2", 3, 1, 3, 4),
      conv("toy_conv_3", 3, 2, 4, 4),
  };
  a.skip_from = 2;
  a.up = {"toy_conv_transpose", 3, 2, 4, 2, true, true};
  a.decoder = {
      conv("toy_conv_4", 3, 1, 6, 3),
      conv("toy_conv_5", 3, 1, 3, 1, false),
      conv("toy_conv_6", 3, 1, 1, 1, false),
  };
  return a;
}

std::vector<ConvSpec> Architecture::convolutions() const {
  std::vector<ConvSpec> out(encoder);
  out.push_back(up);
  out.insert(out.end(), decoder.begin(), decoder.end());
  return out;
}

std::int64_t Architecture::parameter_count() const {
  std::int64_t total = 0;
  for (const auto& s : convolutions()) total += s.parameter_count();
  return total;
}

void Architecture::validate() const {
  if (encoder.empty() || decoder.empty()) throw ShapeError("encoder and decoder must be non-empty");
  if (skip_from >= encoder.size()) throw ShapeError("skip source out of range");
  if (!up.transpose) throw ShapeError("up layer must be a transposed convolution");
  int h = input_height, w = input_width, c = input_channels;
  int skip_h = 0, skip_w = 0, skip_c = 0;
  for (std::size_t i = 0; i < encoder.size(); ++i) {
    const auto& s = encoder[i];
    if (s.transpose || s.in_channels != c || s.kernel < 1 || s.stride < 1) {
      throw ShapeError(s.name + ": inconsistent specification");
    }
    std::tie(h, w) = output_hw(s, h, w);
    c = s.out_channels;
    if (i == skip_from) std::tie(skip_h, skip_w, skip_c) = std::tuple{h, w, c};
  }
  if (up.in_channels != c) throw ShapeError(up.name + ": inconsistent input channels");
  std::tie(h, w) = output_hw(up, h, w);
  if (h != skip_h || w != skip_w) throw ShapeError("upsampled map does not match skip source");
  c = up.out_channels + skip_c;
  for (const auto& s : decoder) {
    if (s.transpose || s.in_channels != c) throw ShapeError(s.name + ": inconsistent specification");
    std::tie(h, w) = output_hw(s, h, w);
    c = s.out_channels;
  }
}

std::vector<LayerSummary> Architecture::summary() const {
  validate();
  std::vector<LayerSummary> rows;
  int h = input_height, w = input_width, c = input_channels;
  rows.push_back({"inputs_img", "InputLayer", h, w, c, 0, ""});
  rows.push_back({"lambda", "Lambda", h, w, c, 0, "inputs_img"});
  std::string prev = "lambda";
  for (const auto& s : encoder) {
    std::tie(h, w) = output_hw(s, h, w);
    c = s.out_channels;
    rows.push_back({s.name, "Conv2D", h, w, c, s.parameter_count(), prev});
    prev = s.name;
  }
  std::tie(h, w) = output_hw(up, h, w);
  rows.push_back({up.name, "Conv2DTranspose", h, w, up.out_channels, up.parameter_count(), prev});
  c = up.out_channels + encoder[skip_from].out_channels;
  rows.push_back({"concatenate", "Concatenate", h, w, c, 0, up.name + ", " + encoder[skip_from].name});
  prev = "concatenate";
  for (const auto& s : decoder) {
    std::tie(h, w) = output_hw(s, h, w);
    c = s.out_channels;
    rows.push_back({s.name, "Conv2D", h, w, c, s.parameter_count(), prev});
    prev = s.name;
  }
  rows.push_back({"lambda_1", "Lambda", h, w, c, 0, prev});
  return rows;
}

json to_json(const Architecture& arch) {
  json enc = json::array(), dec = json::array();
  for (const auto& s : arch.encoder) enc.push_back(spec_to_json(s));
  for (const auto& s : arch.decoder) dec.push_back(spec_to_json(s));
  return {{"input", {arch.input_height, arch.input_width, arch.input_channels}},
          {"encoder", enc},
          {"skip_from", arch.skip_from},
          {"up", spec_to_json(arch.up)},
          {"decoder", dec}};
}

Architecture architecture_from_json(const json& doc) {
  Architecture a;
  const auto& in = doc.at("input");
  a.input_height = in.at(0).get<int>();
  a.input_width = in.at(1).get<int>();
  a.input_channels = in.at(2).get<int>();
  a.encoder.clear();
  for (const auto& s : doc.at("encoder")) a.encoder.push_back(spec_from_json(s));
  a.skip_from = doc.at("skip_from").get<std::size_t>();
  a.up = spec_from_json(doc.at("up"));
  for (const auto& s : doc.at("decoder")) a.decoder.push_back(spec_from_json(s));
  a.validate();
  return a;
}

// ---- network ----------------------------------------------------------------

template <typename T>
BasicNet<T>::BasicNet(Architecture arch, Scaling scaling)
    : arch_(std::move(arch)), scaling_(scaling) {
  arch_.validate();
  layers_ = arch_.convolutions();
  std::size_t offset = 0;
  for (const auto& s : layers_) {
    offsets_.push_back(offset);
    offset += static_cast<std::size_t>(s.parameter_count());
  }
  params_.assign(offset, T(0));
}

template <typename T>
Tensor<T> BasicNet<T>::forward(const Tensor<T>& input) const {
  ForwardCache<T> cache;
  return forward(input, cache);
}

template <typename T>
Tensor<T> BasicNet<T>::forward(const Tensor<T>& input, ForwardCache<T>& cache) const {
  if (input.height != arch_.input_height || input.width != arch_.input_width ||
      input.channels != arch_.input_channels) {
    throw ShapeError("input shape (" + std::to_string(input.height) + ", " +
                     std::to_string(input.width) + ", " + std::to_string(input.channels) +
                     ") does not match network input (" + std::to_string(arch_.input_height) +
                     ", " + std::to_string(arch_.input_width) + ", " +
                     std::to_string(arch_.input_channels) + ")");
  }
  cache.scaled_input = input;
  {
    const T divisor = static_cast<T>(scaling_.input_scale);
    T* ch0 = cache.scaled_input.data.data();
    for (std::size_t i = 0; i < input.plane(); ++i) ch0[i] /= divisor;
  }
  cache.outputs.clear();
  cache.outputs.reserve(layers_.size());

  const auto n_enc = arch_.encoder.size();
  const Tensor<T>* x = &cache.scaled_input;
  std::size_t li = 0;
  for (; li < n_enc; ++li) {
    cache.outputs.push_back(conv_forward(layers_[li], params_.data() + offsets_[li],
                                         params_.data() + bias_offset(li), *x));
    x = &cache.outputs.back();
  }
  cache.outputs.push_back(conv_forward(layers_[li], params_.data() + offsets_[li],
                                       params_.data() + bias_offset(li), *x));
  ++li;
  const auto& upsampled = cache.outputs.back();
  const auto& skip = cache.outputs[arch_.skip_from];
  cache.concatenated = Tensor<T>(upsampled.height, upsampled.width,
                                 upsampled.channels + skip.channels);
  std::copy(upsampled.data.begin(), upsampled.data.end(), cache.concatenated.data.begin());
  std::copy(skip.data.begin(), skip.data.end(),
            cache.concatenated.data.begin() + upsampled.data.size());
  x = &cache.concatenated;
  for (; li < layers_.size(); ++li) {
    cache.outputs.push_back(conv_forward(layers_[li], params_.data() + offsets_[li],
                                         params_.data() + bias_offset(li), *x));
    x = &cache.outputs.back();
  }
  Tensor<T> out = *x;
  const T factor = static_cast<T>(scaling_.output_scale);
  for (auto& v : out.data) v *= factor;
  return out;
}

template <typename T>
void BasicNet<T>::backward(const ForwardCache<T>& cache, const Tensor<T>& output_grad,
                           std::vector<T>& grad, Tensor<T>* input_grad) const {
  if (cache.outputs.size() != layers_.size() || !output_grad.same_shape(cache.outputs.back())) {
    throw ShapeError("output gradient does not match the cached forward pass");
  }
  grad.assign(params_.size(), T(0));
  const auto n_enc = arch_.encoder.size();
  const auto up_index = n_enc;

  Tensor<T> g = output_grad;
  const T factor = static_cast<T>(scaling_.output_scale);
  for (auto& v : g.data) v *= factor;

  auto step = [&](std::size_t li, const Tensor<T>& input, Tensor<T>& dy, bool want_dx) {
    Tensor<T> dx;
    conv_backward(layers_[li], params_.data() + offsets_[li], input, cache.outputs[li], dy,
                  grad.data() + offsets_[li], grad.data() + bias_offset(li),
                  want_dx ? &dx : nullptr);
    return dx;
  };

  for (std::size_t li = layers_.size(); li-- > up_index + 1;) {
    const Tensor<T>& input = li == up_index + 1 ? cache.concatenated : cache.outputs[li - 1];
    g = step(li, input, g, true);
  }
  // Split the concatenation gradient into the upsampled and skip parts.
  const auto& upsampled = cache.outputs[up_index];
  Tensor<T> g_up(upsampled.height, upsampled.width, upsampled.channels);
  std::copy(g.data.begin(), g.data.begin() + g_up.data.size(), g_up.data.begin());
  const auto& skip = cache.outputs[arch_.skip_from];
  Tensor<T> g_skip(skip.height, skip.width, skip.channels);
  std::copy(g.data.begin() + g_up.data.size(), g.data.end(), g_skip.data.begin());

  g = step(up_index, cache.outputs[n_enc - 1], g_up, true);
  for (std::size_t li = n_enc; li-- > 0;) {
    if (li == arch_.skip_from) {
      for (std::size_t i = 0; i < g.data.size(); ++i) g.data[i] += g_skip.data[i];
    }
    const bool first = li == 0;
    const Tensor<T>& input = first ? cache.scaled_input : cache.outputs[li - 1];
    const bool want_dx = !first || input_grad != nullptr;
    Tensor<T> dx = step(li, input, g, want_dx);
    if (first) {
      if (input_grad) {
        const T divisor = static_cast<T>(scaling_.input_scale);
        for (std::size_t i = 0; i < dx.plane(); ++i) dx.data[i] /= divisor;
        *input_grad = std::move(dx);
      }
    } else {
      g = std::move(dx);
    }
  }
}

template <typename T>
T BasicNet<T>::mse(const Tensor<T>& output, const Tensor<T>& target, Tensor<T>* grad) {
  if (!output.same_shape(target)) throw ShapeError("target shape does not match output");
  const auto n = output.data.size();
  T acc = T(0);
  if (grad) *grad = Tensor<T>(output.height, output.width, output.channels);
  for (std::size_t i = 0; i < n; ++i) {
    const T d = output.data[i] - target.data[i];
    acc += d * d;
    if (grad) grad->data[i] = T(2) * d / static_cast<T>(n);
  }
  return acc / static_cast<T>(n);
}

template class BasicNet<float>;
template class BasicNet<double>;

template <typename T>
BasicNet<T> build_network(const Architecture& arch, std::uint64_t seed, Scaling scaling) {
  BasicNet<T> net(arch, scaling);
  std::mt19937_64 rng(seed);
  const auto layers = arch.convolutions();
  for (std::size_t li = 0; li < layers.size(); ++li) {
    const auto& s = layers[li];
    const double fan_in = double(s.kernel) * s.kernel * s.in_channels;
    const double limit = std::sqrt(6.0 / fan_in);
    std::uniform_real_distribution<double> dist(-limit, limit);
    T* w = net.parameters().data() + net.weight_offset(li);
    for (std::int64_t i = 0; i < s.weight_count(); ++i) w[i] = static_cast<T>(dist(rng));
  }
  return net;
}

template BasicNet<float> build_network(const Architecture&, std::uint64_t, Scaling);
template BasicNet<double> build_network(const Architecture&, std::uint64_t, Scaling);

DeflectionNet build_network(std::uint64_t seed) {
  return build_network<float>(Architecture::deflection(), seed);
}

// ---- raster conversion and mirrored inference -------------------------------

Tensor<float> raster_to_tensor(const RasterMap& raster) {
  Tensor<float> t(raster.height(), raster.width(), 2);
  const auto plane = t.plane();
  for (std::size_t i = 0; i < plane; ++i) {
    t.data[i] = static_cast<float>(raster.values.values[i]);
    t.data[plane + i] = raster.mask[i] ? 1.0f : 0.0f;
  }
  return t;
}

Tensor<float> grid_to_tensor(const Grid2D& grid) {
  Tensor<float> t(grid.height, grid.width, 1);
  for (std::size_t i = 0; i < grid.values.size(); ++i) t.data[i] = static_cast<float>(grid.values[i]);
  return t;
}

Grid2D tensor_to_grid(const Tensor<float>& t) {
  if (t.channels != 1) throw ShapeError("expected a single-channel tensor");
  Grid2D g(t.height, t.width);
  for (std::size_t i = 0; i < g.values.size(); ++i) g.values[i] = t.data[i];
  return g;
}

Tensor<float> flip(const Tensor<float>& t, Flip f) {
  if (f == Flip::None) return t;
  const bool h = f == Flip::Horizontal || f == Flip::Both;
  const bool v = f == Flip::Vertical || f == Flip::Both;
  Tensor<float> out(t.height, t.width, t.channels);
  for (int c = 0; c < t.channels; ++c) {
    for (int r = 0; r < t.height; ++r) {
      const int sr = v ? t.height - 1 - r : r;
      for (int col = 0; col < t.width; ++col) {
        out.at(r, col, c) = t.at(sr, h ? t.width - 1 - col : col, c);
      }
    }
  }
  return out;
}

Grid2D predict_deflection(const DeflectionNet& net, const Tensor<float>& input) {
  Grid2D sum;
  for (const auto f : kAllFlips) {
    const auto out = tensor_to_grid(net.forward(flip(input, f)));
    const auto aligned = flip(out, f);
    if (sum.values.empty()) {
      sum = aligned;
    } else {
      for (std::size_t i = 0; i < sum.values.size(); ++i) sum.values[i] += aligned.values[i];
    }
  }
  for (auto& v : sum.values) v /= 4.0;
  return sum;
}

Grid2D predict_deflection(const DeflectionNet& net, const RasterMap& raster) {
  return predict_deflection(net, raster_to_tensor(raster));
}

// ---- persistence ------------------------------------------------------------

namespace {
constexpr const char* kWeightsFormat = "ims-deflection-weights";
constexpr int kWeightsVersion = 1;
}  // namespace

std::string weights_blob(const DeflectionNet& net) {
  const auto& p = net.parameters();
  std::string blob(p.size() * 4, '\0');
  for (std::size_t i = 0; i < p.size(); ++i) {
    auto bits = std::bit_cast<std::uint32_t>(p[i]);
    for (int b = 0; b < 4; ++b) blob[i * 4 + b] = static_cast<char>((bits >> (8 * b)) & 0xFFu);
  }
  return blob;
}

json weights_manifest(const DeflectionNet& net) {
  const auto& arch = net.architecture();
  const auto layers = arch.convolutions();
  json table = json::array();
  for (std::size_t li = 0; li < layers.size(); ++li) {
    const auto& s = layers[li];
    auto entry = spec_to_json(s);
    entry["weight_offset"] = net.weight_offset(li) * 4;
    entry["weight_count"] = s.weight_count();
    entry["bias_offset"] = net.bias_offset(li) * 4;
    entry["bias_count"] = s.out_channels;
    table.push_back(std::move(entry));
  }
  return {{"format", kWeightsFormat},
          {"version", kWeightsVersion},
          {"dtype", "float32-le"},
          {"architecture", to_json(arch)},
          {"layers", table},
          {"total_parameters", arch.parameter_count()},
          {"byte_count", arch.parameter_count() * 4},
          {"scaling",
           {{"input_scale", net.scaling().input_scale},
            {"output_scale", net.scaling().output_scale}}}};
}

DeflectionNet load_weights(const json& manifest, std::string_view blob) {
  try {
    if (manifest.at("format").get<std::string>() != kWeightsFormat) {
      throw TrainingError("not a deflection weights manifest");
    }
    if (manifest.at("version").get<int>() != kWeightsVersion) {
      throw TrainingError("unsupported weights manifest version");
    }
    const auto arch = architecture_from_json(manifest.at("architecture"));
    const auto expected = arch.parameter_count();
    const auto declared = manifest.at("total_parameters").get<std::int64_t>();
    if (declared != expected) {
      throw TrainingError("manifest declares " + std::to_string(declared) +
                          " parameters, architecture has " + std::to_string(expected));
    }
    std::int64_t listed = 0;
    const auto specs = arch.convolutions();
    const auto& layers = manifest.at("layers");
    if (layers.size() != specs.size()) throw TrainingError("manifest layer table size mismatch");
    for (std::size_t li = 0; li < specs.size(); ++li) {
      const auto count = layers[li].at("weight_count").get<std::int64_t>() +
                         layers[li].at("bias_count").get<std::int64_t>();
      if (count != specs[li].parameter_count()) {
        throw TrainingError("layer " + specs[li].name + " parameter count mismatch");
      }
      listed += count;
    }
    if (listed != expected) throw TrainingError("manifest layer counts do not sum to the total");
    const auto expected_bytes = static_cast<std::size_t>(expected) * 4;
    if (blob.size() != expected_bytes) {
      throw TrainingError("weights blob has " + std::to_string(blob.size()) +
                          " bytes, expected " + std::to_string(expected_bytes));
    }
    Scaling scaling;
    scaling.input_scale = manifest.at("scaling").at("input_scale").get<double>();
    scaling.output_scale = manifest.at("scaling").at("output_scale").get<double>();
    DeflectionNet net(arch, scaling);
    auto& p = net.parameters();
    for (std::size_t i = 0; i < p.size(); ++i) {
      std::uint32_t bits = 0;
      for (int b = 0; b < 4; ++b) {
        bits |= std::uint32_t(static_cast<unsigned char>(blob[i * 4 + b])) << (8 * b);
      }
      p[i] = std::bit_cast<float>(bits);
    }
    return net;
  } catch (const json::exception& e) {
    throw TrainingError(std::string("malformed weights manifest: ") + e.what());
  } catch (const ShapeError& e) {
    throw TrainingError(std::string("invalid architecture in manifest: ") + e.what());
  }
}

void save_weights(const DeflectionNet& net, const std::filesystem::path& blob_path,
                  const std::filesystem::path& manifest_path) {
  {
    std::ofstream out(blob_path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + blob_path.string());
    const auto blob = weights_blob(net);
    out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
  }
  auto manifest = weights_manifest(net);
  manifest["blob"] = blob_path.filename().string();
  std::ofstream out(manifest_path);
  if (!out) throw std::runtime_error("cannot write " + manifest_path.string());
  out << manifest.dump(2) << '\n';
}

DeflectionNet load_weights(const std::filesystem::path& blob_path,
                           const std::filesystem::path& manifest_path) {
  std::ifstream m(manifest_path);
  if (!m) throw std::runtime_error("cannot open " + manifest_path.string());
  const auto manifest = json::parse(m);
  std::ifstream b(blob_path, std::ios::binary);
  if (!b) throw std::runtime_error("cannot open " + blob_path.string());
  std::ostringstream bytes;
  bytes << b.rdbuf();
  return load_weights(manifest, bytes.str());
}

}  // namespace ims::cnn
