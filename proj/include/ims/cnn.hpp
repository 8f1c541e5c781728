#pragma once

#include "ims/projection.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace ims::cnn {

/// Dense activation tensor of shape (height, width, channels), stored
/// channel-major: index = (c * height + r) * width + col.
template <typename T>
struct Tensor {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<T> data;

  Tensor() = default;
  Tensor(int h, int w, int c, T fill = T(0))
      : height(h), width(w), channels(c), data(std::size_t(h) * w * c, fill) {}

  std::size_t plane() const noexcept { return std::size_t(height) * width; }
  T& at(int r, int col, int c) { return data[(std::size_t(c) * height + r) * width + col]; }
  T at(int r, int col, int c) const { return data[(std::size_t(c) * height + r) * width + col]; }
  bool same_shape(const Tensor& o) const {
    return height == o.height && width == o.width && channels == o.channels;
  }
  bool operator==(const Tensor&) const = default;
};

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// One convolution. Padding is always "same": a strided convolution produces
/// ceil(in / stride) outputs, a transposed one in * stride.
struct ConvSpec {
  std::string name;
  int kernel = 3;
  int stride = 1;
  int in_channels = 1;
  int out_channels = 1;
  bool transpose = false;
  bool relu = true;

  std::int64_t weight_count() const {
    return std::int64_t(kernel) * kernel * in_channels * out_channels;
  }
  std::int64_t parameter_count() const { return weight_count() + out_channels; }
};

struct LayerSummary {
  std::string name;
  std::string type;
  int height = 0, width = 0, channels = 0;
  std::int64_t params = 0;
  std::string connected_to;
};

/// Encoder chain, one transposed convolution back up to the resolution of
/// encoder layer `skip_from`, channel concatenation [upsampled, skip], then
/// the decoder chain.
struct Architecture {
  int input_height = kRasterHeight;
  int input_width = kRasterWidth;
  int input_channels = 2;
  std::vector<ConvSpec> encoder;
  std::size_t skip_from = 0;
  ConvSpec up;
  std::vector<ConvSpec> decoder;

  /// The deflection network: 384x768x2 in, 12x24x1 out, 284,363 parameters.
  static Architecture deflection();
  /// Small network with every layer kind, input 8x8x2, output 4x4x1.
  static Architecture toy();

  /// Layers in execution order: encoder, up, decoder.
  std::vector<ConvSpec> convolutions() const;
  std::vector<LayerSummary> summary() const;
  std::int64_t parameter_count() const;
  void validate() const;
};

nlohmann::json to_json(const Architecture& arch);
Architecture architecture_from_json(const nlohmann::json& doc);

/// Fixed affine maps around the convolutions: channel 0 of the input is
/// divided by `input_scale`; the network output is multiplied by
/// `output_scale`.
struct Scaling {
  double input_scale = 1.0;
  double output_scale = 1.0;
  bool operator==(const Scaling&) const = default;
};

template <typename T>
struct ForwardCache;

template <typename T>
class BasicNet {
 public:
  BasicNet() = default;
  BasicNet(Architecture arch, Scaling scaling);

  const Architecture& architecture() const noexcept { return arch_; }
  const Scaling& scaling() const noexcept { return scaling_; }
  void set_scaling(Scaling s) { scaling_ = s; }

  /// All weights and biases, layer by layer (weights then bias).
  std::vector<T>& parameters() noexcept { return params_; }
  const std::vector<T>& parameters() const noexcept { return params_; }
  std::size_t weight_offset(std::size_t layer) const { return offsets_.at(layer); }
  std::size_t bias_offset(std::size_t layer) const {
    return offsets_.at(layer) + static_cast<std::size_t>(layers_.at(layer).weight_count());
  }

  Tensor<T> forward(const Tensor<T>& input) const;
  Tensor<T> forward(const Tensor<T>& input, ForwardCache<T>& cache) const;

  /// Writes d(loss)/d(parameter) into `grad` (same layout as parameters()),
  /// given `output_grad` = d(loss)/d(network output). When `input_grad` is
  /// non-null it receives d(loss)/d(input).
  void backward(const ForwardCache<T>& cache, const Tensor<T>& output_grad, std::vector<T>& grad,
                Tensor<T>* input_grad = nullptr) const;

  /// Mean squared error over the output map and its gradient.
  static T mse(const Tensor<T>& output, const Tensor<T>& target, Tensor<T>* grad = nullptr);

  template <typename U>
  BasicNet<U> cast() const {
    BasicNet<U> out(arch_, scaling_);
    for (std::size_t i = 0; i < params_.size(); ++i) out.parameters()[i] = static_cast<U>(params_[i]);
    return out;
  }

 private:
  Architecture arch_;
  Scaling scaling_;
  std::vector<ConvSpec> layers_;
  std::vector<std::size_t> offsets_;
  std::vector<T> params_;
};

template <typename T>
struct ForwardCache {
  Tensor<T> scaled_input;
  std::vector<Tensor<T>> outputs;  // post-activation, execution order
  Tensor<T> concatenated;
};

using DeflectionNet = BasicNet<float>;

/// Fan-in scaled uniform weights (limit sqrt(6 / fan_in)), zero biases.
template <typename T>
BasicNet<T> build_network(const Architecture& arch, std::uint64_t seed, Scaling scaling = {});
DeflectionNet build_network(std::uint64_t seed);

/// Channel 0: field values, channel 1: mask.
Tensor<float> raster_to_tensor(const RasterMap& raster);
Tensor<float> grid_to_tensor(const Grid2D& grid);
Grid2D tensor_to_grid(const Tensor<float>& t);
Tensor<float> flip(const Tensor<float>& t, Flip f);

/// Forward pass on the four mirror variants, each output flipped back, then
/// averaged in the order identity, horizontal, vertical, both.
Grid2D predict_deflection(const DeflectionNet& net, const Tensor<float>& input);
Grid2D predict_deflection(const DeflectionNet& net, const RasterMap& raster);

// ---- training ---------------------------------------------------------------

struct TrainingRow {
  Tensor<float> input;
  Grid2D target;
  double weight = 1.0;
};

enum class Optimizer { Adam, Sgd };

struct TrainConfig {
  Optimizer optimizer = Optimizer::Adam;
  double step_size = 1e-3;
  int batch_size = 8;
  int epochs = 10;
  std::uint64_t seed = 0;
  /// Expand every row into its four mirror variants.
  bool mirror_augment = true;
  bool shuffle = true;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-7;

  void validate() const;
};

struct TrainResult {
  std::vector<double> loss_history;  // mean weighted batch loss per epoch
};

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using EpochCallback = std::function<void(int epoch, double loss)>;

TrainResult train(DeflectionNet& net, const std::vector<TrainingRow>& rows,
                  const TrainConfig& config, const EpochCallback& on_epoch = {});

/// Weighted mean of the per-row MSE (no mirroring).
double evaluate(const DeflectionNet& net, const std::vector<TrainingRow>& rows);

/// Rows in the order the trainer sees them with mirror_augment on.
std::vector<TrainingRow> expand_mirrors(const std::vector<TrainingRow>& rows);

// ---- persistence ------------------------------------------------------------

/// Flat little-endian float32 blob in parameters() order.
std::string weights_blob(const DeflectionNet& net);
/// Layer table with byte offsets, total parameter count, and scaling.
nlohmann::json weights_manifest(const DeflectionNet& net);
DeflectionNet load_weights(const nlohmann::json& manifest, std::string_view blob);

void save_weights(const DeflectionNet& net, const std::filesystem::path& blob_path,
                  const std::filesystem::path& manifest_path);
DeflectionNet load_weights(const std::filesystem::path& blob_path,
                           const std::filesystem::path& manifest_path);

}  // namespace ims::cnn
