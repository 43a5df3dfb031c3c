#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "oscbp/tensor.hpp"

namespace oscbp::model {

enum class Target { SBP, DBP };

std::string to_string(Target t);
Target parse_target(std::string_view s);

struct ModelConfig {
  std::size_t n_kernels = 10;
  std::size_t kernel_width = 107;
  std::size_t lstm_layers = 2;
  std::size_t lstm_hidden = 10;
  std::vector<std::size_t> dense_widths{1000, 500, 250, 100, 50};
  std::size_t grid_size = 215;
  // Feed timesteps from high to low pressure instead of ascending column order.
  bool reverse_time = false;

  bool operator==(const ModelConfig&) const = default;
};

void validate(const ModelConfig& config);

/// Ablation variants: CNN only, CNN + 1 LSTM, CNN + 2 LSTM.
enum class Variant { Cnn, CnnLstm1, CnnLstm2 };

Variant parse_variant(std::string_view s);
std::string to_string(Variant v);
ModelConfig with_variant(ModelConfig config, Variant v);

struct DenseParams {
  ad::Var weights;
  ad::Var bias;
};

/// Conv feature extractor over the pressure axis, stacked LSTMs, ReLU dense head, linear output.
class BpRegressor {
 public:
  /// Glorot-uniform weights, zero biases; deterministic per seed.
  static BpRegressor init(const ModelConfig& config, std::uint64_t seed);
  /// Every parameter zero.
  static BpRegressor zeros(const ModelConfig& config);

  const ModelConfig& config() const { return config_; }

  /// grid: grid_size x grid_size (rows = morphology, columns = pressure). Returns a scalar.
  ad::Var forward(const ad::Var& grid) const;
  double predict(std::span<const double> grid_values) const;

  /// Shapes after each stage of forward, input first.
  std::vector<ad::Shape> shape_trace() const;

  /// Width of the first dense layer's input.
  std::size_t flattened_width() const;

  std::vector<ad::Var> parameters() const;
  /// Parameters subject to L1 regularization (everything except biases).
  std::vector<ad::Var> weights() const;
  std::vector<ad::Var> biases() const;
  std::size_t parameter_count() const;
  void zero_grad() const;

  std::vector<ad::NamedTensor> state() const;
  /// Copies values in; names and shapes must match exactly.
  void load_state(std::span<const ad::NamedTensor> state);

  /// Independent copy; no parameter aliasing.
  BpRegressor clone() const;

  const DenseParams& output_layer() const { return output_; }

 private:
  explicit BpRegressor(ModelConfig config);

  ModelConfig config_;
  ad::Var conv_kernels_;
  ad::Var conv_bias_;
  std::vector<ad::LstmParams> lstm_;
  std::vector<DenseParams> dense_;
  DenseParams output_;
};

struct LoadedModel {
  BpRegressor model;
  Target target;
};

/// One text header line with every ModelConfig field and the target, then the tensor container.
void save_model(std::ostream& out, const BpRegressor& model, Target target);
LoadedModel load_model(std::istream& in);

}  // namespace oscbp::model
