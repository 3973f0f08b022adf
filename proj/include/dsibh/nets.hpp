#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <vector>

#include "dsibh/numkit.hpp"

namespace dsibh::nets {

using numkit::Matrix;

enum class Activation : std::uint8_t { relu = 0, tanh = 1 };

struct Layer {
  Matrix weight;  // out x in
  std::vector<double> bias;
  Activation activation = Activation::relu;

  std::size_t in_dim() const noexcept { return weight.cols(); }
  std::size_t out_dim() const noexcept { return weight.rows(); }

  friend bool operator==(const Layer&, const Layer&) = default;
};

/// An MLP encoder: ReLU hidden layers and a tanh output layer of width c.
struct MlpParams {
  std::vector<Layer> layers;

  std::size_t input_dim() const;
  std::size_t code_bits() const;
  /// Throws InvalidArgument unless the layer dims chain and the last layer is tanh.
  void validate() const;

  friend bool operator==(const MlpParams&, const MlpParams&) = default;
};

struct NetSpec {
  std::size_t input_dim = 0;
  std::vector<std::size_t> hidden_dims{256};
  std::size_t code_bits = 16;
  std::uint64_t init_seed = 0;
  double init_scale = 1.0;
};

/// Weights uniform in [-scale/sqrt(fan_in), scale/sqrt(fan_in)], zero biases.
MlpParams init(const NetSpec& spec);

/// Per-layer outputs kept for the backward pass.
struct ForwardCache {
  Matrix input;
  std::vector<Matrix> outputs;  // post-activation, one per layer

  const Matrix& codes() const { return outputs.back(); }
};

/// Relaxed codes in (-1, 1)^c, one row per input row.
Matrix forward(const MlpParams& params, const Matrix& x);
ForwardCache forward_cached(const MlpParams& params, const Matrix& x);

/// Gradient with the same layout as MlpParams.
struct ParamGrads {
  std::vector<Matrix> weight;
  std::vector<std::vector<double>> bias;
};

ParamGrads zero_grads(const MlpParams& params);

/// Back-propagates dLoss/dCodes through the tanh/ReLU/affine chain.
ParamGrads backward(const MlpParams& params, const ForwardCache& cache, const Matrix& upstream);
ParamGrads backward(const MlpParams& params, const Matrix& x, const Matrix& upstream);

/// Flattened view used by gradient checks and optimizers.
std::vector<double> flatten(const MlpParams& params);
std::vector<double> flatten(const ParamGrads& grads);
void unflatten(std::span<const double> values, MlpParams& params);

/// sign with sign(0) = +1.
inline double sign(double v) noexcept { return v >= 0.0 ? 1.0 : -1.0; }
Matrix sign(const Matrix& relaxed);

// Model file: "DSIBM", u16 version, u16 layer count, then per layer
// u32 out, u32 in, u8 activation, f64 weights row-major, f64 biases. Little-endian.
void save_model(const MlpParams& params, std::ostream& out);
void save_model(const MlpParams& params, const std::filesystem::path& path);
MlpParams load_model(std::istream& in);
MlpParams load_model(const std::filesystem::path& path);

}  // namespace dsibh::nets
