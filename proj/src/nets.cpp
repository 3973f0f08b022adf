#include "dsibh/nets.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>

#include "dsibh/binio.hpp"
#include "dsibh/error.hpp"

namespace dsibh::nets {

namespace {

constexpr std::string_view kModelMagic = "DSIBM";
constexpr std::uint16_t kModelVersion = 1;

// tanh rounds to exactly +-1 for |z| > ~19; keep codes in the open interval.
const double kOpenBound = std::nextafter(1.0, 0.0);

void check_input(const MlpParams& params, const Matrix& x) {
  if (params.layers.empty()) throw InvalidArgument("forward: network has no layers");
  if (x.cols() != params.input_dim()) {
    throw InvalidArgument("forward: input has " + std::to_string(x.cols()) +
                          " columns, network expects " + std::to_string(params.input_dim()));
  }
}

Matrix apply_layer(const Layer& layer, const Matrix& in) {
  Matrix z = numkit::matmul_nt(in, layer.weight);
  for (std::size_t i = 0; i < z.rows(); ++i) {
    auto row = z.row(i);
    for (std::size_t j = 0; j < row.size(); ++j) {
      const double v = row[j] + layer.bias[j];
      if (layer.activation == Activation::relu) {
        row[j] = v > 0.0 ? v : 0.0;
      } else {
        row[j] = std::clamp(std::tanh(v), -kOpenBound, kOpenBound);
      }
    }
  }
  return z;
}

}  // namespace

std::size_t MlpParams::input_dim() const {
  if (layers.empty()) throw InvalidArgument("MlpParams: no layers");
  return layers.front().in_dim();
}

std::size_t MlpParams::code_bits() const {
  if (layers.empty()) throw InvalidArgument("MlpParams: no layers");
  return layers.back().out_dim();
}

void MlpParams::validate() const {
  if (layers.empty()) throw InvalidArgument("MlpParams: no layers");
  for (std::size_t k = 0; k < layers.size(); ++k) {
    const Layer& l = layers[k];
    if (l.in_dim() == 0 || l.out_dim() == 0) throw InvalidArgument("MlpParams: zero-dim layer");
    if (l.bias.size() != l.out_dim()) throw InvalidArgument("MlpParams: bias length mismatch");
    if (k + 1 < layers.size() && layers[k + 1].in_dim() != l.out_dim()) {
      throw InvalidArgument("MlpParams: layer " + std::to_string(k) + " output " +
                            std::to_string(l.out_dim()) + " does not feed layer input " +
                            std::to_string(layers[k + 1].in_dim()));
    }
  }
  if (layers.back().activation != Activation::tanh) {
    throw InvalidArgument("MlpParams: output layer must be tanh");
  }
}

MlpParams init(const NetSpec& spec) {
  if (spec.input_dim == 0 || spec.code_bits == 0) throw InvalidArgument("init: zero-dim layer");
  if (spec.hidden_dims.empty()) throw InvalidArgument("init: hidden_dims must be non-empty");
  if (std::any_of(spec.hidden_dims.begin(), spec.hidden_dims.end(),
                  [](std::size_t d) { return d == 0; })) {
    throw InvalidArgument("init: zero-dim layer");
  }
  if (!(spec.init_scale >= 0.0)) throw InvalidArgument("init: init_scale must be >= 0");

  numkit::Rng rng(spec.init_seed);
  MlpParams params;
  std::size_t fan_in = spec.input_dim;
  auto add_layer = [&](std::size_t out, Activation act) {
    Layer layer{Matrix(out, fan_in), std::vector<double>(out, 0.0), act};
    const double bound = spec.init_scale / std::sqrt(static_cast<double>(fan_in));
    for (double& w : layer.weight.data()) w = rng.uniform(-bound, bound);
    params.layers.push_back(std::move(layer));
    fan_in = out;
  };
  for (std::size_t h : spec.hidden_dims) add_layer(h, Activation::relu);
  add_layer(spec.code_bits, Activation::tanh);
  return params;
}

ForwardCache forward_cached(const MlpParams& params, const Matrix& x) {
  check_input(params, x);
  ForwardCache cache;
  cache.input = x;
  cache.outputs.reserve(params.layers.size());
  const Matrix* in = &cache.input;
  for (const Layer& layer : params.layers) {
    cache.outputs.push_back(apply_layer(layer, *in));
    in = &cache.outputs.back();
  }
  return cache;
}

Matrix forward(const MlpParams& params, const Matrix& x) {
  check_input(params, x);
  Matrix h = apply_layer(params.layers.front(), x);
  for (std::size_t k = 1; k < params.layers.size(); ++k) h = apply_layer(params.layers[k], h);
  return h;
}

ParamGrads zero_grads(const MlpParams& params) {
  ParamGrads g;
  for (const Layer& l : params.layers) {
    g.weight.emplace_back(l.out_dim(), l.in_dim());
    g.bias.emplace_back(l.out_dim(), 0.0);
  }
  return g;
}

ParamGrads backward(const MlpParams& params, const ForwardCache& cache, const Matrix& upstream) {
  if (cache.outputs.size() != params.layers.size()) {
    throw InvalidArgument("backward: cache does not match network depth");
  }
  const Matrix& out = cache.codes();
  if (upstream.rows() != out.rows() || upstream.cols() != out.cols()) {
    throw InvalidArgument("backward: upstream gradient shape does not match network output");
  }
  ParamGrads grads = zero_grads(params);
  Matrix delta = upstream;
  for (std::size_t k = params.layers.size(); k-- > 0;) {
    const Layer& layer = params.layers[k];
    const Matrix& act = cache.outputs[k];
    for (std::size_t i = 0; i < delta.size(); ++i) {
      const double a = act.data()[i];
      delta.data()[i] *= layer.activation == Activation::tanh ? 1.0 - a * a : (a > 0.0 ? 1.0 : 0.0);
    }
    const Matrix& in = k == 0 ? cache.input : cache.outputs[k - 1];
    grads.weight[k] = numkit::matmul_tn(delta, in);
    auto& db = grads.bias[k];
    for (std::size_t i = 0; i < delta.rows(); ++i) {
      const auto row = delta.row(i);
      for (std::size_t j = 0; j < row.size(); ++j) db[j] += row[j];
    }
    if (k > 0) delta = numkit::matmul(delta, layer.weight);
  }
  return grads;
}

ParamGrads backward(const MlpParams& params, const Matrix& x, const Matrix& upstream) {
  return backward(params, forward_cached(params, x), upstream);
}

std::vector<double> flatten(const MlpParams& params) {
  std::vector<double> out;
  for (const Layer& l : params.layers) {
    out.insert(out.end(), l.weight.data().begin(), l.weight.data().end());
    out.insert(out.end(), l.bias.begin(), l.bias.end());
  }
  return out;
}

std::vector<double> flatten(const ParamGrads& grads) {
  std::vector<double> out;
  for (std::size_t k = 0; k < grads.weight.size(); ++k) {
    out.insert(out.end(), grads.weight[k].data().begin(), grads.weight[k].data().end());
    out.insert(out.end(), grads.bias[k].begin(), grads.bias[k].end());
  }
  return out;
}

void unflatten(std::span<const double> values, MlpParams& params) {
  std::size_t pos = 0;
  for (Layer& l : params.layers) {
    const std::size_t need = l.weight.size() + l.bias.size();
    if (pos + need > values.size()) throw InvalidArgument("unflatten: too few values");
    std::copy_n(values.begin() + static_cast<std::ptrdiff_t>(pos), l.weight.size(),
                l.weight.data().begin());
    pos += l.weight.size();
    std::copy_n(values.begin() + static_cast<std::ptrdiff_t>(pos), l.bias.size(), l.bias.begin());
    pos += l.bias.size();
  }
  if (pos != values.size()) throw InvalidArgument("unflatten: too many values");
}

Matrix sign(const Matrix& relaxed) {
  Matrix out(relaxed.rows(), relaxed.cols());
  for (std::size_t i = 0; i < relaxed.size(); ++i) out.data()[i] = sign(relaxed.data()[i]);
  return out;
}

void save_model(const MlpParams& params, std::ostream& out) {
  params.validate();
  binio::put_magic(out, kModelMagic);
  binio::put_uint<std::uint16_t>(out, kModelVersion);
  binio::put_uint<std::uint16_t>(out, static_cast<std::uint16_t>(params.layers.size()));
  for (const Layer& l : params.layers) {
    binio::put_uint<std::uint32_t>(out, static_cast<std::uint32_t>(l.out_dim()));
    binio::put_uint<std::uint32_t>(out, static_cast<std::uint32_t>(l.in_dim()));
    binio::put_uint<std::uint8_t>(out, static_cast<std::uint8_t>(l.activation));
    for (double w : l.weight.data()) binio::put_f64(out, w);
    for (double b : l.bias) binio::put_f64(out, b);
  }
  if (!out) throw FormatError("save_model: write failed");
}

void save_model(const MlpParams& params, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("save_model: cannot open " + path.string());
  save_model(params, out);
}

MlpParams load_model(std::istream& in) {
  binio::Reader r(in, "model file");
  r.expect_magic(kModelMagic);
  const auto version = r.uint<std::uint16_t>();
  if (version != kModelVersion) throw r.error("unsupported version " + std::to_string(version));
  const auto count = r.uint<std::uint16_t>();
  if (count == 0) throw r.error("zero layers");
  MlpParams params;
  for (std::uint16_t k = 0; k < count; ++k) {
    const auto out_dim = r.uint<std::uint32_t>();
    const auto in_dim = r.uint<std::uint32_t>();
    const auto tag = r.uint<std::uint8_t>();
    if (tag > 1) throw r.error("unknown activation tag " + std::to_string(tag));
    if (out_dim == 0 || in_dim == 0) throw r.error("zero-dim layer");
    Layer l{Matrix(out_dim, in_dim), std::vector<double>(out_dim), static_cast<Activation>(tag)};
    for (double& w : l.weight.data()) w = r.f64();
    for (double& b : l.bias) b = r.f64();
    params.layers.push_back(std::move(l));
  }
  r.expect_end();
  try {
    params.validate();
  } catch (const InvalidArgument& e) {
    throw FormatError(std::string("model file: ") + e.what());
  }
  return params;
}

MlpParams load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("load_model: cannot open " + path.string());
  return load_model(in);
}

}  // namespace dsibh::nets
