#include "doctest.h"

#include <cmath>
#include <sstream>

#include "dsibh/error.hpp"
#include "dsibh/nets.hpp"
#include "support.hpp"

using namespace dsibh;
using namespace dsibh::nets;
using numkit::Rng;
using testing::random_matrix;

namespace {

NetSpec small_spec(std::uint64_t seed = 1) {
  NetSpec s;
  s.input_dim = 5;
  s.hidden_dims = {7, 6};
  s.code_bits = 8;
  s.init_seed = seed;
  return s;
}

}  // namespace

TEST_CASE("init is deterministic per seed") {
  CHECK(init(small_spec(3)) == init(small_spec(3)));
  CHECK_FALSE(init(small_spec(3)) == init(small_spec(4)));
}

TEST_CASE("init layer shapes") {
  NetSpec s;
  s.input_dim = 10;
  s.hidden_dims = {256};
  s.code_bits = 16;
  const MlpParams p = init(s);
  REQUIRE(p.layers.size() == 2);
  CHECK(p.layers[0].weight.rows() == 256);
  CHECK(p.layers[0].weight.cols() == 10);
  CHECK(p.layers[1].weight.rows() == 16);
  CHECK(p.layers[1].weight.cols() == 256);
  CHECK(p.layers[0].activation == Activation::relu);
  CHECK(p.layers[1].activation == Activation::tanh);
  CHECK(p.input_dim() == 10);
  CHECK(p.code_bits() == 16);
}

TEST_CASE("zero init scale gives zero codes") {
  NetSpec s = small_spec();
  s.init_scale = 0.0;
  const MlpParams p = init(s);
  for (const auto& l : p.layers)
    for (double w : l.weight.data()) CHECK(w == 0.0);
  Rng rng(2);
  const Matrix out = forward(p, random_matrix(4, 5, rng));
  for (double v : out.data()) CHECK(v == 0.0);
}

TEST_CASE("invalid specs are rejected") {
  NetSpec s = small_spec();
  s.input_dim = 0;
  CHECK_THROWS_AS(init(s), InvalidArgument);
  s = small_spec();
  s.hidden_dims = {};
  CHECK_THROWS_AS(init(s), InvalidArgument);
  s = small_spec();
  s.code_bits = 0;
  CHECK_THROWS_AS(init(s), InvalidArgument);
}

TEST_CASE("forward output stays inside the open interval") {
  NetSpec s = small_spec();
  s.init_scale = 50.0;
  const MlpParams p = init(s);
  Rng rng(5);
  const Matrix out = forward(p, random_matrix(50, 5, rng, 100.0));
  for (double v : out.data()) {
    CHECK(v > -1.0);
    CHECK(v < 1.0);
  }
}

TEST_CASE("single identity tanh layer") {
  MlpParams p;
  p.layers.push_back({Matrix::identity(2), {0.0, 0.0}, Activation::tanh});
  const Matrix out = forward(p, Matrix{{10, -10}});
  CHECK(out(0, 0) == doctest::Approx(std::tanh(10.0)).epsilon(1e-8));
  CHECK(out(0, 1) == doctest::Approx(std::tanh(-10.0)).epsilon(1e-8));
}

TEST_CASE("forward rejects wrong input width") {
  CHECK_THROWS_AS(forward(init(small_spec()), Matrix(3, 4)), InvalidArgument);
}

TEST_CASE("zero upstream gives zero gradient") {
  const MlpParams p = init(small_spec());
  Rng rng(1);
  const ParamGrads g = backward(p, random_matrix(3, 5, rng), Matrix(3, 8));
  for (double v : flatten(g)) CHECK(v == 0.0);
}

TEST_CASE("linear-layer weight gradient is upstream-transpose times input") {
  // Upstream is taken with respect to the post-tanh output, so with a zero
  // weight the tanh derivative at the origin is exactly one.
  MlpParams p;
  p.layers.push_back({Matrix(2, 3), {0.0, 0.0}, Activation::tanh});
  const Matrix x{{1, 2, 3}, {-1, 0, 4}};
  const Matrix up{{0.5, -1}, {2, 1}};
  const ParamGrads g = backward(p, x, up);
  CHECK(g.weight[0] == numkit::matmul_tn(up, x));
  CHECK(g.bias[0][0] == doctest::Approx(2.5));
  CHECK(g.bias[0][1] == doctest::Approx(0.0));
}

TEST_CASE("backward matches finite differences") {
  Rng rng(11);
  for (int rep = 0; rep < 5; ++rep) {
    MlpParams p = init(small_spec(rep + 1));
    const Matrix x = random_matrix(6, 5, rng);
    const Matrix w = random_matrix(6, 8, rng);
    const auto base = flatten(p);
    const numkit::DifferentiableFn f = [&](const Matrix& theta) {
      MlpParams q = p;
      unflatten(theta.data(), q);
      const Matrix out = forward(q, x);
      double v = 0.0;
      for (std::size_t i = 0; i < out.size(); ++i) v += w.data()[i] * out.data()[i];
      const auto g = flatten(backward(q, x, w));
      return numkit::ValueGrad{v, Matrix(1, g.size(), g)};
    };
    CHECK(numkit::grad_check(f, Matrix(1, base.size(), base)) < 1e-4);
  }
}

TEST_CASE("sign convention") {
  CHECK(sign(0.0) == 1.0);
  CHECK(sign(-0.0) == 1.0);
  CHECK(sign(-1e-300) == -1.0);
  CHECK(sign(Matrix{{0.3, -0.9, 0.0}}) == Matrix{{1, -1, 1}});
}

TEST_CASE("flatten round trip") {
  MlpParams p = init(small_spec(9));
  const auto v = flatten(p);
  MlpParams q = init(small_spec(10));
  unflatten(v, q);
  CHECK(p == q);
  CHECK_THROWS_AS(unflatten(std::span<const double>(v.data(), v.size() - 1), q), InvalidArgument);
}

TEST_CASE("model file round trip") {
  const MlpParams p = init(small_spec(4));
  std::stringstream ss;
  save_model(p, ss);
  CHECK(load_model(ss) == p);
}

TEST_CASE("model file corruption is reported") {
  const MlpParams p = init(small_spec(4));
  std::stringstream ss;
  save_model(p, ss);
  const std::string bytes = ss.str();
  std::stringstream truncated(bytes.substr(0, bytes.size() - 3));
  CHECK_THROWS_AS(load_model(truncated), FormatError);
  std::stringstream bad_magic("XXXXX" + bytes.substr(5));
  CHECK_THROWS_AS(load_model(bad_magic), FormatError);
  std::stringstream trailing(bytes + "z");
  CHECK_THROWS_AS(load_model(trailing), FormatError);
}
