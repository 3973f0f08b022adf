#include "doctest.h"

#include <cmath>

#include "dsibh/error.hpp"
#include "dsibh/renyi.hpp"
#include "support.hpp"

#ifdef DSIBH_HAVE_EIGEN
#include <Eigen/Eigenvalues>
#endif

using namespace dsibh;
using namespace dsibh::renyi;
using numkit::Rng;
using testing::random_matrix;

namespace {

// Independent entropy through the eigenvalue spectrum.
double spectral_entropy(const Matrix& a, double alpha) {
  std::vector<double> ev;
#ifdef DSIBH_HAVE_EIGEN
  Eigen::MatrixXd m(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) m(i, j) = a(i, j);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m, Eigen::EigenvaluesOnly);
  for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) ev.push_back(es.eigenvalues()(i));
#else
  ev = numkit::symmetric_eigenvalues(a);
#endif
  double s = 0.0;
  for (double l : ev) s += std::pow(std::max(l, 0.0), alpha);
  return std::log2(s) / (1.0 - alpha);
}

GramMatrix hadamard_normalized(const GramMatrix& a, const GramMatrix& b) {
  GramMatrix out{numkit::elementwise(numkit::Op::mul, a.entries, b.entries), 0.0};
  double tr = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) tr += out.entries(i, i);
  out.entries = numkit::scaled(out.entries, 1.0 / tr);
  return out;
}

Matrix constant_rows(std::size_t n, std::size_t d, double v) { return Matrix(n, d, v); }

Matrix spread_points(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1000.0;
  return m;
}

}  // namespace

TEST_CASE("two identical points give the all-half matrix") {
  const GramMatrix g = gram(Matrix{{1, 2}, {1, 2}}, 1.0);
  for (double v : g.entries.data()) CHECK(v == doctest::Approx(0.5));
}

TEST_CASE("distant points give I/n") {
  const GramMatrix g = gram(Matrix{{0.0}, {1000.0}}, 1.0);
  CHECK(g.entries(0, 0) == 0.5);
  CHECK(g.entries(1, 1) == 0.5);
  CHECK(g.entries(0, 1) == doctest::Approx(0.0));
}

TEST_CASE("gram is symmetric, unit trace, PSD, diagonal exactly 1/n") {
  Rng rng(1);
  for (int rep = 0; rep < 20; ++rep) {
    const std::size_t n = 3 + rep % 5;
    const GramMatrix g = gram(random_matrix(n, 4, rng), 1.5);
    double tr = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      CHECK(g.entries(i, i) == 1.0 / static_cast<double>(n));
      tr += g.entries(i, i);
      for (std::size_t j = 0; j < n; ++j) CHECK(g.entries(i, j) == g.entries(j, i));
    }
    CHECK(std::abs(tr - 1.0) < 1e-12);
    CHECK(numkit::symmetric_eigenvalues(g.entries).front() >= -1e-10);
  }
}

TEST_CASE("gram argument checks") {
  CHECK_THROWS_AS(gram(Matrix{{1}, {2}}, 0.0), InvalidArgument);
  CHECK_THROWS_AS(gram(Matrix{{1}, {2}}, -1.0), InvalidArgument);
  CHECK_THROWS_AS(gram(Matrix{{1}}, 1.0), InvalidArgument);
}

TEST_CASE("alpha order validation") {
  CHECK_THROWS_AS(AlphaOrder(1.0), InvalidArgument);
  CHECK_THROWS_AS(AlphaOrder(0.0), InvalidArgument);
  CHECK_THROWS_AS(AlphaOrder(-2.0), InvalidArgument);
  CHECK_THROWS_AS(AlphaOrder(std::nan("")), InvalidArgument);
  CHECK(AlphaOrder{}.is_two());
  CHECK_FALSE(AlphaOrder(3.0).is_two());
}

TEST_CASE("identical points carry zero entropy") {
  for (std::size_t n : {2u, 8u, 64u}) CHECK(std::abs(entropy(gram(constant_rows(n, 3, 0.7), 1.0))) < 1e-9);
}

TEST_CASE("mutually distant points carry log2 n bits") {
  for (std::size_t n : {2u, 8u, 64u})
    CHECK(entropy(gram(spread_points(n), 1.0)) == doctest::Approx(std::log2(static_cast<double>(n))).epsilon(1e-9));
}

TEST_CASE("trace formula agrees with the eigenvalue formula") {
  Rng rng(2);
  for (int rep = 0; rep < 20; ++rep) {
    const GramMatrix g = gram(random_matrix(8, 3, rng), 0.5 + rng.uniform());
    CHECK(std::abs(entropy(g) - spectral_entropy(g.entries, 2.0)) < 1e-10);
  }
}

TEST_CASE("general alpha goes through the spectrum") {
  Rng rng(3);
  for (double alpha : {0.5, 1.5, 3.0}) {
    const GramMatrix g = gram(random_matrix(8, 3, rng), 1.0);
    CHECK(std::abs(entropy(g, AlphaOrder(alpha)) - spectral_entropy(g.entries, alpha)) < 1e-9);
  }
}

TEST_CASE("entropy is bounded by log2 n") {
  Rng rng(4);
  for (int rep = 0; rep < 50; ++rep) {
    const std::size_t n = 2 + rng.below(20);
    const double h = entropy(gram(random_matrix(n, 2, rng), 0.1 + rng.uniform()));
    CHECK(h >= -1e-12);
    CHECK(h <= std::log2(static_cast<double>(n)) + 1e-12);
  }
}

TEST_CASE("entropy rejects non-normalized input") {
  GramMatrix g{Matrix::identity(3), 1.0};
  CHECK_THROWS_AS(entropy(g), InvalidArgument);
  GramMatrix asym{Matrix{{0.5, 0.1}, {0.2, 0.5}}, 1.0};
  CHECK_THROWS_AS(entropy(asym), InvalidArgument);
}

TEST_CASE("joint entropy with the constant matrix is the marginal") {
  Rng rng(5);
  const GramMatrix a = gram(random_matrix(8, 3, rng), 1.0);
  const GramMatrix c = gram(constant_rows(8, 3, 1.0), 1.0);
  CHECK(joint_entropy(a, c) == doctest::Approx(entropy(a)).epsilon(1e-12));
}

TEST_CASE("joint entropy is symmetric and matches the spectral oracle") {
  Rng rng(6);
  for (int rep = 0; rep < 10; ++rep) {
    const GramMatrix a = gram(random_matrix(8, 3, rng), 1.0);
    const GramMatrix b = gram(random_matrix(8, 2, rng), 0.7);
    CHECK(joint_entropy(a, b) == doctest::Approx(joint_entropy(b, a)).epsilon(1e-14));
    CHECK(std::abs(joint_entropy(a, b) - spectral_entropy(hadamard_normalized(a, b).entries, 2.0)) < 1e-10);
  }
}

TEST_CASE("joint entropy size mismatch") {
  Rng rng(6);
  CHECK_THROWS_AS(joint_entropy(gram(random_matrix(4, 2, rng), 1.0), gram(random_matrix(5, 2, rng), 1.0)),
                  InvalidArgument);
}

TEST_CASE("mutual information of a set with itself") {
  Rng rng(7);
  const Matrix x = random_matrix(10, 3, rng);
  const GramMatrix a = gram(x, 1.2);
  const double want = 2.0 * entropy(a) - entropy(hadamard_normalized(a, a));
  CHECK(mutual_information(x, x, 1.2, 1.2) == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("mutual information with constant codes is zero") {
  Rng rng(8);
  CHECK(std::abs(mutual_information(random_matrix(10, 3, rng), constant_rows(10, 4, 0.2), 1.0, 1.0)) < 1e-12);
}

TEST_CASE("mutual information is non-negative on random draws") {
  Rng rng(9);
  double worst = 0.0;
  for (int rep = 0; rep < 1000; ++rep) {
    const double v = mutual_information(random_matrix(16, 3, rng), random_matrix(16, 4, rng),
                                        0.2 + 2.0 * rng.uniform(), 0.2 + 2.0 * rng.uniform());
    worst = std::min(worst, v);
  }
  CHECK(worst >= -1e-8);
}

TEST_CASE("reported mi clamps at zero") {
  CHECK(reported_mi(-1e-12) == 0.0);
  CHECK(reported_mi(0.3) == 0.3);
}

TEST_CASE("mi is invariant to joint rescaling of points and bandwidth") {
  Rng rng(10);
  const Matrix x = random_matrix(12, 3, rng);
  const Matrix t = random_matrix(12, 4, rng);
  const double base = mutual_information(x, t, 1.0, 0.8);
  CHECK(mutual_information(x, numkit::scaled(t, 3.0), 1.0, 2.4) == doctest::Approx(base).epsilon(1e-12));
}

TEST_CASE("mi gradient matches finite differences") {
  Rng rng(11);
  for (int rep = 0; rep < 10; ++rep) {
    const Matrix x = random_matrix(12, 4, rng);
    const Matrix t0 = random_matrix(12, 4, rng);
    const double sx = 1.0 + rng.uniform(), st = 1.0 + rng.uniform();
    const numkit::DifferentiableFn f = [&](const Matrix& t) {
      return numkit::ValueGrad{mutual_information(x, t, sx, st), mi_gradient(x, t, sx, st)};
    };
    CHECK(numkit::grad_check(f, t0) < 1e-4);
  }
}

TEST_CASE("mi gradient with constant codes") {
  Rng rng(12);
  const Matrix x = random_matrix(8, 3, rng);
  const numkit::DifferentiableFn f = [&](const Matrix& t) {
    return numkit::ValueGrad{mutual_information(x, t, 1.0, 1.0), mi_gradient(x, t, 1.0, 1.0)};
  };
  CHECK(numkit::grad_check(f, constant_rows(8, 4, 0.3)) < 1e-4);
}

TEST_CASE("mi gradient needs alpha two") {
  Rng rng(13);
  const Matrix x = random_matrix(4, 2, rng);
  CHECK_THROWS_AS(mi_gradient(x, x, 1.0, 1.0, AlphaOrder(3.0)), UnsupportedOrder);
}

TEST_CASE("bandwidth for two points is their distance") {
  const Bandwidth b = select_sigma(Matrix{{0, 0}, {0, 2}});
  CHECK(b.sigma == 2.0);
  CHECK_FALSE(b.floored);
}

TEST_CASE("bandwidth floor for identical points") {
  const Bandwidth b = select_sigma(constant_rows(5, 3, 1.0));
  CHECK(b.sigma == kSigmaFloor);
  CHECK(b.floored);
}

TEST_CASE("bandwidth equals the brute-force median") {
  Rng rng(14);
  for (std::size_t n : {100u, 101u, 7u}) {
    const Matrix p = random_matrix(n, 3, rng);
    std::vector<double> d;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) {
        double s = 0.0;
        for (std::size_t k = 0; k < 3; ++k) s += (p(i, k) - p(j, k)) * (p(i, k) - p(j, k));
        d.push_back(std::sqrt(s));
      }
    CHECK(select_sigma(p).sigma == doctest::Approx(testing::brute_median(d)).epsilon(1e-14));
  }
}

TEST_CASE("adaptive-bandwidth mi gradient includes the bandwidth path") {
  Rng rng(15);
  for (int rep = 0; rep < 10; ++rep) {
    const Matrix x = random_matrix(9, 4, rng);
    const numkit::DifferentiableFn f = [&](const Matrix& t) {
      const AdaptiveMi r = mi_median_bandwidth(x, t);
      return numkit::ValueGrad{r.value, r.grad};
    };
    CHECK(numkit::grad_check(f, random_matrix(9, 4, rng), 1e-6) < 1e-4);
  }
}
