#include "dsibh/renyi.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "dsibh/error.hpp"

namespace dsibh::renyi {

namespace {

constexpr double kTraceTol = 1e-9;
constexpr double kSymTol = 1e-12;

double sq_dist(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const double d = a[k] - b[k];
    acc += d * d;
  }
  return acc;
}

// Unnormalized kernel with a unit diagonal.
Matrix kernel(const Matrix& points, double sigma) {
  const std::size_t n = points.rows();
  const double inv = 1.0 / (2.0 * sigma * sigma);
  Matrix k(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    k(i, i) = 1.0;
    for (std::size_t j = i + 1; j < n; ++j) {
      const double v = std::exp(-sq_dist(points.row(i), points.row(j)) * inv);
      k(i, j) = v;
      k(j, i) = v;
    }
  }
  return k;
}

void require_normalized(const GramMatrix& a) {
  const Matrix& m = a.entries;
  if (m.rows() != m.cols() || m.rows() == 0) throw InvalidArgument("entropy: Gram matrix not square");
  double tr = 0.0;
  for (std::size_t i = 0; i < m.rows(); ++i) {
    tr += m(i, i);
    for (std::size_t j = i + 1; j < m.rows(); ++j) {
      if (std::abs(m(i, j) - m(j, i)) > kSymTol) {
        throw InvalidArgument("entropy: Gram matrix not symmetric");
      }
    }
  }
  if (std::abs(tr - 1.0) > kTraceTol) {
    throw InvalidArgument("entropy: Gram matrix not trace-normalized (trace " + std::to_string(tr) +
                          ")");
  }
}

double entropy_unchecked(const Matrix& a, AlphaOrder order) {
  if (order.is_two()) {
    // trace(A A) = sum of squares for symmetric A.
    return -std::log2(numkit::frobenius_sq(a));
  }
  double acc = 0.0;
  for (double lambda : numkit::symmetric_eigenvalues(a)) {
    if (lambda > 0.0) acc += std::pow(lambda, order.value());
  }
  return std::log2(acc) / (1.0 - order.value());
}

Matrix hadamard_normalized(const Matrix& a, const Matrix& b) {
  Matrix c = numkit::elementwise(numkit::Op::mul, a, b);
  double tr = 0.0;
  for (std::size_t i = 0; i < c.rows(); ++i) tr += c(i, i);
  return numkit::scaled(c, 1.0 / tr);
}

void require_points(const Matrix& x, const Matrix& t) {
  if (x.rows() != t.rows()) {
    throw InvalidArgument("mutual_information: row counts differ (" + std::to_string(x.rows()) +
                          " vs " + std::to_string(t.rows()) + ")");
  }
  if (x.rows() < 2) throw InvalidArgument("mutual_information: need at least 2 points");
}

struct KernelTerms {
  Matrix kx;
  Matrix kt;
  Matrix m;  // dI / dKt_ij
};

// alpha = 2: I = log2( n^2 Sxt / (Sx St) ) with S = sum of squared kernel entries.
KernelTerms kernel_terms(const Matrix& x, const Matrix& t, double sigma_x, double sigma_t,
                         double* value) {
  KernelTerms terms{kernel(x, sigma_x), kernel(t, sigma_t), Matrix()};
  const std::size_t n = x.rows();
  double sx = 0.0, st = 0.0, sxt = 0.0;
  for (std::size_t i = 0; i < n * n; ++i) {
    const double a = terms.kx.data()[i];
    const double b = terms.kt.data()[i];
    sx += a * a;
    st += b * b;
    sxt += a * a * b * b;
  }
  if (value != nullptr) {
    const double nn = static_cast<double>(n) * static_cast<double>(n);
    *value = -std::log2(sx / nn) - std::log2(st / nn) + std::log2(sxt / nn);
  }
  terms.m = Matrix(n, n);
  const double inv_ln2 = 1.0 / std::numbers::ln2;
  for (std::size_t i = 0; i < n * n; ++i) {
    const double a = terms.kx.data()[i];
    const double b = terms.kt.data()[i];
    terms.m.data()[i] = inv_ln2 * (-2.0 * b / st + 2.0 * a * a * b / sxt);
  }
  return terms;
}

Matrix grad_fixed_sigma(const KernelTerms& terms, const Matrix& t, double sigma_t) {
  const std::size_t n = t.rows();
  const std::size_t d = t.cols();
  const double inv_s2 = 1.0 / (sigma_t * sigma_t);
  Matrix g(n, d);
  for (std::size_t i = 0; i < n; ++i) {
    auto gi = g.row(i);
    const auto ti = t.row(i);
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      const double w = 2.0 * terms.m(i, j) * terms.kt(i, j) * inv_s2;
      const auto tj = t.row(j);
      for (std::size_t k = 0; k < d; ++k) gi[k] += w * (tj[k] - ti[k]);
    }
  }
  return g;
}

struct PairDistance {
  double dist;
  std::size_t i;
  std::size_t j;
};

std::vector<PairDistance> pair_distances(const Matrix& points) {
  std::vector<PairDistance> out;
  const std::size_t n = points.rows();
  out.reserve(n * (n - 1) / 2);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      out.push_back({std::sqrt(sq_dist(points.row(i), points.row(j))), i, j});
  return out;
}

// The one or two pairs whose distances define the median.
std::vector<PairDistance> median_pairs(const Matrix& points) {
  if (points.rows() < 2) throw InvalidArgument("select_sigma: need at least 2 points");
  auto pairs = pair_distances(points);
  const auto by_dist = [](const PairDistance& a, const PairDistance& b) { return a.dist < b.dist; };
  const std::size_t m = pairs.size();
  const auto mid = pairs.begin() + static_cast<std::ptrdiff_t>(m / 2);
  std::nth_element(pairs.begin(), mid, pairs.end(), by_dist);
  if (m % 2 == 1) return {*mid};
  const auto lower = std::max_element(pairs.begin(), mid, by_dist);
  return {*lower, *mid};
}

}  // namespace

AlphaOrder::AlphaOrder(double alpha) : alpha_(alpha) {
  if (!(alpha > 0.0) || alpha == 1.0 || !std::isfinite(alpha)) {
    throw InvalidArgument("AlphaOrder: alpha must be positive, finite and != 1");
  }
}

GramMatrix gram(const Matrix& points, double sigma) {
  if (!(sigma > 0.0)) throw InvalidArgument("gram: sigma must be positive");
  if (points.rows() < 2) throw InvalidArgument("gram: need at least 2 points");
  Matrix k = kernel(points, sigma);
  const double inv_n = 1.0 / static_cast<double>(points.rows());
  for (double& v : k.data()) v *= inv_n;
  for (std::size_t i = 0; i < k.rows(); ++i) k(i, i) = inv_n;
  return {std::move(k), sigma};
}

double entropy(const GramMatrix& a, AlphaOrder order) {
  require_normalized(a);
  return entropy_unchecked(a.entries, order);
}

double joint_entropy(const GramMatrix& a, const GramMatrix& b, AlphaOrder order) {
  if (a.size() != b.size()) {
    throw InvalidArgument("joint_entropy: sizes differ (" + std::to_string(a.size()) + " vs " +
                          std::to_string(b.size()) + ")");
  }
  require_normalized(a);
  require_normalized(b);
  return entropy_unchecked(hadamard_normalized(a.entries, b.entries), order);
}

double mutual_information(const Matrix& x_points, const Matrix& t_points, double sigma_x,
                          double sigma_t, AlphaOrder order) {
  require_points(x_points, t_points);
  if (order.is_two()) {
    double value = 0.0;
    kernel_terms(x_points, t_points, sigma_x, sigma_t, &value);
    return value;
  }
  const GramMatrix ax = gram(x_points, sigma_x);
  const GramMatrix at = gram(t_points, sigma_t);
  return entropy(ax, order) + entropy(at, order) - joint_entropy(ax, at, order);
}

Matrix mi_gradient(const Matrix& x_points, const Matrix& t_points, double sigma_x, double sigma_t,
                   AlphaOrder order) {
  if (!order.is_two()) throw UnsupportedOrder("mi_gradient: only alpha = 2 is implemented");
  require_points(x_points, t_points);
  if (!(sigma_x > 0.0) || !(sigma_t > 0.0)) throw InvalidArgument("mi_gradient: sigma must be positive");
  const KernelTerms terms = kernel_terms(x_points, t_points, sigma_x, sigma_t, nullptr);
  return grad_fixed_sigma(terms, t_points, sigma_t);
}

Bandwidth select_sigma(const Matrix& points) {
  const auto pairs = median_pairs(points);
  double median = 0.0;
  for (const auto& p : pairs) median += p.dist;
  median /= static_cast<double>(pairs.size());
  if (median < kSigmaFloor) return {kSigmaFloor, true};
  return {median, false};
}

AdaptiveMi mi_median_bandwidth(const Matrix& x_points, const Matrix& t_points) {
  require_points(x_points, t_points);
  const double sigma_x = select_sigma(x_points).sigma;
  const auto pairs = median_pairs(t_points);
  double sigma_t = 0.0;
  for (const auto& p : pairs) sigma_t += p.dist;
  sigma_t /= static_cast<double>(pairs.size());
  const bool floored = sigma_t < kSigmaFloor;
  if (floored) sigma_t = kSigmaFloor;

  AdaptiveMi out;
  out.sigma_x = sigma_x;
  out.sigma_t = sigma_t;
  const KernelTerms terms = kernel_terms(x_points, t_points, sigma_x, sigma_t, &out.value);
  out.grad = grad_fixed_sigma(terms, t_points, sigma_t);
  if (floored) return out;

  // Chain rule through sigma_t = mean of the median pair distance(s).
  const std::size_t n = t_points.rows();
  double dmi_dsigma = 0.0;
  const double inv_s3 = 1.0 / (sigma_t * sigma_t * sigma_t);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (i != j) {
        dmi_dsigma += terms.m(i, j) * terms.kt(i, j) *
                      sq_dist(t_points.row(i), t_points.row(j)) * inv_s3;
      }
  const double share = dmi_dsigma / static_cast<double>(pairs.size());
  for (const auto& p : pairs) {
    if (p.dist == 0.0) continue;
    const auto ti = t_points.row(p.i);
    const auto tj = t_points.row(p.j);
    auto gi = out.grad.row(p.i);
    auto gj = out.grad.row(p.j);
    for (std::size_t k = 0; k < t_points.cols(); ++k) {
      const double u = share * (ti[k] - tj[k]) / p.dist;
      gi[k] += u;
      gj[k] -= u;
    }
  }
  return out;
}

}  // namespace dsibh::renyi
