#pragma once

#include "dsibh/numkit.hpp"

// Matrix-based Rényi alpha-order entropy and mutual information over
// Gaussian-kernel Gram matrices of a point set.
namespace dsibh::renyi {

using numkit::Matrix;

/// Unit-trace kernel matrix A = K / trace(K).
struct GramMatrix {
  Matrix entries;
  double sigma = 0.0;

  std::size_t size() const noexcept { return entries.rows(); }
};

/// alpha > 0, alpha != 1.
class AlphaOrder {
 public:
  constexpr AlphaOrder() = default;
  explicit AlphaOrder(double alpha);
  constexpr double value() const noexcept { return alpha_; }
  constexpr bool is_two() const noexcept { return alpha_ == 2.0; }

 private:
  double alpha_ = 2.0;
};

/// K_ij = exp(-|p_i - p_j|^2 / (2 sigma^2)), normalized by its trace (= n).
GramMatrix gram(const Matrix& points, double sigma);

/// H_alpha(A) in bits. alpha = 2 uses -log2 trace(A A); other orders use the eigenvalues.
double entropy(const GramMatrix& a, AlphaOrder order = AlphaOrder{});

/// Entropy of the normalized Hadamard product A o B / trace(A o B).
double joint_entropy(const GramMatrix& a, const GramMatrix& b, AlphaOrder order = AlphaOrder{});

/// I_alpha = H(A_x) + H(A_t) - H(A_x, A_t). Unclamped; see reported_mi().
double mutual_information(const Matrix& x_points, const Matrix& t_points, double sigma_x,
                          double sigma_t, AlphaOrder order = AlphaOrder{});

/// Clamps estimator noise below zero for reporting.
inline double reported_mi(double raw) noexcept { return raw > 0.0 ? raw : 0.0; }

/// d I_alpha / d t_points with both bandwidths held fixed. Only alpha = 2.
Matrix mi_gradient(const Matrix& x_points, const Matrix& t_points, double sigma_x, double sigma_t,
                   AlphaOrder order = AlphaOrder{});

struct Bandwidth {
  double sigma = 0.0;
  /// True when every pairwise distance was below the floor (degenerate point set).
  bool floored = false;
};

inline constexpr double kSigmaFloor = 1e-6;

/// Median of all pairwise Euclidean distances, floored at kSigmaFloor.
Bandwidth select_sigma(const Matrix& points);

/// MI with median-heuristic bandwidths on both sides, and its exact gradient
/// w.r.t. t_points including the dependence of sigma_t on t_points.
struct AdaptiveMi {
  double value = 0.0;
  Matrix grad;
  double sigma_x = 0.0;
  double sigma_t = 0.0;
};

AdaptiveMi mi_median_bandwidth(const Matrix& x_points, const Matrix& t_points);

}  // namespace dsibh::renyi
