#pragma once

#include <cstddef>
#include <vector>

#include "dsibh/labels.hpp"
#include "dsibh/nets.hpp"
#include "dsibh/numkit.hpp"

namespace dsibh::losses {

using numkit::Matrix;
using numkit::ValueGrad;

/// S_ij = 1 iff samples i and j share at least one label.
struct SimilarityMatrix {
  Matrix entries;

  std::size_t size() const noexcept { return entries.rows(); }
  double operator()(std::size_t i, std::size_t j) const noexcept { return entries(i, j); }
};

SimilarityMatrix similarity_from_labels(const LabelMatrix& y);

/// Distinct training label rows (first-occurrence order) and their +-1 codes.
struct ClassCodeTable {
  LabelMatrix class_labels;
  Matrix class_codes;  // N_y x c, entries +-1

  std::size_t class_count() const noexcept { return class_labels.rows(); }
};

struct LossWeights {
  double beta = 0.1;
  double gamma = 1.0;
  double eta = 1.0;
};

/// Pairwise negative log-likelihood of S under sigmoid(<f_l, f_j>) plus
/// eta * quantization error against the current binary codes. Gradient is
/// w.r.t. `outputs`.
ValueGrad labnet_loss(const Matrix& outputs, const Matrix& binary_codes, const SimilarityMatrix& s,
                      double eta);

/// Deduplicates label rows (first occurrence wins) and encodes each with the label net.
ClassCodeTable class_table_build(const LabelMatrix& y, const nets::MlpParams& labnet);

/// Class id of each row of `y` in `table`; throws InvalidArgument for unseen rows.
std::vector<std::size_t> class_indices(const LabelMatrix& y, const ClassCodeTable& table);

/// Mean softmax cross-entropy with class codes as logit weights. Gradient is w.r.t. `codes`.
ValueGrad weighted_ce_loss(const Matrix& codes, std::span<const std::size_t> sample_class,
                           const ClassCodeTable& table);

/// sum_i |g^y_i - g^m_i|^2. Gradient is w.r.t. `codes_m`.
ValueGrad consistency_loss(const Matrix& codes_m, const Matrix& codes_y);

struct ModalityBatch {
  Matrix features;                       // X^m rows
  std::vector<std::size_t> class_index;  // per row, into the class table
  Matrix label_codes;                    // G^y rows paired with `features`
};

struct ModalityLoss {
  double total = 0.0;
  double cross_entropy = 0.0;
  double mutual_information = 0.0;
  double consistency = 0.0;
  nets::ParamGrads grads;
};

/// L1 + beta * I(G^m; X^m) + gamma * L3 for one modality net on one batch.
ModalityLoss modality_loss(const ModalityBatch& batch, const nets::MlpParams& params,
                           const ClassCodeTable& table, const LossWeights& weights);

}  // namespace dsibh::losses
