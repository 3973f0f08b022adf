#include "dsibh/losses.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <string>

#include "dsibh/error.hpp"
#include "dsibh/renyi.hpp"

namespace dsibh::losses {

namespace {

void require_same_shape(const Matrix& a, const Matrix& b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw InvalidArgument(std::string(what) + ": shape mismatch " + std::to_string(a.rows()) + "x" +
                          std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                          std::to_string(b.cols()));
  }
}

}  // namespace

SimilarityMatrix similarity_from_labels(const LabelMatrix& y) {
  const std::size_t n = y.rows();
  for (std::size_t i = 0; i < n; ++i) {
    if (y.row_is_empty(i)) {
      throw InvalidArgument("similarity_from_labels: label row " + std::to_string(i) + " is all zero");
    }
  }
  SimilarityMatrix s{Matrix(n, n)};
  for (std::size_t i = 0; i < n; ++i) {
    s.entries(i, i) = 1.0;
    for (std::size_t j = i + 1; j < n; ++j) {
      const double v = y.shares_label(i, j) ? 1.0 : 0.0;
      s.entries(i, j) = v;
      s.entries(j, i) = v;
    }
  }
  return s;
}

ValueGrad labnet_loss(const Matrix& outputs, const Matrix& binary_codes, const SimilarityMatrix& s,
                      double eta) {
  require_same_shape(outputs, binary_codes, "labnet_loss");
  const std::size_t n = outputs.rows();
  if (s.size() != n || s.entries.cols() != n) {
    throw InvalidArgument("labnet_loss: similarity matrix is not " + std::to_string(n) + "x" +
                          std::to_string(n));
  }
  const Matrix delta = numkit::matmul_nt(outputs, outputs);
  Matrix p(n, n);  // dL / dDelta
  double value = 0.0;
  for (std::size_t l = 0; l < n; ++l) {
    for (std::size_t j = 0; j < n; ++j) {
      const double d = delta(l, j);
      value += numkit::softplus(d) - s(l, j) * d;
      p(l, j) = numkit::sigmoid(d) - s(l, j);
    }
  }
  Matrix psym(n, n);
  for (std::size_t l = 0; l < n; ++l)
    for (std::size_t j = 0; j < n; ++j) psym(l, j) = p(l, j) + p(j, l);
  Matrix grad = numkit::matmul(psym, outputs);
  for (std::size_t i = 0; i < outputs.size(); ++i) {
    const double diff = outputs.data()[i] - binary_codes.data()[i];
    value += eta * diff * diff;
    grad.data()[i] += 2.0 * eta * diff;
  }
  return {value, std::move(grad)};
}

ClassCodeTable class_table_build(const LabelMatrix& y, const nets::MlpParams& labnet) {
  std::map<std::vector<std::uint8_t>, std::size_t> seen;
  std::vector<std::size_t> first_rows;
  for (std::size_t i = 0; i < y.rows(); ++i) {
    const auto r = y.row(i);
    if (seen.emplace(std::vector<std::uint8_t>(r.begin(), r.end()), first_rows.size()).second) {
      first_rows.push_back(i);
    }
  }
  ClassCodeTable table;
  table.class_labels = y.select_rows(first_rows);
  table.class_codes = nets::sign(nets::forward(labnet, table.class_labels.as_matrix()));
  return table;
}

std::vector<std::size_t> class_indices(const LabelMatrix& y, const ClassCodeTable& table) {
  if (y.cols() != table.class_labels.cols()) {
    throw InvalidArgument("class_indices: label width differs from class table");
  }
  std::map<std::vector<std::uint8_t>, std::size_t> index;
  for (std::size_t l = 0; l < table.class_count(); ++l) {
    const auto r = table.class_labels.row(l);
    index.emplace(std::vector<std::uint8_t>(r.begin(), r.end()), l);
  }
  std::vector<std::size_t> out(y.rows());
  for (std::size_t i = 0; i < y.rows(); ++i) {
    const auto r = y.row(i);
    const auto it = index.find(std::vector<std::uint8_t>(r.begin(), r.end()));
    if (it == index.end()) {
      throw InvalidArgument("class_indices: label row " + std::to_string(i) + " not in class table");
    }
    out[i] = it->second;
  }
  return out;
}

ValueGrad weighted_ce_loss(const Matrix& codes, std::span<const std::size_t> sample_class,
                           const ClassCodeTable& table) {
  const std::size_t n = codes.rows();
  if (n == 0) throw InvalidArgument("weighted_ce_loss: empty batch");
  if (sample_class.size() != n) throw InvalidArgument("weighted_ce_loss: one class id per row required");
  if (table.class_codes.cols() != codes.cols()) {
    throw InvalidArgument("weighted_ce_loss: class codes have a different bit length");
  }
  const std::size_t classes = table.class_count();
  for (std::size_t c : sample_class) {
    if (c >= classes) {
      throw InvalidArgument("weighted_ce_loss: class index " + std::to_string(c) + " out of range [0, " +
                            std::to_string(classes) + ")");
    }
  }
  Matrix logits = numkit::matmul_nt(codes, table.class_codes);
  const double inv_n = 1.0 / static_cast<double>(n);
  double value = 0.0;
  // logits becomes (softmax - onehot) / n in place.
  for (std::size_t i = 0; i < n; ++i) {
    auto z = logits.row(i);
    const double zmax = *std::max_element(z.begin(), z.end());
    double denom = 0.0;
    for (double v : z) denom += std::exp(v - zmax);
    const double lse = zmax + std::log(denom);
    value += lse - z[sample_class[i]];
    for (double& v : z) v = std::exp(v - lse) * inv_n;
    z[sample_class[i]] -= inv_n;
  }
  return {value * inv_n, numkit::matmul(logits, table.class_codes)};
}

ValueGrad consistency_loss(const Matrix& codes_m, const Matrix& codes_y) {
  require_same_shape(codes_m, codes_y, "consistency_loss");
  Matrix grad(codes_m.rows(), codes_m.cols());
  double value = 0.0;
  for (std::size_t i = 0; i < codes_m.size(); ++i) {
    const double diff = codes_m.data()[i] - codes_y.data()[i];
    value += diff * diff;
    grad.data()[i] = 2.0 * diff;
  }
  return {value, std::move(grad)};
}

ModalityLoss modality_loss(const ModalityBatch& batch, const nets::MlpParams& params,
                           const ClassCodeTable& table, const LossWeights& weights) {
  const nets::ForwardCache cache = nets::forward_cached(params, batch.features);
  const Matrix& codes = cache.codes();

  const ValueGrad ce = weighted_ce_loss(codes, batch.class_index, table);
  Matrix upstream = ce.grad;
  ModalityLoss out;
  out.cross_entropy = ce.value;

  // Components are always evaluated so the breakdown can be logged at any weights.
  if (weights.beta != 0.0 || codes.rows() >= 2) {
    const renyi::AdaptiveMi mi = renyi::mi_median_bandwidth(batch.features, codes);
    out.mutual_information = mi.value;
    for (std::size_t i = 0; i < upstream.size(); ++i) upstream.data()[i] += weights.beta * mi.grad.data()[i];
  }
  const ValueGrad cons = consistency_loss(codes, batch.label_codes);
  out.consistency = cons.value;
  for (std::size_t i = 0; i < upstream.size(); ++i) upstream.data()[i] += weights.gamma * cons.grad.data()[i];
  out.total = out.cross_entropy + weights.beta * out.mutual_information + weights.gamma * out.consistency;
  out.grads = nets::backward(params, cache, upstream);
  return out;
}

}  // namespace dsibh::losses
