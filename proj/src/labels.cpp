#include "dsibh/labels.hpp"

#include <algorithm>
#include <string>

#include "dsibh/error.hpp"

namespace dsibh {

LabelMatrix::LabelMatrix(std::size_t rows, std::size_t cols, std::vector<std::uint8_t> bits)
    : rows_(rows), cols_(cols), bits_(std::move(bits)) {
  if (bits_.size() != rows * cols) {
    throw InvalidArgument("LabelMatrix: data length " + std::to_string(bits_.size()) +
                          " does not match " + std::to_string(rows) + "x" + std::to_string(cols));
  }
  if (std::any_of(bits_.begin(), bits_.end(), [](std::uint8_t b) { return b > 1; })) {
    throw InvalidArgument("LabelMatrix: entries must be 0 or 1");
  }
}

bool LabelMatrix::shares_label(std::size_t a, std::size_t b) const noexcept {
  const auto ra = row(a);
  const auto rb = row(b);
  for (std::size_t k = 0; k < cols_; ++k)
    if (ra[k] && rb[k]) return true;
  return false;
}

bool LabelMatrix::row_is_empty(std::size_t r) const noexcept {
  const auto rr = row(r);
  return std::none_of(rr.begin(), rr.end(), [](std::uint8_t b) { return b != 0; });
}

LabelMatrix LabelMatrix::select_rows(std::span<const std::size_t> indices) const {
  LabelMatrix out(indices.size(), cols_);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= rows_) throw InvalidArgument("LabelMatrix::select_rows: index out of range");
    std::copy_n(bits_.begin() + static_cast<std::ptrdiff_t>(indices[i] * cols_), cols_,
                out.bits_.begin() + static_cast<std::ptrdiff_t>(i * cols_));
  }
  return out;
}

numkit::Matrix LabelMatrix::as_matrix() const {
  numkit::Matrix m(rows_, cols_);
  for (std::size_t i = 0; i < bits_.size(); ++i) m.data()[i] = bits_[i];
  return m;
}

}  // namespace dsibh
