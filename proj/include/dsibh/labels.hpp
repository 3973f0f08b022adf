#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "dsibh/numkit.hpp"

namespace dsibh {

/// Binary multi-label matrix, one row of 0/1 flags per sample.
class LabelMatrix {
 public:
  LabelMatrix() = default;
  LabelMatrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), bits_(rows * cols, 0) {}
  LabelMatrix(std::size_t rows, std::size_t cols, std::vector<std::uint8_t> bits);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }

  std::uint8_t operator()(std::size_t r, std::size_t c) const noexcept { return bits_[r * cols_ + c]; }
  void set(std::size_t r, std::size_t c, bool on) noexcept { bits_[r * cols_ + c] = on ? 1 : 0; }

  std::span<const std::uint8_t> row(std::size_t r) const noexcept {
    return {bits_.data() + r * cols_, cols_};
  }

  /// True when rows a and b share at least one set label.
  bool shares_label(std::size_t a, std::size_t b) const noexcept;
  bool row_is_empty(std::size_t r) const noexcept;

  LabelMatrix select_rows(std::span<const std::size_t> indices) const;
  /// Labels as a 0/1 double matrix (network input).
  numkit::Matrix as_matrix() const;

  friend bool operator==(const LabelMatrix&, const LabelMatrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<std::uint8_t> bits_;
};

}  // namespace dsibh
