#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <vector>

#include "dsibh/labels.hpp"
#include "dsibh/numkit.hpp"

namespace dsibh::dataio {

using numkit::Matrix;

enum class SplitTag : std::uint8_t { query, retrieval, train };

/// Row-aligned paired modalities and labels. A `train` row is also part of
/// the retrieval set.
struct DatasetBundle {
  Matrix x1;
  Matrix x2;
  LabelMatrix y;
  std::vector<SplitTag> tags;  // empty until split()

  std::size_t size() const noexcept { return y.rows(); }
  void validate() const;
  std::vector<std::size_t> rows_where(bool (*pred)(SplitTag)) const;
  std::vector<std::size_t> query_rows() const;
  std::vector<std::size_t> retrieval_rows() const;  // includes train rows
  std::vector<std::size_t> train_rows() const;
};

struct SynthSpec {
  std::size_t class_count = 4;
  std::size_t samples_per_class = 250;
  std::size_t d1 = 32;
  std::size_t d2 = 32;
  std::size_t label_dim = 4;
  double noise_sigma = 0.1;
  double multilabel_rate = 0.0;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Dimension of the per-class latent prototypes.
inline constexpr std::size_t kLatentDim = 8;

/// Class prototypes in a latent space, mapped to each modality by a fixed
/// random linear map plus isotropic Gaussian noise. Rows are class-major.
DatasetBundle generate_synthetic(const SynthSpec& spec);

/// Tags for n rows: query_count queries, train_count train rows, the rest retrieval.
std::vector<SplitTag> split_tags(std::size_t n, std::size_t query_count, std::size_t train_count,
                                 std::uint64_t seed);
DatasetBundle split(DatasetBundle bundle, std::size_t query_count, std::size_t train_count,
                    std::uint64_t seed);

// Feature file: "DSIBF", u32 rows, u32 cols, f32 row-major, little-endian.
// Saving rounds to f32.
void save_features(const Matrix& m, std::ostream& out);
void save_features(const Matrix& m, const std::filesystem::path& path);
Matrix load_features(std::istream& in);
Matrix load_features(const std::filesystem::path& path);

// Label file: "DSIBL", u32 rows, u32 cols, u8 per entry (0/1). load_labels
// also accepts comma-separated 0/1 text, one sample per line.
void save_labels(const LabelMatrix& y, std::ostream& out);
void save_labels(const LabelMatrix& y, const std::filesystem::path& path);
void save_labels_csv(const LabelMatrix& y, std::ostream& out);
LabelMatrix load_labels(std::istream& in);
LabelMatrix load_labels(const std::filesystem::path& path);

}  // namespace dsibh::dataio
