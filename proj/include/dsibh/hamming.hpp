#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "dsibh/labels.hpp"
#include "dsibh/nets.hpp"
#include "dsibh/numkit.hpp"

// Binary codes packed 64 per word: bit k of a code is set iff entry k is +1,
// with entry k stored in word k / 64 at bit position k % 64.
namespace dsibh::hamming {

using numkit::Matrix;

constexpr std::size_t words_for(std::size_t bits) noexcept { return (bits + 63) / 64; }

/// Packs sign(row) of every row; sign(0) = +1.
std::vector<std::uint64_t> pack_codes(const Matrix& codes);
/// +-1 entries of one packed code.
std::vector<double> unpack_code(std::span<const std::uint64_t> words, std::size_t bits);

/// Immutable database of packed codes with aligned labels and stable ids.
class PackedCodeDB {
 public:
  PackedCodeDB() = default;
  PackedCodeDB(std::size_t code_bits, std::vector<std::uint64_t> words, LabelMatrix labels,
               std::vector<std::uint64_t> ids);

  /// Binarizes `codes` (sign, 0 -> +1). Ids default to row indices.
  static PackedCodeDB from_codes(const Matrix& codes, LabelMatrix labels,
                                 std::vector<std::uint64_t> ids = {});

  std::size_t code_bits() const noexcept { return code_bits_; }
  std::size_t words_per_code() const noexcept { return words_for(code_bits_); }
  std::size_t size() const noexcept { return ids_.size(); }
  bool empty() const noexcept { return ids_.empty(); }

  std::span<const std::uint64_t> code(std::size_t i) const noexcept {
    return {words_.data() + i * words_per_code(), words_per_code()};
  }
  std::span<const std::uint64_t> words() const noexcept { return words_; }
  const LabelMatrix& labels() const noexcept { return labels_; }
  std::span<const std::uint64_t> ids() const noexcept { return ids_; }

  friend bool operator==(const PackedCodeDB&, const PackedCodeDB&) = default;

 private:
  std::size_t code_bits_ = 0;
  std::vector<std::uint64_t> words_;
  LabelMatrix labels_;
  std::vector<std::uint64_t> ids_;
};

/// sign(f_m(x)) packed, one item per row of x.
PackedCodeDB encode(const nets::MlpParams& params, const Matrix& x, LabelMatrix labels,
                    std::vector<std::uint64_t> ids = {});

/// Popcount of a XOR b over the first `bits` bits.
std::size_t distance(std::span<const std::uint64_t> a, std::span<const std::uint64_t> b,
                     std::size_t bits);

struct Hit {
  std::uint64_t id = 0;
  std::size_t distance = 0;

  friend bool operator==(const Hit&, const Hit&) = default;
};

struct RankedResult {
  std::uint64_t query_id = 0;
  std::vector<Hit> hits;       // distance ascending, ties by ascending id
  std::vector<bool> relevant;  // filled only when query labels were supplied
};

/// Full ranking of `db` by Hamming distance to `query`, truncated to k when given.
RankedResult retrieve(std::span<const std::uint64_t> query, const PackedCodeDB& db,
                      std::optional<std::size_t> k = std::nullopt);

/// Ranks `db` for item `qi` of `queries`, with relevance flags (shared label).
RankedResult retrieve(const PackedCodeDB& queries, std::size_t qi, const PackedCodeDB& db,
                      std::optional<std::size_t> k = std::nullopt);

struct MapReport {
  double map = 0.0;
  std::size_t evaluated = 0;  // queries with at least one relevant item within the radius
  std::size_t skipped = 0;    // queries with none
};

/// Mean average precision over the top `radius` ranked items (default: whole db).
/// Throws UndefinedMetric when no query has a relevant item.
MapReport mean_average_precision(const PackedCodeDB& queries, const PackedCodeDB& db,
                                 std::optional<std::size_t> radius = std::nullopt,
                                 unsigned threads = 1);

// Code DB file: "DSIBC", u16 version, u32 c, u32 n, u32 label_dim, then per item
// u64 id, ceil(c/64) u64 code words, ceil(label_dim/64) u64 label words.
// Little-endian; label bit k follows the same word/bit layout as code bits.
void save_db(const PackedCodeDB& db, std::ostream& out);
void save_db(const PackedCodeDB& db, const std::filesystem::path& path);
PackedCodeDB load_db(std::istream& in);
PackedCodeDB load_db(const std::filesystem::path& path);

}  // namespace dsibh::hamming
