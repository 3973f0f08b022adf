#include "dsibh/hamming.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <fstream>
#include <numeric>
#include <string>
#include <thread>

#include "dsibh/binio.hpp"
#include "dsibh/error.hpp"

namespace dsibh::hamming {

namespace {

constexpr std::string_view kDbMagic = "DSIBC";
constexpr std::uint16_t kDbVersion = 1;

std::uint64_t tail_mask(std::size_t bits) noexcept {
  const std::size_t r = bits % 64;
  return r == 0 ? ~std::uint64_t{0} : (std::uint64_t{1} << r) - 1;
}

std::vector<std::uint64_t> pack_labels(const LabelMatrix& labels) {
  const std::size_t wpl = words_for(labels.cols());
  std::vector<std::uint64_t> out(labels.rows() * wpl, 0);
  for (std::size_t i = 0; i < labels.rows(); ++i)
    for (std::size_t k = 0; k < labels.cols(); ++k)
      if (labels(i, k)) out[i * wpl + k / 64] |= std::uint64_t{1} << (k % 64);
  return out;
}

bool share_label(std::span<const std::uint64_t> a, std::span<const std::uint64_t> b) noexcept {
  for (std::size_t w = 0; w < a.size(); ++w)
    if (a[w] & b[w]) return true;
  return false;
}

// Row order of db sorted by ascending id; ranking ties resolve in this order.
std::vector<std::size_t> id_order(const PackedCodeDB& db) {
  std::vector<std::size_t> order(db.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return db.ids()[a] < db.ids()[b]; });
  return order;
}

// Counting sort over the c + 1 possible distances; returns db row indices.
void rank_rows(std::span<const std::uint64_t> query, const PackedCodeDB& db,
               std::span<const std::size_t> by_id, std::vector<std::size_t>& dist,
               std::vector<std::size_t>& ranked) {
  const std::size_t c = db.code_bits();
  dist.resize(db.size());
  std::vector<std::size_t> bucket(c + 2, 0);
  for (std::size_t i = 0; i < db.size(); ++i) {
    dist[i] = distance(query, db.code(i), c);
    ++bucket[dist[i] + 1];
  }
  for (std::size_t d = 1; d < bucket.size(); ++d) bucket[d] += bucket[d - 1];
  ranked.resize(db.size());
  for (std::size_t row : by_id) ranked[bucket[dist[row]]++] = row;
}

}  // namespace

std::vector<std::uint64_t> pack_codes(const Matrix& codes) {
  const std::size_t wpc = words_for(codes.cols());
  std::vector<std::uint64_t> out(codes.rows() * wpc, 0);
  for (std::size_t i = 0; i < codes.rows(); ++i) {
    const auto row = codes.row(i);
    for (std::size_t k = 0; k < row.size(); ++k)
      if (nets::sign(row[k]) > 0.0) out[i * wpc + k / 64] |= std::uint64_t{1} << (k % 64);
  }
  return out;
}

std::vector<double> unpack_code(std::span<const std::uint64_t> words, std::size_t bits) {
  if (words.size() != words_for(bits)) throw InvalidArgument("unpack_code: word count mismatch");
  std::vector<double> out(bits);
  for (std::size_t k = 0; k < bits; ++k) out[k] = (words[k / 64] >> (k % 64)) & 1 ? 1.0 : -1.0;
  return out;
}

PackedCodeDB::PackedCodeDB(std::size_t code_bits, std::vector<std::uint64_t> words,
                           LabelMatrix labels, std::vector<std::uint64_t> ids)
    : code_bits_(code_bits), words_(std::move(words)), labels_(std::move(labels)), ids_(std::move(ids)) {
  if (code_bits_ == 0) throw InvalidArgument("PackedCodeDB: code_bits must be >= 1");
  const std::size_t wpc = words_per_code();
  if (words_.size() != ids_.size() * wpc) {
    throw InvalidArgument("PackedCodeDB: " + std::to_string(words_.size()) + " words for " +
                          std::to_string(ids_.size()) + " items of " + std::to_string(wpc) + " words");
  }
  if (labels_.rows() != ids_.size()) {
    throw InvalidArgument("PackedCodeDB: label rows " + std::to_string(labels_.rows()) +
                          " != item count " + std::to_string(ids_.size()));
  }
  const std::uint64_t mask = tail_mask(code_bits_);
  for (std::size_t i = 0; i < ids_.size(); ++i) {
    if (words_[i * wpc + wpc - 1] & ~mask) {
      throw InvalidArgument("PackedCodeDB: bits beyond code length are set in item " + std::to_string(i));
    }
  }
}

PackedCodeDB PackedCodeDB::from_codes(const Matrix& codes, LabelMatrix labels,
                                      std::vector<std::uint64_t> ids) {
  if (ids.empty()) {
    ids.resize(codes.rows());
    std::iota(ids.begin(), ids.end(), std::uint64_t{0});
  }
  if (ids.size() != codes.rows()) throw InvalidArgument("PackedCodeDB::from_codes: one id per row required");
  if (labels.rows() == 0 && labels.cols() == 0) labels = LabelMatrix(codes.rows(), 0);
  return PackedCodeDB(codes.cols(), pack_codes(codes), std::move(labels), std::move(ids));
}

PackedCodeDB encode(const nets::MlpParams& params, const Matrix& x, LabelMatrix labels,
                    std::vector<std::uint64_t> ids) {
  return PackedCodeDB::from_codes(nets::forward(params, x), std::move(labels), std::move(ids));
}

std::size_t distance(std::span<const std::uint64_t> a, std::span<const std::uint64_t> b,
                     std::size_t bits) {
  const std::size_t wpc = words_for(bits);
  if (a.size() != wpc || b.size() != wpc) {
    throw InvalidArgument("distance: code lengths do not match " + std::to_string(bits) + " bits");
  }
  if (wpc == 0) return 0;
  std::size_t d = 0;
  for (std::size_t w = 0; w + 1 < wpc; ++w) d += static_cast<std::size_t>(std::popcount(a[w] ^ b[w]));
  d += static_cast<std::size_t>(std::popcount((a[wpc - 1] ^ b[wpc - 1]) & tail_mask(bits)));
  return d;
}

RankedResult retrieve(std::span<const std::uint64_t> query, const PackedCodeDB& db,
                      std::optional<std::size_t> k) {
  RankedResult result;
  if (db.empty()) return result;
  if (query.size() != db.words_per_code()) {
    throw InvalidArgument("retrieve: query has " + std::to_string(query.size()) +
                          " words, database codes have " + std::to_string(db.words_per_code()));
  }
  const auto by_id = id_order(db);
  std::vector<std::size_t> dist, ranked;
  rank_rows(query, db, by_id, dist, ranked);
  const std::size_t keep = std::min(k.value_or(db.size()), db.size());
  result.hits.reserve(keep);
  for (std::size_t r = 0; r < keep; ++r) result.hits.push_back({db.ids()[ranked[r]], dist[ranked[r]]});
  return result;
}

RankedResult retrieve(const PackedCodeDB& queries, std::size_t qi, const PackedCodeDB& db,
                      std::optional<std::size_t> k) {
  if (qi >= queries.size()) throw InvalidArgument("retrieve: query index out of range");
  if (queries.code_bits() != db.code_bits()) throw InvalidArgument("retrieve: bit lengths differ");
  RankedResult result;
  result.query_id = queries.ids()[qi];
  if (db.empty()) return result;
  if (queries.labels().cols() != db.labels().cols()) throw InvalidArgument("retrieve: label widths differ");
  const auto by_id = id_order(db);
  std::vector<std::size_t> dist, ranked;
  rank_rows(queries.code(qi), db, by_id, dist, ranked);
  const std::size_t keep = std::min(k.value_or(db.size()), db.size());
  for (std::size_t r = 0; r < keep; ++r) {
    result.hits.push_back({db.ids()[ranked[r]], dist[ranked[r]]});
    const auto q = queries.labels().row(qi);
    const auto it = db.labels().row(ranked[r]);
    bool rel = false;
    for (std::size_t c = 0; c < q.size() && !rel; ++c) rel = q[c] && it[c];
    result.relevant.push_back(rel);
  }
  return result;
}

MapReport mean_average_precision(const PackedCodeDB& queries, const PackedCodeDB& db,
                                 std::optional<std::size_t> radius, unsigned threads) {
  if (queries.code_bits() != db.code_bits()) {
    throw InvalidArgument("mean_average_precision: bit lengths differ (" +
                          std::to_string(queries.code_bits()) + " vs " + std::to_string(db.code_bits()) + ")");
  }
  if (queries.labels().cols() != db.labels().cols() || db.labels().cols() == 0) {
    throw InvalidArgument("mean_average_precision: both sides need labels of the same width");
  }
  const std::size_t depth = std::min(radius.value_or(db.size()), db.size());
  const auto q_labels = pack_labels(queries.labels());
  const auto d_labels = pack_labels(db.labels());
  const std::size_t wpl = words_for(db.labels().cols());
  const auto by_id = id_order(db);

  // Per-query AP, NaN marking a query without relevant items.
  std::vector<double> ap(queries.size(), 0.0);
  auto work = [&](std::size_t begin, std::size_t end) {
    std::vector<std::size_t> dist, ranked;
    for (std::size_t q = begin; q < end; ++q) {
      rank_rows(queries.code(q), db, by_id, dist, ranked);
      const std::span<const std::uint64_t> ql(q_labels.data() + q * wpl, wpl);
      std::size_t hits = 0;
      double acc = 0.0;
      for (std::size_t j = 0; j < depth; ++j) {
        const std::span<const std::uint64_t> dl(d_labels.data() + ranked[j] * wpl, wpl);
        if (share_label(ql, dl)) {
          ++hits;
          acc += static_cast<double>(hits) / static_cast<double>(j + 1);
        }
      }
      ap[q] = hits == 0 ? std::numeric_limits<double>::quiet_NaN() : acc / static_cast<double>(hits);
    }
  };
  const std::size_t n = queries.size();
  const std::size_t workers = std::clamp<std::size_t>(threads, 1, std::max<std::size_t>(n, 1));
  if (workers == 1) {
    work(0, n);
  } else {
    std::vector<std::jthread> pool;
    const std::size_t chunk = (n + workers - 1) / workers;
    for (std::size_t w = 0; w < workers; ++w) {
      const std::size_t b = std::min(n, w * chunk);
      const std::size_t e = std::min(n, b + chunk);
      pool.emplace_back(work, b, e);
    }
  }

  MapReport report;
  double total = 0.0;
  for (double v : ap) {
    if (std::isnan(v)) {
      ++report.skipped;
    } else {
      total += v;
      ++report.evaluated;
    }
  }
  if (report.evaluated == 0) {
    throw UndefinedMetric("mean_average_precision: no query has a relevant item in the database");
  }
  report.map = total / static_cast<double>(report.evaluated);
  return report;
}

void save_db(const PackedCodeDB& db, std::ostream& out) {
  binio::put_magic(out, kDbMagic);
  binio::put_uint<std::uint16_t>(out, kDbVersion);
  binio::put_uint<std::uint32_t>(out, static_cast<std::uint32_t>(db.code_bits()));
  binio::put_uint<std::uint32_t>(out, static_cast<std::uint32_t>(db.size()));
  binio::put_uint<std::uint32_t>(out, static_cast<std::uint32_t>(db.labels().cols()));
  const auto labels = pack_labels(db.labels());
  const std::size_t wpl = words_for(db.labels().cols());
  for (std::size_t i = 0; i < db.size(); ++i) {
    binio::put_uint<std::uint64_t>(out, db.ids()[i]);
    for (std::uint64_t w : db.code(i)) binio::put_uint<std::uint64_t>(out, w);
    for (std::size_t w = 0; w < wpl; ++w) binio::put_uint<std::uint64_t>(out, labels[i * wpl + w]);
  }
  if (!out) throw FormatError("save_db: write failed");
}

void save_db(const PackedCodeDB& db, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("save_db: cannot open " + path.string());
  save_db(db, out);
}

PackedCodeDB load_db(std::istream& in) {
  binio::Reader r(in, "code DB");
  r.expect_magic(kDbMagic);
  const auto version = r.uint<std::uint16_t>();
  if (version != kDbVersion) throw r.error("unsupported version " + std::to_string(version));
  const auto bits = r.uint<std::uint32_t>();
  const auto n = r.uint<std::uint32_t>();
  const auto label_dim = r.uint<std::uint32_t>();
  if (bits == 0) throw r.error("code length is zero");
  const std::size_t wpc = words_for(bits);
  const std::size_t wpl = words_for(label_dim);
  const std::uint64_t code_mask = tail_mask(bits);
  const std::uint64_t label_mask = tail_mask(label_dim);
  std::vector<std::uint64_t> ids(n), words(static_cast<std::size_t>(n) * wpc);
  LabelMatrix labels(n, label_dim);
  for (std::size_t i = 0; i < n; ++i) {
    ids[i] = r.uint<std::uint64_t>();
    for (std::size_t w = 0; w < wpc; ++w) words[i * wpc + w] = r.uint<std::uint64_t>();
    if (words[i * wpc + wpc - 1] & ~code_mask) throw r.error("bits set beyond code length");
    for (std::size_t w = 0; w < wpl; ++w) {
      const std::uint64_t lw = r.uint<std::uint64_t>();
      if (w + 1 == wpl && (lw & ~label_mask)) throw r.error("bits set beyond label width");
      for (std::size_t b = 0; b < 64 && w * 64 + b < label_dim; ++b)
        labels.set(i, w * 64 + b, (lw >> b) & 1);
    }
  }
  r.expect_end();
  return PackedCodeDB(bits, std::move(words), std::move(labels), std::move(ids));
}

PackedCodeDB load_db(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("load_db: cannot open " + path.string());
  return load_db(in);
}

}  // namespace dsibh::hamming
