#include "dsibh/dataio.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>

#include "dsibh/binio.hpp"
#include "dsibh/error.hpp"

namespace dsibh::dataio {

namespace {

constexpr std::string_view kFeatureMagic = "DSIBF";
constexpr std::string_view kLabelMagic = "DSIBL";

bool is_query(SplitTag t) { return t == SplitTag::query; }
bool is_retrieval(SplitTag t) { return t != SplitTag::query; }
bool is_train(SplitTag t) { return t == SplitTag::train; }

std::uint32_t checked_u32(std::size_t v, const char* what) {
  if (v > 0xffffffffULL) throw InvalidArgument(std::string(what) + ": dimension exceeds u32");
  return static_cast<std::uint32_t>(v);
}

LabelMatrix parse_label_csv(std::istream& in) {
  std::vector<std::uint8_t> bits;
  std::size_t rows = 0, cols = 0;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    std::size_t count = 0;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      const auto b = cell.find_first_not_of(" \t");
      const auto e = cell.find_last_not_of(" \t");
      const std::string v = b == std::string::npos ? "" : cell.substr(b, e - b + 1);
      if (v != "0" && v != "1") {
        throw FormatError("label CSV: line " + std::to_string(line_no) + ": expected 0 or 1, got \"" + v + "\"");
      }
      bits.push_back(v == "1" ? 1 : 0);
      ++count;
    }
    if (rows == 0) cols = count;
    if (count != cols) {
      throw FormatError("label CSV: line " + std::to_string(line_no) + " has " + std::to_string(count) +
                        " columns, expected " + std::to_string(cols));
    }
    ++rows;
  }
  return LabelMatrix(rows, cols, std::move(bits));
}

}  // namespace

void DatasetBundle::validate() const {
  const std::size_t n = y.rows();
  if (x1.rows() != n || x2.rows() != n) {
    throw InvalidArgument("DatasetBundle: modality row counts (" + std::to_string(x1.rows()) + ", " +
                          std::to_string(x2.rows()) + ") differ from label rows " + std::to_string(n));
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (y.row_is_empty(i)) throw InvalidArgument("DatasetBundle: label row " + std::to_string(i) + " is all zero");
  }
  if (!tags.empty() && tags.size() != n) throw InvalidArgument("DatasetBundle: one split tag per row required");
}

std::vector<std::size_t> DatasetBundle::rows_where(bool (*pred)(SplitTag)) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < tags.size(); ++i)
    if (pred(tags[i])) out.push_back(i);
  return out;
}

std::vector<std::size_t> DatasetBundle::query_rows() const { return rows_where(is_query); }
std::vector<std::size_t> DatasetBundle::retrieval_rows() const { return rows_where(is_retrieval); }
std::vector<std::size_t> DatasetBundle::train_rows() const { return rows_where(is_train); }

void SynthSpec::validate() const {
  if (class_count == 0 || samples_per_class == 0 || d1 == 0 || d2 == 0) {
    throw InvalidArgument("SynthSpec: counts and dimensions must be >= 1");
  }
  if (label_dim < class_count) throw InvalidArgument("SynthSpec: label_dim must be >= class_count");
  if (!(noise_sigma >= 0.0)) throw InvalidArgument("SynthSpec: noise_sigma must be >= 0");
  if (!(multilabel_rate >= 0.0 && multilabel_rate <= 1.0)) {
    throw InvalidArgument("SynthSpec: multilabel_rate must be in [0, 1]");
  }
}

DatasetBundle generate_synthetic(const SynthSpec& spec) {
  spec.validate();
  numkit::Rng rng(spec.seed);
  Matrix prototypes(spec.class_count, kLatentDim);
  for (double& v : prototypes.data()) v = rng.normal();
  const double map_scale = 1.0 / std::sqrt(static_cast<double>(kLatentDim));
  Matrix a1(spec.d1, kLatentDim), a2(spec.d2, kLatentDim);
  for (double& v : a1.data()) v = map_scale * rng.normal();
  for (double& v : a2.data()) v = map_scale * rng.normal();
  const Matrix clean1 = numkit::matmul_nt(prototypes, a1);  // classes x d1
  const Matrix clean2 = numkit::matmul_nt(prototypes, a2);

  const std::size_t n = spec.class_count * spec.samples_per_class;
  DatasetBundle b{Matrix(n, spec.d1), Matrix(n, spec.d2), LabelMatrix(n, spec.label_dim), {}};
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t cls = i / spec.samples_per_class;
    for (std::size_t k = 0; k < spec.d1; ++k) b.x1(i, k) = clean1(cls, k) + spec.noise_sigma * rng.normal();
    for (std::size_t k = 0; k < spec.d2; ++k) b.x2(i, k) = clean2(cls, k) + spec.noise_sigma * rng.normal();
    b.y.set(i, cls, true);
    if (spec.class_count > 1 && rng.bernoulli(spec.multilabel_rate)) {
      std::size_t other = static_cast<std::size_t>(rng.below(spec.class_count - 1));
      if (other >= cls) ++other;
      b.y.set(i, other, true);
    }
  }
  return b;
}

std::vector<SplitTag> split_tags(std::size_t n, std::size_t query_count, std::size_t train_count,
                                 std::uint64_t seed) {
  if (query_count + 1 > n) {
    throw InvalidArgument("split: query_count " + std::to_string(query_count) +
                          " leaves no retrieval rows out of " + std::to_string(n));
  }
  if (train_count > n - query_count) {
    throw InvalidArgument("split: train_count " + std::to_string(train_count) + " exceeds the " +
                          std::to_string(n - query_count) + " retrieval rows");
  }
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  numkit::Rng rng(seed);
  rng.shuffle(std::span<std::size_t>(perm));
  std::vector<SplitTag> tags(n, SplitTag::retrieval);
  for (std::size_t i = 0; i < query_count; ++i) tags[perm[i]] = SplitTag::query;
  for (std::size_t i = query_count; i < query_count + train_count; ++i) tags[perm[i]] = SplitTag::train;
  return tags;
}

DatasetBundle split(DatasetBundle bundle, std::size_t query_count, std::size_t train_count,
                    std::uint64_t seed) {
  bundle.tags = split_tags(bundle.size(), query_count, train_count, seed);
  return bundle;
}

void save_features(const Matrix& m, std::ostream& out) {
  binio::put_magic(out, kFeatureMagic);
  binio::put_uint<std::uint32_t>(out, checked_u32(m.rows(), "save_features"));
  binio::put_uint<std::uint32_t>(out, checked_u32(m.cols(), "save_features"));
  for (double v : m.data()) binio::put_f32(out, static_cast<float>(v));
  if (!out) throw FormatError("save_features: write failed");
}

void save_features(const Matrix& m, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("save_features: cannot open " + path.string());
  save_features(m, out);
}

Matrix load_features(std::istream& in) {
  binio::Reader r(in, "feature file");
  r.expect_magic(kFeatureMagic);
  const auto rows = r.uint<std::uint32_t>();
  const auto cols = r.uint<std::uint32_t>();
  const std::size_t count = static_cast<std::size_t>(rows) * cols;
  std::vector<char> raw(count * 4);
  r.read(raw.data(), raw.size());
  r.expect_end();
  Matrix m(rows, cols);
  for (std::size_t i = 0; i < count; ++i) {
    std::uint32_t u = 0;
    for (int b = 0; b < 4; ++b) u |= static_cast<std::uint32_t>(static_cast<unsigned char>(raw[i * 4 + b])) << (8 * b);
    m.data()[i] = std::bit_cast<float>(u);
  }
  if (!m.all_finite()) throw FormatError("feature file: non-finite value");
  return m;
}

Matrix load_features(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("load_features: cannot open " + path.string());
  return load_features(in);
}

void save_labels(const LabelMatrix& y, std::ostream& out) {
  binio::put_magic(out, kLabelMagic);
  binio::put_uint<std::uint32_t>(out, checked_u32(y.rows(), "save_labels"));
  binio::put_uint<std::uint32_t>(out, checked_u32(y.cols(), "save_labels"));
  for (std::size_t i = 0; i < y.rows(); ++i)
    for (std::uint8_t b : y.row(i)) binio::put_uint<std::uint8_t>(out, b);
  if (!out) throw FormatError("save_labels: write failed");
}

void save_labels(const LabelMatrix& y, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("save_labels: cannot open " + path.string());
  save_labels(y, out);
}

void save_labels_csv(const LabelMatrix& y, std::ostream& out) {
  for (std::size_t i = 0; i < y.rows(); ++i) {
    for (std::size_t k = 0; k < y.cols(); ++k) out << (k ? "," : "") << static_cast<int>(y(i, k));
    out << '\n';
  }
}

LabelMatrix load_labels(std::istream& in) {
  char head[5] = {};
  in.read(head, 5);
  const auto got = static_cast<std::size_t>(in.gcount());
  in.clear();
  in.seekg(0);
  if (got == 5 && std::string_view(head, 5) == kLabelMagic) {
    binio::Reader r(in, "label file");
    r.expect_magic(kLabelMagic);
    const auto rows = r.uint<std::uint32_t>();
    const auto cols = r.uint<std::uint32_t>();
    std::vector<std::uint8_t> bits(static_cast<std::size_t>(rows) * cols);
    r.read(reinterpret_cast<char*>(bits.data()), bits.size());
    r.expect_end();
    if (std::any_of(bits.begin(), bits.end(), [](std::uint8_t b) { return b > 1; })) {
      throw FormatError("label file: entries must be 0 or 1");
    }
    return LabelMatrix(rows, cols, std::move(bits));
  }
  return parse_label_csv(in);
}

LabelMatrix load_labels(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("load_labels: cannot open " + path.string());
  return load_labels(in);
}

}  // namespace dsibh::dataio
