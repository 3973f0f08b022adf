#include "doctest.h"

#include <cmath>
#include <sstream>

#include "dsibh/error.hpp"
#include "dsibh/hamming.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace dsibh;
using namespace dsibh::hamming;
using numkit::Rng;
using testing::random_codes;
using testing::random_labels;

namespace {

std::vector<std::uint64_t> shuffled_ids(std::size_t n, Rng& rng) {
  std::vector<std::uint64_t> ids(n);
  for (std::size_t i = 0; i < n; ++i) ids[i] = 1000 + 3 * i;
  rng.shuffle(std::span<std::uint64_t>(ids));
  return ids;
}

}  // namespace

TEST_CASE("packing convention") {
  const auto w = pack_codes(nets::sign(Matrix{{0.3, -0.9, 0.0}}));
  REQUIRE(w.size() == 1);
  CHECK(w[0] == 0b101u);
  CHECK(unpack_code(w, 3) == std::vector<double>{1, -1, 1});
}

TEST_CASE("words per code") {
  CHECK(words_for(16) == 1);
  CHECK(words_for(64) == 1);
  CHECK(words_for(65) == 2);
  CHECK(words_for(128) == 2);
}

TEST_CASE("packing round trip across word boundaries") {
  Rng rng(1);
  for (std::size_t c : {16u, 63u, 64u, 65u, 128u}) {
    const Matrix codes = random_codes(5, c, rng);
    const auto words = pack_codes(codes);
    for (std::size_t i = 0; i < 5; ++i) {
      const auto back = unpack_code(std::span<const std::uint64_t>(words).subspan(i * words_for(c), words_for(c)), c);
      for (std::size_t k = 0; k < c; ++k) CHECK(back[k] == codes(i, k));
    }
  }
}

TEST_CASE("database rejects stray tail bits") {
  CHECK_THROWS_AS(PackedCodeDB(3, {0b1000u}, LabelMatrix(1, 0), {0}), InvalidArgument);
  CHECK_NOTHROW(PackedCodeDB(3, {0b111u}, LabelMatrix(1, 0), {0}));
  CHECK_THROWS_AS(PackedCodeDB(3, {0b1u, 0b1u}, LabelMatrix(1, 0), {0}), InvalidArgument);
  CHECK_THROWS_AS(PackedCodeDB(3, {0b1u}, LabelMatrix(2, 0), {0}), InvalidArgument);
}

TEST_CASE("encode agrees with sign of forward outputs") {
  nets::NetSpec spec;
  spec.input_dim = 6;
  spec.hidden_dims = {10};
  spec.code_bits = 20;
  spec.init_seed = 3;
  const auto params = nets::init(spec);
  Rng rng(2);
  const Matrix x = testing::random_matrix(100, 6, rng);
  const PackedCodeDB db = encode(params, x, LabelMatrix(100, 0));
  const Matrix signs = nets::sign(nets::forward(params, x));
  for (std::size_t i = 0; i < 100; ++i) {
    const auto bits = unpack_code(db.code(i), 20);
    for (std::size_t k = 0; k < 20; ++k) CHECK(bits[k] == signs(i, k));
    CHECK(db.ids()[i] == i);
  }
  CHECK(encode(params, x, LabelMatrix(100, 0)) == db);
}

TEST_CASE("distance basics") {
  Rng rng(3);
  const Matrix a = random_codes(1, 16, rng);
  const auto wa = pack_codes(a);
  const auto wb = pack_codes(numkit::scaled(a, -1.0));
  CHECK(distance(wa, wa, 16) == 0);
  CHECK(distance(wa, wb, 16) == 16);
  const std::vector<std::uint64_t> two(2, 0);
  CHECK_THROWS_AS(distance(wa, two, 16), InvalidArgument);
}

TEST_CASE("distance matches the unpacked dot-product oracle") {
  Rng rng(4);
  for (std::size_t c : {16u, 64u, 100u, 128u}) {
    const Matrix a = random_codes(30, c, rng);
    const Matrix b = random_codes(30, c, rng);
    const auto pa = pack_codes(a), pb = pack_codes(b);
    const std::size_t w = words_for(c);
    for (std::size_t i = 0; i < 30; ++i) {
      const auto d = distance(std::span<const std::uint64_t>(pa).subspan(i * w, w),
                              std::span<const std::uint64_t>(pb).subspan(i * w, w), c);
      CHECK(d == oracle::hamming(a, i, b, i));
    }
  }
}

TEST_CASE("exact match ranks first and k bounds the list") {
  Rng rng(5);
  const Matrix codes = random_codes(20, 16, rng);
  const PackedCodeDB db = PackedCodeDB::from_codes(codes, LabelMatrix(20, 0));
  const auto r = retrieve(db.code(7), db, 5);
  REQUIRE(r.hits.size() == 5);
  CHECK(r.hits[0].distance == 0);
  CHECK(retrieve(db.code(7), db, 0).hits.empty());
  CHECK(retrieve(db.code(7), db, 100).hits.size() == 20);
  CHECK(retrieve(db.code(7), db).hits.size() == 20);
}

TEST_CASE("ties break by ascending id") {
  const Matrix codes(4, 16, 1.0);
  const PackedCodeDB db = PackedCodeDB::from_codes(codes, LabelMatrix(4, 0), {40, 10, 30, 20});
  const auto r = retrieve(db.code(0), db);
  std::vector<std::uint64_t> ids;
  for (const auto& h : r.hits) ids.push_back(h.id);
  CHECK(ids == std::vector<std::uint64_t>{10, 20, 30, 40});
}

TEST_CASE("retrieve matches a full-sort oracle") {
  Rng rng(6);
  for (std::size_t c : {16u, 64u, 128u}) {
    const Matrix q = random_codes(5, c, rng);
    const Matrix d = random_codes(200, c, rng);
    const auto ids = shuffled_ids(200, rng);
    const PackedCodeDB qdb = PackedCodeDB::from_codes(q, LabelMatrix(5, 0));
    const PackedCodeDB ddb = PackedCodeDB::from_codes(d, LabelMatrix(200, 0), ids);
    for (std::size_t i = 0; i < 5; ++i) {
      const auto got = retrieve(qdb.code(i), ddb);
      const auto want = oracle::rank(q, i, d, ids);
      REQUIRE(got.hits.size() == 200);
      for (std::size_t r = 0; r < 200; ++r) {
        CHECK(got.hits[r].id == ids[want.order[r]]);
        CHECK(got.hits[r].distance == want.dist[r]);
      }
    }
  }
}

TEST_CASE("retrieve rejects mismatched bit lengths") {
  Rng rng(7);
  const PackedCodeDB a = PackedCodeDB::from_codes(random_codes(2, 16, rng), LabelMatrix(2, 0));
  const PackedCodeDB b = PackedCodeDB::from_codes(random_codes(2, 128, rng), LabelMatrix(2, 0));
  CHECK_THROWS_AS(retrieve(a.code(0), b), InvalidArgument);
}

TEST_CASE("average precision of a hand-made ranking") {
  // Query relevant to ids 0 and 2; database ordered so relevance reads [1,0,1].
  Matrix q(1, 16, 1.0);
  Matrix d(3, 16, 1.0);
  d(1, 0) = -1.0;
  d(2, 0) = -1.0;
  d(2, 1) = -1.0;
  const PackedCodeDB qdb = PackedCodeDB::from_codes(q, testing::one_hot({0}, 2));
  const PackedCodeDB ddb = PackedCodeDB::from_codes(d, testing::one_hot({0, 1, 0}, 2));
  const MapReport r = mean_average_precision(qdb, ddb, 3);
  CHECK(r.map == doctest::Approx(0.5 * (1.0 + 2.0 / 3.0)).epsilon(1e-15));
  CHECK(r.evaluated == 1);
}

TEST_CASE("all relevant gives MAP one") {
  Rng rng(8);
  const Matrix d = random_codes(10, 16, rng);
  const LabelMatrix y = testing::one_hot(std::vector<std::size_t>(10, 0), 1);
  const PackedCodeDB db = PackedCodeDB::from_codes(d, y);
  CHECK(mean_average_precision(db, db).map == 1.0);
}

TEST_CASE("queries without relevant items are skipped, and no queries is undefined") {
  Rng rng(9);
  const PackedCodeDB q = PackedCodeDB::from_codes(random_codes(2, 16, rng), testing::one_hot({0, 1}, 3));
  const PackedCodeDB d = PackedCodeDB::from_codes(random_codes(4, 16, rng), testing::one_hot({0, 0, 2, 2}, 3));
  const MapReport r = mean_average_precision(q, d);
  CHECK(r.evaluated == 1);
  CHECK(r.skipped == 1);
  const PackedCodeDB none = PackedCodeDB::from_codes(random_codes(1, 16, rng), testing::one_hot({1}, 3));
  CHECK_THROWS_AS(mean_average_precision(none, d), UndefinedMetric);
}

TEST_CASE("MAP matches the naive oracle for any radius and thread count") {
  Rng rng(10);
  for (std::size_t c : {16u, 64u, 128u}) {
    const Matrix q = random_codes(20, c, rng);
    const Matrix d = random_codes(100, c, rng);
    const LabelMatrix ql = random_labels(20, 4, rng, 0.1);
    const LabelMatrix dl = random_labels(100, 4, rng, 0.1);
    const auto ids = shuffled_ids(100, rng);
    const PackedCodeDB qdb = PackedCodeDB::from_codes(q, ql);
    const PackedCodeDB ddb = PackedCodeDB::from_codes(d, dl, ids);
    for (std::size_t radius : {100u, 10u, 1u}) {
      const double want = oracle::map(q, ql, d, dl, ids, radius);
      for (unsigned threads : {1u, 3u}) CHECK(std::abs(mean_average_precision(qdb, ddb, radius, threads).map - want) < 1e-12);
    }
  }
}

TEST_CASE("MAP rejects incompatible inputs") {
  Rng rng(11);
  const PackedCodeDB a = PackedCodeDB::from_codes(random_codes(2, 16, rng), testing::one_hot({0, 1}, 2));
  const PackedCodeDB b = PackedCodeDB::from_codes(random_codes(2, 32, rng), testing::one_hot({0, 1}, 2));
  const PackedCodeDB c = PackedCodeDB::from_codes(random_codes(2, 16, rng), testing::one_hot({0, 1}, 3));
  CHECK_THROWS_AS(mean_average_precision(a, b), InvalidArgument);
  CHECK_THROWS_AS(mean_average_precision(a, c), InvalidArgument);
}

TEST_CASE("code database file round trip and corruption") {
  Rng rng(12);
  const PackedCodeDB db =
      PackedCodeDB::from_codes(random_codes(7, 70, rng), random_labels(7, 5, rng), shuffled_ids(7, rng));
  std::stringstream ss;
  save_db(db, ss);
  const std::string bytes = ss.str();
  CHECK(load_db(ss) == db);
  std::stringstream cut(bytes.substr(0, bytes.size() - 1));
  CHECK_THROWS_AS(load_db(cut), FormatError);
  std::string flipped = bytes;
  flipped[0] = 'X';
  std::stringstream bad(flipped);
  CHECK_THROWS_AS(load_db(bad), FormatError);
}
