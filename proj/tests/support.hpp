#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dsibh/labels.hpp"
#include "dsibh/numkit.hpp"

namespace testing {

using dsibh::LabelMatrix;
using dsibh::numkit::Matrix;
using dsibh::numkit::Rng;

inline Matrix random_matrix(std::size_t r, std::size_t c, Rng& rng, double scale = 1.0) {
  Matrix m(r, c);
  for (double& v : m.data()) v = scale * rng.normal();
  return m;
}

inline Matrix random_codes(std::size_t r, std::size_t c, Rng& rng) {
  Matrix m(r, c);
  for (double& v : m.data()) v = rng.bernoulli(0.5) ? 1.0 : -1.0;
  return m;
}

inline Matrix random_relaxed(std::size_t r, std::size_t c, Rng& rng) {
  Matrix m(r, c);
  for (double& v : m.data()) v = rng.uniform(-0.95, 0.95);
  return m;
}

// Every row gets at least one label.
inline LabelMatrix random_labels(std::size_t r, std::size_t c, Rng& rng, double p = 0.3) {
  LabelMatrix y(r, c);
  for (std::size_t i = 0; i < r; ++i) {
    y.set(i, rng.below(c), true);
    for (std::size_t j = 0; j < c; ++j)
      if (rng.bernoulli(p)) y.set(i, j, true);
  }
  return y;
}

inline LabelMatrix one_hot(const std::vector<std::size_t>& cls, std::size_t classes) {
  LabelMatrix y(cls.size(), classes);
  for (std::size_t i = 0; i < cls.size(); ++i) y.set(i, cls[i], true);
  return y;
}

inline double brute_median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    path_ = std::filesystem::temp_directory_path() /
            ("dsibh_" + tag + "_" + std::to_string(reinterpret_cast<std::uintptr_t>(this)));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace testing
