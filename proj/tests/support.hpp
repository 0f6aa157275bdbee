#pragma once

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <iterator>
#include <random>
#include <string>

#include "mtmask/net/tensor.hpp"
#include "mtmask/raster.hpp"
#include "mtmask/rng.hpp"

namespace test_support {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() / ("mtmask_" + tag + "_" + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const noexcept { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
  std::filesystem::path path_;
};

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

template <typename T>
mtmask::net::Tensor<T> random_tensor(std::vector<int> shape, mtmask::Rng& rng, double lo = -1.0, double hi = 1.0) {
  mtmask::net::Tensor<T> t(std::move(shape));
  for (auto& v : t.data) v = static_cast<T>(rng.uniform(lo, hi));
  return t;
}

inline mtmask::MaskPlane random_mask(int w, int h, double p, mtmask::Rng& rng) {
  mtmask::MaskPlane m(w, h);
  for (auto& v : m.values) v = rng.uniform() < p ? 1 : 0;
  return m;
}

}  // namespace test_support
