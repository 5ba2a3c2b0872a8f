// Copyright 2026 The DOS-SID Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <dos/embeddings.hpp>
#include <dos/random.hpp>
#include <dos/tensor.hpp>

#include <gtest/gtest.h>

#include <cstddef>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <random>
#include <string>
#include <vector>

namespace dos::test {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    std::string tag = info ? std::string(info->test_suite_name()) + "_" + info->name() : "dos";
    for (char& c : tag)
      if (c == '/') c = '_';
    path_ = std::filesystem::temp_directory_path() / ("dos_test_" + tag);
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline Tensor random_tensor(std::size_t rows, std::size_t cols, Rng& rng, double stddev = 1.0) {
  return normal_tensor(rows, cols, stddev, rng);
}

// Small corpus with the default hierarchy; quick enough for unit tests.
inline SyntheticConfig small_synthetic(std::size_t n_items = 256, std::size_t n_samples = 2000) {
  SyntheticConfig cfg;
  cfg.n_items = n_items;
  cfg.dim = 16;
  cfg.n_users = 64;
  cfg.seq_len = 4;
  cfg.n_samples = n_samples;
  return cfg;
}

}  // namespace dos::test
