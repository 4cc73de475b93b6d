#pragma once

#include <gtest/gtest.h>

#include <filesystem>
#include <string>

#include "tada/errors.hpp"

#define EXPECT_TADA_ERROR(stmt, k)                                     \
  do {                                                                 \
    try {                                                              \
      stmt;                                                            \
      ADD_FAILURE() << "expected " << tada::to_string(k) << " error";  \
    } catch (const tada::Error& e) {                                   \
      EXPECT_EQ(e.kind(), k) << e.what();                              \
    }                                                                  \
  } while (0)

namespace tada::testing {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    path_ = std::filesystem::temp_directory_path() /
            ("tada_" + tag + "_" + (info ? std::string(info->name()) : "x"));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() { std::filesystem::remove_all(path_); }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace tada::testing
