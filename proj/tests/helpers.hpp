#pragma once

#include <filesystem>
#include <optional>
#include <random>
#include <string>

#include "privgap/error.hpp"

namespace testing {

/// Fresh directory under the system temp dir, removed on destruction.
struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path = std::filesystem::temp_directory_path() /
           ("privgap_" + tag + "_" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
};

/// Code of the privgap::Error thrown by f, or nothing.
template <typename F>
std::optional<privgap::ErrorCode> error_of(F&& f) {
  try {
    f();
  } catch (const privgap::Error& e) {
    return e.code();
  }
  return std::nullopt;
}

}  // namespace testing
