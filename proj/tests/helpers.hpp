#pragma once

#include <unistd.h>

#include <atomic>
#include <filesystem>
#include <string>

#include <doctest.h>

#include "qmamba/error.hpp"
#include "qmamba/random.hpp"
#include "qmamba/tensor.hpp"

namespace qt {

using qmamba::ErrorCode;
using qmamba::Rng;
using qmamba::Tensor;

inline Tensor randn(Rng& rng, qmamba::Shape shape) { return rng.normal_tensor(std::move(shape)); }

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("qmamba_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
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

}  // namespace qt

#define QT_CHECK_ERROR(expr, expected_code)                                  \
  do {                                                                       \
    bool qt_thrown_ = false;                                                 \
    try {                                                                    \
      (void)(expr);                                                          \
    } catch (const qmamba::Error& qt_e_) {                                   \
      qt_thrown_ = true;                                                     \
      CHECK_MESSAGE(qt_e_.code() == (expected_code), qt_e_.what());          \
    }                                                                        \
    CHECK_MESSAGE(qt_thrown_, "expected qmamba::Error from " #expr);         \
  } while (0)
