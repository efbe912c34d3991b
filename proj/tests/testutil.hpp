#pragma once

#include <filesystem>
#include <string>

#include "oadn/rng.hpp"
#include "oadn/sinogram.hpp"

namespace testutil {

// Unique scratch directory under the build tree, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("oadn_" + tag + "_" + std::to_string(++counter) + "_" +
             std::to_string(static_cast<unsigned>(::getpid())));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

// Sinogram with f32-representable random samples (valid for bit-exact
// round-trip checks through the f32 on-disk format).
inline oadn::Sinogram random_sinogram(std::size_t d, std::size_t t, double fs,
                                      std::uint64_t seed,
                                      const std::string& label = "test") {
  oadn::Sinogram s(d, t, fs);
  oadn::Rng rng({seed}, label);
  for (double& v : s.data)
    v = static_cast<float>(rng.gaussian());  // round to f32 before widening
  return s;
}

}  // namespace testutil
