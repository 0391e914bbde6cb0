#pragma once

#include <filesystem>
#include <random>
#include <string>

#include "echonav/materials.hpp"

namespace testing_support {

/// Fresh scratch directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() / ("echonav_" + tag + "_" + std::to_string(rd()));
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

inline echonav::MaterialDb flat_material(double absorption, double scattering, double transmission = 0.0) {
  echonav::AcousticMaterial m;
  m.name = "flat";
  m.absorption.fill(absorption);
  m.scattering.fill(scattering);
  m.transmission.fill(transmission);
  return echonav::MaterialDb::uniform(m);
}

}  // namespace testing_support
