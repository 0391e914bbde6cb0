#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <string>

namespace echonav {

inline constexpr int kBandCount = 4;
using BandArray = std::array<double, kBandCount>;

/// Per-band acoustic surface coefficients. Bands are [0,176], [176,775], [775,3409] and
/// [3409,20000] Hz.
struct AcousticMaterial {
  std::string name;
  BandArray absorption{};
  BandArray scattering{};
  BandArray transmission{};

  /// Energy fraction that leaves the surface on the incident side, 1 - absorption - transmission.
  double reflectance(int band) const { return 1.0 - absorption[band] - transmission[band]; }

  /// Throws ValidationError unless every coefficient is in [0,1] and absorption + transmission
  /// does not exceed 1 in any band.
  void validate() const;
};

/// Semantic class -> material mapping with a fallback for unmapped classes.
class MaterialDb {
 public:
  /// Built-in approximate table from typical room-acoustics absorption ranges.
  static MaterialDb defaults();

  /// Single material assigned to every class (used by oracle tests).
  static MaterialDb uniform(const AcousticMaterial& material);

  void add_material(AcousticMaterial material);
  void map_class(const std::string& cls, const std::string& material);
  void set_default(const std::string& material);

  const AcousticMaterial& lookup(const std::string& cls) const;
  const AcousticMaterial* find_material(const std::string& name) const;
  const AcousticMaterial& default_material() const;

  const std::map<std::string, AcousticMaterial>& materials() const { return materials_; }
  const std::map<std::string, std::string>& class_map() const { return class_map_; }
  const std::string& default_name() const { return default_name_; }

  void validate() const;

 private:
  std::map<std::string, AcousticMaterial> materials_;
  std::map<std::string, std::string> class_map_;
  std::string default_name_;
};

/// Material JSON: { "materials": {name: {"absorption":[4], "scattering":[4],
/// "transmission":[4]}}, "class_map": {class: name}, "default": name }. Without a path the
/// built-in defaults are returned.
MaterialDb load_material_db(const std::optional<std::filesystem::path>& path = std::nullopt);
MaterialDb parse_material_db(const std::string& json_text);
std::string material_db_to_json(const MaterialDb& db);

const AcousticMaterial& lookup_material(const MaterialDb& db, const std::string& cls);

}  // namespace echonav
