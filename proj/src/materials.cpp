#include "echonav/materials.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "echonav/errors.hpp"

namespace echonav {

namespace {

constexpr const char* kDefaultMaterial = "default";

void check_unit(const BandArray& values, const std::string& what, const std::string& name) {
  for (double v : values)
    if (!(v >= 0.0 && v <= 1.0))
      throw ValidationError("material '" + name + "': " + what + " coefficient " + std::to_string(v) +
                            " outside [0,1]");
}

BandArray parse_bands(const nlohmann::json& j, const std::string& field, const std::string& name) {
  if (!j.contains(field)) throw ParseError("material '" + name + "' lacks \"" + field + "\"");
  const auto& arr = j[field];
  if (!arr.is_array() || arr.size() != kBandCount)
    throw ParseError("material '" + name + "': \"" + field + "\" must hold 4 numbers");
  BandArray out{};
  for (int b = 0; b < kBandCount; ++b) {
    if (!arr[b].is_number()) throw ParseError("material '" + name + "': non-numeric coefficient");
    out[b] = arr[b].get<double>();
  }
  return out;
}

}  // namespace

void AcousticMaterial::validate() const {
  check_unit(absorption, "absorption", name);
  check_unit(scattering, "scattering", name);
  check_unit(transmission, "transmission", name);
  for (int b = 0; b < kBandCount; ++b)
    if (absorption[b] + transmission[b] > 1.0 + 1e-12)
      throw ValidationError("material '" + name + "': absorption + transmission exceeds 1 in band " +
                            std::to_string(b));
}

MaterialDb MaterialDb::defaults() {
  // Approximate octave-band values folded onto the four simulation bands.
  MaterialDb db;
  db.add_material({"carpet", {0.05, 0.15, 0.35, 0.55}, {0.10, 0.20, 0.30, 0.40}, {0.0, 0.0, 0.0, 0.0}});
  db.add_material({"gypsum board", {0.29, 0.08, 0.05, 0.08}, {0.10, 0.10, 0.15, 0.20},
                   {0.04, 0.02, 0.01, 0.005}});
  db.add_material({"acoustic tile", {0.30, 0.55, 0.75, 0.70}, {0.10, 0.20, 0.30, 0.40},
                   {0.0, 0.0, 0.0, 0.0}});
  db.add_material({"wood", {0.19, 0.10, 0.07, 0.09}, {0.10, 0.15, 0.20, 0.25}, {0.02, 0.01, 0.005, 0.0}});
  db.add_material({"glass", {0.35, 0.18, 0.05, 0.02}, {0.05, 0.05, 0.05, 0.05}, {0.10, 0.08, 0.05, 0.03}});
  db.add_material({"fabric", {0.10, 0.35, 0.60, 0.65}, {0.40, 0.50, 0.60, 0.70}, {0.0, 0.0, 0.0, 0.0}});
  db.add_material({"concrete", {0.01, 0.02, 0.02, 0.03}, {0.10, 0.10, 0.15, 0.20}, {0.0, 0.0, 0.0, 0.0}});
  db.add_material({kDefaultMaterial, {0.1, 0.1, 0.1, 0.1}, {0.2, 0.2, 0.2, 0.2}, {0.0, 0.0, 0.0, 0.0}});
  db.map_class("floor", "carpet");
  db.map_class("wall", "gypsum board");
  db.map_class("ceiling", "acoustic tile");
  db.map_class("door", "wood");
  db.map_class("table", "wood");
  db.map_class("window", "glass");
  db.map_class("sofa", "fabric");
  db.map_class("stairs", "concrete");
  db.set_default(kDefaultMaterial);
  return db;
}

MaterialDb MaterialDb::uniform(const AcousticMaterial& material) {
  material.validate();
  MaterialDb db;
  db.add_material(material);
  db.set_default(material.name);
  return db;
}

void MaterialDb::add_material(AcousticMaterial material) {
  std::string name = material.name;
  materials_[name] = std::move(material);
}

void MaterialDb::map_class(const std::string& cls, const std::string& material) {
  class_map_[cls] = material;
}

void MaterialDb::set_default(const std::string& material) { default_name_ = material; }

const AcousticMaterial* MaterialDb::find_material(const std::string& name) const {
  const auto it = materials_.find(name);
  return it == materials_.end() ? nullptr : &it->second;
}

const AcousticMaterial& MaterialDb::default_material() const {
  const AcousticMaterial* m = find_material(default_name_);
  if (m == nullptr) throw ValidationError("default material '" + default_name_ + "' is not defined");
  return *m;
}

const AcousticMaterial& MaterialDb::lookup(const std::string& cls) const {
  const auto it = class_map_.find(cls);
  if (it != class_map_.end())
    if (const AcousticMaterial* m = find_material(it->second)) return *m;
  return default_material();
}

void MaterialDb::validate() const {
  for (const auto& [name, m] : materials_) m.validate();
  for (const auto& [cls, name] : class_map_)
    if (find_material(name) == nullptr)
      throw ValidationError("class '" + cls + "' maps to unknown material '" + name + "'");
  default_material();
}

MaterialDb parse_material_db(const std::string& json_text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("material JSON: ") + e.what());
  }
  if (!j.is_object() || !j.contains("materials") || !j["materials"].is_object())
    throw ParseError("material JSON needs a \"materials\" object");
  MaterialDb db;
  for (const auto& [name, m] : j["materials"].items()) {
    if (!m.is_object()) throw ParseError("material '" + name + "' must be an object");
    db.add_material({name, parse_bands(m, "absorption", name), parse_bands(m, "scattering", name),
                     parse_bands(m, "transmission", name)});
  }
  if (j.contains("class_map")) {
    if (!j["class_map"].is_object()) throw ParseError("\"class_map\" must be an object");
    for (const auto& [cls, name] : j["class_map"].items()) {
      if (!name.is_string()) throw ParseError("class_map values must be material names");
      db.map_class(cls, name.get<std::string>());
    }
  }
  if (j.contains("default")) {
    if (!j["default"].is_string()) throw ParseError("\"default\" must be a material name");
    db.set_default(j["default"].get<std::string>());
  } else {
    db.add_material({kDefaultMaterial, {0.1, 0.1, 0.1, 0.1}, {0.2, 0.2, 0.2, 0.2}, {0.0, 0.0, 0.0, 0.0}});
    db.set_default(kDefaultMaterial);
  }
  db.validate();
  return db;
}

MaterialDb load_material_db(const std::optional<std::filesystem::path>& path) {
  if (!path) return MaterialDb::defaults();
  std::ifstream in(*path);
  if (!in) throw ParseError("cannot open material file " + path->string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_material_db(ss.str());
}

std::string material_db_to_json(const MaterialDb& db) {
  nlohmann::json j;
  j["materials"] = nlohmann::json::object();
  for (const auto& [name, m] : db.materials())
    j["materials"][name] = {{"absorption", m.absorption},
                            {"scattering", m.scattering},
                            {"transmission", m.transmission}};
  j["class_map"] = db.class_map();
  j["default"] = db.default_name();
  return j.dump(2);
}

const AcousticMaterial& lookup_material(const MaterialDb& db, const std::string& cls) {
  return db.lookup(cls);
}

}  // namespace echonav
