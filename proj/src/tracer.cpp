#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "echonav/acoustics.hpp"
#include "echonav/errors.hpp"
#include "echonav/random.hpp"

namespace echonav {

void SimParams::validate() const {
  if (rays_per_source < 1 || rays_per_listener < 1)
    throw ValidationError("ray budgets must be >= 1");
  if (connection_paths < 0) throw ValidationError("connection_paths must be >= 0");
  if (max_bounces < 2) throw ValidationError("max_bounces must be >= 2");
  for (int i = 0; i < kBandCount - 1; ++i) {
    if (!(band_edges[i] > 0.0)) throw ValidationError("band edges must be positive");
    if (i > 0 && !(band_edges[i] > band_edges[i - 1]))
      throw ValidationError("band edges must be strictly increasing");
  }
  if (!(sample_rate > 2.0 * band_edges.back())) throw ValidationError("sample_rate too low for band edges");
  if (!(speed_of_sound > 0.0)) throw ValidationError("speed_of_sound must be > 0");
  if (!(max_ir_seconds > 0.0)) throw ValidationError("max_ir_seconds must be > 0");
  if (!(trim_db > 0.0)) throw ValidationError("trim_db must be > 0");
  if (!(rr_threshold >= 0.0) || rr_start_bounce < 1) throw ValidationError("invalid Russian roulette settings");
  if (!(min_distance > 0.0)) throw ValidationError("min_distance must be > 0");
}

std::string sim_params_to_json(const SimParams& p) {
  nlohmann::json j = {{"rays_per_source", p.rays_per_source},
                      {"rays_per_listener", p.rays_per_listener},
                      {"connection_paths", p.connection_paths},
                      {"max_bounces", p.max_bounces},
                      {"band_edges", p.band_edges},
                      {"sample_rate", p.sample_rate},
                      {"speed_of_sound", p.speed_of_sound},
                      {"rng_seed", p.rng_seed},
                      {"max_ir_seconds", p.max_ir_seconds},
                      {"trim_db", p.trim_db},
                      {"rr_start_bounce", p.rr_start_bounce},
                      {"rr_threshold", p.rr_threshold},
                      {"min_distance", p.min_distance}};
  return j.dump(2);
}

SimParams parse_sim_params(const std::string& json_text) {
  SimParams p;
  try {
    const auto j = nlohmann::json::parse(json_text);
    if (!j.is_object()) throw ParseError("SimParams JSON must be an object");
    static const std::map<std::string, int> known = {
        {"rays_per_source", 0}, {"rays_per_listener", 0}, {"connection_paths", 0},
        {"max_bounces", 0},     {"band_edges", 0},        {"sample_rate", 0},
        {"speed_of_sound", 0},  {"rng_seed", 0},          {"max_ir_seconds", 0},
        {"trim_db", 0},         {"rr_start_bounce", 0},   {"rr_threshold", 0},
        {"min_distance", 0}};
    for (const auto& [key, _] : j.items())
      if (!known.count(key)) throw ParseError("unknown SimParams field: " + key);
    p.rays_per_source = j.value("rays_per_source", p.rays_per_source);
    p.rays_per_listener = j.value("rays_per_listener", p.rays_per_listener);
    p.connection_paths = j.value("connection_paths", p.connection_paths);
    p.max_bounces = j.value("max_bounces", p.max_bounces);
    if (j.contains("band_edges")) p.band_edges = j["band_edges"].get<std::array<double, kBandCount - 1>>();
    p.sample_rate = j.value("sample_rate", p.sample_rate);
    p.speed_of_sound = j.value("speed_of_sound", p.speed_of_sound);
    p.rng_seed = j.value("rng_seed", p.rng_seed);
    p.max_ir_seconds = j.value("max_ir_seconds", p.max_ir_seconds);
    p.trim_db = j.value("trim_db", p.trim_db);
    p.rr_start_bounce = j.value("rr_start_bounce", p.rr_start_bounce);
    p.rr_threshold = j.value("rr_threshold", p.rr_threshold);
    p.min_distance = j.value("min_distance", p.min_distance);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("SimParams JSON: ") + e.what());
  }
  p.validate();
  return p;
}

SimParams load_sim_params(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open params file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_sim_params(ss.str());
}

PlaneKey make_plane_key(const Vec3& n, double offset) {
  return {std::llround(n.x * 1e3), std::llround(n.y * 1e3), std::llround(n.z * 1e3),
          std::llround(offset * 1e3)};
}

std::size_t PlaneKeyHash::operator()(const PlaneKey& k) const noexcept {
  std::uint64_t h = mix64(static_cast<std::uint64_t>(k.nx));
  h = mix64(h ^ static_cast<std::uint64_t>(k.ny));
  h = mix64(h ^ static_cast<std::uint64_t>(k.nz));
  return mix64(h ^ static_cast<std::uint64_t>(k.offset));
}

AcousticScene::AcousticScene(const AccelStructure& accel, const MaterialDb& materials) : accel_(&accel) {
  materials.validate();
  const Scene& scene = accel.scene();
  std::map<std::string, std::uint16_t> by_name;
  std::unordered_map<PlaneKey, std::uint32_t, PlaneKeyHash> plane_lookup;
  material_index_.resize(scene.triangle_count());
  plane_ids_.resize(2 * scene.triangle_count());
  for (std::size_t t = 0; t < scene.triangle_count(); ++t) {
    const AcousticMaterial& m = materials.lookup(scene.triangle_class(t));
    auto [it, inserted] = by_name.try_emplace(m.name, static_cast<std::uint16_t>(table_.size()));
    if (inserted) table_.push_back(m);
    material_index_[t] = it->second;
    const Vec3 n = scene.triangle_normal(t);
    const double off = dot(n, scene.vertex(t, 0));
    for (int side = 0; side < 2; ++side) {
      const Vec3 ns = side == 0 ? n : -n;
      const double os = side == 0 ? off : -off;
      const PlaneKey key = make_plane_key(ns, os);
      auto [pit, fresh] = plane_lookup.try_emplace(key, static_cast<std::uint32_t>(planes_.size()));
      if (fresh) planes_.push_back({key, ns, os});
      plane_ids_[2 * t + side] = pit->second;
    }
  }
}

int AcousticScene::side_of(std::uint32_t triangle, const Vec3& oriented_normal) const {
  return dot(oriented_normal, accel_->scene().triangle_normal(triangle)) >= 0.0 ? 0 : 1;
}

InteractionSplit interaction_split(const AcousticMaterial& m, int band) {
  InteractionSplit s;
  s.absorbed = m.absorption[band];
  s.transmitted = m.transmission[band];
  const double reflected = m.reflectance(band);
  s.specular = reflected * (1.0 - m.scattering[band]);
  s.diffuse = reflected * m.scattering[band];
  return s;
}

namespace {

double mean_scattering(const AcousticMaterial& m) {
  double s = 0.0;
  for (double v : m.scattering) s += v;
  return s / kBandCount;
}

}  // namespace

SubpathSet trace_subpaths(const AcousticScene& scene, const Vec3& origin, int rays, int role,
                          std::uint32_t id, const SimParams& params) {
  SubpathSet out;
  out.origin = origin;
  out.vertices.reserve(static_cast<std::size_t>(rays) * 16);
  out.offsets.reserve(static_cast<std::size_t>(rays) + 1);
  const AccelStructure& accel = scene.accel();
  const double inv4pi = 1.0 / (4.0 * kPi);

  for (int r = 0; r < rays; ++r) {
    Rng rng(derive_seed(params.rng_seed, {static_cast<std::uint64_t>(role), id, static_cast<std::uint64_t>(r)}));
    PathVertex start;
    start.position = origin;
    start.throughput.fill(1.0);
    start.lobe_weight.fill(1.0);
    out.vertices.push_back(start);
    std::size_t prev_index = out.vertices.size() - 1;

    const double u1 = rng.uniform();
    const double u2 = rng.uniform();
    Vec3 dir = sample_uniform_sphere(u1, u2);
    double pdf_dir = inv4pi;  // solid-angle density of `dir` at the previous vertex
    bool prev_specular = false;
    BandArray throughput;
    throughput.fill(1.0);
    BandArray lobe;
    lobe.fill(1.0);
    double path_length = 0.0;
    Vec3 ray_origin = origin;

    for (int bounce = 1; bounce <= params.max_bounces; ++bounce) {
      const auto hit = accel.closest_hit(ray_origin, dir, bounce == 1 ? kRayEpsilon : 0.0);
      if (!hit) break;
      // Measured from the previous vertex, not the offset ray origin.
      const double d = bounce == 1 ? hit->t : length(hit->position - out.vertices[prev_index].position);
      const double d2 = d * d;
      path_length += d;
      const Vec3 n = hit->normal;
      const double cos_in = std::max(0.0, -dot(n, dir));

      PathVertex v;
      v.position = hit->position;
      v.normal = n;
      v.wi = -dir;
      v.throughput = throughput;
      v.lobe_weight = lobe;
      v.path_length = path_length;
      v.segment_length = d;
      v.pdf_fwd = prev_specular ? 0.0 : pdf_dir * cos_in / d2;
      v.triangle = hit->triangle;
      v.plane = scene.plane_id(hit->triangle, scene.side_of(hit->triangle, n));
      v.order = static_cast<std::uint16_t>(bounce);

      const AcousticMaterial& m = scene.material(hit->triangle);
      const PathVertex& prev = out.vertices[prev_index];
      const double cos_prev = prev_index == out.offsets.back() ? 1.0 : std::abs(dot(prev.normal, dir));
      const double p_d = mean_scattering(m);
      v.pdf_prev_diffuse = p_d * cos_in / kPi * cos_prev / d2;

      bool alive = false;
      for (int b = 0; b < kBandCount; ++b) alive = alive || m.reflectance(b) > 0.0;
      Vec3 next_dir;
      double next_pdf = 0.0;
      if (alive) {
        const double u = rng.uniform();
        if (u < p_d) {
          const double a = rng.uniform();
          const double c = rng.uniform();
          next_dir = sample_cosine_hemisphere(n, a, c);
          next_pdf = p_d * std::max(0.0, dot(n, next_dir)) / kPi;
          for (int b = 0; b < kBandCount; ++b) lobe[b] *= m.scattering[b] / p_d;
          v.specular = false;
          out.vertices[prev_index].pdf_rev = v.pdf_prev_diffuse;
        } else {
          next_dir = reflect_direction(dir, n);
          for (int b = 0; b < kBandCount; ++b) lobe[b] *= (1.0 - m.scattering[b]) / (1.0 - p_d);
          v.specular = true;
          out.vertices[prev_index].pdf_rev = 0.0;
        }
        for (int b = 0; b < kBandCount; ++b) throughput[b] *= m.reflectance(b);
      }
      out.vertices.push_back(v);
      prev_index = out.vertices.size() - 1;
      if (!alive) break;

      double strength = 0.0;
      for (int b = 0; b < kBandCount; ++b) strength = std::max(strength, throughput[b] * lobe[b]);
      if (strength <= 0.0) break;
      if (bounce >= params.rr_start_bounce && strength < params.rr_threshold) {
        const double q = std::clamp(strength / params.rr_threshold, 0.05, 1.0);
        if (rng.uniform() >= q) break;
        for (double& w : lobe) w /= q;
      }
      ray_origin = offset_origin(hit->position, n);
      dir = next_dir;
      pdf_dir = next_pdf;
      prev_specular = v.specular;
    }
    out.offsets.push_back(static_cast<std::uint32_t>(out.vertices.size()));
  }
  return out;
}

SourcePathCache trace_source_subpaths(const AcousticScene& scene, const Vec3& source,
                                      std::uint32_t source_id, const SimParams& params) {
  return trace_subpaths(scene, source, params.rays_per_source, 1, source_id, params);
}

SubpathSet trace_listener_subpaths(const AcousticScene& scene, const Vec3& listener,
                                   std::uint32_t listener_id, const SimParams& params) {
  return trace_subpaths(scene, listener, params.rays_per_listener, 2, listener_id, params);
}

EnergyHistogram::EnergyHistogram(double sample_rate, std::size_t max_bins)
    : sample_rate_(sample_rate), max_bins_(max_bins) {}

void EnergyHistogram::add(std::size_t bin, const BandArray& energy, const ShArray& sh) {
  if (bin >= max_bins_) return;
  if (bin >= length_) {
    length_ = bin + 1;
    const std::size_t need = length_ * kBandCount * kShChannels;
    if (data_.size() < need) data_.resize(std::max(need, std::min(data_.size() * 2, max_bins_ * kBandCount * kShChannels)), 0.0);
  }
  double* cell = &data_[bin * kBandCount * kShChannels];
  for (int b = 0; b < kBandCount; ++b) {
    const double e = energy[b];
    if (e == 0.0) continue;
    double* c = cell + b * kShChannels;
    for (int ch = 0; ch < kShChannels; ++ch) c[ch] += e * sh[ch];
  }
}

double EnergyHistogram::total_energy(int band) const {
  double sum = 0.0;
  for (std::size_t n = 0; n < length_; ++n) sum += at(n, band, 0);
  return sum;
}

}  // namespace echonav
