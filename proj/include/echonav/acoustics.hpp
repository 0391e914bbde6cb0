#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <unordered_map>
#include <vector>

#include "echonav/accel.hpp"
#include "echonav/materials.hpp"
#include "echonav/sh.hpp"

namespace echonav {

struct SimParams {
  int rays_per_source = 20000;
  int rays_per_listener = 5000;
  /// Source/listener subpath pairs combined by interior vertex-vertex connections.
  int connection_paths = 500;
  int max_bounces = 200;
  std::array<double, kBandCount - 1> band_edges{176.0, 775.0, 3409.0};
  double sample_rate = 44100.0;
  double speed_of_sound = 343.0;
  std::uint64_t rng_seed = 0;
  /// Histogram (and therefore IR) length cap.
  double max_ir_seconds = 1.5;
  /// IRs are cut where the remaining channel-0 energy falls this far below the total.
  double trim_db = 60.0;
  int rr_start_bounce = 8;
  double rr_threshold = 1e-4;
  /// Distances below this are clamped in 1/r^2 factors (finite source/receiver size).
  double min_distance = 0.1;

  /// Throws ValidationError if any invariant fails.
  void validate() const;
};

std::string sim_params_to_json(const SimParams& p);
/// Missing fields keep their defaults.
SimParams parse_sim_params(const std::string& json_text);
SimParams load_sim_params(const std::filesystem::path& path);

/// Quantized oriented plane: unit normal to 1e-3 and offset n.p to 1 mm.
struct PlaneKey {
  std::int64_t nx = 0, ny = 0, nz = 0, offset = 0;
  bool operator==(const PlaneKey&) const = default;
  auto operator<=>(const PlaneKey&) const = default;
};
PlaneKey make_plane_key(const Vec3& normal, double offset);

struct PlaneKeyHash {
  std::size_t operator()(const PlaneKey& k) const noexcept;
};

/// Exact plane as first seen, kept alongside its quantized key.
struct Plane {
  PlaneKey key;
  Vec3 normal;
  double offset = 0.0;
};

/// Scene geometry with materials and oriented plane ids resolved per triangle; shared read-only
/// by all tracing workers.
class AcousticScene {
 public:
  AcousticScene(const AccelStructure& accel, const MaterialDb& materials);

  const AccelStructure& accel() const { return *accel_; }
  const AcousticMaterial& material(std::uint32_t triangle) const { return table_[material_index_[triangle]]; }
  /// Plane id of a triangle seen from the front (side 0, along its winding normal) or back.
  std::uint32_t plane_id(std::uint32_t triangle, int side) const { return plane_ids_[2 * triangle + side]; }
  const Plane& plane(std::uint32_t id) const { return planes_[id]; }
  std::size_t plane_count() const { return planes_.size(); }
  /// Side (0 or 1) of `triangle` that an oriented normal faces.
  int side_of(std::uint32_t triangle, const Vec3& oriented_normal) const;

 private:
  const AccelStructure* accel_;
  std::vector<AcousticMaterial> table_;
  std::vector<std::uint16_t> material_index_;
  std::vector<std::uint32_t> plane_ids_;
  std::vector<Plane> planes_;
};

/// Energy split of one surface interaction in one band; the four fractions sum to 1.
struct InteractionSplit {
  double absorbed = 0, transmitted = 0, specular = 0, diffuse = 0;
};
InteractionSplit interaction_split(const AcousticMaterial& m, int band);

struct PathVertex {
  Vec3 position;
  /// Surface normal oriented toward the side the path arrived from (zero for endpoints).
  Vec3 normal;
  /// Unit direction back toward the previous vertex.
  Vec3 wi;
  /// Product of (1 - absorption - transmission) over previous vertices, per band.
  BandArray throughput{};
  /// Lobe-selection and Russian-roulette estimator weights; throughput * lobe_weight is the
  /// Monte-Carlo path weight arriving at this vertex.
  BandArray lobe_weight{};
  double path_length = 0.0;
  double segment_length = 0.0;
  /// Area density of this vertex given the previous one.
  double pdf_fwd = 1.0;
  /// Area density of this vertex given the next one (0 when the next scatter was specular).
  double pdf_rev = 0.0;
  /// Area density of the previous vertex when sampled diffusely from this one.
  double pdf_prev_diffuse = 0.0;
  std::uint32_t triangle = 0;
  std::uint32_t plane = 0;
  std::uint16_t order = 0;
  /// The continuation from this vertex used the specular (delta) lobe.
  bool specular = false;
};

/// Subpaths traced from one endpoint. Path p occupies vertices [offsets[p], offsets[p + 1]);
/// its first vertex is the endpoint itself.
struct SubpathSet {
  Vec3 origin;
  std::vector<PathVertex> vertices;
  std::vector<std::uint32_t> offsets{0};

  std::size_t path_count() const { return offsets.size() - 1; }
  std::size_t path_size(std::size_t p) const { return offsets[p + 1] - offsets[p]; }
  const PathVertex* path(std::size_t p) const { return vertices.data() + offsets[p]; }
};
using SourcePathCache = SubpathSet;

/// Paths end on escape, at max_bounces, or by Russian roulette. Ray r of endpoint `id` draws
/// from the stream derived from (seed, role, id, r).
SubpathSet trace_subpaths(const AcousticScene& scene, const Vec3& origin, int rays, int role,
                          std::uint32_t id, const SimParams& params);
SourcePathCache trace_source_subpaths(const AcousticScene& scene, const Vec3& source,
                                      std::uint32_t source_id, const SimParams& params);
SubpathSet trace_listener_subpaths(const AcousticScene& scene, const Vec3& listener,
                                   std::uint32_t listener_id, const SimParams& params);

/// Per band, per sample bin: 9 SH-weighted energies; channel 0 is the plain energy.
class EnergyHistogram {
 public:
  EnergyHistogram() = default;
  EnergyHistogram(double sample_rate, std::size_t max_bins);

  void add(std::size_t bin, const BandArray& energy, const ShArray& sh);
  double at(std::size_t bin, int band, int channel) const {
    return data_[(bin * kBandCount + band) * kShChannels + channel];
  }
  /// Bins in use (one past the last bin written).
  std::size_t length() const { return length_; }
  std::size_t max_bins() const { return max_bins_; }
  double sample_rate() const { return sample_rate_; }
  double total_energy(int band) const;
  bool operator==(const EnergyHistogram&) const = default;

 private:
  double sample_rate_ = 0.0;
  std::size_t max_bins_ = 0;
  std::size_t length_ = 0;
  std::vector<double> data_;
};

/// One low-order (<= 2 reflections) arrival before clustering.
struct ERContribution {
  std::vector<std::uint32_t> planes;  // ordered source -> listener
  BandArray energy{};
  double delay = 0.0;  // samples
  Vec3 direction;      // from the listener toward the arrival
};

struct ERCluster {
  std::vector<PlaneKey> planes;
  std::vector<std::uint32_t> plane_ids;
  BandArray energy{};
  /// Energy-weighted mean delay in (fractional) samples.
  double delay = 0.0;
  Vec3 direction;
  int order() const { return static_cast<int>(planes.size()); }
};

std::vector<ERCluster> cluster_early_reflections(const std::vector<ERContribution>& contributions,
                                                 const AcousticScene& scene);

struct ConnectionResult {
  EnergyHistogram histogram;
  std::vector<ERContribution> early;
};

/// Traces listener subpaths and combines them with the cached source subpaths (light tracing,
/// listener next-event estimation, interior connections; balance heuristic), plus image-source
/// validation of specular order-1/2 paths whose planes the subpaths discovered.
ConnectionResult connect_and_accumulate(const AcousticScene& scene, const Vec3& listener,
                                        std::uint32_t listener_id, const SourcePathCache& cache,
                                        const SimParams& params);

/// 9 channels of float pressure samples, interleaved per sample.
struct AmbisonicIR {
  std::uint32_t source_id = 0;
  std::uint32_t listener_id = 0;
  double sample_rate = 44100.0;
  std::vector<float> samples;

  std::size_t length() const { return samples.size() / kShChannels; }
  float at(int channel, std::size_t n) const { return samples[n * kShChannels + channel]; }
  std::vector<double> channel(int ch) const;
  bool operator==(const AmbisonicIR&) const = default;
};

AmbisonicIR histogram_to_pressure(const EnergyHistogram& histogram, const std::vector<ERCluster>& er,
                                  const SimParams& params, std::uint64_t noise_seed);

AmbisonicIR compute_rir_pair(const AcousticScene& scene, const Vec3& source, std::uint32_t source_id,
                             const Vec3& listener, std::uint32_t listener_id, const SimParams& params);

/// Same as compute_rir_pair with a source cache built by trace_source_subpaths.
AmbisonicIR compute_rir_pair_cached(const AcousticScene& scene, const SourcePathCache& cache,
                                    std::uint32_t source_id, const Vec3& listener,
                                    std::uint32_t listener_id, const SimParams& params);

std::uint64_t pair_noise_seed(const SimParams& params, std::uint32_t source_id, std::uint32_t listener_id);

}  // namespace echonav
