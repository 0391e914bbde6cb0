#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "echonav/acoustics.hpp"

namespace echonav {

namespace {

constexpr double kInv4Pi = 1.0 / (4.0 * kPi);

double mean_scattering(const AcousticMaterial& m) {
  double s = 0.0;
  for (double v : m.scattering) s += v;
  return s / kBandCount;
}

/// Diffuse BRDF rho * s / pi per band.
BandArray diffuse_brdf(const AcousticMaterial& m) {
  BandArray f{};
  for (int b = 0; b < kBandCount; ++b) f[b] = m.reflectance(b) * m.scattering[b] / kPi;
  return f;
}

struct Crossing {
  double t;
  std::uint32_t triangle;
  std::uint32_t plane;
};

/// Surfaces crossed in (tmin, tmax), nearest first. A ray through an edge shared by coplanar
/// triangles reports that plane once.
std::vector<Crossing> crossings(const AcousticScene& scene, const Vec3& from, const Vec3& dir, double tmin,
                                double tmax) {
  std::vector<Crossing> hits;
  const AccelStructure& accel = scene.accel();
  accel.for_each_hit(from, dir, tmin, tmax, [&](std::uint32_t tri, double t) {
    hits.push_back({t, tri, scene.plane_id(tri, scene.side_of(tri, accel.facing_normal(tri, dir)))});
    return true;
  });
  std::sort(hits.begin(), hits.end(), [](const Crossing& a, const Crossing& b) {
    return a.t < b.t || (a.t == b.t && a.triangle < b.triangle);
  });
  std::vector<Crossing> out;
  for (const Crossing& c : hits) {
    bool duplicate = false;
    for (auto it = out.rbegin(); it != out.rend() && c.t - it->t <= 1e-9 * (1.0 + c.t); ++it)
      duplicate = duplicate || it->plane == c.plane;
    if (!duplicate) out.push_back(c);
  }
  return out;
}

/// Product of transmission coefficients of every surface strictly between the segment ends.
/// Returns false once every band is fully blocked.
bool transmittance(const AcousticScene& scene, const Vec3& from, const Vec3& dir, double dist, BandArray& T) {
  T.fill(1.0);
  const double tmax = dist - kRayEpsilon;
  if (tmax <= kRayEpsilon) return true;
  for (const Crossing& c : crossings(scene, from, dir, kRayEpsilon, tmax)) {
    const AcousticMaterial& m = scene.material(c.triangle);
    double strongest = 0.0;
    for (int b = 0; b < kBandCount; ++b) {
      T[b] *= m.transmission[b];
      strongest = std::max(strongest, T[b]);
    }
    if (strongest <= 0.0) return false;
  }
  return true;
}

class Accumulator {
 public:
  Accumulator(const AcousticScene& scene, const SimParams& p, const SourcePathCache& src, const SubpathSet& lst)
      : scene_(scene), p_(p), src_(src), lst_(lst) {
    ns_ = static_cast<double>(src.path_count());
    nl_ = static_cast<double>(lst.path_count());
    m_ = static_cast<double>(std::min({static_cast<std::size_t>(p.connection_paths), src.path_count(),
                                       lst.path_count()}));
    min_d2_ = p.min_distance * p.min_distance;
    samples_per_meter_ = p.sample_rate / p.speed_of_sound;
    result_.histogram = EnergyHistogram(p.sample_rate,
                                        static_cast<std::size_t>(std::ceil(p.max_ir_seconds * p.sample_rate)));
    build_accumulators(src, false, src_acc_);
    build_accumulators(lst, true, lst_acc_);
  }

  void direct() {
    const Vec3 d = src_.origin - lst_.origin;
    const double dist = length(d);
    BandArray T;
    T.fill(1.0);
    Vec3 dir{};
    if (dist > 0.0) {
      dir = d / dist;
      if (!transmittance(scene_, lst_.origin, dir, dist + kRayEpsilon, T)) return;
    }
    BandArray e{};
    for (int b = 0; b < kBandCount; ++b) e[b] = T[b] * kInv4Pi / std::max(dist * dist, min_d2_);
    ERContribution c;
    c.energy = e;
    c.delay = dist * samples_per_meter_;
    c.direction = dir;
    result_.early.push_back(std::move(c));
  }

  void light_tracing() {
    for (std::size_t p = 0; p < src_.path_count(); ++p) {
      const PathVertex* path = src_.path(p);
      const int size = static_cast<int>(src_.path_size(p));
      for (int k = 1; k < size; ++k) {
        const PathVertex& v = path[k];
        Vec3 d = lst_.origin - v.position;
        const double dist = length(d);
        if (dist <= 0.0) continue;
        d = d / dist;
        const double cos_x = dot(v.normal, d);
        if (cos_x <= 0.0) continue;
        const double d2 = std::max(dist * dist, min_d2_);
        const AcousticMaterial& m = scene_.material(v.triangle);
        const BandArray f = diffuse_brdf(m);
        BandArray c{};
        bool any = false;
        for (int b = 0; b < kBandCount; ++b) {
          c[b] = v.throughput[b] * v.lobe_weight[b] * f[b] * cos_x / d2;
          any = any || c[b] > 0.0;
        }
        if (!any) continue;
        BandArray T;
        if (!transmittance(scene_, v.position, d, dist, T)) continue;
        const double qs_rev = kInv4Pi * cos_x / d2;
        const double w = mis_weight(path, k + 1, nullptr, 1, qs_rev, 0.0);
        for (int b = 0; b < kBandCount; ++b) c[b] *= T[b] * w / ns_;
        deposit(c, v.path_length + dist, -d, path, k + 1, nullptr, 1);
      }
    }
  }

  void listener_nee() {
    for (std::size_t q = 0; q < lst_.path_count(); ++q) {
      const PathVertex* path = lst_.path(q);
      const int size = static_cast<int>(lst_.path_size(q));
      if (size < 2) continue;
      const Vec3 arrival = normalize(path[1].position - lst_.origin);
      for (int k = 1; k < size; ++k) {
        const PathVertex& v = path[k];
        Vec3 d = src_.origin - v.position;
        const double dist = length(d);
        if (dist <= 0.0) continue;
        d = d / dist;
        const double cos_y = dot(v.normal, d);
        if (cos_y <= 0.0) continue;
        const double d2 = std::max(dist * dist, min_d2_);
        const BandArray f = diffuse_brdf(scene_.material(v.triangle));
        BandArray c{};
        bool any = false;
        for (int b = 0; b < kBandCount; ++b) {
          // Listener emission weight 4 pi cancels the source intensity 1 / (4 pi).
          c[b] = v.throughput[b] * v.lobe_weight[b] * f[b] * cos_y / d2;
          any = any || c[b] > 0.0;
        }
        if (!any) continue;
        BandArray T;
        if (!transmittance(scene_, v.position, d, dist, T)) continue;
        const double pt_rev = kInv4Pi * cos_y / d2;
        const double w = mis_weight(nullptr, 1, path, k + 1, 0.0, pt_rev);
        for (int b = 0; b < kBandCount; ++b) c[b] *= T[b] * w / nl_;
        deposit(c, v.path_length + dist, arrival, nullptr, 1, path, k + 1);
      }
    }
  }

  void interior_connections() {
    const std::size_t pairs = static_cast<std::size_t>(m_);
    for (std::size_t j = 0; j < pairs; ++j) {
      const PathVertex* sp = src_.path(j);
      const PathVertex* lp = lst_.path(j);
      const int ss = static_cast<int>(src_.path_size(j));
      const int ls = static_cast<int>(lst_.path_size(j));
      if (ss < 2 || ls < 2) continue;
      const Vec3 arrival = normalize(lp[1].position - lst_.origin);
      for (int a = 1; a < ss; ++a) {
        const PathVertex& x = sp[a];
        const AcousticMaterial& mx = scene_.material(x.triangle);
        const BandArray fx = diffuse_brdf(mx);
        const double pdx = mean_scattering(mx);
        BandArray bx{};
        bool xany = false;
        for (int b = 0; b < kBandCount; ++b) {
          bx[b] = x.throughput[b] * x.lobe_weight[b] * fx[b];
          xany = xany || bx[b] > 0.0;
        }
        if (!xany) continue;
        for (int k = 1; k < ls; ++k) {
          const PathVertex& y = lp[k];
          Vec3 d = y.position - x.position;
          const double dist = length(d);
          if (dist <= 0.0) continue;
          d = d / dist;
          const double cos_x = dot(x.normal, d);
          const double cos_y = -dot(y.normal, d);
          if (cos_x <= 0.0 || cos_y <= 0.0) continue;
          const double d2 = std::max(dist * dist, min_d2_);
          const AcousticMaterial& my = scene_.material(y.triangle);
          const BandArray fy = diffuse_brdf(my);
          const double g = cos_x * cos_y / d2;
          BandArray c{};
          bool any = false;
          for (int b = 0; b < kBandCount; ++b) {
            c[b] = bx[b] * g * fy[b] * y.throughput[b] * y.lobe_weight[b] * 4.0 * kPi;
            any = any || c[b] > 0.0;
          }
          if (!any) continue;
          BandArray T;
          if (!transmittance(scene_, x.position, d, dist, T)) continue;
          const double pdy = mean_scattering(my);
          const double qs_rev = pdy * cos_y / kPi * cos_x / d2;
          const double pt_rev = pdx * cos_x / kPi * cos_y / d2;
          const double w = mis_weight(sp, a + 1, lp, k + 1, qs_rev, pt_rev);
          for (int b = 0; b < kBandCount; ++b) c[b] *= T[b] * w / m_;
          deposit(c, x.path_length + dist + y.path_length, arrival, sp, a + 1, lp, k + 1);
        }
      }
    }
  }

  void image_sources();

  ConnectionResult take() { return std::move(result_); }

 private:
  double count(int s, int t) const {
    if (t == 1) return ns_;
    if (s == 1) return nl_;
    return m_;
  }

  /// Balance heuristic over all strategies able to produce the same path, weighted by their
  /// sample counts. `src[0..s)` and `lst[0..t)` are the two subpath prefixes; the caller supplies
  /// the reverse densities of the two connection vertices.
  double mis_weight(const PathVertex* src, int s, const PathVertex* lst, int t, double qs_rev,
                    double pt_rev) const {
    const double own = count(s, t);
    double sum = 0.0;
    if (t >= 2) sum += side_sum(lst, lst_acc_.data() + (lst - lst_.vertices.data()), t - 1, pt_rev, true);
    if (s >= 2) sum += side_sum(src, src_acc_.data() + (src - src_.vertices.data()), s - 1, qs_rev, false);
    return 1.0 / (1.0 + sum / own);
  }

  static double remap(double x) { return x != 0.0 ? x : 1.0; }

  // Strategies that would have sampled vertex i of a subpath (i >= 1) from the other side.
  // Index 0 is the endpoint itself, which no strategy can hit.
  double strategy_count(int i, bool listener_side) const {
    if (i == 1) return listener_side ? ns_ : nl_;
    return m_;
  }

  /// acc[k] = sum over i <= k of count_i * [i and i-1 not specular] * prod_{j=i}^{k-1} rev_j/fwd_j,
  /// using the traced reverse densities. The connection-dependent factors for the last two
  /// vertices are applied in side_sum, which keeps each MIS weight O(1).
  void build_accumulators(const SubpathSet& set, bool listener_side, std::vector<double>& acc) const {
    acc.assign(set.vertices.size(), 0.0);
    for (std::size_t p = 0; p < set.path_count(); ++p) {
      const PathVertex* path = set.path(p);
      double* a = acc.data() + set.offsets[p];
      const int size = static_cast<int>(set.path_size(p));
      for (int k = 1; k < size; ++k) {
        const bool flag = !path[k].specular && !(k >= 2 && path[k - 1].specular);
        double v = flag ? strategy_count(k, listener_side) : 0.0;
        if (k >= 2) v += remap(path[k - 1].pdf_rev) / remap(path[k - 1].pdf_fwd) * a[k - 1];
        a[k] = v;
      }
    }
  }

  /// Sum of density ratios for one side whose connection vertex is path[k].
  double side_sum(const PathVertex* path, const double* acc, int k, double rev_conn,
                  bool listener_side) const {
    double inner = (k == 1 || !path[k - 1].specular) ? strategy_count(k, listener_side) : 0.0;
    if (k >= 2) inner += remap(path[k].pdf_prev_diffuse) / remap(path[k - 1].pdf_fwd) * acc[k - 1];
    return remap(rev_conn) / remap(path[k].pdf_fwd) * inner;
  }

  void deposit(const BandArray& energy, double path_length, const Vec3& arrival, const PathVertex* src,
               int s, const PathVertex* lst, int t) {
    const int order = (s - 1) + (t - 1);
    if (order <= 2) {
      ERContribution c;
      for (int i = 1; i < s; ++i) c.planes.push_back(src[i].plane);
      for (int i = t - 1; i >= 1; --i) c.planes.push_back(lst[i].plane);
      c.energy = energy;
      c.delay = path_length * samples_per_meter_;
      c.direction = arrival;
      result_.early.push_back(std::move(c));
      return;
    }
    const auto bin = static_cast<std::size_t>(std::llround(path_length * samples_per_meter_));
    result_.histogram.add(bin, energy, sh_encode(arrival));
  }

  std::optional<ERContribution> specular_path(const std::vector<std::uint32_t>& planes) const;

  const AcousticScene& scene_;
  const SimParams& p_;
  const SourcePathCache& src_;
  const SubpathSet& lst_;
  double ns_ = 0, nl_ = 0, m_ = 0;
  double min_d2_ = 0.01;
  double samples_per_meter_ = 0.0;
  std::vector<double> src_acc_, lst_acc_;
  ConnectionResult result_;
};

double signed_distance(const Plane& pl, const Vec3& p) { return dot(pl.normal, p) - pl.offset; }

std::optional<ERContribution> Accumulator::specular_path(const std::vector<std::uint32_t>& planes) const {
  const std::size_t order = planes.size();
  // images[k] is the source mirrored through planes[0..k).
  std::vector<Vec3> images{src_.origin};
  for (std::size_t k = 0; k < order; ++k) {
    const Plane& pl = scene_.plane(planes[k]);
    if (signed_distance(pl, images.back()) <= 1e-9) return std::nullopt;
    images.push_back(reflect_point(images.back(), pl.normal, pl.offset));
  }
  BandArray energy;
  energy.fill(1.0);
  Vec3 current = lst_.origin;
  Vec3 last_reflection{};
  for (std::size_t k = order; k-- > 0;) {
    const Plane& pl = scene_.plane(planes[k]);
    const Vec3 target = images[k + 1];
    if (signed_distance(pl, current) <= 1e-9) return std::nullopt;
    const Vec3 to = target - current;
    const double span = length(to);
    const Vec3 dir = to / span;
    const double denom = dot(pl.normal, dir);
    if (denom >= 0.0) return std::nullopt;
    const double t = -signed_distance(pl, current) / denom;
    if (!(t > kRayEpsilon && t < span)) return std::nullopt;
    const double tol = 1e-6 * (1.0 + t);
    bool found = false;
    std::uint32_t reflector = 0;
    BandArray T;
    T.fill(1.0);
    for (const Crossing& c : crossings(scene_, current, dir, kRayEpsilon, t + tol)) {
      // Any other surface met at the reflection point (a wall junction or edge) occludes it.
      if (std::abs(c.t - t) <= tol && !found && c.plane == planes[k]) {
        found = true;
        reflector = c.triangle;
        continue;
      }
      const AcousticMaterial& m = scene_.material(c.triangle);
      for (int b = 0; b < kBandCount; ++b) T[b] *= m.transmission[b];
    }
    if (!found) return std::nullopt;
    const Vec3 reflection = current + dir * t;
    if (k + 1 == order) last_reflection = reflection;
    const AcousticMaterial& m = scene_.material(reflector);
    for (int b = 0; b < kBandCount; ++b) energy[b] *= T[b] * m.reflectance(b) * (1.0 - m.scattering[b]);
    current = reflection;
  }
  const Vec3 to_source = src_.origin - current;
  const double rest = length(to_source);
  if (rest > 0.0) {
    BandArray T;
    transmittance(scene_, current, to_source / rest, rest, T);
    for (int b = 0; b < kBandCount; ++b) energy[b] *= T[b];
  }
  const double total = distance(lst_.origin, images.back());
  bool any = false;
  for (int b = 0; b < kBandCount; ++b) {
    energy[b] *= kInv4Pi / std::max(total * total, min_d2_);
    any = any || energy[b] > 0.0;
  }
  if (!any) return std::nullopt;
  ERContribution c;
  c.planes = planes;
  c.energy = energy;
  c.delay = total * samples_per_meter_;
  c.direction = normalize(last_reflection - lst_.origin);
  return c;
}

void Accumulator::image_sources() {
  // Candidate planes come from the first two surface hits of every subpath.
  std::set<std::uint32_t> seen;
  std::set<std::vector<std::uint32_t>> sequences;
  for (const SubpathSet* set : {&src_, &lst_}) {
    const bool from_source = set == &src_;
    for (std::size_t p = 0; p < set->path_count(); ++p) {
      const PathVertex* path = set->path(p);
      const std::size_t size = set->path_size(p);
      if (size > 1) seen.insert(path[1].plane);
      if (size > 2) {
        seen.insert(path[2].plane);
        if (from_source)
          sequences.insert({path[1].plane, path[2].plane});
        else
          sequences.insert({path[2].plane, path[1].plane});
      }
    }
  }
  for (std::uint32_t a : seen) sequences.insert({a});
  if (seen.size() <= 64)
    for (std::uint32_t a : seen)
      for (std::uint32_t b : seen)
        if (a != b) sequences.insert({a, b});
  for (const auto& seq : sequences) {
    if (seq.size() == 2 && seq[0] == seq[1]) continue;
    if (auto c = specular_path(seq)) result_.early.push_back(std::move(*c));
  }
}

}  // namespace

ConnectionResult connect_and_accumulate(const AcousticScene& scene, const Vec3& listener,
                                        std::uint32_t listener_id, const SourcePathCache& cache,
                                        const SimParams& params) {
  params.validate();
  const SubpathSet lst = trace_listener_subpaths(scene, listener, listener_id, params);
  Accumulator acc(scene, params, cache, lst);
  acc.direct();
  acc.image_sources();
  acc.light_tracing();
  acc.listener_nee();
  acc.interior_connections();
  return acc.take();
}

std::vector<ERCluster> cluster_early_reflections(const std::vector<ERContribution>& contributions,
                                                 const AcousticScene& scene) {
  struct Sum {
    BandArray energy{};
    double weighted_delay = 0.0;
    double weight = 0.0;
    Vec3 direction;
  };
  std::map<std::vector<std::uint32_t>, Sum> groups;
  for (const ERContribution& c : contributions) {
    double w = 0.0;
    for (double e : c.energy) w += e;
    if (!(w > 0.0)) continue;
    Sum& s = groups[c.planes];
    for (int b = 0; b < kBandCount; ++b) s.energy[b] += c.energy[b];
    s.weighted_delay += w * c.delay;
    s.weight += w;
    s.direction += c.direction * w;
  }
  std::vector<ERCluster> out;
  out.reserve(groups.size());
  for (const auto& [planes, s] : groups) {
    ERCluster cl;
    cl.plane_ids = planes;
    for (std::uint32_t id : planes) cl.planes.push_back(scene.plane(id).key);
    cl.energy = s.energy;
    cl.delay = s.weighted_delay / s.weight;
    const double len = length(s.direction);
    cl.direction = len > 1e-12 ? s.direction / len : Vec3{};
    out.push_back(std::move(cl));
  }
  std::stable_sort(out.begin(), out.end(), [](const ERCluster& a, const ERCluster& b) { return a.delay < b.delay; });
  return out;
}

}  // namespace echonav
