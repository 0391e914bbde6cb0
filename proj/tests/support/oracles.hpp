#pragma once

// Independent reference implementations used by unit and acceptance tests. None of these call
// into the simulator beyond plain data types.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <queue>
#include <utility>
#include <vector>

namespace oracle {

struct Image {
  double x, y, z;
  int order;
};

/// Image sources of a point in the axis-aligned box [0,L]^3 up to `max_order` reflections.
/// Per axis an image is (1 - 2q) s + 2 n L with |2n - q| reflections on that axis.
inline std::vector<Image> shoebox_images(const double room[3], const double src[3], int max_order) {
  struct AxisImage {
    double pos;
    int count;
  };
  std::vector<AxisImage> axis[3];
  for (int a = 0; a < 3; ++a)
    for (int q = 0; q <= 1; ++q)
      for (int n = -max_order; n <= max_order; ++n) {
        const int count = std::abs(2 * n - q);
        if (count <= max_order) axis[a].push_back({(1 - 2 * q) * src[a] + 2.0 * n * room[a], count});
      }
  std::vector<Image> out;
  for (const auto& ix : axis[0])
    for (const auto& iy : axis[1])
      for (const auto& iz : axis[2]) {
        const int order = ix.count + iy.count + iz.count;
        if (order <= max_order) out.push_back({ix.pos, iy.pos, iz.pos, order});
      }
  return out;
}

/// Plain Dijkstra over an undirected weighted edge list.
inline std::vector<double> dijkstra(std::size_t n, const std::vector<std::pair<std::uint32_t, std::uint32_t>>& edges,
                                    const std::vector<double>& weights, std::size_t source) {
  std::vector<std::vector<std::pair<std::size_t, double>>> adj(n);
  for (std::size_t e = 0; e < edges.size(); ++e) {
    adj[edges[e].first].push_back({edges[e].second, weights[e]});
    adj[edges[e].second].push_back({edges[e].first, weights[e]});
  }
  std::vector<double> dist(n, std::numeric_limits<double>::infinity());
  using Item = std::pair<double, std::size_t>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> pq;
  dist[source] = 0.0;
  pq.push({0.0, source});
  while (!pq.empty()) {
    const auto [d, u] = pq.top();
    pq.pop();
    if (d > dist[u]) continue;
    for (const auto& [v, w] : adj[u])
      if (d + w < dist[v]) {
        dist[v] = d + w;
        pq.push({dist[v], v});
      }
  }
  return dist;
}

/// Schroeder backward integration with a linear fit of the decay between -5 and -25 dB (T20),
/// extrapolated to 60 dB. Returns NaN if the decay never reaches -25 dB.
inline double schroeder_t60(const std::vector<double>& x, double fs) {
  std::vector<double> edc(x.size() + 1, 0.0);
  for (std::size_t n = x.size(); n-- > 0;) edc[n] = edc[n + 1] + x[n] * x[n];
  const double total = edc[0];
  if (!(total > 0.0)) return std::nan("");
  long i5 = -1, i25 = -1;
  for (std::size_t n = 0; n < x.size(); ++n) {
    const double db = 10.0 * std::log10(edc[n] / total);
    if (i5 < 0 && db <= -5.0) i5 = static_cast<long>(n);
    if (db <= -25.0) {
      i25 = static_cast<long>(n);
      break;
    }
  }
  if (i5 < 0 || i25 <= i5) return std::nan("");
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const double cnt = static_cast<double>(i25 - i5 + 1);
  for (long n = i5; n <= i25; ++n) {
    const double t = n / fs, y = 10.0 * std::log10(edc[n] / total);
    sx += t;
    sy += y;
    sxx += t * t;
    sxy += t * y;
  }
  const double slope = (cnt * sxy - sx * sy) / (cnt * sxx - sx * sx);
  return -60.0 / slope;
}

/// Eyring reverberation time for volume V, surface S and mean absorption a.
inline double eyring_t60(double volume, double surface, double absorption) {
  return 0.161 * volume / (-surface * std::log(1.0 - absorption));
}

/// Direct-form linear convolution, first n samples.
inline std::vector<double> convolve_direct(const std::vector<double>& a, const std::vector<double>& b, std::size_t n) {
  std::vector<double> out(n, 0.0);
  for (std::size_t i = 0; i < a.size() && i < n; ++i)
    for (std::size_t j = 0; j < b.size() && i + j < n; ++j) out[i + j] += a[i] * b[j];
  return out;
}

/// Brute-force Moller-Trumbore intersection of a ray with one triangle; returns t or -1.
inline double ray_triangle(const double o[3], const double d[3], const double v0[3], const double v1[3],
                           const double v2[3]) {
  double e1[3], e2[3], p[3], q[3], s[3];
  for (int i = 0; i < 3; ++i) {
    e1[i] = v1[i] - v0[i];
    e2[i] = v2[i] - v0[i];
    s[i] = o[i] - v0[i];
  }
  p[0] = d[1] * e2[2] - d[2] * e2[1];
  p[1] = d[2] * e2[0] - d[0] * e2[2];
  p[2] = d[0] * e2[1] - d[1] * e2[0];
  const double det = e1[0] * p[0] + e1[1] * p[1] + e1[2] * p[2];
  if (std::abs(det) < 1e-14) return -1.0;
  const double inv = 1.0 / det;
  const double u = (s[0] * p[0] + s[1] * p[1] + s[2] * p[2]) * inv;
  if (u < 0.0 || u > 1.0) return -1.0;
  q[0] = s[1] * e1[2] - s[2] * e1[1];
  q[1] = s[2] * e1[0] - s[0] * e1[2];
  q[2] = s[0] * e1[1] - s[1] * e1[0];
  const double v = (d[0] * q[0] + d[1] * q[1] + d[2] * q[2]) * inv;
  if (v < 0.0 || u + v > 1.0) return -1.0;
  return (e2[0] * q[0] + e2[1] * q[1] + e2[2] * q[2]) * inv;
}

}  // namespace oracle
