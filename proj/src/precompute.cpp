#include "echonav/precompute.hpp"

#include <atomic>
#include <map>
#include <memory>
#include <mutex>
#include <optional>

#include "echonav/errors.hpp"
#include "echonav/parallel.hpp"
#include "echonav/storage.hpp"

namespace echonav {

namespace {

/// Source subpath caches are large (hundreds of MB at the default budget), so each is built once
/// on first use and dropped when its last listener finishes.
class CacheTable {
 public:
  CacheTable(const AcousticScene& scene, const NavGraph& graph, const SimParams& params,
             std::vector<std::size_t> pending_per_source)
      : scene_(scene), graph_(graph), params_(params), slots_(graph.node_count()) {
    for (std::size_t s = 0; s < slots_.size(); ++s) slots_[s].pending = pending_per_source[s];
  }

  std::shared_ptr<const SourcePathCache> acquire(std::uint32_t s) {
    Slot& slot = slots_[s];
    std::call_once(slot.once, [&] {
      auto cache = std::make_shared<SourcePathCache>(trace_source_subpaths(scene_, graph_.node(s), s, params_));
      std::lock_guard lock(mutex_);
      slot.cache = std::move(cache);
    });
    std::lock_guard lock(mutex_);
    return slot.cache;
  }

  void release(std::uint32_t s) {
    std::lock_guard lock(mutex_);
    if (--slots_[s].pending == 0) slots_[s].cache.reset();
  }

 private:
  struct Slot {
    std::once_flag once;
    std::shared_ptr<const SourcePathCache> cache;
    std::size_t pending = 0;
  };
  const AcousticScene& scene_;
  const NavGraph& graph_;
  const SimParams& params_;
  std::vector<Slot> slots_;
  std::mutex mutex_;
};

}  // namespace

PrecomputeStats precompute_grid(const AcousticScene& scene, const NavGraph& graph, const SimParams& params,
                                const std::filesystem::path& out, const PrecomputeOptions& options) {
  params.validate();
  const std::size_t n = graph.node_count();
  if (n == 0) throw ValidationError("precompute_grid: graph has no nodes");
  const auto fs = static_cast<std::uint32_t>(std::lround(params.sample_rate));
  SsirWriter writer = SsirWriter::open_or_create(out, fs, static_cast<std::uint32_t>(n));

  PrecomputeStats stats;
  std::vector<std::pair<std::uint32_t, std::uint32_t>> todo;
  std::vector<std::size_t> pending(n, 0);
  for (std::uint32_t s = 0; s < n; ++s)
    for (std::uint32_t l = 0; l < n; ++l) {
      if (writer.contains(s, l)) {
        ++stats.skipped;
        continue;
      }
      if (options.max_new_pairs != 0 && todo.size() >= options.max_new_pairs) continue;
      todo.emplace_back(s, l);
      ++pending[s];
    }
  const std::size_t total = n * n;
  const bool limited = stats.skipped + todo.size() < total;

  CacheTable caches(scene, graph, params, pending);
  // Reorder buffer: results land in `ready` and are appended strictly in todo order.
  std::mutex write_mutex;
  std::map<std::size_t, AmbisonicIR> ready;
  std::size_t next_write = 0;

  parallel_for(todo.size(), options.threads, [&](std::size_t k) {
    const auto [s, l] = todo[k];
    AmbisonicIR ir;
    {
      const auto cache = caches.acquire(s);
      ir = compute_rir_pair_cached(scene, *cache, s, graph.node(l), l, params);
    }
    caches.release(s);
    std::lock_guard lock(write_mutex);
    ready.emplace(k, std::move(ir));
    while (!ready.empty() && ready.begin()->first == next_write) {
      writer.write(ready.begin()->second);
      ready.erase(ready.begin());
      ++next_write;
      ++stats.computed;
      if (options.progress) options.progress(writer.pair_count(), total);
    }
  });

  if (limited) {
    writer.abandon();
  } else {
    writer.close();
    stats.finished = true;
  }
  return stats;
}

}  // namespace echonav
