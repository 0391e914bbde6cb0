#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <map>
#include <utility>
#include <vector>

#include "echonav/acoustics.hpp"

namespace echonav {

/// SSIR v1 container (all integers little-endian):
///
///   header (40 bytes)  magic "SSIR", version u32 = 1, flags u32 = 0, sample_rate u32,
///                      channels u32 = 9, node_count u32, pair_count u32, reserved u32,
///                      index_offset u64
///   payload            per pair: length * 9 interleaved f32
///   index (24 bytes per entry, at index_offset)
///                      source u32, listener u32, payload offset u64, length u32 (samples),
///                      crc32 u32 of the entry's payload bytes
///
/// While a writer is open the header carries index_offset = 0 and entries are journaled to
/// "<path>.journal" after their payload is flushed; readers fall back to the journal.
inline constexpr std::uint32_t kSsirVersion = 1;
inline constexpr std::size_t kSsirHeaderSize = 40;
inline constexpr std::size_t kSsirEntrySize = 24;

struct SsirEntry {
  std::uint32_t source = 0;
  std::uint32_t listener = 0;
  std::uint64_t offset = 0;
  std::uint32_t length = 0;
  std::uint32_t crc = 0;
};

std::filesystem::path journal_path(const std::filesystem::path& container);

class SsirWriter {
 public:
  /// Starts a new container, replacing any file at `path`.
  static SsirWriter create(const std::filesystem::path& path, std::uint32_t sample_rate,
                           std::uint32_t node_count);
  /// Continues an unfinished container from its journal. Payload bytes past the last journaled
  /// entry (an interrupted append) are discarded. A container that was already closed is
  /// reopened for appending as well.
  static SsirWriter resume(const std::filesystem::path& path);
  /// resume() if `path` exists, else create().
  static SsirWriter open_or_create(const std::filesystem::path& path, std::uint32_t sample_rate,
                                   std::uint32_t node_count);

  SsirWriter(SsirWriter&& other) noexcept;
  SsirWriter& operator=(SsirWriter&& other) noexcept;
  SsirWriter(const SsirWriter&) = delete;
  SsirWriter& operator=(const SsirWriter&) = delete;
  ~SsirWriter();

  /// Appends one IR. Throws ValidationError on channel/sample-rate mismatch or duplicate key.
  void write(const AmbisonicIR& ir);
  bool contains(std::uint32_t source, std::uint32_t listener) const;
  std::size_t pair_count() const { return entries_.size(); }
  std::uint32_t sample_rate() const { return sample_rate_; }
  std::uint32_t node_count() const { return node_count_; }

  /// Writes the index, finalizes the header and removes the journal.
  void close();
  /// Releases the files without finalizing, as an interrupted process would leave them.
  void abandon();

 private:
  SsirWriter() = default;
  void release() noexcept;

  std::filesystem::path path_;
  std::FILE* data_ = nullptr;
  std::FILE* journal_ = nullptr;
  std::uint32_t sample_rate_ = 0;
  std::uint32_t node_count_ = 0;
  std::uint64_t end_ = kSsirHeaderSize;
  std::vector<SsirEntry> entries_;
  std::map<std::pair<std::uint32_t, std::uint32_t>, std::size_t> keys_;
};

/// Read-only view; the index is held in memory and every read verifies its CRC.
class SsirReader {
 public:
  /// Throws CorruptionError for bad magic/version, truncation or out-of-range entries.
  explicit SsirReader(const std::filesystem::path& path);

  AmbisonicIR read(std::uint32_t source, std::uint32_t listener) const;
  bool contains(std::uint32_t source, std::uint32_t listener) const;
  const std::vector<SsirEntry>& entries() const { return entries_; }
  std::uint32_t sample_rate() const { return sample_rate_; }
  std::uint32_t node_count() const { return node_count_; }
  std::size_t pair_count() const { return entries_.size(); }
  /// True if the header was finalized (false when served from a journal).
  bool finalized() const { return finalized_; }
  /// Reads every entry, verifying all checksums.
  void verify() const;

 private:
  std::filesystem::path path_;
  std::uint32_t sample_rate_ = 0;
  std::uint32_t node_count_ = 0;
  bool finalized_ = false;
  std::vector<SsirEntry> entries_;
  std::map<std::pair<std::uint32_t, std::uint32_t>, std::size_t> keys_;
};

AmbisonicIR read_rir(const std::filesystem::path& path, std::uint32_t source, std::uint32_t listener);

}  // namespace echonav
