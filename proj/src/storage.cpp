#include "echonav/storage.hpp"

#include <array>
#include <cmath>
#include <cstring>
#include <fstream>

#include <zlib.h>

#include "echonav/errors.hpp"

namespace echonav {

namespace {

constexpr char kMagic[4] = {'S', 'S', 'I', 'R'};
constexpr char kJournalMagic[4] = {'S', 'S', 'I', 'J'};
constexpr std::size_t kJournalHeaderSize = 8;

void put_u32(unsigned char* p, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) p[i] = static_cast<unsigned char>(v >> (8 * i));
}
void put_u64(unsigned char* p, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) p[i] = static_cast<unsigned char>(v >> (8 * i));
}
std::uint32_t get_u32(const unsigned char* p) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
  return v;
}
std::uint64_t get_u64(const unsigned char* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return v;
}

struct Header {
  std::uint32_t version = kSsirVersion;
  std::uint32_t flags = 0;
  std::uint32_t sample_rate = 0;
  std::uint32_t channels = kShChannels;
  std::uint32_t node_count = 0;
  std::uint32_t pair_count = 0;
  std::uint64_t index_offset = 0;
};

std::array<unsigned char, kSsirHeaderSize> encode_header(const Header& h) {
  std::array<unsigned char, kSsirHeaderSize> b{};
  std::memcpy(b.data(), kMagic, 4);
  put_u32(&b[4], h.version);
  put_u32(&b[8], h.flags);
  put_u32(&b[12], h.sample_rate);
  put_u32(&b[16], h.channels);
  put_u32(&b[20], h.node_count);
  put_u32(&b[24], h.pair_count);
  put_u32(&b[28], 0);
  put_u64(&b[32], h.index_offset);
  return b;
}

Header decode_header(const unsigned char* b, const std::filesystem::path& path) {
  if (std::memcmp(b, kMagic, 4) != 0) throw CorruptionError(path.string() + ": bad magic (not an SSIR container)");
  Header h;
  h.version = get_u32(b + 4);
  if (h.version != kSsirVersion)
    throw CorruptionError(path.string() + ": unsupported version " + std::to_string(h.version));
  h.flags = get_u32(b + 8);
  h.sample_rate = get_u32(b + 12);
  h.channels = get_u32(b + 16);
  if (h.channels != kShChannels) throw CorruptionError(path.string() + ": channel count must be 9");
  h.node_count = get_u32(b + 20);
  h.pair_count = get_u32(b + 24);
  h.index_offset = get_u64(b + 32);
  return h;
}

std::array<unsigned char, kSsirEntrySize> encode_entry(const SsirEntry& e) {
  std::array<unsigned char, kSsirEntrySize> b{};
  put_u32(&b[0], e.source);
  put_u32(&b[4], e.listener);
  put_u64(&b[8], e.offset);
  put_u32(&b[16], e.length);
  put_u32(&b[20], e.crc);
  return b;
}

SsirEntry decode_entry(const unsigned char* b) {
  return {get_u32(b), get_u32(b + 4), get_u64(b + 8), get_u32(b + 16), get_u32(b + 20)};
}

std::uint64_t payload_bytes(const SsirEntry& e) {
  return static_cast<std::uint64_t>(e.length) * kShChannels * 4;
}

std::vector<unsigned char> encode_payload(const AmbisonicIR& ir) {
  std::vector<unsigned char> out(ir.samples.size() * 4);
  for (std::size_t i = 0; i < ir.samples.size(); ++i) {
    std::uint32_t bits;
    std::memcpy(&bits, &ir.samples[i], 4);
    put_u32(&out[4 * i], bits);
  }
  return out;
}

std::uint32_t crc_of(const std::vector<unsigned char>& bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed in chunks.
  std::size_t done = 0;
  while (done < bytes.size()) {
    const std::size_t n = std::min<std::size_t>(bytes.size() - done, 1u << 30);
    crc = crc32(crc, bytes.data() + done, static_cast<uInt>(n));
    done += n;
  }
  return static_cast<std::uint32_t>(crc);
}

std::vector<unsigned char> read_bytes(const std::filesystem::path& path, std::uint64_t offset, std::uint64_t n) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw StorageError("cannot open " + path.string());
  in.seekg(static_cast<std::streamoff>(offset));
  std::vector<unsigned char> buf(n);
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(n));
  if (static_cast<std::uint64_t>(in.gcount()) != n)
    throw CorruptionError(path.string() + ": truncated read at offset " + std::to_string(offset));
  return buf;
}

/// Complete entries recorded in a journal; a torn trailing record is ignored.
std::vector<SsirEntry> read_journal(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CorruptionError(path.string() + ": journal missing");
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() < kJournalHeaderSize || std::memcmp(bytes.data(), kJournalMagic, 4) != 0 ||
      get_u32(bytes.data() + 4) != kSsirVersion)
    throw CorruptionError(path.string() + ": bad journal header");
  std::vector<SsirEntry> out;
  for (std::size_t p = kJournalHeaderSize; p + kSsirEntrySize <= bytes.size(); p += kSsirEntrySize)
    out.push_back(decode_entry(bytes.data() + p));
  return out;
}

void check_entries(const std::vector<SsirEntry>& entries, std::uint64_t payload_end,
                   std::map<std::pair<std::uint32_t, std::uint32_t>, std::size_t>& keys,
                   const std::filesystem::path& path) {
  keys.clear();
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const SsirEntry& e = entries[i];
    if (e.offset < kSsirHeaderSize || e.offset + payload_bytes(e) > payload_end)
      throw CorruptionError(path.string() + ": entry (" + std::to_string(e.source) + "," +
                            std::to_string(e.listener) + ") lies outside the payload");
    if (!keys.emplace(std::make_pair(e.source, e.listener), i).second)
      throw CorruptionError(path.string() + ": duplicate index key");
  }
}

void write_all(std::FILE* f, const void* data, std::size_t n, const std::filesystem::path& path) {
  if (n > 0 && std::fwrite(data, 1, n, f) != n) throw StorageError("write failed for " + path.string());
}

void flush(std::FILE* f, const std::filesystem::path& path) {
  if (std::fflush(f) != 0) throw StorageError("flush failed for " + path.string());
}

}  // namespace

std::filesystem::path journal_path(const std::filesystem::path& container) {
  std::filesystem::path p = container;
  p += ".journal";
  return p;
}

SsirWriter SsirWriter::create(const std::filesystem::path& path, std::uint32_t sample_rate,
                              std::uint32_t node_count) {
  SsirWriter w;
  w.path_ = path;
  w.sample_rate_ = sample_rate;
  w.node_count_ = node_count;
  w.data_ = std::fopen(path.c_str(), "w+b");
  if (!w.data_) throw StorageError("cannot create " + path.string());
  Header h;
  h.sample_rate = sample_rate;
  h.node_count = node_count;
  const auto hb = encode_header(h);
  write_all(w.data_, hb.data(), hb.size(), path);
  flush(w.data_, path);
  const auto jp = journal_path(path);
  w.journal_ = std::fopen(jp.c_str(), "wb");
  if (!w.journal_) throw StorageError("cannot create " + jp.string());
  unsigned char jh[kJournalHeaderSize];
  std::memcpy(jh, kJournalMagic, 4);
  put_u32(jh + 4, kSsirVersion);
  write_all(w.journal_, jh, sizeof jh, jp);
  flush(w.journal_, jp);
  return w;
}

SsirWriter SsirWriter::resume(const std::filesystem::path& path) {
  const auto head = read_bytes(path, 0, kSsirHeaderSize);
  Header h = decode_header(head.data(), path);
  const std::uint64_t file_size = std::filesystem::file_size(path);
  std::vector<SsirEntry> entries;
  if (h.index_offset != 0) {
    if (h.index_offset + static_cast<std::uint64_t>(h.pair_count) * kSsirEntrySize != file_size)
      throw CorruptionError(path.string() + ": index does not end at end of file");
    const auto idx = read_bytes(path, h.index_offset, static_cast<std::uint64_t>(h.pair_count) * kSsirEntrySize);
    for (std::uint32_t i = 0; i < h.pair_count; ++i) entries.push_back(decode_entry(&idx[i * kSsirEntrySize]));
  } else {
    entries = read_journal(journal_path(path));
  }
  std::uint64_t end = kSsirHeaderSize;
  for (const SsirEntry& e : entries) end = std::max(end, e.offset + payload_bytes(e));
  if (end > file_size) throw CorruptionError(path.string() + ": journaled payload is missing");

  SsirWriter w;
  std::map<std::pair<std::uint32_t, std::uint32_t>, std::size_t> keys;
  check_entries(entries, end, keys, path);
  for (const SsirEntry& e : entries) {
    if (crc_of(read_bytes(path, e.offset, payload_bytes(e))) != e.crc)
      throw CorruptionError(path.string() + ": checksum mismatch while resuming");
  }
  std::filesystem::resize_file(path, end);
  w.path_ = path;
  w.sample_rate_ = h.sample_rate;
  w.node_count_ = h.node_count;
  w.end_ = end;
  w.entries_ = std::move(entries);
  w.keys_ = std::move(keys);
  w.data_ = std::fopen(path.c_str(), "r+b");
  if (!w.data_) throw StorageError("cannot open " + path.string());
  // Mark the container as open again before anything else is appended.
  h.index_offset = 0;
  h.pair_count = 0;
  const auto hb = encode_header(h);
  write_all(w.data_, hb.data(), hb.size(), path);
  flush(w.data_, path);
  const auto jp = journal_path(path);
  w.journal_ = std::fopen(jp.c_str(), "wb");
  if (!w.journal_) throw StorageError("cannot create " + jp.string());
  unsigned char jh[kJournalHeaderSize];
  std::memcpy(jh, kJournalMagic, 4);
  put_u32(jh + 4, kSsirVersion);
  write_all(w.journal_, jh, sizeof jh, jp);
  for (const SsirEntry& e : w.entries_) {
    const auto eb = encode_entry(e);
    write_all(w.journal_, eb.data(), eb.size(), jp);
  }
  flush(w.journal_, jp);
  return w;
}

SsirWriter SsirWriter::open_or_create(const std::filesystem::path& path, std::uint32_t sample_rate,
                                      std::uint32_t node_count) {
  if (!std::filesystem::exists(path)) return create(path, sample_rate, node_count);
  SsirWriter w = resume(path);
  if (w.sample_rate_ != sample_rate || w.node_count_ != node_count)
    throw ValidationError(path.string() + ": existing container has a different sample rate or node count");
  return w;
}

SsirWriter::SsirWriter(SsirWriter&& o) noexcept { *this = std::move(o); }

SsirWriter& SsirWriter::operator=(SsirWriter&& o) noexcept {
  if (this != &o) {
    release();
    path_ = std::move(o.path_);
    data_ = std::exchange(o.data_, nullptr);
    journal_ = std::exchange(o.journal_, nullptr);
    sample_rate_ = o.sample_rate_;
    node_count_ = o.node_count_;
    end_ = o.end_;
    entries_ = std::move(o.entries_);
    keys_ = std::move(o.keys_);
  }
  return *this;
}

SsirWriter::~SsirWriter() {
  if (data_ != nullptr) {
    try {
      close();
    } catch (...) {
      release();
    }
  }
}

void SsirWriter::release() noexcept {
  if (data_) std::fclose(data_);
  if (journal_) std::fclose(journal_);
  data_ = nullptr;
  journal_ = nullptr;
}

bool SsirWriter::contains(std::uint32_t source, std::uint32_t listener) const {
  return keys_.count({source, listener}) > 0;
}

void SsirWriter::write(const AmbisonicIR& ir) {
  if (data_ == nullptr) throw StorageError("container is closed");
  if (ir.samples.empty() || ir.samples.size() % kShChannels != 0)
    throw ValidationError("IR must hold a positive number of 9-channel frames");
  if (std::lround(ir.sample_rate) != static_cast<long>(sample_rate_))
    throw ValidationError("IR sample rate " + std::to_string(ir.sample_rate) + " does not match container");
  if (contains(ir.source_id, ir.listener_id))
    throw ValidationError("duplicate key (" + std::to_string(ir.source_id) + "," +
                          std::to_string(ir.listener_id) + ")");
  const std::vector<unsigned char> bytes = encode_payload(ir);
  SsirEntry e{ir.source_id, ir.listener_id, end_, static_cast<std::uint32_t>(ir.length()), crc_of(bytes)};
  if (std::fseek(data_, static_cast<long>(end_), SEEK_SET) != 0) throw StorageError("seek failed");
  write_all(data_, bytes.data(), bytes.size(), path_);
  flush(data_, path_);
  // The journal record only appears once its payload is on disk.
  const auto eb = encode_entry(e);
  write_all(journal_, eb.data(), eb.size(), journal_path(path_));
  flush(journal_, journal_path(path_));
  end_ += bytes.size();
  keys_.emplace(std::make_pair(e.source, e.listener), entries_.size());
  entries_.push_back(e);
}

void SsirWriter::close() {
  if (data_ == nullptr) return;
  if (std::fseek(data_, static_cast<long>(end_), SEEK_SET) != 0) throw StorageError("seek failed");
  std::vector<unsigned char> index;
  index.reserve(entries_.size() * kSsirEntrySize);
  for (const SsirEntry& e : entries_) {
    const auto eb = encode_entry(e);
    index.insert(index.end(), eb.begin(), eb.end());
  }
  write_all(data_, index.data(), index.size(), path_);
  flush(data_, path_);
  Header h;
  h.sample_rate = sample_rate_;
  h.node_count = node_count_;
  h.pair_count = static_cast<std::uint32_t>(entries_.size());
  h.index_offset = end_;
  const auto hb = encode_header(h);
  std::rewind(data_);
  write_all(data_, hb.data(), hb.size(), path_);
  flush(data_, path_);
  release();
  std::error_code ec;
  std::filesystem::remove(journal_path(path_), ec);
}

void SsirWriter::abandon() { release(); }

SsirReader::SsirReader(const std::filesystem::path& path) : path_(path) {
  if (!std::filesystem::exists(path)) throw NotFoundError("no container at " + path.string());
  const std::uint64_t file_size = std::filesystem::file_size(path);
  if (file_size < kSsirHeaderSize) throw CorruptionError(path.string() + ": shorter than the header");
  const auto head = read_bytes(path, 0, kSsirHeaderSize);
  const Header h = decode_header(head.data(), path);
  sample_rate_ = h.sample_rate;
  node_count_ = h.node_count;
  std::uint64_t payload_end = 0;
  if (h.index_offset != 0) {
    finalized_ = true;
    const std::uint64_t index_bytes = static_cast<std::uint64_t>(h.pair_count) * kSsirEntrySize;
    if (h.index_offset < kSsirHeaderSize || h.index_offset + index_bytes != file_size)
      throw CorruptionError(path.string() + ": truncated or padded (index does not match file size)");
    const auto idx = read_bytes(path, h.index_offset, index_bytes);
    for (std::uint32_t i = 0; i < h.pair_count; ++i) entries_.push_back(decode_entry(&idx[i * kSsirEntrySize]));
    payload_end = h.index_offset;
  } else {
    entries_ = read_journal(journal_path(path));
    payload_end = file_size;
  }
  check_entries(entries_, payload_end, keys_, path);
}

bool SsirReader::contains(std::uint32_t source, std::uint32_t listener) const {
  return keys_.count({source, listener}) > 0;
}

AmbisonicIR SsirReader::read(std::uint32_t source, std::uint32_t listener) const {
  const auto it = keys_.find({source, listener});
  if (it == keys_.end())
    throw NotFoundError("pair (" + std::to_string(source) + "," + std::to_string(listener) + ") not in " +
                        path_.string());
  const SsirEntry& e = entries_[it->second];
  const auto bytes = read_bytes(path_, e.offset, payload_bytes(e));
  if (crc_of(bytes) != e.crc)
    throw CorruptionError(path_.string() + ": checksum mismatch for pair (" + std::to_string(source) + "," +
                          std::to_string(listener) + ")");
  AmbisonicIR ir;
  ir.source_id = source;
  ir.listener_id = listener;
  ir.sample_rate = sample_rate_;
  ir.samples.resize(static_cast<std::size_t>(e.length) * kShChannels);
  for (std::size_t i = 0; i < ir.samples.size(); ++i) {
    const std::uint32_t bits = get_u32(&bytes[4 * i]);
    std::memcpy(&ir.samples[i], &bits, 4);
  }
  return ir;
}

void SsirReader::verify() const {
  for (const SsirEntry& e : entries_) read(e.source, e.listener);
}

AmbisonicIR read_rir(const std::filesystem::path& path, std::uint32_t source, std::uint32_t listener) {
  return SsirReader(path).read(source, listener);
}

}  // namespace echonav
