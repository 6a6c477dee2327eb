#include "agonet/container.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "agonet/error.hpp"

namespace agonet {

void ByteWriter::put_u32(std::uint32_t v) {
  for (int i = 0; i < 4; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void ByteWriter::put_u64(std::uint64_t v) {
  for (int i = 0; i < 8; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void ByteWriter::put_f64(double v) { put_u64(std::bit_cast<std::uint64_t>(v)); }

void ByteWriter::put_f32(float v) { put_u32(std::bit_cast<std::uint32_t>(v)); }

void ByteWriter::put_string(const std::string& s) {
  put_u64(s.size());
  bytes_.insert(bytes_.end(), s.begin(), s.end());
}

void ByteWriter::put_bytes(std::span<const std::uint8_t> b) {
  bytes_.insert(bytes_.end(), b.begin(), b.end());
}

void ByteReader::need(std::size_t n) const {
  if (n > bytes_.size() - pos_) {
    throw FormatError("truncated data: need " + std::to_string(n) +
                      " bytes at offset " + std::to_string(pos_) + ", have " +
                      std::to_string(bytes_.size() - pos_));
  }
}

std::uint8_t ByteReader::get_u8() {
  need(1);
  return bytes_[pos_++];
}

std::uint32_t ByteReader::get_u32() {
  need(4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_ + i]) << (8 * i);
  pos_ += 4;
  return v;
}

std::uint64_t ByteReader::get_u64() {
  need(8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes_[pos_ + i]) << (8 * i);
  pos_ += 8;
  return v;
}

double ByteReader::get_f64() { return std::bit_cast<double>(get_u64()); }

float ByteReader::get_f32() { return std::bit_cast<float>(get_u32()); }

std::string ByteReader::get_string() {
  const std::uint64_t n = get_count(1);
  std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
  pos_ += n;
  return s;
}

std::uint64_t ByteReader::get_count(std::size_t min_item_bytes) {
  const std::uint64_t n = get_u64();
  if (min_item_bytes > 0 && n > remaining() / min_item_bytes) {
    throw FormatError("truncated data: count " + std::to_string(n) +
                      " exceeds remaining " + std::to_string(remaining()) +
                      " bytes at offset " + std::to_string(pos_));
  }
  return n;
}

FourCC fourcc(const char (&tag)[5]) { return {tag[0], tag[1], tag[2], tag[3]}; }

namespace {

std::string tag_name(FourCC t) { return std::string(t.begin(), t.end()); }

constexpr std::array<char, 4> kMagic{'A', 'G', 'O', 'F'};

}  // namespace

void ContainerWriter::add_section(FourCC tag, std::vector<std::uint8_t> payload) {
  sections_.emplace_back(tag, std::move(payload));
}

std::vector<std::uint8_t> ContainerWriter::serialize() const {
  ByteWriter w;
  for (char c : kMagic) w.put_u8(static_cast<std::uint8_t>(c));
  w.put_u32(kContainerVersion);
  for (char c : kind_) w.put_u8(static_cast<std::uint8_t>(c));
  w.put_u32(static_cast<std::uint32_t>(sections_.size()));
  std::uint64_t offset = 16 + 20 * sections_.size();
  for (const auto& [tag, payload] : sections_) {
    for (char c : tag) w.put_u8(static_cast<std::uint8_t>(c));
    w.put_u64(offset);
    w.put_u64(payload.size());
    offset += payload.size();
  }
  for (const auto& [tag, payload] : sections_) w.put_bytes(payload);
  return w.take();
}

void ContainerWriter::save(const std::filesystem::path& path) const {
  write_file_bytes(path, serialize());
}

ContainerReader ContainerReader::parse(std::vector<std::uint8_t> bytes,
                                       FourCC expected_kind) {
  ContainerReader out;
  out.bytes_ = std::move(bytes);
  ByteReader r(out.bytes_);
  FourCC magic{};
  for (auto& c : magic) c = static_cast<char>(r.get_u8());
  if (magic != kMagic) throw FormatError("bad magic: expected AGOF");
  const std::uint32_t version = r.get_u32();
  if (version != kContainerVersion) {
    throw FormatError("version mismatch: expected " +
                      std::to_string(kContainerVersion) + ", found " +
                      std::to_string(version));
  }
  FourCC kind{};
  for (auto& c : kind) c = static_cast<char>(r.get_u8());
  if (kind != expected_kind) {
    throw FormatError("container kind mismatch: expected " +
                      tag_name(expected_kind) + ", found " + tag_name(kind));
  }
  const std::uint32_t count = r.get_u32();
  if (count > r.remaining() / 20) throw FormatError("truncated section table");
  for (std::uint32_t i = 0; i < count; ++i) {
    FourCC tag{};
    for (auto& c : tag) c = static_cast<char>(r.get_u8());
    const std::uint64_t off = r.get_u64();
    const std::uint64_t len = r.get_u64();
    if (off > out.bytes_.size() || len > out.bytes_.size() - off) {
      throw FormatError("truncated container: section " + tag_name(tag) +
                        " extends past end of file");
    }
    out.table_[tag] = {static_cast<std::size_t>(off), static_cast<std::size_t>(len)};
  }
  return out;
}

ContainerReader ContainerReader::load(const std::filesystem::path& path,
                                      FourCC expected_kind) {
  try {
    return parse(read_file_bytes(path), expected_kind);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

bool ContainerReader::has(FourCC tag) const { return table_.count(tag) != 0; }

ByteReader ContainerReader::section(FourCC tag) const {
  const auto it = table_.find(tag);
  if (it == table_.end()) throw FormatError("missing section " + tag_name(tag));
  return ByteReader(std::span<const std::uint8_t>(bytes_).subspan(
      it->second.first, it->second.second));
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  in.seekg(0, std::ios::end);
  const auto size = static_cast<std::size_t>(in.tellg());
  in.seekg(0, std::ios::beg);
  std::vector<std::uint8_t> bytes(size);
  if (size > 0) in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(size));
  if (!in) throw Error("read failed: " + path.string());
  return bytes;
}

void write_file_bytes(const std::filesystem::path& path,
                      std::span<const std::uint8_t> bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("write failed: " + path.string());
}

}  // namespace agonet
