#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace agonet {

// Little-endian byte sink.
class ByteWriter {
 public:
  void put_u8(std::uint8_t v) { bytes_.push_back(v); }
  void put_u32(std::uint32_t v);
  void put_u64(std::uint64_t v);
  void put_f64(double v);
  void put_f32(float v);
  void put_string(const std::string& s);
  void put_bytes(std::span<const std::uint8_t> b);

  const std::vector<std::uint8_t>& bytes() const noexcept { return bytes_; }
  std::vector<std::uint8_t> take() { return std::move(bytes_); }

 private:
  std::vector<std::uint8_t> bytes_;
};

// Bounds-checked little-endian byte source; overruns raise FormatError.
class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::uint8_t get_u8();
  std::uint32_t get_u32();
  std::uint64_t get_u64();
  double get_f64();
  float get_f32();
  std::string get_string();

  // Reads a count and checks that `count * min_item_bytes` still fits.
  std::uint64_t get_count(std::size_t min_item_bytes);

  std::size_t remaining() const noexcept { return bytes_.size() - pos_; }
  std::size_t position() const noexcept { return pos_; }

 private:
  void need(std::size_t n) const;

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

using FourCC = std::array<char, 4>;

FourCC fourcc(const char (&tag)[5]);

// Versioned container: magic "AGOF", u32 version, FourCC kind, u32 section
// count, then a section table of (FourCC tag, u64 offset, u64 length) and
// the section payloads.
inline constexpr std::uint32_t kContainerVersion = 1;

class ContainerWriter {
 public:
  explicit ContainerWriter(FourCC kind) : kind_(kind) {}

  void add_section(FourCC tag, std::vector<std::uint8_t> payload);
  std::vector<std::uint8_t> serialize() const;
  void save(const std::filesystem::path& path) const;

 private:
  FourCC kind_;
  std::vector<std::pair<FourCC, std::vector<std::uint8_t>>> sections_;
};

class ContainerReader {
 public:
  // Throws FormatError on bad magic, kind, version mismatch or truncation.
  static ContainerReader parse(std::vector<std::uint8_t> bytes,
                               FourCC expected_kind);
  static ContainerReader load(const std::filesystem::path& path,
                              FourCC expected_kind);

  bool has(FourCC tag) const;
  ByteReader section(FourCC tag) const;

 private:
  std::vector<std::uint8_t> bytes_;
  std::map<FourCC, std::pair<std::size_t, std::size_t>> table_;
};

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path,
                      std::span<const std::uint8_t> bytes);

}  // namespace agonet
