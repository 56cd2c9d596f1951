#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include <zlib.h>

#include "emoser/audio.hpp"
#include "emoser/error.hpp"

namespace emoser {

namespace detail {

inline std::vector<std::uint8_t> inflate_raw(std::span<const std::uint8_t> in, std::size_t expected) {
  // One spare byte keeps next_out non-null for empty members and exposes
  // streams longer than declared.
  std::vector<std::uint8_t> out(expected + 1);
  z_stream zs{};
  if (inflateInit2(&zs, -MAX_WBITS) != Z_OK) fail(Errc::BadArchive, "zlib init failed");
  zs.next_in = const_cast<Bytef*>(in.data());
  zs.avail_in = static_cast<uInt>(in.size());
  zs.next_out = out.data();
  zs.avail_out = static_cast<uInt>(out.size());
  const int rc = inflate(&zs, Z_FINISH);
  const auto produced = zs.total_out;
  inflateEnd(&zs);
  if (rc != Z_STREAM_END || produced != expected) fail(Errc::BadArchive, "corrupt deflate stream");
  out.resize(expected);
  return out;
}

inline bool safe_entry_name(const std::string& name) {
  if (name.empty() || name.front() == '/' || name.find('\\') != std::string::npos) return false;
  for (const auto& part : std::filesystem::path(name)) {
    if (part == "..") return false;
  }
  return true;
}

}  // namespace detail

/// Extracts every file of a ZIP archive (stored or deflate entries, no ZIP64)
/// below dest, verifying CRC-32. Returns the number of files written.
inline std::size_t extract_zip(const std::filesystem::path& zip_path, const std::filesystem::path& dest) {
  using detail::load_u16;
  using detail::load_u32;
  std::vector<std::uint8_t> zip;
  try {
    zip = read_file_bytes(zip_path);
  } catch (const Error&) {
    fail(Errc::IoFailure, "cannot read archive " + zip_path.string());
  }
  if (zip.size() < 22) fail(Errc::BadArchive, "file too small to be a ZIP archive");

  std::size_t eocd = zip.size() - 22;
  const std::size_t search_floor = zip.size() > 22 + 65535 ? zip.size() - 22 - 65535 : 0;
  while (load_u32(zip.data() + eocd) != 0x06054b50u) {
    if (eocd == search_floor) fail(Errc::BadArchive, "end of central directory not found");
    --eocd;
  }
  const std::size_t entries = load_u16(zip.data() + eocd + 10);
  std::size_t pos = load_u32(zip.data() + eocd + 16);

  std::size_t written = 0;
  for (std::size_t e = 0; e < entries; ++e) {
    if (pos + 46 > zip.size() || load_u32(zip.data() + pos) != 0x02014b50u) {
      fail(Errc::BadArchive, "bad central directory entry");
    }
    const std::uint8_t* cd = zip.data() + pos;
    const std::uint16_t method = load_u16(cd + 10);
    const std::uint32_t crc = load_u32(cd + 16);
    const std::uint32_t comp_size = load_u32(cd + 20);
    const std::uint32_t size = load_u32(cd + 24);
    const std::uint16_t name_len = load_u16(cd + 28);
    const std::size_t skip = static_cast<std::size_t>(load_u16(cd + 30)) + load_u16(cd + 32);
    const std::uint32_t local = load_u32(cd + 42);
    if (pos + 46 + name_len > zip.size()) fail(Errc::BadArchive, "truncated central directory");
    const std::string name(reinterpret_cast<const char*>(cd + 46), name_len);
    pos += 46 + name_len + skip;

    if (comp_size == 0xffffffffu || size == 0xffffffffu) fail(Errc::BadArchive, "ZIP64 entries are not supported");
    if (!detail::safe_entry_name(name)) fail(Errc::BadArchive, "unsafe entry name " + name);
    if (name.back() == '/') continue;

    if (static_cast<std::size_t>(local) + 30 > zip.size() || load_u32(zip.data() + local) != 0x04034b50u) {
      fail(Errc::BadArchive, "bad local header for " + name);
    }
    const std::size_t data_at =
        local + 30 + static_cast<std::size_t>(load_u16(zip.data() + local + 26)) + load_u16(zip.data() + local + 28);
    if (data_at + comp_size > zip.size()) fail(Errc::BadArchive, "truncated data for " + name);
    const std::span<const std::uint8_t> raw(zip.data() + data_at, comp_size);

    std::vector<std::uint8_t> body;
    if (method == 0) {
      if (comp_size != size) fail(Errc::BadArchive, "stored entry size mismatch for " + name);
      body.assign(raw.begin(), raw.end());
    } else if (method == 8) {
      body = detail::inflate_raw(raw, size);
    } else {
      fail(Errc::BadArchive, "unsupported compression method " + std::to_string(method));
    }
    if (crc32(0L, body.data(), static_cast<uInt>(body.size())) != crc) {
      fail(Errc::BadArchive, "CRC mismatch for " + name);
    }

    const auto out_path = dest / name;
    std::error_code ec;
    std::filesystem::create_directories(out_path.parent_path(), ec);
    std::ofstream out(out_path, std::ios::binary);
    if (!out) fail(Errc::IoFailure, "cannot write " + out_path.string());
    out.write(reinterpret_cast<const char*>(body.data()), static_cast<std::streamsize>(body.size()));
    if (!out) fail(Errc::IoFailure, "short write to " + out_path.string());
    ++written;
  }
  return written;
}

}  // namespace emoser
