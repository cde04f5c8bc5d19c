#pragma once

#include <array>
#include <span>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "imrl/errors.hpp"
#include "imrl/image.hpp"

namespace imrl {

inline std::string base64_encode(std::span<const std::uint8_t> bytes) {
  static constexpr char kAlphabet[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  std::size_t i = 0;
  for (; i + 2 < bytes.size(); i += 3) {
    const std::uint32_t v = (bytes[i] << 16) | (bytes[i + 1] << 8) | bytes[i + 2];
    out += kAlphabet[(v >> 18) & 63];
    out += kAlphabet[(v >> 12) & 63];
    out += kAlphabet[(v >> 6) & 63];
    out += kAlphabet[v & 63];
  }
  if (i < bytes.size()) {
    std::uint32_t v = bytes[i] << 16;
    if (i + 1 < bytes.size()) v |= bytes[i + 1] << 8;
    out += kAlphabet[(v >> 18) & 63];
    out += kAlphabet[(v >> 12) & 63];
    out += i + 1 < bytes.size() ? kAlphabet[(v >> 6) & 63] : '=';
    out += '=';
  }
  return out;
}

inline std::vector<std::uint8_t> base64_decode(std::string_view text) {
  auto value = [](char c) -> int {
    if (c >= 'A' && c <= 'Z') return c - 'A';
    if (c >= 'a' && c <= 'z') return c - 'a' + 26;
    if (c >= '0' && c <= '9') return c - '0' + 52;
    if (c == '+') return 62;
    if (c == '/') return 63;
    return -1;
  };
  if (text.size() % 4 != 0) throw IoError("base64 length is not a multiple of 4");
  std::vector<std::uint8_t> out;
  out.reserve(text.size() / 4 * 3);
  for (std::size_t i = 0; i < text.size(); i += 4) {
    std::array<int, 4> v{};
    int pad = 0;
    for (int k = 0; k < 4; ++k) {
      const char c = text[i + k];
      if (c == '=') {
        v[k] = 0;
        ++pad;
      } else {
        v[k] = value(c);
        if (v[k] < 0 || pad) throw IoError("invalid base64 character");
      }
    }
    const std::uint32_t bits = (v[0] << 18) | (v[1] << 12) | (v[2] << 6) | v[3];
    out.push_back(static_cast<std::uint8_t>(bits >> 16));
    if (pad < 2) out.push_back(static_cast<std::uint8_t>((bits >> 8) & 0xff));
    if (pad < 1) out.push_back(static_cast<std::uint8_t>(bits & 0xff));
  }
  return out;
}

inline nlohmann::json image_to_json(const RgbImage& image) {
  return {{"width", image.width}, {"height", image.height}, {"channels", 3}, {"data", base64_encode(image.data)}};
}

inline RgbImage image_from_json(const nlohmann::json& j) {
  RgbImage image(j.at("width").get<int>(), j.at("height").get<int>());
  if (j.at("channels").get<int>() != 3) throw IoError("only 3-channel images are supported");
  auto bytes = base64_decode(j.at("data").get<std::string>());
  if (bytes.size() != image.data.size()) throw IoError("image buffer has the wrong size");
  image.data = std::move(bytes);
  return image;
}

inline std::ofstream open_for_write(const std::filesystem::path& path, std::ios::openmode mode = std::ios::out) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, mode);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  return out;
}

inline std::ifstream open_for_read(const std::filesystem::path& path, std::ios::openmode mode = std::ios::in) {
  std::ifstream in(path, mode);
  if (!in) throw IoError("cannot open " + path.string());
  return in;
}

// Binary checkpoints end with [hash bytes][u32 length]["IMRLHASH"] so the
// config hash can be read from the file end without parsing the records.

inline constexpr std::string_view kHashTrailerMagic = "IMRLHASH";

inline void write_hash_trailer(std::ostream& out, const std::string& hash) {
  out.write(hash.data(), static_cast<std::streamsize>(hash.size()));
  const auto n = static_cast<std::uint32_t>(hash.size());
  const std::array<char, 4> len{static_cast<char>(n & 0xff), static_cast<char>((n >> 8) & 0xff),
                                static_cast<char>((n >> 16) & 0xff), static_cast<char>((n >> 24) & 0xff)};
  out.write(len.data(), 4);
  out.write(kHashTrailerMagic.data(), static_cast<std::streamsize>(kHashTrailerMagic.size()));
  if (!out) throw IoError("failed to write checkpoint trailer");
}

/// Empty when the file has no trailer.
inline std::string read_hash_trailer(const std::filesystem::path& path) {
  auto in = open_for_read(path, std::ios::binary);
  in.seekg(0, std::ios::end);
  const auto size = static_cast<std::int64_t>(in.tellg());
  if (size < 12) return {};
  in.seekg(size - 12);
  std::array<char, 12> tail{};
  in.read(tail.data(), 12);
  if (std::string_view(tail.data() + 4, 8) != kHashTrailerMagic) return {};
  std::uint32_t n = 0;
  for (int i = 3; i >= 0; --i) n = (n << 8) | static_cast<unsigned char>(tail[static_cast<std::size_t>(i)]);
  if (n > 256 || static_cast<std::int64_t>(n) > size - 12) throw IoError("corrupt checkpoint trailer in " + path.string());
  std::string hash(n, '\0');
  in.seekg(size - 12 - n);
  in.read(hash.data(), n);
  return hash;
}

}  // namespace imrl
