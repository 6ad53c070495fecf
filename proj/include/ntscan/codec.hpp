#pragma once

// PGM (P5, maxval 255) and 8-bit PNG ingestion; PGM/PNG output.

#include <png.h>

#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "ntscan/errors.hpp"
#include "ntscan/image.hpp"

namespace ntscan {

using Bytes = std::vector<std::uint8_t>;

inline Bytes read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  Bytes bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failure on '" + path.string() + "'");
  return bytes;
}

inline void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  out.flush();
  if (!out) throw IoError("write failure on '" + path.string() + "'");
}

namespace detail {

class PgmHeaderReader {
 public:
  explicit PgmHeaderReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  long next_int(const char* what) {
    skip_space_and_comments();
    if (pos_ >= bytes_.size() || !std::isdigit(bytes_[pos_])) {
      throw FormatError(std::string("PGM header: missing ") + what);
    }
    long v = 0;
    while (pos_ < bytes_.size() && std::isdigit(bytes_[pos_])) {
      v = v * 10 + (bytes_[pos_] - '0');
      if (v > 1'000'000'000L) throw FormatError(std::string("PGM header: ") + what + " too large");
      ++pos_;
    }
    return v;
  }

  /// Value of a "# mm_per_px <value>" header comment, if one was seen.
  std::optional<double> mm_per_px() const { return mm_per_px_; }

  // Exactly one whitespace byte separates maxval from the raster.
  std::size_t raster_offset() {
    if (pos_ >= bytes_.size() || !std::isspace(bytes_[pos_])) {
      throw FormatError("PGM header: missing separator before raster");
    }
    return pos_ + 1;
  }

 private:
  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      if (std::isspace(bytes_[pos_])) {
        ++pos_;
      } else if (bytes_[pos_] == '#') {
        const std::size_t start = ++pos_;
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
        read_calibration(std::string(bytes_.begin() + static_cast<long>(start),
                                     bytes_.begin() + static_cast<long>(pos_)));
      } else {
        break;
      }
    }
  }

  void read_calibration(const std::string& comment) {
    std::istringstream in(comment);
    std::string key;
    if (!(in >> key) || key != "mm_per_px") return;
    double v = 0.0;
    if (!(in >> v) || !(in >> std::ws).eof() || !std::isfinite(v) || !(v > 0.0)) {
      throw FormatError("PGM header: mm_per_px comment needs one positive number");
    }
    mm_per_px_ = v;
  }

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 2;
  std::optional<double> mm_per_px_;
};

inline std::uint32_t be32(const std::uint8_t* p) {
  return (std::uint32_t{p[0]} << 24) | (std::uint32_t{p[1]} << 16) | (std::uint32_t{p[2]} << 8) |
         std::uint32_t{p[3]};
}

constexpr std::uint8_t kPngSignature[8] = {0x89, 'P', 'N', 'G', 0x0D, 0x0A, 0x1A, 0x0A};

}  // namespace detail

inline bool is_png(std::span<const std::uint8_t> bytes) {
  return bytes.size() >= 8 && std::memcmp(bytes.data(), detail::kPngSignature, 8) == 0;
}

inline bool is_pgm(std::span<const std::uint8_t> bytes) {
  return bytes.size() >= 2 && bytes[0] == 'P' && bytes[1] == '5';
}

inline GrayImage decode_pgm(std::span<const std::uint8_t> bytes) {
  if (!is_pgm(bytes)) throw FormatError("PGM magic: expected 'P5'");
  detail::PgmHeaderReader hdr(bytes);
  const long width = hdr.next_int("width");
  const long height = hdr.next_int("height");
  const long maxval = hdr.next_int("maxval");
  if (width <= 0 || height <= 0) throw FormatError("PGM dimensions must be positive");
  if (maxval != 255) {
    throw FormatError("unsupported PGM maxval " + std::to_string(maxval) + " (need 255, 8-bit)");
  }
  const std::size_t offset = hdr.raster_offset();
  const std::size_t count = static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
  if (bytes.size() < offset + count) throw FormatError("PGM raster truncated");
  std::vector<std::uint8_t> data(bytes.begin() + static_cast<long>(offset),
                                 bytes.begin() + static_cast<long>(offset + count));
  GrayImage img(static_cast<int>(width), static_cast<int>(height), std::move(data));
  img.set_mm_per_px(hdr.mm_per_px());
  return img;
}

namespace detail {
inline Bytes encode_pgm(const Raster<std::uint8_t>& img, std::optional<double> mm_per_px) {
  std::string header = "P5\n";
  if (mm_per_px) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, *mm_per_px);
    header += "# mm_per_px " + std::string(buf, res.ptr) + "\n";
  }
  header += std::to_string(img.width()) + " " + std::to_string(img.height()) + "\n255\n";
  Bytes out(header.begin(), header.end());
  out.insert(out.end(), img.data().begin(), img.data().end());
  return out;
}
}  // namespace detail

inline Bytes encode_pgm(const Raster<std::uint8_t>& img) { return detail::encode_pgm(img, {}); }

/// Calibration travels as a "# mm_per_px <value>" header comment.
inline Bytes encode_pgm(const GrayImage& img) { return detail::encode_pgm(img, img.mm_per_px()); }

/// 8-bit gray / gray+alpha / RGB / RGBA PNG to gray. Colour goes through BT.601
/// luminance, alpha is discarded. Palette images, other bit depths and
/// non-square pixel aspect (pHYs) are rejected. A pHYs density in pixels per
/// metre becomes the image calibration.
inline GrayImage decode_png(std::span<const std::uint8_t> bytes) {
  if (!is_png(bytes)) throw FormatError("PNG signature missing");
  if (bytes.size() < 33 || std::memcmp(bytes.data() + 12, "IHDR", 4) != 0) {
    throw FormatError("PNG: missing IHDR chunk");
  }
  const int bit_depth = bytes[24];
  const int color_type = bytes[25];
  if (bit_depth != 8) {
    throw FormatError("unsupported PNG bit depth " + std::to_string(bit_depth) + " (need 8)");
  }
  png_uint_32 format = 0;
  int channels = 0;
  switch (color_type) {
    case 0: format = PNG_FORMAT_GRAY; channels = 1; break;
    case 4: format = PNG_FORMAT_GA; channels = 2; break;
    case 2: format = PNG_FORMAT_RGB; channels = 3; break;
    case 6: format = PNG_FORMAT_RGBA; channels = 4; break;
    default:
      throw FormatError("unsupported PNG colour type " + std::to_string(color_type) +
                        " (need gray or RGB)");
  }

  // Walk chunks for pHYs; libpng's simplified reader does not expose it.
  std::optional<double> mm_per_px;
  for (std::size_t pos = 8; pos + 12 <= bytes.size();) {
    const std::uint32_t len = detail::be32(bytes.data() + pos);
    if (pos + 12 + len > bytes.size()) break;
    const std::uint8_t* type = bytes.data() + pos + 4;
    if (std::memcmp(type, "pHYs", 4) == 0 && len >= 9) {
      const std::uint32_t ppu_x = detail::be32(bytes.data() + pos + 8);
      const std::uint32_t ppu_y = detail::be32(bytes.data() + pos + 12);
      if (ppu_x != ppu_y) throw FormatError("PNG pHYs: anisotropic pixel spacing is not supported");
      // Unit 1 is the metre; unit 0 only fixes the aspect ratio.
      if (bytes[pos + 16] == 1 && ppu_x > 0) mm_per_px = 1000.0 / ppu_x;
    }
    if (std::memcmp(type, "IDAT", 4) == 0) break;
    pos += 12 + len;
  }

  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size())) {
    throw FormatError(std::string("PNG decode: ") + image.message);
  }
  image.format = format;
  std::vector<std::uint8_t> buf(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buf.data(), 0, nullptr)) {
    const std::string msg = image.message;
    png_image_free(&image);
    throw FormatError("PNG decode: " + msg);
  }
  const int w = static_cast<int>(image.width);
  const int h = static_cast<int>(image.height);
  std::vector<std::uint8_t> gray(static_cast<std::size_t>(w) * static_cast<std::size_t>(h));
  for (std::size_t i = 0; i < gray.size(); ++i) {
    const std::uint8_t* px = buf.data() + i * static_cast<std::size_t>(channels);
    gray[i] = channels >= 3 ? luminance(px[0], px[1], px[2]) : px[0];
  }
  GrayImage out(w, h, std::move(gray));
  out.set_mm_per_px(mm_per_px);
  return out;
}

namespace detail {

inline Bytes encode_png_raw(const void* pixels, int width, int height, png_uint_32 format) {
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(width);
  image.height = static_cast<png_uint_32>(height);
  image.format = format;
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&image, nullptr, &size, 0, pixels, 0, nullptr)) {
    throw IoError(std::string("PNG encode: ") + image.message);
  }
  Bytes out(size);
  if (!png_image_write_to_memory(&image, out.data(), &size, 0, pixels, 0, nullptr)) {
    throw IoError(std::string("PNG encode: ") + image.message);
  }
  out.resize(size);
  return out;
}

}  // namespace detail

inline Bytes encode_png(const Raster<std::uint8_t>& img) {
  return detail::encode_png_raw(img.data().data(), img.width(), img.height(), PNG_FORMAT_GRAY);
}

inline Bytes encode_png(const RgbImage& img) {
  static_assert(sizeof(Rgb) == 3);
  return detail::encode_png_raw(img.data().data(), img.width(), img.height(), PNG_FORMAT_RGB);
}

/// Dispatches on magic bytes.
inline GrayImage decode_image(std::span<const std::uint8_t> bytes) {
  if (is_png(bytes)) return decode_png(bytes);
  if (is_pgm(bytes)) return decode_pgm(bytes);
  throw FormatError("unrecognised image format (expected PGM P5 or PNG)");
}

inline GrayImage load_image(const std::filesystem::path& path) {
  return decode_image(read_file(path));
}

namespace detail {
inline bool has_png_extension(const std::filesystem::path& path) {
  std::string ext = path.extension().string();
  for (auto& ch : ext) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  return ext == ".png";
}
}  // namespace detail

/// Writes PNG for a ".png" extension, PGM otherwise. Only PGM output keeps
/// the calibration.
inline void save_image(const Raster<std::uint8_t>& img, const std::filesystem::path& path) {
  write_file(path, detail::has_png_extension(path) ? encode_png(img) : encode_pgm(img));
}

inline void save_image(const GrayImage& img, const std::filesystem::path& path) {
  write_file(path, detail::has_png_extension(path) ? encode_png(img) : encode_pgm(img));
}

inline void save_image(const RgbImage& img, const std::filesystem::path& path) {
  write_file(path, encode_png(img));
}

}  // namespace ntscan
