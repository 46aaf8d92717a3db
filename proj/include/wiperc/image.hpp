#pragma once

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "wiperc/error.hpp"
#include "wiperc/io_util.hpp"

namespace wiperc {

// Grayscale image, row-major, nominal range [0, 1].
struct GrayImage {
  int rows = 0;
  int cols = 0;
  std::vector<double> px;

  GrayImage() = default;
  GrayImage(int r, int c, double fill = 0.0) : rows(r), cols(c), px(static_cast<std::size_t>(r) * c, fill) {}

  double& at(int r, int c) { return px[static_cast<std::size_t>(r) * cols + c]; }
  double at(int r, int c) const { return px[static_cast<std::size_t>(r) * cols + c]; }
  bool same_shape(const GrayImage& o) const { return rows == o.rows && cols == o.cols; }
  bool operator==(const GrayImage&) const = default;
};

inline double luminance(double r, double g, double b) { return 0.299 * r + 0.587 * g + 0.114 * b; }

inline std::uint8_t to_byte(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

inline std::vector<std::uint8_t> to_bytes(const GrayImage& img) {
  std::vector<std::uint8_t> out(img.px.size());
  std::transform(img.px.begin(), img.px.end(), out.begin(), to_byte);
  return out;
}

inline std::string encode_png(const GrayImage& img) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(img.cols);
  image.height = static_cast<png_uint_32>(img.rows);
  image.format = PNG_FORMAT_GRAY;
  const auto bytes = to_bytes(img);
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&image, nullptr, &size, 0, bytes.data(), 0, nullptr))
    throw IoError(std::string("png encode failed: ") + image.message);
  std::string out(size, '\0');
  if (!png_image_write_to_memory(&image, out.data(), &size, 0, bytes.data(), 0, nullptr))
    throw IoError(std::string("png encode failed: ") + image.message);
  out.resize(size);
  return out;
}

// Color PNGs are reduced with 0.299/0.587/0.114 luminance weights.
inline GrayImage decode_png(std::string_view data) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&image, data.data(), data.size()))
    throw IoError(std::string("png decode failed: ") + image.message);
  const bool color = (image.format & PNG_FORMAT_FLAG_COLOR) != 0;
  image.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  std::vector<std::uint8_t> buf(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buf.data(), 0, nullptr)) {
    png_image_free(&image);
    throw IoError(std::string("png decode failed: ") + image.message);
  }
  GrayImage img(static_cast<int>(image.height), static_cast<int>(image.width));
  for (std::size_t i = 0; i < img.px.size(); ++i) {
    if (color)
      img.px[i] = luminance(buf[3 * i], buf[3 * i + 1], buf[3 * i + 2]) / 255.0;
    else
      img.px[i] = buf[i] / 255.0;
  }
  return img;
}

inline std::string encode_pgm(const GrayImage& img) {
  std::string out = "P5\n" + std::to_string(img.cols) + " " + std::to_string(img.rows) + "\n255\n";
  const auto bytes = to_bytes(img);
  out.append(reinterpret_cast<const char*>(bytes.data()), bytes.size());
  return out;
}

inline GrayImage decode_pgm(std::string_view data) {
  std::size_t pos = 0;
  auto token = [&]() {
    while (pos < data.size()) {
      if (data[pos] == '#') {
        while (pos < data.size() && data[pos] != '\n') ++pos;
      } else if (std::isspace(static_cast<unsigned char>(data[pos]))) {
        ++pos;
      } else {
        break;
      }
    }
    const std::size_t start = pos;
    while (pos < data.size() && !std::isspace(static_cast<unsigned char>(data[pos]))) ++pos;
    return std::string(data.substr(start, pos - start));
  };
  if (token() != "P5") throw IoError("only binary PGM (P5) is supported");
  const int cols = std::stoi(token());
  const int rows = std::stoi(token());
  const int maxval = std::stoi(token());
  ++pos;
  if (maxval <= 0 || maxval > 255) throw IoError("unsupported PGM maxval");
  if (data.size() < pos + static_cast<std::size_t>(rows) * cols) throw IoError("truncated PGM");
  GrayImage img(rows, cols);
  for (std::size_t i = 0; i < img.px.size(); ++i)
    img.px[i] = static_cast<unsigned char>(data[pos + i]) / static_cast<double>(maxval);
  return img;
}

inline GrayImage load_image(const std::filesystem::path& path) {
  const auto bytes = io::read_file(path);
  if (bytes.size() >= 8 && bytes.compare(1, 3, "PNG") == 0) return decode_png(bytes);
  if (bytes.size() >= 2 && bytes[0] == 'P' && bytes[1] == '5') return decode_pgm(bytes);
  throw IoError("unrecognized image format: " + path.string());
}

inline void save_image(const std::filesystem::path& path, const GrayImage& img) {
  if (path.extension() == ".pgm")
    io::write_file_atomic(path, encode_pgm(img));
  else
    io::write_file_atomic(path, encode_png(img));
}

// Nearest-neighbour integer upscale.
inline GrayImage upscale(const GrayImage& img, int factor) {
  GrayImage out(img.rows * factor, img.cols * factor);
  for (int r = 0; r < out.rows; ++r)
    for (int c = 0; c < out.cols; ++c) out.at(r, c) = img.at(r / factor, c / factor);
  return out;
}

}  // namespace wiperc
