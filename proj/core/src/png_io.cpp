#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>

#include "splicemix/errors.hpp"
#include "splicemix/io.hpp"

namespace splicemix::io {
namespace {

constexpr std::uint8_t kSignature[] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1A, '\n'};

std::vector<std::uint8_t> slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// IHDR is always the first chunk: signature, length, "IHDR", width, height, depth, color type.
void require_8bit(const std::vector<std::uint8_t>& bytes, const fs::path& path) {
  if (bytes.size() < 33 || !std::equal(std::begin(kSignature), std::end(kSignature), bytes.begin()) ||
      std::string(bytes.begin() + 12, bytes.begin() + 16) != "IHDR") {
    throw FormatError(path.string() + ": not a PNG file");
  }
  const int depth = bytes[24];
  if (depth != 8) {
    throw FormatError(path.string() + ": " + std::to_string(depth) +
                      "-bit PNG; only 8-bit rasters are supported");
  }
}

}  // namespace

ImageTensor decode_image(const fs::path& path) {
  const auto bytes = slurp(path);
  require_8bit(bytes, path);

  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (png_image_begin_read_from_memory(&image, bytes.data(), bytes.size()) == 0) {
    throw FormatError(path.string() + ": " + image.message);
  }
  const bool color = (image.format & PNG_FORMAT_FLAG_COLOR) != 0;
  const bool alpha = (image.format & PNG_FORMAT_FLAG_ALPHA) != 0;
  // Reading without the alpha channel would composite onto black; keep it and skip it below.
  image.format = color ? (alpha ? PNG_FORMAT_RGBA : PNG_FORMAT_RGB)
                       : (alpha ? PNG_FORMAT_GA : PNG_FORMAT_GRAY);
  const std::size_t channels = color ? 3 : 1;
  const std::size_t stride = channels + (alpha ? 1 : 0);
  std::vector<std::uint8_t> pixels(PNG_IMAGE_SIZE(image));
  if (png_image_finish_read(&image, nullptr, pixels.data(), 0, nullptr) == 0) {
    const std::string msg = image.message;
    png_image_free(&image);
    throw FormatError(path.string() + ": " + msg);
  }

  const std::size_t h = image.height;
  const std::size_t w = image.width;
  ImageTensor out(channels, h, w);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      for (std::size_t c = 0; c < channels; ++c) {
        out.at(c, y, x) = static_cast<float>(pixels[(y * w + x) * stride + c]) / 255.0f;
      }
    }
  }
  return out;
}

void encode_png(const ImageTensor& image, const fs::path& path) {
  const std::size_t channels = image.channels();
  if (channels != 1 && channels != 3) {
    throw DimensionError("encode_png: expected 1 or 3 channels, got " + std::to_string(channels));
  }
  const std::size_t h = image.height();
  const std::size_t w = image.width();
  std::vector<std::uint8_t> pixels(h * w * channels);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      for (std::size_t c = 0; c < channels; ++c) {
        const float v = std::clamp(image.at(c, y, x), 0.0f, 1.0f);
        pixels[(y * w + x) * channels + c] = static_cast<std::uint8_t>(std::lround(v * 255.0f));
      }
    }
  }
  png_image png{};
  png.version = PNG_IMAGE_VERSION;
  png.width = static_cast<png_uint_32>(w);
  png.height = static_cast<png_uint_32>(h);
  png.format = channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  const std::string file = path.string();
  if (png_image_write_to_file(&png, file.c_str(), 0, pixels.data(), 0, nullptr) == 0) {
    throw Error("cannot write " + file + ": " + png.message);
  }
}

std::vector<fs::path> encode_preview(const SplicedBatch& batch, const fs::path& dir) {
  fs::create_directories(dir);
  std::vector<fs::path> paths;
  for (std::size_t i = 0; i < batch.mixed.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "mixed_%04zu.png", i);
    paths.push_back(dir / name);
    encode_png(batch.mixed[i].image, paths.back());
  }
  return paths;
}

}  // namespace splicemix::io
