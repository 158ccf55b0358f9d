#pragma once

#include <compare>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace splicemix {

/// Dense CHW raster of float samples. Used for images and feature maps alike.
class ImageTensor {
 public:
  /// Throws DimensionError when any extent is zero.
  ImageTensor(std::size_t channels, std::size_t height, std::size_t width, float fill = 0.0f);
  ImageTensor(std::size_t channels, std::size_t height, std::size_t width,
              std::vector<float> data);

  std::size_t channels() const { return channels_; }
  std::size_t height() const { return height_; }
  std::size_t width() const { return width_; }
  std::size_t size() const { return data_.size(); }

  float& at(std::size_t c, std::size_t y, std::size_t x) {
    return data_[(c * height_ + y) * width_ + x];
  }
  float at(std::size_t c, std::size_t y, std::size_t x) const {
    return data_[(c * height_ + y) * width_ + x];
  }

  std::span<float> data() { return data_; }
  std::span<const float> data() const { return data_; }
  std::span<const float> plane(std::size_t c) const {
    return std::span<const float>(data_).subspan(c * height_ * width_, height_ * width_);
  }

  bool same_shape(const ImageTensor& other) const {
    return channels_ == other.channels_ && height_ == other.height_ && width_ == other.width_;
  }

  /// Shape and sample values compare equal bit for bit (distinguishes -0.0 and NaN payloads).
  bool bit_equal(const ImageTensor& other) const;

 private:
  std::size_t channels_;
  std::size_t height_;
  std::size_t width_;
  std::vector<float> data_;
};

/// Rows x columns of a grid layout.
struct GridGeometry {
  std::size_t rows = 1;
  std::size_t cols = 1;

  std::size_t cells() const { return rows * cols; }
  bool symmetric() const { return rows == cols; }
  GridGeometry transposed() const { return {cols, rows}; }

  /// "RxC", e.g. "2x3".
  std::string to_string() const;
  /// Parses "RxC" (also accepts 'X'); throws ConfigError on anything else.
  static GridGeometry parse(std::string_view text);

  auto operator<=>(const GridGeometry&) const = default;
};

/// Parses a comma-separated list such as "1x2,2x2,2x3".
std::vector<GridGeometry> parse_grid_list(std::string_view text);

/// Bilinear resampling with align-corners coordinates. Source coordinate of
/// output row i is i * (H - 1) / (out_h - 1), or 0 when out_h == 1; likewise
/// for columns. Upsampling and zero-sized outputs are rejected.
ImageTensor bilinear_downsample(const ImageTensor& img, std::size_t out_h, std::size_t out_w);

/// Tiles `cells` row-major into a rows x cols grid with no padding between
/// cells. Empty cells are filled with `fill`. Every present cell must share
/// one shape; at least one cell must be present.
ImageTensor grid_compose(std::span<const std::optional<ImageTensor>> cells, GridGeometry geom,
                         float fill = 0.0f);

/// Inverse of grid_compose: cuts `img` into rows x cols blocks, row-major.
/// Height and width must be divisible by rows and cols.
std::vector<ImageTensor> grid_split(const ImageTensor& img, GridGeometry geom);

}  // namespace splicemix
