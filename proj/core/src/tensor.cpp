#include "splicemix/tensor.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstring>

#include "splicemix/errors.hpp"

namespace splicemix {
namespace {

void check_extents(std::size_t c, std::size_t h, std::size_t w) {
  if (c == 0 || h == 0 || w == 0) {
    throw DimensionError("tensor extents must be positive, got " + std::to_string(c) + "x" +
                         std::to_string(h) + "x" + std::to_string(w));
  }
}

std::string shape_string(const ImageTensor& t) {
  return std::to_string(t.channels()) + "x" + std::to_string(t.height()) + "x" +
         std::to_string(t.width());
}

struct Tap {
  std::size_t lo;
  std::size_t hi;
  double frac;
};

// Align-corners source taps for one output axis.
std::vector<Tap> axis_taps(std::size_t in, std::size_t out) {
  std::vector<Tap> taps(out);
  for (std::size_t i = 0; i < out; ++i) {
    const double src =
        out == 1 ? 0.0
                 : static_cast<double>(i) * static_cast<double>(in - 1) /
                       static_cast<double>(out - 1);
    auto lo = static_cast<std::size_t>(std::floor(src));
    lo = std::min(lo, in - 1);
    const std::size_t hi = std::min(lo + 1, in - 1);
    taps[i] = {lo, hi, src - static_cast<double>(lo)};
  }
  return taps;
}

}  // namespace

ImageTensor::ImageTensor(std::size_t channels, std::size_t height, std::size_t width, float fill)
    : channels_(channels), height_(height), width_(width) {
  check_extents(channels, height, width);
  data_.assign(channels * height * width, fill);
}

ImageTensor::ImageTensor(std::size_t channels, std::size_t height, std::size_t width,
                         std::vector<float> data)
    : channels_(channels), height_(height), width_(width), data_(std::move(data)) {
  check_extents(channels, height, width);
  if (data_.size() != channels * height * width) {
    throw DimensionError("tensor data length " + std::to_string(data_.size()) +
                         " does not match shape " + shape_string(*this));
  }
}

bool ImageTensor::bit_equal(const ImageTensor& other) const {
  return same_shape(other) &&
         std::memcmp(data_.data(), other.data_.data(), data_.size() * sizeof(float)) == 0;
}

std::string GridGeometry::to_string() const {
  return std::to_string(rows) + "x" + std::to_string(cols);
}

GridGeometry GridGeometry::parse(std::string_view text) {
  const auto sep = text.find_first_of("xX");
  auto bad = [&] { return ConfigError("bad grid '" + std::string(text) + "', expected RxC"); };
  if (sep == std::string_view::npos || sep == 0 || sep + 1 >= text.size()) throw bad();
  GridGeometry g;
  const auto rows = text.substr(0, sep);
  const auto cols = text.substr(sep + 1);
  auto r1 = std::from_chars(rows.data(), rows.data() + rows.size(), g.rows);
  auto r2 = std::from_chars(cols.data(), cols.data() + cols.size(), g.cols);
  if (r1.ec != std::errc{} || r1.ptr != rows.data() + rows.size() || r2.ec != std::errc{} ||
      r2.ptr != cols.data() + cols.size() || g.rows == 0 || g.cols == 0) {
    throw bad();
  }
  return g;
}

std::vector<GridGeometry> parse_grid_list(std::string_view text) {
  std::vector<GridGeometry> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto end = std::min(text.find(',', start), text.size());
    out.push_back(GridGeometry::parse(text.substr(start, end - start)));
    start = end + 1;
  }
  return out;
}

ImageTensor bilinear_downsample(const ImageTensor& img, std::size_t out_h, std::size_t out_w) {
  if (out_h == 0 || out_w == 0) {
    throw DimensionError("bilinear_downsample: output size must be positive");
  }
  if (out_h > img.height() || out_w > img.width()) {
    throw DimensionError("bilinear_downsample: cannot upsample " + shape_string(img) + " to " +
                         std::to_string(out_h) + "x" + std::to_string(out_w));
  }
  const auto rows = axis_taps(img.height(), out_h);
  const auto cols = axis_taps(img.width(), out_w);
  ImageTensor out(img.channels(), out_h, out_w);
  for (std::size_t c = 0; c < img.channels(); ++c) {
    for (std::size_t i = 0; i < out_h; ++i) {
      const Tap& ty = rows[i];
      for (std::size_t j = 0; j < out_w; ++j) {
        const Tap& tx = cols[j];
        const double top = (1.0 - tx.frac) * img.at(c, ty.lo, tx.lo) + tx.frac * img.at(c, ty.lo, tx.hi);
        const double bottom =
            (1.0 - tx.frac) * img.at(c, ty.hi, tx.lo) + tx.frac * img.at(c, ty.hi, tx.hi);
        out.at(c, i, j) = static_cast<float>((1.0 - ty.frac) * top + ty.frac * bottom);
      }
    }
  }
  return out;
}

ImageTensor grid_compose(std::span<const std::optional<ImageTensor>> cells, GridGeometry geom,
                         float fill) {
  if (geom.rows == 0 || geom.cols == 0) throw DimensionError("grid_compose: empty geometry");
  if (cells.empty()) throw DimensionError("grid_compose: empty cell list");
  if (cells.size() != geom.cells()) {
    throw DimensionError("grid_compose: " + std::to_string(cells.size()) +
                         " cells for a " + geom.to_string() + " grid");
  }
  const ImageTensor* ref = nullptr;
  for (const auto& cell : cells) {
    if (!cell) continue;
    if (ref == nullptr) {
      ref = &*cell;
    } else if (!cell->same_shape(*ref)) {
      throw DimensionError("grid_compose: heterogeneous cells " + shape_string(*ref) + " and " +
                           shape_string(*cell));
    }
  }
  if (ref == nullptr) throw DimensionError("grid_compose: every cell is empty");

  const std::size_t ch = ref->channels();
  const std::size_t h = ref->height();
  const std::size_t w = ref->width();
  ImageTensor out(ch, geom.rows * h, geom.cols * w, fill);
  for (std::size_t k = 0; k < cells.size(); ++k) {
    if (!cells[k]) continue;
    const std::size_t y0 = (k / geom.cols) * h;
    const std::size_t x0 = (k % geom.cols) * w;
    for (std::size_t c = 0; c < ch; ++c) {
      for (std::size_t y = 0; y < h; ++y) {
        const float* src = cells[k]->data().data() + (c * h + y) * w;
        std::copy(src, src + w, &out.at(c, y0 + y, x0));
      }
    }
  }
  return out;
}

std::vector<ImageTensor> grid_split(const ImageTensor& img, GridGeometry geom) {
  if (geom.rows == 0 || geom.cols == 0) throw DimensionError("grid_split: empty geometry");
  if (img.height() % geom.rows != 0 || img.width() % geom.cols != 0) {
    throw DimensionError("grid_split: " + shape_string(img) + " is not divisible by a " +
                         geom.to_string() + " grid");
  }
  const std::size_t h = img.height() / geom.rows;
  const std::size_t w = img.width() / geom.cols;
  std::vector<ImageTensor> out;
  out.reserve(geom.cells());
  for (std::size_t k = 0; k < geom.cells(); ++k) {
    const std::size_t y0 = (k / geom.cols) * h;
    const std::size_t x0 = (k % geom.cols) * w;
    ImageTensor cell(img.channels(), h, w);
    for (std::size_t c = 0; c < img.channels(); ++c) {
      for (std::size_t y = 0; y < h; ++y) {
        const float* src = img.data().data() + (c * img.height() + y0 + y) * img.width() + x0;
        std::copy(src, src + w, &cell.at(c, y, 0));
      }
    }
    out.push_back(std::move(cell));
  }
  return out;
}

}  // namespace splicemix
