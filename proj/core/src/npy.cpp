#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <regex>
#include <string>

#include "splicemix/errors.hpp"
#include "splicemix/io.hpp"

namespace splicemix::io {
namespace {

constexpr std::uint8_t kMagic[] = {0x93, 'N', 'U', 'M', 'P', 'Y'};
constexpr std::size_t kPreambleSize = 10;  // magic + version + header length
constexpr std::size_t kAlign = 64;
constexpr std::size_t kGrowthDigits = 21;

std::size_t element_size(DType dtype) { return dtype == DType::float32 ? 4 : 1; }

const char* descr(DType dtype) { return dtype == DType::float32 ? "<f4" : "|u1"; }

std::size_t product(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_tuple(const std::vector<std::size_t>& shape) {
  std::string s = "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i > 0) s += ", ";
    s += std::to_string(shape[i]);
  }
  if (shape.size() == 1) s += ",";
  return s + ")";
}

}  // namespace

std::size_t NpyArray::count() const { return product(shape); }

NpyArray NpyArray::from_floats(std::vector<std::size_t> shape, std::span<const float> values) {
  NpyArray a;
  a.dtype = DType::float32;
  a.shape = std::move(shape);
  if (values.size() != a.count()) throw DimensionError("NPY payload does not match its shape");
  a.payload.resize(values.size() * 4);
  for (std::size_t i = 0; i < values.size(); ++i) {
    const auto bits = std::bit_cast<std::uint32_t>(values[i]);
    for (std::size_t b = 0; b < 4; ++b) a.payload[i * 4 + b] = static_cast<std::uint8_t>(bits >> (8 * b));
  }
  return a;
}

NpyArray NpyArray::from_uint8(std::vector<std::size_t> shape, std::span<const std::uint8_t> values) {
  NpyArray a;
  a.dtype = DType::uint8;
  a.shape = std::move(shape);
  if (values.size() != a.count()) throw DimensionError("NPY payload does not match its shape");
  a.payload.assign(values.begin(), values.end());
  return a;
}

std::vector<float> NpyArray::to_floats() const {
  if (dtype != DType::float32) throw FormatError("NPY array is not float32");
  std::vector<float> out(count());
  for (std::size_t i = 0; i < out.size(); ++i) {
    std::uint32_t bits = 0;
    for (std::size_t b = 0; b < 4; ++b) bits |= std::uint32_t{payload[i * 4 + b]} << (8 * b);
    out[i] = std::bit_cast<float>(bits);
  }
  return out;
}

std::span<const std::uint8_t> NpyArray::to_uint8() const {
  if (dtype != DType::uint8) throw FormatError("NPY array is not uint8");
  return payload;
}

std::vector<std::uint8_t> encode_npy(const NpyArray& array) {
  if (array.payload.size() != array.count() * element_size(array.dtype)) {
    throw DimensionError("NPY payload does not match its shape");
  }
  std::string header = std::string("{'descr': '") + descr(array.dtype) +
                       "', 'fortran_order': False, 'shape': " + shape_tuple(array.shape) + ", }";
  if (!array.shape.empty()) {
    header.append(kGrowthDigits - std::to_string(array.shape.front()).size(), ' ');
  }
  const std::size_t unpadded = kPreambleSize + header.size() + 1;
  header.append((kAlign - unpadded % kAlign) % kAlign, ' ');
  header.push_back('\n');
  if (header.size() > 0xFFFF) throw FormatError("NPY header too long for format 1.0");

  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  out.reserve(kPreambleSize + header.size() + array.payload.size());
  out.push_back(1);
  out.push_back(0);
  out.push_back(static_cast<std::uint8_t>(header.size() & 0xFF));
  out.push_back(static_cast<std::uint8_t>(header.size() >> 8));
  out.insert(out.end(), header.begin(), header.end());
  out.insert(out.end(), array.payload.begin(), array.payload.end());
  return out;
}

NpyArray decode_npy(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kPreambleSize || !std::equal(std::begin(kMagic), std::end(kMagic), bytes.begin())) {
    throw FormatError("not an NPY file: bad magic");
  }
  if (bytes[6] != 1 || bytes[7] != 0) {
    throw FormatError("unsupported NPY version " + std::to_string(bytes[6]) + "." +
                      std::to_string(bytes[7]) + ", expected 1.0");
  }
  const std::size_t header_len = bytes[8] | (std::size_t{bytes[9]} << 8);
  if (bytes.size() < kPreambleSize + header_len) throw FormatError("truncated NPY header");
  const std::string header(reinterpret_cast<const char*>(bytes.data() + kPreambleSize), header_len);

  static const std::regex descr_re(R"('descr'\s*:\s*'([^']*)')");
  static const std::regex order_re(R"('fortran_order'\s*:\s*(True|False))");
  static const std::regex shape_re(R"('shape'\s*:\s*\(([^)]*)\))");
  std::smatch m;
  NpyArray a;
  if (!std::regex_search(header, m, descr_re)) throw FormatError("NPY header lacks 'descr'");
  if (m[1] == "<f4") {
    a.dtype = DType::float32;
  } else if (m[1] == "|u1" || m[1] == "<u1" || m[1] == "u1") {
    a.dtype = DType::uint8;
  } else {
    throw FormatError("unsupported NPY dtype '" + m[1].str() + "'");
  }
  if (!std::regex_search(header, m, order_re)) throw FormatError("NPY header lacks 'fortran_order'");
  if (m[1] == "True") throw FormatError("Fortran-ordered NPY arrays are not supported");
  if (!std::regex_search(header, m, shape_re)) throw FormatError("NPY header lacks 'shape'");
  const std::string dims = m[1];
  static const std::regex dim_re(R"(\s*(\d+)\s*(,|$))");
  for (auto it = std::sregex_iterator(dims.begin(), dims.end(), dim_re); it != std::sregex_iterator();
       ++it) {
    a.shape.push_back(static_cast<std::size_t>(std::stoull((*it)[1])));
  }

  const std::size_t expected = a.count() * element_size(a.dtype);
  const std::size_t available = bytes.size() - kPreambleSize - header_len;
  if (available != expected) {
    throw FormatError("NPY payload has " + std::to_string(available) + " bytes, shape needs " +
                      std::to_string(expected));
  }
  const auto* start = bytes.data() + kPreambleSize + header_len;
  a.payload.assign(start, start + expected);
  return a;
}

void write_npy(const NpyArray& array, const fs::path& path) {
  const auto bytes = encode_npy(array);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("failed writing " + path.string());
}

NpyArray read_npy(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                        std::istreambuf_iterator<char>());
  try {
    return decode_npy(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

NpyArray stack_images(std::span<const ImageTensor> images) {
  if (images.empty()) throw DimensionError("stack_images: no images");
  const auto& ref = images.front();
  std::vector<float> values;
  values.reserve(images.size() * ref.size());
  for (const auto& img : images) {
    if (!img.same_shape(ref)) throw DimensionError("stack_images: images differ in shape");
    values.insert(values.end(), img.data().begin(), img.data().end());
  }
  return NpyArray::from_floats({images.size(), ref.channels(), ref.height(), ref.width()}, values);
}

std::vector<ImageTensor> unstack_images(const NpyArray& array) {
  if (array.shape.size() != 4) throw FormatError("image array must have shape [N, C, H, W]");
  const auto values = array.to_floats();
  const std::size_t per = array.shape[1] * array.shape[2] * array.shape[3];
  std::vector<ImageTensor> out;
  out.reserve(array.shape[0]);
  for (std::size_t i = 0; i < array.shape[0]; ++i) {
    std::vector<float> chunk(values.begin() + static_cast<std::ptrdiff_t>(i * per),
                             values.begin() + static_cast<std::ptrdiff_t>((i + 1) * per));
    out.emplace_back(array.shape[1], array.shape[2], array.shape[3], std::move(chunk));
  }
  return out;
}

NpyArray stack_labels(std::span<const MultiHotLabel> labels) {
  if (labels.empty()) throw DimensionError("stack_labels: no labels");
  const std::size_t k = labels.front().num_classes();
  std::vector<std::uint8_t> values;
  values.reserve(labels.size() * k);
  for (const auto& y : labels) {
    if (y.num_classes() != k) throw DimensionError("stack_labels: class counts differ");
    const auto bytes = y.to_bytes();
    values.insert(values.end(), bytes.begin(), bytes.end());
  }
  return NpyArray::from_uint8({labels.size(), k}, values);
}

std::vector<MultiHotLabel> unstack_labels(const NpyArray& array) {
  if (array.shape.size() != 2) throw FormatError("label array must have shape [N, K]");
  const auto bytes = array.to_uint8();
  std::vector<MultiHotLabel> out;
  out.reserve(array.shape[0]);
  for (std::size_t i = 0; i < array.shape[0]; ++i) {
    out.push_back(MultiHotLabel::from_bytes(bytes.subspan(i * array.shape[1], array.shape[1])));
  }
  return out;
}

}  // namespace splicemix::io
