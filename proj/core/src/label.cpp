#include "splicemix/label.hpp"

#include <bit>

#include "splicemix/errors.hpp"

namespace splicemix {

MultiHotLabel::MultiHotLabel(std::size_t num_classes)
    : num_classes_(num_classes), words_((num_classes + 63) / 64, 0) {}

MultiHotLabel MultiHotLabel::from_indices(std::size_t num_classes,
                                          std::span<const std::size_t> indices) {
  MultiHotLabel label(num_classes);
  for (auto k : indices) label.set(k);
  return label;
}

MultiHotLabel MultiHotLabel::from_bytes(std::span<const std::uint8_t> bytes) {
  MultiHotLabel label(bytes.size());
  for (std::size_t k = 0; k < bytes.size(); ++k) {
    if (bytes[k] > 1) {
      throw FormatError("multi-hot byte " + std::to_string(k) + " is " +
                        std::to_string(bytes[k]) + ", expected 0 or 1");
    }
    if (bytes[k] != 0) label.set(k);
  }
  return label;
}

bool MultiHotLabel::test(std::size_t k) const {
  if (k >= num_classes_) throw DimensionError("class index " + std::to_string(k) + " out of range");
  return (words_[k / 64] >> (k % 64)) & 1U;
}

void MultiHotLabel::set(std::size_t k, bool value) {
  if (k >= num_classes_) throw DimensionError("class index " + std::to_string(k) + " out of range");
  const std::uint64_t mask = std::uint64_t{1} << (k % 64);
  if (value) {
    words_[k / 64] |= mask;
  } else {
    words_[k / 64] &= ~mask;
  }
}

std::size_t MultiHotLabel::count() const {
  std::size_t n = 0;
  for (auto w : words_) n += static_cast<std::size_t>(std::popcount(w));
  return n;
}

std::vector<std::size_t> MultiHotLabel::indices() const {
  std::vector<std::size_t> out;
  for (std::size_t k = 0; k < num_classes_; ++k) {
    if (test(k)) out.push_back(k);
  }
  return out;
}

std::vector<std::uint8_t> MultiHotLabel::to_bytes() const {
  std::vector<std::uint8_t> out(num_classes_);
  for (std::size_t k = 0; k < num_classes_; ++k) out[k] = test(k) ? 1 : 0;
  return out;
}

std::string MultiHotLabel::to_string() const {
  std::string s(num_classes_, '0');
  for (std::size_t k = 0; k < num_classes_; ++k) {
    if (test(k)) s[k] = '1';
  }
  return s;
}

MultiHotLabel& MultiHotLabel::operator|=(const MultiHotLabel& other) {
  if (other.num_classes_ != num_classes_) {
    throw DimensionError("label union over different class counts");
  }
  for (std::size_t i = 0; i < words_.size(); ++i) words_[i] |= other.words_[i];
  return *this;
}

}  // namespace splicemix
