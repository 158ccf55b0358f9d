#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace splicemix {

/// Fixed-width multi-hot label over C classes.
class MultiHotLabel {
 public:
  explicit MultiHotLabel(std::size_t num_classes = 0);

  static MultiHotLabel from_indices(std::size_t num_classes, std::span<const std::size_t> indices);
  /// Every byte must be 0 or 1.
  static MultiHotLabel from_bytes(std::span<const std::uint8_t> bytes);

  std::size_t num_classes() const { return num_classes_; }
  bool test(std::size_t k) const;
  void set(std::size_t k, bool value = true);
  std::size_t count() const;
  std::vector<std::size_t> indices() const;
  std::vector<std::uint8_t> to_bytes() const;
  /// "0110" style, class 0 first.
  std::string to_string() const;

  /// Bitwise union; widths must agree.
  MultiHotLabel& operator|=(const MultiHotLabel& other);

  bool operator==(const MultiHotLabel&) const = default;

 private:
  std::size_t num_classes_;
  std::vector<std::uint64_t> words_;
};

}  // namespace splicemix
