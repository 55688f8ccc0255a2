#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "iotguard/error.hpp"

namespace iotguard {

/// Binary inclusion vector over feature columns. Always selects at least one
/// column.
class FeatureMask {
 public:
  explicit FeatureMask(std::vector<std::uint8_t> bits) : bits_(std::move(bits)) {
    for (auto& b : bits_) b = b ? 1 : 0;
    if (count() == 0) throw Error(ErrorKind::infeasible_mask, "feature mask selects no columns");
  }

  static FeatureMask all(std::size_t n) { return FeatureMask(std::vector<std::uint8_t>(n, 1)); }

  static FeatureMask from_indices(std::size_t n, const std::vector<std::size_t>& indices) {
    std::vector<std::uint8_t> bits(n, 0);
    for (std::size_t i : indices) {
      if (i >= n) throw Error(ErrorKind::parameter, "mask index out of range");
      bits[i] = 1;
    }
    return FeatureMask(std::move(bits));
  }

  std::size_t size() const noexcept { return bits_.size(); }
  std::size_t count() const noexcept {
    return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
  }
  bool test(std::size_t i) const { return bits_.at(i) != 0; }
  const std::vector<std::uint8_t>& bits() const noexcept { return bits_; }

  std::vector<std::size_t> indices() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < bits_.size(); ++i)
      if (bits_[i]) out.push_back(i);
    return out;
  }

  std::string to_string() const {
    std::string s;
    for (auto b : bits_) s.push_back(b ? '1' : '0');
    return s;
  }

  friend bool operator==(const FeatureMask&, const FeatureMask&) = default;

 private:
  std::vector<std::uint8_t> bits_;
};

}  // namespace iotguard
