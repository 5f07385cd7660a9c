#pragma once

#include <algorithm>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <iterator>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ace/error.hpp"

namespace ace {

/// Largest candidate count for which exhaustive enumeration is permitted.
inline constexpr std::size_t kMaxEnumerableCandidates = 24;

/// A fixed-length binary selection over L candidates. Bit l set means
/// candidate l is part of the concatenation. Indices are 0-based in code;
/// the string form lists candidate 0 first ("101" selects candidates 0, 2).
class Mask {
 public:
  Mask() = default;

  /// Validating constructor: rejects empty input and any element not in {0,1}.
  static Mask from_bits(std::span<const int> bits) {
    if (bits.empty()) throw Error(ErrorCode::EmptyMask, "mask must have at least one element");
    Mask m;
    m.bits_.reserve(bits.size());
    for (std::size_t i = 0; i < bits.size(); ++i) {
      if (bits[i] != 0 && bits[i] != 1) {
        throw Error(ErrorCode::NonBinaryElement,
                    "element " + std::to_string(i) + " is " + std::to_string(bits[i]));
      }
      m.bits_.push_back(static_cast<std::uint8_t>(bits[i]));
    }
    return m;
  }

  static Mask from_bits(std::initializer_list<int> bits) {
    return from_bits(std::span<const int>(bits.begin(), bits.size()));
  }

  /// Parses the '0'/'1' string form.
  static Mask parse(std::string_view text) {
    if (text.empty()) throw Error(ErrorCode::EmptyMask, "empty mask string");
    Mask m;
    m.bits_.reserve(text.size());
    for (char c : text) {
      if (c != '0' && c != '1') {
        throw Error(ErrorCode::NonBinaryElement, "invalid mask character '" + std::string(1, c) + "'");
      }
      m.bits_.push_back(c == '1' ? 1 : 0);
    }
    return m;
  }

  static Mask all_ones(std::size_t length) {
    if (length == 0) throw Error(ErrorCode::EmptyMask, "all_ones requires L >= 1");
    Mask m;
    m.bits_.assign(length, 1);
    return m;
  }

  static Mask zeros(std::size_t length) {
    if (length == 0) throw Error(ErrorCode::EmptyMask, "zeros requires L >= 1");
    Mask m;
    m.bits_.assign(length, 0);
    return m;
  }

  /// Mask whose bit l is bit l of `value` (candidate 0 least significant).
  static Mask from_index(std::uint64_t value, std::size_t length) {
    if (length == 0) throw Error(ErrorCode::EmptyMask, "from_index requires L >= 1");
    Mask m;
    m.bits_.resize(length);
    for (std::size_t l = 0; l < length; ++l) m.bits_[l] = (l < 64 && ((value >> l) & 1U)) ? 1 : 0;
    return m;
  }

  std::size_t size() const noexcept { return bits_.size(); }
  bool operator[](std::size_t l) const { return bits_[l] != 0; }
  bool test(std::size_t l) const {
    if (l >= bits_.size()) throw Error(ErrorCode::IndexOutOfRange, "candidate index " + std::to_string(l));
    return bits_[l] != 0;
  }

  std::size_t count() const noexcept {
    return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
  }
  bool any() const noexcept { return count() > 0; }

  /// Inverse of from_index for L <= 64.
  std::uint64_t to_index() const noexcept {
    std::uint64_t v = 0;
    for (std::size_t l = 0; l < bits_.size() && l < 64; ++l) v |= std::uint64_t{bits_[l]} << l;
    return v;
  }

  /// Copy with bit l flipped.
  Mask flipped(std::size_t l) const {
    Mask m = *this;
    m.bits_.at(l) ^= 1;
    return m;
  }

  std::span<const std::uint8_t> bits() const noexcept { return bits_; }

  std::string str() const {
    std::string s;
    s.reserve(bits_.size());
    for (auto b : bits_) s.push_back(b ? '1' : '0');
    return s;
  }

  friend bool operator==(const Mask&, const Mask&) = default;
  friend auto operator<=>(const Mask&, const Mask&) = default;

 private:
  std::vector<std::uint8_t> bits_;
};

namespace detail {
inline void require_same_length(const Mask& a, const Mask& b) {
  if (a.size() != b.size()) {
    throw Error(ErrorCode::LengthMismatch,
                "masks of length " + std::to_string(a.size()) + " and " + std::to_string(b.size()));
  }
}
}  // namespace detail

inline std::size_t hamming(const Mask& a, const Mask& b) {
  detail::require_same_length(a, b);
  std::size_t d = 0;
  for (std::size_t l = 0; l < a.size(); ++l) d += (a[l] != b[l]) ? 1 : 0;
  return d;
}

/// Element-wise |a - b|, i.e. the indicator of changed candidates.
inline Mask diff_vector(const Mask& a, const Mask& b) {
  detail::require_same_length(a, b);
  std::vector<int> out(a.size());
  for (std::size_t l = 0; l < a.size(); ++l) out[l] = (a[l] != b[l]) ? 1 : 0;
  return Mask::from_bits(out);
}

/// The 2^L - 1 non-empty masks over L candidates, in ascending binary order
/// with candidate 0 as the least significant bit. Masks are produced lazily.
class NonzeroMasks {
 public:
  class iterator {
   public:
    using iterator_category = std::input_iterator_tag;
    using value_type = Mask;
    using difference_type = std::ptrdiff_t;
    using pointer = void;
    using reference = Mask;

    iterator() = default;
    iterator(std::uint64_t index, std::size_t length) : index_(index), length_(length) {}

    Mask operator*() const { return Mask::from_index(index_, length_); }
    iterator& operator++() {
      ++index_;
      return *this;
    }
    iterator operator++(int) {
      auto tmp = *this;
      ++index_;
      return tmp;
    }
    friend bool operator==(const iterator& a, const iterator& b) { return a.index_ == b.index_; }

   private:
    std::uint64_t index_ = 1;
    std::size_t length_ = 0;
  };

  explicit NonzeroMasks(std::size_t length) : length_(length) {
    if (length == 0) throw Error(ErrorCode::EmptyMask, "enumeration requires L >= 1");
    if (length > kMaxEnumerableCandidates) {
      throw Error(ErrorCode::LTooLarge, "L = " + std::to_string(length) + " exceeds enumeration guard of " +
                                            std::to_string(kMaxEnumerableCandidates));
    }
  }

  iterator begin() const { return {1, length_}; }
  iterator end() const { return {std::uint64_t{1} << length_, length_}; }
  std::size_t size() const noexcept { return (std::size_t{1} << length_) - 1; }

 private:
  std::size_t length_;
};

inline NonzeroMasks enumerate_nonzero(std::size_t length) { return NonzeroMasks(length); }

inline Mask all_ones(std::size_t length) { return Mask::all_ones(length); }

}  // namespace ace

template <>
struct std::hash<ace::Mask> {
  std::size_t operator()(const ace::Mask& m) const noexcept {
    std::size_t h = 0xcbf29ce484222325ULL ^ m.size();
    for (auto b : m.bits()) h = (h ^ b) * 0x100000001b3ULL;
    return h;
  }
};
