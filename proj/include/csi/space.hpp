#pragma once

#include <compare>
#include <cstdint>
#include <string>
#include <string_view>

#include "csi/error.hpp"

namespace csi {

/// A point of a binary feature space {0,1}^Bits, stored as its index.
/// Bit i of the index is feature i; the string form writes feature 0 first.
template <int Bits, class Tag>
class BinaryCode {
 public:
  static constexpr int kBits = Bits;
  static constexpr int kCount = 1 << Bits;

  constexpr BinaryCode() = default;
  constexpr explicit BinaryCode(int index) : index_(static_cast<std::uint8_t>(index)) {}

  static BinaryCode checked(int index) {
    if (index < 0 || index >= kCount) {
      throw PreconditionError("index " + std::to_string(index) + " outside [0, " +
                              std::to_string(kCount) + ")");
    }
    return BinaryCode(index);
  }

  constexpr int index() const { return index_; }
  constexpr int bit(int i) const { return (index_ >> i) & 1; }

  std::string to_string() const {
    std::string s(kBits, '0');
    for (int i = 0; i < kBits; ++i) s[i] = bit(i) ? '1' : '0';
    return s;
  }

  static BinaryCode parse(std::string_view s) {
    if (static_cast<int>(s.size()) != kBits) {
      throw ParseError("expected " + std::to_string(kBits) + " bits, got '" +
                       std::string(s) + "'");
    }
    int index = 0;
    for (int i = 0; i < kBits; ++i) {
      if (s[i] == '1') {
        index |= 1 << i;
      } else if (s[i] != '0') {
        throw ParseError("invalid bit string '" + std::string(s) + "'");
      }
    }
    return BinaryCode(index);
  }

  friend constexpr auto operator<=>(BinaryCode, BinaryCode) = default;

 private:
  std::uint8_t index_ = 0;
};

struct ContextTag {};
struct ActionTag {};

using Context = BinaryCode<7, ContextTag>;
using Action = BinaryCode<5, ActionTag>;

inline constexpr int kContextBits = Context::kBits;
inline constexpr int kActionBits = Action::kBits;
inline constexpr int kNumContexts = Context::kCount;
inline constexpr int kNumActions = Action::kCount;

}  // namespace csi
