#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <cstddef>
#include <string>
#include <string_view>

#include "kinship/errors.hpp"

namespace kinship {

/// The eleven FIW kinship relationship types, in report column order.
enum class Relationship : unsigned char { BB, SS, SIBS, FS, FD, MS, MD, GFGD, GMGD, GFGS, GMGS };

inline constexpr std::size_t kNumRelationships = 11;

inline constexpr std::array<Relationship, kNumRelationships> kAllRelationships = {
    Relationship::BB,   Relationship::SS,   Relationship::SIBS, Relationship::FS,
    Relationship::FD,   Relationship::MS,   Relationship::MD,   Relationship::GFGD,
    Relationship::GMGD, Relationship::GFGS, Relationship::GMGS};

inline constexpr std::array<std::string_view, kNumRelationships> kRelationshipNames = {
    "BB", "SS", "SIBS", "FS", "FD", "MS", "MD", "GFGD", "GMGD", "GFGS", "GMGS"};

inline constexpr std::size_t index_of(Relationship r) noexcept { return static_cast<std::size_t>(r); }

inline constexpr std::string_view to_string(Relationship r) noexcept {
  return kRelationshipNames[index_of(r)];
}

/// Case-insensitive; anything outside the eleven tags is a ParseError.
inline Relationship parse_relationship(std::string_view text) {
  std::string upper(text);
  std::transform(upper.begin(), upper.end(), upper.begin(),
                 [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
  for (std::size_t i = 0; i < kNumRelationships; ++i) {
    if (upper == kRelationshipNames[i]) return kAllRelationships[i];
  }
  throw ParseError("unknown relationship tag '" + std::string(text) + "'");
}

}  // namespace kinship
