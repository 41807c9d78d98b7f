#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string_view>

namespace mcdc {

// Transformer condition classes with their fixed integer encoding.
enum class Condition : int { NC = 0, LT = 1, MT = 2, HT = 3, PD = 4, LD = 5, HD = 6 };

inline constexpr std::size_t kNumConditions = 7;
inline constexpr std::size_t kNumGases = 5;

inline constexpr std::array<std::string_view, kNumConditions> kConditionNames = {
    "NC", "LT", "MT", "HT", "PD", "LD", "HD"};

// Channel order of every gas matrix.
inline constexpr std::array<std::string_view, kNumGases> kGasNames = {"h2", "ch4", "c2h6",
                                                                       "c2h4", "c2h2"};

inline constexpr std::string_view condition_name(Condition c) {
  return kConditionNames[static_cast<std::size_t>(c)];
}

inline constexpr std::size_t condition_code(Condition c) { return static_cast<std::size_t>(c); }

inline std::optional<Condition> parse_condition(std::string_view name) {
  for (std::size_t i = 0; i < kNumConditions; ++i)
    if (kConditionNames[i] == name) return static_cast<Condition>(i);
  return std::nullopt;
}

inline std::optional<Condition> condition_from_code(std::size_t code) {
  if (code >= kNumConditions) return std::nullopt;
  return static_cast<Condition>(code);
}

}  // namespace mcdc
