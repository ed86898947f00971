#pragma once

#include <array>
#include <complex>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace cvrsim {

enum class Phase : std::uint8_t { A = 0, B = 1, C = 2 };

inline constexpr std::array<Phase, 3> kAllPhases{Phase::A, Phase::B, Phase::C};

constexpr std::size_t index(Phase p) noexcept { return static_cast<std::size_t>(p); }

constexpr char to_char(Phase p) noexcept { return "ABC"[index(p)]; }

std::optional<Phase> phase_from_char(char c) noexcept;

// Subset of {A, B, C}.
class PhaseSet {
 public:
  constexpr PhaseSet() = default;
  static constexpr PhaseSet all() { return PhaseSet{0b111}; }
  static constexpr PhaseSet single(Phase p) { return PhaseSet{static_cast<std::uint8_t>(1u << index(p))}; }

  // Parses "ABC", "A", "BC", ... Empty or invalid letters yield nullopt.
  static std::optional<PhaseSet> parse(std::string_view text);

  constexpr bool contains(Phase p) const noexcept { return (bits_ >> index(p)) & 1u; }
  constexpr bool empty() const noexcept { return bits_ == 0; }
  constexpr int size() const noexcept { return (bits_ & 1) + ((bits_ >> 1) & 1) + ((bits_ >> 2) & 1); }
  constexpr bool is_subset_of(PhaseSet other) const noexcept { return (bits_ & ~other.bits_) == 0; }
  constexpr void insert(Phase p) noexcept { bits_ |= static_cast<std::uint8_t>(1u << index(p)); }
  constexpr std::uint8_t bits() const noexcept { return bits_; }

  std::string to_string() const;

  friend constexpr bool operator==(PhaseSet, PhaseSet) = default;

 private:
  constexpr explicit PhaseSet(std::uint8_t bits) : bits_(bits) {}
  std::uint8_t bits_ = 0;
};

using PhaseComplex = std::array<std::complex<double>, 3>;
using PhaseReal = std::array<double, 3>;
using PhaseTaps = std::array<int, 3>;

}  // namespace cvrsim
