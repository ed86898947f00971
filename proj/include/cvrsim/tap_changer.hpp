#pragma once

#include "cvrsim/phase.hpp"

namespace cvrsim {

// Substation on-load tap changer: integer positions mapped affinely onto a
// per-phase voltage ratio with ratio(0) = 1.
struct OltcConfig {
  int min_tap = -16;
  int max_tap = 16;
  double v_at_min = 0.9;
  double v_at_max = 1.1;
  bool per_phase = true;

  double step() const noexcept { return (v_at_max - v_at_min) / (max_tap - min_tap); }

  friend bool operator==(const OltcConfig&, const OltcConfig&) = default;
};

std::string check_oltc_config(const OltcConfig& config);

// Throws Error for a tap outside [min_tap, max_tap].
double tap_to_ratio(const OltcConfig& config, int tap);

PhaseReal taps_to_ratios(const OltcConfig& config, const PhaseTaps& taps);

}  // namespace cvrsim
