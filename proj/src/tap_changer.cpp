#include "cvrsim/tap_changer.hpp"

#include <cmath>
#include <string>

#include "cvrsim/error.hpp"

namespace cvrsim {

std::string check_oltc_config(const OltcConfig& config) {
  if (!(config.min_tap < config.max_tap)) return "OLTC min_tap must be below max_tap";
  if (!(config.v_at_min < config.v_at_max)) return "OLTC v_at_min must be below v_at_max";
  if (config.min_tap > 0 || config.max_tap < 0) return "OLTC range must contain the neutral tap";
  const double step = config.step();
  if (std::abs(1.0 + config.min_tap * step - config.v_at_min) > 1e-12 ||
      std::abs(1.0 + config.max_tap * step - config.v_at_max) > 1e-12)
    return "OLTC voltage range must map the neutral tap to 1.0 p.u.";
  return {};
}

double tap_to_ratio(const OltcConfig& config, int tap) {
  if (tap < config.min_tap || tap > config.max_tap)
    throw Error("tap " + std::to_string(tap) + " outside [" + std::to_string(config.min_tap) + ", " +
                std::to_string(config.max_tap) + "]");
  if (tap == config.max_tap && config.max_tap == -config.min_tap) return config.v_at_max;
  if (tap == config.min_tap && config.max_tap == -config.min_tap) return config.v_at_min;
  return 1.0 + tap * config.step();
}

PhaseReal taps_to_ratios(const OltcConfig& config, const PhaseTaps& taps) {
  return {tap_to_ratio(config, taps[0]), tap_to_ratio(config, taps[1]), tap_to_ratio(config, taps[2])};
}

}  // namespace cvrsim
