#include "stylus/schedule.hpp"

#include <cmath>

namespace stylus {

void OneCycleConfig::validate() const {
  if (total_steps < 2) fail(Errc::config, "one-cycle needs at least 2 steps");
  if (!(pct_start > 0.0 && pct_start < 1.0)) fail(Errc::config, "pct_start must lie in (0, 1)");
  if (div_factor <= 1.0 || final_div_factor <= 1.0)
    fail(Errc::config, "div factors must exceed 1");
  if (lr_max <= 0.0) fail(Errc::config, "lr_max must be positive");
}

// endpoint-exact cosine interpolation
static double cosine_interp(double start, double end, double t) {
  if (t <= 0.0) return start;
  if (t >= 1.0) return end;
  return end + (start - end) * 0.5 * (1.0 + std::cos(3.14159265358979323846 * t));
}

LrMomentum one_cycle(const OneCycleConfig& cfg, int step) {
  cfg.validate();
  if (step < 0 || step >= cfg.total_steps)
    fail(Errc::config, "one-cycle step " + std::to_string(step) + " outside [0, " +
                           std::to_string(cfg.total_steps) + ")");

  int peak = static_cast<int>(std::floor(cfg.pct_start * cfg.total_steps));
  peak = std::max(1, std::min(peak, cfg.total_steps - 2));

  double lr_start = cfg.lr_max / cfg.div_factor;
  double lr_final = cfg.lr_max / (cfg.div_factor * cfg.final_div_factor);

  if (step <= peak) {
    double t = static_cast<double>(step) / static_cast<double>(peak);
    return {cosine_interp(lr_start, cfg.lr_max, t),
            cosine_interp(cfg.momentum_high, cfg.momentum_low, t)};
  }
  double t = static_cast<double>(step - peak) / static_cast<double>(cfg.total_steps - 1 - peak);
  return {cosine_interp(cfg.lr_max, lr_final, t),
          cosine_interp(cfg.momentum_low, cfg.momentum_high, t)};
}

std::vector<double> discriminative_lrs(double base_lr, int n_groups, double factor) {
  if (n_groups < 1) fail(Errc::config, "need at least one layer group");
  if (factor <= 1.0) fail(Errc::config, "discriminative factor must exceed 1");
  if (base_lr <= 0.0) fail(Errc::config, "base lr must be positive");
  std::vector<double> lrs(static_cast<size_t>(n_groups));
  for (int g = 0; g < n_groups; g++)
    lrs[static_cast<size_t>(g)] = base_lr / std::pow(factor, n_groups - 1 - g);
  return lrs;
}

}  // namespace stylus
