#pragma once

#include <utility>
#include <vector>

#include "stylus/common.hpp"

namespace stylus {

// One-cycle policy: lr rises from lr_max/div_factor to lr_max over the first
// pct_start of training, then anneals to lr_max/(div_factor*final_div_factor);
// momentum moves inversely. Cosine interpolation inside each phase, endpoints
// exact.
struct OneCycleConfig {
  double lr_max = 1e-3;
  int total_steps = 0;
  double pct_start = 0.3;
  double div_factor = 25.0;
  double final_div_factor = 1e4;
  double momentum_high = 0.95;
  double momentum_low = 0.85;

  void validate() const;
};

struct LrMomentum {
  double lr;
  double momentum;
};

LrMomentum one_cycle(const OneCycleConfig& cfg, int step);

// Group g (0 = input side) gets base_lr / factor^(n_groups-1-g).
std::vector<double> discriminative_lrs(double base_lr, int n_groups, double factor);

}  // namespace stylus
