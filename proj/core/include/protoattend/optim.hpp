#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "protoattend/autodiff.hpp"

namespace protoattend {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  std::vector<std::vector<double>> first_moment;
  std::vector<std::vector<double>> second_moment;
  std::uint64_t step_count = 0;

  static AdamState for_parameters(std::span<Parameter* const> params);
};

/// One bias-corrected Adam update using the gradients stored in `params`.
/// Throws NumericError naming the first parameter holding a non-finite
/// gradient; nothing is updated in that case.
void adam_step(std::span<Parameter* const> params, AdamState& state, double learning_rate,
               const AdamConfig& config = {});

// Global L2 norm over all parameter gradients.
double global_grad_norm(std::span<Parameter* const> params);

/// Rescales every gradient by max_norm / norm when the global norm exceeds
/// max_norm. Returns the norm before clipping.
double clip_global_norm(std::span<Parameter* const> params, double max_norm);

// Staircase exponential decay: initial_rate * decay_rate^floor(i / decay_every).
struct LrSchedule {
  double initial_rate = 1e-3;
  double decay_rate = 0.9;
  std::uint64_t decay_every = 1000;

  void validate() const;
};

double lr_at(const LrSchedule& schedule, std::uint64_t iteration);

}  // namespace protoattend
