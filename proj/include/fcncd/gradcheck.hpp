#pragma once

#include <string>

#include "fcncd/model.hpp"

namespace fcncd {

struct GradCheckOptions {
  double step = 1e-5;
  std::size_t entries_per_parameter = 6;
  // Entries whose analytic and numeric magnitudes are both below this floor
  // are compared absolutely against `absolute_tolerance` instead.
  double magnitude_floor = 1e-6;
  double absolute_tolerance = 1e-9;
};

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t checked = 0;
  std::size_t failures_over_floor = 0;  // entries below the floor that missed the absolute tolerance
  std::string worst_entry;
};

/// Compares reverse-mode gradients of the model's batch loss over every
/// record of `dataset` against central differences. Entries are sampled per
/// parameter, favouring rows that carry gradient for embedding tables.
GradCheckResult check_gradients(RankingModel& model, const ResponseDataset& dataset, const PairLossSpec& spec, Rng& rng,
                                const GradCheckOptions& options = {});

/// |a - b| / max(|a|, |b|), or 0 when both are zero.
double relative_error(double a, double b);

}  // namespace fcncd
