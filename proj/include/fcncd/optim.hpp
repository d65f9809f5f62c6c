#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "fcncd/array.hpp"
#include "fcncd/parameters.hpp"

namespace fcncd {

struct AdamwOptions {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 1e-2;
  // Rows of SparseRows parameters that got no gradient are left alone
  // (moments, decay and value) instead of receiving a zero-gradient update.
  bool lazy_rows = true;
};

/// Moment estimates and step count for AdamW.
struct AdamwState {
  AdamwOptions options;
  std::uint64_t step = 0;
  std::map<std::string, Array> first_moment;
  std::map<std::string, Array> second_moment;
};

AdamwState make_adamw_state(const ParameterSet& params, AdamwOptions options = {});

/// One decoupled-weight-decay Adam update with bias correction, in place.
///
/// With lazy_rows, parameters in UpdateMode::SparseRows only update rows that received a
/// gradient this step (moments, decay and the step itself); bias correction
/// uses the global step count. Throws if a parameter has no gradient slot.
void adamw_step(ParameterSet& params, const GradientBuffer& grads, AdamwState& state);

/// Value-semantics form: returns updated parameters and advances `state`.
std::map<std::string, Array> adamw_step(std::map<std::string, Array> params,
                                        const std::map<std::string, Array>& grads,
                                        AdamwState& state);

/// Glorot uniform draw of shape (fan_out, fan_in): U(-g, g), g = sqrt(6 / (fan_in + fan_out)).
Array xavier_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng);

/// Glorot uniform draw with an explicit shape.
Array xavier_uniform(Shape shape, std::size_t fan_in, std::size_t fan_out, Rng& rng);

/// Elementwise max(x, 0).
Array clip_nonnegative(const Array& weights);
void clip_nonnegative_inplace(Array& weights);

}  // namespace fcncd
