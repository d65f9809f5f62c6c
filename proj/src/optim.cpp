#include "fcncd/optim.hpp"

#include <algorithm>
#include <cmath>

#include "fcncd/error.hpp"

namespace fcncd {
namespace {

struct StepScalars {
  double lr;
  double beta1;
  double beta2;
  double eps;
  double decay;
  double bias1;
  double bias2;
};

inline void update_span(double* theta, double* m, double* v, const double* g, std::size_t n,
                        const StepScalars& s) {
  for (std::size_t i = 0; i < n; ++i) {
    theta[i] *= s.decay;
    m[i] = s.beta1 * m[i] + (1.0 - s.beta1) * g[i];
    v[i] = s.beta2 * v[i] + (1.0 - s.beta2) * g[i] * g[i];
    const double m_hat = m[i] / s.bias1;
    const double v_hat = v[i] / s.bias2;
    theta[i] -= s.lr * m_hat / (std::sqrt(v_hat) + s.eps);
  }
}

StepScalars scalars_for(const AdamwState& state) {
  const auto& o = state.options;
  const double t = static_cast<double>(state.step);
  return StepScalars{o.learning_rate,
                     o.beta1,
                     o.beta2,
                     o.epsilon,
                     1.0 - o.learning_rate * o.weight_decay,
                     1.0 - std::pow(o.beta1, t),
                     1.0 - std::pow(o.beta2, t)};
}

void ensure_moments(AdamwState& state, const std::string& name, const Array& value) {
  auto it = state.first_moment.find(name);
  if (it == state.first_moment.end()) {
    state.first_moment.emplace(name, Array(value.shape()));
    state.second_moment.emplace(name, Array(value.shape()));
  } else if (it->second.shape() != value.shape()) {
    throw ShapeError("moment shape mismatch for '" + name + "'");
  }
}

}  // namespace

AdamwState make_adamw_state(const ParameterSet& params, AdamwOptions options) {
  AdamwState state;
  state.options = options;
  for (const auto& p : params.entries()) ensure_moments(state, p.name, p.value);
  return state;
}

void adamw_step(ParameterSet& params, const GradientBuffer& grads, AdamwState& state) {
  for (const auto& p : params.entries()) {
    const auto& slot = grads.slot(p.name);
    if (slot.grad.shape() != p.value.shape()) throw ShapeError("gradient shape mismatch for '" + p.name + "'");
  }
  ++state.step;
  const StepScalars s = scalars_for(state);
  for (auto& p : params.entries()) {
    ensure_moments(state, p.name, p.value);
    const auto& slot = grads.slot(p.name);
    double* theta = p.value.data();
    double* m = state.first_moment.at(p.name).data();
    double* v = state.second_moment.at(p.name).data();
    const double* g = slot.grad.data();
    if (state.options.lazy_rows && p.mode == UpdateMode::SparseRows && !slot.dense) {
      const std::size_t cols = p.value.cols();
      for (std::size_t row : slot.touched_rows) {
        const std::size_t off = row * cols;
        update_span(theta + off, m + off, v + off, g + off, cols, s);
        require_finite(std::span<const double>(theta + off, cols), "adamw update of '" + p.name + "'");
      }
    } else {
      update_span(theta, m, v, g, p.value.size(), s);
      require_finite(p.value.values(), "adamw update of '" + p.name + "'");
    }
  }
}

std::map<std::string, Array> adamw_step(std::map<std::string, Array> params,
                                        const std::map<std::string, Array>& grads,
                                        AdamwState& state) {
  for (const auto& [name, value] : params) {
    auto it = grads.find(name);
    if (it == grads.end()) throw ValidationError("missing gradient for parameter '" + name + "'");
    if (it->second.shape() != value.shape()) throw ShapeError("gradient shape mismatch for '" + name + "'");
  }
  ++state.step;
  const StepScalars s = scalars_for(state);
  for (auto& [name, value] : params) {
    ensure_moments(state, name, value);
    update_span(value.data(), state.first_moment.at(name).data(), state.second_moment.at(name).data(),
                grads.at(name).data(), value.size(), s);
    require_finite(value.values(), "adamw update of '" + name + "'");
  }
  return params;
}

Array xavier_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  return xavier_uniform(Shape{fan_out, fan_in}, fan_in, fan_out, rng);
}

Array xavier_uniform(Shape shape, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  if (fan_in == 0 || fan_out == 0) throw ValidationError("xavier_uniform: fan_in and fan_out must be >= 1");
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Array out(std::move(shape));
  for (double& v : out.values()) v = dist(rng);
  return out;
}

Array clip_nonnegative(const Array& weights) {
  Array out = weights;
  clip_nonnegative_inplace(out);
  return out;
}

void clip_nonnegative_inplace(Array& weights) {
  for (double& v : weights.values()) v = std::max(v, 0.0);
}

}  // namespace fcncd
