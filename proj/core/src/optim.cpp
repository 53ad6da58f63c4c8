#include "protoattend/optim.hpp"

#include <cmath>

#include "protoattend/error.hpp"

namespace protoattend {

AdamState AdamState::for_parameters(std::span<Parameter* const> params) {
  AdamState state;
  for (const Parameter* p : params) {
    state.first_moment.emplace_back(p->value.size(), 0.0);
    state.second_moment.emplace_back(p->value.size(), 0.0);
  }
  return state;
}

void adam_step(std::span<Parameter* const> params, AdamState& state, double learning_rate, const AdamConfig& config) {
  if (!(learning_rate > 0.0)) throw ContractError("adam_step: learning rate must be positive");
  if (state.first_moment.size() != params.size() || state.second_moment.size() != params.size()) {
    throw DimensionError("adam_step: optimizer state tracks " + std::to_string(state.first_moment.size()) +
                         " tensors, got " + std::to_string(params.size()) + " parameters");
  }
  for (std::size_t p = 0; p < params.size(); ++p) {
    const Parameter& param = *params[p];
    if (param.grad.size() != param.value.size() || state.first_moment[p].size() != param.value.size() ||
        state.second_moment[p].size() != param.value.size()) {
      throw DimensionError("adam_step: length mismatch for parameter '" + param.name + "'");
    }
    for (double g : param.grad) {
      if (!std::isfinite(g)) throw NumericError("adam_step: non-finite gradient in parameter '" + param.name + "'");
    }
  }

  state.step_count += 1;
  const double t = static_cast<double>(state.step_count);
  const double correction1 = 1.0 - std::pow(config.beta1, t);
  const double correction2 = 1.0 - std::pow(config.beta2, t);

  for (std::size_t p = 0; p < params.size(); ++p) {
    auto& value = params[p]->value.storage();
    const auto& grad = params[p]->grad;
    auto& m = state.first_moment[p];
    auto& v = state.second_moment[p];
    for (std::size_t k = 0; k < value.size(); ++k) {
      m[k] = config.beta1 * m[k] + (1.0 - config.beta1) * grad[k];
      v[k] = config.beta2 * v[k] + (1.0 - config.beta2) * grad[k] * grad[k];
      const double m_hat = m[k] / correction1;
      const double v_hat = v[k] / correction2;
      value[k] -= learning_rate * m_hat / (std::sqrt(v_hat) + config.epsilon);
    }
  }
}

double global_grad_norm(std::span<Parameter* const> params) {
  double total = 0.0;
  for (const Parameter* p : params) {
    for (double g : p->grad) total += g * g;
  }
  return std::sqrt(total);
}

double clip_global_norm(std::span<Parameter* const> params, double max_norm) {
  if (!(max_norm > 0.0)) throw ContractError("clip_global_norm: max_norm must be positive");
  const double norm = global_grad_norm(params);
  if (norm > max_norm) {
    const double factor = max_norm / norm;
    for (Parameter* p : params) {
      for (double& g : p->grad) g *= factor;
    }
  }
  return norm;
}

void LrSchedule::validate() const {
  if (!(initial_rate > 0.0)) throw ContractError("learning rate must be positive");
  if (!(decay_rate > 0.0 && decay_rate <= 1.0)) throw ContractError("learning rate decay must lie in (0, 1]");
  if (decay_every == 0) throw ContractError("decay interval must be positive");
}

double lr_at(const LrSchedule& schedule, std::uint64_t iteration) {
  const auto steps = static_cast<double>(iteration / schedule.decay_every);
  return schedule.initial_rate * std::pow(schedule.decay_rate, steps);
}

}  // namespace protoattend
