#include "lfdnet/adam.hpp"

#include <cmath>

namespace lfdnet::nn {

template <typename T>
void adam_step(std::vector<Param<T>>& params, AdamState<T>& state) {
  if (state.m.empty()) {
    for (const auto& p : params) {
      state.m.emplace_back(p.value->shape());
      state.v.emplace_back(p.value->shape());
    }
  }
  if (state.m.size() != params.size()) throw InvalidArgument("adam state does not match parameter list");
  ++state.step;
  const auto& c = state.config;
  const double t = static_cast<double>(state.step);
  const double corr1 = 1.0 - std::pow(c.beta1, t);
  const double corr2 = 1.0 - std::pow(c.beta2, t);
  const T b1 = static_cast<T>(c.beta1), b2 = static_cast<T>(c.beta2);
  const T one_b1 = static_cast<T>(1.0 - c.beta1), one_b2 = static_cast<T>(1.0 - c.beta2);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& theta = *params[i].value;
    const auto& g = *params[i].grad;
    auto& m = state.m[i];
    auto& v = state.v[i];
    if (g.shape() != theta.shape() || m.shape() != theta.shape())
      throw InvalidArgument("adam shape mismatch for parameter " + params[i].name);
    for (std::size_t j = 0; j < theta.size(); ++j) {
      m[j] = b1 * m[j] + one_b1 * g[j];
      v[j] = b2 * v[j] + one_b2 * g[j] * g[j];
      const double mhat = m[j] / corr1;
      const double vhat = v[j] / corr2;
      theta[j] = static_cast<T>(theta[j] - c.learning_rate * mhat / (std::sqrt(vhat) + c.epsilon));
    }
  }
}

template void adam_step(std::vector<Param<float>>&, AdamState<float>&);
template void adam_step(std::vector<Param<double>>&, AdamState<double>&);

}  // namespace lfdnet::nn
