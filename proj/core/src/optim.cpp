#include "pulmo/optim.hpp"

#include <cmath>

namespace pulmo::nn {

template <typename T>
void adam_step(std::span<Tensor<T>> params, AdamState<T>& state) {
    if (state.m.empty()) {
        for (const auto& p : params) {
            state.m.emplace_back(p.size(), T(0));
            state.v.emplace_back(p.size(), T(0));
        }
    }
    if (state.m.size() != params.size()) throw UsageError("adam_step: parameter count changed between steps");

    const AdamConfig& c = state.config;
    ++state.t;
    const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.t));
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto& p = params[i];
        if (state.m[i].size() != p.size()) throw UsageError("adam_step: parameter shape changed between steps");
        auto values = p.data();
        const auto g = p.grad();
        auto& m = state.m[i];
        auto& v = state.v[i];
        for (std::size_t j = 0; j < values.size(); ++j) {
            const double gj = g[j];
            const double mj = c.beta1 * m[j] + (1.0 - c.beta1) * gj;
            const double vj = c.beta2 * v[j] + (1.0 - c.beta2) * gj * gj;
            m[j] = static_cast<T>(mj);
            v[j] = static_cast<T>(vj);
            values[j] = static_cast<T>(values[j] - c.lr * (mj / bc1) / (std::sqrt(vj / bc2) + c.eps));
        }
    }
}

template void adam_step(std::span<Tensor<float>>, AdamState<float>&);
template void adam_step(std::span<Tensor<double>>, AdamState<double>&);

}  // namespace pulmo::nn
