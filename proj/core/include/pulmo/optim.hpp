#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "pulmo/tensor.hpp"

namespace pulmo::nn {

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// First/second moments per parameter, in the order the parameters are
/// passed to adam_step. Moments are created on the first step.
template <typename T>
struct AdamState {
    AdamConfig config;
    std::vector<std::vector<T>> m;
    std::vector<std::vector<T>> v;
    std::uint64_t t = 0;
};

/// One bias-corrected Adam update using each parameter's accumulated grad:
///   m <- b1 m + (1-b1) g;  v <- b2 v + (1-b2) g^2
///   p <- p - lr * m_hat / (sqrt(v_hat) + eps)
template <typename T>
void adam_step(std::span<Tensor<T>> params, AdamState<T>& state);

template <typename T>
void zero_grads(std::span<Tensor<T>> params) {
    for (auto& p : params) p.zero_grad();
}

}  // namespace pulmo::nn
