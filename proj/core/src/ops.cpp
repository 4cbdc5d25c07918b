#include "pulmo/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace pulmo::nn {

std::size_t numel(const Shape& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return n;
}

std::string to_string(const Shape& shape) {
    std::ostringstream out;
    out << '(';
    for (std::size_t i = 0; i < shape.size(); ++i) out << (i ? "," : "") << shape[i];
    out << ')';
    return out.str();
}

namespace {

using Acc = double;

template <typename T>
bool any_grad(const Tensor<T>& a) {
    return a.requires_grad();
}

template <typename T, typename... Rest>
bool any_grad(const Tensor<T>& a, const Rest&... rest) {
    return a.requires_grad() || any_grad(rest...);
}

template <typename T>
void require_rank(const Tensor<T>& x, std::size_t rank, const char* op) {
    if (x.rank() != rank)
        throw UsageError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got shape " +
                         to_string(x.shape()));
}

template <typename T>
Tensor<T> make_output(Shape shape, std::vector<T> values, bool requires_grad) {
    return Tensor<T>(std::move(shape), std::move(values), requires_grad);
}

}  // namespace

// ---------------------------------------------------------------- conv2d

template <typename T>
Tensor<T> conv2d(Tape& tape, const Tensor<T>& x, const Tensor<T>& kernels, const Tensor<T>& bias,
                 Conv2dOptions options) {
    require_rank(x, 4, "conv2d input");
    require_rank(kernels, 4, "conv2d kernels");
    const std::size_t N = x.dim(0), H = x.dim(1), W = x.dim(2), Cin = x.dim(3);
    const std::size_t kh = kernels.dim(0), kw = kernels.dim(1), Cout = kernels.dim(3);
    const std::size_t s = options.stride, p = options.padding;
    if (kernels.dim(2) != Cin)
        throw UsageError("conv2d: kernel expects " + std::to_string(kernels.dim(2)) + " input channels, got " +
                         std::to_string(Cin));
    if (bias.size() != Cout) throw UsageError("conv2d: bias length mismatch");
    if (s < 1) throw UsageError("conv2d: stride must be >= 1");
    if (kh > H + 2 * p || kw > W + 2 * p) throw UsageError("conv2d: kernel larger than input");
    const std::size_t Ho = (H + 2 * p - kh) / s + 1;
    const std::size_t Wo = (W + 2 * p - kw) / s + 1;

    const auto xv = x.data();
    const auto kv = kernels.data();
    const auto bv = bias.data();
    std::vector<T> out(N * Ho * Wo * Cout);
    std::vector<Acc> acc(Cout);
    for (std::size_t n = 0; n < N; ++n) {
        for (std::size_t oy = 0; oy < Ho; ++oy) {
            for (std::size_t ox = 0; ox < Wo; ++ox) {
                for (std::size_t co = 0; co < Cout; ++co) acc[co] = bv[co];
                for (std::size_t ky = 0; ky < kh; ++ky) {
                    const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * s + ky) - static_cast<std::ptrdiff_t>(p);
                    if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(H)) continue;
                    for (std::size_t kx = 0; kx < kw; ++kx) {
                        const std::ptrdiff_t ix =
                            static_cast<std::ptrdiff_t>(ox * s + kx) - static_cast<std::ptrdiff_t>(p);
                        if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(W)) continue;
                        const T* xp = &xv[((n * H + iy) * W + ix) * Cin];
                        const T* wp = &kv[(ky * kw + kx) * Cin * Cout];
                        for (std::size_t ci = 0; ci < Cin; ++ci) {
                            const Acc xval = xp[ci];
                            const T* wrow = wp + ci * Cout;
                            for (std::size_t co = 0; co < Cout; ++co) acc[co] += xval * wrow[co];
                        }
                    }
                }
                T* op = &out[((n * Ho + oy) * Wo + ox) * Cout];
                for (std::size_t co = 0; co < Cout; ++co) op[co] = static_cast<T>(acc[co]);
            }
        }
    }

    const bool rg = any_grad(x, kernels, bias);
    Tensor<T> y = make_output<T>({N, Ho, Wo, Cout}, std::move(out), rg);
    if (rg && tape.enabled()) {
        tape.record([x, kernels, bias, y, s, p]() mutable {
            const std::size_t N = x.dim(0), H = x.dim(1), W = x.dim(2), Cin = x.dim(3);
            const std::size_t kh = kernels.dim(0), kw = kernels.dim(1), Cout = kernels.dim(3);
            const std::size_t Ho = y.dim(1), Wo = y.dim(2);
            const auto g = y.grad();
            const auto xv = x.data();
            const auto kv = kernels.data();
            const bool need_x = x.requires_grad(), need_k = kernels.requires_grad(), need_b = bias.requires_grad();
            std::vector<Acc> dk(need_k ? kernels.size() : 0, 0.0);
            std::vector<Acc> db(need_b ? Cout : 0, 0.0);
            std::span<T> dx = need_x ? x.grad() : std::span<T>{};
            std::vector<Acc> dxp(Cin);
            for (std::size_t n = 0; n < N; ++n) {
                for (std::size_t oy = 0; oy < Ho; ++oy) {
                    for (std::size_t ox = 0; ox < Wo; ++ox) {
                        const T* gp = &g[((n * Ho + oy) * Wo + ox) * Cout];
                        if (need_b)
                            for (std::size_t co = 0; co < Cout; ++co) db[co] += gp[co];
                        for (std::size_t ky = 0; ky < kh; ++ky) {
                            const std::ptrdiff_t iy =
                                static_cast<std::ptrdiff_t>(oy * s + ky) - static_cast<std::ptrdiff_t>(p);
                            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(H)) continue;
                            for (std::size_t kx = 0; kx < kw; ++kx) {
                                const std::ptrdiff_t ix =
                                    static_cast<std::ptrdiff_t>(ox * s + kx) - static_cast<std::ptrdiff_t>(p);
                                if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(W)) continue;
                                const std::size_t xoff = ((n * H + iy) * W + ix) * Cin;
                                const std::size_t woff = (ky * kw + kx) * Cin * Cout;
                                for (std::size_t ci = 0; ci < Cin; ++ci) {
                                    const T* wrow = &kv[woff + ci * Cout];
                                    if (need_k) {
                                        const Acc xval = xv[xoff + ci];
                                        Acc* dkrow = &dk[woff + ci * Cout];
                                        for (std::size_t co = 0; co < Cout; ++co) dkrow[co] += xval * gp[co];
                                    }
                                    if (need_x) {
                                        Acc sum = 0.0;
                                        for (std::size_t co = 0; co < Cout; ++co) sum += static_cast<Acc>(wrow[co]) * gp[co];
                                        dx[xoff + ci] += static_cast<T>(sum);
                                    }
                                }
                            }
                        }
                    }
                }
            }
            if (need_k) {
                auto gk = kernels.grad();
                for (std::size_t i = 0; i < dk.size(); ++i) gk[i] += static_cast<T>(dk[i]);
            }
            if (need_b) {
                auto gb = bias.grad();
                for (std::size_t i = 0; i < Cout; ++i) gb[i] += static_cast<T>(db[i]);
            }
        });
    }
    return y;
}

// ------------------------------------------------------------ batch_norm

template <typename T>
Tensor<T> batch_norm(Tape& tape, const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                     BatchNormStats<T>& stats, Mode mode, BatchNormOptions options) {
    if (x.rank() < 2) throw UsageError("batch_norm: expected rank >= 2, got " + to_string(x.shape()));
    const std::size_t C = x.shape().back();
    const std::size_t M = x.size() / C;
    if (gamma.size() != C || beta.size() != C) throw UsageError("batch_norm: gamma/beta length mismatch");
    const auto xv = x.data();
    const auto gv = gamma.data();
    const auto bv = beta.data();
    const double eps = options.eps;

    std::vector<Acc> mean(C, 0.0), var(C, 0.0);
    if (mode == Mode::Infer) {
        if (!stats.initialized)
            throw UsageError("batch_norm: inference before any training step (running statistics uninitialized)");
        for (std::size_t c = 0; c < C; ++c) {
            mean[c] = stats.running_mean[c];
            var[c] = stats.running_var[c];
        }
    } else {
        for (std::size_t i = 0; i < M; ++i)
            for (std::size_t c = 0; c < C; ++c) mean[c] += xv[i * C + c];
        for (std::size_t c = 0; c < C; ++c) mean[c] /= static_cast<Acc>(M);
        for (std::size_t i = 0; i < M; ++i)
            for (std::size_t c = 0; c < C; ++c) {
                const Acc d = xv[i * C + c] - mean[c];
                var[c] += d * d;
            }
        for (std::size_t c = 0; c < C; ++c) var[c] /= static_cast<Acc>(M);

        if (!stats.initialized) {
            stats.running_mean.assign(C, T(0));
            stats.running_var.assign(C, T(0));
            for (std::size_t c = 0; c < C; ++c) {
                stats.running_mean[c] = static_cast<T>(mean[c]);
                stats.running_var[c] = static_cast<T>(var[c]);
            }
            stats.initialized = true;
        } else {
            const double m = options.momentum;
            for (std::size_t c = 0; c < C; ++c) {
                stats.running_mean[c] = static_cast<T>(m * stats.running_mean[c] + (1.0 - m) * mean[c]);
                stats.running_var[c] = static_cast<T>(m * stats.running_var[c] + (1.0 - m) * var[c]);
            }
        }
    }

    std::vector<Acc> inv_std(C);
    for (std::size_t c = 0; c < C; ++c) inv_std[c] = 1.0 / std::sqrt(var[c] + eps);

    std::vector<T> out(x.size());
    std::vector<T> xhat(x.size());
    for (std::size_t i = 0; i < M; ++i)
        for (std::size_t c = 0; c < C; ++c) {
            const Acc h = (xv[i * C + c] - mean[c]) * inv_std[c];
            xhat[i * C + c] = static_cast<T>(h);
            out[i * C + c] = static_cast<T>(gv[c] * h + bv[c]);
        }

    const bool rg = any_grad(x, gamma, beta);
    Tensor<T> y = make_output<T>(x.shape(), std::move(out), rg);
    if (rg && tape.enabled()) {
        tape.record([x, gamma, beta, y, xhat = std::move(xhat), inv_std = std::move(inv_std), C, M,
                     train = mode == Mode::Train]() mutable {
            const auto g = y.grad();
            const auto gv = gamma.data();
            std::vector<Acc> sum_g(C, 0.0), sum_gh(C, 0.0);
            for (std::size_t i = 0; i < M; ++i)
                for (std::size_t c = 0; c < C; ++c) {
                    sum_g[c] += g[i * C + c];
                    sum_gh[c] += static_cast<Acc>(g[i * C + c]) * xhat[i * C + c];
                }
            if (gamma.requires_grad()) {
                auto gg = gamma.grad();
                for (std::size_t c = 0; c < C; ++c) gg[c] += static_cast<T>(sum_gh[c]);
            }
            if (beta.requires_grad()) {
                auto gb = beta.grad();
                for (std::size_t c = 0; c < C; ++c) gb[c] += static_cast<T>(sum_g[c]);
            }
            if (x.requires_grad()) {
                auto dx = x.grad();
                const Acc m = static_cast<Acc>(M);
                for (std::size_t i = 0; i < M; ++i)
                    for (std::size_t c = 0; c < C; ++c) {
                        const Acc gi = g[i * C + c];
                        Acc d;
                        if (train) {
                            d = gv[c] * inv_std[c] * (gi - sum_g[c] / m - xhat[i * C + c] * sum_gh[c] / m);
                        } else {
                            d = gv[c] * inv_std[c] * gi;
                        }
                        dx[i * C + c] += static_cast<T>(d);
                    }
            }
        });
    }
    return y;
}

// ------------------------------------------------------- pointwise ops

template <typename T>
Tensor<T> relu(Tape& tape, const Tensor<T>& x) {
    const auto xv = x.data();
    std::vector<T> out(x.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] > T(0) ? xv[i] : T(0);
    Tensor<T> y = make_output<T>(x.shape(), std::move(out), x.requires_grad());
    if (x.requires_grad() && tape.enabled()) {
        tape.record([x, y]() mutable {
            const auto g = y.grad();
            const auto xv = x.data();
            auto dx = x.grad();
            for (std::size_t i = 0; i < dx.size(); ++i)
                if (xv[i] > T(0)) dx[i] += g[i];
        });
    }
    return y;
}

template <typename T>
Tensor<T> sigmoid(Tape& tape, const Tensor<T>& x) {
    const auto xv = x.data();
    std::vector<T> out(x.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        const Acc v = xv[i];
        out[i] = static_cast<T>(v >= 0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v)));
    }
    Tensor<T> y = make_output<T>(x.shape(), std::move(out), x.requires_grad());
    if (x.requires_grad() && tape.enabled()) {
        tape.record([x, y]() mutable {
            const auto g = y.grad();
            const auto yv = y.data();
            auto dx = x.grad();
            for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += g[i] * yv[i] * (T(1) - yv[i]);
        });
    }
    return y;
}

template <typename T>
Tensor<T> dropout(Tape& tape, const Tensor<T>& x, double p, Rng& rng, Mode mode) {
    if (!(p >= 0.0 && p < 1.0)) throw UsageError("dropout: p must lie in [0, 1)");
    if (mode == Mode::Infer || p == 0.0) return x;
    const T keep_scale = static_cast<T>(1.0 / (1.0 - p));
    std::vector<T> mask(x.size());
    for (auto& m : mask) m = rng.uniform() < p ? T(0) : keep_scale;
    const auto xv = x.data();
    std::vector<T> out(x.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] * mask[i];
    Tensor<T> y = make_output<T>(x.shape(), std::move(out), x.requires_grad());
    if (x.requires_grad() && tape.enabled()) {
        tape.record([x, y, mask = std::move(mask)]() mutable {
            const auto g = y.grad();
            auto dx = x.grad();
            for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += g[i] * mask[i];
        });
    }
    return y;
}

// ------------------------------------------------------------- max_pool2d

template <typename T>
Tensor<T> max_pool2d(Tape& tape, const Tensor<T>& x, std::size_t s) {
    require_rank(x, 4, "max_pool2d");
    const std::size_t N = x.dim(0), H = x.dim(1), W = x.dim(2), C = x.dim(3);
    if (s < 1 || s > H || s > W) throw UsageError("max_pool2d: window larger than spatial extent");
    const std::size_t Ho = H / s, Wo = W / s;
    const auto xv = x.data();
    std::vector<T> out(N * Ho * Wo * C);
    std::vector<std::size_t> argmax(out.size());
    for (std::size_t n = 0; n < N; ++n)
        for (std::size_t oy = 0; oy < Ho; ++oy)
            for (std::size_t ox = 0; ox < Wo; ++ox)
                for (std::size_t c = 0; c < C; ++c) {
                    std::size_t best = ((n * H + oy * s) * W + ox * s) * C + c;
                    for (std::size_t dy = 0; dy < s; ++dy)
                        for (std::size_t dx = 0; dx < s; ++dx) {
                            const std::size_t idx = ((n * H + oy * s + dy) * W + ox * s + dx) * C + c;
                            if (xv[idx] > xv[best]) best = idx;
                        }
                    const std::size_t o = ((n * Ho + oy) * Wo + ox) * C + c;
                    out[o] = xv[best];
                    argmax[o] = best;
                }
    Tensor<T> y = make_output<T>({N, Ho, Wo, C}, std::move(out), x.requires_grad());
    if (x.requires_grad() && tape.enabled()) {
        tape.record([x, y, argmax = std::move(argmax)]() mutable {
            const auto g = y.grad();
            auto dx = x.grad();
            for (std::size_t o = 0; o < argmax.size(); ++o) dx[argmax[o]] += g[o];
        });
    }
    return y;
}

// ------------------------------------------------------------- shape ops

template <typename T>
Tensor<T> reshape(Tape& tape, const Tensor<T>& x, Shape shape) {
    if (numel(shape) != x.size())
        throw UsageError("reshape: " + to_string(x.shape()) + " -> " + to_string(shape));
    const auto xv = x.data();
    Tensor<T> y = make_output<T>(std::move(shape), std::vector<T>(xv.begin(), xv.end()), x.requires_grad());
    if (x.requires_grad() && tape.enabled()) {
        tape.record([x, y]() mutable {
            const auto g = y.grad();
            auto dx = x.grad();
            for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += g[i];
        });
    }
    return y;
}

template <typename T>
Tensor<T> flatten(Tape& tape, const Tensor<T>& x) {
    if (x.rank() < 1) throw UsageError("flatten: scalar input");
    const std::size_t n = x.dim(0);
    return reshape(tape, x, Shape{n, n ? x.size() / n : 0});
}

template <typename T>
Tensor<T> upsample_nearest(Tape& tape, const Tensor<T>& x, std::size_t factor) {
    require_rank(x, 4, "upsample_nearest");
    if (factor < 1) throw UsageError("upsample_nearest: factor must be >= 1");
    const std::size_t N = x.dim(0), H = x.dim(1), W = x.dim(2), C = x.dim(3);
    const std::size_t Ho = H * factor, Wo = W * factor;
    const auto xv = x.data();
    std::vector<T> out(N * Ho * Wo * C);
    for (std::size_t n = 0; n < N; ++n)
        for (std::size_t oy = 0; oy < Ho; ++oy)
            for (std::size_t ox = 0; ox < Wo; ++ox) {
                const T* src = &xv[((n * H + oy / factor) * W + ox / factor) * C];
                std::copy(src, src + C, &out[((n * Ho + oy) * Wo + ox) * C]);
            }
    Tensor<T> y = make_output<T>({N, Ho, Wo, C}, std::move(out), x.requires_grad());
    if (x.requires_grad() && tape.enabled()) {
        tape.record([x, y, factor]() mutable {
            const std::size_t N = x.dim(0), H = x.dim(1), W = x.dim(2), C = x.dim(3);
            const std::size_t Ho = H * factor, Wo = W * factor;
            const auto g = y.grad();
            auto dx = x.grad();
            for (std::size_t n = 0; n < N; ++n)
                for (std::size_t oy = 0; oy < Ho; ++oy)
                    for (std::size_t ox = 0; ox < Wo; ++ox) {
                        const T* gp = &g[((n * Ho + oy) * Wo + ox) * C];
                        T* dp = &dx[((n * H + oy / factor) * W + ox / factor) * C];
                        for (std::size_t c = 0; c < C; ++c) dp[c] += gp[c];
                    }
        });
    }
    return y;
}

template <typename T>
Tensor<T> crop_or_pad(Tape& tape, const Tensor<T>& x, std::size_t height, std::size_t width) {
    require_rank(x, 4, "crop_or_pad");
    const std::size_t N = x.dim(0), H = x.dim(1), W = x.dim(2), C = x.dim(3);
    if (H == height && W == width) return x;
    const std::size_t Hc = std::min(H, height), Wc = std::min(W, width);
    const auto xv = x.data();
    std::vector<T> out(N * height * width * C, T(0));
    for (std::size_t n = 0; n < N; ++n)
        for (std::size_t yy = 0; yy < Hc; ++yy)
            for (std::size_t xx = 0; xx < Wc; ++xx) {
                const T* src = &xv[((n * H + yy) * W + xx) * C];
                std::copy(src, src + C, &out[((n * height + yy) * width + xx) * C]);
            }
    Tensor<T> y = make_output<T>({N, height, width, C}, std::move(out), x.requires_grad());
    if (x.requires_grad() && tape.enabled()) {
        tape.record([x, y, height, width, Hc, Wc]() mutable {
            const std::size_t N = x.dim(0), H = x.dim(1), W = x.dim(2), C = x.dim(3);
            const auto g = y.grad();
            auto dx = x.grad();
            for (std::size_t n = 0; n < N; ++n)
                for (std::size_t yy = 0; yy < Hc; ++yy)
                    for (std::size_t xx = 0; xx < Wc; ++xx)
                        for (std::size_t c = 0; c < C; ++c)
                            dx[((n * H + yy) * W + xx) * C + c] += g[((n * height + yy) * width + xx) * C + c];
        });
    }
    return y;
}

// ----------------------------------------------------------------- dense

template <typename T>
Tensor<T> dense(Tape& tape, const Tensor<T>& x, const Tensor<T>& weights, const Tensor<T>& bias) {
    require_rank(x, 2, "dense input");
    require_rank(weights, 2, "dense weights");
    const std::size_t N = x.dim(0), F = x.dim(1), O = weights.dim(1);
    if (weights.dim(0) != F)
        throw UsageError("dense: input has " + std::to_string(F) + " features, weights expect " +
                         std::to_string(weights.dim(0)));
    if (bias.size() != O) throw UsageError("dense: bias length mismatch");
    const auto xv = x.data();
    const auto wv = weights.data();
    const auto bv = bias.data();
    std::vector<T> out(N * O);
    std::vector<Acc> acc(O);
    for (std::size_t n = 0; n < N; ++n) {
        for (std::size_t o = 0; o < O; ++o) acc[o] = bv[o];
        const T* xr = &xv[n * F];
        for (std::size_t f = 0; f < F; ++f) {
            const Acc xval = xr[f];
            if (xval == 0.0) continue;
            const T* wr = &wv[f * O];
            for (std::size_t o = 0; o < O; ++o) acc[o] += xval * wr[o];
        }
        for (std::size_t o = 0; o < O; ++o) out[n * O + o] = static_cast<T>(acc[o]);
    }
    const bool rg = any_grad(x, weights, bias);
    Tensor<T> y = make_output<T>({N, O}, std::move(out), rg);
    if (rg && tape.enabled()) {
        tape.record([x, weights, bias, y]() mutable {
            const std::size_t N = x.dim(0), F = x.dim(1), O = weights.dim(1);
            const auto g = y.grad();
            const auto xv = x.data();
            const auto wv = weights.data();
            if (bias.requires_grad()) {
                auto gb = bias.grad();
                for (std::size_t o = 0; o < O; ++o) {
                    Acc s = 0.0;
                    for (std::size_t n = 0; n < N; ++n) s += g[n * O + o];
                    gb[o] += static_cast<T>(s);
                }
            }
            if (weights.requires_grad()) {
                auto gw = weights.grad();
                std::vector<Acc> row(O);
                for (std::size_t f = 0; f < F; ++f) {
                    std::fill(row.begin(), row.end(), 0.0);
                    bool touched = false;
                    for (std::size_t n = 0; n < N; ++n) {
                        const Acc xval = xv[n * F + f];
                        if (xval == 0.0) continue;
                        touched = true;
                        const T* gr = &g[n * O];
                        for (std::size_t o = 0; o < O; ++o) row[o] += xval * gr[o];
                    }
                    if (!touched) continue;
                    T* gwr = &gw[f * O];
                    for (std::size_t o = 0; o < O; ++o) gwr[o] += static_cast<T>(row[o]);
                }
            }
            if (x.requires_grad()) {
                auto dx = x.grad();
                for (std::size_t n = 0; n < N; ++n) {
                    const T* gr = &g[n * O];
                    for (std::size_t f = 0; f < F; ++f) {
                        const T* wr = &wv[f * O];
                        Acc s = 0.0;
                        for (std::size_t o = 0; o < O; ++o) s += static_cast<Acc>(wr[o]) * gr[o];
                        dx[n * F + f] += static_cast<T>(s);
                    }
                }
            }
        });
    }
    return y;
}

// ------------------------------------------------------------ arithmetic

template <typename T>
Tensor<T> add(Tape& tape, const Tensor<T>& a, const Tensor<T>& b) {
    if (a.shape() != b.shape()) throw UsageError("add: shape mismatch " + to_string(a.shape()) + " vs " + to_string(b.shape()));
    const auto av = a.data();
    const auto bv = b.data();
    std::vector<T> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
    const bool rg = any_grad(a, b);
    Tensor<T> y = make_output<T>(a.shape(), std::move(out), rg);
    if (rg && tape.enabled()) {
        tape.record([a, b, y]() mutable {
            const auto g = y.grad();
            if (a.requires_grad()) {
                auto da = a.grad();
                for (std::size_t i = 0; i < da.size(); ++i) da[i] += g[i];
            }
            if (b.requires_grad()) {
                auto db = b.grad();
                for (std::size_t i = 0; i < db.size(); ++i) db[i] += g[i];
            }
        });
    }
    return y;
}

template <typename T>
Tensor<T> scale(Tape& tape, const Tensor<T>& a, double factor) {
    const auto av = a.data();
    std::vector<T> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<T>(av[i] * factor);
    Tensor<T> y = make_output<T>(a.shape(), std::move(out), a.requires_grad());
    if (a.requires_grad() && tape.enabled()) {
        tape.record([a, y, factor]() mutable {
            const auto g = y.grad();
            auto da = a.grad();
            for (std::size_t i = 0; i < da.size(); ++i) da[i] += static_cast<T>(g[i] * factor);
        });
    }
    return y;
}

// ---------------------------------------------------------------- losses

template <typename T>
Tensor<T> softmax(const Tensor<T>& logits) {
    require_rank(logits, 2, "softmax");
    const std::size_t N = logits.dim(0), K = logits.dim(1);
    const auto lv = logits.data();
    std::vector<T> out(N * K);
    for (std::size_t n = 0; n < N; ++n) {
        const T* row = &lv[n * K];
        const Acc mx = *std::max_element(row, row + K);
        Acc sum = 0.0;
        for (std::size_t k = 0; k < K; ++k) sum += std::exp(row[k] - mx);
        for (std::size_t k = 0; k < K; ++k) out[n * K + k] = static_cast<T>(std::exp(row[k] - mx) / sum);
    }
    return Tensor<T>({N, K}, std::move(out));
}

template <typename T>
Tensor<T> softmax_cross_entropy(Tape& tape, const Tensor<T>& logits, const Tensor<T>& one_hot,
                                std::span<const T> weights) {
    require_rank(logits, 2, "softmax_cross_entropy");
    if (one_hot.shape() != logits.shape()) throw UsageError("softmax_cross_entropy: one_hot shape mismatch");
    const std::size_t N = logits.dim(0), K = logits.dim(1);
    if (!weights.empty() && weights.size() != N) throw UsageError("softmax_cross_entropy: weight count mismatch");
    if (N == 0) throw UsageError("softmax_cross_entropy: empty batch");
    const auto lv = logits.data();
    const auto hv = one_hot.data();

    std::vector<std::size_t> truth(N);
    for (std::size_t n = 0; n < N; ++n) {
        std::size_t ones = 0;
        for (std::size_t k = 0; k < K; ++k) {
            const T v = hv[n * K + k];
            if (v == T(1)) {
                ++ones;
                truth[n] = k;
            } else if (v != T(0)) {
                ones = 2;
            }
        }
        if (ones != 1) throw UsageError("softmax_cross_entropy: one_hot row " + std::to_string(n) + " is not a valid indicator");
    }

    std::vector<Acc> probs(N * K);
    Acc total = 0.0;
    for (std::size_t n = 0; n < N; ++n) {
        const T* row = &lv[n * K];
        const Acc mx = *std::max_element(row, row + K);
        Acc sum = 0.0;
        for (std::size_t k = 0; k < K; ++k) sum += std::exp(row[k] - mx);
        const Acc log_sum = std::log(sum);
        for (std::size_t k = 0; k < K; ++k) probs[n * K + k] = std::exp(row[k] - mx - log_sum);
        const Acc w = weights.empty() ? 1.0 : static_cast<Acc>(weights[n]);
        total += w * (log_sum + mx - row[truth[n]]);
    }
    const bool rg = logits.requires_grad();
    Tensor<T> y = make_output<T>({1}, {static_cast<T>(total / static_cast<Acc>(N))}, rg);
    if (rg && tape.enabled()) {
        std::vector<Acc> w(N, 1.0);
        for (std::size_t n = 0; n < N && !weights.empty(); ++n) w[n] = weights[n];
        tape.record([logits, y, probs = std::move(probs), truth = std::move(truth), w = std::move(w), N, K]() mutable {
            const Acc g = y.grad()[0];
            auto dl = logits.grad();
            for (std::size_t n = 0; n < N; ++n) {
                const Acc f = g * w[n] / static_cast<Acc>(N);
                for (std::size_t k = 0; k < K; ++k) {
                    const Acc target = k == truth[n] ? 1.0 : 0.0;
                    dl[n * K + k] += static_cast<T>(f * (probs[n * K + k] - target));
                }
            }
        });
    }
    return y;
}

template <typename T>
Tensor<T> sse_loss(Tape& tape, const Tensor<T>& x, const Tensor<T>& reconstruction) {
    if (x.shape() != reconstruction.shape())
        throw UsageError("sse_loss: shape mismatch " + to_string(x.shape()) + " vs " + to_string(reconstruction.shape()));
    const auto xv = x.data();
    const auto rv = reconstruction.data();
    Acc total = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const Acc d = static_cast<Acc>(rv[i]) - xv[i];
        total += d * d;
    }
    const bool rg = any_grad(x, reconstruction);
    Tensor<T> y = make_output<T>({1}, {static_cast<T>(total)}, rg);
    if (rg && tape.enabled()) {
        tape.record([x, reconstruction, y]() mutable {
            const Acc g = y.grad()[0];
            const auto xv = x.data();
            const auto rv = reconstruction.data();
            if (reconstruction.requires_grad()) {
                auto dr = reconstruction.grad();
                for (std::size_t i = 0; i < dr.size(); ++i) dr[i] += static_cast<T>(2.0 * g * (static_cast<Acc>(rv[i]) - xv[i]));
            }
            if (x.requires_grad()) {
                auto dx = x.grad();
                for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += static_cast<T>(2.0 * g * (static_cast<Acc>(xv[i]) - rv[i]));
            }
        });
    }
    return y;
}

template <typename T>
Tensor<T> kl_to_standard_normal(Tape& tape, const Tensor<T>& mu, const Tensor<T>& logvar) {
    if (mu.shape() != logvar.shape()) throw UsageError("kl_to_standard_normal: shape mismatch");
    const auto mv = mu.data();
    const auto lv = logvar.data();
    Acc total = 0.0;
    for (std::size_t i = 0; i < mu.size(); ++i) {
        const Acc m = mv[i], l = lv[i];
        total += 0.5 * (std::exp(l) + m * m - 1.0 - l);
    }
    const bool rg = any_grad(mu, logvar);
    Tensor<T> y = make_output<T>({1}, {static_cast<T>(total)}, rg);
    if (rg && tape.enabled()) {
        tape.record([mu, logvar, y]() mutable {
            const Acc g = y.grad()[0];
            const auto mv = mu.data();
            const auto lv = logvar.data();
            if (mu.requires_grad()) {
                auto dm = mu.grad();
                for (std::size_t i = 0; i < dm.size(); ++i) dm[i] += static_cast<T>(g * mv[i]);
            }
            if (logvar.requires_grad()) {
                auto dl = logvar.grad();
                for (std::size_t i = 0; i < dl.size(); ++i)
                    dl[i] += static_cast<T>(g * 0.5 * (std::exp(static_cast<Acc>(lv[i])) - 1.0));
            }
        });
    }
    return y;
}

template <typename T>
Tensor<T> reparameterize(Tape& tape, const Tensor<T>& mu, const Tensor<T>& logvar, Rng& rng) {
    if (mu.shape() != logvar.shape()) throw UsageError("reparameterize: shape mismatch");
    const auto mv = mu.data();
    const auto lv = logvar.data();
    std::vector<Acc> eps(mu.size());
    std::vector<T> out(mu.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        eps[i] = rng.normal();
        out[i] = static_cast<T>(mv[i] + std::exp(0.5 * static_cast<Acc>(lv[i])) * eps[i]);
    }
    const bool rg = any_grad(mu, logvar);
    Tensor<T> y = make_output<T>(mu.shape(), std::move(out), rg);
    if (rg && tape.enabled()) {
        tape.record([mu, logvar, y, eps = std::move(eps)]() mutable {
            const auto g = y.grad();
            const auto lv = logvar.data();
            if (mu.requires_grad()) {
                auto dm = mu.grad();
                for (std::size_t i = 0; i < dm.size(); ++i) dm[i] += g[i];
            }
            if (logvar.requires_grad()) {
                auto dl = logvar.grad();
                for (std::size_t i = 0; i < dl.size(); ++i)
                    dl[i] += static_cast<T>(g[i] * 0.5 * std::exp(0.5 * static_cast<Acc>(lv[i])) * eps[i]);
            }
        });
    }
    return y;
}

template <typename T>
Tensor<T> one_hot(std::span<const std::size_t> labels, std::size_t classes) {
    std::vector<T> values(labels.size() * classes, T(0));
    for (std::size_t n = 0; n < labels.size(); ++n) {
        if (labels[n] >= classes)
            throw UsageError("one_hot: label " + std::to_string(labels[n]) + " out of range for " +
                             std::to_string(classes) + " classes");
        values[n * classes + labels[n]] = T(1);
    }
    return Tensor<T>({labels.size(), classes}, std::move(values));
}

template <typename T>
Tensor<T> glorot_uniform(Shape shape, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::vector<T> values(numel(shape));
    for (auto& v : values) v = static_cast<T>((2.0 * rng.uniform() - 1.0) * limit);
    return Tensor<T>(std::move(shape), std::move(values), true);
}

#define PULMO_INSTANTIATE_OPS(T)                                                                              \
    template Tensor<T> conv2d(Tape&, const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, Conv2dOptions);  \
    template Tensor<T> batch_norm(Tape&, const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,              \
                                  BatchNormStats<T>&, Mode, BatchNormOptions);                              \
    template Tensor<T> relu(Tape&, const Tensor<T>&);                                                       \
    template Tensor<T> sigmoid(Tape&, const Tensor<T>&);                                                    \
    template Tensor<T> dropout(Tape&, const Tensor<T>&, double, Rng&, Mode);                                \
    template Tensor<T> max_pool2d(Tape&, const Tensor<T>&, std::size_t);                                    \
    template Tensor<T> reshape(Tape&, const Tensor<T>&, Shape);                                             \
    template Tensor<T> flatten(Tape&, const Tensor<T>&);                                                    \
    template Tensor<T> dense(Tape&, const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);                  \
    template Tensor<T> upsample_nearest(Tape&, const Tensor<T>&, std::size_t);                              \
    template Tensor<T> crop_or_pad(Tape&, const Tensor<T>&, std::size_t, std::size_t);                      \
    template Tensor<T> add(Tape&, const Tensor<T>&, const Tensor<T>&);                                      \
    template Tensor<T> scale(Tape&, const Tensor<T>&, double);                                              \
    template Tensor<T> softmax(const Tensor<T>&);                                                           \
    template Tensor<T> softmax_cross_entropy(Tape&, const Tensor<T>&, const Tensor<T>&, std::span<const T>); \
    template Tensor<T> sse_loss(Tape&, const Tensor<T>&, const Tensor<T>&);                                 \
    template Tensor<T> kl_to_standard_normal(Tape&, const Tensor<T>&, const Tensor<T>&);                       \
    template Tensor<T> reparameterize(Tape&, const Tensor<T>&, const Tensor<T>&, Rng&);                     \
    template Tensor<T> one_hot(std::span<const std::size_t>, std::size_t);                                  \
    template Tensor<T> glorot_uniform(Shape, std::size_t, std::size_t, Rng&);

PULMO_INSTANTIATE_OPS(float)
PULMO_INSTANTIATE_OPS(double)

#undef PULMO_INSTANTIATE_OPS

}  // namespace pulmo::nn
