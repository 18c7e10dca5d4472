#pragma once

// Forward and reverse-mode kernels for the operator set used by the
// training/unlearning pipeline. Every reduction runs in a fixed order
// (ascending flat index of the reduced axes) so results are bit-stable.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "okp/tensor.hpp"

namespace okp::ops {

namespace detail {

inline void require(bool ok, const std::string& message)
{
    if (!ok) {
        throw ShapeError(message);
    }
}

inline std::size_t pooled_extent(std::size_t in, std::size_t window, std::size_t stride, std::size_t pad)
{
    return (in + 2 * pad - window) / stride + 1;
}

} // namespace detail

struct Conv2dGeometry {
    std::size_t batch, in_channels, in_h, in_w;
    std::size_t out_channels, kernel, stride, pad;
    std::size_t out_h, out_w;
};

template <typename T>
Conv2dGeometry conv2d_geometry(const BasicTensor<T>& input, const BasicTensor<T>& weights, const BasicTensor<T>& bias,
                               std::size_t stride, std::size_t pad)
{
    using detail::require;
    require(input.rank() == 4, "conv2d: input must be 4-D [N,C_in,H,W], got " + shape_to_string(input.shape()));
    require(weights.rank() == 4,
            "conv2d: weights must be 4-D [C_out,C_in,k,k], got " + shape_to_string(weights.shape()));
    require(stride >= 1, "conv2d: stride must be >= 1");
    const auto& is = input.shape();
    const auto& ws = weights.shape();
    require(ws[2] == ws[3], "conv2d: kernel must be square, got k_h=" + std::to_string(ws[2])
                                + " k_w=" + std::to_string(ws[3]));
    require(ws[1] == is[1], "conv2d: C_in mismatch, weights C_in=" + std::to_string(ws[1])
                                + " input C_in=" + std::to_string(is[1]));
    require(bias.rank() == 1 && bias.extent(0) == ws[0],
            "conv2d: bias must be [C_out=" + std::to_string(ws[0]) + "], got " + shape_to_string(bias.shape()));
    const std::size_t k = ws[2];
    require(k <= is[2] + 2 * pad, "conv2d: kernel " + std::to_string(k) + " exceeds padded H="
                                      + std::to_string(is[2] + 2 * pad));
    require(k <= is[3] + 2 * pad, "conv2d: kernel " + std::to_string(k) + " exceeds padded W="
                                      + std::to_string(is[3] + 2 * pad));
    return {is[0], is[1], is[2], is[3], ws[0], k, stride, pad,
            detail::pooled_extent(is[2], k, stride, pad), detail::pooled_extent(is[3], k, stride, pad)};
}

/// Valid output column range [lo, hi) for kernel offset `kx`: columns whose input
/// coordinate ox*stride + kx - pad falls inside [0, in).
inline std::pair<std::size_t, std::size_t> valid_range(std::size_t out, std::size_t in, std::size_t offset,
                                                       std::size_t stride, std::size_t pad)
{
    // ox*stride + offset >= pad  and  ox*stride + offset < in + pad
    std::size_t lo = 0;
    if (offset < pad) {
        lo = (pad - offset + stride - 1) / stride;
    }
    std::size_t hi = 0;
    if (in + pad > offset) {
        hi = (in + pad - offset - 1) / stride + 1;
    }
    return {std::min(lo, out), std::min(hi, out)};
}

template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& input, const BasicTensor<T>& weights, const BasicTensor<T>& bias,
                      std::size_t stride, std::size_t pad)
{
    const auto g = conv2d_geometry(input, weights, bias, stride, pad);
    BasicTensor<T> out({g.batch, g.out_channels, g.out_h, g.out_w});
    const std::size_t in_plane = g.in_h * g.in_w;
    const std::size_t out_plane = g.out_h * g.out_w;
    const std::size_t kk = g.kernel * g.kernel;
    const T* in = input.data().data();
    const T* w = weights.data().data();
    T* o = out.data().data();
    // Products accumulate in double and round once into the output.
    std::vector<double> acc(out_plane);

    for (std::size_t n = 0; n < g.batch; ++n) {
        for (std::size_t co = 0; co < g.out_channels; ++co) {
            double* oplane = acc.data();
            std::fill(oplane, oplane + out_plane, static_cast<double>(bias[co]));
            for (std::size_t ci = 0; ci < g.in_channels; ++ci) {
                const T* iplane = in + (n * g.in_channels + ci) * in_plane;
                const T* wk = w + (co * g.in_channels + ci) * kk;
                for (std::size_t ky = 0; ky < g.kernel; ++ky) {
                    const auto [oy_lo, oy_hi] = valid_range(g.out_h, g.in_h, ky, g.stride, g.pad);
                    for (std::size_t kx = 0; kx < g.kernel; ++kx) {
                        const auto [ox_lo, ox_hi] = valid_range(g.out_w, g.in_w, kx, g.stride, g.pad);
                        const double wv = wk[ky * g.kernel + kx];
                        for (std::size_t oy = oy_lo; oy < oy_hi; ++oy) {
                            const T* irow = iplane + (oy * g.stride + ky - g.pad) * g.in_w;
                            double* orow = oplane + oy * g.out_w;
                            for (std::size_t ox = ox_lo; ox < ox_hi; ++ox) {
                                orow[ox] += wv * static_cast<double>(irow[ox * g.stride + kx - g.pad]);
                            }
                        }
                    }
                }
            }
            T* dst = o + (n * g.out_channels + co) * out_plane;
            for (std::size_t i = 0; i < out_plane; ++i) {
                dst[i] = static_cast<T>(oplane[i]);
            }
        }
    }
    return out;
}

template <typename T>
struct Conv2dGrads {
    BasicTensor<T> input;
    BasicTensor<T> weights;
    BasicTensor<T> bias;
};

template <typename T>
Conv2dGrads<T> conv2d_backward(const BasicTensor<T>& input, const BasicTensor<T>& weights,
                               const BasicTensor<T>& bias, const BasicTensor<T>& grad_out, std::size_t stride,
                               std::size_t pad)
{
    const auto g = conv2d_geometry(input, weights, bias, stride, pad);
    detail::require(grad_out.shape() == Shape{g.batch, g.out_channels, g.out_h, g.out_w},
                    "conv2d_backward: grad_out shape " + shape_to_string(grad_out.shape())
                        + " does not match forward output");
    Conv2dGrads<T> grads{BasicTensor<T>(input.shape()), BasicTensor<T>(weights.shape()),
                         BasicTensor<T>(bias.shape())};
    const std::size_t in_plane = g.in_h * g.in_w;
    const std::size_t out_plane = g.out_h * g.out_w;
    const std::size_t kk = g.kernel * g.kernel;
    const T* in = input.data().data();
    const T* w = weights.data().data();
    const T* go = grad_out.data().data();
    T* gi = grads.input.data().data();
    T* gw = grads.weights.data().data();

    for (std::size_t n = 0; n < g.batch; ++n) {
        for (std::size_t co = 0; co < g.out_channels; ++co) {
            const T* gplane = go + (n * g.out_channels + co) * out_plane;
            T bsum = T{0};
            for (std::size_t p = 0; p < out_plane; ++p) {
                bsum += gplane[p];
            }
            grads.bias[co] += bsum;
            for (std::size_t ci = 0; ci < g.in_channels; ++ci) {
                const T* iplane = in + (n * g.in_channels + ci) * in_plane;
                T* giplane = gi + (n * g.in_channels + ci) * in_plane;
                const T* wk = w + (co * g.in_channels + ci) * kk;
                T* gwk = gw + (co * g.in_channels + ci) * kk;
                for (std::size_t ky = 0; ky < g.kernel; ++ky) {
                    const auto [oy_lo, oy_hi] = valid_range(g.out_h, g.in_h, ky, g.stride, g.pad);
                    for (std::size_t kx = 0; kx < g.kernel; ++kx) {
                        const auto [ox_lo, ox_hi] = valid_range(g.out_w, g.in_w, kx, g.stride, g.pad);
                        const T wv = wk[ky * g.kernel + kx];
                        T wsum = T{0};
                        for (std::size_t oy = oy_lo; oy < oy_hi; ++oy) {
                            const std::size_t row = (oy * g.stride + ky - g.pad) * g.in_w;
                            const T* irow = iplane + row;
                            T* girow = giplane + row;
                            const T* grow = gplane + oy * g.out_w;
                            for (std::size_t ox = ox_lo; ox < ox_hi; ++ox) {
                                const std::size_t ix = ox * g.stride + kx - g.pad;
                                wsum += grow[ox] * irow[ix];
                                girow[ix] += grow[ox] * wv;
                            }
                        }
                        gwk[ky * g.kernel + kx] += wsum;
                    }
                }
            }
        }
    }
    return grads;
}

template <typename T>
BasicTensor<T> relu(const BasicTensor<T>& input)
{
    BasicTensor<T> out(input.shape());
    for (std::size_t i = 0; i < input.size(); ++i) {
        out[i] = input[i] > T{0} ? input[i] : T{0};
    }
    return out;
}

/// Subgradient 0 at x == 0.
template <typename T>
BasicTensor<T> relu_backward(const BasicTensor<T>& input, const BasicTensor<T>& grad_out)
{
    detail::require(input.shape() == grad_out.shape(), "relu_backward: grad_out shape mismatch");
    BasicTensor<T> out(input.shape());
    for (std::size_t i = 0; i < input.size(); ++i) {
        out[i] = input[i] > T{0} ? grad_out[i] : T{0};
    }
    return out;
}

struct PoolGeometry {
    std::size_t batch, channels, in_h, in_w, window, stride, out_h, out_w;
};

template <typename T>
PoolGeometry maxpool2d_geometry(const BasicTensor<T>& input, std::size_t window, std::size_t stride)
{
    using detail::require;
    require(input.rank() == 4, "maxpool2d: input must be 4-D [N,C,H,W], got " + shape_to_string(input.shape()));
    require(window >= 1 && stride >= 1, "maxpool2d: window and stride must be >= 1");
    const auto& s = input.shape();
    require(window <= s[2], "maxpool2d: window " + std::to_string(window) + " exceeds H=" + std::to_string(s[2]));
    require(window <= s[3], "maxpool2d: window " + std::to_string(window) + " exceeds W=" + std::to_string(s[3]));
    return {s[0], s[1], s[2], s[3], window, stride, detail::pooled_extent(s[2], window, stride, 0),
            detail::pooled_extent(s[3], window, stride, 0)};
}

template <typename T>
BasicTensor<T> maxpool2d(const BasicTensor<T>& input, std::size_t window, std::size_t stride)
{
    const auto g = maxpool2d_geometry(input, window, stride);
    BasicTensor<T> out({g.batch, g.channels, g.out_h, g.out_w});
    std::size_t o = 0;
    for (std::size_t plane = 0; plane < g.batch * g.channels; ++plane) {
        const T* ip = input.data().data() + plane * g.in_h * g.in_w;
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
            for (std::size_t ox = 0; ox < g.out_w; ++ox) {
                T best = -std::numeric_limits<T>::infinity();
                for (std::size_t wy = 0; wy < g.window; ++wy) {
                    const T* row = ip + (oy * g.stride + wy) * g.in_w + ox * g.stride;
                    for (std::size_t wx = 0; wx < g.window; ++wx) {
                        best = std::max(best, row[wx]);
                    }
                }
                out[o++] = best;
            }
        }
    }
    return out;
}

/// Routes each output gradient to the first (row-major) maximal element of its window.
template <typename T>
BasicTensor<T> maxpool2d_backward(const BasicTensor<T>& input, const BasicTensor<T>& grad_out, std::size_t window,
                                  std::size_t stride)
{
    const auto g = maxpool2d_geometry(input, window, stride);
    detail::require(grad_out.shape() == Shape{g.batch, g.channels, g.out_h, g.out_w},
                    "maxpool2d_backward: grad_out shape mismatch");
    BasicTensor<T> grad_in(input.shape());
    std::size_t o = 0;
    for (std::size_t plane = 0; plane < g.batch * g.channels; ++plane) {
        const std::size_t base = plane * g.in_h * g.in_w;
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
            for (std::size_t ox = 0; ox < g.out_w; ++ox) {
                std::size_t best_at = base + (oy * g.stride) * g.in_w + ox * g.stride;
                for (std::size_t wy = 0; wy < g.window; ++wy) {
                    for (std::size_t wx = 0; wx < g.window; ++wx) {
                        const std::size_t at = base + (oy * g.stride + wy) * g.in_w + ox * g.stride + wx;
                        if (input[at] > input[best_at]) {
                            best_at = at;
                        }
                    }
                }
                grad_in[best_at] += grad_out[o++];
            }
        }
    }
    return grad_in;
}

template <typename T>
BasicTensor<T> dense(const BasicTensor<T>& input, const BasicTensor<T>& weights, const BasicTensor<T>& bias)
{
    using detail::require;
    require(input.rank() == 2, "dense: input must be 2-D [N,F], got " + shape_to_string(input.shape()));
    require(weights.rank() == 2, "dense: weights must be 2-D [O,F], got " + shape_to_string(weights.shape()));
    const std::size_t n = input.extent(0);
    const std::size_t f = input.extent(1);
    const std::size_t o = weights.extent(0);
    require(weights.extent(1) == f, "dense: inner dimension mismatch, input F=" + std::to_string(f)
                                        + " weights F=" + std::to_string(weights.extent(1)));
    require(bias.rank() == 1 && bias.extent(0) == o, "dense: bias must be [O=" + std::to_string(o) + "]");
    BasicTensor<T> out({n, o});
    for (std::size_t i = 0; i < n; ++i) {
        const T* x = input.data().data() + i * f;
        for (std::size_t j = 0; j < o; ++j) {
            const T* wr = weights.data().data() + j * f;
            double acc = bias[j];
            for (std::size_t k = 0; k < f; ++k) {
                acc += static_cast<double>(wr[k]) * static_cast<double>(x[k]);
            }
            out[i * o + j] = static_cast<T>(acc);
        }
    }
    return out;
}

template <typename T>
struct DenseGrads {
    BasicTensor<T> input;
    BasicTensor<T> weights;
    BasicTensor<T> bias;
};

template <typename T>
DenseGrads<T> dense_backward(const BasicTensor<T>& input, const BasicTensor<T>& weights,
                             const BasicTensor<T>& grad_out)
{
    const std::size_t n = input.extent(0);
    const std::size_t f = input.extent(1);
    const std::size_t o = weights.extent(0);
    detail::require(grad_out.shape() == Shape{n, o}, "dense_backward: grad_out shape mismatch");
    DenseGrads<T> grads{BasicTensor<T>(input.shape()), BasicTensor<T>(weights.shape()), BasicTensor<T>({o})};
    for (std::size_t i = 0; i < n; ++i) {
        const T* x = input.data().data() + i * f;
        T* gx = grads.input.data().data() + i * f;
        for (std::size_t j = 0; j < o; ++j) {
            const T gy = grad_out[i * o + j];
            const T* wr = weights.data().data() + j * f;
            T* gwr = grads.weights.data().data() + j * f;
            grads.bias[j] += gy;
            for (std::size_t k = 0; k < f; ++k) {
                gwr[k] += gy * x[k];
                gx[k] += gy * wr[k];
            }
        }
    }
    return grads;
}

template <typename T>
struct SoftmaxCrossEntropy {
    T loss;
    BasicTensor<T> probabilities;
};

template <typename T>
SoftmaxCrossEntropy<T> softmax_cross_entropy(const BasicTensor<T>& logits, std::span<const int> labels)
{
    using detail::require;
    require(logits.rank() == 2, "softmax_cross_entropy: logits must be 2-D [N,C]");
    const std::size_t n = logits.extent(0);
    const std::size_t c = logits.extent(1);
    require(labels.size() == n, "softmax_cross_entropy: " + std::to_string(labels.size()) + " labels for "
                                    + std::to_string(n) + " rows");
    for (std::size_t i = 0; i < n; ++i) {
        if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= c) {
            throw ConfigError("softmax_cross_entropy: label " + std::to_string(labels[i]) + " at row "
                              + std::to_string(i) + " outside [0," + std::to_string(c) + ")");
        }
    }
    SoftmaxCrossEntropy<T> result{T{0}, BasicTensor<T>(logits.shape())};
    T total = T{0};
    for (std::size_t i = 0; i < n; ++i) {
        const T* z = logits.data().data() + i * c;
        T* p = result.probabilities.data().data() + i * c;
        const T zmax = *std::max_element(z, z + c);
        T sum = T{0};
        for (std::size_t j = 0; j < c; ++j) {
            p[j] = std::exp(z[j] - zmax);
            sum += p[j];
        }
        for (std::size_t j = 0; j < c; ++j) {
            p[j] /= sum;
        }
        const auto y = static_cast<std::size_t>(labels[i]);
        total += -(z[y] - zmax - std::log(sum));
    }
    result.loss = total / static_cast<T>(n);
    return result;
}

/// d(mean CE)/d(logits) = (p - onehot) / N.
template <typename T>
BasicTensor<T> softmax_cross_entropy_backward(const BasicTensor<T>& probabilities, std::span<const int> labels)
{
    const std::size_t n = probabilities.extent(0);
    const std::size_t c = probabilities.extent(1);
    BasicTensor<T> grad(probabilities.shape());
    const T scale = T{1} / static_cast<T>(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < c; ++j) {
            const T onehot = static_cast<std::size_t>(labels[i]) == j ? T{1} : T{0};
            grad[i * c + j] = (probabilities[i * c + j] - onehot) * scale;
        }
    }
    return grad;
}

} // namespace okp::ops
