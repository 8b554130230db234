#include "vitgan/nn/functional.hpp"

#include <Eigen/Core>
#include <cmath>

#include "vitgan/error.hpp"
#include "vitgan/ops.hpp"

namespace vitgan::nn {

namespace {

template <typename T>
using MatR = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using ConstMap = Eigen::Map<const MatR<T>>;
template <typename T>
using MutMap = Eigen::Map<MatR<T>>;

struct ConvGeometry {
    std::size_t channels, h, w, kh, kw, stride, padding, oh, ow;
};

// Unfold one image [channels, h, w] into [channels * kh * kw, oh * ow].
template <typename T>
void im2col(const T* img, const ConvGeometry& g, T* col) {
    const std::size_t cols = g.oh * g.ow;
    for (std::size_t c = 0; c < g.channels; ++c) {
        for (std::size_t ki = 0; ki < g.kh; ++ki) {
            for (std::size_t kj = 0; kj < g.kw; ++kj) {
                T* row = col + ((c * g.kh + ki) * g.kw + kj) * cols;
                for (std::size_t oi = 0; oi < g.oh; ++oi) {
                    const std::ptrdiff_t ii = static_cast<std::ptrdiff_t>(oi * g.stride + ki) -
                                              static_cast<std::ptrdiff_t>(g.padding);
                    T* out = row + oi * g.ow;
                    if (ii < 0 || ii >= static_cast<std::ptrdiff_t>(g.h)) {
                        std::fill_n(out, g.ow, T{0});
                        continue;
                    }
                    const T* src = img + (c * g.h + static_cast<std::size_t>(ii)) * g.w;
                    for (std::size_t oj = 0; oj < g.ow; ++oj) {
                        const std::ptrdiff_t jj = static_cast<std::ptrdiff_t>(oj * g.stride + kj) -
                                                  static_cast<std::ptrdiff_t>(g.padding);
                        out[oj] = (jj < 0 || jj >= static_cast<std::ptrdiff_t>(g.w)) ? T{0}
                                                                                    : src[static_cast<std::size_t>(jj)];
                    }
                }
            }
        }
    }
}

// Inverse of im2col with accumulation into img.
template <typename T>
void col2im(const T* col, const ConvGeometry& g, T* img) {
    const std::size_t cols = g.oh * g.ow;
    for (std::size_t c = 0; c < g.channels; ++c) {
        for (std::size_t ki = 0; ki < g.kh; ++ki) {
            for (std::size_t kj = 0; kj < g.kw; ++kj) {
                const T* row = col + ((c * g.kh + ki) * g.kw + kj) * cols;
                for (std::size_t oi = 0; oi < g.oh; ++oi) {
                    const std::ptrdiff_t ii = static_cast<std::ptrdiff_t>(oi * g.stride + ki) -
                                              static_cast<std::ptrdiff_t>(g.padding);
                    if (ii < 0 || ii >= static_cast<std::ptrdiff_t>(g.h)) continue;
                    T* dst = img + (c * g.h + static_cast<std::size_t>(ii)) * g.w;
                    const T* in = row + oi * g.ow;
                    for (std::size_t oj = 0; oj < g.ow; ++oj) {
                        const std::ptrdiff_t jj = static_cast<std::ptrdiff_t>(oj * g.stride + kj) -
                                                  static_cast<std::ptrdiff_t>(g.padding);
                        if (jj < 0 || jj >= static_cast<std::ptrdiff_t>(g.w)) continue;
                        dst[static_cast<std::size_t>(jj)] += in[oj];
                    }
                }
            }
        }
    }
}

template <typename T>
void check_bias(const Tensor<T>& bias, std::size_t channels, const char* op) {
    if (bias.defined() && (bias.rank() != 1 || bias.size(0) != channels)) {
        throw DimensionError(std::string(op) + ": bias shape " + shape_str(bias.shape()) + " does not match " +
                             std::to_string(channels) + " output channels");
    }
}

}  // namespace

std::size_t conv_output_size(std::size_t in, std::size_t kernel, std::size_t stride, std::size_t padding) {
    if (stride == 0 || kernel == 0) throw ConfigError("convolution kernel and stride must be positive");
    const std::size_t padded = in + 2 * padding;
    if (padded < kernel) {
        throw ConfigError("kernel " + std::to_string(kernel) + " does not fit padded input " + std::to_string(padded));
    }
    if ((padded - kernel) % stride != 0) {
        throw ConfigError("non-integral convolution output: (" + std::to_string(in) + " + 2*" +
                          std::to_string(padding) + " - " + std::to_string(kernel) + ") / " + std::to_string(stride));
    }
    return (padded - kernel) / stride + 1;
}

std::size_t conv_transpose_output_size(std::size_t in, std::size_t kernel, std::size_t stride, std::size_t padding) {
    if (stride == 0 || kernel == 0 || in == 0) throw ConfigError("transposed convolution sizes must be positive");
    const std::size_t full = (in - 1) * stride + kernel;
    if (full <= 2 * padding) {
        throw ConfigError("transposed convolution output is empty for input " + std::to_string(in));
    }
    return full - 2 * padding;
}

template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias) {
    Tensor<T> y = matmul(x, weight);
    return bias.defined() ? add(y, bias) : y;
}

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias, std::size_t stride,
                 std::size_t padding) {
    if (x.rank() != 4 || weight.rank() != 4 || x.size(1) != weight.size(1)) {
        throw DimensionError("conv2d shape mismatch: input " + shape_str(x.shape()) + ", weight " +
                             shape_str(weight.shape()));
    }
    const std::size_t batch = x.size(0), c_out = weight.size(0);
    ConvGeometry g{x.size(1), x.size(2), x.size(3), weight.size(2), weight.size(3), stride, padding, 0, 0};
    g.oh = conv_output_size(g.h, g.kh, stride, padding);
    g.ow = conv_output_size(g.w, g.kw, stride, padding);
    check_bias(bias, c_out, "conv2d");

    const std::size_t ckk = g.channels * g.kh * g.kw;
    const std::size_t spatial = g.oh * g.ow;
    const std::size_t in_stride = g.channels * g.h * g.w;
    auto cols = std::make_shared<Buffer<T>>(batch * ckk * spatial);
    Buffer<T> out(batch * c_out * spatial);
    ConstMap<T> W(weight.data().data(), c_out, ckk);
    for (std::size_t n = 0; n < batch; ++n) {
        T* col = cols->data() + n * ckk * spatial;
        im2col(x.data().data() + n * in_stride, g, col);
        MutMap<T> Y(out.data() + n * c_out * spatial, c_out, spatial);
        Y.noalias() = W * ConstMap<T>(col, ckk, spatial);
        if (bias.defined()) {
            for (std::size_t c = 0; c < c_out; ++c) Y.row(c).array() += bias.data()[c];
        }
    }
    Tensor<T> result(Shape{batch, c_out, g.oh, g.ow}, std::move(out));
    return record_op<T>(result, {x, weight, bias}, [x, weight, bias, g, cols, batch, c_out, ckk, spatial,
                                                    in_stride](std::span<const T> grad) mutable {
        ConstMap<T> W(weight.data().data(), c_out, ckk);
        Buffer<T> dcol(x.requires_grad() ? ckk * spatial : 0);
        for (std::size_t n = 0; n < batch; ++n) {
            ConstMap<T> G(grad.data() + n * c_out * spatial, c_out, spatial);
            const T* col = cols->data() + n * ckk * spatial;
            if (weight.requires_grad()) {
                MutMap<T>(weight.grad_accumulator().data(), c_out, ckk).noalias() +=
                    G * ConstMap<T>(col, ckk, spatial).transpose();
            }
            if (bias.defined() && bias.requires_grad()) {
                auto gb = bias.grad_accumulator();
                for (std::size_t c = 0; c < c_out; ++c) gb[c] += G.row(c).sum();
            }
            if (x.requires_grad()) {
                MutMap<T>(dcol.data(), ckk, spatial).noalias() = W.transpose() * G;
                col2im(dcol.data(), g, x.grad_accumulator().data() + n * in_stride);
            }
        }
    });
}

template <typename T>
Tensor<T> conv_transpose2d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias, std::size_t stride,
                           std::size_t padding) {
    if (x.rank() != 4 || weight.rank() != 4 || x.size(1) != weight.size(0)) {
        throw DimensionError("conv_transpose2d shape mismatch: input " + shape_str(x.shape()) + ", weight " +
                             shape_str(weight.shape()));
    }
    const std::size_t batch = x.size(0), c_in = x.size(1), c_out = weight.size(1);
    const std::size_t h = x.size(2), w = x.size(3), kh = weight.size(2), kw = weight.size(3);
    const std::size_t oh = conv_transpose_output_size(h, kh, stride, padding);
    const std::size_t ow = conv_transpose_output_size(w, kw, stride, padding);
    check_bias(bias, c_out, "conv_transpose2d");

    // Geometry of the forward convolution this op is the adjoint of: it maps
    // [c_out, oh, ow] to [c_in, h, w].
    const ConvGeometry g{c_out, oh, ow, kh, kw, stride, padding, h, w};
    const std::size_t ckk = c_out * kh * kw;
    const std::size_t in_spatial = h * w;
    const std::size_t out_spatial = oh * ow;

    Buffer<T> out(batch * c_out * out_spatial, T{0});
    Buffer<T> cols(ckk * in_spatial);
    ConstMap<T> W(weight.data().data(), c_in, ckk);
    for (std::size_t n = 0; n < batch; ++n) {
        MutMap<T>(cols.data(), ckk, in_spatial).noalias() =
            W.transpose() * ConstMap<T>(x.data().data() + n * c_in * in_spatial, c_in, in_spatial);
        T* y = out.data() + n * c_out * out_spatial;
        col2im(cols.data(), g, y);
        if (bias.defined()) {
            for (std::size_t c = 0; c < c_out; ++c) {
                for (std::size_t i = 0; i < out_spatial; ++i) y[c * out_spatial + i] += bias.data()[c];
            }
        }
    }
    Tensor<T> result(Shape{batch, c_out, oh, ow}, std::move(out));
    return record_op<T>(result, {x, weight, bias}, [x, weight, bias, g, batch, c_in, c_out, ckk, in_spatial,
                                                    out_spatial](std::span<const T> grad) mutable {
        ConstMap<T> W(weight.data().data(), c_in, ckk);
        Buffer<T> dcols(ckk * in_spatial);
        for (std::size_t n = 0; n < batch; ++n) {
            const T* gy = grad.data() + n * c_out * out_spatial;
            im2col(gy, g, dcols.data());
            ConstMap<T> D(dcols.data(), ckk, in_spatial);
            if (x.requires_grad()) {
                MutMap<T>(x.grad_accumulator().data() + n * c_in * in_spatial, c_in, in_spatial).noalias() += W * D;
            }
            if (weight.requires_grad()) {
                MutMap<T>(weight.grad_accumulator().data(), c_in, ckk).noalias() +=
                    ConstMap<T>(x.data().data() + n * c_in * in_spatial, c_in, in_spatial) * D.transpose();
            }
            if (bias.defined() && bias.requires_grad()) {
                auto gb = bias.grad_accumulator();
                for (std::size_t c = 0; c < c_out; ++c) {
                    T s = 0;
                    for (std::size_t i = 0; i < out_spatial; ++i) s += gy[c * out_spatial + i];
                    gb[c] += s;
                }
            }
        }
    });
}

template <typename T>
Tensor<T> batch_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, Tensor<T> running_mean,
                     Tensor<T> running_var, const BatchNormOptions& options) {
    if (x.rank() < 2) throw DimensionError("batch_norm expects [b, c, ...], got " + shape_str(x.shape()));
    const std::size_t batch = x.size(0), channels = x.size(1);
    for (const Tensor<T>* t : std::initializer_list<const Tensor<T>*>{&gamma, &beta, &running_mean, &running_var}) {
        if (t->rank() != 1 || t->size(0) != channels) {
            throw DimensionError("batch_norm parameter shape " + shape_str(t->shape()) + " does not match " +
                                 std::to_string(channels) + " channels");
        }
    }
    if (options.training && batch < 2) {
        throw ContractError("batch_norm in training mode needs batch size >= 2, got " + std::to_string(batch));
    }
    const std::size_t inner = x.numel() / (batch * channels);
    const std::size_t count = batch * inner;
    const auto xd = x.data();

    Buffer<T> inv_std(channels);
    Buffer<T> x_hat(xd.size());
    Buffer<T> out(xd.size());
    auto rm = running_mean.mutable_data();
    auto rv = running_var.mutable_data();
    for (std::size_t c = 0; c < channels; ++c) {
        double mu, var;
        if (options.training) {
            double s = 0;
            for (std::size_t n = 0; n < batch; ++n) {
                const T* p = xd.data() + (n * channels + c) * inner;
                for (std::size_t i = 0; i < inner; ++i) s += p[i];
            }
            mu = s / static_cast<double>(count);
            double ss = 0;
            for (std::size_t n = 0; n < batch; ++n) {
                const T* p = xd.data() + (n * channels + c) * inner;
                for (std::size_t i = 0; i < inner; ++i) ss += (p[i] - mu) * (p[i] - mu);
            }
            var = ss / static_cast<double>(count);
            const double m = options.momentum;
            rm[c] = static_cast<T>((1.0 - m) * rm[c] + m * mu);
            rv[c] = static_cast<T>((1.0 - m) * rv[c] + m * var * static_cast<double>(count) /
                                                           static_cast<double>(count - 1));
        } else {
            mu = rm[c];
            var = rv[c];
        }
        const double inv = 1.0 / std::sqrt(var + options.eps);
        inv_std[c] = static_cast<T>(inv);
        const T gm = gamma.data()[c], bt = beta.data()[c];
        for (std::size_t n = 0; n < batch; ++n) {
            const std::size_t base = (n * channels + c) * inner;
            for (std::size_t i = 0; i < inner; ++i) {
                const T xh = static_cast<T>((xd[base + i] - mu) * inv);
                x_hat[base + i] = xh;
                out[base + i] = gm * xh + bt;
            }
        }
    }
    Tensor<T> result(x.shape(), std::move(out));
    const bool training = options.training;
    return record_op<T>(result, {x, gamma, beta}, [x, gamma, beta, x_hat = std::move(x_hat),
                                                   inv_std = std::move(inv_std), batch, channels, inner, count,
                                                   training](std::span<const T> g) mutable {
        T* gx = x.requires_grad() ? x.grad_accumulator().data() : nullptr;
        T* gg = gamma.requires_grad() ? gamma.grad_accumulator().data() : nullptr;
        T* gb = beta.requires_grad() ? beta.grad_accumulator().data() : nullptr;
        for (std::size_t c = 0; c < channels; ++c) {
            double sum_g = 0, sum_gx = 0;
            for (std::size_t n = 0; n < batch; ++n) {
                const std::size_t base = (n * channels + c) * inner;
                for (std::size_t i = 0; i < inner; ++i) {
                    sum_g += g[base + i];
                    sum_gx += g[base + i] * x_hat[base + i];
                }
            }
            if (gg) gg[c] += static_cast<T>(sum_gx);
            if (gb) gb[c] += static_cast<T>(sum_g);
            if (!gx) continue;
            const double k = static_cast<double>(gamma.data()[c]) * inv_std[c];
            const double nf = static_cast<double>(count);
            for (std::size_t n = 0; n < batch; ++n) {
                const std::size_t base = (n * channels + c) * inner;
                for (std::size_t i = 0; i < inner; ++i) {
                    const std::size_t j = base + i;
                    if (training) {
                        gx[j] += static_cast<T>(k * (g[j] - sum_g / nf - x_hat[j] * sum_gx / nf));
                    } else {
                        gx[j] += static_cast<T>(k * g[j]);
                    }
                }
            }
        }
    });
}

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, double eps) {
    const std::size_t d = x.size(-1);
    if (gamma.rank() != 1 || gamma.size(0) != d || beta.rank() != 1 || beta.size(0) != d) {
        throw DimensionError("layer_norm parameters do not match last axis of " + shape_str(x.shape()));
    }
    const std::size_t rows = x.numel() / d;
    const auto xd = x.data();
    Buffer<T> x_hat(xd.size()), out(xd.size()), inv_std(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        const T* p = xd.data() + r * d;
        double s = 0;
        for (std::size_t i = 0; i < d; ++i) s += p[i];
        const double mu = s / static_cast<double>(d);
        double ss = 0;
        for (std::size_t i = 0; i < d; ++i) ss += (p[i] - mu) * (p[i] - mu);
        const double inv = 1.0 / std::sqrt(ss / static_cast<double>(d) + eps);
        inv_std[r] = static_cast<T>(inv);
        for (std::size_t i = 0; i < d; ++i) {
            const T xh = static_cast<T>((p[i] - mu) * inv);
            x_hat[r * d + i] = xh;
            out[r * d + i] = gamma.data()[i] * xh + beta.data()[i];
        }
    }
    Tensor<T> result(x.shape(), std::move(out));
    return record_op<T>(result, {x, gamma, beta}, [x, gamma, beta, x_hat = std::move(x_hat),
                                                   inv_std = std::move(inv_std), rows, d](std::span<const T> g) mutable {
        T* gx = x.requires_grad() ? x.grad_accumulator().data() : nullptr;
        T* gg = gamma.requires_grad() ? gamma.grad_accumulator().data() : nullptr;
        T* gb = beta.requires_grad() ? beta.grad_accumulator().data() : nullptr;
        const auto gm = gamma.data();
        const double df = static_cast<double>(d);
        for (std::size_t r = 0; r < rows; ++r) {
            const T* gr = g.data() + r * d;
            const T* xh = x_hat.data() + r * d;
            double sum_dxh = 0, sum_dxh_xh = 0;
            for (std::size_t i = 0; i < d; ++i) {
                const double dxh = static_cast<double>(gr[i]) * gm[i];
                sum_dxh += dxh;
                sum_dxh_xh += dxh * xh[i];
                if (gg) gg[i] += gr[i] * xh[i];
                if (gb) gb[i] += gr[i];
            }
            if (!gx) continue;
            for (std::size_t i = 0; i < d; ++i) {
                const double dxh = static_cast<double>(gr[i]) * gm[i];
                gx[r * d + i] += static_cast<T>(inv_std[r] * (dxh - sum_dxh / df - xh[i] * sum_dxh_xh / df));
            }
        }
    });
}

template <typename T>
Tensor<T> embedding(const Tensor<T>& table, const std::vector<std::size_t>& indices, const Shape& index_shape) {
    if (table.rank() != 2) throw DimensionError("embedding table must be [n, d], got " + shape_str(table.shape()));
    if (shape_numel(index_shape) != indices.size()) {
        throw DimensionError("index shape " + shape_str(index_shape) + " does not match " +
                             std::to_string(indices.size()) + " indices");
    }
    const std::size_t n = table.size(0), d = table.size(1);
    Buffer<T> out(indices.size() * d);
    const auto td = table.data();
    for (std::size_t i = 0; i < indices.size(); ++i) {
        if (indices[i] >= n) {
            throw BoundsError("embedding index " + std::to_string(indices[i]) + " out of range for table of " +
                              std::to_string(n) + " rows");
        }
        std::copy_n(td.begin() + static_cast<std::ptrdiff_t>(indices[i] * d), d,
                    out.begin() + static_cast<std::ptrdiff_t>(i * d));
    }
    Shape out_shape = index_shape;
    out_shape.push_back(d);
    Tensor<T> result(out_shape, std::move(out));
    return record_op<T>(result, {table}, [table, indices, d](std::span<const T> g) mutable {
        if (!table.requires_grad()) return;
        auto gt = table.grad_accumulator();
        for (std::size_t i = 0; i < indices.size(); ++i) {
            for (std::size_t j = 0; j < d; ++j) gt[indices[i] * d + j] += g[i * d + j];
        }
    });
}

template <typename T>
Tensor<T> attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v, Tensor<T>* weights) {
    const bool ranks_ok = q.rank() >= 2 && q.rank() == k.rank() && k.rank() == v.rank();
    bool ok = ranks_ok;
    if (ok) {
        for (std::size_t i = 0; i + 2 < q.rank(); ++i) {
            ok = ok && q.shape()[i] == k.shape()[i] && k.shape()[i] == v.shape()[i];
        }
        ok = ok && q.size(-1) == k.size(-1) && k.size(-2) == v.size(-2);
    }
    if (!ok) {
        throw DimensionError("attention shape mismatch: Q " + shape_str(q.shape()) + ", K " + shape_str(k.shape()) +
                             ", V " + shape_str(v.shape()));
    }
    const T inv_sqrt_dk = T{1} / std::sqrt(static_cast<T>(q.size(-1)));
    Tensor<T> scores = scale(matmul(q, transpose(k, -1, -2)), inv_sqrt_dk);
    Tensor<T> w = softmax(scores, -1);
    if (weights != nullptr) *weights = w;
    return matmul(w, v);
}

#define VITGAN_INSTANTIATE_FUNCTIONAL(T)                                                                         \
    template Tensor<T> linear(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);                             \
    template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, std::size_t, std::size_t);   \
    template Tensor<T> conv_transpose2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, std::size_t,       \
                                        std::size_t);                                                            \
    template Tensor<T> batch_norm(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, Tensor<T>, Tensor<T>,    \
                                  const BatchNormOptions&);                                                      \
    template Tensor<T> layer_norm(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, double);                 \
    template Tensor<T> embedding(const Tensor<T>&, const std::vector<std::size_t>&, const Shape&);               \
    template Tensor<T> attention(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, Tensor<T>*);

VITGAN_INSTANTIATE_FUNCTIONAL(float)
VITGAN_INSTANTIATE_FUNCTIONAL(double)

}  // namespace vitgan::nn
