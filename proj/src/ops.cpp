#include "vitgan/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <numbers>

#include "vitgan/error.hpp"

namespace vitgan {

namespace {

template <typename T>
using MatR = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using ConstMap = Eigen::Map<const MatR<T>>;
template <typename T>
using MutMap = Eigen::Map<MatR<T>>;

// Index plan for a broadcasting binary op. `same` and `tile_*` avoid the
// odometer for the common elementwise and bias-add layouts.
struct BroadcastPlan {
    enum class Kind { same, tile_b, tile_a, general };
    Kind kind = Kind::general;
    Shape out;
    std::size_t na = 1, nb = 1;
    std::vector<std::size_t> sa, sb;
};

Shape strip_leading_ones(const Shape& s) {
    std::size_t i = 0;
    while (i < s.size() && s[i] == 1) ++i;
    return Shape(s.begin() + static_cast<std::ptrdiff_t>(i), s.end());
}

bool is_suffix(const Shape& small, const Shape& big) {
    const Shape s = strip_leading_ones(small);
    if (s.size() > big.size()) return false;
    return std::equal(s.begin(), s.end(), big.end() - static_cast<std::ptrdiff_t>(s.size()));
}

BroadcastPlan make_plan(const Shape& a, const Shape& b) {
    BroadcastPlan p;
    p.out = broadcast_shape(a, b);
    p.na = shape_numel(a);
    p.nb = shape_numel(b);
    if (a == b) {
        p.kind = BroadcastPlan::Kind::same;
        return p;
    }
    if (a == p.out && is_suffix(b, a)) {
        p.kind = BroadcastPlan::Kind::tile_b;
        return p;
    }
    if (b == p.out && is_suffix(a, b)) {
        p.kind = BroadcastPlan::Kind::tile_a;
        return p;
    }
    const std::size_t r = p.out.size();
    p.sa.assign(r, 0);
    p.sb.assign(r, 0);
    auto fill = [&](const Shape& s, std::vector<std::size_t>& strides) {
        std::size_t stride = 1;
        for (std::size_t i = 0; i < s.size(); ++i) {
            const std::size_t axis = s.size() - 1 - i;
            const std::size_t out_axis = r - 1 - i;
            strides[out_axis] = s[axis] == 1 ? 0 : stride;
            stride *= s[axis];
        }
    };
    fill(a, p.sa);
    fill(b, p.sb);
    return p;
}

template <typename F>
void visit(const BroadcastPlan& p, F&& f) {
    const std::size_t n = shape_numel(p.out);
    switch (p.kind) {
        case BroadcastPlan::Kind::same:
            for (std::size_t o = 0; o < n; ++o) f(o, o, o);
            return;
        case BroadcastPlan::Kind::tile_b:
            for (std::size_t o = 0; o < n; ++o) f(o, o, o % p.nb);
            return;
        case BroadcastPlan::Kind::tile_a:
            for (std::size_t o = 0; o < n; ++o) f(o, o % p.na, o);
            return;
        case BroadcastPlan::Kind::general:
            break;
    }
    const std::size_t r = p.out.size();
    std::vector<std::size_t> idx(r, 0);
    std::size_t ia = 0, ib = 0;
    for (std::size_t o = 0; o < n; ++o) {
        f(o, ia, ib);
        for (std::size_t d = r; d-- > 0;) {
            if (++idx[d] < p.out[d]) {
                ia += p.sa[d];
                ib += p.sb[d];
                break;
            }
            ia -= p.sa[d] * (p.out[d] - 1);
            ib -= p.sb[d] * (p.out[d] - 1);
            idx[d] = 0;
        }
    }
}

template <typename T, typename Fwd, typename GradA, typename GradB>
Tensor<T> binary_op(const Tensor<T>& a, const Tensor<T>& b, Fwd fwd, GradA grad_a, GradB grad_b) {
    const BroadcastPlan plan = make_plan(a.shape(), b.shape());
    Buffer<T> out(shape_numel(plan.out));
    const auto ad = a.data();
    const auto bd = b.data();
    visit(plan, [&](std::size_t o, std::size_t ia, std::size_t ib) { out[o] = fwd(ad[ia], bd[ib]); });
    Tensor<T> result(plan.out, std::move(out));
    return record_op<T>(result, {a, b}, [a, b, plan, grad_a, grad_b](std::span<const T> g) mutable {
        const auto ad = a.data();
        const auto bd = b.data();
        if (a.requires_grad()) {
            auto ga = a.grad_accumulator();
            visit(plan, [&](std::size_t o, std::size_t ia, std::size_t ib) { ga[ia] += grad_a(ad[ia], bd[ib], g[o]); });
        }
        if (b.requires_grad()) {
            auto gb = b.grad_accumulator();
            visit(plan, [&](std::size_t o, std::size_t ia, std::size_t ib) { gb[ib] += grad_b(ad[ia], bd[ib], g[o]); });
        }
    });
}

// `grad(x, y, g)` receives input x, output y and upstream g.
template <typename T, typename Fwd, typename Grad>
Tensor<T> unary_op(const Tensor<T>& x, Fwd fwd, Grad grad) {
    const auto xd = x.data();
    Buffer<T> out(xd.size());
    for (std::size_t i = 0; i < xd.size(); ++i) out[i] = fwd(xd[i]);
    Tensor<T> result(x.shape(), std::move(out));
    return record_op<T>(result, {x}, [x, result, grad](std::span<const T> g) mutable {
        if (!x.requires_grad()) return;
        auto gx = x.grad_accumulator();
        const auto xd = x.data();
        const auto yd = result.data();
        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += grad(xd[i], yd[i], g[i]);
    });
}

std::vector<std::size_t> row_major_strides(const Shape& s) {
    std::vector<std::size_t> strides(s.size(), 1);
    for (std::size_t i = s.size(); i-- > 1;) strides[i - 1] = strides[i] * s[i];
    return strides;
}

template <typename T>
Buffer<T> permute_copy(std::span<const T> src, const Shape& in_shape, const std::vector<std::size_t>& axes) {
    const std::size_t r = in_shape.size();
    const auto in_strides = row_major_strides(in_shape);
    Shape out_shape(r);
    std::vector<std::size_t> step(r);
    for (std::size_t i = 0; i < r; ++i) {
        out_shape[i] = in_shape[axes[i]];
        step[i] = in_strides[axes[i]];
    }
    Buffer<T> out(src.size());
    std::vector<std::size_t> idx(r, 0);
    std::size_t off = 0;
    for (std::size_t o = 0; o < out.size(); ++o) {
        out[o] = src[off];
        for (std::size_t d = r; d-- > 0;) {
            if (++idx[d] < out_shape[d]) {
                off += step[d];
                break;
            }
            off -= step[d] * (out_shape[d] - 1);
            idx[d] = 0;
        }
    }
    return out;
}

}  // namespace

std::size_t normalize_axis(int axis, std::size_t rank) {
    const int r = static_cast<int>(rank);
    const int a = axis < 0 ? axis + r : axis;
    if (a < 0 || a >= r) {
        throw DimensionError("axis " + std::to_string(axis) + " is invalid for rank " + std::to_string(rank));
    }
    return static_cast<std::size_t>(a);
}

Shape broadcast_shape(const Shape& a, const Shape& b) {
    const std::size_t r = std::max(a.size(), b.size());
    Shape out(r);
    for (std::size_t i = 0; i < r; ++i) {
        const std::size_t da = i < a.size() ? a[a.size() - 1 - i] : 1;
        const std::size_t db = i < b.size() ? b[b.size() - 1 - i] : 1;
        if (da != db && da != 1 && db != 1) {
            throw DimensionError("cannot broadcast shapes " + shape_str(a) + " and " + shape_str(b));
        }
        out[r - 1 - i] = std::max(da, db);
    }
    return out;
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    return binary_op(
        a, b, [](T x, T y) { return x + y; }, [](T, T, T g) { return g; }, [](T, T, T g) { return g; });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
    return binary_op(
        a, b, [](T x, T y) { return x - y; }, [](T, T, T g) { return g; }, [](T, T, T g) { return -g; });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
    return binary_op(
        a, b, [](T x, T y) { return x * y; }, [](T, T y, T g) { return g * y; }, [](T x, T, T g) { return g * x; });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T c) {
    return unary_op(x, [c](T v) { return c * v; }, [c](T, T, T g) { return c * g; });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
    return unary_op(
        x, [](T v) { return v > T{0} ? v : T{0}; }, [](T v, T, T g) { return v > T{0} ? g : T{0}; });
}

template <typename T>
Tensor<T> leaky_relu(const Tensor<T>& x, T alpha) {
    return unary_op(
        x, [alpha](T v) { return v > T{0} ? v : alpha * v; },
        [alpha](T v, T, T g) { return v > T{0} ? g : alpha * g; });
}

template <typename T>
Tensor<T> tanh(const Tensor<T>& x) {
    return unary_op(
        x, [](T v) { return std::tanh(v); }, [](T, T y, T g) { return g * (T{1} - y * y); });
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
    return unary_op(
        x,
        [](T v) {
            if (v >= T{0}) return T{1} / (T{1} + std::exp(-v));
            const T e = std::exp(v);
            return e / (T{1} + e);
        },
        [](T, T y, T g) { return g * y * (T{1} - y); });
}

template <typename T>
Tensor<T> gelu(const Tensor<T>& x) {
    constexpr T inv_sqrt2 = T(1) / std::numbers::sqrt2_v<T>;
    constexpr T inv_sqrt_2pi = std::numbers::inv_sqrtpi_v<T> * inv_sqrt2;
    return unary_op(
        x, [](T v) { return T(0.5) * v * (T{1} + std::erf(v * inv_sqrt2)); },
        [](T v, T, T g) {
            const T cdf = T(0.5) * (T{1} + std::erf(v * inv_sqrt2));
            const T pdf = inv_sqrt_2pi * std::exp(T(-0.5) * v * v);
            return g * (cdf + v * pdf);
        });
}

template <typename T>
Tensor<T> abs(const Tensor<T>& x) {
    return unary_op(
        x, [](T v) { return std::abs(v); },
        [](T v, T, T g) { return v > T{0} ? g : (v < T{0} ? -g : T{0}); });
}

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.rank() < 2 || b.rank() < 2 || a.size(-1) != b.size(-2)) {
        throw DimensionError("matmul shape mismatch: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
    }
    const std::size_t m = a.size(-2), k = a.size(-1), n = b.size(-1);
    const Shape batch_a(a.shape().begin(), a.shape().end() - 2);
    const Shape batch_b(b.shape().begin(), b.shape().end() - 2);
    BroadcastPlan plan;
    try {
        plan = make_plan(batch_a, batch_b);
    } catch (const DimensionError&) {
        throw DimensionError("matmul batch mismatch: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
    }
    Shape out_shape = plan.out;
    out_shape.push_back(m);
    out_shape.push_back(n);
    Buffer<T> out(shape_numel(out_shape));

    const bool flat = plan.nb == 1;
    const auto ad = a.data();
    const auto bd = b.data();
    if (flat) {
        const std::size_t rows = plan.na * m;
        MutMap<T>(out.data(), rows, n).noalias() = ConstMap<T>(ad.data(), rows, k) * ConstMap<T>(bd.data(), k, n);
    } else {
        visit(plan, [&](std::size_t o, std::size_t ia, std::size_t ib) {
            MutMap<T>(out.data() + o * m * n, m, n).noalias() =
                ConstMap<T>(ad.data() + ia * m * k, m, k) * ConstMap<T>(bd.data() + ib * k * n, k, n);
        });
    }
    Tensor<T> result(out_shape, std::move(out));
    return record_op<T>(result, {a, b}, [a, b, plan, flat, m, k, n](std::span<const T> g) mutable {
        const auto ad = a.data();
        const auto bd = b.data();
        if (flat) {
            const std::size_t rows = plan.na * m;
            ConstMap<T> G(g.data(), rows, n);
            if (a.requires_grad()) {
                MutMap<T>(a.grad_accumulator().data(), rows, k).noalias() +=
                    G * ConstMap<T>(bd.data(), k, n).transpose();
            }
            if (b.requires_grad()) {
                MutMap<T>(b.grad_accumulator().data(), k, n).noalias() +=
                    ConstMap<T>(ad.data(), rows, k).transpose() * G;
            }
            return;
        }
        T* ga = a.requires_grad() ? a.grad_accumulator().data() : nullptr;
        T* gb = b.requires_grad() ? b.grad_accumulator().data() : nullptr;
        visit(plan, [&](std::size_t o, std::size_t ia, std::size_t ib) {
            ConstMap<T> G(g.data() + o * m * n, m, n);
            if (ga) {
                MutMap<T>(ga + ia * m * k, m, k).noalias() += G * ConstMap<T>(bd.data() + ib * k * n, k, n).transpose();
            }
            if (gb) {
                MutMap<T>(gb + ib * k * n, k, n).noalias() += ConstMap<T>(ad.data() + ia * m * k, m, k).transpose() * G;
            }
        });
    });
}

template <typename T>
Tensor<T> softmax(const Tensor<T>& x, int axis) {
    const std::size_t ax = normalize_axis(axis, x.rank());
    const auto& s = x.shape();
    std::size_t outer = 1, inner = 1;
    for (std::size_t i = 0; i < ax; ++i) outer *= s[i];
    for (std::size_t i = ax + 1; i < s.size(); ++i) inner *= s[i];
    const std::size_t len = s[ax];

    const auto xd = x.data();
    Buffer<T> out(xd.size());
    for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t in = 0; in < inner; ++in) {
            const std::size_t base = o * len * inner + in;
            T mx = xd[base];
            for (std::size_t j = 1; j < len; ++j) mx = std::max(mx, xd[base + j * inner]);
            T total = 0;
            for (std::size_t j = 0; j < len; ++j) {
                const T e = std::exp(xd[base + j * inner] - mx);
                out[base + j * inner] = e;
                total += e;
            }
            for (std::size_t j = 0; j < len; ++j) out[base + j * inner] /= total;
        }
    }
    Tensor<T> result(s, std::move(out));
    return record_op<T>(result, {x}, [x, result, outer, inner, len](std::span<const T> g) mutable {
        if (!x.requires_grad()) return;
        auto gx = x.grad_accumulator();
        const auto y = result.data();
        for (std::size_t o = 0; o < outer; ++o) {
            for (std::size_t in = 0; in < inner; ++in) {
                const std::size_t base = o * len * inner + in;
                T dot = 0;
                for (std::size_t j = 0; j < len; ++j) dot += g[base + j * inner] * y[base + j * inner];
                for (std::size_t j = 0; j < len; ++j) {
                    const std::size_t i = base + j * inner;
                    gx[i] += y[i] * (g[i] - dot);
                }
            }
        }
    });
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
    if (shape_numel(shape) != x.numel()) {
        throw DimensionError("cannot reshape " + shape_str(x.shape()) + " into " + shape_str(shape));
    }
    Tensor<T> result(std::move(shape), Buffer<T>(x.data().begin(), x.data().end()));
    return record_op<T>(result, {x}, [x](std::span<const T> g) mutable {
        if (!x.requires_grad()) return;
        auto gx = x.grad_accumulator();
        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i];
    });
}

template <typename T>
Tensor<T> permute(const Tensor<T>& x, const std::vector<std::size_t>& axes) {
    const std::size_t r = x.rank();
    std::vector<bool> seen(r, false);
    bool valid = axes.size() == r;
    for (std::size_t i = 0; valid && i < r; ++i) {
        valid = axes[i] < r && !seen[axes[i]];
        if (valid) seen[axes[i]] = true;
    }
    if (!valid) throw DimensionError("invalid axis permutation for shape " + shape_str(x.shape()));

    Shape out_shape(r);
    std::vector<std::size_t> inverse(r);
    for (std::size_t i = 0; i < r; ++i) {
        out_shape[i] = x.shape()[axes[i]];
        inverse[axes[i]] = i;
    }
    Tensor<T> result(out_shape, permute_copy<T>(x.data(), x.shape(), axes));
    return record_op<T>(result, {x}, [x, out_shape, inverse](std::span<const T> g) mutable {
        if (!x.requires_grad()) return;
        const auto back = permute_copy<T>(g, out_shape, inverse);
        auto gx = x.grad_accumulator();
        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += back[i];
    });
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& x, int axis0, int axis1) {
    std::vector<std::size_t> axes(x.rank());
    for (std::size_t i = 0; i < axes.size(); ++i) axes[i] = i;
    std::swap(axes[normalize_axis(axis0, x.rank())], axes[normalize_axis(axis1, x.rank())]);
    return permute(x, axes);
}

template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, int axis) {
    if (parts.empty()) throw ContractError("concat of zero tensors");
    const Shape& first = parts.front().shape();
    const std::size_t ax = normalize_axis(axis, first.size());
    Shape out_shape = first;
    out_shape[ax] = 0;
    for (const auto& p : parts) {
        bool ok = p.rank() == first.size();
        for (std::size_t i = 0; ok && i < first.size(); ++i) ok = i == ax || p.shape()[i] == first[i];
        if (!ok) {
            throw DimensionError("concat shape mismatch: " + shape_str(first) + " vs " + shape_str(p.shape()));
        }
        out_shape[ax] += p.shape()[ax];
    }
    std::size_t outer = 1, inner = 1;
    for (std::size_t i = 0; i < ax; ++i) outer *= first[i];
    for (std::size_t i = ax + 1; i < first.size(); ++i) inner *= first[i];
    const std::size_t out_block = out_shape[ax] * inner;

    Buffer<T> out(shape_numel(out_shape));
    std::size_t offset = 0;
    for (const auto& p : parts) {
        const std::size_t block = p.shape()[ax] * inner;
        const auto pd = p.data();
        for (std::size_t o = 0; o < outer; ++o) {
            std::copy_n(pd.begin() + static_cast<std::ptrdiff_t>(o * block), block,
                        out.begin() + static_cast<std::ptrdiff_t>(o * out_block + offset));
        }
        offset += block;
    }
    Tensor<T> result(out_shape, std::move(out));
    return record_op<T>(result, parts, [parts, outer, inner, out_block, ax](std::span<const T> g) mutable {
        std::size_t offset = 0;
        for (auto& p : parts) {
            const std::size_t block = p.shape()[ax] * inner;
            if (p.requires_grad()) {
                auto gp = p.grad_accumulator();
                for (std::size_t o = 0; o < outer; ++o) {
                    for (std::size_t j = 0; j < block; ++j) gp[o * block + j] += g[o * out_block + offset + j];
                }
            }
            offset += block;
        }
    });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
    T total = 0;
    for (auto v : x.data()) total += v;
    return record_op<T>(Tensor<T>::scalar(total), {x}, [x](std::span<const T> g) mutable {
        if (!x.requires_grad()) return;
        for (auto& v : x.grad_accumulator()) v += g[0];
    });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
    T total = 0;
    for (auto v : x.data()) total += v;
    const T n = static_cast<T>(x.numel());
    return record_op<T>(Tensor<T>::scalar(total / n), {x}, [x, n](std::span<const T> g) mutable {
        if (!x.requires_grad()) return;
        const T share = g[0] / n;
        for (auto& v : x.grad_accumulator()) v += share;
    });
}

#define VITGAN_INSTANTIATE_OPS(T)                                                \
    template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                  \
    template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                  \
    template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                  \
    template Tensor<T> scale(const Tensor<T>&, T);                               \
    template Tensor<T> relu(const Tensor<T>&);                                   \
    template Tensor<T> leaky_relu(const Tensor<T>&, T);                          \
    template Tensor<T> tanh(const Tensor<T>&);                                   \
    template Tensor<T> sigmoid(const Tensor<T>&);                                \
    template Tensor<T> gelu(const Tensor<T>&);                                   \
    template Tensor<T> abs(const Tensor<T>&);                                    \
    template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);               \
    template Tensor<T> softmax(const Tensor<T>&, int);                           \
    template Tensor<T> reshape(const Tensor<T>&, Shape);                         \
    template Tensor<T> permute(const Tensor<T>&, const std::vector<std::size_t>&); \
    template Tensor<T> transpose(const Tensor<T>&, int, int);                    \
    template Tensor<T> concat(const std::vector<Tensor<T>>&, int);               \
    template Tensor<T> sum(const Tensor<T>&);                                    \
    template Tensor<T> mean(const Tensor<T>&);

VITGAN_INSTANTIATE_OPS(float)
VITGAN_INSTANTIATE_OPS(double)

}  // namespace vitgan
