#include "alignkit/ops.h"

#include <cmath>
#include <string>

namespace alignkit {

namespace kernels {

template <class T>
void gemm_nn(const T* a, const T* b, T* c, int64_t m, int64_t k, int64_t n, bool accumulate) {
    for (int64_t i = 0; i < m; ++i) {
        T* crow = c + i * n;
        if (!accumulate) {
            for (int64_t j = 0; j < n; ++j) crow[j] = T{0};
        }
        const T* arow = a + i * k;
        for (int64_t p = 0; p < k; ++p) {
            const T aip = arow[p];
            const T* brow = b + p * n;
            for (int64_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
        }
    }
}

template <class T>
void gemm_nt(const T* a, const T* b, T* c, int64_t m, int64_t k, int64_t n, bool accumulate) {
    for (int64_t i = 0; i < m; ++i) {
        const T* arow = a + i * k;
        T* crow = c + i * n;
        for (int64_t j = 0; j < n; ++j) {
            const T* brow = b + j * k;
            T acc{0};
            for (int64_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
            if (accumulate) {
                crow[j] += acc;
            } else {
                crow[j] = acc;
            }
        }
    }
}

template <class T>
void gemm_tn(const T* a, const T* b, T* c, int64_t m, int64_t k, int64_t n, bool accumulate) {
    if (!accumulate) {
        for (int64_t i = 0; i < m * n; ++i) c[i] = T{0};
    }
    for (int64_t p = 0; p < k; ++p) {
        const T* arow = a + p * m;
        const T* brow = b + p * n;
        for (int64_t i = 0; i < m; ++i) {
            const T api = arow[i];
            T* crow = c + i * n;
            for (int64_t j = 0; j < n; ++j) crow[j] += api * brow[j];
        }
    }
}

template void gemm_nn<float>(const float*, const float*, float*, int64_t, int64_t, int64_t, bool);
template void gemm_nn<double>(const double*, const double*, double*, int64_t, int64_t, int64_t,
                              bool);
template void gemm_nt<float>(const float*, const float*, float*, int64_t, int64_t, int64_t, bool);
template void gemm_nt<double>(const double*, const double*, double*, int64_t, int64_t, int64_t,
                              bool);
template void gemm_tn<float>(const float*, const float*, float*, int64_t, int64_t, int64_t, bool);
template void gemm_tn<double>(const double*, const double*, double*, int64_t, int64_t, int64_t,
                              bool);

}  // namespace kernels

namespace {

using detail::dispatch;
using detail::ensure_grad;

bool wants_grad(const Tensor& t) { return t.requires_grad() || t.node_id() >= 0; }

bool should_record(Tape* tape, std::initializer_list<const Tensor*> inputs) {
    if (tape == nullptr) return false;
    for (const Tensor* t : inputs) {
        if (t->requires_grad()) return true;
    }
    return false;
}

void check_dtype_match(const Tensor& a, const Tensor& b, const char* op) {
    if (a.dtype() != b.dtype()) {
        throw DimensionError(std::string(op) + ": dtype mismatch (" + dtype_name(a.dtype()) +
                             " vs " + dtype_name(b.dtype()) + ")");
    }
}

void check_rank2(const Tensor& t, const char* op) {
    if (t.shape().size() != 2) {
        throw DimensionError(std::string(op) + ": expected a 2-D tensor, got " +
                             shape_str(t.shape()));
    }
}

// Shape resolution for add/sub/mul. Only scalar<->tensor broadcast.
struct BinaryShape {
    Shape out;
    bool a_scalar = false;
    bool b_scalar = false;
};

BinaryShape resolve_binary(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() == b.shape()) return {a.shape(), false, false};
    if (a.numel() == 1) return {b.shape(), true, false};
    if (b.numel() == 1) return {a.shape(), false, true};
    throw DimensionError(std::string(op) + ": incompatible shapes " + shape_str(a.shape()) +
                         " vs " + shape_str(b.shape()));
}

int64_t last_extent(const Tensor& t) { return t.shape().back(); }

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b, Tape* tape) {
    check_rank2(a, "matmul");
    check_rank2(b, "matmul");
    check_dtype_match(a, b, "matmul");
    const int64_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
    if (b.shape()[0] != k) {
        throw DimensionError("matmul: inner extents differ, " + shape_str(a.shape()) + " x " +
                             shape_str(b.shape()));
    }
    Tensor out = Tensor::zeros({m, n}, a.dtype());
    dispatch(a.dtype(), [&](auto tag) {
        using T = decltype(tag);
        kernels::gemm_nn<T>(a.data<T>().data(), b.data<T>().data(), out.mutable_data<T>().data(),
                            m, k, n, false);
    });
    if (should_record(tape, {&a, &b})) {
        tape->record({a, b}, out, [a, b, out, m, k, n]() {
            dispatch(a.dtype(), [&](auto tag) {
                using T = decltype(tag);
                const T* g = std::get<std::vector<T>>(out.impl()->grad).data();
                if (wants_grad(a)) {
                    // dA += dC . B^T
                    kernels::gemm_nt<T>(g, b.data<T>().data(),
                                        ensure_grad<T>(*a.impl()).data(), m, n, k, true);
                }
                if (wants_grad(b)) {
                    // dB += A^T . dC
                    kernels::gemm_tn<T>(a.data<T>().data(), g,
                                        ensure_grad<T>(*b.impl()).data(), k, m, n, true);
                }
            });
        });
    }
    return out;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b, Tape* tape) {
    check_rank2(a, "matmul_nt");
    check_rank2(b, "matmul_nt");
    check_dtype_match(a, b, "matmul_nt");
    const int64_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[0];
    if (b.shape()[1] != k) {
        throw DimensionError("matmul_nt: inner extents differ, " + shape_str(a.shape()) +
                             " x transpose of " + shape_str(b.shape()));
    }
    Tensor out = Tensor::zeros({m, n}, a.dtype());
    dispatch(a.dtype(), [&](auto tag) {
        using T = decltype(tag);
        kernels::gemm_nt<T>(a.data<T>().data(), b.data<T>().data(), out.mutable_data<T>().data(),
                            m, k, n, false);
    });
    if (should_record(tape, {&a, &b})) {
        tape->record({a, b}, out, [a, b, out, m, k, n]() {
            dispatch(a.dtype(), [&](auto tag) {
                using T = decltype(tag);
                const T* g = std::get<std::vector<T>>(out.impl()->grad).data();
                if (wants_grad(a)) {
                    // dA += dC . B   (dC is [m x n], B is [n x k])
                    kernels::gemm_nn<T>(g, b.data<T>().data(),
                                        ensure_grad<T>(*a.impl()).data(), m, n, k, true);
                }
                if (wants_grad(b)) {
                    // dB += dC^T . A (dC is [m x n], A is [m x k])
                    kernels::gemm_tn<T>(g, a.data<T>().data(),
                                        ensure_grad<T>(*b.impl()).data(), n, m, k, true);
                }
            });
        });
    }
    return out;
}

namespace {

// Shared implementation for add / sub. sign_b = +1 for add, -1 for sub.
Tensor add_like(const Tensor& a, const Tensor& b, double sign_b, const char* name, Tape* tape) {
    check_dtype_match(a, b, name);
    BinaryShape bs = resolve_binary(a, b, name);
    Tensor out = Tensor::zeros(bs.out, a.dtype());
    const int64_t n = out.numel();
    dispatch(a.dtype(), [&](auto tag) {
        using T = decltype(tag);
        const T sb = static_cast<T>(sign_b);
        auto av = a.data<T>();
        auto bv = b.data<T>();
        auto ov = out.mutable_data<T>();
        for (int64_t i = 0; i < n; ++i) {
            T x = bs.a_scalar ? av[0] : av[static_cast<size_t>(i)];
            T y = bs.b_scalar ? bv[0] : bv[static_cast<size_t>(i)];
            ov[static_cast<size_t>(i)] = x + sb * y;
        }
    });
    if (should_record(tape, {&a, &b})) {
        tape->record({a, b}, out, [a, b, out, bs, sign_b, n]() {
            dispatch(a.dtype(), [&](auto tag) {
                using T = decltype(tag);
                const T sb = static_cast<T>(sign_b);
                const auto& g = std::get<std::vector<T>>(out.impl()->grad);
                if (wants_grad(a)) {
                    auto& ga = ensure_grad<T>(*a.impl());
                    if (bs.a_scalar) {
                        T acc{0};
                        for (int64_t i = 0; i < n; ++i) acc += g[static_cast<size_t>(i)];
                        ga[0] += acc;
                    } else {
                        for (int64_t i = 0; i < n; ++i)
                            ga[static_cast<size_t>(i)] += g[static_cast<size_t>(i)];
                    }
                }
                if (wants_grad(b)) {
                    auto& gb = ensure_grad<T>(*b.impl());
                    if (bs.b_scalar) {
                        T acc{0};
                        for (int64_t i = 0; i < n; ++i) acc += g[static_cast<size_t>(i)];
                        gb[0] += sb * acc;
                    } else {
                        for (int64_t i = 0; i < n; ++i)
                            gb[static_cast<size_t>(i)] += sb * g[static_cast<size_t>(i)];
                    }
                }
            });
        });
    }
    return out;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b, Tape* tape) { return add_like(a, b, 1.0, "add", tape); }

Tensor sub(const Tensor& a, const Tensor& b, Tape* tape) {
    return add_like(a, b, -1.0, "sub", tape);
}

Tensor mul(const Tensor& a, const Tensor& b, Tape* tape) {
    check_dtype_match(a, b, "mul");
    BinaryShape bs = resolve_binary(a, b, "mul");
    Tensor out = Tensor::zeros(bs.out, a.dtype());
    const int64_t n = out.numel();
    dispatch(a.dtype(), [&](auto tag) {
        using T = decltype(tag);
        auto av = a.data<T>();
        auto bv = b.data<T>();
        auto ov = out.mutable_data<T>();
        for (int64_t i = 0; i < n; ++i) {
            T x = bs.a_scalar ? av[0] : av[static_cast<size_t>(i)];
            T y = bs.b_scalar ? bv[0] : bv[static_cast<size_t>(i)];
            ov[static_cast<size_t>(i)] = x * y;
        }
    });
    if (should_record(tape, {&a, &b})) {
        tape->record({a, b}, out, [a, b, out, bs, n]() {
            dispatch(a.dtype(), [&](auto tag) {
                using T = decltype(tag);
                const auto& g = std::get<std::vector<T>>(out.impl()->grad);
                auto av = a.data<T>();
                auto bv = b.data<T>();
                if (wants_grad(a)) {
                    auto& ga = ensure_grad<T>(*a.impl());
                    if (bs.a_scalar) {
                        T acc{0};
                        for (int64_t i = 0; i < n; ++i) {
                            T y = bs.b_scalar ? bv[0] : bv[static_cast<size_t>(i)];
                            acc += g[static_cast<size_t>(i)] * y;
                        }
                        ga[0] += acc;
                    } else {
                        for (int64_t i = 0; i < n; ++i) {
                            T y = bs.b_scalar ? bv[0] : bv[static_cast<size_t>(i)];
                            ga[static_cast<size_t>(i)] += g[static_cast<size_t>(i)] * y;
                        }
                    }
                }
                if (wants_grad(b)) {
                    auto& gb = ensure_grad<T>(*b.impl());
                    if (bs.b_scalar) {
                        T acc{0};
                        for (int64_t i = 0; i < n; ++i) {
                            T x = bs.a_scalar ? av[0] : av[static_cast<size_t>(i)];
                            acc += g[static_cast<size_t>(i)] * x;
                        }
                        gb[0] += acc;
                    } else {
                        for (int64_t i = 0; i < n; ++i) {
                            T x = bs.a_scalar ? av[0] : av[static_cast<size_t>(i)];
                            gb[static_cast<size_t>(i)] += g[static_cast<size_t>(i)] * x;
                        }
                    }
                }
            });
        });
    }
    return out;
}

namespace {

// Shared recorder for unary elementwise ops. forward_fn: T -> T on values;
// backward_fn(x, y, g) returns the gradient contribution for x.
template <class FwdF32, class FwdF64, class BwdF32, class BwdF64>
Tensor unary_elemwise(const Tensor& x, Tape* tape, FwdF32 fwd32, FwdF64 fwd64, BwdF32 bwd32,
                      BwdF64 bwd64) {
    Tensor out = Tensor::zeros(x.shape(), x.dtype());
    const int64_t n = x.numel();
    if (x.dtype() == DType::F32) {
        auto xv = x.data<float>();
        auto ov = out.mutable_data<float>();
        for (int64_t i = 0; i < n; ++i) ov[static_cast<size_t>(i)] = fwd32(xv[static_cast<size_t>(i)]);
    } else {
        auto xv = x.data<double>();
        auto ov = out.mutable_data<double>();
        for (int64_t i = 0; i < n; ++i) ov[static_cast<size_t>(i)] = fwd64(xv[static_cast<size_t>(i)]);
    }
    if (should_record(tape, {&x})) {
        tape->record({x}, out, [x, out, n, bwd32, bwd64]() {
            if (!wants_grad(x)) return;
            if (x.dtype() == DType::F32) {
                const auto& g = std::get<std::vector<float>>(out.impl()->grad);
                auto xv = x.data<float>();
                auto yv = out.data<float>();
                auto& gx = ensure_grad<float>(*x.impl());
                for (int64_t i = 0; i < n; ++i) {
                    size_t s = static_cast<size_t>(i);
                    gx[s] += bwd32(xv[s], yv[s], g[s]);
                }
            } else {
                const auto& g = std::get<std::vector<double>>(out.impl()->grad);
                auto xv = x.data<double>();
                auto yv = out.data<double>();
                auto& gx = ensure_grad<double>(*x.impl());
                for (int64_t i = 0; i < n; ++i) {
                    size_t s = static_cast<size_t>(i);
                    gx[s] += bwd64(xv[s], yv[s], g[s]);
                }
            }
        });
    }
    return out;
}

template <class T>
T gelu_value(T x) {
    const T c = static_cast<T>(0.7978845608028653558798921198687);  // sqrt(2/pi)
    const T k = static_cast<T>(0.044715);
    T inner = c * (x + k * x * x * x);
    return static_cast<T>(0.5) * x * (T{1} + std::tanh(inner));
}

template <class T>
T gelu_derivative(T x) {
    const T c = static_cast<T>(0.7978845608028653558798921198687);
    const T k = static_cast<T>(0.044715);
    T inner = c * (x + k * x * x * x);
    T th = std::tanh(inner);
    T sech2 = T{1} - th * th;
    return static_cast<T>(0.5) * (T{1} + th) +
           static_cast<T>(0.5) * x * sech2 * c * (T{1} + T{3} * k * x * x);
}

template <class T>
T softplus_value(T x) {
    return std::max(x, T{0}) + std::log1p(std::exp(-std::abs(x)));
}

template <class T>
T sigmoid_value(T x) {
    if (x >= T{0}) return T{1} / (T{1} + std::exp(-x));
    T e = std::exp(x);
    return e / (T{1} + e);
}

}  // namespace

Tensor scale(const Tensor& x, double factor, Tape* tape) {
    const float f32 = static_cast<float>(factor);
    return unary_elemwise(
        x, tape, [f32](float v) { return v * f32; }, [factor](double v) { return v * factor; },
        [f32](float, float, float g) { return g * f32; },
        [factor](double, double, double g) { return g * factor; });
}

Tensor add_const(const Tensor& x, double constant, Tape* tape) {
    const float c32 = static_cast<float>(constant);
    return unary_elemwise(
        x, tape, [c32](float v) { return v + c32; }, [constant](double v) { return v + constant; },
        [](float, float, float g) { return g; }, [](double, double, double g) { return g; });
}

Tensor negate(const Tensor& x, Tape* tape) {
    return unary_elemwise(
        x, tape, [](float v) { return -v; }, [](double v) { return -v; },
        [](float, float, float g) { return -g; }, [](double, double, double g) { return -g; });
}

Tensor exp_op(const Tensor& x, Tape* tape) {
    return unary_elemwise(
        x, tape, [](float v) { return std::exp(v); }, [](double v) { return std::exp(v); },
        [](float, float y, float g) { return g * y; },
        [](double, double y, double g) { return g * y; });
}

Tensor log_op(const Tensor& x, Tape* tape) {
    return unary_elemwise(
        x, tape, [](float v) { return std::log(v); }, [](double v) { return std::log(v); },
        [](float v, float, float g) { return g / v; },
        [](double v, double, double g) { return g / v; });
}

Tensor gelu(const Tensor& x, Tape* tape) {
    return unary_elemwise(
        x, tape, [](float v) { return gelu_value(v); }, [](double v) { return gelu_value(v); },
        [](float v, float, float g) { return g * gelu_derivative(v); },
        [](double v, double, double g) { return g * gelu_derivative(v); });
}

Tensor softplus(const Tensor& x, Tape* tape) {
    return unary_elemwise(
        x, tape, [](float v) { return softplus_value(v); },
        [](double v) { return softplus_value(v); },
        [](float v, float, float g) { return g * sigmoid_value(v); },
        [](double v, double, double g) { return g * sigmoid_value(v); });
}

Tensor softmax(const Tensor& x, Tape* tape) {
    if (x.shape().empty()) throw DimensionError("softmax: tensor must have at least one axis");
    const int64_t v = last_extent(x);
    const int64_t rows = x.numel() / v;
    Tensor out = Tensor::zeros(x.shape(), x.dtype());
    dispatch(x.dtype(), [&](auto tag) {
        using T = decltype(tag);
        auto xv = x.data<T>();
        auto ov = out.mutable_data<T>();
        for (int64_t r = 0; r < rows; ++r) {
            const T* row = xv.data() + r * v;
            T* orow = ov.data() + r * v;
            T m = row[0];
            for (int64_t j = 1; j < v; ++j) m = std::max(m, row[j]);
            T denom{0};
            for (int64_t j = 0; j < v; ++j) {
                orow[j] = std::exp(row[j] - m);
                denom += orow[j];
            }
            for (int64_t j = 0; j < v; ++j) orow[j] /= denom;
        }
    });
    if (should_record(tape, {&x})) {
        tape->record({x}, out, [x, out, rows, v]() {
            if (!wants_grad(x)) return;
            dispatch(x.dtype(), [&](auto tag) {
                using T = decltype(tag);
                const auto& g = std::get<std::vector<T>>(out.impl()->grad);
                auto yv = out.data<T>();
                auto& gx = ensure_grad<T>(*x.impl());
                for (int64_t r = 0; r < rows; ++r) {
                    const T* grow = g.data() + r * v;
                    const T* yrow = yv.data() + r * v;
                    T* gxrow = gx.data() + r * v;
                    T dot{0};
                    for (int64_t j = 0; j < v; ++j) dot += grow[j] * yrow[j];
                    for (int64_t j = 0; j < v; ++j) gxrow[j] += yrow[j] * (grow[j] - dot);
                }
            });
        });
    }
    return out;
}

Tensor causal_softmax(const Tensor& scores, Tape* tape) {
    check_rank2(scores, "causal_softmax");
    const int64_t t = scores.shape()[0];
    if (scores.shape()[1] != t) {
        throw DimensionError("causal_softmax: scores must be square, got " +
                             shape_str(scores.shape()));
    }
    Tensor out = Tensor::zeros(scores.shape(), scores.dtype());
    dispatch(scores.dtype(), [&](auto tag) {
        using T = decltype(tag);
        auto xv = scores.data<T>();
        auto ov = out.mutable_data<T>();
        for (int64_t r = 0; r < t; ++r) {
            const T* row = xv.data() + r * t;
            T* orow = ov.data() + r * t;
            const int64_t len = r + 1;  // visible prefix
            T m = row[0];
            for (int64_t j = 1; j < len; ++j) m = std::max(m, row[j]);
            T denom{0};
            for (int64_t j = 0; j < len; ++j) {
                orow[j] = std::exp(row[j] - m);
                denom += orow[j];
            }
            for (int64_t j = 0; j < len; ++j) orow[j] /= denom;
            // columns beyond the prefix stay exactly zero
        }
    });
    if (should_record(tape, {&scores})) {
        tape->record({scores}, out, [scores, out, t]() {
            if (!wants_grad(scores)) return;
            dispatch(scores.dtype(), [&](auto tag) {
                using T = decltype(tag);
                const auto& g = std::get<std::vector<T>>(out.impl()->grad);
                auto yv = out.data<T>();
                auto& gx = ensure_grad<T>(*scores.impl());
                for (int64_t r = 0; r < t; ++r) {
                    const int64_t len = r + 1;
                    const T* grow = g.data() + r * t;
                    const T* yrow = yv.data() + r * t;
                    T* gxrow = gx.data() + r * t;
                    T dot{0};
                    for (int64_t j = 0; j < len; ++j) dot += grow[j] * yrow[j];
                    for (int64_t j = 0; j < len; ++j) gxrow[j] += yrow[j] * (grow[j] - dot);
                }
            });
        });
    }
    return out;
}

Tensor layernorm(const Tensor& x, const Tensor& gain, const Tensor& bias, Tape* tape) {
    if (x.shape().empty()) throw DimensionError("layernorm: tensor must have at least one axis");
    check_dtype_match(x, gain, "layernorm");
    check_dtype_match(x, bias, "layernorm");
    const int64_t n = last_extent(x);
    if (gain.numel() != n || bias.numel() != n) {
        throw DimensionError("layernorm: gain/bias must match the last axis extent " +
                             std::to_string(n));
    }
    const int64_t rows = x.numel() / n;
    Tensor out = Tensor::zeros(x.shape(), x.dtype());
    dispatch(x.dtype(), [&](auto tag) {
        using T = decltype(tag);
        const T eps = static_cast<T>(1e-5);
        auto xv = x.data<T>();
        auto gv = gain.data<T>();
        auto bv = bias.data<T>();
        auto ov = out.mutable_data<T>();
        for (int64_t r = 0; r < rows; ++r) {
            const T* row = xv.data() + r * n;
            T* orow = ov.data() + r * n;
            T mean{0};
            for (int64_t j = 0; j < n; ++j) mean += row[j];
            mean /= static_cast<T>(n);
            T var{0};
            for (int64_t j = 0; j < n; ++j) {
                T d = row[j] - mean;
                var += d * d;
            }
            var /= static_cast<T>(n);
            T inv_std = T{1} / std::sqrt(var + eps);
            for (int64_t j = 0; j < n; ++j) {
                orow[j] = gv[static_cast<size_t>(j)] * (row[j] - mean) * inv_std +
                          bv[static_cast<size_t>(j)];
            }
        }
    });
    if (should_record(tape, {&x, &gain, &bias})) {
        tape->record({x, gain, bias}, out, [x, gain, bias, out, rows, n]() {
            dispatch(x.dtype(), [&](auto tag) {
                using T = decltype(tag);
                const T eps = static_cast<T>(1e-5);
                const auto& g = std::get<std::vector<T>>(out.impl()->grad);
                auto xv = x.data<T>();
                auto gv = gain.data<T>();
                std::vector<T> xhat(static_cast<size_t>(n));
                for (int64_t r = 0; r < rows; ++r) {
                    const T* row = xv.data() + r * n;
                    const T* grow = g.data() + r * n;
                    T mean{0};
                    for (int64_t j = 0; j < n; ++j) mean += row[j];
                    mean /= static_cast<T>(n);
                    T var{0};
                    for (int64_t j = 0; j < n; ++j) {
                        T d = row[j] - mean;
                        var += d * d;
                    }
                    var /= static_cast<T>(n);
                    T inv_std = T{1} / std::sqrt(var + eps);
                    for (int64_t j = 0; j < n; ++j) xhat[static_cast<size_t>(j)] = (row[j] - mean) * inv_std;

                    if (wants_grad(gain)) {
                        auto& gg = ensure_grad<T>(*gain.impl());
                        for (int64_t j = 0; j < n; ++j)
                            gg[static_cast<size_t>(j)] += grow[j] * xhat[static_cast<size_t>(j)];
                    }
                    if (wants_grad(bias)) {
                        auto& gb = ensure_grad<T>(*bias.impl());
                        for (int64_t j = 0; j < n; ++j) gb[static_cast<size_t>(j)] += grow[j];
                    }
                    if (wants_grad(x)) {
                        auto& gx = ensure_grad<T>(*x.impl());
                        T* gxrow = gx.data() + r * n;
                        T mean_dxhat{0};
                        T mean_dxhat_xhat{0};
                        for (int64_t j = 0; j < n; ++j) {
                            T dxh = grow[j] * gv[static_cast<size_t>(j)];
                            mean_dxhat += dxh;
                            mean_dxhat_xhat += dxh * xhat[static_cast<size_t>(j)];
                        }
                        mean_dxhat /= static_cast<T>(n);
                        mean_dxhat_xhat /= static_cast<T>(n);
                        for (int64_t j = 0; j < n; ++j) {
                            T dxh = grow[j] * gv[static_cast<size_t>(j)];
                            gxrow[j] += inv_std * (dxh - mean_dxhat -
                                                   xhat[static_cast<size_t>(j)] * mean_dxhat_xhat);
                        }
                    }
                }
            });
        });
    }
    return out;
}

Tensor add_bias(const Tensor& x, const Tensor& bias, Tape* tape) {
    check_rank2(x, "add_bias");
    check_dtype_match(x, bias, "add_bias");
    const int64_t rows = x.shape()[0], n = x.shape()[1];
    if (bias.numel() != n) {
        throw DimensionError("add_bias: bias length " + std::to_string(bias.numel()) +
                             " does not match row width " + std::to_string(n));
    }
    Tensor out = Tensor::zeros(x.shape(), x.dtype());
    dispatch(x.dtype(), [&](auto tag) {
        using T = decltype(tag);
        auto xv = x.data<T>();
        auto bv = bias.data<T>();
        auto ov = out.mutable_data<T>();
        for (int64_t r = 0; r < rows; ++r) {
            const T* row = xv.data() + r * n;
            T* orow = ov.data() + r * n;
            for (int64_t j = 0; j < n; ++j) orow[j] = row[j] + bv[static_cast<size_t>(j)];
        }
    });
    if (should_record(tape, {&x, &bias})) {
        tape->record({x, bias}, out, [x, bias, out, rows, n]() {
            dispatch(x.dtype(), [&](auto tag) {
                using T = decltype(tag);
                const auto& g = std::get<std::vector<T>>(out.impl()->grad);
                if (wants_grad(x)) {
                    auto& gx = ensure_grad<T>(*x.impl());
                    for (size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
                }
                if (wants_grad(bias)) {
                    auto& gb = ensure_grad<T>(*bias.impl());
                    for (int64_t r = 0; r < rows; ++r) {
                        const T* grow = g.data() + r * n;
                        for (int64_t j = 0; j < n; ++j) gb[static_cast<size_t>(j)] += grow[j];
                    }
                }
            });
        });
    }
    return out;
}

Tensor gather_logprob(const Tensor& logits, const std::vector<int>& targets, Tape* tape) {
    if (logits.shape().size() < 2) {
        throw DimensionError("gather_logprob: logits must have rank >= 2, got " +
                             shape_str(logits.shape()));
    }
    const int64_t v = last_extent(logits);
    const int64_t rows = logits.numel() / v;
    if (static_cast<int64_t>(targets.size()) != rows) {
        throw DimensionError("gather_logprob: expected " + std::to_string(rows) +
                             " targets, got " + std::to_string(targets.size()));
    }
    for (int64_t r = 0; r < rows; ++r) {
        int id = targets[static_cast<size_t>(r)];
        if (id < 0 || id >= v) {
            throw IndexError("gather_logprob: token id " + std::to_string(id) + " at position " +
                             std::to_string(r) + " is outside vocabulary of size " +
                             std::to_string(v));
        }
    }
    Shape out_shape(logits.shape().begin(), logits.shape().end() - 1);
    Tensor out = Tensor::zeros(out_shape, logits.dtype());
    std::vector<double> log_z(static_cast<size_t>(rows));
    dispatch(logits.dtype(), [&](auto tag) {
        using T = decltype(tag);
        auto xv = logits.data<T>();
        auto ov = out.mutable_data<T>();
        for (int64_t r = 0; r < rows; ++r) {
            const T* row = xv.data() + r * v;
            T m = row[0];
            for (int64_t j = 1; j < v; ++j) m = std::max(m, row[j]);
            T denom{0};
            for (int64_t j = 0; j < v; ++j) denom += std::exp(row[j] - m);
            T lz = m + std::log(denom);
            log_z[static_cast<size_t>(r)] = static_cast<double>(lz);
            ov[static_cast<size_t>(r)] = row[targets[static_cast<size_t>(r)]] - lz;
        }
    });
    if (should_record(tape, {&logits})) {
        std::vector<int> tgt = targets;
        tape->record({logits}, out, [logits, out, tgt, log_z, rows, v]() {
            if (!wants_grad(logits)) return;
            dispatch(logits.dtype(), [&](auto tag) {
                using T = decltype(tag);
                const auto& g = std::get<std::vector<T>>(out.impl()->grad);
                auto xv = logits.data<T>();
                auto& gx = ensure_grad<T>(*logits.impl());
                for (int64_t r = 0; r < rows; ++r) {
                    const T gr = g[static_cast<size_t>(r)];
                    if (gr == T{0}) continue;
                    const T* row = xv.data() + r * v;
                    T* gxrow = gx.data() + r * v;
                    const T lz = static_cast<T>(log_z[static_cast<size_t>(r)]);
                    for (int64_t j = 0; j < v; ++j) {
                        T p = std::exp(row[j] - lz);
                        gxrow[j] -= gr * p;
                    }
                    gxrow[tgt[static_cast<size_t>(r)]] += gr;
                }
            });
        });
    }
    return out;
}

Tensor sum(const Tensor& x, Tape* tape) {
    Tensor out = Tensor::zeros({1}, x.dtype());
    dispatch(x.dtype(), [&](auto tag) {
        using T = decltype(tag);
        T acc{0};
        for (T v : x.data<T>()) acc += v;
        out.mutable_data<T>()[0] = acc;
    });
    if (should_record(tape, {&x})) {
        tape->record({x}, out, [x, out]() {
            if (!wants_grad(x)) return;
            dispatch(x.dtype(), [&](auto tag) {
                using T = decltype(tag);
                const T g = std::get<std::vector<T>>(out.impl()->grad)[0];
                auto& gx = ensure_grad<T>(*x.impl());
                for (auto& val : gx) val += g;
            });
        });
    }
    return out;
}

Tensor embedding_rows(const Tensor& table, const std::vector<int>& ids, Tape* tape) {
    check_rank2(table, "embedding_rows");
    const int64_t v = table.shape()[0], d = table.shape()[1];
    for (size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] < 0 || ids[i] >= v) {
            throw IndexError("embedding_rows: token id " + std::to_string(ids[i]) +
                             " at position " + std::to_string(i) +
                             " is outside vocabulary of size " + std::to_string(v));
        }
    }
    if (ids.empty()) throw ContractError("embedding_rows: empty id list");
    const int64_t rows = static_cast<int64_t>(ids.size());
    Tensor out = Tensor::zeros({rows, d}, table.dtype());
    dispatch(table.dtype(), [&](auto tag) {
        using T = decltype(tag);
        auto tv = table.data<T>();
        auto ov = out.mutable_data<T>();
        for (int64_t r = 0; r < rows; ++r) {
            const T* src = tv.data() + static_cast<int64_t>(ids[static_cast<size_t>(r)]) * d;
            T* dst = ov.data() + r * d;
            for (int64_t j = 0; j < d; ++j) dst[j] = src[j];
        }
    });
    if (should_record(tape, {&table})) {
        std::vector<int> ids_copy = ids;
        tape->record({table}, out, [table, out, ids_copy, rows, d]() {
            if (!wants_grad(table)) return;
            dispatch(table.dtype(), [&](auto tag) {
                using T = decltype(tag);
                const auto& g = std::get<std::vector<T>>(out.impl()->grad);
                auto& gt = ensure_grad<T>(*table.impl());
                for (int64_t r = 0; r < rows; ++r) {
                    T* dst = gt.data() + static_cast<int64_t>(ids_copy[static_cast<size_t>(r)]) * d;
                    const T* src = g.data() + r * d;
                    for (int64_t j = 0; j < d; ++j) dst[j] += src[j];
                }
            });
        });
    }
    return out;
}

Tensor slice_rows(const Tensor& x, int64_t start, int64_t count, Tape* tape) {
    check_rank2(x, "slice_rows");
    const int64_t rows = x.shape()[0], cols = x.shape()[1];
    if (start < 0 || count <= 0 || start + count > rows) {
        throw DimensionError("slice_rows: range [" + std::to_string(start) + ", " +
                             std::to_string(start + count) + ") outside " + shape_str(x.shape()));
    }
    Tensor out = Tensor::zeros({count, cols}, x.dtype());
    dispatch(x.dtype(), [&](auto tag) {
        using T = decltype(tag);
        auto xv = x.data<T>();
        auto ov = out.mutable_data<T>();
        for (int64_t i = 0; i < count * cols; ++i)
            ov[static_cast<size_t>(i)] = xv[static_cast<size_t>(start * cols + i)];
    });
    if (should_record(tape, {&x})) {
        tape->record({x}, out, [x, out, start, count, cols]() {
            if (!wants_grad(x)) return;
            dispatch(x.dtype(), [&](auto tag) {
                using T = decltype(tag);
                const auto& g = std::get<std::vector<T>>(out.impl()->grad);
                auto& gx = ensure_grad<T>(*x.impl());
                for (int64_t i = 0; i < count * cols; ++i)
                    gx[static_cast<size_t>(start * cols + i)] += g[static_cast<size_t>(i)];
            });
        });
    }
    return out;
}

Tensor slice_cols(const Tensor& x, int64_t start, int64_t count, Tape* tape) {
    check_rank2(x, "slice_cols");
    const int64_t rows = x.shape()[0], cols = x.shape()[1];
    if (start < 0 || count <= 0 || start + count > cols) {
        throw DimensionError("slice_cols: range [" + std::to_string(start) + ", " +
                             std::to_string(start + count) + ") outside " + shape_str(x.shape()));
    }
    Tensor out = Tensor::zeros({rows, count}, x.dtype());
    dispatch(x.dtype(), [&](auto tag) {
        using T = decltype(tag);
        auto xv = x.data<T>();
        auto ov = out.mutable_data<T>();
        for (int64_t r = 0; r < rows; ++r) {
            const T* src = xv.data() + r * cols + start;
            T* dst = ov.data() + r * count;
            for (int64_t j = 0; j < count; ++j) dst[j] = src[j];
        }
    });
    if (should_record(tape, {&x})) {
        tape->record({x}, out, [x, out, start, count, rows, cols]() {
            if (!wants_grad(x)) return;
            dispatch(x.dtype(), [&](auto tag) {
                using T = decltype(tag);
                const auto& g = std::get<std::vector<T>>(out.impl()->grad);
                auto& gx = ensure_grad<T>(*x.impl());
                for (int64_t r = 0; r < rows; ++r) {
                    T* dst = gx.data() + r * cols + start;
                    const T* src = g.data() + r * count;
                    for (int64_t j = 0; j < count; ++j) dst[j] += src[j];
                }
            });
        });
    }
    return out;
}

Tensor concat_cols(const std::vector<Tensor>& parts, Tape* tape) {
    if (parts.empty()) throw ContractError("concat_cols: no tensors given");
    const int64_t rows = parts[0].shape().size() == 2 ? parts[0].shape()[0] : -1;
    int64_t total_cols = 0;
    for (const Tensor& p : parts) {
        check_rank2(p, "concat_cols");
        check_dtype_match(parts[0], p, "concat_cols");
        if (p.shape()[0] != rows) {
            throw DimensionError("concat_cols: row counts differ, " + shape_str(parts[0].shape()) +
                                 " vs " + shape_str(p.shape()));
        }
        total_cols += p.shape()[1];
    }
    Tensor out = Tensor::zeros({rows, total_cols}, parts[0].dtype());
    dispatch(parts[0].dtype(), [&](auto tag) {
        using T = decltype(tag);
        auto ov = out.mutable_data<T>();
        int64_t col_offset = 0;
        for (const Tensor& p : parts) {
            const int64_t pc = p.shape()[1];
            auto pv = p.data<T>();
            for (int64_t r = 0; r < rows; ++r) {
                const T* src = pv.data() + r * pc;
                T* dst = ov.data() + r * total_cols + col_offset;
                for (int64_t j = 0; j < pc; ++j) dst[j] = src[j];
            }
            col_offset += pc;
        }
    });
    bool any_grad = false;
    for (const Tensor& p : parts) any_grad = any_grad || p.requires_grad();
    if (tape != nullptr && any_grad) {
        std::vector<Tensor> inputs = parts;
        tape->record(inputs, out, [inputs, out, rows, total_cols]() {
            dispatch(out.dtype(), [&](auto tag) {
                using T = decltype(tag);
                const auto& g = std::get<std::vector<T>>(out.impl()->grad);
                int64_t col_offset = 0;
                for (const Tensor& p : inputs) {
                    const int64_t pc = p.shape()[1];
                    if (wants_grad(p)) {
                        auto& gp = ensure_grad<T>(*p.impl());
                        for (int64_t r = 0; r < rows; ++r) {
                            const T* src = g.data() + r * total_cols + col_offset;
                            T* dst = gp.data() + r * pc;
                            for (int64_t j = 0; j < pc; ++j) dst[j] += src[j];
                        }
                    }
                    col_offset += pc;
                }
            });
        });
    }
    return out;
}

Tensor stack(const std::vector<Tensor>& parts, Tape* tape) {
    if (parts.empty()) throw ContractError("stack: no tensors given");
    const Shape& inner = parts[0].shape();
    for (const Tensor& p : parts) {
        check_dtype_match(parts[0], p, "stack");
        if (p.shape() != inner) {
            throw DimensionError("stack: shapes differ, " + shape_str(inner) + " vs " +
                                 shape_str(p.shape()));
        }
    }
    Shape out_shape;
    out_shape.push_back(static_cast<int64_t>(parts.size()));
    out_shape.insert(out_shape.end(), inner.begin(), inner.end());
    const int64_t chunk = shape_numel(inner);
    Tensor out = Tensor::zeros(out_shape, parts[0].dtype());
    dispatch(parts[0].dtype(), [&](auto tag) {
        using T = decltype(tag);
        auto ov = out.mutable_data<T>();
        for (size_t b = 0; b < parts.size(); ++b) {
            auto pv = parts[b].data<T>();
            T* dst = ov.data() + static_cast<int64_t>(b) * chunk;
            for (int64_t i = 0; i < chunk; ++i) dst[i] = pv[static_cast<size_t>(i)];
        }
    });
    bool any_grad = false;
    for (const Tensor& p : parts) any_grad = any_grad || p.requires_grad();
    if (tape != nullptr && any_grad) {
        std::vector<Tensor> inputs = parts;
        tape->record(inputs, out, [inputs, out, chunk]() {
            dispatch(out.dtype(), [&](auto tag) {
                using T = decltype(tag);
                const auto& g = std::get<std::vector<T>>(out.impl()->grad);
                for (size_t b = 0; b < inputs.size(); ++b) {
                    if (!wants_grad(inputs[b])) continue;
                    auto& gp = ensure_grad<T>(*inputs[b].impl());
                    const T* src = g.data() + static_cast<int64_t>(b) * chunk;
                    for (int64_t i = 0; i < chunk; ++i) gp[static_cast<size_t>(i)] += src[i];
                }
            });
        });
    }
    return out;
}

}  // namespace alignkit
