#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "alignkit/errors.h"

namespace alignkit {

/// Element precision. Training defaults to f32; tests and gradient checks use
/// f64 for tight oracle tolerances.
enum class DType { F32, F64 };

inline const char* dtype_name(DType dt) { return dt == DType::F32 ? "f32" : "f64"; }
inline size_t dtype_size(DType dt) { return dt == DType::F32 ? 4 : 8; }
DType dtype_from_name(const std::string& name);

using Shape = std::vector<int64_t>;

std::string shape_str(const Shape& shape);
int64_t shape_numel(const Shape& shape);

namespace detail {

using Storage = std::variant<std::vector<float>, std::vector<double>>;

struct TensorImpl {
    Shape shape;
    DType dtype = DType::F32;
    Storage values;
    Storage grad;  // empty until a backward pass touches this tensor
    bool requires_grad = false;
    int64_t node_id = -1;  // index on the recording tape; -1 for leaves
};

}  // namespace detail

/// N-dimensional numeric array participating in a differentiation tape.
/// Copying a Tensor copies the handle: both copies alias the same storage,
/// so gradients accumulate on the object the caller holds.
class Tensor {
  public:
    Tensor() = default;

    static Tensor zeros(Shape shape, DType dtype, bool requires_grad = false);
    static Tensor full(Shape shape, double value, DType dtype);
    static Tensor scalar(double value, DType dtype);
    static Tensor from_values(Shape shape, const std::vector<double>& values, DType dtype);

    bool defined() const { return impl_ != nullptr; }
    const Shape& shape() const { return impl_->shape; }
    int64_t numel() const { return shape_numel(impl_->shape); }
    DType dtype() const { return impl_->dtype; }

    bool requires_grad() const { return impl_->requires_grad; }
    void set_requires_grad(bool flag) const { impl_->requires_grad = flag; }
    int64_t node_id() const { return impl_->node_id; }

    // Tensor is a shared handle, so mutators are const in the shared_ptr
    // sense: they change the pointed-to storage, not the handle.

    /// Typed element access; the requested type must match dtype().
    template <class T>
    std::span<const T> data() const {
        return std::span<const T>(std::get<std::vector<T>>(impl_->values));
    }
    template <class T>
    std::span<T> mutable_data() const {
        auto& v = std::get<std::vector<T>>(impl_->values);
        return std::span<T>(v);
    }

    /// Untyped convenience accessors (tests, hand-built weights). Slow path.
    double get(int64_t flat_index) const;
    void set(int64_t flat_index, double value) const;
    double item() const;  // scalar tensors only
    std::vector<double> to_vector() const;

    bool has_grad() const;
    double grad_get(int64_t flat_index) const;
    std::vector<double> grad_to_vector() const;
    template <class T>
    std::span<T> grad_data() const {
        return std::span<T>(std::get<std::vector<T>>(impl_->grad));
    }
    void zero_grad() const;

    /// Deep copy of values (fresh storage, no grad, not recorded).
    Tensor clone() const;
    /// Overwrites this tensor's values with another's; shapes/dtypes must match.
    void copy_values_from(const Tensor& other) const;

    bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }

    detail::TensorImpl* impl() const { return impl_.get(); }

  private:
    friend class Tape;
    std::shared_ptr<detail::TensorImpl> impl_;
};

namespace detail {

/// Calls fn with a zero value of the active scalar type.
template <class Fn>
decltype(auto) dispatch(DType dt, Fn&& fn) {
    if (dt == DType::F32) return fn(float{});
    return fn(double{});
}

/// Ensures the grad storage exists (zero-filled) and returns it.
template <class T>
std::vector<T>& ensure_grad(TensorImpl& impl) {
    auto* g = std::get_if<std::vector<T>>(&impl.grad);
    if (g == nullptr || g->size() != static_cast<size_t>(shape_numel(impl.shape))) {
        impl.grad = std::vector<T>(static_cast<size_t>(shape_numel(impl.shape)), T{0});
        g = &std::get<std::vector<T>>(impl.grad);
    }
    return *g;
}

}  // namespace detail

}  // namespace alignkit
