#include "alignkit/tensor.h"

#include <sstream>

namespace alignkit {

DType dtype_from_name(const std::string& name) {
    if (name == "f32") return DType::F32;
    if (name == "f64") return DType::F64;
    throw FormatError("unknown dtype name: '" + name + "'");
}

std::string shape_str(const Shape& shape) {
    std::ostringstream out;
    out << "[";
    for (size_t i = 0; i < shape.size(); ++i) {
        if (i > 0) out << "x";
        out << shape[i];
    }
    out << "]";
    return out.str();
}

int64_t shape_numel(const Shape& shape) {
    int64_t n = 1;
    for (int64_t extent : shape) n *= extent;
    return n;
}

namespace {

void validate_shape(const Shape& shape) {
    for (int64_t extent : shape) {
        if (extent <= 0) {
            throw DimensionError("tensor extents must be positive, got " + shape_str(shape));
        }
    }
}

std::shared_ptr<detail::TensorImpl> make_impl(Shape shape, DType dtype) {
    validate_shape(shape);
    auto impl = std::make_shared<detail::TensorImpl>();
    impl->dtype = dtype;
    size_t n = static_cast<size_t>(shape_numel(shape));
    impl->shape = std::move(shape);
    if (dtype == DType::F32) {
        impl->values = std::vector<float>(n, 0.0f);
    } else {
        impl->values = std::vector<double>(n, 0.0);
    }
    return impl;
}

}  // namespace

Tensor Tensor::zeros(Shape shape, DType dtype, bool requires_grad) {
    Tensor t;
    t.impl_ = make_impl(std::move(shape), dtype);
    t.impl_->requires_grad = requires_grad;
    return t;
}

Tensor Tensor::full(Shape shape, double value, DType dtype) {
    Tensor t = zeros(std::move(shape), dtype);
    detail::dispatch(dtype, [&](auto tag) {
        using T = decltype(tag);
        for (auto& v : t.mutable_data<T>()) v = static_cast<T>(value);
    });
    return t;
}

Tensor Tensor::scalar(double value, DType dtype) { return full({1}, value, dtype); }

Tensor Tensor::from_values(Shape shape, const std::vector<double>& values, DType dtype) {
    if (static_cast<int64_t>(values.size()) != shape_numel(shape)) {
        throw DimensionError("value count " + std::to_string(values.size()) +
                             " does not fill shape " + shape_str(shape));
    }
    Tensor t = zeros(std::move(shape), dtype);
    detail::dispatch(dtype, [&](auto tag) {
        using T = decltype(tag);
        auto dst = t.mutable_data<T>();
        for (size_t i = 0; i < values.size(); ++i) dst[i] = static_cast<T>(values[i]);
    });
    return t;
}

double Tensor::get(int64_t flat_index) const {
    return detail::dispatch(impl_->dtype, [&](auto tag) -> double {
        using T = decltype(tag);
        return static_cast<double>(data<T>()[static_cast<size_t>(flat_index)]);
    });
}

void Tensor::set(int64_t flat_index, double value) const {
    detail::dispatch(impl_->dtype, [&](auto tag) {
        using T = decltype(tag);
        const_cast<Tensor*>(this)->mutable_data<T>()[static_cast<size_t>(flat_index)] =
            static_cast<T>(value);
    });
}

double Tensor::item() const {
    if (numel() != 1) {
        throw ContractError("item() requires a scalar tensor, got shape " + shape_str(shape()));
    }
    return get(0);
}

std::vector<double> Tensor::to_vector() const {
    std::vector<double> out(static_cast<size_t>(numel()));
    for (size_t i = 0; i < out.size(); ++i) out[i] = get(static_cast<int64_t>(i));
    return out;
}

bool Tensor::has_grad() const {
    return detail::dispatch(impl_->dtype, [&](auto tag) -> bool {
        using T = decltype(tag);
        auto* g = std::get_if<std::vector<T>>(&impl_->grad);
        return g != nullptr && g->size() == static_cast<size_t>(numel());
    });
}

double Tensor::grad_get(int64_t flat_index) const {
    if (!has_grad()) throw ContractError("tensor has no gradient");
    return detail::dispatch(impl_->dtype, [&](auto tag) -> double {
        using T = decltype(tag);
        return static_cast<double>(
            std::get<std::vector<T>>(impl_->grad)[static_cast<size_t>(flat_index)]);
    });
}

std::vector<double> Tensor::grad_to_vector() const {
    std::vector<double> out(static_cast<size_t>(numel()));
    for (size_t i = 0; i < out.size(); ++i) out[i] = grad_get(static_cast<int64_t>(i));
    return out;
}

void Tensor::zero_grad() const {
    detail::dispatch(impl_->dtype, [&](auto tag) {
        using T = decltype(tag);
        impl_->grad = std::vector<T>();
    });
}

Tensor Tensor::clone() const {
    Tensor t;
    t.impl_ = std::make_shared<detail::TensorImpl>();
    t.impl_->shape = impl_->shape;
    t.impl_->dtype = impl_->dtype;
    t.impl_->values = impl_->values;
    return t;
}

void Tensor::copy_values_from(const Tensor& other) const {
    if (other.shape() != shape()) {
        throw DimensionError("copy_values_from shape mismatch: " + shape_str(shape()) + " vs " +
                             shape_str(other.shape()));
    }
    if (other.dtype() != dtype()) throw DimensionError("copy_values_from dtype mismatch");
    impl_->values = other.impl_->values;
}

}  // namespace alignkit
