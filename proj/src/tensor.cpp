#include "din/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "din/tape.hpp"

namespace din {

std::string Shape::str() const {
    std::ostringstream os;
    os << '(' << n << ',' << c << ',' << h << ',' << w << ')';
    return os.str();
}

namespace {

void check_shape(const Shape& shape) {
    if (!shape.valid()) {
        throw ShapeError("tensor shape " + shape.str() + " has a non-positive extent");
    }
}

}  // namespace

template <typename T>
Tensor<T> Tensor<T>::zeros(Shape shape, bool requires_grad) {
    return full(shape, T(0), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::full(Shape shape, T fill, bool requires_grad) {
    check_shape(shape);
    auto impl = std::make_shared<Impl>();
    impl->shape = shape;
    impl->data.assign(static_cast<std::size_t>(shape.numel()), fill);
    Tensor t(std::move(impl));
    t.set_requires_grad(requires_grad);
    return t;
}

template <typename T>
Tensor<T> Tensor<T>::from(Shape shape, std::vector<T> values, bool requires_grad) {
    check_shape(shape);
    if (static_cast<std::int64_t>(values.size()) != shape.numel()) {
        throw ShapeError("tensor shape " + shape.str() + " needs " + std::to_string(shape.numel()) +
                         " values, got " + std::to_string(values.size()));
    }
    auto impl = std::make_shared<Impl>();
    impl->shape = shape;
    impl->data = std::move(values);
    Tensor t(std::move(impl));
    t.set_requires_grad(requires_grad);
    return t;
}

template <typename T>
void Tensor<T>::set_requires_grad(bool flag) {
    impl_->requires_grad = flag;
    if (flag && impl_->grad.empty()) {
        impl_->grad.assign(impl_->data.size(), T(0));
    }
}

template <typename T>
std::span<T> Tensor<T>::mutable_grad() const {
    if (impl_->grad.empty()) {
        impl_->grad.assign(impl_->data.size(), T(0));
    }
    return impl_->grad;
}

template <typename T>
void Tensor<T>::zero_grad() {
    std::fill(impl_->grad.begin(), impl_->grad.end(), T(0));
}

template <typename T>
T Tensor<T>::item() const {
    if (numel() != 1) {
        throw ShapeError("item() on tensor of shape " + shape().str());
    }
    return impl_->data[0];
}

template <typename T>
Tensor<T> Tensor<T>::clone(bool requires_grad) const {
    return from(shape(), impl_->data, requires_grad);
}

template <typename T>
bool all_finite(std::span<const T> values) {
    return std::all_of(values.begin(), values.end(), [](T v) { return std::isfinite(v); });
}

template <typename T>
void require_finite(std::span<const T> values, const char* where) {
    if (!all_finite(values)) {
        throw NumericError(std::string("non-finite value produced by ") + where);
    }
}

template class Tensor<float>;
template class Tensor<double>;
template bool all_finite<float>(std::span<const float>);
template bool all_finite<double>(std::span<const double>);
template void require_finite<float>(std::span<const float>, const char*);
template void require_finite<double>(std::span<const double>, const char*);

}  // namespace din
