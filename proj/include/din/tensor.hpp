#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "din/error.hpp"

namespace din {

// Extent of a dense (batch, channel, height, width) array.
struct Shape {
    std::int64_t n = 1;
    std::int64_t c = 1;
    std::int64_t h = 1;
    std::int64_t w = 1;

    [[nodiscard]] std::int64_t numel() const { return n * c * h * w; }
    [[nodiscard]] std::int64_t plane() const { return h * w; }
    [[nodiscard]] bool valid() const { return n >= 1 && c >= 1 && h >= 1 && w >= 1; }
    [[nodiscard]] std::string str() const;

    friend bool operator==(const Shape&, const Shape&) = default;
};

template <typename T>
class Tape;

// Reference-counted handle to row-major (n,c,h,w) storage plus an optional
// gradient buffer of the same shape. Copies share storage.
template <typename T>
class Tensor {
public:
    using value_type = T;

    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, T fill, bool requires_grad = false);
    static Tensor from(Shape shape, std::vector<T> values, bool requires_grad = false);

    [[nodiscard]] bool defined() const { return impl_ != nullptr; }
    [[nodiscard]] const Shape& shape() const { return impl_->shape; }
    [[nodiscard]] std::int64_t numel() const { return impl_->shape.numel(); }

    [[nodiscard]] std::span<const T> data() const { return impl_->data; }
    [[nodiscard]] std::span<T> mutable_data() { return impl_->data; }

    [[nodiscard]] bool requires_grad() const { return impl_->requires_grad; }
    void set_requires_grad(bool flag);

    [[nodiscard]] bool has_grad() const { return !impl_->grad.empty(); }
    [[nodiscard]] std::span<const T> grad() const { return impl_->grad; }
    // Allocates a zero buffer on first access. The buffer is shared by all handles.
    [[nodiscard]] std::span<T> mutable_grad() const;
    void zero_grad();

    [[nodiscard]] T at(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w) const {
        return impl_->data[offset(n, c, h, w)];
    }
    T& at(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w) {
        return impl_->data[offset(n, c, h, w)];
    }
    [[nodiscard]] T item() const;

    [[nodiscard]] std::int64_t offset(std::int64_t n, std::int64_t c, std::int64_t h,
                                      std::int64_t w) const {
        const Shape& s = impl_->shape;
        return ((n * s.c + c) * s.h + h) * s.w + w;
    }

    // Deep copy without tape linkage or gradient.
    [[nodiscard]] Tensor clone(bool requires_grad = false) const;

    [[nodiscard]] bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }

private:
    friend class Tape<T>;

    struct Impl {
        Shape shape;
        std::vector<T> data;
        std::vector<T> grad;
        bool requires_grad = false;
        const Tape<T>* tape = nullptr;
        std::size_t node = 0;
    };

    explicit Tensor(std::shared_ptr<Impl> impl) : impl_(std::move(impl)) {}

    std::shared_ptr<Impl> impl_;
};

template <typename T>
[[nodiscard]] bool all_finite(std::span<const T> values);

// Throws NumericError naming `where` if any value is NaN or infinite.
template <typename T>
void require_finite(std::span<const T> values, const char* where);

}  // namespace din
