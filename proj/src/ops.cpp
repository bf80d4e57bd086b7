#include "din/ops.hpp"

#include <numeric>

namespace din::ops {

namespace {

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw ShapeError(std::string(op) + ": shape mismatch " + a.shape().str() + " vs " +
                         b.shape().str());
    }
}

}  // namespace

template <typename T>
Tensor<T> add(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b) {
    require_same_shape(a, b, "add");
    auto out = Tensor<T>::zeros(a.shape());
    auto o = out.mutable_data();
    auto x = a.data();
    auto y = b.data();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] + y[i];
    require_finite<T>(out.data(), "add");
    if (tape.needs_grad({&a, &b})) {
        tape.record("add", {a, b}, out, [a, b, out]() mutable {
            auto g = out.grad();
            if (a.requires_grad()) {
                auto ga = a.mutable_grad();
                for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
            }
            if (b.requires_grad()) {
                auto gb = b.mutable_grad();
                for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
            }
        });
    }
    return out;
}

template <typename T>
Tensor<T> sub(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b) {
    require_same_shape(a, b, "sub");
    auto out = Tensor<T>::zeros(a.shape());
    auto o = out.mutable_data();
    auto x = a.data();
    auto y = b.data();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] - y[i];
    require_finite<T>(out.data(), "sub");
    if (tape.needs_grad({&a, &b})) {
        tape.record("sub", {a, b}, out, [a, b, out]() mutable {
            auto g = out.grad();
            if (a.requires_grad()) {
                auto ga = a.mutable_grad();
                for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
            }
            if (b.requires_grad()) {
                auto gb = b.mutable_grad();
                for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
            }
        });
    }
    return out;
}

template <typename T>
Tensor<T> mul(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b) {
    require_same_shape(a, b, "mul");
    auto out = Tensor<T>::zeros(a.shape());
    auto o = out.mutable_data();
    auto x = a.data();
    auto y = b.data();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] * y[i];
    require_finite<T>(out.data(), "mul");
    if (tape.needs_grad({&a, &b})) {
        tape.record("mul", {a, b}, out, [a, b, out]() mutable {
            auto g = out.grad();
            auto x = a.data();
            auto y = b.data();
            if (a.requires_grad()) {
                auto ga = a.mutable_grad();
                for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i];
            }
            if (b.requires_grad()) {
                auto gb = b.mutable_grad();
                for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * x[i];
            }
        });
    }
    return out;
}

template <typename T>
Tensor<T> scale(Tape<T>& tape, const Tensor<T>& a, T factor) {
    auto out = Tensor<T>::zeros(a.shape());
    auto o = out.mutable_data();
    auto x = a.data();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] * factor;
    require_finite<T>(out.data(), "scale");
    if (tape.needs_grad({&a})) {
        tape.record("scale", {a}, out, [a, out, factor]() mutable {
            auto g = out.grad();
            auto ga = a.mutable_grad();
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * factor;
        });
    }
    return out;
}

template <typename T>
Tensor<T> concat_channels(Tape<T>& tape, std::span<const Tensor<T>> parts) {
    if (parts.empty()) throw ShapeError("concat_channels: no inputs");
    const Shape first = parts[0].shape();
    std::int64_t channels = 0;
    for (const auto& p : parts) {
        const Shape s = p.shape();
        if (s.n != first.n || s.h != first.h || s.w != first.w) {
            throw ShapeError("concat_channels: " + s.str() + " does not match " + first.str() +
                             " on n,h,w");
        }
        channels += s.c;
    }
    const Shape out_shape{first.n, channels, first.h, first.w};
    auto out = Tensor<T>::zeros(out_shape);
    auto o = out.mutable_data();
    const std::int64_t plane = first.plane();
    for (std::int64_t n = 0; n < first.n; ++n) {
        std::int64_t c_off = 0;
        for (const auto& p : parts) {
            const std::int64_t block = p.shape().c * plane;
            auto src = p.data().subspan(static_cast<std::size_t>(n * block),
                                        static_cast<std::size_t>(block));
            std::copy(src.begin(), src.end(),
                      o.begin() + (n * channels + c_off) * plane);
            c_off += p.shape().c;
        }
    }
    std::vector<Tensor<T>> inputs(parts.begin(), parts.end());
    if (tape.needs_grad(inputs)) {
        tape.record("concat_channels", inputs, out, [inputs, out, channels, plane]() mutable {
            auto g = out.grad();
            const std::int64_t batch = out.shape().n;
            for (std::int64_t n = 0; n < batch; ++n) {
                std::int64_t c_off = 0;
                for (auto& p : inputs) {
                    const std::int64_t block = p.shape().c * plane;
                    if (p.requires_grad()) {
                        auto gp = p.mutable_grad();
                        const auto base = (n * channels + c_off) * plane;
                        for (std::int64_t i = 0; i < block; ++i) {
                            gp[static_cast<std::size_t>(n * block + i)] +=
                                g[static_cast<std::size_t>(base + i)];
                        }
                    }
                    c_off += p.shape().c;
                }
            }
        });
    }
    return out;
}

template <typename T>
std::vector<Tensor<T>> split_channels(Tape<T>& tape, const Tensor<T>& x,
                                      std::span<const std::int64_t> sizes) {
    const Shape s = x.shape();
    const std::int64_t total = std::accumulate(sizes.begin(), sizes.end(), std::int64_t{0});
    if (total != s.c) {
        throw ShapeError("split_channels: sizes sum to " + std::to_string(total) + " but input has " +
                         std::to_string(s.c) + " channels");
    }
    const std::int64_t plane = s.plane();
    std::vector<Tensor<T>> outs;
    std::int64_t c_off = 0;
    for (const std::int64_t size : sizes) {
        if (size < 1) throw ShapeError("split_channels: chunk sizes must be positive");
        auto out = Tensor<T>::zeros(Shape{s.n, size, s.h, s.w});
        auto o = out.mutable_data();
        const auto src = x.data();
        for (std::int64_t n = 0; n < s.n; ++n) {
            const auto from = (n * s.c + c_off) * plane;
            std::copy(src.begin() + from, src.begin() + from + size * plane,
                      o.begin() + n * size * plane);
        }
        if (tape.needs_grad({&x})) {
            tape.record("split_channels", {x}, out, [x, out, c_off, size, plane]() mutable {
                auto g = out.grad();
                auto gx = x.mutable_grad();
                const Shape xs = x.shape();
                for (std::int64_t n = 0; n < xs.n; ++n) {
                    const auto to = (n * xs.c + c_off) * plane;
                    const auto from = n * size * plane;
                    for (std::int64_t i = 0; i < size * plane; ++i) {
                        gx[static_cast<std::size_t>(to + i)] += g[static_cast<std::size_t>(from + i)];
                    }
                }
            });
        }
        outs.push_back(std::move(out));
        c_off += size;
    }
    return outs;
}

template <typename T>
Tensor<T> sum_all(Tape<T>& tape, const Tensor<T>& x) {
    auto out = Tensor<T>::zeros(Shape{});
    const auto v = x.data();
    out.mutable_data()[0] = std::accumulate(v.begin(), v.end(), T(0));
    require_finite<T>(out.data(), "sum_all");
    if (tape.needs_grad({&x})) {
        tape.record("sum_all", {x}, out, [x, out]() mutable {
            const T g = out.grad()[0];
            for (auto& gx : x.mutable_grad()) gx += g;
        });
    }
    return out;
}

template <typename T>
Tensor<T> mean_all(Tape<T>& tape, const Tensor<T>& x) {
    auto out = Tensor<T>::zeros(Shape{});
    const auto v = x.data();
    const T count = static_cast<T>(v.size());
    out.mutable_data()[0] = std::accumulate(v.begin(), v.end(), T(0)) / count;
    require_finite<T>(out.data(), "mean_all");
    if (tape.needs_grad({&x})) {
        tape.record("mean_all", {x}, out, [x, out, count]() mutable {
            const T g = out.grad()[0] / count;
            for (auto& gx : x.mutable_grad()) gx += g;
        });
    }
    return out;
}

#define DIN_INSTANTIATE_OPS(T)                                                                   \
    template Tensor<T> add<T>(Tape<T>&, const Tensor<T>&, const Tensor<T>&);                     \
    template Tensor<T> sub<T>(Tape<T>&, const Tensor<T>&, const Tensor<T>&);                     \
    template Tensor<T> mul<T>(Tape<T>&, const Tensor<T>&, const Tensor<T>&);                     \
    template Tensor<T> scale<T>(Tape<T>&, const Tensor<T>&, T);                                  \
    template Tensor<T> concat_channels<T>(Tape<T>&, std::span<const Tensor<T>>);                 \
    template std::vector<Tensor<T>> split_channels<T>(Tape<T>&, const Tensor<T>&,                \
                                                      std::span<const std::int64_t>);            \
    template Tensor<T> sum_all<T>(Tape<T>&, const Tensor<T>&);                                   \
    template Tensor<T> mean_all<T>(Tape<T>&, const Tensor<T>&);

DIN_INSTANTIATE_OPS(float)
DIN_INSTANTIATE_OPS(double)

}  // namespace din::ops
