#include "din/nn.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include <Eigen/Core>

namespace din::nn {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;

struct ConvGeometry {
    std::int64_t in_c, h, w, k, pad, out_h, out_w;
    [[nodiscard]] std::int64_t rows() const { return in_c * k * k; }
    [[nodiscard]] std::int64_t cols() const { return out_h * out_w; }
    [[nodiscard]] bool direct() const { return k == 1 && pad == 0; }
};

// cols[(ci*k + ky)*k + kx][oy*out_w + ox] = x[ci][oy + ky - pad][ox + kx - pad]
template <typename T>
void im2col(const T* x, const ConvGeometry& g, T* cols) {
    for (std::int64_t ci = 0; ci < g.in_c; ++ci) {
        const T* plane = x + ci * g.h * g.w;
        for (std::int64_t ky = 0; ky < g.k; ++ky) {
            for (std::int64_t kx = 0; kx < g.k; ++kx) {
                T* row = cols + ((ci * g.k + ky) * g.k + kx) * g.cols();
                for (std::int64_t oy = 0; oy < g.out_h; ++oy) {
                    const std::int64_t iy = oy + ky - g.pad;
                    T* dst = row + oy * g.out_w;
                    if (iy < 0 || iy >= g.h) {
                        std::fill(dst, dst + g.out_w, T(0));
                        continue;
                    }
                    for (std::int64_t ox = 0; ox < g.out_w; ++ox) {
                        const std::int64_t ix = ox + kx - g.pad;
                        dst[ox] = (ix < 0 || ix >= g.w) ? T(0) : plane[iy * g.w + ix];
                    }
                }
            }
        }
    }
}

template <typename T>
void col2im(const T* cols, const ConvGeometry& g, T* dx) {
    for (std::int64_t ci = 0; ci < g.in_c; ++ci) {
        T* plane = dx + ci * g.h * g.w;
        for (std::int64_t ky = 0; ky < g.k; ++ky) {
            for (std::int64_t kx = 0; kx < g.k; ++kx) {
                const T* row = cols + ((ci * g.k + ky) * g.k + kx) * g.cols();
                for (std::int64_t oy = 0; oy < g.out_h; ++oy) {
                    const std::int64_t iy = oy + ky - g.pad;
                    if (iy < 0 || iy >= g.h) continue;
                    const T* src = row + oy * g.out_w;
                    for (std::int64_t ox = 0; ox < g.out_w; ++ox) {
                        const std::int64_t ix = ox + kx - g.pad;
                        if (ix >= 0 && ix < g.w) plane[iy * g.w + ix] += src[ox];
                    }
                }
            }
        }
    }
}

}  // namespace

template <typename T>
Tensor<T> conv2d(Tape<T>& tape, const Tensor<T>& x, const Tensor<T>& weight,
                 const Tensor<T>& bias, int padding) {
    const Shape xs = x.shape();
    const Shape ws = weight.shape();
    if (ws.h != ws.w) throw ShapeError("conv2d: kernel must be square, got " + ws.str());
    if (xs.c != ws.c) {
        throw ShapeError("conv2d: input has " + std::to_string(xs.c) + " channels, weight expects " +
                         std::to_string(ws.c));
    }
    if (padding < 0) throw ShapeError("conv2d: negative padding");
    const std::int64_t out_c = ws.n;
    if (bias.defined() && bias.numel() != out_c) {
        throw ShapeError("conv2d: bias has " + std::to_string(bias.numel()) + " entries for " +
                         std::to_string(out_c) + " output channels");
    }
    const ConvGeometry g{xs.c, xs.h, xs.w, ws.h, padding, xs.h + 2 * padding - ws.h + 1,
                         xs.w + 2 * padding - ws.w + 1};
    if (g.out_h < 1 || g.out_w < 1) {
        throw ShapeError("conv2d: kernel " + ws.str() + " with padding " + std::to_string(padding) +
                         " does not fit input " + xs.str());
    }

    auto out = Tensor<T>::zeros(Shape{xs.n, out_c, g.out_h, g.out_w});
    const ConstMatMap<T> wmat(weight.data().data(), out_c, g.rows());
    std::vector<T> cols(g.direct() ? 0 : static_cast<std::size_t>(g.rows() * g.cols()));
    for (std::int64_t n = 0; n < xs.n; ++n) {
        const T* xn = x.data().data() + n * xs.c * xs.plane();
        const T* src = xn;
        if (!g.direct()) {
            im2col(xn, g, cols.data());
            src = cols.data();
        }
        MatMap<T> omat(out.mutable_data().data() + n * out_c * g.cols(), out_c, g.cols());
        omat.noalias() = wmat * ConstMatMap<T>(src, g.rows(), g.cols());
        if (bias.defined()) {
            const auto b = bias.data();
            for (std::int64_t oc = 0; oc < out_c; ++oc) omat.row(oc).array() += b[oc];
        }
    }
    require_finite<T>(out.data(), "conv2d");

    if (tape.needs_grad({&x, &weight, &bias})) {
        tape.record("conv2d", {x, weight, bias}, out, [x, weight, bias, out, g]() mutable {
            const Shape xs = x.shape();
            const std::int64_t out_c = weight.shape().n;
            const auto gout = out.grad();
            std::vector<T> cols(static_cast<std::size_t>(g.rows() * g.cols()));
            const bool need_w = weight.requires_grad();
            const bool need_x = x.requires_grad();
            const bool need_b = bias.defined() && bias.requires_grad();
            for (std::int64_t n = 0; n < xs.n; ++n) {
                const ConstMatMap<T> gmat(gout.data() + n * out_c * g.cols(), out_c, g.cols());
                if (need_b) {
                    auto gb = bias.mutable_grad();
                    for (std::int64_t oc = 0; oc < out_c; ++oc) gb[oc] += gmat.row(oc).sum();
                }
                if (need_w) {
                    const T* xn = x.data().data() + n * xs.c * xs.plane();
                    const T* src = xn;
                    if (!g.direct()) {
                        im2col(xn, g, cols.data());
                        src = cols.data();
                    }
                    MatMap<T> gw(weight.mutable_grad().data(), out_c, g.rows());
                    gw.noalias() += gmat * ConstMatMap<T>(src, g.rows(), g.cols()).transpose();
                }
                if (need_x) {
                    const ConstMatMap<T> wmat(weight.data().data(), out_c, g.rows());
                    T* gx = x.mutable_grad().data() + n * xs.c * xs.plane();
                    if (g.direct()) {
                        MatMap<T>(gx, g.rows(), g.cols()).noalias() += wmat.transpose() * gmat;
                    } else {
                        MatMap<T>(cols.data(), g.rows(), g.cols()).noalias() =
                            wmat.transpose() * gmat;
                        col2im(cols.data(), g, gx);
                    }
                }
            }
        });
    }
    return out;
}

template <typename T>
Tensor<T> depthwise_conv1x1(Tape<T>& tape, const Tensor<T>& x, const Tensor<T>& weight) {
    const Shape xs = x.shape();
    if (weight.numel() != xs.c) {
        throw ShapeError("depthwise_conv1x1: weight has " + std::to_string(weight.numel()) +
                         " entries for " + std::to_string(xs.c) + " channels");
    }
    auto out = Tensor<T>::zeros(xs);
    auto o = out.mutable_data();
    const auto in = x.data();
    const auto wv = weight.data();
    const std::int64_t plane = xs.plane();
    for (std::int64_t n = 0; n < xs.n; ++n) {
        for (std::int64_t c = 0; c < xs.c; ++c) {
            const std::int64_t base = (n * xs.c + c) * plane;
            for (std::int64_t i = 0; i < plane; ++i) o[base + i] = wv[c] * in[base + i];
        }
    }
    require_finite<T>(out.data(), "depthwise_conv1x1");
    if (tape.needs_grad({&x, &weight})) {
        tape.record("depthwise_conv1x1", {x, weight}, out, [x, weight, out]() mutable {
            const Shape xs = x.shape();
            const std::int64_t plane = xs.plane();
            const auto g = out.grad();
            const auto in = x.data();
            const auto wv = weight.data();
            for (std::int64_t n = 0; n < xs.n; ++n) {
                for (std::int64_t c = 0; c < xs.c; ++c) {
                    const std::int64_t base = (n * xs.c + c) * plane;
                    if (x.requires_grad()) {
                        auto gx = x.mutable_grad();
                        for (std::int64_t i = 0; i < plane; ++i) gx[base + i] += wv[c] * g[base + i];
                    }
                    if (weight.requires_grad()) {
                        T acc = 0;
                        for (std::int64_t i = 0; i < plane; ++i) acc += in[base + i] * g[base + i];
                        weight.mutable_grad()[c] += acc;
                    }
                }
            }
        });
    }
    return out;
}

template <typename T>
Tensor<T> leaky_relu(Tape<T>& tape, const Tensor<T>& x, T slope) {
    auto out = Tensor<T>::zeros(x.shape());
    auto o = out.mutable_data();
    const auto in = x.data();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = in[i] >= T(0) ? in[i] : slope * in[i];
    if (tape.needs_grad({&x})) {
        tape.record("leaky_relu", {x}, out, [x, out, slope]() mutable {
            const auto g = out.grad();
            const auto in = x.data();
            auto gx = x.mutable_grad();
            for (std::size_t i = 0; i < g.size(); ++i) gx[i] += in[i] >= T(0) ? g[i] : slope * g[i];
        });
    }
    return out;
}

template <typename T>
Tensor<T> global_avg_pool(Tape<T>& tape, const Tensor<T>& x) {
    const Shape xs = x.shape();
    auto out = Tensor<T>::zeros(Shape{xs.n, xs.c, 1, 1});
    const std::int64_t plane = xs.plane();
    const T inv = T(1) / static_cast<T>(plane);
    const auto in = x.data();
    auto o = out.mutable_data();
    for (std::int64_t nc = 0; nc < xs.n * xs.c; ++nc) {
        T acc = 0;
        for (std::int64_t i = 0; i < plane; ++i) acc += in[nc * plane + i];
        o[nc] = acc * inv;
    }
    if (tape.needs_grad({&x})) {
        tape.record("global_avg_pool", {x}, out, [x, out, plane, inv]() mutable {
            const auto g = out.grad();
            auto gx = x.mutable_grad();
            for (std::size_t nc = 0; nc < g.size(); ++nc) {
                const T share = g[nc] * inv;
                for (std::int64_t i = 0; i < plane; ++i) gx[nc * plane + i] += share;
            }
        });
    }
    return out;
}

namespace {

// Index map shared by shuffle/unshuffle: for each low-res-layout offset,
// the matching offset in the high-res layout.
std::vector<std::int64_t> shuffle_index(const Shape& low, int r) {
    const std::int64_t rr = static_cast<std::int64_t>(r) * r;
    const std::int64_t oc = low.c / rr;
    const std::int64_t oh = low.h * r;
    const std::int64_t ow = low.w * r;
    std::vector<std::int64_t> idx(static_cast<std::size_t>(low.numel()));
    for (std::int64_t n = 0; n < low.n; ++n) {
        for (std::int64_t c = 0; c < low.c; ++c) {
            const std::int64_t group = c / rr;
            const std::int64_t a = (c % rr) / r;
            const std::int64_t b = c % r;
            for (std::int64_t i = 0; i < low.h; ++i) {
                for (std::int64_t j = 0; j < low.w; ++j) {
                    const std::int64_t src = ((n * low.c + c) * low.h + i) * low.w + j;
                    const std::int64_t dst =
                        ((n * oc + group) * oh + (r * i + a)) * ow + (r * j + b);
                    idx[static_cast<std::size_t>(src)] = dst;
                }
            }
        }
    }
    return idx;
}

}  // namespace

template <typename T>
Tensor<T> pixel_shuffle(Tape<T>& tape, const Tensor<T>& x, int r) {
    const Shape xs = x.shape();
    if (r < 1) throw ShapeError("pixel_shuffle: factor must be >= 1");
    const std::int64_t rr = static_cast<std::int64_t>(r) * r;
    if (xs.c % rr != 0) {
        throw ShapeError("pixel_shuffle: " + std::to_string(xs.c) +
                         " channels not divisible by r^2 = " + std::to_string(rr));
    }
    auto out = Tensor<T>::zeros(Shape{xs.n, xs.c / rr, xs.h * r, xs.w * r});
    const auto idx = shuffle_index(xs, r);
    const auto in = x.data();
    auto o = out.mutable_data();
    for (std::size_t i = 0; i < idx.size(); ++i) o[idx[i]] = in[i];
    if (tape.needs_grad({&x})) {
        tape.record("pixel_shuffle", {x}, out, [x, out, idx]() mutable {
            const auto g = out.grad();
            auto gx = x.mutable_grad();
            for (std::size_t i = 0; i < idx.size(); ++i) gx[i] += g[idx[i]];
        });
    }
    return out;
}

template <typename T>
Tensor<T> pixel_unshuffle(Tape<T>& tape, const Tensor<T>& x, int r) {
    const Shape xs = x.shape();
    if (r < 1 || xs.h % r != 0 || xs.w % r != 0) {
        throw ShapeError("pixel_unshuffle: spatial extent " + xs.str() +
                         " not divisible by factor " + std::to_string(r));
    }
    const std::int64_t rr = static_cast<std::int64_t>(r) * r;
    const Shape low{xs.n, xs.c * rr, xs.h / r, xs.w / r};
    auto out = Tensor<T>::zeros(low);
    const auto idx = shuffle_index(low, r);
    const auto in = x.data();
    auto o = out.mutable_data();
    for (std::size_t i = 0; i < idx.size(); ++i) o[i] = in[idx[i]];
    if (tape.needs_grad({&x})) {
        tape.record("pixel_unshuffle", {x}, out, [x, out, idx]() mutable {
            const auto g = out.grad();
            auto gx = x.mutable_grad();
            for (std::size_t i = 0; i < idx.size(); ++i) gx[idx[i]] += g[i];
        });
    }
    return out;
}

template <typename T>
Tensor<T> channel_pair_softmax(Tape<T>& tape, const Tensor<T>& s) {
    const Shape ss = s.shape();
    if (ss.c % 2 != 0) {
        throw ShapeError("channel_pair_softmax: odd channel count " + std::to_string(ss.c));
    }
    if (ss.h != 1 || ss.w != 1) {
        throw ShapeError("channel_pair_softmax: expected (n, 2c, 1, 1), got " + ss.str());
    }
    const std::int64_t c = ss.c / 2;
    auto alpha = Tensor<T>::zeros(Shape{ss.n, c, 1, 1});
    const auto in = s.data();
    auto a = alpha.mutable_data();
    for (std::int64_t n = 0; n < ss.n; ++n) {
        for (std::int64_t k = 0; k < c; ++k) {
            const T s1 = in[n * ss.c + k];
            const T s2 = in[n * ss.c + c + k];
            const T m = std::max(s1, s2);
            const T e1 = std::exp(s1 - m);
            const T e2 = std::exp(s2 - m);
            a[n * c + k] = e1 / (e1 + e2);
        }
    }
    require_finite<T>(alpha.data(), "channel_pair_softmax");
    if (tape.needs_grad({&s})) {
        tape.record("channel_pair_softmax", {s}, alpha, [s, alpha, c]() mutable {
            const Shape ss = s.shape();
            const auto g = alpha.grad();
            const auto a = alpha.data();
            auto gs = s.mutable_grad();
            for (std::int64_t n = 0; n < ss.n; ++n) {
                for (std::int64_t k = 0; k < c; ++k) {
                    const T av = a[n * c + k];
                    const T d = g[n * c + k] * av * (T(1) - av);
                    gs[n * ss.c + k] += d;
                    gs[n * ss.c + c + k] -= d;
                }
            }
        });
    }
    return alpha;
}

template <typename T>
Tensor<T> attention_blend(Tape<T>& tape, const Tensor<T>& alpha, const Tensor<T>& x1,
                          const Tensor<T>& x2) {
    const Shape xs = x1.shape();
    if (x2.shape() != xs) {
        throw ShapeError("attention_blend: " + xs.str() + " vs " + x2.shape().str());
    }
    if (alpha.shape() != Shape{xs.n, xs.c, 1, 1}) {
        throw ShapeError("attention_blend: weights " + alpha.shape().str() + " for features " +
                         xs.str());
    }
    auto out = Tensor<T>::zeros(xs);
    const std::int64_t plane = xs.plane();
    const auto a = alpha.data();
    const auto p = x1.data();
    const auto q = x2.data();
    auto o = out.mutable_data();
    for (std::int64_t nc = 0; nc < xs.n * xs.c; ++nc) {
        const T wa = a[nc];
        const T wb = T(1) - wa;
        for (std::int64_t i = 0; i < plane; ++i) {
            const auto k = nc * plane + i;
            o[k] = wa * p[k] + wb * q[k];
        }
    }
    require_finite<T>(out.data(), "attention_blend");
    if (tape.needs_grad({&alpha, &x1, &x2})) {
        tape.record("attention_blend", {alpha, x1, x2}, out, [alpha, x1, x2, out, plane]() mutable {
            const auto g = out.grad();
            const auto a = alpha.data();
            const auto p = x1.data();
            const auto q = x2.data();
            for (std::size_t nc = 0; nc < a.size(); ++nc) {
                const T wa = a[nc];
                const T wb = T(1) - wa;
                T ga = 0;
                for (std::int64_t i = 0; i < plane; ++i) {
                    const auto k = nc * plane + i;
                    ga += g[k] * (p[k] - q[k]);
                    if (x1.requires_grad()) x1.mutable_grad()[k] += wa * g[k];
                    if (x2.requires_grad()) x2.mutable_grad()[k] += wb * g[k];
                }
                if (alpha.requires_grad()) alpha.mutable_grad()[nc] += ga;
            }
        });
    }
    return out;
}

template <typename T>
Tensor<T> l1_loss(Tape<T>& tape, const Tensor<T>& pred, const Tensor<T>& target) {
    if (pred.shape() != target.shape()) {
        throw ShapeError("l1_loss: prediction " + pred.shape().str() + " vs target " +
                         target.shape().str());
    }
    auto out = Tensor<T>::zeros(Shape{});
    const auto p = pred.data();
    const auto t = target.data();
    const T count = static_cast<T>(p.size());
    T acc = 0;
    for (std::size_t i = 0; i < p.size(); ++i) acc += std::abs(p[i] - t[i]);
    out.mutable_data()[0] = acc / count;
    require_finite<T>(out.data(), "l1_loss");
    if (tape.needs_grad({&pred, &target})) {
        tape.record("l1_loss", {pred, target}, out, [pred, target, out, count]() mutable {
            const T g = out.grad()[0] / count;
            const auto p = pred.data();
            const auto t = target.data();
            for (std::size_t i = 0; i < p.size(); ++i) {
                const T r = p[i] - t[i];
                const T s = r > T(0) ? g : (r < T(0) ? -g : T(0));
                if (pred.requires_grad()) pred.mutable_grad()[i] += s;
                if (target.requires_grad()) target.mutable_grad()[i] -= s;
            }
        });
    }
    return out;
}

#define DIN_INSTANTIATE_NN(T)                                                                     \
    template Tensor<T> conv2d<T>(Tape<T>&, const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,  \
                                 int);                                                            \
    template Tensor<T> depthwise_conv1x1<T>(Tape<T>&, const Tensor<T>&, const Tensor<T>&);        \
    template Tensor<T> leaky_relu<T>(Tape<T>&, const Tensor<T>&, T);                              \
    template Tensor<T> global_avg_pool<T>(Tape<T>&, const Tensor<T>&);                            \
    template Tensor<T> pixel_shuffle<T>(Tape<T>&, const Tensor<T>&, int);                         \
    template Tensor<T> pixel_unshuffle<T>(Tape<T>&, const Tensor<T>&, int);                       \
    template Tensor<T> channel_pair_softmax<T>(Tape<T>&, const Tensor<T>&);                       \
    template Tensor<T> attention_blend<T>(Tape<T>&, const Tensor<T>&, const Tensor<T>&,           \
                                          const Tensor<T>&);                                      \
    template Tensor<T> l1_loss<T>(Tape<T>&, const Tensor<T>&, const Tensor<T>&);

DIN_INSTANTIATE_NN(float)
DIN_INSTANTIATE_NN(double)

}  // namespace din::nn
