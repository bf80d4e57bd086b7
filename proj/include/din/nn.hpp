#pragma once

#include "din/tape.hpp"
#include "din/tensor.hpp"

// Differentiable neural operators. Stateless; safe to call concurrently on
// disjoint tapes.
namespace din::nn {

// Stride-1 cross-correlation with zero padding.
//   x:      (n, in_c, h, w)
//   weight: (out_c, in_c, k, k)
//   bias:   (1, out_c, 1, 1) or undefined
// The output is (n, out_c, h + 2p - k + 1, w + 2p - k + 1).
template <typename T>
Tensor<T> conv2d(Tape<T>& tape, const Tensor<T>& x, const Tensor<T>& weight,
                 const Tensor<T>& bias, int padding);

// Per-channel scaling by a (c, 1, 1, 1) weight; the 1x1 depth-wise convolution.
template <typename T>
Tensor<T> depthwise_conv1x1(Tape<T>& tape, const Tensor<T>& x, const Tensor<T>& weight);

// max(x, slope * x). The derivative at exactly zero is taken as 1.
template <typename T>
Tensor<T> leaky_relu(Tape<T>& tape, const Tensor<T>& x, T slope);

template <typename T>
Tensor<T> relu(Tape<T>& tape, const Tensor<T>& x) {
    return leaky_relu(tape, x, T(0));
}

// (n, c, h, w) -> (n, c, 1, 1) spatial mean.
template <typename T>
Tensor<T> global_avg_pool(Tape<T>& tape, const Tensor<T>& x);

// (n, c*r*r, h, w) -> (n, c, r*h, r*w) with
//   out[n, c, r*i + a, r*j + b] = in[n, c*r*r + a*r + b, i, j].
template <typename T>
Tensor<T> pixel_shuffle(Tape<T>& tape, const Tensor<T>& x, int r);

template <typename T>
Tensor<T> pixel_unshuffle(Tape<T>& tape, const Tensor<T>& x, int r);

// s: (n, 2c, 1, 1) split into logits s1 = s[:, :c] and s2 = s[:, c:];
// returns alpha = exp(s1) / (exp(s1) + exp(s2)) of shape (n, c, 1, 1).
template <typename T>
Tensor<T> channel_pair_softmax(Tape<T>& tape, const Tensor<T>& s);

// alpha_c * x1 + (1 - alpha_c) * x2 with alpha of shape (n, c, 1, 1).
template <typename T>
Tensor<T> attention_blend(Tape<T>& tape, const Tensor<T>& alpha, const Tensor<T>& x1,
                          const Tensor<T>& x2);

// Mean absolute error over every element. The derivative at a zero residual is 0.
template <typename T>
Tensor<T> l1_loss(Tape<T>& tape, const Tensor<T>& pred, const Tensor<T>& target);

}  // namespace din::nn
