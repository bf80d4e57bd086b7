#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "din/tape.hpp"
#include "din/tensor.hpp"

// Differentiable elementwise, reduction and channel-layout operators.
// Every function records a backward rule on `tape` when an input requires grad.
namespace din::ops {

template <typename T>
Tensor<T> add(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> sub(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> mul(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> scale(Tape<T>& tape, const Tensor<T>& a, T factor);

// Inputs must agree on n, h, w.
template <typename T>
Tensor<T> concat_channels(Tape<T>& tape, std::span<const Tensor<T>> parts);

// Exact inverse of concat_channels; sizes must sum to x.c.
template <typename T>
std::vector<Tensor<T>> split_channels(Tape<T>& tape, const Tensor<T>& x,
                                      std::span<const std::int64_t> sizes);

template <typename T>
Tensor<T> sum_all(Tape<T>& tape, const Tensor<T>& x);

template <typename T>
Tensor<T> mean_all(Tape<T>& tape, const Tensor<T>& x);

}  // namespace din::ops
