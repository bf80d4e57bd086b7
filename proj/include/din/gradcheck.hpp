#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "din/tape.hpp"
#include "din/tensor.hpp"

namespace din {

struct GradCheckReport {
    double max_rel_error = 0.0;
    double max_abs_error = 0.0;
    std::size_t coordinates = 0;
    // Tensor index and flat offset of the worst coordinate.
    std::size_t worst_tensor = 0;
    std::size_t worst_offset = 0;
    bool pass = false;
};

// Compares reverse-mode gradients of a scalar function against central
// differences (f(x + eps e) - f(x - eps e)) / (2 eps) at every coordinate of
// every tensor in `wrt`. Relative error uses a max(|a|, |b|, floor)
// denominator, floor = max(1e-8, scale_floor * largest |analytic gradient|);
// a nonzero scale_floor keeps roundoff on near-zero coordinates from
// dominating a check over many parameters.
//
// `f` is evaluated once on a recording tape and 2 * coordinates times on
// non-recording tapes; it must be deterministic. Leaves the analytic gradient
// in each tensor's grad buffer.
template <typename T>
GradCheckReport finite_diff_check(const std::function<Tensor<T>(Tape<T>&)>& f,
                                  std::vector<Tensor<T>> wrt, T epsilon, T tolerance,
                                  double scale_floor = 0.0);

// Single-input convenience form.
template <typename T>
GradCheckReport finite_diff_check(const std::function<Tensor<T>(Tape<T>&, const Tensor<T>&)>& f,
                                  Tensor<T> x, T epsilon, T tolerance) {
    return finite_diff_check<T>(
        std::function<Tensor<T>(Tape<T>&)>([f, x](Tape<T>& tape) { return f(tape, x); }),
        std::vector<Tensor<T>>{x}, epsilon, tolerance);
}

}  // namespace din
