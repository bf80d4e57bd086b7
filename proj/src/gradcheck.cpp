#include "din/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace din {

template <typename T>
GradCheckReport finite_diff_check(const std::function<Tensor<T>(Tape<T>&)>& f,
                                  std::vector<Tensor<T>> wrt, T epsilon, T tolerance, double scale_floor) {
    if (!(epsilon > T(0))) throw Error("finite_diff_check: epsilon must be positive");
    for (auto& t : wrt) {
        t.set_requires_grad(true);
        t.zero_grad();
    }
    {
        Tape<T> tape;
        const Tensor<T> root = f(tape);
        if (root.numel() != 1) {
            throw ShapeError("finite_diff_check: function output " + root.shape().str() +
                             " is not a scalar");
        }
        tape.backward(root);
    }

    auto evaluate = [&f]() {
        Tape<T> tape(false);
        return static_cast<double>(f(tape).item());
    };

    double scale = 0.0;
    for (const auto& t : wrt) {
        for (const T g : t.grad()) scale = std::max(scale, std::abs(static_cast<double>(g)));
    }
    const double floor = std::max(1e-8, scale_floor * scale);

    GradCheckReport report;
    for (std::size_t ti = 0; ti < wrt.size(); ++ti) {
        auto values = wrt[ti].mutable_data();
        const auto analytic = wrt[ti].grad();
        for (std::size_t i = 0; i < values.size(); ++i) {
            const T saved = values[i];
            values[i] = saved + epsilon;
            const double plus = evaluate();
            values[i] = saved - epsilon;
            const double minus = evaluate();
            values[i] = saved;
            const double numeric = (plus - minus) / (2.0 * static_cast<double>(epsilon));
            const double a = static_cast<double>(analytic[i]);
            const double abs_err = std::abs(a - numeric);
            const double denom = std::max({std::abs(a), std::abs(numeric), floor});
            const double rel = abs_err / denom;
            ++report.coordinates;
            report.max_abs_error = std::max(report.max_abs_error, abs_err);
            if (rel > report.max_rel_error) {
                report.max_rel_error = rel;
                report.worst_tensor = ti;
                report.worst_offset = i;
            }
        }
    }
    report.pass = report.max_rel_error < static_cast<double>(tolerance);
    return report;
}

template GradCheckReport finite_diff_check<float>(const std::function<Tensor<float>(Tape<float>&)>&,
                                                  std::vector<Tensor<float>>, float, float, double);
template GradCheckReport finite_diff_check<double>(
    const std::function<Tensor<double>(Tape<double>&)>&, std::vector<Tensor<double>>, double, double, double);

}  // namespace din
