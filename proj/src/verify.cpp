#include "din/verify.hpp"

#include <cstdio>
#include <functional>
#include <map>
#include <random>

#include "din/model.hpp"
#include "din/nn.hpp"
#include "din/ops.hpp"

namespace din {

namespace {

using Fn = std::function<Tensor<double>(Tape<double>&)>;

// Tens of thousands of parameters include coordinates whose gradient is at
// the roundoff level of a central difference; their relative error is
// measured against 1e-3 of the check's largest gradient instead.
constexpr double kModelScaleFloor = 1e-3;

class Suite {
public:
    Suite(std::uint64_t seed, double tolerance) : rng_(seed), tolerance_(tolerance) {}

    // Values in +-[0.05, 1.05] keep kinks (relu, |.|) out of the eps window.
    Tensor<double> input(Shape shape, bool requires_grad = true) {
        std::uniform_real_distribution<double> mag(0.05, 1.05);
        std::bernoulli_distribution sign(0.5);
        std::vector<double> v(static_cast<std::size_t>(shape.numel()));
        for (auto& x : v) x = sign(rng_) ? mag(rng_) : -mag(rng_);
        return Tensor<double>::from(shape, std::move(v), requires_grad);
    }

    // Scalar sum(y * p) with a fixed random p matching y's shape.
    Tensor<double> project(Tape<double>& tape, const Tensor<double>& y) {
        auto& p = projections_[key_];
        if (!p.defined() || p.shape() != y.shape()) p = input(y.shape(), false);
        return ops::sum_all(tape, ops::mul(tape, y, p));
    }

    // f maps the inputs to a tensor; the projection makes it scalar.
    void check(const std::string& name, std::vector<Tensor<double>> wrt,
               const std::function<Tensor<double>(Tape<double>&)>& f, double scale_floor = 0.0) {
        ++key_;
        const Fn scalar = [this, f](Tape<double>& tape) { return project(tape, f(tape)); };
        rows_.push_back(
            {name, finite_diff_check<double>(scalar, std::move(wrt), 1e-6, tolerance_, scale_floor)});
    }

    std::vector<GradCheckRow> take() { return std::move(rows_); }

private:
    std::mt19937_64 rng_;
    double tolerance_;
    int key_ = 0;
    std::map<int, Tensor<double>> projections_;
    std::vector<GradCheckRow> rows_;
};

}  // namespace

std::vector<GradCheckRow> run_gradcheck_suite(const ModelConfig& model_config, std::uint64_t seed,
                                              double tolerance) {
    model_config.validate();
    Suite s(seed, tolerance);
    const Shape img{2, 3, 4, 4};

    {
        auto a = s.input(img), b = s.input(img);
        s.check("add", {a, b}, [=](Tape<double>& t) { return ops::add(t, a, b); });
        s.check("sub", {a, b}, [=](Tape<double>& t) { return ops::sub(t, a, b); });
        s.check("mul", {a, b}, [=](Tape<double>& t) { return ops::mul(t, a, b); });
        s.check("scale", {a}, [=](Tape<double>& t) { return ops::scale(t, a, -1.75); });
        s.check("sum_all", {a}, [=](Tape<double>& t) { return ops::sum_all(t, a); });
        s.check("mean_all", {a}, [=](Tape<double>& t) { return ops::mean_all(t, a); });
    }
    {
        auto a = s.input(Shape{2, 2, 3, 3}), b = s.input(Shape{2, 3, 3, 3});
        s.check("concat_channels", {a, b}, [=](Tape<double>& t) {
            const std::vector<Tensor<double>> parts{a, b};
            return ops::concat_channels<double>(t, parts);
        });
        s.check("split_channels", {b}, [=](Tape<double>& t) {
            const std::vector<std::int64_t> sizes{1, 2};
            const auto parts = ops::split_channels<double>(t, b, sizes);
            const std::vector<Tensor<double>> swapped{parts[1], ops::scale(t, parts[0], 2.0)};
            return ops::concat_channels<double>(t, swapped);
        });
    }
    {
        auto x = s.input(Shape{2, 3, 5, 4});
        auto w3 = s.input(Shape{4, 3, 3, 3});
        auto w1 = s.input(Shape{2, 3, 1, 1});
        auto bias = s.input(Shape{1, 4, 1, 1});
        s.check("conv2d_3x3", {x, w3, bias}, [=](Tape<double>& t) { return nn::conv2d(t, x, w3, bias, 1); });
        s.check("conv2d_3x3_valid", {x, w3}, [=](Tape<double>& t) {
            return nn::conv2d(t, x, w3, Tensor<double>(), 0);
        });
        s.check("conv2d_1x1", {x, w1}, [=](Tape<double>& t) { return nn::conv2d(t, x, w1, Tensor<double>(), 0); });
        auto dw = s.input(Shape{3, 1, 1, 1});
        s.check("depthwise_conv1x1", {x, dw}, [=](Tape<double>& t) { return nn::depthwise_conv1x1(t, x, dw); });
        s.check("leaky_relu", {x}, [=](Tape<double>& t) { return nn::leaky_relu(t, x, 0.2); });
        s.check("relu", {x}, [=](Tape<double>& t) { return nn::relu(t, x); });
        s.check("global_avg_pool", {x}, [=](Tape<double>& t) { return nn::global_avg_pool(t, x); });
    }
    for (int r : {2, 3}) {
        auto x = s.input(Shape{1, 2 * r * r, 2, 3});
        s.check("pixel_shuffle_x" + std::to_string(r), {x}, [=](Tape<double>& t) {
            return nn::pixel_shuffle(t, x, r);
        });
        auto y = s.input(Shape{1, 2, 2 * r, 3 * r});
        s.check("pixel_unshuffle_x" + std::to_string(r), {y}, [=](Tape<double>& t) {
            return nn::pixel_unshuffle(t, y, r);
        });
    }
    {
        auto logits = s.input(Shape{2, 6, 1, 1});
        s.check("channel_pair_softmax", {logits}, [=](Tape<double>& t) { return nn::channel_pair_softmax(t, logits); });
        auto alpha = s.input(Shape{2, 3, 1, 1});
        auto x1 = s.input(img), x2 = s.input(img);
        s.check("attention_blend", {alpha, x1, x2}, [=](Tape<double>& t) {
            return nn::attention_blend(t, alpha, x1, x2);
        });
        s.check("l1_loss", {x1, x2}, [=](Tape<double>& t) { return nn::l1_loss(t, x1, x2); });
    }

    // Building blocks of a zero-init-free model so every path carries gradient.
    ModelConfig cfg = model_config;
    cfg.asyca_zero_init = false;
    const DinModel<double> model(cfg, seed);
    const auto c = static_cast<std::int64_t>(cfg.base_channels);
    {
        const auto& block = model.wrdb(NodeId{1, 1});
        auto x = s.input(Shape{1, c, 3, 3});
        s.check("rdb", {x}, [&block, x](Tape<double>& t) { return block.rdbs[0].forward(t, x); });
        s.check("wrdb", {x}, [&block, x](Tape<double>& t) { return block.forward(t, x); });
    }
    if (cfg.branches > 1) {
        const auto& node = model.fusion(NodeId{2, 1});
        auto x1 = s.input(Shape{1, c, 3, 3}), x2 = s.input(Shape{1, c, 3, 3});
        s.check(std::string("fusion_") + std::string(to_string(cfg.fusion_mode)), {x1, x2},
                [&node, x1, x2](Tape<double>& t) { return node.forward(t, x1, x2); });
    }
    {
        auto x = s.input(Shape{1, 3, 4, 4}, false);
        std::vector<Tensor<double>> wrt;
        for (const auto& e : model.parameters().entries()) wrt.push_back(e.tensor);
        s.check("din_model", wrt, [&model, x](Tape<double>& t) { return model.forward(t, x); },
                kModelScaleFloor);
    }
    return s.take();
}

std::string format_gradcheck_report(const std::vector<GradCheckRow>& rows) {
    std::string out =
        "# central differences, eps 1e-6, double; din_model relative errors floored at 1e-3 x max |grad|\n"
        "# check\tcoordinates\tmax_rel_error\tmax_abs_error\tresult\n";
    char buf[256];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "%s\t%zu\t%.6e\t%.6e\t%s\n", r.name.c_str(), r.report.coordinates,
                      r.report.max_rel_error, r.report.max_abs_error, r.report.pass ? "PASS" : "FAIL");
        out += buf;
    }
    return out;
}

bool all_pass(const std::vector<GradCheckRow>& rows) {
    for (const auto& r : rows) {
        if (!r.report.pass) return false;
    }
    return !rows.empty();
}

}  // namespace din
