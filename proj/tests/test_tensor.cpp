#include <doctest.h>

#include <random>
#include <sstream>

#include "din/gradcheck.hpp"
#include "din/nn.hpp"
#include "din/ops.hpp"
#include "din/parameter_store.hpp"
#include "din/tape.hpp"
#include "test_util.hpp"

using namespace din;
using din::test::random_tensor;

TEST_SUITE("tensor_engine") {

TEST_CASE("tensor_create fills, lays out and allocates grads") {
    const auto z = Tensor<double>::zeros(Shape{1, 1, 2, 2});
    CHECK(z.numel() == 4);
    for (double v : z.data()) CHECK(v == 0.0);

    const auto t = Tensor<double>::from(Shape{1, 2, 1, 1}, {3.0, 5.0});
    CHECK(t.at(0, 0, 0, 0) == 3.0);
    CHECK(t.at(0, 1, 0, 0) == 5.0);

    const auto s = Tensor<double>::full(Shape{1, 1, 1, 1}, 1.0, true);
    REQUIRE(s.has_grad());
    CHECK(s.grad().size() == 1);
    CHECK(s.grad()[0] == 0.0);
}

TEST_CASE("tensor_create rejects mismatched value lists and bad shapes") {
    CHECK_THROWS_AS(Tensor<double>::from(Shape{1, 1, 2, 2}, {1.0, 2.0, 3.0}), ShapeError);
    CHECK_THROWS_AS(Tensor<double>::zeros(Shape{1, 0, 2, 2}), ShapeError);
}

TEST_CASE("non-finite forward values are a hard error") {
    Tape<double> tape;
    const auto a = Tensor<double>::from(Shape{1, 1, 1, 2}, {1e308, 1.0});
    CHECK_THROWS_AS(ops::scale(tape, a, 10.0), NumericError);
}

TEST_CASE("backward of sum gives ones") {
    Tape<double> tape;
    auto x = Tensor<double>::from(Shape{1, 1, 2, 2}, {1, 2, 3, 4}, true);
    tape.backward(ops::sum_all(tape, x));
    for (double g : x.grad()) CHECK(g == 1.0);
}

TEST_CASE("backward of mean(x*x) at x = 2 is 4") {
    Tape<double> tape;
    auto x = Tensor<double>::from(Shape{1, 1, 1, 1}, {2.0}, true);
    tape.backward(ops::mean_all(tape, ops::mul(tape, x, x)));
    CHECK(x.grad()[0] == doctest::Approx(4.0));
}

TEST_CASE("backward of L1 is sign(residual) / count") {
    Tape<double> tape;
    auto x = Tensor<double>::from(Shape{1, 1, 1, 4}, {1.0, -2.0, 0.5, 3.0}, true);
    const auto y = Tensor<double>::from(Shape{1, 1, 1, 4}, {0.0, 0.0, 0.5, 4.0});
    tape.backward(nn::l1_loss(tape, x, y));
    CHECK(x.grad()[0] == doctest::Approx(0.25));
    CHECK(x.grad()[1] == doctest::Approx(-0.25));
    CHECK(x.grad()[2] == 0.0);
    CHECK(x.grad()[3] == doctest::Approx(-0.25));
}

TEST_CASE("backward rejects non-scalar roots and foreign roots") {
    Tape<double> tape;
    auto x = Tensor<double>::from(Shape{1, 1, 1, 2}, {1, 2}, true);
    const auto y = ops::scale(tape, x, 2.0);
    CHECK_THROWS_AS(tape.backward(y), ShapeError);

    Tape<double> other;
    const auto s = ops::sum_all(other, x);
    CHECK_THROWS_AS(tape.backward(s), Error);
}

TEST_CASE("unreachable grads are untouched") {
    Tape<double> tape;
    auto x = Tensor<double>::from(Shape{1, 1, 1, 2}, {1, 2}, true);
    auto unused = Tensor<double>::from(Shape{1, 1, 1, 2}, {1, 2}, true);
    unused.mutable_grad()[0] = 7.0;
    const auto side = ops::sum_all(tape, unused);
    (void)side;
    tape.backward(ops::sum_all(tape, x));
    CHECK(unused.grad()[0] == 7.0);
    CHECK(unused.grad()[1] == 0.0);
}

TEST_CASE("a second backward accumulates on top of the first") {
    std::mt19937_64 rng(3);
    auto x = random_tensor<double>(Shape{1, 2, 3, 3}, rng, true);
    auto w = random_tensor<double>(Shape{2, 2, 3, 3}, rng, true);
    Tape<double> tape;
    const auto y = nn::leaky_relu(tape, nn::conv2d(tape, x, w, Tensor<double>(), 1), 0.2);
    const auto root = ops::sum_all(tape, ops::mul(tape, y, y));
    tape.backward(root);
    const std::vector<double> gx(x.grad().begin(), x.grad().end());
    const std::vector<double> gw(w.grad().begin(), w.grad().end());
    tape.backward(root);
    for (std::size_t i = 0; i < gx.size(); ++i) CHECK(x.grad()[i] == doctest::Approx(2.0 * gx[i]).epsilon(1e-13));
    for (std::size_t i = 0; i < gw.size(); ++i) CHECK(w.grad()[i] == doctest::Approx(2.0 * gw[i]).epsilon(1e-13));
}

TEST_CASE("tape replay is deterministic at the bit level") {
    auto run = [] {
        std::mt19937_64 rng(11);
        auto x = random_tensor<double>(Shape{2, 3, 4, 4}, rng, true);
        auto w = random_tensor<double>(Shape{4, 3, 3, 3}, rng, true);
        Tape<double> tape;
        const auto y = nn::conv2d(tape, x, w, Tensor<double>(), 1);
        const auto root = ops::mean_all(tape, ops::mul(tape, y, y));
        tape.backward(root);
        std::vector<double> out(y.data().begin(), y.data().end());
        out.insert(out.end(), x.grad().begin(), x.grad().end());
        out.insert(out.end(), w.grad().begin(), w.grad().end());
        return out;
    };
    CHECK(run() == run());
}

TEST_CASE("elementwise ops") {
    Tape<double> tape;
    const auto a = Tensor<double>::from(Shape{1, 1, 1, 3}, {1, 2, 3});
    const auto b = Tensor<double>::from(Shape{1, 1, 1, 3}, {4, 5, 6});
    CHECK(test::values(ops::add(tape, a, b)) == std::vector<double>{5, 7, 9});
    CHECK(test::values(ops::sub(tape, a, b)) == std::vector<double>{-3, -3, -3});
    CHECK(test::values(ops::mul(tape, a, b)) == std::vector<double>{4, 10, 18});
    CHECK(test::values(ops::scale(tape, a, 0.5)) == std::vector<double>{0.5, 1, 1.5});
    const auto c = Tensor<double>::zeros(Shape{1, 1, 1, 2});
    CHECK_THROWS_AS(ops::add(tape, a, c), ShapeError);
}

TEST_CASE("add of zero is the identity, bit-exact") {
    std::mt19937_64 rng(5);
    const auto x = random_tensor<double>(Shape{2, 3, 5, 4}, rng);
    Tape<double> tape;
    CHECK(test::values(ops::add(tape, x, Tensor<double>::zeros(x.shape()))) == test::values(x));
}

TEST_CASE("concat and split are exact inverses") {
    std::mt19937_64 rng(9);
    for (const auto& [ca, cb, h, w] : std::vector<std::array<std::int64_t, 4>>{{2, 3, 4, 5}, {1, 1, 1, 1}, {5, 2, 3, 7}}) {
        const auto a = random_tensor<double>(Shape{2, ca, h, w}, rng);
        const auto b = random_tensor<double>(Shape{2, cb, h, w}, rng);
        Tape<double> tape;
        const std::vector<Tensor<double>> parts{a, b};
        const auto cat = ops::concat_channels<double>(tape, parts);
        CHECK(cat.shape() == Shape{2, ca + cb, h, w});
        const std::vector<std::int64_t> sizes{ca, cb};
        const auto back = ops::split_channels<double>(tape, cat, sizes);
        REQUIRE(back.size() == 2);
        CHECK(test::values(back[0]) == test::values(a));
        CHECK(test::values(back[1]) == test::values(b));
    }
    Tape<double> tape;
    const std::vector<Tensor<double>> bad{Tensor<double>::zeros(Shape{1, 1, 2, 2}),
                                          Tensor<double>::zeros(Shape{1, 1, 3, 2})};
    CHECK_THROWS_AS(ops::concat_channels<double>(tape, bad), ShapeError);
}

TEST_CASE("elementwise gradients match central differences") {
    std::mt19937_64 rng(17);
    auto a = random_tensor<double>(Shape{1, 2, 3, 3}, rng);
    auto b = random_tensor<double>(Shape{1, 2, 3, 3}, rng);
    auto c = random_tensor<double>(Shape{1, 3, 3, 3}, rng);
    const auto f = [&](Tape<double>& t) {
        const auto s = ops::add(t, ops::mul(t, a, b), ops::scale(t, ops::sub(t, a, b), 1.7));
        const std::vector<Tensor<double>> parts{s, c};
        const auto cat = ops::concat_channels<double>(t, parts);
        const std::vector<std::int64_t> sizes{4, 1};
        const auto pieces = ops::split_channels<double>(t, cat, sizes);
        return ops::add(t, ops::mean_all(t, ops::mul(t, pieces[0], pieces[0])), ops::sum_all(t, pieces[1]));
    };
    const auto report = finite_diff_check<double>(f, {a, b, c}, 1e-6, 1e-4);
    CHECK(report.pass);
    CHECK(report.max_rel_error < 1e-6);
}

TEST_CASE("finite_diff_check is exact for sums and rejects non-scalar functions") {
    std::mt19937_64 rng(21);
    auto x = random_tensor<double>(Shape{1, 1, 3, 3}, rng);
    const std::function<Tensor<double>(Tape<double>&, const Tensor<double>&)> sum =
        [](Tape<double>& t, const Tensor<double>& v) { return ops::sum_all(t, v); };
    const auto report = finite_diff_check<double>(sum, x, 1e-6, 1e-4);
    CHECK(report.pass);
    CHECK(report.max_rel_error < 1e-9);

    const std::function<Tensor<double>(Tape<double>&, const Tensor<double>&)> identity =
        [](Tape<double>& t, const Tensor<double>& v) { return ops::scale(t, v, 1.0); };
    CHECK_THROWS_AS(finite_diff_check<double>(identity, x, 1e-6, 1e-4), ShapeError);
}

TEST_CASE("L1 gradient check away from zero residual") {
    std::mt19937_64 rng(23);
    auto x = random_tensor<double>(Shape{1, 3, 4, 4}, rng);
    // Residuals at least 0.1 in magnitude, far beyond 10 eps.
    std::vector<double> target;
    for (std::size_t i = 0; i < x.data().size(); ++i) target.push_back(x.data()[i] + (i % 2 ? 0.1 : -0.3));
    const auto y = Tensor<double>::from(x.shape(), target);
    const std::function<Tensor<double>(Tape<double>&, const Tensor<double>&)> f =
        [y](Tape<double>& t, const Tensor<double>& v) { return nn::l1_loss(t, v, y); };
    const auto report = finite_diff_check<double>(f, x, 1e-6, 1e-4);
    CHECK(report.pass);
}

TEST_CASE("parameter store names are unique and ordered") {
    ParameterStore<float> store;
    store.add("a", Shape{1, 1, 1, 2});
    store.add("b", Shape{2, 1, 1, 1});
    CHECK(store.size() == 2);
    CHECK(store.scalar_count() == 4);
    CHECK(store.entries()[1].name == "b");
    CHECK(store.contains("a"));
    CHECK_THROWS_AS(store.add("a", Shape{1, 1, 1, 1}), Error);
}

TEST_CASE("container layout and bit-exact round trip") {
    std::mt19937_64 rng(31);
    std::vector<NamedTensor<float>> tensors{{"conv.weight", random_tensor<float>(Shape{2, 3, 3, 3}, rng)},
                                            {"conv.bias", random_tensor<float>(Shape{1, 2, 1, 1}, rng)}};
    std::stringstream ss;
    write_container(ss, tensors, 0x1122334455667788ULL);
    const std::string bytes = ss.str();
    CHECK(bytes.substr(0, 4) == "DINW");
    CHECK(static_cast<unsigned char>(bytes[4]) == kContainerVersion);
    CHECK(static_cast<unsigned char>(bytes[8]) == 2);   // count
    CHECK(static_cast<unsigned char>(bytes[12]) == 4);  // scalar bytes
    CHECK(static_cast<unsigned char>(bytes[16]) == 0x88);  // little-endian hash

    ContainerInfo info;
    std::stringstream in(bytes);
    const auto back = read_container<float>(in, &info);
    CHECK(info.config_hash == 0x1122334455667788ULL);
    REQUIRE(back.size() == 2);
    for (std::size_t i = 0; i < 2; ++i) {
        CHECK(back[i].name == tensors[i].name);
        CHECK(back[i].tensor.shape() == tensors[i].tensor.shape());
        CHECK(test::values(back[i].tensor) == test::values(tensors[i].tensor));
    }
    std::stringstream again;
    write_container(again, back, info.config_hash);
    CHECK(again.str() == bytes);
}

TEST_CASE("container rejects truncated and foreign data") {
    std::stringstream junk("NOPE0000");
    CHECK_THROWS_AS(read_container<float>(junk), IoError);

    std::vector<NamedTensor<double>> tensors{{"x", Tensor<double>::full(Shape{1, 1, 1, 4}, 0.5)}};
    std::stringstream ss;
    write_container(ss, tensors, 1);
    const std::string bytes = ss.str();
    std::stringstream cut(bytes.substr(0, bytes.size() - 3));
    CHECK_THROWS_AS(read_container<double>(cut), IoError);
}

TEST_CASE("assign_parameters requires matching names and shapes") {
    ParameterStore<double> store;
    store.add("w", Shape{1, 1, 1, 2});
    std::vector<NamedTensor<double>> good{{"w", Tensor<double>::from(Shape{1, 1, 1, 2}, {1, 2})}};
    assign_parameters(store, good);
    CHECK(test::values(store.get("w")) == std::vector<double>{1, 2});
    std::vector<NamedTensor<double>> renamed{{"v", Tensor<double>::from(Shape{1, 1, 1, 2}, {1, 2})}};
    CHECK_THROWS_AS(assign_parameters(store, renamed), ConfigError);
    std::vector<NamedTensor<double>> reshaped{{"w", Tensor<double>::from(Shape{1, 1, 2, 1}, {1, 2})}};
    CHECK_THROWS_AS(assign_parameters(store, reshaped), ConfigError);
}

}  // TEST_SUITE
