#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include "routecast/autodiff.hpp"
#include "routecast/tensor.hpp"

using namespace routecast;

namespace {

Tensor random_tensor(Shape shape, std::mt19937_64& rng, double lo = -2.0, double hi = 2.0) {
    std::uniform_real_distribution<double> uni(lo, hi);
    Tensor t(std::move(shape));
    for (double& v : t.values()) v = uni(rng);
    return t;
}

} // namespace

TEST_CASE("tensor basics and shape arithmetic") {
    Tensor t(Shape{2, 3}, 1.5);
    CHECK(t.numel() == 6);
    CHECK(t.extent(1) == 3);
    CHECK_THROWS_AS(Tensor(Shape{2, 0}), ShapeError);
    CHECK_THROWS_AS(Tensor(Shape{3}, std::vector<double>{1.0, 2.0}), ShapeError);

    const Tensor m = Tensor::matrix({{1, 2}, {3, 4}});
    const std::size_t idx[2] = {1, 0};
    CHECK(m.at(idx) == 3.0);
}

TEST_CASE("matmul identity case") {
    Tape t;
    Var a = t.constant(Tensor::matrix({{1, 2}, {3, 4}}));
    Var eye = t.constant(Tensor::identity(2));
    Var out = matmul(a, eye);
    CHECK(out.value()[0] == 1.0);
    CHECK(out.value()[1] == 2.0);
    CHECK(out.value()[2] == 3.0);
    CHECK(out.value()[3] == 4.0);
}

TEST_CASE("matmul broadcasting over batch axes") {
    std::mt19937_64 rng(7);
    const Tensor a = random_tensor(Shape{3, 4, 2}, rng);
    const Tensor b = random_tensor(Shape{2, 5}, rng);
    Tensor out = matmul_raw(a, b);
    REQUIRE(out.shape() == Shape{3, 4, 5});
    // spot check one batch slice against a plain 2-d multiply
    Tensor a0(Shape{4, 2}, std::vector<double>(a.data(), a.data() + 8));
    Tensor ref = matmul_raw(a0, b);
    for (std::size_t i = 0; i < ref.numel(); ++i) CHECK(out[i] == doctest::Approx(ref[i]).epsilon(1e-12));
}

TEST_CASE("matmul shape mismatch names op and shapes") {
    Tape t;
    Var a = t.constant(Tensor(Shape{2, 3}, 1.0));
    Var b = t.constant(Tensor(Shape{2, 3}, 1.0));
    CHECK_THROWS_WITH_AS(matmul(a, b), doctest::Contains("matmul"), ShapeError);
}

TEST_CASE("softmax symmetry and invariants") {
    Tape t;
    Var x = t.constant(Tensor::vector({0.0, 0.0}));
    Var y = softmax(x, 0);
    CHECK(y.value()[0] == doctest::Approx(0.5));
    CHECK(y.value()[1] == doctest::Approx(0.5));

    // rows sum to 1 +- 1e-9 and strictly positive for finite inputs
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 50; ++trial) {
        Tensor r = random_tensor(Shape{4, 6}, rng, -30.0, 30.0);
        Var s = softmax(t.constant(r), 1);
        for (std::size_t i = 0; i < 4; ++i) {
            double total = 0.0;
            for (std::size_t j = 0; j < 6; ++j) {
                const double v = s.value()[i * 6 + j];
                CHECK(v > 0.0);
                total += v;
            }
            CHECK(std::abs(total - 1.0) < 1e-9);
        }
    }
    CHECK_THROWS_AS(softmax(x, 3), ShapeError);
}

TEST_CASE("layer_norm hand computation") {
    // (x - mean)/std with mean=2, std=1 -> [-1, 1] (up to the 1e-5 epsilon)
    Tape t;
    Var y = layer_norm(t.constant(Tensor::vector({1.0, 3.0})), 0);
    CHECK(y.value()[0] == doctest::Approx(-1.0).epsilon(1e-4));
    CHECK(y.value()[1] == doctest::Approx(1.0).epsilon(1e-4));
}

TEST_CASE("backward of sum(x*x) is 2x") {
    Tape t;
    Var x = t.param(Tensor::vector({1.0, 2.0, 3.0}));
    Var loss = sum_all(mul(x, x));
    Gradients g = t.backward(loss);
    const Tensor& gx = g.at(x);
    CHECK(gx[0] == doctest::Approx(2.0));
    CHECK(gx[1] == doctest::Approx(4.0));
    CHECK(gx[2] == doctest::Approx(6.0));
}

TEST_CASE("backward of mean(matmul) matches central differences") {
    std::mt19937_64 rng(3);
    const Tensor x0 = random_tensor(Shape{3, 4}, rng);
    const Tensor w0 = random_tensor(Shape{4, 2}, rng);

    const double err_x = finite_difference_check(
        [&](Tape& t, const Var& v) { return mean_all(matmul(v, t.constant(w0))); }, x0, 1e-5);
    CHECK(err_x < 1e-6);

    const double err_w = finite_difference_check(
        [&](Tape& t, const Var& v) { return mean_all(matmul(t.constant(x0), v)); }, w0, 1e-5);
    CHECK(err_w < 1e-6);
}

TEST_CASE("softmax -> sum path has vanishing gradient") {
    Tape t;
    Var x = t.param(Tensor::vector({0.3, -1.2, 2.0}));
    Var loss = sum_all(softmax(x, 0));
    Gradients g = t.backward(loss);
    for (std::size_t i = 0; i < 3; ++i) CHECK(std::abs(g.at(x)[i]) < 1e-12);
}

TEST_CASE("non-scalar loss rejected") {
    Tape t;
    Var x = t.param(Tensor::vector({1.0, 2.0}));
    CHECK_THROWS_AS(t.backward(mul(x, x)), ShapeError);
}

TEST_CASE("gradients of untouched parameters are zero tensors") {
    Tape t;
    Var x = t.param(Tensor::vector({1.0, 2.0}));
    Var unused = t.param(Tensor(Shape{2, 2}, 5.0));
    Gradients g = t.backward(sum_all(x));
    REQUIRE(g.contains(unused));
    CHECK(g.at(unused).shape() == Shape{2, 2});
    for (double v : g.at(unused).values()) CHECK(v == 0.0);
}

TEST_CASE("finite_difference_check reference cases") {
    // exactly linear: error is zero up to float rounding in the probes
    const double err_sum = finite_difference_check(
        [](Tape&, const Var& v) { return sum_all(v); }, Tensor::vector({0.4, -1.0, 2.2}), 1e-5);
    CHECK(err_sum < 1e-10);

    // f = sum(sin(x)) at [0, pi/2]: analytic gradient [1, 0]
    Tape t;
    Var x = t.param(Tensor::vector({0.0, std::numbers::pi / 2.0}));
    Gradients g = t.backward(sum_all(sin(x)));
    CHECK(g.at(x)[0] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(std::abs(g.at(x)[1]) < 1e-12);
    const double err_sin = finite_difference_check(
        [](Tape&, const Var& v) { return sum_all(sin(v)); }, Tensor::vector({0.0, std::numbers::pi / 2.0}),
        1e-5);
    CHECK(err_sin < 1e-8);
}

TEST_CASE("every differentiable op passes the gradient oracle") {
    std::mt19937_64 rng(17);
    const double kTol = 1e-4;
    const double kEps = 1e-5;

    const auto check = [&](const std::string& name, const ScalarFn& f, const Tensor& x) {
        INFO("op: " << name);
        CHECK(finite_difference_check(f, x, kEps) < kTol);
    };

    Tensor x23 = random_tensor(Shape{2, 3}, rng);
    Tensor x234 = random_tensor(Shape{2, 3, 4}, rng);
    Tensor other23 = random_tensor(Shape{2, 3}, rng);
    Tensor w34 = random_tensor(Shape{3, 4}, rng);
    Tensor bias4 = random_tensor(Shape{4}, rng);
    Tensor denom23 = random_tensor(Shape{2, 3}, rng, 0.5, 2.0);

    check("matmul", [&](Tape& t, const Var& v) { return mean_all(matmul(v, t.constant(w34))); }, x23);
    check("add", [&](Tape& t, const Var& v) { return mean_all(add(v, t.constant(other23))); }, x23);
    check("add_broadcast",
          [&](Tape& t, const Var& v) { return mean_all(add(v, t.constant(bias4))); }, x234);
    check("sub", [&](Tape& t, const Var& v) { return mean_all(sub(t.constant(other23), v)); }, x23);
    check("mul", [&](Tape& t, const Var& v) { return mean_all(mul(v, t.constant(other23))); }, x23);
    check("div_num", [&](Tape& t, const Var& v) { return mean_all(div(v, t.constant(denom23))); }, x23);
    check("div_den", [&](Tape& t, const Var& v) { return mean_all(div(t.constant(other23), v)); },
          random_tensor(Shape{2, 3}, rng, 0.5, 2.0));
    check("scale", [](Tape&, const Var& v) { return mean_all(scale(v, -1.7)); }, x23);
    check("concat", [&](Tape& t, const Var& v) {
        std::vector<Var> parts{v, t.constant(other23)};
        return mean_all(concat(parts, 1));
    }, x23);
    check("mean_axis", [](Tape&, const Var& v) { return sum_all(mean(v, 1)); }, x234);
    check("sum_axis", [](Tape&, const Var& v) { return mean_all(sum(v, 0)); }, x234);
    check("relu", [](Tape&, const Var& v) { return mean_all(relu(v)); }, x23);
    check("sigmoid", [](Tape&, const Var& v) { return mean_all(sigmoid(v)); }, x23);
    check("tanh", [](Tape&, const Var& v) { return mean_all(tanh(v)); }, x23);
    check("sin", [](Tape&, const Var& v) { return mean_all(sin(v)); }, x23);
    check("exp", [](Tape&, const Var& v) { return mean_all(exp(v)); }, x23);
    check("log", [&](Tape&, const Var& v) { return mean_all(log(v)); },
          random_tensor(Shape{2, 3}, rng, 0.2, 2.0));
    check("softmax", [](Tape& t, const Var& v) {
        // weighted sum so the gradient is not identically zero
        Tensor w(Shape{2, 3});
        for (std::size_t i = 0; i < 6; ++i) w[i] = static_cast<double>(i + 1);
        return sum_all(mul(softmax(v, 1), t.constant(w)));
    }, x23);
    check("layer_norm", [](Tape&, const Var& v) {
        return sum_all(mul(layer_norm(v, 1), layer_norm(v, 1)));
    }, x23);
    check("dropout", [](Tape&, const Var& v) { return mean_all(dropout(v, 0.3, true)); }, x23);
    check("transpose", [](Tape&, const Var& v) {
        const std::size_t perm[3] = {2, 0, 1};
        return mean_all(mul(transpose(v, perm), transpose(v, perm)));
    }, x234);
    check("reshape", [](Tape&, const Var& v) { return mean_all(mul(reshape(v, Shape{6}), reshape(v, Shape{6}))); },
          x23);
    check("masked_fill", [](Tape&, const Var& v) {
        Tensor mask(Shape{2, 3});
        mask[0] = 1.0;
        mask[4] = 1.0;
        return mean_all(mul(masked_fill(v, mask, 3.0), masked_fill(v, mask, 3.0)));
    }, x23);
    check("gather", [](Tape&, const Var& v) {
        const std::size_t idx[3] = {1, 1, 0};
        Var gathered = gather(v, 1, idx);
        return mean_all(mul(gathered, gathered));
    }, x23);
}

TEST_CASE("dropout semantics") {
    Tape t(42);
    Tensor x(Shape{1000}, 1.0);
    Var v = t.constant(x);

    Var eval_mode = dropout(v, 0.2, false);
    CHECK(&eval_mode.value() == &v.value()); // identity, not a copy

    Var train_mode = dropout(v, 0.2, true);
    double total = 0.0;
    std::size_t zeros = 0;
    for (double val : train_mode.value().values()) {
        if (val == 0.0) ++zeros;
        else CHECK(val == doctest::Approx(1.0 / 0.8));
        total += val;
    }
    CHECK(zeros > 100);
    CHECK(zeros < 300);
    CHECK(total / 1000.0 == doctest::Approx(1.0).epsilon(0.1));

    // deterministic given a fixed seed
    Tape t2(42);
    Var again = dropout(t2.constant(x), 0.2, true);
    for (std::size_t i = 0; i < 1000; ++i) CHECK(again.value()[i] == train_mode.value()[i]);

    CHECK_THROWS_AS(dropout(v, 1.0, true), ConfigError);
}

TEST_CASE("tape topology is acyclic") {
    Tape t;
    Var x = t.param(Tensor::vector({1.0, -1.0}));
    Var y = relu(mul(x, x));
    Var loss = sum_all(add(y, x));
    CHECK(t.validate_topology());
    CHECK(t.node_count() >= 4);
    (void)loss;
}

TEST_CASE("forward results stay finite on finite inputs") {
    std::mt19937_64 rng(23);
    for (int trial = 0; trial < 20; ++trial) {
        Tape t;
        Tensor x = random_tensor(Shape{3, 5}, rng);
        Var v = t.constant(x);
        CHECK(softmax(v, 1).value().all_finite());
        CHECK(layer_norm(v, 1).value().all_finite());
        CHECK(sigmoid(v).value().all_finite());
        CHECK(exp(v).value().all_finite());
    }
}
