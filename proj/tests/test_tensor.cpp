#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "midtune/digest.hpp"
#include "midtune/rng.hpp"
#include "midtune/tensor.hpp"

using namespace midtune;

namespace {

Tensor random_tensor(std::vector<std::size_t> shape, Rng& rng, double lo = -2.0, double hi = 2.0,
                     bool requires_grad = true) {
    std::vector<double> v(detail::shape_numel(shape));
    for (double& x : v) x = rng.uniform(lo, hi);
    return Tensor(std::move(shape), std::move(v), requires_grad);
}

}  // namespace

TEST_CASE("softmax of a constant row is uniform") {
    Tensor out = softmax(Tensor({2}, {0.0, 0.0}));
    CHECK(out.values()[0] == Catch::Approx(0.5).margin(1e-15));
    CHECK(out.values()[1] == Catch::Approx(0.5).margin(1e-15));
}

TEST_CASE("matmul against identity") {
    Tensor eye({2, 2}, {1, 0, 0, 1});
    Tensor m({2, 2}, {1, 2, 3, 4});
    CHECK(matmul(eye, m).values() == std::vector<double>{1, 2, 3, 4});
    SECTION("transpose_b") {
        Tensor out = matmul(m, m, /*transpose_b=*/true);
        // [[1,2],[3,4]] * [[1,3],[2,4]] = [[5,11],[11,25]]
        CHECK(out.values() == std::vector<double>{5, 11, 11, 25});
    }
    SECTION("shape errors name the op") {
        Tensor bad({3, 2}, std::vector<double>(6, 0.0));
        try {
            matmul(eye, bad);
            FAIL("expected ShapeError");
        } catch (const ShapeError& e) {
            std::string msg = e.what();
            CHECK(msg.find("matmul") != std::string::npos);
            CHECK(msg.find("[2,2]") != std::string::npos);
            CHECK(msg.find("[3,2]") != std::string::npos);
        }
    }
}

TEST_CASE("layernorm normalizes rows") {
    // mean 2, population std 1 at eps=0: exactly [-1, 1]
    Tensor out = layernorm(Tensor({2}, {1.0, 3.0}), 0.0);
    CHECK(out.values()[0] == Catch::Approx(-1.0).margin(1e-14));
    CHECK(out.values()[1] == Catch::Approx(1.0).margin(1e-14));

    SECTION("hand-formula oracle with the default eps") {
        std::vector<double> row = {0.3, -1.2, 2.5, 0.0};
        Tensor t({4}, row);
        Tensor got = layernorm(t);
        double mean = (0.3 - 1.2 + 2.5 + 0.0) / 4.0;
        double var = 0.0;
        for (double x : row) var += (x - mean) * (x - mean);
        var /= 4.0;
        for (std::size_t i = 0; i < row.size(); ++i) {
            double expect = (row[i] - mean) / std::sqrt(var + 1e-5);
            CHECK(got.values()[i] == Catch::Approx(expect).margin(1e-12));
        }
    }
}

TEST_CASE("softmax rows sum to one and layernorm rows have zero mean") {
    Rng rng(31);
    for (int iter = 0; iter < 20; ++iter) {
        Tensor x = random_tensor({5, 7}, rng, -4.0, 4.0, false);
        Tensor sm = softmax(x);
        Tensor ln = layernorm(x);
        for (std::size_t i = 0; i < 5; ++i) {
            double row_sum = 0.0, row_mean = 0.0;
            for (std::size_t j = 0; j < 7; ++j) {
                row_sum += sm.values()[i * 7 + j];
                row_mean += ln.values()[i * 7 + j];
            }
            CHECK(std::fabs(row_sum - 1.0) <= 1e-12);
            CHECK(std::fabs(row_mean / 7.0) <= 1e-12);
        }
    }
}

TEST_CASE("backward computes analytic gradients") {
    SECTION("d/dx sum(x^2) = 2x") {
        Tensor x({3}, {1, 2, 3}, true);
        backward(sum(square(x)));
        CHECK(x.grad() == std::vector<double>{2, 4, 6});
    }
    SECTION("constant loss leaves zero gradient") {
        Tensor x({3}, {1, 2, 3}, true);
        Tensor c = Tensor::scalar(5.0);
        x.grad_mut();
        backward(sum(multiply(c, c)));
        CHECK(x.grad() == std::vector<double>{0, 0, 0});
    }
    SECTION("gradients accumulate across backward calls") {
        Tensor x({2}, {1, 1}, true);
        backward(sum(square(x)));
        backward(sum(square(x)));
        CHECK(x.grad() == std::vector<double>{4, 4});
    }
    SECTION("non-scalar loss is rejected") {
        Tensor x({2}, {1, 1}, true);
        CHECK_THROWS_AS(backward(square(x)), ShapeError);
    }
    SECTION("using one tensor twice doubles its gradient path") {
        Tensor x({2}, {3, 4}, true);
        backward(sum(multiply(x, x)));
        CHECK(x.grad() == std::vector<double>{6, 8});
    }
}

TEST_CASE("operations are deterministic") {
    Rng rng(33);
    Tensor a = random_tensor({6, 6}, rng);
    Tensor b = random_tensor({6, 6}, rng);
    Tensor r1 = matmul(softmax(a), layernorm(b));
    Tensor r2 = matmul(softmax(a), layernorm(b));
    CHECK(r1.values() == r2.values());  // bit-identical
}

// ----------------------------------------------------------------------
// Gradient checks: every differentiable op at random points, max relative
// error < 1e-4 in 64-bit.

namespace {

// Weighted-sum objective: plain sum would be constant for ops with a fixed
// row sum (softmax, layernorm), leaving nothing to differentiate.
double check_op(const std::function<Tensor(const std::vector<Tensor>&)>& op,
                std::vector<Tensor> inputs) {
    Rng wrng(digest_string("check_op"));
    Tensor probe = op(inputs);
    std::vector<double> w(probe.numel());
    for (double& x : w) x = wrng.uniform(-1, 1);
    Tensor weights(probe.shape(), std::move(w));
    auto f = [&]() { return sum(multiply(op(inputs), weights)); };
    return grad_check(f, inputs);
}

}  // namespace

TEST_CASE("elementwise and broadcast ops pass grad_check") {
    Rng rng(34);
    for (int iter = 0; iter < 10; ++iter) {
        Tensor a = random_tensor({3, 4}, rng);
        Tensor b = random_tensor({3, 4}, rng);
        Tensor row = random_tensor({4}, rng);
        Tensor col = random_tensor({3}, rng);
        CHECK(check_op([](auto& in) { return add(in[0], in[1]); }, {a, b}) < 1e-4);
        CHECK(check_op([](auto& in) { return subtract(in[0], in[1]); }, {a, b}) < 1e-4);
        CHECK(check_op([](auto& in) { return multiply(in[0], in[1]); }, {a, b}) < 1e-4);
        CHECK(check_op([](auto& in) { return add_row_broadcast(in[0], in[1]); }, {a, row}) < 1e-4);
        CHECK(check_op([](auto& in) { return multiply_row_broadcast(in[0], in[1]); }, {a, row}) <
              1e-4);
        CHECK(check_op([](auto& in) { return multiply_col_broadcast(in[0], in[1]); }, {a, col}) <
              1e-4);
        CHECK(check_op([](auto& in) { return scale(in[0], -1.7); }, {a}) < 1e-4);
        CHECK(check_op([](auto& in) { return square(in[0]); }, {a}) < 1e-4);
    }
}

TEST_CASE("nonlinearities pass grad_check") {
    Rng rng(35);
    for (int iter = 0; iter < 10; ++iter) {
        // keep relu/abs inputs away from their kinks
        Tensor x = random_tensor({2, 5}, rng, 0.2, 2.0);
        Tensor xneg = scale(x, -1.0);
        Tensor mixed({2, 5}, xneg.values(), true);
        CHECK(check_op([](auto& in) { return relu(in[0]); }, {x}) < 1e-4);
        CHECK(check_op([](auto& in) { return relu(in[0]); }, {mixed}) < 1e-4);
        CHECK(check_op([](auto& in) { return abs(in[0]); }, {mixed}) < 1e-4);
        Tensor wide = random_tensor({2, 5}, rng, -3.0, 3.0);
        CHECK(check_op([](auto& in) { return gelu(in[0]); }, {wide}) < 1e-4);
        CHECK(check_op([](auto& in) { return sigmoid(in[0]); }, {wide}) < 1e-4);
        Tensor pos = random_tensor({2, 5}, rng, 0.2, 4.0);
        CHECK(check_op([](auto& in) { return midtune::sqrt(in[0]); }, {pos}) < 1e-4);
        CHECK(check_op([](auto& in) { return midtune::log(in[0]); }, {pos}) < 1e-4);
    }
}

TEST_CASE("structural ops pass grad_check") {
    Rng rng(36);
    for (int iter = 0; iter < 10; ++iter) {
        Tensor a = random_tensor({3, 4}, rng);
        Tensor b = random_tensor({4, 2}, rng);
        Tensor bt = random_tensor({2, 4}, rng);
        CHECK(check_op([](auto& in) { return matmul(in[0], in[1]); }, {a, b}) < 1e-4);
        CHECK(check_op([](auto& in) { return matmul(in[0], in[1], true); }, {a, bt}) < 1e-4);
        CHECK(check_op([](auto& in) { return sum_axis0(in[0]); }, {a}) < 1e-4);
        CHECK(check_op([](auto& in) { return mean_axis0(in[0]); }, {a}) < 1e-4);
        CHECK(check_op([](auto& in) { return softmax(in[0]); }, {a}) < 1e-4);
        CHECK(check_op([](auto& in) { return layernorm(in[0]); }, {a}) < 1e-4);
        Tensor v1 = random_tensor({3}, rng);
        Tensor v2 = random_tensor({5}, rng);
        CHECK(check_op([](auto& in) { return concat({in[0], in[1]}); }, {v1, v2}) < 1e-4);
        Tensor m1 = random_tensor({2, 3}, rng);
        Tensor m2 = random_tensor({2, 2}, rng);
        CHECK(check_op([](auto& in) { return concat({in[0], in[1]}); }, {m1, m2}) < 1e-4);
        Tensor table = random_tensor({6, 3}, rng);
        std::vector<std::size_t> ids = {1, 4, 1, 0};
        CHECK(check_op([ids](auto& in) { return embedding_lookup(in[0], ids); }, {table}) < 1e-4);
    }
}

TEST_CASE("grad_check on an exact quadratic is tight") {
    Tensor x({4}, {0.5, -1.0, 2.0, 3.0}, true);
    double err = grad_check([&]() { return sum(square(x)); }, {x});
    CHECK(err < 1e-8);
}

TEST_CASE("embedding_lookup rejects out-of-range ids") {
    Tensor table({3, 2}, {1, 2, 3, 4, 5, 6});
    CHECK_THROWS_AS(embedding_lookup(table, {3}), ShapeError);
}
