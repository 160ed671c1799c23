#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "midtune/checkpoint.hpp"
#include "midtune/optim.hpp"
#include "midtune/tensor.hpp"
#include "testutil.hpp"

using namespace midtune;

TEST_CASE("first Adam step moves by about -lr * sign(grad)") {
    ParamMap params;
    params.emplace("x", Tensor({1}, {1.0}, true));
    params.at("x").grad_mut()[0] = 3.0;
    AdamState st;
    st.lr = 0.1;
    adam_step(params, st);
    // bias correction makes mhat/sqrt(vhat) = g/|g| up to eps
    CHECK(params.at("x").values()[0] == Catch::Approx(0.9).margin(1e-6));
    CHECK(st.t == 1);
    // grads were consumed and zeroed
    CHECK(params.at("x").grad()[0] == 0.0);
}

TEST_CASE("zero gradient leaves parameters unchanged") {
    ParamMap params;
    params.emplace("x", Tensor({2}, {1.5, -2.5}, true));
    params.at("x").grad_mut();
    AdamState st;
    adam_step(params, st);
    CHECK(params.at("x").values() == std::vector<double>{1.5, -2.5});
}

TEST_CASE("missing gradients raise OptimizerError") {
    ParamMap params;
    params.emplace("x", Tensor({1}, {1.0}, true));
    AdamState st;
    CHECK_THROWS_AS(adam_step(params, st), OptimizerError);
}

// Independent scalar Adam recurrence, written directly from the update
// equations; the optimizer must match it bit for bit on f(x) = x^2.
TEST_CASE("Adam matches an independent scalar recurrence on x^2") {
    ParamMap params;
    params.emplace("x", Tensor({1}, {5.0}, true));
    AdamState st;
    st.lr = 0.1;

    double x = 5.0, m = 0.0, v = 0.0;
    for (int t = 1; t <= 100; ++t) {
        Tensor loss = sum(square(params.at("x")));
        backward(loss);
        adam_step(params, st);

        double g = 2.0 * x;
        m = 0.9 * m + (1.0 - 0.9) * g;
        v = 0.999 * v + (1.0 - 0.999) * g * g;
        double mhat = m / (1.0 - std::pow(0.9, t));
        double vhat = v / (1.0 - std::pow(0.999, t));
        x -= 0.1 * mhat / (std::sqrt(vhat) + 1e-8);

        REQUIRE(params.at("x").values()[0] == x);  // identical arithmetic
    }
    CHECK(std::fabs(params.at("x").values()[0]) < 0.5);
}

TEST_CASE("checkpoints round-trip bit-exactly") {
    testutil::TempDir dir("ckpt");
    Rng rng(55);
    ParamMap params;
    for (int i = 0; i < 5; ++i) {
        std::vector<double> vals(12);
        for (double& x : vals) x = rng.uniform(-3, 3);
        params.emplace("p" + std::to_string(i), Tensor({3, 4}, vals, true));
    }
    std::string path = dir.file("model.bin");
    save_params(path, params);
    ParamMap loaded = load_params(path);
    REQUIRE(loaded.size() == params.size());
    for (const auto& [name, p] : params) {
        REQUIRE(loaded.count(name) == 1);
        CHECK(loaded.at(name).shape() == p.shape());
        CHECK(loaded.at(name).values() == p.values());  // bit-exact
        CHECK(loaded.at(name).requires_grad());
    }
    CHECK(params_digest(loaded) == params_digest(params));

    SECTION("saving twice writes identical bytes") {
        std::string path2 = dir.file("model2.bin");
        save_params(path2, params);
        CHECK(digest_file(path) == digest_file(path2));
    }
    SECTION("corruption is detected") {
        std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
        f.seekp(64);
        f.put('\x7f');
        f.close();
        CHECK_THROWS_AS(load_params(path), IoError);
    }
    SECTION("missing files are reported with the path") {
        try {
            load_params(dir.file("absent.bin"));
            FAIL("expected IoError");
        } catch (const IoError& e) {
            CHECK(std::string(e.what()).find("absent.bin") != std::string::npos);
        }
    }
}
