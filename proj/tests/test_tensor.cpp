#include <catch2/catch_amalgamated.hpp>

#include "arranger/tensor.hpp"

using namespace arranger;

TEST_CASE("tensor shape and data length must agree") {
    CHECK_NOTHROW(Tensor<float>({2, 3}, std::vector<float>(6, 0.f)));
    CHECK_THROWS_AS(Tensor<float>({2, 3}, std::vector<float>(5, 0.f)), ShapeError);
    CHECK_THROWS_AS(Tensor<float>(Shape{0, 3}), ShapeError);
}

TEST_CASE("scalar tensors have empty shape and one element") {
    auto t = Tensor<double>::scalar(2.5);
    CHECK(t.rank() == 0);
    CHECK(t.numel() == 1);
    CHECK(t[0] == 2.5);
}

TEST_CASE("reshape preserves data, rejects bad sizes") {
    Tensor<float> t({2, 6}, {0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11});
    auto r = t.reshaped({3, 4});
    CHECK(r.at(2, 3) == 11.f);
    CHECK_THROWS_AS(t.reshaped({5, 2}), ShapeError);
}

TEST_CASE("finite validation flags NaN and Inf") {
    Tensor<float> t({2}, {1.f, 2.f});
    CHECK_NOTHROW(t.validate_finite());
    t[1] = std::numeric_limits<float>::quiet_NaN();
    CHECK_THROWS_AS(t.validate_finite(), NumericError);
    t[1] = std::numeric_limits<float>::infinity();
    CHECK_THROWS_AS(t.validate_finite(), NumericError);
}

TEST_CASE("rng is deterministic per seed and state round-trips") {
    Rng a(42), b(42);
    for (int i = 0; i < 100; ++i) CHECK(a.normal() == b.normal());

    Rng c(7);
    for (int i = 0; i < 13; ++i) c.normal();
    std::string state = c.save_state();
    std::vector<double> expect;
    for (int i = 0; i < 10; ++i) expect.push_back(c.normal());
    Rng d;
    d.load_state(state);
    for (int i = 0; i < 10; ++i) CHECK(d.normal() == expect[static_cast<size_t>(i)]);
}

TEST_CASE("randn moments look sane") {
    Rng rng(1);
    auto t = Tensor<double>::randn({10000}, rng);
    double mean = 0, var = 0;
    for (int64_t i = 0; i < t.numel(); ++i) mean += t[i];
    mean /= static_cast<double>(t.numel());
    for (int64_t i = 0; i < t.numel(); ++i) var += (t[i] - mean) * (t[i] - mean);
    var /= static_cast<double>(t.numel());
    CHECK(std::abs(mean) < 0.05);
    CHECK(std::abs(var - 1.0) < 0.05);
}
