#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <thread>

#include "arranger/graph.hpp"

using namespace arranger;

namespace {

Tensor<float> iota(Shape s, float scale = 1.f) {
    Tensor<float> t(std::move(s));
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = scale * static_cast<float>(i);
    return t;
}

}  // namespace

TEST_CASE("matmul matches a hand-rolled product") {
    auto a = input<float>("a", {2, 3});
    auto b = input<float>("b", {3, 2});
    auto c = matmul(a, b);
    Bindings<float> bind{{"a", Tensor<float>({2, 3}, {1, 2, 3, 4, 5, 6})},
                         {"b", Tensor<float>({3, 2}, {7, 8, 9, 10, 11, 12})}};
    auto out = forward(c, bind);
    REQUIRE(out.shape() == Shape{2, 2});
    CHECK(out.at(0, 0) == 58.f);
    CHECK(out.at(0, 1) == 64.f);
    CHECK(out.at(1, 0) == 139.f);
    CHECK(out.at(1, 1) == 154.f);
}

TEST_CASE("matmul transpose flags") {
    Bindings<float> bind{{"a", Tensor<float>({3, 2}, {1, 4, 2, 5, 3, 6})},
                         {"b", Tensor<float>({2, 3}, {7, 9, 11, 8, 10, 12})}};
    auto a = input<float>("a", {3, 2});
    auto b = input<float>("b", {2, 3});
    auto c = matmul(a, b, true, true);
    auto out = forward(c, bind);
    CHECK(out.at(0, 0) == 58.f);
    CHECK(out.at(1, 1) == 154.f);
}

TEST_CASE("transposed convolution reproduces published layer arithmetic") {
    // latent (1,1,128) through a 1024-filter 1x1 stride-(1,1) transposed conv
    Rng rng(3);
    auto z = input<float>("z", {1, 1, 1, 128});
    auto w = constant(Tensor<float>::randn({1, 1, 1024, 128}, rng, 0.05f));
    auto y = transconv2d(z, w, 1, 1);
    CHECK(y->shape == Shape{1, 1, 1, 1024});

    // (48,84,1) through a 1x12 stride-(1,12) conv lands on (48,7)
    auto x = input<float>("x", {1, 48, 84, 1});
    auto wc = constant(Tensor<float>::randn({1, 12, 1, 128}, rng, 0.05f));
    auto c = conv2d(x, wc, 1, 12);
    CHECK(c->shape == Shape{1, 48, 7, 128});
}

TEST_CASE("conv2d computes a valid strided correlation") {
    // 1x4x4x1 input, 2x2 kernel, stride 2: windows do not overlap
    auto x = input<float>("x", {1, 4, 4, 1});
    auto w = input<float>("w", {2, 2, 1, 1});
    auto y = conv2d(x, w, 2, 2);
    REQUIRE(y->shape == Shape{1, 2, 2, 1});
    Bindings<float> bind{{"x", iota({1, 4, 4, 1})}, {"w", Tensor<float>({2, 2, 1, 1}, {1, 1, 1, 1})}};
    auto out = forward(y, bind);
    CHECK(out.at(0, 0, 0, 0) == 0 + 1 + 4 + 5);
    CHECK(out.at(0, 0, 1, 0) == 2 + 3 + 6 + 7);
    CHECK(out.at(0, 1, 0, 0) == 8 + 9 + 12 + 13);
    CHECK(out.at(0, 1, 1, 0) == 10 + 11 + 14 + 15);
}

TEST_CASE("transconv2d is the adjoint of conv2d") {
    // <conv(x, w), u> == <x, transconv(u, w)> for matching layouts
    Rng rng(5);
    Tensor<double> xv = Tensor<double>::randn({2, 5, 6, 3}, rng);
    Tensor<double> wv = Tensor<double>::randn({2, 2, 3, 4}, rng);
    Tensor<double> uv = Tensor<double>::randn({2, 2, 3, 4}, rng);  // conv output shape

    auto x = input<double>("x", xv.shape());
    auto w = constant(wv);
    auto u = input<double>("u", uv.shape());
    auto cx = conv2d(x, w, 2, 2);
    REQUIRE(cx->shape == uv.shape());
    auto tu = transconv2d(u, w, 2, 2);

    Bindings<double> bind{{"x", xv}, {"u", uv}};
    auto conv_out = forward(cx, bind);
    auto tconv_out = forward(tu, bind);

    double lhs = 0, rhs = 0;
    for (int64_t i = 0; i < conv_out.numel(); ++i) lhs += conv_out[i] * uv[i];
    // Conv never touches x's trailing row here (H=5, k=2, s=2), so the
    // adjoint lives on the smaller (4,6) grid; pair entries by coordinate.
    REQUIRE(tu->shape == Shape{2, 4, 6, 3});
    for (int64_t n = 0; n < 2; ++n)
        for (int64_t h = 0; h < 4; ++h)
            for (int64_t w2 = 0; w2 < 6; ++w2)
                for (int64_t c = 0; c < 3; ++c)
                    rhs += tconv_out.at(n, h, w2, c) * xv.at(n, h, w2, c);
    CHECK(lhs == Catch::Approx(rhs).epsilon(1e-12));
}

TEST_CASE("tanh of zero is zero") {
    auto x = input<float>("x", {4, 7});
    auto y = tanh_(x);
    auto out = forward(y, {{"x", Tensor<float>::zeros({4, 7})}});
    for (int64_t i = 0; i < out.numel(); ++i) CHECK(out[i] == 0.f);
}

TEST_CASE("suffix broadcasting add and mul") {
    auto x = input<float>("x", {2, 2, 3});
    auto b = input<float>("b", {3});
    auto out = forward(add(x, b), {{"x", Tensor<float>::zeros({2, 2, 3})},
                                   {"b", Tensor<float>({3}, {1, 2, 3})}});
    CHECK(out.at(0, 0, 0) == 1.f);
    CHECK(out.at(1, 1, 2) == 3.f);

    auto s = input<float>("s", {});
    auto out2 = forward(mul(x, s), {{"x", Tensor<float>::full({2, 2, 3}, 2.f)},
                                    {"s", Tensor<float>::scalar(5.f)}});
    for (int64_t i = 0; i < out2.numel(); ++i) CHECK(out2[i] == 10.f);
}

TEST_CASE("concat and slice on the channel axis") {
    auto a = input<float>("a", {1, 2, 1, 2});
    auto b = input<float>("b", {1, 2, 1, 3});
    auto c = concat_channels<float>({a, b});
    REQUIRE(c->shape == Shape{1, 2, 1, 5});
    Bindings<float> bind{{"a", iota({1, 2, 1, 2})}, {"b", iota({1, 2, 1, 3}, 10.f)}};
    auto out = forward(c, bind);
    CHECK(out.at(0, 0, 0, 0) == 0.f);
    CHECK(out.at(0, 0, 0, 1) == 1.f);
    CHECK(out.at(0, 0, 0, 2) == 0.f);
    CHECK(out.at(0, 0, 0, 4) == 20.f);
    CHECK(out.at(0, 1, 0, 0) == 2.f);
    CHECK(out.at(0, 1, 0, 2) == 30.f);

    auto back = slice(c, 3, 2, 3);
    auto sliced = forward(back, bind);
    CHECK(sliced.at(0, 1, 0, 0) == 30.f);
}

TEST_CASE("reduce sum/mean and broadcast invert each other") {
    auto x = input<float>("x", {2, 3});
    auto summed = reduce_sum(x, {1, 0});
    REQUIRE(summed->shape == Shape{3});
    Bindings<float> bind{{"x", Tensor<float>({2, 3}, {1, 2, 3, 4, 5, 6})}};
    auto out = forward(summed, bind);
    CHECK(out[0] == 5.f);
    CHECK(out[1] == 7.f);
    CHECK(out[2] == 9.f);

    auto meaned = reduce_mean(x, {0, 1});
    REQUIRE(meaned->shape == Shape{2});
    auto m = forward(meaned, bind);
    CHECK(m[0] == 2.f);
    CHECK(m[1] == 5.f);

    auto tile = broadcast(input<float>("t", {3}), {2, 3}, {1, 0}, 2.0);
    auto t = forward(tile, {{"t", Tensor<float>({3}, {1, 2, 3})}});
    CHECK(t.at(0, 0) == 2.f);
    CHECK(t.at(1, 2) == 6.f);
}

TEST_CASE("shape errors carry node identity and both shapes") {
    auto x = input<float>("melody", {2, 3});
    auto w = input<float>("w", {4, 5});
    try {
        matmul(x, w);
        FAIL("expected ShapeError");
    } catch (const ShapeError& e) {
        std::string msg = e.what();
        CHECK(msg.find("matmul") != std::string::npos);
        CHECK(msg.find("(2, 3)") != std::string::npos);
        CHECK(msg.find("(4, 5)") != std::string::npos);
    }
    CHECK_THROWS_AS(conv2d(input<float>("x", {1, 4, 4, 5}),
                           input<float>("w", {2, 2, 6, 8}), 1, 1),
                    ShapeError);
}

TEST_CASE("forward rejects unbound and misshapen inputs") {
    auto x = input<float>("x", {2, 2});
    auto y = tanh_(x);
    CHECK_THROWS_AS(forward(y, {}), Error);
    CHECK_THROWS_AS(forward(y, {{"x", Tensor<float>::zeros({3, 2})}}), ShapeError);
}

TEST_CASE("backward requires a scalar loss and a prior forward") {
    auto x = input<float>("x", {2, 2});
    auto y = tanh_(x);
    CHECK_THROWS_AS(grad(y, {x}), ShapeError);

    Session<float> s({{"x", Tensor<float>::zeros({2, 2})}});
    auto loss = mean_all(y);
    CHECK_THROWS_AS(backward(s, loss, {x}), Error);  // nothing evaluated yet
    s.eval(loss);
    CHECK_NOTHROW(backward(s, loss, {x}));
}

TEST_CASE("forward output is bitwise deterministic") {
    Rng rng(11);
    auto x = input<float>("x", {2, 6, 6, 3});
    auto w = constant(Tensor<float>::randn({2, 3, 3, 8}, rng, 0.1f));
    auto y = tanh_(conv2d(x, w, 2, 3));
    Rng data_rng(12);
    Bindings<float> bind{{"x", Tensor<float>::randn({2, 6, 6, 3}, data_rng)}};
    auto o1 = forward(y, bind);
    auto o2 = forward(y, bind);
    CHECK(o1.vec() == o2.vec());
}

TEST_CASE("graph construction is thread-safe for independent graphs") {
    // ids must stay unique across concurrent builders
    std::vector<std::thread> threads;
    std::vector<uint64_t> ids(4 * 50);
    for (int t = 0; t < 4; ++t) {
        threads.emplace_back([t, &ids] {
            for (int i = 0; i < 50; ++i) {
                auto n = input<float>("x", {1});
                ids[static_cast<size_t>(t * 50 + i)] = n->id;
            }
        });
    }
    for (auto& th : threads) th.join();
    std::sort(ids.begin(), ids.end());
    CHECK(std::adjacent_find(ids.begin(), ids.end()) == ids.end());
}
