#include <cmath>

#include "doctest.h"
#include "oracles.hpp"
#include "rmra/gradcheck.hpp"
#include "rmra/ops.hpp"

using namespace rmra;
using T = Tensor<double>;

TEST_CASE("tensor_new lays data out row-major") {
    const T t({2, 2}, {1.0, 2.0, 3.0, 4.0});
    CHECK(t.at({1, 0}) == 3.0);
    CHECK_FALSE(t.has_grad());
    const T z({3}, {0.0, 0.0, 0.0});
    CHECK(z.values().isZero());
    CHECK_THROWS_AS(T({2}, {1.0, 2.0, 3.0}), ShapeError);
    CHECK_THROWS_AS(T({0, 2}, std::vector<double>{}), ShapeError);
}

TEST_CASE("matmul") {
    const T eye({2, 2}, {1.0, 0.0, 0.0, 1.0});
    const T col({2, 1}, {5.0, 7.0});
    CHECK(oracle::to_vec(matmul(eye, col)) == std::vector<double>{5.0, 7.0});
    const T a({2, 2}, {1.0, 2.0, 3.0, 4.0});
    const T ones({2, 1}, {1.0, 1.0});
    CHECK(oracle::to_vec(matmul(a, ones)) == std::vector<double>{3.0, 7.0});
    CHECK_THROWS_AS(matmul(a, T({3, 1}, {1.0, 1.0, 1.0})), ShapeError);

    SUBCASE("agrees with the triple-loop oracle") {
        for (std::uint64_t seed = 0; seed < 10; ++seed) {
            CounterRng rng(seed);
            const T x = oracle::random_tensor({4, 3}, rng), y = oracle::random_tensor({3, 5}, rng);
            const auto expected = oracle::matmul(oracle::to_vec(x), oracle::to_vec(y), 4, 3, 5);
            CHECK(oracle::max_abs_diff(oracle::to_vec(matmul(x, y)), expected) <= 1e-12);
        }
    }
}

TEST_CASE("conv1d") {
    const T x({1, 3}, {1.0, 2.0, 3.0});
    const T zero_bias({1}, {0.0});
    CHECK(oracle::to_vec(conv1d(x, T({1, 1, 1}, {1.0}), zero_bias, 1, 0)) == oracle::to_vec(x));
    const T diff({1, 1, 3}, {1.0, 0.0, -1.0});
    CHECK(oracle::to_vec(conv1d(x, diff, zero_bias, 1, 0)) == std::vector<double>{-2.0});
    CHECK_THROWS_AS(conv1d(x, T::zeros({1, 1, 4}), zero_bias, 1, 0), ShapeError);
    CHECK_NOTHROW(conv1d(x, T::zeros({1, 1, 5}), zero_bias, 1, 1));

    SUBCASE("agrees with the nested-loop oracle, batched and unbatched") {
        for (std::uint64_t seed = 0; seed < 10; ++seed) {
            CounterRng rng(seed);
            const Index c_in = 1 + static_cast<Index>(rng.below(3)), c_out = 1 + static_cast<Index>(rng.below(4));
            const Index k = 1 + static_cast<Index>(rng.below(4)), len = 5 + static_cast<Index>(rng.below(8));
            const Index stride = 1 + static_cast<Index>(rng.below(2)), pad = static_cast<Index>(rng.below(2));
            const T w = oracle::random_tensor({c_out, c_in, k}, rng), b = oracle::random_tensor({c_out}, rng);
            const T xb = oracle::random_tensor({2, c_in, len}, rng);
            const auto y = conv1d(xb, w, b, stride, pad);
            const Index t_out = y.dim(2);
            for (Index bi = 0; bi < 2; ++bi) {
                const oracle::Vec xs(xb.values().data() + bi * c_in * len, xb.values().data() + (bi + 1) * c_in * len);
                const auto expected =
                    oracle::conv1d(xs, oracle::to_vec(w), oracle::to_vec(b), c_in, len, c_out, k, stride, pad);
                const oracle::Vec got(y.values().data() + bi * c_out * t_out,
                                      y.values().data() + (bi + 1) * c_out * t_out);
                CHECK(oracle::max_abs_diff(got, expected) <= 1e-12);
                const T single({c_in, len}, xs);
                CHECK(oracle::max_abs_diff(oracle::to_vec(conv1d(single, w, b, stride, pad)), expected) <= 1e-12);
            }
        }
    }
}

TEST_CASE("activations") {
    CHECK(oracle::to_vec(relu(T({3}, {1.0, -2.0, 0.0}))) == std::vector<double>{1.0, 0.0, 0.0});
    CHECK(sigmoid(T({1}, {0.0})).item() == 0.5);
    T kink = T::parameter({3}, rmra::Array<double>::Zero(3));
    backward(sum(relu(kink)));
    CHECK(kink.grad().isZero());  // subgradient at 0 is 0
    CounterRng rng(3);
    const T x = oracle::random_tensor({17}, rng, -3.0, 3.0);
    const auto pos = tanh(x).values(), neg = tanh(scale(x, -1.0)).values();
    CHECK(((pos + neg).abs() <= 1e-15).all());
}

TEST_CASE("softmax") {
    CHECK(oracle::to_vec(softmax(T({2}, {0.0, 0.0}))) == std::vector<double>{0.5, 0.5});
    const auto big = softmax(T({2}, {1000.0, 0.0}));
    CHECK(big.values().allFinite());
    CHECK(big[0] == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(big[1] < 1e-300);

    CounterRng rng(11);
    for (int trial = 0; trial < 20; ++trial) {
        const T x = oracle::random_tensor({7}, rng, -5.0, 5.0);
        const auto p = softmax(x);
        CHECK(std::abs(p.values().sum() - 1.0) <= 1e-9);
        CHECK((p.values() > 0.0).all());
        CHECK((p.values() < 1.0).all());
        const double shift = rng.uniform(-100.0, 100.0);
        const auto q = softmax(T({7}, rmra::Array<double>(x.values() + shift)));
        CHECK(((p.values() - q.values()).abs() <= 1e-12).all());
    }
}

TEST_CASE("backward") {
    SUBCASE("sum gives ones") {
        T x = T::parameter({2, 3}, rmra::Array<double>::LinSpaced(6, -1.0, 1.0));
        backward(sum(x));
        CHECK((x.grad() == 1.0).all());
    }
    SUBCASE("constant loss gives zeros") {
        T x = T::parameter({3}, rmra::Array<double>::Ones(3));
        const T c = T::scalar(4.0);
        backward(add(sum(scale(x, 0.0)), c));
        CHECK(x.grad().isZero());
    }
    SUBCASE("non-scalar loss is rejected") {
        T x = T::parameter({3}, rmra::Array<double>::Ones(3));
        CHECK_THROWS_AS(backward(relu(x)), ContractError);
    }
    SUBCASE("sum(relu(W x)) matches finite differences") {
        CounterRng rng(5);
        T w = oracle::random_tensor({4, 3}, rng);
        w.set_requires_grad();
        const T x = oracle::random_tensor({3, 1}, rng);
        auto loss = [&] { return sum(relu(matmul(w, x))); };
        CHECK(grad_check_leaf<double>(loss, w, 1e-5) <= 1e-6);
    }
    SUBCASE("second sweep after zeroing is bitwise identical") {
        CounterRng rng(8);
        T w = oracle::random_tensor({5, 4}, rng);
        w.set_requires_grad();
        const T x = oracle::random_tensor({4, 2}, rng);
        const auto loss = sum(tanh(matmul(w, x)));
        backward(loss);
        const rmra::Array<double> first = w.grad();
        w.zero_grad();
        backward(loss);
        CHECK((w.grad() == first).all());
    }
    SUBCASE("no-grad guard records nothing") {
        T x = T::parameter({2}, rmra::Array<double>::Ones(2));
        NoGradGuard guard;
        const auto y = sum(x);
        CHECK_FALSE(y.requires_grad());
        CHECK(y.is_leaf());
    }
}

TEST_CASE("grad_check reference values") {
    CounterRng rng(1);
    const T x = oracle::random_tensor({6}, rng);
    CHECK(grad_check<double>([](const T& v) { return sum(v); }, x, 1e-5) <= 1e-10);

    T one = T::parameter({1}, rmra::Array<double>::Ones(1));
    backward(sum(sigmoid(one)));
    const double s = 1.0 / (1.0 + std::exp(-1.0));
    CHECK(one.grad()[0] == doctest::Approx(s * (1.0 - s)).epsilon(1e-14));
    CHECK(one.grad()[0] == doctest::Approx(0.19661).epsilon(1e-4));
}

// Every differentiable primitive on 10 seeds, inputs in [-1, 1].
TEST_CASE("primitive gradients match central differences") {
    using Fn = std::function<T(const T&)>;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        CounterRng rng(100 + seed);
        const T a = oracle::random_tensor({3, 4}, rng), b = oracle::random_tensor({4, 2}, rng);
        const T w = oracle::random_tensor({5, 4}, rng), bias = oracle::random_tensor({5}, rng);
        const T k = oracle::random_tensor({3, 2, 3}, rng), kb = oracle::random_tensor({3}, rng);
        const T seq = oracle::random_tensor({2, 5, 3}, rng), q = oracle::random_tensor({2, 3}, rng);
        const T weights = oracle::random_tensor({2, 5}, rng);
        const T sig = oracle::random_tensor({2, 2, 5}, rng);
        const T probe = oracle::random_tensor({3, 4}, rng);
        // Weighted sums keep the loss sensitive to every output entry.
        auto wsum = [](const T& t, std::uint64_t s) {
            CounterRng r(s);
            return sum(mul(t, oracle::random_tensor(t.shape(), r)));
        };
        const std::vector<std::pair<const char*, std::pair<Fn, T>>> cases = {
            {"matmul lhs", {[&](const T& v) { return wsum(matmul(v, b), 1); }, a}},
            {"matmul rhs", {[&](const T& v) { return wsum(matmul(a, v), 2); }, b}},
            {"linear input", {[&](const T& v) { return wsum(linear(v, w, bias), 3); }, a}},
            {"linear weight", {[&](const T& v) { return wsum(linear(a, v, bias), 4); }, w}},
            {"linear bias", {[&](const T& v) { return wsum(linear(a, w, v), 5); }, bias}},
            {"sigmoid", {[&](const T& v) { return wsum(sigmoid(v), 6); }, a}},
            {"tanh", {[&](const T& v) { return wsum(tanh(v), 7); }, a}},
            {"relu", {[&](const T& v) { return wsum(relu(v), 8); }, a}},
            {"softmax", {[&](const T& v) { return wsum(softmax(v), 9); }, a}},
            {"mul", {[&](const T& v) { return wsum(mul(v, probe), 10); }, a}},
            {"conv input", {[&](const T& v) { return wsum(conv1d(v, k, kb, 2, 1), 11); }, sig}},
            {"conv kernel", {[&](const T& v) { return wsum(conv1d(sig, v, kb, 1, 1), 12); }, k}},
            {"conv bias", {[&](const T& v) { return wsum(conv1d(sig, k, v, 1, 0), 13); }, kb}},
            {"transpose", {[&](const T& v) { return wsum(transpose_last2(v), 14); }, seq}},
            {"slice", {[&](const T& v) { return wsum(slice_last(v, 1, 2), 15); }, a}},
            {"concat", {[&](const T& v) { return wsum(concat_last(v, probe), 16); }, a}},
            {"select_step", {[&](const T& v) { return wsum(select_step(v, 3), 17); }, seq}},
            {"batched_dot hiddens", {[&](const T& v) { return wsum(batched_dot(v, q), 18); }, seq}},
            {"batched_dot query", {[&](const T& v) { return wsum(batched_dot(seq, v), 19); }, q}},
            {"weighted_sum weights", {[&](const T& v) { return wsum(weighted_sum(v, seq), 20); }, weights}},
            {"weighted_sum hiddens", {[&](const T& v) { return wsum(weighted_sum(weights, v), 21); }, seq}},
            {"stack_steps",
             {[&](const T& v) { return wsum(stack_steps<double>({v, scale(v, 2.0), probe}), 22); }, a}},
        };
        for (const auto& [name, c] : cases) {
            const std::string label = name;
            CAPTURE(label);
            CAPTURE(seed);
            if (label == "relu") {
                // keep away from the kink
                CHECK((c.second.values().abs() > 1e-4).all());
            }
            CHECK(grad_check<double>(c.first, c.second, 1e-5) <= 1e-4);
        }
    }
}
