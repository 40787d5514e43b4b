#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "oracles.hpp"
#include "volta/rng.hpp"
#include "volta/tensor.hpp"

using namespace volta;

namespace {

Tensor random_tensor(std::vector<int> shape, RandomStream& rng, bool requires_grad = true,
                     double lo = -2.0, double hi = 2.0) {
    std::size_t n = 1;
    for (int d : shape) n *= static_cast<std::size_t>(d);
    std::vector<double> data(n);
    for (auto& v : data) v = rng.uniform(lo, hi);
    return Tensor::from_data(std::move(shape), std::move(data), requires_grad);
}

} // namespace

TEST_CASE("matmul identity and 1x1") {
    Tensor eye = Tensor::from_data({2, 2}, {1, 0, 0, 1});
    Tensor m = Tensor::from_data({2, 2}, {3, 4, 5, 6});
    Tensor r = matmul(eye, m);
    CHECK(r.data() == std::vector<double>{3, 4, 5, 6});

    Tensor a = Tensor::from_data({1, 1}, {2});
    Tensor b = Tensor::from_data({1, 1}, {3});
    CHECK(matmul(a, b).at(0, 0) == 6.0);
}

TEST_CASE("matmul matches triple-loop oracle") {
    RandomStream rng(17);
    Tensor a = random_tensor({4, 5}, rng, false);
    Tensor b = random_tensor({5, 3}, rng, false);
    Tensor c = matmul(a, b);
    auto expect = oracle::matmul_triple_loop(a.data(), b.data(), 4, 5, 3);
    for (std::size_t i = 0; i < expect.size(); ++i) {
        CHECK(std::abs(c.data()[i] - expect[i]) < 1e-12);
    }
}

TEST_CASE("matmul shape error names both shapes") {
    Tensor a = Tensor::zeros({4, 5});
    Tensor b = Tensor::zeros({3, 2});
    CHECK_THROWS_WITH_AS(matmul(a, b),
                         "matmul: inner dimensions disagree, [4,5] vs [3,2]", DimensionError);
}

TEST_CASE("softmax basics") {
    Tensor x = Tensor::row({0, 0});
    Tensor y = softmax(x, 0);
    CHECK(y.at(0) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(y.at(1) == doctest::Approx(0.5).epsilon(1e-15));

    CHECK_THROWS_AS(softmax(x, 1), DimensionError);
}

TEST_CASE("softmax shift invariance") {
    RandomStream rng(3);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> v(6);
        for (auto& e : v) e = rng.uniform(-5, 5);
        const double c = rng.uniform(-40, 40);
        std::vector<double> shifted = v;
        for (auto& e : shifted) e += c;
        Tensor y0 = softmax(Tensor::row(v), 0);
        Tensor y1 = softmax(Tensor::row(shifted), 0);
        for (int i = 0; i < 6; ++i) CHECK(std::abs(y0.at(i) - y1.at(i)) < 1e-12);
    }
}

TEST_CASE("softmax extreme logits stay finite") {
    Tensor y = softmax(Tensor::row({1000, 0}), 0);
    CHECK(y.at(0) == 1.0);
    CHECK(y.at(1) == 0.0);
    for (double v : y.data()) CHECK(std::isfinite(v));

    // against extended-precision reference on moderate values
    std::vector<double> x{3.5, -2.0, 0.25, 9.0};
    Tensor ys = softmax(Tensor::row(x), 0);
    auto ref = oracle::softmax_extended(x);
    for (int i = 0; i < 4; ++i) CHECK(ys.at(i) == doctest::Approx(ref[i]).epsilon(1e-14));
}

TEST_CASE("softmax rows sum to one and stay in range") {
    RandomStream rng(11);
    for (int trial = 0; trial < 50; ++trial) {
        Tensor x = random_tensor({5, 7}, rng, false, -30, 30);
        for (int axis : {0, 1}) {
            Tensor y = softmax(x, axis);
            for (double v : y.data()) {
                CHECK(v >= 0.0);
                CHECK(v <= 1.0);
            }
            const int lanes = axis == 0 ? 7 : 5;
            const int count = axis == 0 ? 5 : 7;
            for (int l = 0; l < lanes; ++l) {
                double s = 0.0;
                for (int i = 0; i < count; ++i) s += axis == 0 ? y.at(i, l) : y.at(l, i);
                CHECK(std::abs(s - 1.0) <= 1e-12);
            }
        }
    }
}

TEST_CASE("cross entropy hand values") {
    // uniform logits over 7 classes -> ln 7
    Tensor logits = Tensor::zeros({3, 7});
    Tensor loss = cross_entropy(logits, {0, 3, 6}, -1);
    CHECK(loss.value() == doctest::Approx(std::log(7.0)).epsilon(1e-12));

    // overwhelming margin on the correct class -> 0
    Tensor sharp = Tensor::from_data({1, 4}, {5000, 0, 0, 0});
    CHECK(cross_entropy(sharp, {0}, -1).value() == 0.0);

    // ignored positions do not contribute
    Tensor mixed = Tensor::zeros({2, 4});
    CHECK(cross_entropy(mixed, {1, -1}, -1).value() == doctest::Approx(std::log(4.0)));

    CHECK_THROWS_AS(cross_entropy(mixed, {9, 1}, -1), IndexError);
    CHECK_THROWS_AS(cross_entropy(mixed, {-1, -1}, -1), DegenerateInputError);
}

TEST_CASE("cross entropy gradient equals softmax minus one-hot") {
    RandomStream rng(23);
    Tensor logits = random_tensor({4, 5}, rng, true);
    std::vector<int> targets{1, -1, 4, 0}; // one ignored -> n_effective = 3
    Tensor loss = cross_entropy(logits, targets, -1);
    backward(loss);
    const auto& g = logits.grad();
    for (int i = 0; i < 4; ++i) {
        std::vector<double> row(5);
        for (int j = 0; j < 5; ++j) row[j] = logits.at(i, j);
        auto p = oracle::softmax_extended(row);
        for (int j = 0; j < 5; ++j) {
            const double expect =
                targets[i] == -1 ? 0.0 : (p[j] - (j == targets[i] ? 1.0 : 0.0)) / 3.0;
            CHECK(std::abs(g[static_cast<std::size_t>(i) * 5 + j] - expect) < 1e-12);
        }
    }

    // and against central finite differences
    const std::vector<double> base = logits.data();
    auto f = [&](const Tensor& t) { return cross_entropy(t, targets, -1); };
    CHECK(grad_check(f, Tensor::from_data({4, 5}, base), 1e-4) < 1e-5);
}

TEST_CASE("backward bilinear and quadratic identities") {
    RandomStream rng(5);
    Tensor a = random_tensor({6}, rng, true);
    Tensor b = random_tensor({6}, rng, false);
    backward(sum_all(mul(a, b)));
    for (int i = 0; i < 6; ++i) CHECK(a.grad()[i] == b.at(i));

    Tensor x = random_tensor({3, 3}, rng, true);
    backward(sum_all(mul(x, x)));
    for (std::size_t i = 0; i < x.size(); ++i) {
        CHECK(x.grad()[i] == doctest::Approx(2.0 * x.data()[i]).epsilon(1e-15));
    }
}

TEST_CASE("backward requires scalar") {
    Tensor x = Tensor::zeros({2, 2}, true);
    CHECK_THROWS_AS(backward(add(x, x)), ContractError);
}

TEST_CASE("backward twice accumulates") {
    Tensor x = Tensor::from_data({2}, {1.0, 2.0}, true);
    Tensor loss = sum_all(mul(x, x));
    backward(loss);
    backward(loss);
    CHECK(x.grad()[0] == 4.0);
    CHECK(x.grad()[1] == 8.0);
}

TEST_CASE("shared subexpressions are visited once") {
    // d/dx of (x*x + x*x) = 4x; a double visit would yield 8x.
    Tensor x = Tensor::from_data({3}, {1.0, -2.0, 0.5}, true);
    Tensor sq = mul(x, x);
    backward(sum_all(add(sq, sq)));
    for (int i = 0; i < 3; ++i) {
        CHECK(x.grad()[i] == doctest::Approx(4.0 * x.at(i)).epsilon(1e-15));
    }
}

TEST_CASE("composed graph matches finite differences") {
    RandomStream rng(41);
    const int t = 3, d = 6, v = 5;
    Tensor gain = random_tensor({d}, rng, false, 0.5, 1.5);
    Tensor bias = random_tensor({d}, rng, false, -0.2, 0.2);
    Tensor proj = random_tensor({d, v}, rng, false);
    std::vector<int> targets{2, 0, 4};
    auto f = [&](const Tensor& x) {
        Tensor h = layer_norm(x, gain, bias);
        Tensor logits = matmul(h, proj);
        Tensor probs = softmax(logits, 1);
        return cross_entropy(log(probs), targets, -1);
    };
    Tensor x0 = random_tensor({t, d}, rng, false);
    CHECK(grad_check(f, x0, 1e-4) < 1e-4);
}

TEST_CASE("grad_check reference points") {
    RandomStream rng(7);
    // sum of squares: exact analytic gradient
    auto squares = [](const Tensor& x) { return sum_all(mul(x, x)); };
    CHECK(grad_check(squares, random_tensor({4, 3}, rng, false), 1e-4) < 1e-8);

    // cross_entropy of softmax chain
    std::vector<int> targets{1, 0};
    auto chain = [&](const Tensor& x) {
        return cross_entropy(log(softmax(x, 1)), targets, -1);
    };
    CHECK(grad_check(chain, random_tensor({2, 4}, rng, false), 1e-4) < 1e-4);

    // matmul-reduce
    Tensor w = random_tensor({5, 4}, rng, false);
    auto mmr = [&](const Tensor& x) { return mean_all(matmul(x, w)); };
    CHECK(grad_check(mmr, random_tensor({3, 5}, rng, false), 1e-4) < 1e-6);
}

TEST_CASE("grad_check rejects nondeterministic functions") {
    int calls = 0;
    auto f = [&calls](const Tensor& x) {
        ++calls;
        return scale(sum_all(x), static_cast<double>(calls));
    };
    Tensor x = Tensor::from_data({2}, {1.0, 2.0});
    CHECK_THROWS_AS(grad_check(f, x, 1e-4), VerificationError);
}

TEST_CASE("forward results are bit-identical across runs") {
    auto run = [] {
        RandomStream rng(99);
        Tensor a = random_tensor({4, 4}, rng, false);
        Tensor b = random_tensor({4, 4}, rng, false);
        Tensor g = Tensor::full({4}, 1.0);
        Tensor z = Tensor::zeros({4});
        return layer_norm(gelu(matmul(a, b)), g, z).data();
    };
    CHECK(run() == run());
}

TEST_CASE("every inventory op passes grad_check on random small tensors") {
    RandomStream rng(2024);
    const double tol = 1e-4;
    const double eps = 1e-4;
    for (int trial = 0; trial < 100; ++trial) {
        const int m = 1 + rng.uniform_int(8);
        const int n = 1 + rng.uniform_int(8);
        const int k = 1 + rng.uniform_int(8);
        Tensor x0 = random_tensor({m, n}, rng, false);
        Tensor other = random_tensor({m, n}, rng, false);
        Tensor rhs = random_tensor({n, k}, rng, false);
        Tensor gain = random_tensor({n}, rng, false, 0.5, 1.5);
        Tensor bias = random_tensor({n}, rng, false, -0.5, 0.5);
        std::vector<int> targets(static_cast<std::size_t>(m));
        for (auto& t : targets) t = rng.uniform_int(n);

        CHECK(grad_check([&](const Tensor& x) { return sum_all(add(x, other)); }, x0, eps) < tol);
        CHECK(grad_check([&](const Tensor& x) { return sum_all(sub(other, x)); }, x0, eps) < tol);
        CHECK(grad_check([&](const Tensor& x) { return sum_all(mul(x, other)); }, x0, eps) < tol);
        CHECK(grad_check([&](const Tensor& x) { return sum_all(scale(x, -1.7)); }, x0, eps) < tol);
        CHECK(grad_check([&](const Tensor& x) { return sum_all(add_scalar(x, 0.3)); }, x0, eps) < tol);
        CHECK(grad_check([&](const Tensor& x) { return mean_all(matmul(x, rhs)); }, x0, eps) < tol);
        CHECK(grad_check([&](const Tensor& x) { return mean_all(transpose(x)); }, x0, eps) < tol);
        CHECK(grad_check([&](const Tensor& x) { return mean_all(bias_add(x, bias)); }, x0, eps) < tol);
        CHECK(grad_check([&](const Tensor& x) { return sum_all(concat({x, other}, 0)); }, x0, eps) < tol);
        if (n > 1) {
            CHECK(grad_check([&](const Tensor& x) { return sum_all(slice(x, 1, 0, n - 1)); }, x0, eps) < tol);
        }
        CHECK(grad_check([&](const Tensor& x) { return sum_all(reshape(x, {n, m})); }, x0, eps) < tol);
        CHECK(grad_check([&](const Tensor& x) { return mean_all(mul(softmax(x, 1), other)); }, x0, eps) < tol);
        CHECK(grad_check([&](const Tensor& x) { return mean_all(mul(softmax(x, 0), other)); }, x0, eps) < tol);
        CHECK(grad_check([&](const Tensor& x) { return mean_all(x); }, x0, eps) < tol);
        CHECK(grad_check([&](const Tensor& x) { return sum_all(mean_axis(x, 0)); }, x0, eps) < tol);
        CHECK(grad_check([&](const Tensor& x) { return sum_all(mean_axis(x, 1)); }, x0, eps) < tol);
        CHECK(grad_check([&](const Tensor& x) { return mean_all(exp(scale(x, 0.5))); }, x0, eps) < tol);
        CHECK(grad_check([&](const Tensor& x) { return mean_all(log(add_scalar(exp(x), 1.0))); }, x0, eps) < tol);
        CHECK(grad_check([&](const Tensor& x) { return mean_all(sigmoid(x)); }, x0, eps) < tol);
        CHECK(grad_check([&](const Tensor& x) { return mean_all(gelu(x)); }, x0, eps) < tol);
        CHECK(grad_check([&](const Tensor& x) { return mean_all(mul(layer_norm(x, gain, bias), other)); }, x0, eps) < tol);
        CHECK(grad_check([&](const Tensor& x) { return cross_entropy(x, targets, -1); }, x0, eps) < tol);

        // clamp_min away from its kink
        Tensor far = random_tensor({m, n}, rng, false, 1.0, 2.0);
        CHECK(grad_check([&](const Tensor& x) { return sum_all(clamp_min(x, 0.5)); }, far, eps) < tol);
        Tensor below = random_tensor({m, n}, rng, false, -2.0, -1.0);
        CHECK(grad_check([&](const Tensor& x) { return sum_all(clamp_min(x, 0.5)); }, below, eps) < tol);

        // embedding gather: gradient w.r.t. the table
        std::vector<int> ids(3);
        for (auto& id : ids) id = rng.uniform_int(m);
        CHECK(grad_check([&](const Tensor& tab) { return mean_all(embedding(tab, ids)); }, x0, eps) < tol);

        // layer_norm gain/bias paths
        CHECK(grad_check([&](const Tensor& g) { return mean_all(mul(layer_norm(x0, g, bias), other)); }, gain, eps) < tol);
        CHECK(grad_check([&](const Tensor& b) { return mean_all(mul(layer_norm(x0, gain, b), other)); }, bias, eps) < tol);
    }
}

TEST_CASE("no NaN after forward ops on finite inputs") {
    RandomStream rng(31);
    for (int trial = 0; trial < 30; ++trial) {
        Tensor x = random_tensor({4, 6}, rng, false, -50, 50);
        Tensor g = Tensor::full({6}, 1.0);
        Tensor z = Tensor::zeros({6});
        for (const Tensor& y :
             {softmax(x, 1), gelu(x), sigmoid(x), layer_norm(x, g, z), exp(scale(x, 0.1))}) {
            for (double v : y.data()) CHECK(!std::isnan(v));
        }
    }
}
