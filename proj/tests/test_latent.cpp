#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "oracles.hpp"
#include "volta/latent.hpp"

using namespace volta;

namespace {

GaussianPosterior make_gauss(std::vector<double> mu, std::vector<double> log_sigma,
                             bool requires_grad = false) {
    return GaussianPosterior(Tensor::row(std::move(mu), requires_grad),
                             Tensor::row(std::move(log_sigma), requires_grad));
}

} // namespace

TEST_CASE("gaussian sampling: zero-sigma limit is deterministic") {
    RandomStream rng(1);
    auto post = make_gauss({1.5, -0.25, 7.0}, {-750, -750, -750});
    Tensor z = sample_gaussian(post, rng);
    CHECK(z.at(0) == 1.5);
    CHECK(z.at(1) == -0.25);
    CHECK(z.at(2) == 7.0);
}

TEST_CASE("gaussian sampling: standard normal moments") {
    RandomStream rng(2);
    auto post = make_gauss({0.0}, {0.0});
    const int n = 100000;
    double sum = 0.0, sq = 0.0;
    for (int i = 0; i < n; ++i) {
        const double z = sample_gaussian(post, rng).at(0);
        sum += z;
        sq += z * z;
    }
    const double mean = sum / n;
    const double var = sq / n - mean * mean;
    CHECK(std::abs(mean) < 0.02);
    CHECK(std::abs(var - 1.0) < 0.03);
}

TEST_CASE("gaussian sampling: gradient of sum w.r.t. mu is all ones") {
    RandomStream rng(3);
    auto post = make_gauss({0.5, -1.0, 2.0}, {0.1, 0.2, 0.3}, true);
    backward(sum_all(sample_gaussian(post, rng)));
    for (double g : post.mu.grad()) CHECK(g == 1.0);
}

TEST_CASE("gaussian sampling: grad_check with frozen draws") {
    auto f = [](const Tensor& mu) {
        RandomStream rng(77); // frozen noise
        GaussianPosterior post(mu, Tensor::row({-0.3, 0.4}));
        Tensor z = sample_gaussian(post, rng);
        return sum_all(mul(z, z));
    };
    CHECK(grad_check(f, Tensor::row({0.2, -0.7}), 1e-4) < 1e-6);

    auto f_ls = [](const Tensor& ls) {
        RandomStream rng(78);
        GaussianPosterior post(Tensor::row({0.2, -0.7}), ls);
        Tensor z = sample_gaussian(post, rng);
        return sum_all(mul(z, z));
    };
    CHECK(grad_check(f_ls, Tensor::row({-0.3, 0.4}), 1e-4) < 1e-6);
}

TEST_CASE("gumbel-softmax: dominated logits yield a one-hot") {
    RandomStream rng(4);
    CategoricalPosterior post(Tensor::from_data({1, 4}, {50, 0, 0, 0}), 4);
    for (int trial = 0; trial < 100; ++trial) {
        Tensor y = sample_gumbel_softmax(post, 1.0, rng);
        CHECK(y.at(0, 0) > 0.99);
    }
}

TEST_CASE("gumbel-softmax: argmax frequencies follow pi") {
    RandomStream rng(5);
    const int k = 10;
    std::vector<double> logits(k);
    for (auto& v : logits) v = rng.uniform(-1.5, 1.5);
    CategoricalPosterior post(Tensor::from_data({1, k}, logits), k);
    auto pi = oracle::softmax_extended(logits);

    const int n = 100000;
    std::vector<int> counts(k, 0);
    for (int i = 0; i < n; ++i) {
        Tensor y = sample_gumbel_softmax(post, 1.0, rng);
        int arg = 0;
        for (int j = 1; j < k; ++j) {
            if (y.at(0, j) > y.at(0, arg)) arg = j;
        }
        counts[arg]++;
    }
    double l1 = 0.0;
    for (int j = 0; j < k; ++j) l1 += std::abs(static_cast<double>(counts[j]) / n - pi[j]);
    CHECK(l1 < 0.02);
}

TEST_CASE("gumbel-softmax: tiny temperature sharpens to near one-hot") {
    RandomStream rng(6);
    // with near-uniform pi the top-2 perturbed gap is ~Exp(1), so ~4.5% of
    // draws land within the tie window; a dominant category keeps near-ties
    // below 1% and makes the sharpness bound testable
    std::vector<double> logits(10, 0.0);
    logits[0] = 6.0;
    CategoricalPosterior post(Tensor::from_data({1, 10}, logits), 10);
    const int n = 10000;
    int sharp = 0;
    for (int trial = 0; trial < n; ++trial) {
        Tensor y = sample_gumbel_softmax(post, 0.01, rng);
        double mx = 0.0;
        for (int j = 0; j < 10; ++j) mx = std::max(mx, y.at(0, j));
        if (mx >= 0.99) ++sharp;
    }
    CHECK(static_cast<double>(sharp) / n >= 0.99);
    CHECK_THROWS_AS(sample_gumbel_softmax(post, 0.0, rng), ContractError);
}

TEST_CASE("gumbel-softmax: simplex invariants across temperatures") {
    RandomStream rng(7);
    CategoricalPosterior post(Tensor::from_data({3, 4},
                                                {0.1, -0.4, 0.7, 0.0,
                                                 2.0, -2.0, 0.0, 0.5,
                                                 -1.0, -1.0, -1.0, 3.0}),
                              4);
    for (double tau : {0.01, 0.5, 1.0, 5.0}) {
        for (int trial = 0; trial < 200; ++trial) {
            Tensor y = sample_gumbel_softmax(post, tau, rng);
            for (int j = 0; j < 3; ++j) {
                double s = 0.0;
                for (int i = 0; i < 4; ++i) {
                    CHECK(y.at(j, i) >= 0.0);
                    s += y.at(j, i);
                }
                CHECK(std::abs(s - 1.0) <= 1e-9);
            }
        }
    }
}

TEST_CASE("gumbel-softmax: mean max-component grows as tau shrinks") {
    RandomStream rng(8);
    CategoricalPosterior post(Tensor::from_data({1, 6}, {0.4, 0.1, -0.3, 0.8, 0.0, -0.6}), 6);
    std::vector<double> taus{5.0, 1.0, 0.5, 0.01};
    std::vector<double> mean_max;
    for (double tau : taus) {
        double acc = 0.0;
        const int n = 10000;
        for (int i = 0; i < n; ++i) {
            Tensor y = sample_gumbel_softmax(post, tau, rng);
            double mx = 0.0;
            for (int j = 0; j < 6; ++j) mx = std::max(mx, y.at(0, j));
            acc += mx;
        }
        mean_max.push_back(acc / n);
    }
    for (std::size_t i = 1; i < mean_max.size(); ++i) CHECK(mean_max[i] >= mean_max[i - 1]);
}

TEST_CASE("gumbel-softmax: differentiable w.r.t. logits") {
    auto f = [](const Tensor& logits) {
        RandomStream rng(91);
        CategoricalPosterior post(logits, 4);
        Tensor y = sample_gumbel_softmax(post, 0.7, rng);
        return sum_all(mul(y, y));
    };
    RandomStream rng(92);
    std::vector<double> base(8);
    for (auto& v : base) v = rng.uniform(-1, 1);
    CHECK(grad_check(f, Tensor::from_data({2, 4}, base), 1e-4) < 1e-4);
}

TEST_CASE("latent codes: empty and distribution checks") {
    RandomStream rng(9);
    LatentCodes empty = sample_codes(0, 0, 10, rng);
    CHECK(empty.n_continuous() == 0);
    CHECK(empty.n_discrete() == 0);
    CHECK(empty.flat().empty());

    const int n = 100000;
    double mean = 0.0;
    std::vector<int> counts(10, 0);
    for (int i = 0; i < n; ++i) {
        LatentCodes c = sample_codes(1, 1, 10, rng);
        CHECK(c.continuous[0] >= -1.0);
        CHECK(c.continuous[0] <= 1.0);
        mean += c.continuous[0];
        counts[static_cast<std::size_t>(c.discrete[0])]++;
    }
    CHECK(std::abs(mean / n) < 0.02);
    for (int j = 0; j < 10; ++j) {
        CHECK(std::abs(static_cast<double>(counts[j]) / n - 0.1) < 0.02);
    }

    LatentCodes c = sample_codes(2, 3, 4, rng);
    CHECK(c.flat().size() == 2 + 3 * 4);
    auto oh = c.one_hot(1);
    CHECK(std::count(oh.begin(), oh.end(), 1.0) == 1);
    CHECK(std::count(oh.begin(), oh.end(), 0.0) == 3);
}

TEST_CASE("kl_gaussian: identical distributions give exactly zero") {
    auto q = make_gauss({0.3, -1.2}, {0.5, -0.1});
    auto p = make_gauss({0.3, -1.2}, {0.5, -0.1});
    Tensor kl = kl_gaussian(q, p);
    CHECK(kl.at(0) == 0.0);
    CHECK(kl.at(1) == 0.0);
}

TEST_CASE("kl_gaussian: hand values and Monte-Carlo oracle") {
    // N(1,1) vs N(0,1) -> 0.5
    auto q1 = make_gauss({1.0}, {0.0});
    auto p1 = make_gauss({0.0}, {0.0});
    CHECK(kl_gaussian(q1, p1).at(0) == doctest::Approx(0.5).epsilon(1e-12));

    // N(0,4) vs N(0,1) -> -ln 2 + 2 - 0.5
    auto q2 = make_gauss({0.0}, {std::log(2.0)});
    CHECK(kl_gaussian(q2, p1).at(0) ==
          doctest::Approx(-std::log(2.0) + 2.0 - 0.5).epsilon(1e-12));

    RandomStream rng(10);
    double mc1 = oracle::mc_kl_gaussian({1.0}, {1.0}, {0.0}, {1.0}, 1000000, rng);
    CHECK(std::abs(mc1 - 0.5) < 1e-2);
    double mc2 = oracle::mc_kl_gaussian({0.0}, {2.0}, {0.0}, {1.0}, 1000000, rng);
    CHECK(std::abs(mc2 - kl_gaussian(q2, p1).at(0)) < 1e-2);

    CHECK_THROWS_AS(kl_gaussian(make_gauss({0, 0}, {0, 0}), p1), DimensionError);
}

TEST_CASE("kl oracles: closed form matches Monte-Carlo on random parameter sets") {
    RandomStream rng(11);
    for (int set = 0; set < 20; ++set) {
        // ranges keep the estimator's standard error a few e-3 at 1e6 samples
        const int dims = 1 + rng.uniform_int(3);
        std::vector<double> mu_q(dims), ls_q(dims), mu_p(dims), ls_p(dims);
        std::vector<double> sig_q(dims), sig_p(dims);
        for (int d = 0; d < dims; ++d) {
            mu_q[d] = rng.uniform(-1, 1);
            mu_p[d] = rng.uniform(-1, 1);
            ls_q[d] = rng.uniform(-0.3, 0.3);
            ls_p[d] = rng.uniform(-0.3, 0.3);
            sig_q[d] = std::exp(ls_q[d]);
            sig_p[d] = std::exp(ls_p[d]);
        }
        Tensor kl = kl_gaussian(make_gauss(mu_q, ls_q), make_gauss(mu_p, ls_p));
        double closed = 0.0;
        for (int d = 0; d < dims; ++d) closed += kl.at(d);
        const double mc = oracle::mc_kl_gaussian(mu_q, sig_q, mu_p, sig_p, 1000000, rng);
        CHECK(std::abs(closed - mc) < 1e-2);
    }

    for (int set = 0; set < 20; ++set) {
        const int k = 2 + rng.uniform_int(8);
        std::vector<double> lq(k), lp(k);
        for (int i = 0; i < k; ++i) {
            lq[i] = rng.uniform(-1.5, 1.5);
            lp[i] = rng.uniform(-1.5, 1.5);
        }
        CategoricalPosterior q(Tensor::from_data({1, k}, lq), k);
        CategoricalPosterior p(Tensor::from_data({1, k}, lp), k);
        const double closed = kl_categorical(q, p).at(0);
        const double mc = oracle::mc_kl_categorical(oracle::softmax_extended(lq),
                                                    oracle::softmax_extended(lp), 1000000, rng);
        CHECK(std::abs(closed - mc) < 1e-2);
    }
}

TEST_CASE("kl_categorical: hand values") {
    auto uni2 = CategoricalPosterior::from_probs({{0.5, 0.5}});
    CHECK(kl_categorical(uni2, uni2).at(0) == 0.0);

    auto peaked = CategoricalPosterior::from_probs({{1.0 - 1e-12, 1e-12}});
    CHECK(kl_categorical(peaked, uni2).at(0) == doctest::Approx(std::log(2.0)).epsilon(1e-9));

    auto q = CategoricalPosterior::from_probs({{0.75, 0.25}});
    const double expect = 0.75 * std::log(1.5) + 0.25 * std::log(0.5);
    CHECK(kl_categorical(q, uni2).at(0) == doctest::Approx(expect).epsilon(1e-12));

    auto zerop = CategoricalPosterior::from_probs({{1.0, 0.0}});
    CHECK_THROWS_AS(kl_categorical(q, zerop), NumericError);
    // 0 log 0 = 0: q with a zero entry against a full-support p is finite
    CHECK(std::isfinite(kl_categorical(zerop, uni2).at(0)));
    CHECK(kl_categorical(zerop, uni2).at(0) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("kl divergences are non-negative, zero only at equality") {
    RandomStream rng(12);
    for (int trial = 0; trial < 10000; ++trial) {
        auto q = make_gauss({rng.uniform(-3, 3)}, {rng.uniform(-2, 2)});
        auto p = make_gauss({rng.uniform(-3, 3)}, {rng.uniform(-2, 2)});
        CHECK(kl_gaussian(q, p).at(0) >= 0.0);

        std::vector<double> lq{rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-2, 2)};
        std::vector<double> lp{rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-2, 2)};
        CategoricalPosterior cq(Tensor::from_data({1, 3}, lq), 3);
        CategoricalPosterior cp(Tensor::from_data({1, 3}, lp), 3);
        CHECK(kl_categorical(cq, cp).at(0) >= 0.0);
    }
}

TEST_CASE("kl divergences are differentiable") {
    auto fq = [](const Tensor& mu) {
        GaussianPosterior q(mu, Tensor::row({0.2, -0.4}));
        GaussianPosterior p(Tensor::row({0.0, 0.5}), Tensor::row({0.0, 0.0}));
        return sum_all(kl_gaussian(q, p));
    };
    CHECK(grad_check(fq, Tensor::row({0.7, -0.3}), 1e-4) < 1e-6);

    auto fc = [](const Tensor& logits) {
        CategoricalPosterior q(logits, 3);
        CategoricalPosterior p(Tensor::from_data({2, 3}, {0.2, -0.1, 0.4, 0.0, 0.0, 0.0}), 3);
        return sum_all(kl_categorical(q, p));
    };
    CHECK(grad_check(fc, Tensor::from_data({2, 3}, {0.5, -0.2, 0.1, 1.0, 0.0, -1.0}), 1e-4) < 1e-4);

    auto fp = [](const Tensor& logits) {
        CategoricalPosterior q(Tensor::from_data({2, 3}, {0.5, -0.2, 0.1, 1.0, 0.0, -1.0}), 3);
        CategoricalPosterior p(logits, 3);
        return sum_all(kl_categorical(q, p));
    };
    CHECK(grad_check(fp, Tensor::from_data({2, 3}, {0.2, -0.1, 0.4, 0.3, -0.3, 0.0}), 1e-4) < 1e-4);
}

TEST_CASE("code log-likelihood") {
    // one-hot on the true category -> log 1 = 0
    auto sharp = RecoveryParam::discrete(Tensor::row({1000, 0, 0}));
    CHECK(code_log_likelihood(sharp, 0).value() == 0.0);

    auto uniform = RecoveryParam::discrete(Tensor::zeros({10}));
    CHECK(code_log_likelihood(uniform, 3).value() == doctest::Approx(-std::log(10.0)).epsilon(1e-12));

    auto cont = RecoveryParam::continuous(Tensor::scalar(0.42));
    CHECK(code_log_likelihood(cont, 0.42).value() ==
          doctest::Approx(-0.5 * std::log(2.0 * 3.14159265358979323846)).epsilon(1e-12));

    CHECK_THROWS_AS(code_log_likelihood(cont, 3), ContractError);
    CHECK_THROWS_AS(code_log_likelihood(sharp, 0.5), ContractError);

    // differentiable w.r.t. theta
    auto f = [](const Tensor& logits) {
        return code_log_likelihood(RecoveryParam::discrete(logits), 1);
    };
    CHECK(grad_check(f, Tensor::row({0.3, -0.2, 0.8, 0.0}), 1e-4) < 1e-6);
    auto g = [](const Tensor& mean) {
        return code_log_likelihood(RecoveryParam::continuous(mean), -0.6);
    };
    CHECK(grad_check(g, Tensor::scalar(0.2), 1e-4) < 1e-6);
}

TEST_CASE("latent interpolation endpoints and midpoint") {
    LatentSample a, b;
    a.z_g = Tensor::row({0, 0, 0});
    b.z_g = Tensor::row({2, 2, 2});
    a.z_a = Tensor::from_data({1, 2}, {0.9, 0.1});
    b.z_a = Tensor::from_data({1, 2}, {0.2, 0.8});

    LatentSample at0 = interpolate_latents(a, b, 0.0);
    LatentSample at1 = interpolate_latents(a, b, 1.0);
    CHECK(at0.z_g.data() == a.z_g.data());
    CHECK(at1.z_g.data() == b.z_g.data());
    CHECK(at0.z_a.data() == a.z_a.data());

    LatentSample mid = interpolate_latents(a, b, 0.5);
    for (int i = 0; i < 3; ++i) CHECK(mid.z_g.at(i) == 1.0);
    CHECK(mid.z_a.at(0, 0) + mid.z_a.at(0, 1) == doctest::Approx(1.0).epsilon(1e-15));

    CHECK_THROWS_AS(interpolate_latents(a, b, 1.5), ContractError);
    CHECK_THROWS_AS(interpolate_latents(a, b, -0.1), ContractError);
}
