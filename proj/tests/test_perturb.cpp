#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <span>

#include "pfad/perturb.hpp"

using namespace pfad;

namespace {

TokenSequence<double> make_sequence(int h, int w, int c, std::uint64_t seed) {
    Rng rng(seed);
    std::uniform_real_distribution<double> dist(-2, 2);
    std::vector<double> d(static_cast<size_t>(h) * w * c);
    for (auto& v : d) v = dist(rng);
    return {Tensor<double>({h * w, c}, std::move(d)), h, w};
}

}  // namespace

TEST_CASE("gaussian noise edge cases") {
    Rng rng(1);
    std::vector<double> f{1, 2, 3, 4};
    auto zero_alpha = sample_gaussian_noise<double>(f, 0.0, rng);
    for (double v : zero_alpha) CHECK(v == 0);

    std::vector<double> zeros(8, 0.0);
    auto from_zero = sample_gaussian_noise<double>(zeros, 1.0, rng);
    for (double v : from_zero) CHECK(v == 0);
}

TEST_CASE("gaussian noise std matches alpha*norm/C") {
    // C = 64, alpha = 1, ||f||_2 = 64 -> sigma = 1
    const int c = 64;
    std::vector<double> f(c, 8.0);  // norm = 8*sqrt(64) = 64
    Rng rng(42);
    double sq = 0;
    long long n = 0;
    for (int rep = 0; rep < 100000 / c + 1; ++rep) {
        auto d = sample_gaussian_noise<double>(f, 1.0, rng);
        for (double v : d) {
            sq += v * v;
            ++n;
        }
    }
    const double std = std::sqrt(sq / static_cast<double>(n));
    CHECK(std > 0.98);
    CHECK(std < 1.02);
}

TEST_CASE("gaussian noise scale adaptivity: scaling f scales sigma") {
    const int c = 32;
    std::vector<double> f(c), f2(c);
    Rng seed_rng(9);
    std::uniform_real_distribution<double> dist(0.5, 2.0);
    for (int i = 0; i < c; ++i) {
        f[static_cast<size_t>(i)] = dist(seed_rng);
        f2[static_cast<size_t>(i)] = 3.0 * f[static_cast<size_t>(i)];
    }
    auto empirical_std = [&](const std::vector<double>& v, std::uint64_t s) {
        Rng rng(s);
        double sq = 0;
        long long n = 0;
        for (int rep = 0; rep < 3000; ++rep) {
            auto d = sample_gaussian_noise<double>(v, 1.0, rng);
            for (double x : d) {
                sq += x * x;
                ++n;
            }
        }
        return std::sqrt(sq / static_cast<double>(n));
    };
    const double s1 = empirical_std(f, 7), s2 = empirical_std(f2, 7);
    CHECK(s2 / s1 == doctest::Approx(3.0).epsilon(0.02));
}

TEST_CASE("f-noise examples and bound") {
    Rng rng(2);
    std::vector<double> zeros(6, 0.0);
    for (double v : apply_f_noise<double>(zeros, -0.3, 0.3, rng)) CHECK(v == 0);

    // hand computation with pinned xi
    std::vector<double> f{2, -4};
    std::vector<double> xi{0.1, -0.2};
    for (size_t i = 0; i < f.size(); ++i)
        CHECK(f[i] * (1 + xi[i]) == doctest::Approx(i == 0 ? 2.2 : -3.2));

    // bound |out_i - f_i| <= 0.3 |f_i| over many draws
    std::uniform_real_distribution<double> dist(-5, 5);
    for (int rep = 0; rep < 2000; ++rep) {
        std::vector<double> x(16);
        for (auto& v : x) v = dist(rng);
        auto out = apply_f_noise<double>(x, -0.3, 0.3, rng);
        for (size_t i = 0; i < x.size(); ++i)
            CHECK(std::abs(out[i] - x[i]) <= 0.3 * std::abs(x[i]) + 1e-12);
    }

    CHECK_THROWS_AS(apply_f_noise<double>(std::span<const double>(f), 0.5, 0.2, rng),
                    std::invalid_argument);
}

TEST_CASE("f-drop hand example") {
    // activations [0, 5, 10] -> normalized [0, 0.5, 1]; gamma 0.7 drops the third
    std::vector<double> tokens{0, 0, 2.5, 2.5, 5, 5};
    auto res = apply_f_drop_with_gamma<double>(tokens, 3, 2, 0.7);
    CHECK(res.mask == std::vector<std::uint8_t>{1, 1, 0});
    CHECK(res.tokens[4] == 0);
    CHECK(res.tokens[5] == 0);
    CHECK(res.tokens[2] == 2.5);
}

TEST_CASE("f-drop degenerate and threshold-above-range cases") {
    std::vector<double> same{1, 1, 1, 1, 1, 1};
    auto res = apply_f_drop_with_gamma<double>(same, 3, 2, 0.7);
    CHECK(res.mask == std::vector<std::uint8_t>{1, 1, 1});
    CHECK(res.tokens == same);

    std::vector<double> varied{0, 1, 2, 3, 4, 5};
    auto all_kept = apply_f_drop_with_gamma<double>(varied, 3, 2, 1.5);
    CHECK(all_kept.mask == std::vector<std::uint8_t>{1, 1, 1});
}

TEST_CASE("f-drop mask count exact and monotone in gamma") {
    Rng rng(5);
    std::uniform_real_distribution<double> dist(-3, 3);
    std::uniform_real_distribution<double> gdist(0.1, 0.95);
    for (int rep = 0; rep < 300; ++rep) {
        const int n = std::uniform_int_distribution<int>(2, 9)(rng);
        const int c = 3;
        std::vector<double> tokens(static_cast<size_t>(n) * c);
        for (auto& v : tokens) v = dist(rng);
        const double g1 = gdist(rng), g2 = gdist(rng);
        const double lo = std::min(g1, g2), hi = std::max(g1, g2) + 1e-9;

        auto check_exact = [&](double gamma) {
            auto res = apply_f_drop_with_gamma<double>(tokens, n, c, gamma);
            // recompute normalized activations independently
            std::vector<double> act(static_cast<size_t>(n), 0.0);
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < c; ++j) act[static_cast<size_t>(i)] += std::abs(tokens[static_cast<size_t>(i * c + j)]);
            const double amin = *std::min_element(act.begin(), act.end());
            const double amax = *std::max_element(act.begin(), act.end());
            int expected = 0;
            for (double a : act)
                if (amax > amin && (a - amin) / (amax - amin) < gamma) ++expected;
            if (amax <= amin) expected = n;
            int ones = 0;
            for (auto m : res.mask) ones += m;
            CHECK(ones == expected);
            return res.mask;
        };
        auto m_lo = check_exact(lo);
        auto m_hi = check_exact(hi);
        for (int i = 0; i < n; ++i) CHECK(m_lo[static_cast<size_t>(i)] <= m_hi[static_cast<size_t>(i)]);
    }
}

TEST_CASE("pool_select degenerate weights") {
    PerturbationSpec spec;
    Rng rng(3);
    spec.weights[0] = 1;
    spec.weights[1] = 0;
    spec.weights[2] = 0;
    for (int i = 0; i < 50; ++i) CHECK(pool_select(spec, rng) == PerturbationKind::GaussianNoise);
    spec.weights[0] = 0;
    spec.weights[2] = 1;
    for (int i = 0; i < 50; ++i) CHECK(pool_select(spec, rng) == PerturbationKind::FDrop);
    spec.weights[2] = 0;
    CHECK_THROWS_AS(pool_select(spec, rng), std::invalid_argument);
}

TEST_CASE("pool_select uniform frequencies and chi-square") {
    PerturbationSpec spec;
    Rng rng(1234);
    const int draws = 30000;
    int counts[3] = {0, 0, 0};
    for (int i = 0; i < draws; ++i) counts[static_cast<int>(pool_select(spec, rng))]++;
    double chi2 = 0;
    for (int k = 0; k < 3; ++k) {
        const double freq = static_cast<double>(counts[k]) / draws;
        CHECK(freq > 0.32);
        CHECK(freq < 0.35);
        const double e = draws / 3.0;
        chi2 += (counts[k] - e) * (counts[k] - e) / e;
    }
    CHECK(chi2 < 13.82);  // chi-square(2) critical value at p = 0.001
}

TEST_CASE("perturb dispatcher identities") {
    auto seq = make_sequence(2, 3, 4, 77);
    PerturbationSpec spec;
    spec.weights[1] = 0;
    spec.weights[2] = 0;
    spec.alpha = 0;  // selected Gaussian with zero variance is a no-op
    Rng rng(1);
    auto [out, kind] = perturb(seq, spec, rng);
    CHECK(kind == PerturbationKind::GaussianNoise);
    CHECK(out.tokens.data() == seq.tokens.data());
}

TEST_CASE("perturb replays identically under a fixed seed") {
    auto seq = make_sequence(3, 3, 5, 21);
    PerturbationSpec spec;
    auto run = [&] {
        Rng rng(555);
        auto [out, kind] = perturb(seq, spec, rng);
        return std::make_pair(out.tokens.data(), kind);
    };
    auto a = run();
    auto b = run();
    CHECK(a.first == b.first);
    CHECK(a.second == b.second);
}

TEST_CASE("spec validation") {
    PerturbationSpec spec;
    spec.apply_prob = 1.5;
    CHECK_THROWS_AS(spec.validate(), std::invalid_argument);
    spec.apply_prob = 1.0;
    spec.fdrop_lo = 0.9;
    spec.fdrop_hi = 0.6;
    CHECK_THROWS_AS(spec.validate(), std::invalid_argument);
}
