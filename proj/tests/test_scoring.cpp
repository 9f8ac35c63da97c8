#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "pfad/scoring.hpp"

using namespace pfad;

namespace {

FeatureMap make_map(int h, int w, int c, float value) {
    FeatureMap fm;
    fm.h = h;
    fm.w = w;
    fm.c = c;
    fm.data.assign(static_cast<size_t>(h) * w * c, value);
    return fm;
}

/// O(n^2) pairwise AUROC oracle: P(pos > neg) + 0.5 P(tie).
double auroc_pairwise(const std::vector<double>& scores, const std::vector<int>& labels) {
    double wins = 0;
    long long pairs = 0;
    for (size_t i = 0; i < scores.size(); ++i) {
        if (labels[i] != 1) continue;
        for (size_t j = 0; j < scores.size(); ++j) {
            if (labels[j] != 0) continue;
            ++pairs;
            if (scores[i] > scores[j])
                wins += 1;
            else if (scores[i] == scores[j])
                wins += 0.5;
        }
    }
    return wins / static_cast<double>(pairs);
}

}  // namespace

TEST_CASE("anomaly map: identical maps score zero, unit offset scores sqrt(c)") {
    auto a = make_map(3, 4, 5, 0.25f);
    auto z = anomaly_map(a, a);
    CHECK(z.h == 3);
    CHECK(z.w == 4);
    for (double v : z.scores) CHECK(v == 0);

    auto b = make_map(3, 4, 5, 1.25f);
    auto d = anomaly_map(a, b);
    for (double v : d.scores) CHECK(v == doctest::Approx(std::sqrt(5.0)));

    // a single perturbed location stays local
    auto c = a;
    c.at(1, 2, 0) += 3.0f;
    auto m = anomaly_map(a, c);
    CHECK(m.at(1, 2) == doctest::Approx(3.0));
    CHECK(m.at(0, 0) == 0);

    auto wrong = make_map(3, 4, 6, 0.0f);
    CHECK_THROWS_AS(anomaly_map(a, wrong), std::invalid_argument);
}

TEST_CASE("image_score examples") {
    AnomalyScoreMap flat{4, 4, std::vector<double>(16, 2.0)};
    CHECK(image_score(flat, 2) == doctest::Approx(2.0));
    CHECK(image_score(flat, 16) == doctest::Approx(2.0));  // kernel clamps to 4

    // single hot cell of 16, kernel 2: best window holds it once -> 16/4
    AnomalyScoreMap hot{4, 4, std::vector<double>(16, 0.0)};
    hot.scores[5] = 16.0;
    CHECK(image_score(hot, 2) == doctest::Approx(4.0));
    CHECK(image_score(hot, 1) == doctest::Approx(16.0));

    CHECK_THROWS_AS(image_score(hot, 0), std::invalid_argument);
}

TEST_CASE("image_score is monotone under pointwise increase") {
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> dist(0, 3);
    AnomalyScoreMap m{6, 6, std::vector<double>(36)};
    for (auto& v : m.scores) v = dist(rng);
    const double base = image_score(m, 3);
    auto bigger = m;
    for (auto& v : bigger.scores) v += 0.5;
    CHECK(image_score(bigger, 3) >= base + 0.5 - 1e-12);
}

TEST_CASE("localize upsamples and thresholds") {
    AnomalyScoreMap m{2, 2, {0, 0, 0, 8}};
    auto res = localize(m, 8, 8, 4.0);
    CHECK(res.h == 8);
    CHECK(res.w == 8);
    CHECK(res.upsampled.size() == 64);
    // bottom-right corner carries the peak, top-left stays clean
    CHECK(res.upsampled[63] == doctest::Approx(8.0));
    CHECK(res.upsampled[0] == doctest::Approx(0.0));
    CHECK(res.mask[63] == 1);
    CHECK(res.mask[0] == 0);
    // mask matches the continuous map everywhere
    for (size_t i = 0; i < res.upsampled.size(); ++i)
        CHECK(res.mask[i] == (res.upsampled[i] > 4.0 ? 1 : 0));
}

TEST_CASE("auroc trivial orderings") {
    CHECK(auroc({0.1, 0.9}, {0, 1}) == 1.0);
    CHECK(auroc({0.9, 0.1}, {0, 1}) == 0.0);
    CHECK(auroc({0.5, 0.5}, {0, 1}) == 0.5);
    CHECK(auroc({1, 2, 3, 4}, {0, 0, 1, 1}) == 1.0);
    CHECK_THROWS_AS(auroc({1, 2}, {1, 1}), std::invalid_argument);
    CHECK_THROWS_AS(auroc({1, 2}, {0, 2}), std::invalid_argument);
    CHECK_THROWS_AS(auroc({1, 2}, {0}), std::invalid_argument);
}

TEST_CASE("auroc equals the pairwise oracle on random data with ties") {
    std::mt19937_64 rng(17);
    std::uniform_int_distribution<int> ndist(4, 60);
    std::uniform_int_distribution<int> quant(0, 9);
    std::bernoulli_distribution coin(0.4);
    for (int trial = 0; trial < 200; ++trial) {
        const int n = ndist(rng);
        std::vector<double> scores(static_cast<size_t>(n));
        std::vector<int> labels(static_cast<size_t>(n));
        int pos = 0;
        for (int i = 0; i < n; ++i) {
            scores[static_cast<size_t>(i)] = quant(rng) * 0.125;  // heavy ties
            labels[static_cast<size_t>(i)] = coin(rng) ? 1 : 0;
            pos += labels[static_cast<size_t>(i)];
        }
        if (pos == 0 || pos == n) {
            labels[0] = 1 - labels[0];
        }
        const double fast = auroc(scores, labels);
        const double slow = auroc_pairwise(scores, labels);
        CHECK(std::abs(fast - slow) < 1e-12);

        // complement identity and monotone invariance
        std::vector<double> neg(scores), warped(scores);
        for (auto& v : neg) v = -v;
        for (auto& v : warped) v = std::exp(2.0 * v);
        CHECK(std::abs(auroc(neg, labels) - (1.0 - fast)) < 1e-12);
        CHECK(std::abs(auroc(warped, labels) - fast) < 1e-12);
    }
}

TEST_CASE("eval bookkeeping on a synthetic dataset with an untrained model") {
    const auto root = std::filesystem::temp_directory_path() / "pfad_score_eval";
    std::filesystem::remove_all(root);
    GenOptions opts;
    opts.n_categories = 2;
    opts.n_train = 4;
    opts.n_test_normal = 4;
    opts.n_test_defect = 4;
    opts.image_size = 32;
    opts.seed = 5;
    generate_dataset(root, opts);
    auto dataset = load_dataset(root);

    RandomProjectionFrontend fe(3, 2, 16);
    CodecConfig ccfg;
    ccfg.c_in = 16;
    ccfg.c_tok = 8;
    ccfg.hidden = 8;
    ccfg.n_enc_layers = 1;
    ccfg.n_dec_layers = 1;
    Codec<float> model(ccfg);
    model.init(2);

    auto report = eval_dataset(model, fe, dataset, 4);
    CHECK(report.per_category.size() == 2);
    CHECK(report.n_images == 16);
    CHECK(report.has_pixel);
    double acc_img = 0, acc_pix = 0;
    for (auto& cm : report.per_category) {
        CHECK(cm.n_images == 8);
        CHECK(cm.image_auroc >= 0);
        CHECK(cm.image_auroc <= 1);
        CHECK(cm.pixel_auroc >= 0);
        CHECK(cm.pixel_auroc <= 1);
        acc_img += cm.image_auroc;
        acc_pix += cm.pixel_auroc;
    }
    CHECK(report.image_auroc == doctest::Approx(acc_img / 2).epsilon(1e-12));
    CHECK(report.pixel_auroc == doctest::Approx(acc_pix / 2).epsilon(1e-12));
    CHECK(report.table().find("mean") != std::string::npos);
    CHECK(report.key_values().find("image_auroc=") != std::string::npos);
    std::filesystem::remove_all(root);
}
