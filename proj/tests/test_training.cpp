#include "doctest.h"

#include <cmath>
#include <map>
#include <vector>

#include "sparsevid/checkpoint.hpp"
#include "sparsevid/errors.hpp"
#include "sparsevid/training.hpp"

using namespace sparsevid;

namespace {

ArchConfig tiny_arch() {
    ArchConfig a;
    a.width0 = 4;
    a.width1 = 8;
    a.temb_dim = 8;
    a.text_dim = 4;
    return a;
}

}  // namespace

TEST_CASE("masking draw invariants") {
    Rng rng(1);
    for (int trial = 0; trial < 500; ++trial) {
        MaskingDraw d = sample_condition_indices(8, rng);
        CHECK(d.Nc >= 1);
        CHECK(d.Nc <= 8);
        REQUIRE(d.indices.size() == static_cast<size_t>(d.Nc));
        for (size_t i = 0; i < d.indices.size(); ++i) {
            CHECK(d.indices[i] >= 0);
            CHECK(d.indices[i] < 8);
            if (i > 0) CHECK(d.indices[i] > d.indices[i - 1]);  // sorted, distinct
        }
    }
    CHECK_THROWS_AS(sample_condition_indices(0, rng), ArgumentError);
}

TEST_CASE("N_c is uniform over {1..N} (chi-square, alpha = 0.01)") {
    const int N = 8;
    const int draws = 100000;
    Rng rng(20240817);
    std::vector<int> counts(N + 1, 0);
    for (int i = 0; i < draws; ++i) ++counts[sample_condition_indices(N, rng).Nc];
    const double expected = static_cast<double>(draws) / N;
    double chi2 = 0.0;
    for (int k = 1; k <= N; ++k) {
        const double d = counts[k] - expected;
        chi2 += d * d / expected;
    }
    // Critical value for df = 7 at significance 0.01.
    CHECK(chi2 < 18.475307);
}

TEST_CASE("index subsets are uniform for fixed N_c (chi-square over pairs)") {
    // Condition on Nc == 2 at N = 8: 28 equally likely pairs, df = 27.
    const int N = 8;
    Rng rng(77);
    std::map<std::pair<int, int>, int> counts;
    int kept = 0;
    while (kept < 56000) {
        MaskingDraw d = sample_condition_indices(N, rng);
        if (d.Nc != 2) continue;
        ++counts[{d.indices[0], d.indices[1]}];
        ++kept;
    }
    const double expected = kept / 28.0;
    double chi2 = 0.0;
    int cells = 0;
    for (int a = 0; a < N; ++a)
        for (int b = a + 1; b < N; ++b) {
            const double d = counts[{a, b}] - expected;
            chi2 += d * d / expected;
            ++cells;
        }
    REQUIRE(cells == 28);
    // Critical value for df = 27 at significance 0.01.
    CHECK(chi2 < 46.962942);
}

TEST_CASE("training bundle marks exactly the drawn keyframes") {
    auto data = generate_dataset(5, 1, 6, 8, 8);
    MaskingDraw d{6, 2, {1, 4}};
    ConditionBundle b = make_training_bundle(data[0], Modality::kDepth, d);
    CHECK(b.keyframes == std::vector<int>{1, 4});
    CHECK_NOTHROW(b.validate());
    const size_t plane = 64;
    auto expect = extract_condition(data[0].video, 4, Modality::kDepth);
    for (size_t i = 0; i < 3 * plane; ++i)
        CHECK(b.conditions.data()[4 * 3 * plane + i] == expect[i]);
}

TEST_CASE("adam reduces a simple quadratic") {
    Tensor w = Tensor::from({4}, {2.0, -3.0, 1.5, 0.5}, /*requires_grad=*/true);
    AdamOptimizer opt({w}, 0.05);
    double first = 0.0, last = 0.0;
    for (int i = 0; i < 200; ++i) {
        Tensor loss = sum_all(mul(w, w));
        loss.backward();
        if (i == 0) first = loss.scalar();
        last = loss.scalar();
        opt.step();
        opt.zero_grad();
    }
    CHECK(last < 0.01 * first);
}

TEST_CASE("backbone training step decreases loss on a tiny run and is deterministic") {
    auto data = generate_dataset(9, 2, 4, 8, 8);
    TrainConfig tc;
    tc.steps = 30;
    tc.lr = 3e-4;
    tc.T = 50;
    tc.seed = 4;

    Backbone n1(tiny_arch(), 11);
    auto log1 = pretrain_backbone(n1, data, tc);
    Backbone n2(tiny_arch(), 11);
    auto log2 = pretrain_backbone(n2, data, tc);

    REQUIRE(log1.size() == 30);
    for (size_t i = 0; i < log1.size(); ++i) CHECK(log1[i].loss == log2[i].loss);
    CHECK(params_digest(n1.params()) == params_digest(n2.params()));
    // Zero-init output => first loss is the expected noise power, ~1.
    CHECK(log1[0].loss == doctest::Approx(1.0).epsilon(0.35));
    CHECK_THROWS_AS(pretrain_backbone(n1, {}, tc), ConfigError);
}

TEST_CASE("encoder training leaves the frozen backbone bitwise unchanged") {
    auto data = generate_dataset(13, 2, 4, 8, 8);
    Backbone backbone(tiny_arch(), 12);
    TrainConfig tc;
    tc.steps = 10;
    tc.T = 50;
    tc.seed = 5;
    tc.digest_check_interval = 4;
    auto blog = pretrain_backbone(backbone, data, tc);
    const std::string digest0 = params_digest(backbone.params());

    SparseEncoder enc(tiny_arch(), EncoderVariant::kFull, Modality::kDepth, 13);
    auto elog = train_encoder(enc, backbone, data, tc);
    REQUIRE(elog.size() == 10);
    CHECK(params_digest(backbone.params()) == digest0);
    // Backbone is usable (requires_grad restored) afterwards.
    for (const auto& [name, t] : backbone.params().all()) CHECK(t.requires_grad());
    // The encoder did move.
    SparseEncoder fresh(tiny_arch(), EncoderVariant::kFull, Modality::kDepth, 13);
    CHECK(params_digest(enc.params()) != params_digest(fresh.params()));
}

TEST_CASE("parameter digest is sensitive to single-element changes") {
    Backbone backbone(tiny_arch(), 14);
    const std::string digest0 = params_digest(backbone.params());
    Tensor alias = backbone.params().all()[0].second;
    const double keep = alias.data()[0];
    alias.data()[0] = keep + 1e-12;
    CHECK(params_digest(backbone.params()) != digest0);
    alias.data()[0] = keep;
    CHECK(params_digest(backbone.params()) == digest0);
}
