#include "doctest.h"

#include <cmath>

#include "sparsevid/backbone.hpp"
#include "sparsevid/dataset.hpp"
#include "sparsevid/errors.hpp"
#include "sparsevid/rng.hpp"
#include "sparsevid/sparse_encoder.hpp"

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

ConditionBundle random_bundle(int N, int H, int W, const std::vector<int>& keyframes,
                              uint64_t seed) {
    Rng rng(seed);
    std::vector<std::vector<double>> maps;
    for (size_t i = 0; i < keyframes.size(); ++i) {
        std::vector<double> m(static_cast<size_t>(3) * H * W);
        for (double& v : m) v = rng.uniform();
        maps.push_back(std::move(m));
    }
    return ConditionBundle::from_keyframes(N, 3, H, W, Modality::kDepth, keyframes, maps);
}

void randomize(SparseEncoder& enc, uint64_t seed) {
    Rng rng(seed);
    for (auto& [name, t] : enc.params().all())
        fill_normal(t, rng, 0.2);
}

}  // namespace

TEST_CASE("bundle invariants and mask channel") {
    ConditionBundle b = random_bundle(6, 8, 8, {1, 4}, 3);
    CHECK_NOTHROW(b.validate());
    const size_t plane = 64;
    for (int f = 0; f < 6; ++f) {
        const bool key = (f == 1 || f == 4);
        for (size_t p = 0; p < plane; ++p)
            CHECK(b.mask.data()[static_cast<size_t>(f) * plane + p] == (key ? 1.0 : 0.0));
        if (!key)
            for (size_t p = 0; p < 3 * plane; ++p)
                CHECK(b.conditions.data()[static_cast<size_t>(f) * 3 * plane + p] == 0.0);
    }
    Tensor input = build_encoder_input(b);
    CHECK(input.shape() == std::vector<int>{6, 4, 8, 8});

    CHECK_THROWS_AS(
        ConditionBundle::from_keyframes(4, 3, 8, 8, Modality::kDepth, {5}, {{}}),
        ArgumentError);
}

TEST_CASE("all variants start transparent: zero residuals everywhere") {
    Backbone net(tiny_arch(), 1);
    for (auto variant : {EncoderVariant::kFrameWise, EncoderVariant::kTemporalWithNoise,
                         EncoderVariant::kFull}) {
        SparseEncoder enc(tiny_arch(), variant, Modality::kDepth, 2);
        ConditionBundle b = random_bundle(4, 8, 8, {0, 2}, 4);
        Tensor z = Tensor::zeros({4, 3, 8, 8});
        Rng rng(5);
        for (double& v : z.values()) v = rng.normal();
        const Tensor* zp = enc.consumes_noised_sample() ? &z : nullptr;
        ResidualStack r = enc.forward_bundle(b, zp, 7, {});
        REQUIRE(r.sites.size() == 3);
        for (size_t s = 0; s < 3; ++s) {
            CHECK(r.sites[s].shape() == net.site_shapes(4, 8, 8)[s]);
            for (double v : r.sites[s].values()) CHECK(v == 0.0);
        }
    }
}

TEST_CASE("full variant is independent of the noised sample by construction") {
    SparseEncoder enc(tiny_arch(), EncoderVariant::kFull, Modality::kDepth, 3);
    CHECK(!enc.consumes_noised_sample());
    for (const auto& [name, t] : enc.params().all())
        CHECK(name.find("conv_in_z") == std::string::npos);

    randomize(enc, 17);
    ConditionBundle b = random_bundle(4, 8, 8, {1}, 6);
    // z_t must not be passed to FULL.
    Tensor z = Tensor::zeros({4, 3, 8, 8});
    CHECK_THROWS_AS(enc.forward_bundle(b, &z, 5, {}), ArgumentError);
    ResidualStack r1 = enc.forward_bundle(b, nullptr, 5, {});
    ResidualStack r2 = enc.forward_bundle(b, nullptr, 5, {});
    for (size_t s = 0; s < 3; ++s) CHECK(r1.sites[s].values() == r2.sites[s].values());
}

TEST_CASE("variants that keep the noised sample require it") {
    SparseEncoder enc(tiny_arch(), EncoderVariant::kFrameWise, Modality::kDepth, 4);
    CHECK(enc.consumes_noised_sample());
    ConditionBundle b = random_bundle(4, 8, 8, {1}, 7);
    CHECK_THROWS_AS(enc.forward_bundle(b, nullptr, 5, {}), ArgumentError);
}

TEST_CASE("frame_wise influence is local; temporal variants propagate") {
    const int N = 5;
    ConditionBundle probe = random_bundle(N, 8, 8, {2}, 8);

    SparseEncoder fw(tiny_arch(), EncoderVariant::kFrameWise, Modality::kDepth, 5);
    randomize(fw, 21);
    auto reach_fw = propagation_reach(fw, probe);
    REQUIRE(reach_fw.size() == static_cast<size_t>(N));
    for (int f = 0; f < N; ++f) CHECK(reach_fw[f] == (f == 2));

    SparseEncoder full(tiny_arch(), EncoderVariant::kFull, Modality::kDepth, 6);
    randomize(full, 22);
    auto reach_full = propagation_reach(full, probe);
    for (int f = 0; f < N; ++f) CHECK(reach_full[f]);

    SparseEncoder tn(tiny_arch(), EncoderVariant::kTemporalWithNoise, Modality::kDepth, 7);
    randomize(tn, 23);
    auto reach_tn = propagation_reach(tn, probe);
    for (int f = 0; f < N; ++f) CHECK(reach_tn[f]);
}

TEST_CASE("variant names round-trip") {
    for (auto v : {EncoderVariant::kFrameWise, EncoderVariant::kTemporalWithNoise,
                   EncoderVariant::kFull})
        CHECK(variant_from_name(variant_name(v)) == v);
    CHECK_THROWS_AS(variant_from_name("bogus"), ConfigError);
    for (auto m : {Modality::kSketch, Modality::kDepth, Modality::kRgb})
        CHECK(modality_from_name(modality_name(m)) == m);
    CHECK_THROWS_AS(modality_from_name("bogus"), ConfigError);
}

TEST_CASE("empty bundle is accepted and stays transparent at init") {
    SparseEncoder enc(tiny_arch(), EncoderVariant::kFull, Modality::kSketch, 8);
    ConditionBundle b = ConditionBundle::empty(4, 3, 8, 8, Modality::kSketch);
    ResidualStack r = enc.forward_bundle(b, nullptr, 0, {});
    for (const auto& s : r.sites)
        for (double v : s.values()) CHECK(v == 0.0);
}
