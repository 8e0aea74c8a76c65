#include "sparsevid/sparse_encoder.hpp"

#include <algorithm>
#include <cmath>

#include "sparsevid/errors.hpp"
#include "sparsevid/vocab.hpp"

namespace sparsevid {

std::string modality_name(Modality m) {
    switch (m) {
        case Modality::kSketch: return "sketch";
        case Modality::kDepth: return "depth";
        case Modality::kRgb: return "rgb";
    }
    throw ArgumentError("modality_name: bad enum");
}

Modality modality_from_name(const std::string& name) {
    if (name == "sketch") return Modality::kSketch;
    if (name == "depth") return Modality::kDepth;
    if (name == "rgb") return Modality::kRgb;
    throw ConfigError("unknown modality '" + name + "'");
}

std::string variant_name(EncoderVariant v) {
    switch (v) {
        case EncoderVariant::kFrameWise: return "frame_wise";
        case EncoderVariant::kTemporalWithNoise: return "temporal_noise";
        case EncoderVariant::kFull: return "full";
    }
    throw ArgumentError("variant_name: bad enum");
}

EncoderVariant variant_from_name(const std::string& name) {
    if (name == "frame_wise") return EncoderVariant::kFrameWise;
    if (name == "temporal_noise") return EncoderVariant::kTemporalWithNoise;
    if (name == "full") return EncoderVariant::kFull;
    throw ConfigError("unknown encoder variant '" + name + "'");
}

void ConditionBundle::validate() const {
    if (conditions.shape().size() != 4 || mask.shape().size() != 4)
        throw ArgumentError("ConditionBundle: tensors must be rank 4");
    const int N = conditions.shape()[0], H = conditions.shape()[2], W = conditions.shape()[3];
    if (mask.shape() != std::vector<int>{N, 1, H, W})
        throw ArgumentError("ConditionBundle: mask must be [N,1,H,W]");
    if (!std::is_sorted(keyframes.begin(), keyframes.end()) ||
        std::adjacent_find(keyframes.begin(), keyframes.end()) != keyframes.end())
        throw ArgumentError("ConditionBundle: keyframes must be sorted and distinct");
    if (static_cast<int>(keyframes.size()) > N)
        throw ArgumentError("ConditionBundle: more keyframes than frames");
    std::vector<bool> is_key(N, false);
    for (int k : keyframes) {
        if (k < 0 || k >= N) throw ArgumentError("ConditionBundle: keyframe index out of range");
        is_key[k] = true;
    }
    const size_t plane = static_cast<size_t>(H) * W;
    const int C = conditions.shape()[1];
    for (int f = 0; f < N; ++f) {
        const double want = is_key[f] ? 1.0 : 0.0;
        const double* m = mask.data() + static_cast<size_t>(f) * plane;
        for (size_t i = 0; i < plane; ++i)
            if (m[i] != want) throw ArgumentError("ConditionBundle: mask/keyframe mismatch");
        if (!is_key[f]) {
            const double* c = conditions.data() + static_cast<size_t>(f) * C * plane;
            for (size_t i = 0; i < static_cast<size_t>(C) * plane; ++i)
                if (c[i] != 0.0)
                    throw ArgumentError("ConditionBundle: nonzero condition at unconditioned frame");
        }
    }
}

ConditionBundle ConditionBundle::empty(int frames, int cond_channels, int height, int width,
                                       Modality modality) {
    if (frames < 1) throw ArgumentError("ConditionBundle: frames must be >= 1");
    ConditionBundle b;
    b.conditions = Tensor::zeros({frames, cond_channels, height, width});
    b.mask = Tensor::zeros({frames, 1, height, width});
    b.modality = modality;
    return b;
}

ConditionBundle ConditionBundle::from_keyframes(int frames, int cond_channels, int height,
                                                int width, Modality modality,
                                                const std::vector<int>& keyframes,
                                                const std::vector<std::vector<double>>& maps) {
    if (keyframes.size() != maps.size())
        throw ArgumentError("ConditionBundle: keyframes/maps length mismatch");
    ConditionBundle b = empty(frames, cond_channels, height, width, modality);
    b.keyframes = keyframes;
    std::sort(b.keyframes.begin(), b.keyframes.end());
    const size_t plane = static_cast<size_t>(height) * width;
    const size_t frame_sz = static_cast<size_t>(cond_channels) * plane;
    for (size_t i = 0; i < keyframes.size(); ++i) {
        const int k = keyframes[i];
        if (k < 0 || k >= frames) throw ArgumentError("ConditionBundle: keyframe out of range");
        if (maps[i].size() != frame_sz)
            throw ArgumentError("ConditionBundle: condition map size mismatch");
        std::copy(maps[i].begin(), maps[i].end(),
                  b.conditions.data() + static_cast<size_t>(k) * frame_sz);
        std::fill_n(b.mask.data() + static_cast<size_t>(k) * plane, plane, 1.0);
    }
    b.validate();
    return b;
}

Tensor build_encoder_input(const ConditionBundle& bundle) {
    bundle.validate();
    return concat_channels(bundle.conditions, bundle.mask);
}

SparseEncoder::SparseEncoder(const ArchConfig& cfg, EncoderVariant variant, Modality modality,
                             uint64_t seed)
    : cfg_(cfg), variant_(variant), modality_(modality) {
    Rng rng(seed);
    const int w0 = cfg.width0, w1 = cfg.width1;
    const bool temporal = has_temporal_layers();

    text_embed_ = params_.add("text.embed", {vocab_size(), cfg.text_dim});
    fill_normal(text_embed_, rng, 1.0);
    temb_.init(params_, "temb", cfg.temb_dim, rng);

    conv_in_c_w_ = params_.add("conv_in_c.w", {w0, cfg.cond_channels + 1, 3, 3});
    conv_in_c_b_ = params_.add("conv_in_c.b", {w0});
    init_conv3x3(conv_in_c_w_, conv_in_c_b_, rng);
    if (consumes_noised_sample()) {
        conv_in_z_w_ = params_.add("conv_in_z.w", {w0, cfg.channels, 3, 3});
        conv_in_z_b_ = params_.add("conv_in_z.b", {w0});
        init_conv3x3(conv_in_z_w_, conv_in_z_b_, rng);
    }

    lvl0_.init(params_, "lvl0.res", w0, w0, cfg.temb_dim, rng);
    if (temporal) lvl0_attn_.init(params_, "lvl0.tattn", w0, rng);
    zero0_w_ = params_.add("zero0.w", {w0, w0});
    zero0_b_ = params_.add("zero0.b", {w0});

    down_w_ = params_.add("down.w", {w1, w0, 3, 3});
    down_b_ = params_.add("down.b", {w1});
    init_conv3x3(down_w_, down_b_, rng);
    lvl1_.init(params_, "lvl1.res", w1, w1, cfg.temb_dim, rng);
    if (temporal) lvl1_attn_.init(params_, "lvl1.tattn", w1, rng);
    zero1_w_ = params_.add("zero1.w", {w1, w1});
    zero1_b_ = params_.add("zero1.b", {w1});

    mid_.init(params_, "mid.res", w1, w1, cfg.temb_dim, rng);
    mid_cross_.init(params_, "mid.cross", w1, cfg.text_dim, rng);
    if (temporal) mid_attn_.init(params_, "mid.tattn", w1, rng);
    zero2_w_ = params_.add("zero2.w", {w1, w1});
    zero2_b_ = params_.add("zero2.b", {w1});
    // zero0/zero1/zero2 stay exactly zero at construction (ParamStore zeros).
}

Tensor SparseEncoder::embed_text(const std::vector<int>& tokens) const {
    if (tokens.empty()) return embed_rows(text_embed_, {kNullToken});
    return embed_rows(text_embed_, tokens);
}

ResidualStack SparseEncoder::forward(const Tensor& input, const Tensor* z_t, int t,
                                     const Tensor& text) const {
    if (input.shape().size() != 4 || input.shape()[1] != cfg_.cond_channels + 1)
        throw ArgumentError("SparseEncoder::forward: input must be [N,C_cond+1,H,W]");
    if (consumes_noised_sample()) {
        if (!z_t) throw ArgumentError("SparseEncoder::forward: this variant requires z_t");
        const auto& zs = z_t->shape();
        if (zs.size() != 4 || zs[0] != input.shape()[0] || zs[1] != cfg_.channels ||
            zs[2] != input.shape()[2] || zs[3] != input.shape()[3])
            throw ArgumentError("SparseEncoder::forward: z_t shape mismatch");
    } else if (z_t) {
        throw ArgumentError("SparseEncoder::forward: FULL variant takes no z_t");
    }

    Tensor temb = temb_.forward(t);
    Tensor h = conv3x3(input, conv_in_c_w_, conv_in_c_b_);
    if (consumes_noised_sample())
        h = add(h, conv3x3(*z_t, conv_in_z_w_, conv_in_z_b_));

    ResidualStack out;
    h = lvl0_.forward(h, temb);
    if (has_temporal_layers()) h = lvl0_attn_.forward(h);
    out.sites.push_back(conv1x1(h, zero0_w_, zero0_b_));

    h = conv3x3(h, down_w_, down_b_, /*stride=*/2);
    h = lvl1_.forward(h, temb);
    if (has_temporal_layers()) h = lvl1_attn_.forward(h);
    out.sites.push_back(conv1x1(h, zero1_w_, zero1_b_));

    h = mid_.forward(h, temb);
    h = mid_cross_.forward(h, text);
    if (has_temporal_layers()) h = mid_attn_.forward(h);
    out.sites.push_back(conv1x1(h, zero2_w_, zero2_b_));
    return out;
}

ResidualStack SparseEncoder::forward_bundle(const ConditionBundle& bundle, const Tensor* z_t,
                                            int t, const std::vector<int>& tokens) const {
    return forward(build_encoder_input(bundle), z_t, t, embed_text(tokens));
}

std::vector<bool> propagation_reach(const SparseEncoder& encoder,
                                    const ConditionBundle& probe) {
    probe.validate();
    if (probe.keyframes.size() != 1)
        throw ArgumentError("propagation_reach: probe bundle must have exactly one keyframe");
    const int N = probe.frames();
    const int H = probe.conditions.shape()[2], W = probe.conditions.shape()[3];
    const int C = probe.conditions.shape()[1];
    const int t = 1;

    Tensor z = Tensor::zeros({N, encoder.config().channels, H, W});
    const Tensor* zp = encoder.consumes_noised_sample() ? &z : nullptr;

    ConditionBundle perturbed = probe;
    perturbed.conditions = Tensor::from(probe.conditions.shape(), probe.conditions.values());
    const size_t frame_sz = static_cast<size_t>(C) * H * W;
    double* pc = perturbed.conditions.data() + static_cast<size_t>(probe.keyframes[0]) * frame_sz;
    for (size_t i = 0; i < frame_sz; ++i) pc[i] += 0.1;

    ResidualStack base = encoder.forward_bundle(probe, zp, t, {});
    ResidualStack pert = encoder.forward_bundle(perturbed, zp, t, {});

    std::vector<bool> influence(N, false);
    for (size_t s = 0; s < base.sites.size(); ++s) {
        const auto& sh = base.sites[s].shape();
        const size_t per_frame = base.sites[s].size() / sh[0];
        for (int f = 0; f < N; ++f) {
            const double* a = base.sites[s].data() + static_cast<size_t>(f) * per_frame;
            const double* b = pert.sites[s].data() + static_cast<size_t>(f) * per_frame;
            for (size_t i = 0; i < per_frame; ++i)
                if (std::abs(a[i] - b[i]) > 1e-9) {
                    influence[f] = true;
                    break;
                }
        }
    }
    return influence;
}

}  // namespace sparsevid
