#include "sparsevid/backbone.hpp"

#include "sparsevid/errors.hpp"
#include "sparsevid/vocab.hpp"

namespace sparsevid {

std::vector<std::pair<std::string, std::string>> ArchConfig::to_kv() const {
    return {
        {"channels", std::to_string(channels)},
        {"cond_channels", std::to_string(cond_channels)},
        {"width0", std::to_string(width0)},
        {"width1", std::to_string(width1)},
        {"temb_dim", std::to_string(temb_dim)},
        {"text_dim", std::to_string(text_dim)},
    };
}

ArchConfig ArchConfig::from_kv(const std::vector<std::pair<std::string, std::string>>& kv) {
    ArchConfig c;
    for (const auto& [k, v] : kv) {
        if (k == "channels") c.channels = std::stoi(v);
        else if (k == "cond_channels") c.cond_channels = std::stoi(v);
        else if (k == "width0") c.width0 = std::stoi(v);
        else if (k == "width1") c.width1 = std::stoi(v);
        else if (k == "temb_dim") c.temb_dim = std::stoi(v);
        else if (k == "text_dim") c.text_dim = std::stoi(v);
        else throw FormatError("ArchConfig: unknown key '" + k + "'");
    }
    return c;
}

Backbone::Backbone(const ArchConfig& cfg, uint64_t seed) : cfg_(cfg) {
    Rng rng(seed);
    const int w0 = cfg.width0, w1 = cfg.width1;

    text_embed_ = params_.add("text.embed", {vocab_size(), cfg.text_dim});
    fill_normal(text_embed_, rng, 1.0);
    temb_.init(params_, "temb", cfg.temb_dim, rng);

    conv_in_w_ = params_.add("conv_in.w", {w0, cfg.channels, 3, 3});
    conv_in_b_ = params_.add("conv_in.b", {w0});
    init_conv3x3(conv_in_w_, conv_in_b_, rng);

    down0_.init(params_, "down0.res", w0, w0, cfg.temb_dim, rng);
    down0_attn_.init(params_, "down0.tattn", w0, rng);
    downsample_w_ = params_.add("downsample.w", {w1, w0, 3, 3});
    downsample_b_ = params_.add("downsample.b", {w1});
    init_conv3x3(downsample_w_, downsample_b_, rng);
    down1_.init(params_, "down1.res", w1, w1, cfg.temb_dim, rng);
    down1_attn_.init(params_, "down1.tattn", w1, rng);

    mid1_.init(params_, "mid.res1", w1, w1, cfg.temb_dim, rng);
    mid_cross_.init(params_, "mid.cross", w1, cfg.text_dim, rng);
    mid_attn_.init(params_, "mid.tattn", w1, rng);
    mid2_.init(params_, "mid.res2", w1, w1, cfg.temb_dim, rng);

    up1_.init(params_, "up1.res", 2 * w1, w1, cfg.temb_dim, rng);
    up1_attn_.init(params_, "up1.tattn", w1, rng);
    upconv_w_ = params_.add("upconv.w", {w0, w1, 3, 3});
    upconv_b_ = params_.add("upconv.b", {w0});
    init_conv3x3(upconv_w_, upconv_b_, rng);
    up0_.init(params_, "up0.res", 2 * w0, w0, cfg.temb_dim, rng);
    up0_attn_.init(params_, "up0.tattn", w0, rng);

    // Zero-initialized output head: the untrained model predicts eps = 0.
    conv_out_w_ = params_.add("conv_out.w", {cfg.channels, w0, 3, 3});
    conv_out_b_ = params_.add("conv_out.b", {cfg.channels});
}

Tensor Backbone::embed_text(const std::vector<int>& tokens) const {
    if (tokens.empty()) return embed_rows(text_embed_, {kNullToken});
    return embed_rows(text_embed_, tokens);
}

std::vector<std::vector<int>> Backbone::site_shapes(int frames, int height, int width) const {
    return {
        {frames, cfg_.width0, height, width},
        {frames, cfg_.width1, height / 2, width / 2},
        {frames, cfg_.width1, height / 2, width / 2},
    };
}

Tensor Backbone::forward(const Tensor& z_t, int t, const Tensor& text,
                         const ResidualStack* residuals) const {
    if (z_t.shape().size() != 4 || z_t.shape()[1] != cfg_.channels)
        throw ArgumentError("Backbone::forward: z_t must be [N,C,H,W] with configured C");
    const int N = z_t.shape()[0], H = z_t.shape()[2], W = z_t.shape()[3];
    if (H % 2 != 0 || W % 2 != 0)
        throw ArgumentError("Backbone::forward: spatial dims must be even");
    if (residuals) {
        const auto expect = site_shapes(N, H, W);
        if (residuals->sites.size() != expect.size())
            throw ArgumentError("Backbone::forward: residual site count mismatch");
        for (size_t i = 0; i < expect.size(); ++i)
            if (residuals->sites[i].shape() != expect[i])
                throw ArgumentError("Backbone::forward: residual shape mismatch at site " +
                                    std::to_string(i));
    }

    Tensor temb = temb_.forward(t);
    Tensor h = conv3x3(z_t, conv_in_w_, conv_in_b_);

    h = down0_.forward(h, temb);
    h = down0_attn_.forward(h);
    Tensor skip0 = h;
    h = conv3x3(h, downsample_w_, downsample_b_, /*stride=*/2);
    h = down1_.forward(h, temb);
    h = down1_attn_.forward(h);
    Tensor skip1 = h;

    h = mid1_.forward(h, temb);
    h = mid_cross_.forward(h, text);
    h = mid_attn_.forward(h);
    h = mid2_.forward(h, temb);

    if (residuals) {
        skip0 = add(skip0, residuals->sites[0]);
        skip1 = add(skip1, residuals->sites[1]);
        h = add(h, residuals->sites[2]);
    }

    h = up1_.forward(concat_channels(h, skip1), temb);
    h = up1_attn_.forward(h);
    h = conv3x3(upsample2x(h), upconv_w_, upconv_b_);
    h = up0_.forward(concat_channels(h, skip0), temb);
    h = up0_attn_.forward(h);
    return conv3x3(h, conv_out_w_, conv_out_b_);
}

}  // namespace sparsevid
