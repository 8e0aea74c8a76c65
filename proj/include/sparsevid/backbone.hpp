#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sparsevid/nn.hpp"
#include "sparsevid/tensor.hpp"

namespace sparsevid {

// Shared architecture configuration. Weight shapes are a pure function of
// these values; frame count and spatial size are runtime inputs.
struct ArchConfig {
    int channels = 3;       // video channels
    int cond_channels = 3;  // condition-map channels (the mask adds one more)
    int width0 = 32;        // channel width at full resolution
    int width1 = 64;        // channel width after the downsample
    int temb_dim = 64;
    int text_dim = 32;

    bool operator==(const ArchConfig&) const = default;

    std::vector<std::pair<std::string, std::string>> to_kv() const;
    static ArchConfig from_kv(const std::vector<std::pair<std::string, std::string>>& kv);
};

// Per-resolution feature residuals added into the backbone decoder.
// Site order: [0] full-res skip, [1] half-res skip, [2] middle block.
struct ResidualStack {
    std::vector<Tensor> sites;
};

// Toy text-conditioned video diffusion UNet: two resolution levels of
// spatial blocks interleaved with temporal attention, text cross-attention
// in the middle, epsilon prediction output.
class Backbone {
public:
    Backbone(const ArchConfig& cfg, uint64_t seed);

    const ArchConfig& config() const { return cfg_; }
    ParamStore& params() { return params_; }
    const ParamStore& params() const { return params_; }

    // Deterministic token-sequence embedding (empty -> null embedding).
    Tensor embed_text(const std::vector<int>& tokens) const;

    // Injection-site shapes for a given input geometry.
    std::vector<std::vector<int>> site_shapes(int frames, int height, int width) const;

    // z_t [N,C,H,W]; residuals nullptr or one tensor per injection site.
    Tensor forward(const Tensor& z_t, int t, const Tensor& text,
                   const ResidualStack* residuals = nullptr) const;

private:
    ArchConfig cfg_;
    ParamStore params_;
    Tensor text_embed_;  // [V, text_dim]
    TimestepEmbed temb_;
    Tensor conv_in_w_, conv_in_b_;
    ResBlock down0_;
    TemporalAttnBlock down0_attn_;
    Tensor downsample_w_, downsample_b_;
    ResBlock down1_;
    TemporalAttnBlock down1_attn_;
    ResBlock mid1_;
    CrossAttnBlock mid_cross_;
    TemporalAttnBlock mid_attn_;
    ResBlock mid2_;
    ResBlock up1_;
    TemporalAttnBlock up1_attn_;
    Tensor upconv_w_, upconv_b_;
    ResBlock up0_;
    TemporalAttnBlock up0_attn_;
    Tensor conv_out_w_, conv_out_b_;
};

}  // namespace sparsevid
