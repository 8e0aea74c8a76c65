#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "sparsevid/backbone.hpp"
#include "sparsevid/nn.hpp"
#include "sparsevid/tensor.hpp"

namespace sparsevid {

enum class Modality { kSketch, kDepth, kRgb };

std::string modality_name(Modality m);
Modality modality_from_name(const std::string& name);

// Per-frame condition maps plus a binary mask marking conditioned frames.
// conditions[i] is all-zero for i outside keyframes; mask[i] is all-ones
// iff i is a keyframe. keyframes may be empty (unconditional sampling).
struct ConditionBundle {
    Tensor conditions;           // [N, C_cond, H, W]
    Tensor mask;                 // [N, 1, H, W]
    std::vector<int> keyframes;  // sorted, distinct
    Modality modality = Modality::kDepth;

    int frames() const { return conditions.shape()[0]; }

    // Throws ArgumentError when any invariant is violated.
    void validate() const;

    // Empty bundle with no conditioned frame.
    static ConditionBundle empty(int frames, int cond_channels, int height, int width,
                                 Modality modality);
    // Bundle carrying per-keyframe maps (maps[i] is [C_cond,H,W] for keyframes[i]).
    static ConditionBundle from_keyframes(int frames, int cond_channels, int height,
                                          int width, Modality modality,
                                          const std::vector<int>& keyframes,
                                          const std::vector<std::vector<double>>& maps);
};

// Channel-wise concatenation [c_s; m] -> [N, C_cond+1, H, W].
Tensor build_encoder_input(const ConditionBundle& bundle);

enum class EncoderVariant { kFrameWise, kTemporalWithNoise, kFull };

std::string variant_name(EncoderVariant v);
EncoderVariant variant_from_name(const std::string& name);

// Add-on condition encoder: a copy of the backbone's encoder half with the
// input layer widened to C_cond+1 channels, optional temporal attention,
// and one zero-initialized projection per injection site.
class SparseEncoder {
public:
    SparseEncoder(const ArchConfig& cfg, EncoderVariant variant, Modality modality,
                  uint64_t seed);

    const ArchConfig& config() const { return cfg_; }
    EncoderVariant variant() const { return variant_; }
    Modality modality() const { return modality_; }
    bool has_temporal_layers() const { return variant_ != EncoderVariant::kFrameWise; }
    bool consumes_noised_sample() const { return variant_ != EncoderVariant::kFull; }
    ParamStore& params() { return params_; }
    const ParamStore& params() const { return params_; }

    Tensor embed_text(const std::vector<int>& tokens) const;

    // input: build_encoder_input output. z_t required unless FULL (then it
    // must be absent). Residuals match Backbone::site_shapes.
    ResidualStack forward(const Tensor& input, const Tensor* z_t, int t,
                          const Tensor& text) const;

    // Convenience: bundle -> residuals.
    ResidualStack forward_bundle(const ConditionBundle& bundle, const Tensor* z_t, int t,
                                 const std::vector<int>& tokens) const;

private:
    ArchConfig cfg_;
    EncoderVariant variant_;
    Modality modality_;
    ParamStore params_;
    Tensor text_embed_;
    TimestepEmbed temb_;
    Tensor conv_in_c_w_, conv_in_c_b_;
    Tensor conv_in_z_w_, conv_in_z_b_;  // absent for FULL
    ResBlock lvl0_;
    TemporalAttnBlock lvl0_attn_;
    Tensor zero0_w_, zero0_b_;
    Tensor down_w_, down_b_;
    ResBlock lvl1_;
    TemporalAttnBlock lvl1_attn_;
    Tensor zero1_w_, zero1_b_;
    ResBlock mid_;
    CrossAttnBlock mid_cross_;
    TemporalAttnBlock mid_attn_;
    Tensor zero2_w_, zero2_b_;
};

// Per-frame influence of perturbing the single keyframe condition of the
// probe bundle: influence[i] is true iff any residual element at frame i
// moves by more than 1e-9.
std::vector<bool> propagation_reach(const SparseEncoder& encoder,
                                    const ConditionBundle& probe);

}  // namespace sparsevid
