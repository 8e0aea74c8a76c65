#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sparsevid/backbone.hpp"
#include "sparsevid/dataset.hpp"
#include "sparsevid/sparse_encoder.hpp"

namespace sparsevid {

// Keep k = (1 - r_mask)*N condition frames at a uniform stride from frame 0.
// Throws ArgumentError when k is not a positive integer.
std::vector<int> evenly_spaced_keyframes(int N, double r_mask);

// Least-squares affine fit: argmin_{s,b} sum (s*pred + b - gt)^2.
// Throws ArgumentError for < 2 elements or constant pred.
std::pair<double, double> scale_shift_align(const std::vector<double>& pred,
                                            const std::vector<double>& gt);

// Deterministic luminance/palette depth proxy for generated pixels: each
// pixel snaps to the nearest palette color (scene objects + background) and
// takes that entry's depth. out_of_palette counts pixels farther than the
// snap threshold from every entry.
struct DepthProxyResult {
    std::vector<double> depth;  // [H*W]
    double out_of_palette_fraction = 0.0;
};
DepthProxyResult depth_from_pixels(const Tensor& video, int frame, const SceneSpec& palette);

// Mean absolute depth error over keyframes after per-frame scale-shift
// realignment of the proxy, scaled x100. gt_depth is [N,1,H,W].
double keyframe_depth_mae(const Tensor& generated, const Tensor& gt_depth,
                          const std::vector<int>& keyframes, const SceneSpec& palette,
                          double* out_of_palette = nullptr);

// Same metric with caller-supplied per-keyframe proxy maps (tests, affine
// invariance checks).
double keyframe_depth_mae_from_proxy(const std::vector<std::vector<double>>& proxies,
                                     const Tensor& gt_depth,
                                     const std::vector<int>& keyframes);

// Mean cosine similarity of consecutive frames under a fixed seeded random
// projection to feat_dim, mean-centered per feature vector; x100.
double cross_frame_consistency(const Tensor& video, uint64_t extractor_seed, int feat_dim);

// Mean absolute pixel difference on the [-1,1] range.
double first_frame_fidelity(const Tensor& generated_frame, const Tensor& reference_frame);

struct EvalConfig {
    std::vector<double> r_masks = {0.0, 0.5, 0.75, 0.875};
    Modality modality = Modality::kDepth;
    int steps = 20;
    double guidance = 3.0;
    int feat_dim = 64;
    uint64_t extractor_seed = 17;
    uint64_t sample_seed = 1000;
    int T = 1000;
    std::string schedule_kind = "linear-vp";
    bool stochastic = false;  // ancestral (eta = 1) sampling instead of deterministic
    int max_videos = 0;       // 0 = use the whole eval set
};

struct SweepCell {
    std::string variant;
    double r_mask = 0.0;
    double mae = 0.0;          // x100
    double consistency = 0.0;  // x100
    double out_of_palette = 0.0;
    int count = 0;
};

struct MetricsReport {
    std::vector<SweepCell> cells;
    std::string config_digest;
};

// Table-1-style sweep: for each (variant, r_mask), condition with evenly
// spaced keyframes, sample, and score MAE at the conditioned keyframes plus
// cross-frame consistency.
MetricsReport run_sparsity_sweep(
    const Backbone& backbone,
    const std::vector<std::pair<std::string, const SparseEncoder*>>& encoders,
    const std::vector<DatasetRecord>& eval_set, const EvalConfig& cfg);

void write_report_text(const std::string& path, const MetricsReport& report);
void write_report_json(const std::string& path, const MetricsReport& report);

}  // namespace sparsevid
