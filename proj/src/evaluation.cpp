#include "sparsevid/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "sparsevid/checkpoint.hpp"
#include "sparsevid/errors.hpp"
#include "sparsevid/kernels.hpp"
#include "sparsevid/sampling.hpp"

#include "json.hpp"

namespace sparsevid {
namespace {

constexpr double kPaletteSnapSq = 0.0675;  // ~0.15 per-channel RMS in [0,1]

struct PaletteEntry {
    double rgb[3];
    double depth;
};

std::vector<PaletteEntry> scene_palette(const SceneSpec& spec) {
    std::vector<PaletteEntry> entries;
    const double* bg = background_color();
    entries.push_back({{bg[0], bg[1], bg[2]}, spec.background_depth});
    for (const auto& o : spec.objects)
        entries.push_back({{o.color[0], o.color[1], o.color[2]}, o.depth});
    return entries;
}

double aligned_frame_mae(const std::vector<double>& proxy, const double* gt, size_t n) {
    double s = 1.0, b = 0.0;
    try {
        std::vector<double> gtv(gt, gt + n);
        auto [ss, bb] = scale_shift_align(proxy, gtv);
        s = ss;
        b = bb;
    } catch (const ArgumentError&) {
        // Constant proxy: realignment is degenerate; score unaligned.
    }
    double acc = 0.0;
    for (size_t i = 0; i < n; ++i) acc += std::abs(s * proxy[i] + b - gt[i]);
    return acc / static_cast<double>(n);
}

}  // namespace

std::vector<int> evenly_spaced_keyframes(int N, double r_mask) {
    if (N < 1) throw ArgumentError("evenly_spaced_keyframes: N must be >= 1");
    if (r_mask < 0.0 || r_mask >= 1.0)
        throw ArgumentError("evenly_spaced_keyframes: r_mask must be in [0,1)");
    const double kd = (1.0 - r_mask) * N;
    const int k = static_cast<int>(std::lround(kd));
    if (k < 1 || std::abs(kd - k) > 1e-9)
        throw ArgumentError("evenly_spaced_keyframes: (1-r_mask)*N must be a positive integer");
    std::vector<int> idx(k);
    for (int j = 0; j < k; ++j)
        idx[j] = static_cast<int>(std::lround(static_cast<double>(j) * N / k));
    return idx;
}

std::pair<double, double> scale_shift_align(const std::vector<double>& pred,
                                            const std::vector<double>& gt) {
    if (pred.size() != gt.size())
        throw ArgumentError("scale_shift_align: element counts differ");
    const size_t n = pred.size();
    if (n < 2) throw ArgumentError("scale_shift_align: need at least 2 elements");
    double mp = 0.0, mg = 0.0;
    for (size_t i = 0; i < n; ++i) {
        mp += pred[i];
        mg += gt[i];
    }
    mp /= n;
    mg /= n;
    double var = 0.0, cov = 0.0;
    for (size_t i = 0; i < n; ++i) {
        const double dp = pred[i] - mp;
        var += dp * dp;
        cov += dp * (gt[i] - mg);
    }
    if (var <= 1e-12 * n) throw ArgumentError("scale_shift_align: constant prediction");
    const double s = cov / var;
    return {s, mg - s * mp};
}

DepthProxyResult depth_from_pixels(const Tensor& video, int frame, const SceneSpec& palette) {
    if (video.shape().size() != 4 || video.shape()[1] != 3)
        throw ArgumentError("depth_from_pixels: video must be [N,3,H,W]");
    const int N = video.shape()[0], H = video.shape()[2], W = video.shape()[3];
    if (frame < 0 || frame >= N) throw ArgumentError("depth_from_pixels: frame out of range");
    const auto entries = scene_palette(palette);
    const size_t plane = static_cast<size_t>(H) * W;
    const double* rgb = video.data() + static_cast<size_t>(frame) * 3 * plane;

    DepthProxyResult res;
    res.depth.resize(plane);
    size_t oop = 0;
    for (size_t p = 0; p < plane; ++p) {
        const double px[3] = {(rgb[p] + 1.0) / 2.0, (rgb[plane + p] + 1.0) / 2.0,
                              (rgb[2 * plane + p] + 1.0) / 2.0};
        double best = 1e300;
        double depth = palette.background_depth;
        for (const auto& e : entries) {
            double d2 = 0.0;
            for (int c = 0; c < 3; ++c) {
                const double d = px[c] - e.rgb[c];
                d2 += d * d;
            }
            if (d2 < best) {
                best = d2;
                depth = e.depth;
            }
        }
        if (best > kPaletteSnapSq) ++oop;
        res.depth[p] = depth;
    }
    res.out_of_palette_fraction = static_cast<double>(oop) / static_cast<double>(plane);
    return res;
}

double keyframe_depth_mae_from_proxy(const std::vector<std::vector<double>>& proxies,
                                     const Tensor& gt_depth,
                                     const std::vector<int>& keyframes) {
    if (keyframes.empty()) throw ArgumentError("keyframe_depth_mae: empty keyframes");
    if (proxies.size() != keyframes.size())
        throw ArgumentError("keyframe_depth_mae: proxy/keyframe count mismatch");
    const int N = gt_depth.shape()[0];
    const size_t plane = static_cast<size_t>(gt_depth.shape()[2]) * gt_depth.shape()[3];
    double acc = 0.0;
    for (size_t i = 0; i < keyframes.size(); ++i) {
        const int k = keyframes[i];
        if (k < 0 || k >= N) throw ArgumentError("keyframe_depth_mae: keyframe out of range");
        if (proxies[i].size() != plane)
            throw ArgumentError("keyframe_depth_mae: proxy size mismatch");
        acc += aligned_frame_mae(proxies[i], gt_depth.data() + static_cast<size_t>(k) * plane,
                                 plane);
    }
    return 100.0 * acc / static_cast<double>(keyframes.size());
}

double keyframe_depth_mae(const Tensor& generated, const Tensor& gt_depth,
                          const std::vector<int>& keyframes, const SceneSpec& palette,
                          double* out_of_palette) {
    if (keyframes.empty()) throw ArgumentError("keyframe_depth_mae: empty keyframes");
    std::vector<std::vector<double>> proxies;
    proxies.reserve(keyframes.size());
    double oop = 0.0;
    for (int k : keyframes) {
        DepthProxyResult r = depth_from_pixels(generated, k, palette);
        oop += r.out_of_palette_fraction;
        proxies.push_back(std::move(r.depth));
    }
    if (out_of_palette) *out_of_palette = oop / static_cast<double>(keyframes.size());
    return keyframe_depth_mae_from_proxy(proxies, gt_depth, keyframes);
}

double cross_frame_consistency(const Tensor& video, uint64_t extractor_seed, int feat_dim) {
    if (video.shape().size() != 4) throw ArgumentError("cross_frame_consistency: rank-4 input");
    const int N = video.shape()[0];
    if (N < 2) throw ArgumentError("cross_frame_consistency: need at least 2 frames");
    if (feat_dim < 1) throw ArgumentError("cross_frame_consistency: feat_dim must be >= 1");
    const size_t frame_sz = video.size() / static_cast<size_t>(N);

    // Fixed seeded projection R [feat_dim, frame_sz].
    Rng rng(extractor_seed);
    std::vector<double> proj(static_cast<size_t>(feat_dim) * frame_sz);
    const double scale = 1.0 / std::sqrt(static_cast<double>(feat_dim));
    for (double& v : proj) v = rng.normal() * scale;

    std::vector<std::vector<double>> feats(N, std::vector<double>(feat_dim));
    const auto& K = kernels();
    for (int f = 0; f < N; ++f) {
        const double* frame = video.data() + static_cast<size_t>(f) * frame_sz;
        double mean = 0.0;
        for (int d = 0; d < feat_dim; ++d) {
            feats[f][d] = K.dot(proj.data() + static_cast<size_t>(d) * frame_sz, frame, frame_sz);
            mean += feats[f][d];
        }
        mean /= feat_dim;
        for (int d = 0; d < feat_dim; ++d) feats[f][d] -= mean;
    }
    double acc = 0.0;
    for (int f = 0; f + 1 < N; ++f) {
        const double na = std::sqrt(K.dot(feats[f].data(), feats[f].data(), feat_dim));
        const double nb = std::sqrt(K.dot(feats[f + 1].data(), feats[f + 1].data(), feat_dim));
        if (na <= 0.0 || nb <= 0.0) continue;  // degenerate frame contributes 0
        acc += K.dot(feats[f].data(), feats[f + 1].data(), feat_dim) / (na * nb);
    }
    return 100.0 * acc / static_cast<double>(N - 1);
}

double first_frame_fidelity(const Tensor& generated_frame, const Tensor& reference_frame) {
    if (generated_frame.shape() != reference_frame.shape())
        throw ArgumentError("first_frame_fidelity: shape mismatch");
    double acc = 0.0;
    for (size_t i = 0; i < generated_frame.size(); ++i)
        acc += std::abs(generated_frame.data()[i] - reference_frame.data()[i]);
    return acc / static_cast<double>(generated_frame.size());
}

MetricsReport run_sparsity_sweep(
    const Backbone& backbone,
    const std::vector<std::pair<std::string, const SparseEncoder*>>& encoders,
    const std::vector<DatasetRecord>& eval_set, const EvalConfig& cfg) {
    if (eval_set.empty()) throw ConfigError("run_sparsity_sweep: empty eval dataset");
    if (encoders.empty()) throw ConfigError("run_sparsity_sweep: no encoders given");
    for (const auto& [name, enc] : encoders)
        if (enc->modality() != cfg.modality)
            throw ConfigError("run_sparsity_sweep: encoder '" + name +
                              "' modality does not match eval modality");

    const int count = (cfg.max_videos > 0)
                          ? std::min<int>(cfg.max_videos, static_cast<int>(eval_set.size()))
                          : static_cast<int>(eval_set.size());
    const int N = eval_set[0].video.rgb.shape()[0];
    const int H = eval_set[0].video.rgb.shape()[2], W = eval_set[0].video.rgb.shape()[3];

    MetricsReport report;
    {
        std::string prov;
        prov += "rmasks:";
        for (double r : cfg.r_masks) prov += std::to_string(r) + ",";
        prov += ";modality:" + modality_name(cfg.modality);
        prov += ";steps:" + std::to_string(cfg.steps);
        prov += ";w:" + std::to_string(cfg.guidance);
        prov += ";stochastic:" + std::to_string(cfg.stochastic ? 1 : 0);
        prov += ";featdim:" + std::to_string(cfg.feat_dim);
        prov += ";seed:" + std::to_string(cfg.sample_seed);
        prov += ";count:" + std::to_string(count);
        prov += ";backbone:" + params_digest(backbone.params());
        for (const auto& [name, enc] : encoders)
            prov += ";" + name + ":" + params_digest(enc->params());
        report.config_digest = sha256_hex(prov.data(), prov.size());
    }

    for (const auto& [name, enc] : encoders) {
        for (double r : cfg.r_masks) {
            const std::vector<int> keyframes = evenly_spaced_keyframes(N, r);
            SweepCell cell;
            cell.variant = name;
            cell.r_mask = r;
            for (int i = 0; i < count; ++i) {
                const auto& rec = eval_set[i];
                std::vector<std::vector<double>> maps;
                maps.reserve(keyframes.size());
                for (int k : keyframes)
                    maps.push_back(extract_condition(rec.video, k, cfg.modality));
                ConditionBundle bundle = ConditionBundle::from_keyframes(
                    N, 3, H, W, cfg.modality, keyframes, maps);
                SampleOptions opt;
                opt.frames = N;
                opt.height = H;
                opt.width = W;
                opt.steps = cfg.steps;
                opt.guidance = cfg.guidance;
                opt.seed = cfg.sample_seed + static_cast<uint64_t>(i);
                opt.T = cfg.T;
                opt.schedule_kind = cfg.schedule_kind;
                opt.mode = cfg.stochastic ? SamplerMode::kStochastic
                                          : SamplerMode::kDeterministic;
                Tensor video = sample_video(backbone, enc, &bundle, rec.spec.prompt_tokens, opt);

                double oop = 0.0;
                cell.mae += keyframe_depth_mae(video, rec.video.depth, keyframes, rec.spec, &oop);
                cell.consistency +=
                    cross_frame_consistency(video, cfg.extractor_seed, cfg.feat_dim);
                cell.out_of_palette += oop;
                ++cell.count;
            }
            cell.mae /= cell.count;
            cell.consistency /= cell.count;
            cell.out_of_palette /= cell.count;
            if (!std::isfinite(cell.mae) || !std::isfinite(cell.consistency))
                throw ConfigError("run_sparsity_sweep: non-finite metric");
            report.cells.push_back(cell);
        }
    }
    return report;
}

void write_report_text(const std::string& path, const MetricsReport& report) {
    std::ofstream os(path);
    if (!os) throw IoError("write_report_text: cannot open '" + path + "'");
    os << "# sparse control fidelity sweep (all numbers x100)\n";
    os << "# config_digest " << report.config_digest << "\n";
    os << "variant r_mask err cons out_of_palette count\n";
    for (const auto& c : report.cells)
        os << c.variant << ' ' << c.r_mask << ' ' << c.mae << ' ' << c.consistency << ' '
           << c.out_of_palette << ' ' << c.count << '\n';
    if (!os) throw IoError("write_report_text: write failed");
}

void write_report_json(const std::string& path, const MetricsReport& report) {
    nlohmann::json j;
    j["config_digest"] = report.config_digest;
    j["cells"] = nlohmann::json::array();
    for (const auto& c : report.cells)
        j["cells"].push_back({{"variant", c.variant},
                              {"r_mask", c.r_mask},
                              {"mae_x100", c.mae},
                              {"consistency_x100", c.consistency},
                              {"out_of_palette_fraction", c.out_of_palette},
                              {"count", c.count}});
    std::ofstream os(path);
    if (!os) throw IoError("write_report_json: cannot open '" + path + "'");
    os << j.dump(2) << '\n';
    if (!os) throw IoError("write_report_json: write failed");
}

}  // namespace sparsevid
