#include "sparsevid/training.hpp"

#include <chrono>
#include <cmath>
#include <fstream>

#include "sparsevid/checkpoint.hpp"
#include "sparsevid/errors.hpp"

namespace sparsevid {
namespace {

double now_seconds() {
    return std::chrono::duration<double>(
               std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

Tensor sample_noise(const std::vector<int>& shape, Rng& rng) {
    Tensor eps = Tensor::zeros(shape);
    for (double& v : eps.values()) v = rng.normal();
    return eps;
}

}  // namespace

MaskingDraw sample_condition_indices(int N, Rng& rng) {
    if (N < 1) throw ArgumentError("sample_condition_indices: N must be >= 1");
    MaskingDraw d;
    d.N = N;
    d.Nc = 1 + static_cast<int>(rng.uniform_int(N));
    // Partial Fisher-Yates: first Nc entries are a uniform subset.
    std::vector<int> pool(N);
    for (int i = 0; i < N; ++i) pool[i] = i;
    for (int i = 0; i < d.Nc; ++i)
        std::swap(pool[i], pool[i + rng.uniform_int(N - i)]);
    d.indices.assign(pool.begin(), pool.begin() + d.Nc);
    std::sort(d.indices.begin(), d.indices.end());
    return d;
}

ConditionBundle make_training_bundle(const DatasetRecord& record, Modality modality,
                                     const MaskingDraw& draw) {
    const int N = record.video.rgb.shape()[0];
    if (draw.N != N) throw ArgumentError("make_training_bundle: frame-count mismatch");
    const int H = record.video.rgb.shape()[2], W = record.video.rgb.shape()[3];
    std::vector<std::vector<double>> maps;
    maps.reserve(draw.indices.size());
    for (int k : draw.indices) maps.push_back(extract_condition(record.video, k, modality));
    return ConditionBundle::from_keyframes(N, 3, H, W, modality, draw.indices, maps);
}

AdamOptimizer::AdamOptimizer(std::vector<Tensor> params, double lr, double beta1,
                             double beta2, double eps)
    : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    for (const auto& p : params_) {
        m_.emplace_back(p.size(), 0.0);
        v_.emplace_back(p.size(), 0.0);
    }
}

void AdamOptimizer::step() {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, t_);
    const double bc2 = 1.0 - std::pow(beta2_, t_);
    for (size_t i = 0; i < params_.size(); ++i) {
        Tensor& p = params_[i];
        if (p.grad().size() != p.size()) continue;  // never touched this step
        const double* g = p.grad().data();
        double* w = p.data();
        double* m = m_[i].data();
        double* v = v_[i].data();
        for (size_t j = 0; j < p.size(); ++j) {
            m[j] = beta1_ * m[j] + (1.0 - beta1_) * g[j];
            v[j] = beta2_ * v[j] + (1.0 - beta2_) * g[j] * g[j];
            w[j] -= lr_ * (m[j] / bc1) / (std::sqrt(v[j] / bc2) + eps_);
        }
    }
}

void AdamOptimizer::zero_grad() {
    for (auto& p : params_) p.zero_grad();
}

std::vector<TrainLogEntry> pretrain_backbone(Backbone& net,
                                             const std::vector<DatasetRecord>& dataset,
                                             const TrainConfig& cfg) {
    if (dataset.empty()) throw ConfigError("pretrain_backbone: empty dataset");
    const DiffusionSchedule sched = make_schedule(cfg.T, cfg.schedule_kind);
    Rng rng(cfg.seed);

    std::vector<Tensor> params;
    for (auto& [name, t] : net.params().all()) params.push_back(t);
    AdamOptimizer opt(params, cfg.lr);

    std::vector<TrainLogEntry> log;
    log.reserve(cfg.steps);
    const double t0 = now_seconds();
    for (int step = 0; step < cfg.steps; ++step) {
        const auto& rec = dataset[rng.uniform_int(dataset.size())];
        const int t = static_cast<int>(rng.uniform_int(cfg.T));
        Tensor eps = sample_noise(rec.video.rgb.shape(), rng);
        const bool drop_text = rng.uniform() < cfg.cfg_dropout;
        std::vector<int> tokens = drop_text ? std::vector<int>{} : rec.spec.prompt_tokens;

        Tensor z_t = add_noise(rec.video.rgb, eps, t, sched);
        Tensor eps_pred = net.forward(z_t, t, net.embed_text(tokens));
        Tensor loss = diffusion_loss(eps_pred, eps);
        loss.backward();
        opt.step();
        opt.zero_grad();
        log.push_back({step, loss.scalar(), now_seconds() - t0});
    }
    return log;
}

std::vector<TrainLogEntry> train_encoder(SparseEncoder& encoder, Backbone& backbone,
                                         const std::vector<DatasetRecord>& dataset,
                                         const TrainConfig& cfg) {
    if (dataset.empty()) throw ConfigError("train_encoder: empty dataset");
    const DiffusionSchedule sched = make_schedule(cfg.T, cfg.schedule_kind);
    Rng rng(cfg.seed);

    const std::string digest0 = params_digest(backbone.params());
    backbone.params().set_requires_grad(false);

    std::vector<Tensor> params;
    for (auto& [name, t] : encoder.params().all()) params.push_back(t);
    AdamOptimizer opt(params, cfg.lr);

    const int N = dataset[0].video.rgb.shape()[0];
    const int H = dataset[0].video.rgb.shape()[2], W = dataset[0].video.rgb.shape()[3];
    const Modality modality = encoder.modality();

    std::vector<TrainLogEntry> log;
    log.reserve(cfg.steps);
    const double t0 = now_seconds();
    auto check_digest = [&]() {
        if (params_digest(backbone.params()) != digest0) {
            backbone.params().set_requires_grad(true);
            throw IntegrityError("train_encoder: frozen backbone digest changed mid-run");
        }
    };
    for (int step = 0; step < cfg.steps; ++step) {
        const auto& rec = dataset[rng.uniform_int(dataset.size())];
        const int t = static_cast<int>(rng.uniform_int(cfg.T));
        Tensor eps = sample_noise(rec.video.rgb.shape(), rng);
        const bool drop_text = rng.uniform() < cfg.cfg_dropout;
        std::vector<int> tokens = drop_text ? std::vector<int>{} : rec.spec.prompt_tokens;

        ConditionBundle bundle = (rng.uniform() < cfg.cond_dropout)
                                     ? ConditionBundle::empty(N, 3, H, W, modality)
                                     : make_training_bundle(rec, modality,
                                                            sample_condition_indices(N, rng));

        Tensor z_t = add_noise(rec.video.rgb, eps, t, sched);
        const Tensor* zp = encoder.consumes_noised_sample() ? &z_t : nullptr;
        ResidualStack residuals = encoder.forward_bundle(bundle, zp, t, tokens);
        Tensor eps_pred = backbone.forward(z_t, t, backbone.embed_text(tokens), &residuals);
        Tensor loss = diffusion_loss(eps_pred, eps);
        loss.backward();
        opt.step();
        opt.zero_grad();
        log.push_back({step, loss.scalar(), now_seconds() - t0});
        if (cfg.digest_check_interval > 0 && (step + 1) % cfg.digest_check_interval == 0)
            check_digest();
    }
    check_digest();
    backbone.params().set_requires_grad(true);
    return log;
}

void write_training_log(const std::string& path, const std::vector<TrainLogEntry>& log) {
    std::ofstream os(path);
    if (!os) throw IoError("write_training_log: cannot open '" + path + "'");
    for (const auto& e : log)
        os << e.step << ' ' << e.loss << ' ' << e.wall_seconds << '\n';
    if (!os) throw IoError("write_training_log: write failed");
}

}  // namespace sparsevid
