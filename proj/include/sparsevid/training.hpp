#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sparsevid/backbone.hpp"
#include "sparsevid/dataset.hpp"
#include "sparsevid/schedule.hpp"
#include "sparsevid/sparse_encoder.hpp"

namespace sparsevid {

// Result of the random condition-masking draw: how many frames receive the
// condition this iteration and which ones.
struct MaskingDraw {
    int N = 0;
    int Nc = 0;
    std::vector<int> indices;  // sorted, distinct, in [0,N)
};

// Nc uniform over {1..N}; given Nc, indices are a uniform sample without
// replacement from {0..N-1}.
MaskingDraw sample_condition_indices(int N, Rng& rng);

// Bundle with conditions extracted only at the drawn keyframes.
ConditionBundle make_training_bundle(const DatasetRecord& record, Modality modality,
                                     const MaskingDraw& draw);

class AdamOptimizer {
public:
    AdamOptimizer(std::vector<Tensor> params, double lr = 1e-4, double beta1 = 0.9,
                  double beta2 = 0.999, double eps = 1e-8);
    void step();
    void zero_grad();

private:
    std::vector<Tensor> params_;
    std::vector<std::vector<double>> m_, v_;
    double lr_, beta1_, beta2_, eps_;
    long t_ = 0;
};

struct TrainLogEntry {
    int step = 0;
    double loss = 0.0;
    double wall_seconds = 0.0;
};

struct TrainConfig {
    int steps = 2000;
    double lr = 1e-4;
    int T = 1000;
    std::string schedule_kind = "linear-vp";
    double cfg_dropout = 0.1;         // text -> null embedding
    double cond_dropout = 0.05;       // bundle -> no keyframes (phase 2 only)
    uint64_t seed = 0;
    int digest_check_interval = 500;  // backbone digest verification cadence
};

// Phase 1: train the backbone on Eq.-style noise prediction.
std::vector<TrainLogEntry> pretrain_backbone(Backbone& net,
                                             const std::vector<DatasetRecord>& dataset,
                                             const TrainConfig& cfg);

// Phase 2: train the encoder against a frozen backbone. The backbone digest
// is verified during and after the run; any change aborts with
// IntegrityError. Backbone parameters are restored to requires_grad on exit.
std::vector<TrainLogEntry> train_encoder(SparseEncoder& encoder, Backbone& frozen_backbone,
                                         const std::vector<DatasetRecord>& dataset,
                                         const TrainConfig& cfg);

void write_training_log(const std::string& path, const std::vector<TrainLogEntry>& log);

}  // namespace sparsevid
