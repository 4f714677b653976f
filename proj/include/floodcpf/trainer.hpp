#pragma once

#include <string>
#include <vector>

#include "floodcpf/backbone.hpp"
#include "floodcpf/checkpoint.hpp"
#include "floodcpf/config.hpp"
#include "floodcpf/data.hpp"
#include "floodcpf/metrics.hpp"
#include "floodcpf/tensor.hpp"

namespace floodcpf {

// -mean(y ln p + (1-y) ln(1-p)); prob is clamped to [eps_prob, 1-eps_prob]
// before the logs so saturated pixels stay finite.
template <typename T>
Tensor<T> bce_loss(const Tensor<T>& prob, const Tensor<T>& target, double eps_prob);

// Adaptive-moment update with bias correction, grads zeroed afterwards.
// t counts steps from 1. The first non-finite gradient aborts with the
// offending parameter named.
template <typename T>
void adam_step(const std::vector<Parameter<T>*>& params, double lr, double beta1, double beta2,
               double eps, i64 t);

struct PreparedData {
    SplitManifest splits;  // train / val / test refs
    FeatureStats stats;    // computed on the training split only
    std::vector<Patch> train;
    std::vector<Patch> val;
    std::vector<Patch> test;
};

// Loads the manifest's scenes, builds feature stacks, tiles them at
// stride == patch, splits, then standardizes everything with the training
// statistics.
PreparedData prepare_data(const ExperimentConfig& cfg);

// Model wired from cfg with the derived init stream (seed split 2).
SegModel<float> build_model(const ExperimentConfig& cfg);

// Micro-aggregated confusion over a patch list at threshold tau.
ConfusionCounts eval_patches(const SegModel<float>& model, const std::vector<Patch>& patches,
                             double tau, i64 batch_size);

struct TrainResult {
    std::vector<TrainLogRow> log;
    ConfusionCounts test_counts;
    double best_val_iou = 0.0;  // 0 with best_epoch -1 when epochs == 0
    i64 best_epoch = -1;
};

// Full run: train with per-epoch shuffles and augmentation draws, keep the
// first best-validation-IoU weights, score the test split with them, and
// write checkpoint + trainlog.csv + metrics.csv under out_dir.
TrainResult train(const ExperimentConfig& cfg, const std::string& out_dir);

struct AblationRow {
    FusionMode mode = FusionMode::vv_only;
    double mean_iou = 0.0, sd_iou = 0.0;  // across seeds; sd is population sd
    double mean_f1 = 0.0, sd_f1 = 0.0;
    ConfusionCounts pooled;  // micro counts summed over seeds
};

// Report label for a fusion mode ("VV only", ..., "CPF (VV, VH)").
std::string mode_label(FusionMode m);

// Trains all five modes for every seed with everything else pinned; each run
// lands in out_root/<backbone>_<mode>_seed<seed>/.
std::vector<AblationRow> run_ablation(const ExperimentConfig& base, const std::vector<u64>& seeds,
                                      const std::string& out_root);

// Emits table_<kind>.csv / table_<kind>.txt (micro counts, paper-shaped) and
// ablation_<kind>.csv (per-mode mean and sd across seeds) under out_root.
void write_ablation_report(const std::vector<AblationRow>& rows, i64 n_seeds,
                           const std::string& out_root, BackboneKind kind);

}  // namespace floodcpf
