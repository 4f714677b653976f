#pragma once

#include <string>
#include <vector>

#include "floodcpf/config.hpp"
#include "floodcpf/data.hpp"
#include "floodcpf/layers.hpp"

namespace floodcpf {

struct TrainLogRow {
    i64 epoch = 0;
    double train_loss = 0.0;
    double val_iou = 0.0;
    double seconds = 0.0;  // wall clock; the one field exempt from determinism
};

void write_trainlog(const std::vector<TrainLogRow>& rows, const std::string& path);
std::vector<TrainLogRow> read_trainlog(const std::string& path);

// params.bin holds one TNSR blob per parameter in collect order; index.txt
// maps each name to its byte range so single tensors can be located.
template <typename T>
void save_params(const std::vector<Parameter<T>*>& params, const std::string& dir);

// Copies values into the existing parameters by name; the stored set and the
// model's set must match exactly, shapes included.
template <typename T>
void load_params(const std::vector<Parameter<T>*>& params, const std::string& dir);

void write_feature_stats(const FeatureStats& stats, const std::string& path);
FeatureStats read_feature_stats(const std::string& path);

// Checkpoint directory: config.txt, params.bin, index.txt, stats.txt,
// splits.csv. Training additionally drops trainlog.csv and metrics.csv next
// to these.
void save_checkpoint(const std::string& dir, const ExperimentConfig& cfg,
                     const std::vector<Parameter<float>*>& params, const FeatureStats& stats,
                     const SplitManifest& splits);

ExperimentConfig read_checkpoint_config(const std::string& dir);

}  // namespace floodcpf
