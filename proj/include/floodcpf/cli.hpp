#pragma once

#include <string>
#include <vector>

#include "floodcpf/config.hpp"
#include "floodcpf/metrics.hpp"
#include "floodcpf/synth.hpp"
#include "floodcpf/trainer.hpp"

namespace floodcpf {

// FLOODCPF_DATA_ROOT anchors relative dataset paths (manifests, scene dirs);
// absolute paths and an unset variable leave the path untouched.
std::string resolve_data_path(const std::string& path);
// FLOODCPF_OUT_ROOT does the same for outputs (run dirs, reports, rasters)
// and for checkpoint directories handed back in as inputs.
std::string resolve_out_path(const std::string& path);

// Subcommand bodies behind the binary, exposed so tests can drive them
// in-process. Errors surface as exceptions; run_cli maps them to exit 1.
std::vector<ManifestEntry> cmd_synth(const SynthConfig& cfg, i64 scenes,
                                     const std::string& out_root);

TrainResult cmd_train(const ExperimentConfig& cfg, const std::string& out_dir);

struct EvalRequest {
  std::string checkpoint;
  std::string manifest;       // empty: the manifest the checkpoint trained on
  std::string split = "test";
  std::string out_dir;        // empty: <checkpoint>/eval_<split>[_oracle]
  bool oracle = false;        // score the ground truth against itself
};

// Scores the requested split with the checkpoint's stored splits, feature
// statistics, and weights; writes metrics.csv + metrics.txt under out_dir.
MetricRow cmd_eval(const EvalRequest& req);

struct PredictRequest {
  std::string checkpoint;
  std::string scene_dir;
  std::string scene_id;       // empty: infer from a lone sidecar in scene_dir
  std::string out_dir = "predictions";
  double tau = -1.0;          // negative: use the checkpoint's tau
};

// Tiles the scene at stride == patch, stitches the non-overlapping tiles,
// and writes <id>.prob.f32r, <id>.mask.u8r, a checksum sidecar, and pgm
// previews of both rasters. Scenes that do not tile exactly are refused.
void cmd_predict(const PredictRequest& req);

// Runs the five-mode ablation for both backbones and writes the per-backbone
// tables under out_root.
void cmd_compare(const ExperimentConfig& base, const std::vector<u64>& seeds,
                 const std::string& out_root);

// argv without the program name; returns the process exit status.
int run_cli(const std::vector<std::string>& args);

}  // namespace floodcpf
