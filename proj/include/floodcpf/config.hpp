#pragma once

#include <string>

#include "floodcpf/backbone.hpp"
#include "floodcpf/common.hpp"
#include "floodcpf/cpf.hpp"

namespace floodcpf {

// One experiment, fully pinned: every run-shaping knob lives here so that a
// config file plus a dataset reproduces a run bit for bit.
struct ExperimentConfig {
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    i64 augment = 1;  // 0 disables the flip/rotation draw
    BackboneKind backbone = BackboneKind::unet;
    i64 base_width = 16;
    i64 batch_size = 8;
    i64 cpf_reduction = 4;
    i64 cpf_sa_kernel = 7;
    CpfWiring cpf_wiring = CpfWiring::cross;
    i64 depth = 3;
    i64 epochs = 30;
    double eps_feature = 1e-6;
    double eps_prob = 1e-7;
    double lr = 1e-3;
    std::string manifest;  // dataset manifest path; required to train
    FusionMode mode = FusionMode::cpf;
    i64 patch = 64;
    u64 seed = 42;
    double split_test = 0.1;
    double split_train = 0.8;
    double split_val = 0.1;
    i64 stem_depth = 2;
    i64 stem_width = 16;
    double tau = 0.5;
};

void validate_config(const ExperimentConfig& cfg);

// Canonical form: one key=value per line, keys sorted, doubles printed with
// 17 significant digits so parse(serialize(cfg)) reproduces cfg exactly.
std::string serialize_config(const ExperimentConfig& cfg);
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::string& path);

StemConfig stem_config(const ExperimentConfig& cfg);
CpfConfig cpf_config(const ExperimentConfig& cfg);
BackboneConfig backbone_config(const ExperimentConfig& cfg);

}  // namespace floodcpf
