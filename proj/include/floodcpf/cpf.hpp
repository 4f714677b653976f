#pragma once

#include <string>
#include <vector>

#include "floodcpf/layers.hpp"

namespace floodcpf {

struct StemConfig {
  i64 depth = 2;
  i64 width = 16;
  i64 kernel = 3;
};

// cross: gates are computed from the opposite polarization and applied to the
// own branch. self: gates are computed from the gated branch itself; the same
// four weight blocks are reused so checkpoints keep one layout.
enum class CpfWiring { cross, self };

CpfWiring parse_wiring(const std::string& s);
std::string wiring_name(CpfWiring w);

struct CpfConfig {
  i64 channels = 16;      // feature width C of both stems
  i64 out_channels = 16;  // fused width C_f
  i64 reduction = 4;      // channel-attention bottleneck ratio
  i64 sa_kernel = 7;      // spatial-attention conv kernel, odd
  CpfWiring wiring = CpfWiring::cross;
};

// depth x (conv3x3 -> relu -> layer_norm) on a single-channel image.
template <typename T>
class Stem {
 public:
  Stem(const std::string& name, const StemConfig& cfg, u64 init_seed);

  Tensor<T> forward(const Tensor<T>& x) const;
  void collect(std::vector<Parameter<T>*>& out);

  i64 width() const { return cfg_.width; }

 private:
  StemConfig cfg_;
  std::vector<Conv2d<T>> convs_;
  std::vector<LayerNorm<T>> norms_;
};

// channel_mean_max -> conv (2 -> 1) -> sigmoid; output (B,1,H,W).
template <typename T>
class SpatialAttention {
 public:
  SpatialAttention(const std::string& name, i64 sa_kernel, u64 init_seed);

  Tensor<T> forward(const Tensor<T>& f) const;
  void collect(std::vector<Parameter<T>*>& out);

 private:
  Conv2d<T> conv_;
};

// sigmoid(mlp(avg_pool) + mlp(max_pool)) with one mlp serving both pooled
// vectors; output (B,C).
template <typename T>
class ChannelAttention {
 public:
  ChannelAttention(const std::string& name, i64 channels, i64 reduction,
                   u64 init_seed);

  Tensor<T> forward(const Tensor<T>& f) const;
  void collect(std::vector<Parameter<T>*>& out);

 private:
  i64 channels_ = 0;
  Mlp<T> mlp_;
};

// Bidirectional attention fusion of two equally shaped feature maps.
template <typename T>
class Cpf {
 public:
  Cpf(const CpfConfig& cfg, u64 init_seed);

  // (B,C,H,W) x2 -> (B,C_f,H,W)
  Tensor<T> fuse(const Tensor<T>& f_vv, const Tensor<T>& f_vh) const;
  void collect(std::vector<Parameter<T>*>& out);

  const CpfConfig& config() const { return cfg_; }

 private:
  Tensor<T> gated(const Tensor<T>& target, const ChannelAttention<T>& ca,
                  const SpatialAttention<T>& sa, const Tensor<T>& source) const;

  CpfConfig cfg_;
  SpatialAttention<T> sa_vv2vh_;
  SpatialAttention<T> sa_vh2vv_;
  ChannelAttention<T> ca_vv2vh_;
  ChannelAttention<T> ca_vh2vv_;
  Conv2d<T> fuse_conv_;
};

}  // namespace floodcpf
