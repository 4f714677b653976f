#pragma once

#include <memory>
#include <string>
#include <vector>

#include "floodcpf/cpf.hpp"

namespace floodcpf {

enum class FusionMode { vv_only, vh_only, addition, concat, cpf };
enum class BackboneKind { unet, autoencoder };

FusionMode parse_fusion_mode(const std::string& s);
std::string fusion_mode_name(FusionMode m);
BackboneKind parse_backbone_kind(const std::string& s);
std::string backbone_kind_name(BackboneKind k);

struct BackboneConfig {
  BackboneKind kind = BackboneKind::unet;
  i64 depth = 3;
  i64 base_width = 16;
  FusionMode mode = FusionMode::cpf;
};

// Width of the 1x1 embedding of the two ratio channels appended to the fused
// features in cpf mode.
inline constexpr i64 kRatioEmbedChannels = 8;

// conv3x3 -> relu -> conv3x3 -> relu, no normalization.
template <typename T>
class DoubleConv {
 public:
  DoubleConv(const std::string& name, i64 in_ch, i64 out_ch, u64 init_seed);

  Tensor<T> forward(const Tensor<T>& x) const;
  void collect(std::vector<Parameter<T>*>& out);

 private:
  Conv2d<T> c0_;
  Conv2d<T> c1_;
};

// Encoder-decoder trunk over an already fused input, ending in a sigmoid
// probability head.
template <typename T>
class SegNet {
 public:
  SegNet(const BackboneConfig& cfg, i64 in_channels, u64 init_seed);

  Tensor<T> forward(const Tensor<T>& x) const;
  void collect(std::vector<Parameter<T>*>& out);

  i64 in_channels() const { return in_channels_; }

 private:
  BackboneConfig cfg_;
  i64 in_channels_ = 0;
  std::vector<DoubleConv<T>> enc_;
  std::unique_ptr<DoubleConv<T>> bott_;
  std::vector<DoubleConv<T>> dec_;
  std::unique_ptr<Conv2d<T>> head_;
};

// Full segmentation model: fusion front end (per mode) plus the trunk.
// Consumes the 4-channel feature stack [VV, VH, VV/VH, log(VV/VH)].
template <typename T>
class SegModel {
 public:
  SegModel(const BackboneConfig& bb, const StemConfig& stem,
           const CpfConfig& cpf, u64 init_seed);

  Tensor<T> build_input(const Tensor<T>& stack) const;
  Tensor<T> forward(const Tensor<T>& stack) const;
  void collect(std::vector<Parameter<T>*>& out);
  i64 param_count();

  const BackboneConfig& backbone() const { return bb_; }
  i64 net_in_channels() const { return net_->in_channels(); }

 private:
  BackboneConfig bb_;
  std::unique_ptr<Stem<T>> stem_vv_;
  std::unique_ptr<Stem<T>> stem_vh_;
  std::unique_ptr<Cpf<T>> cpf_;
  std::unique_ptr<Conv2d<T>> ratio_embed_;
  std::unique_ptr<SegNet<T>> net_;
};

// Threshold rule: flooded iff prob >= tau; tau must lie strictly in (0,1).
template <typename T>
std::vector<unsigned char> binarize(const Tensor<T>& prob, double tau);

}  // namespace floodcpf
