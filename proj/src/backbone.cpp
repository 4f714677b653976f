#include "floodcpf/backbone.hpp"

#include <algorithm>

namespace floodcpf {

FusionMode parse_fusion_mode(const std::string& s) {
  if (s == "vv_only") return FusionMode::vv_only;
  if (s == "vh_only") return FusionMode::vh_only;
  if (s == "addition") return FusionMode::addition;
  if (s == "concat") return FusionMode::concat;
  if (s == "cpf") return FusionMode::cpf;
  fail("unknown fusion mode '" + s +
       "' (expected vv_only, vh_only, addition, concat, or cpf)");
}

std::string fusion_mode_name(FusionMode m) {
  switch (m) {
    case FusionMode::vv_only: return "vv_only";
    case FusionMode::vh_only: return "vh_only";
    case FusionMode::addition: return "addition";
    case FusionMode::concat: return "concat";
    case FusionMode::cpf: return "cpf";
  }
  fail("unhandled fusion mode");
}

BackboneKind parse_backbone_kind(const std::string& s) {
  if (s == "unet") return BackboneKind::unet;
  if (s == "autoencoder") return BackboneKind::autoencoder;
  fail("unknown backbone '" + s + "' (expected unet or autoencoder)");
}

std::string backbone_kind_name(BackboneKind k) {
  return k == BackboneKind::unet ? "unet" : "autoencoder";
}

namespace {

i64 enc_width(const BackboneConfig& cfg, i64 stage) {
  return cfg.base_width << stage;
}

i64 dec_width(const BackboneConfig& cfg, i64 stage) {
  return std::max(cfg.base_width, enc_width(cfg, stage) / 2);
}

}  // namespace

template <typename T>
DoubleConv<T>::DoubleConv(const std::string& name, i64 in_ch, i64 out_ch,
                          u64 init_seed)
    : c0_(name + ".c0", in_ch, out_ch, 3, 1, 1, init_seed),
      c1_(name + ".c1", out_ch, out_ch, 3, 1, 1, init_seed) {}

template <typename T>
Tensor<T> DoubleConv<T>::forward(const Tensor<T>& x) const {
  return relu(c1_.forward(relu(c0_.forward(x))));
}

template <typename T>
void DoubleConv<T>::collect(std::vector<Parameter<T>*>& out) {
  c0_.collect(out);
  c1_.collect(out);
}

template <typename T>
SegNet<T>::SegNet(const BackboneConfig& cfg, i64 in_channels, u64 init_seed)
    : cfg_(cfg), in_channels_(in_channels) {
  check(cfg.depth >= 1, "SegNet: depth must be >= 1");
  check(cfg.base_width >= 1, "SegNet: base width must be >= 1");
  check(in_channels >= 1, "SegNet: input channels must be >= 1");
  enc_.reserve(static_cast<size_t>(cfg.depth));
  dec_.reserve(static_cast<size_t>(cfg.depth));
  for (i64 i = 0; i < cfg.depth; ++i) {
    const i64 in_ch = (i == 0) ? in_channels : enc_width(cfg, i - 1);
    enc_.emplace_back("net.enc" + std::to_string(i), in_ch, enc_width(cfg, i),
                      init_seed);
  }
  const i64 deep = enc_width(cfg, cfg.depth - 1);
  bott_ = std::make_unique<DoubleConv<T>>("net.bott", deep, deep, init_seed);
  for (i64 i = 0; i < cfg.depth; ++i) {
    const i64 up_in = (i == cfg.depth - 1) ? deep : dec_width(cfg, i + 1);
    const i64 in_ch =
        (cfg.kind == BackboneKind::unet) ? up_in + enc_width(cfg, i) : up_in;
    dec_.emplace_back("net.dec" + std::to_string(i), in_ch, dec_width(cfg, i),
                      init_seed);
  }
  head_ =
      std::make_unique<Conv2d<T>>("net.head", dec_width(cfg, 0), 1, 1, 0, 1,
                                  init_seed);
}

template <typename T>
Tensor<T> SegNet<T>::forward(const Tensor<T>& x) const {
  check(x.shape().size() == 4, "SegNet: input must be rank 4");
  check(x.shape()[1] == in_channels_, "SegNet: input channel mismatch");
  const i64 h = x.shape()[2], w = x.shape()[3];
  const i64 block = i64(1) << cfg_.depth;
  check(h % block == 0 && w % block == 0 && h >= block && w >= block,
        "SegNet: spatial extents must be divisible by 2^depth");
  Tensor<T> cur = x;
  std::vector<Tensor<T>> skips;
  skips.reserve(enc_.size());
  for (const DoubleConv<T>& stage : enc_) {
    Tensor<T> s = stage.forward(cur);
    skips.push_back(s);
    cur = max_pool2(s);
  }
  cur = bott_->forward(cur);
  for (i64 i = cfg_.depth - 1; i >= 0; --i) {
    cur = upsample2(cur);
    if (cfg_.kind == BackboneKind::unet)
      cur = concat_channels(cur, skips[static_cast<size_t>(i)]);
    cur = dec_[static_cast<size_t>(i)].forward(cur);
  }
  return sigmoid(head_->forward(cur));
}

template <typename T>
void SegNet<T>::collect(std::vector<Parameter<T>*>& out) {
  for (DoubleConv<T>& e : enc_) e.collect(out);
  bott_->collect(out);
  for (DoubleConv<T>& d : dec_) d.collect(out);
  head_->collect(out);
}

template <typename T>
SegModel<T>::SegModel(const BackboneConfig& bb, const StemConfig& stem,
                      const CpfConfig& cpf, u64 init_seed)
    : bb_(bb) {
  i64 net_in = 0;
  switch (bb.mode) {
    case FusionMode::vv_only:
    case FusionMode::vh_only:
      net_in = 1;
      break;
    case FusionMode::addition:
      stem_vv_ = std::make_unique<Stem<T>>("stem_vv", stem, init_seed);
      stem_vh_ = std::make_unique<Stem<T>>("stem_vh", stem, init_seed);
      net_in = stem.width;
      break;
    case FusionMode::concat:
      net_in = 4;
      break;
    case FusionMode::cpf:
      check(cpf.channels == stem.width,
            "SegModel: cpf channel width must equal stem width");
      stem_vv_ = std::make_unique<Stem<T>>("stem_vv", stem, init_seed);
      stem_vh_ = std::make_unique<Stem<T>>("stem_vh", stem, init_seed);
      cpf_ = std::make_unique<Cpf<T>>(cpf, init_seed);
      ratio_embed_ = std::make_unique<Conv2d<T>>(
          "ratio_embed", 2, kRatioEmbedChannels, 1, 0, 1, init_seed);
      net_in = cpf.out_channels + kRatioEmbedChannels;
      break;
  }
  net_ = std::make_unique<SegNet<T>>(bb, net_in, init_seed);
}

template <typename T>
Tensor<T> SegModel<T>::build_input(const Tensor<T>& stack) const {
  check(stack.shape().size() == 4 && stack.shape()[1] == 4,
        "SegModel: feature stack must be (B,4,H,W)");
  switch (bb_.mode) {
    case FusionMode::vv_only:
      return slice_channels(stack, 0, 1);
    case FusionMode::vh_only:
      return slice_channels(stack, 1, 2);
    case FusionMode::addition:
      return add(stem_vv_->forward(slice_channels(stack, 0, 1)),
                 stem_vh_->forward(slice_channels(stack, 1, 2)));
    case FusionMode::concat:
      return stack;
    case FusionMode::cpf: {
      Tensor<T> fused =
          cpf_->fuse(stem_vv_->forward(slice_channels(stack, 0, 1)),
                     stem_vh_->forward(slice_channels(stack, 1, 2)));
      Tensor<T> embed = ratio_embed_->forward(slice_channels(stack, 2, 4));
      return concat_channels(fused, embed);
    }
  }
  fail("unhandled fusion mode");
}

template <typename T>
Tensor<T> SegModel<T>::forward(const Tensor<T>& stack) const {
  return net_->forward(build_input(stack));
}

template <typename T>
void SegModel<T>::collect(std::vector<Parameter<T>*>& out) {
  if (stem_vv_) stem_vv_->collect(out);
  if (stem_vh_) stem_vh_->collect(out);
  if (cpf_) cpf_->collect(out);
  if (ratio_embed_) ratio_embed_->collect(out);
  net_->collect(out);
}

template <typename T>
i64 SegModel<T>::param_count() {
  std::vector<Parameter<T>*> ps;
  collect(ps);
  i64 total = 0;
  for (Parameter<T>* p : ps) total += p->value.numel();
  return total;
}

template <typename T>
std::vector<unsigned char> binarize(const Tensor<T>& prob, double tau) {
  check(tau > 0.0 && tau < 1.0, "binarize: tau must lie strictly in (0,1)");
  std::vector<unsigned char> mask(static_cast<size_t>(prob.numel()));
  const T* d = prob.data();
  const T t = static_cast<T>(tau);
  for (i64 i = 0; i < prob.numel(); ++i)
    mask[static_cast<size_t>(i)] = d[i] >= t ? 1 : 0;
  return mask;
}

#define FLOODCPF_BACKBONE_INSTANCES(T)                                \
  template class DoubleConv<T>;                                       \
  template class SegNet<T>;                                           \
  template class SegModel<T>;                                         \
  template std::vector<unsigned char> binarize<T>(const Tensor<T>&, double);

FLOODCPF_BACKBONE_INSTANCES(float)
FLOODCPF_BACKBONE_INSTANCES(double)
#undef FLOODCPF_BACKBONE_INSTANCES

}  // namespace floodcpf
