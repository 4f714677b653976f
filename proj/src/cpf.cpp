#include "floodcpf/cpf.hpp"

namespace floodcpf {

CpfWiring parse_wiring(const std::string& s) {
  if (s == "cross") return CpfWiring::cross;
  if (s == "self") return CpfWiring::self;
  fail("unknown cpf wiring '" + s + "' (expected cross or self)");
}

std::string wiring_name(CpfWiring w) {
  return w == CpfWiring::cross ? "cross" : "self";
}

template <typename T>
Stem<T>::Stem(const std::string& name, const StemConfig& cfg, u64 init_seed)
    : cfg_(cfg) {
  check(cfg.depth >= 1, "Stem: depth must be >= 1");
  check(cfg.width >= 1, "Stem: width must be >= 1");
  check(cfg.kernel >= 1 && cfg.kernel % 2 == 1, "Stem: kernel must be odd");
  convs_.reserve(static_cast<size_t>(cfg.depth));
  norms_.reserve(static_cast<size_t>(cfg.depth));
  const i64 pad = (cfg.kernel - 1) / 2;
  for (i64 i = 0; i < cfg.depth; ++i) {
    const i64 in_ch = (i == 0) ? 1 : cfg.width;
    const std::string idx = std::to_string(i);
    convs_.emplace_back(name + ".conv" + idx, in_ch, cfg.width, cfg.kernel,
                        pad, 1, init_seed);
    norms_.emplace_back(name + ".norm" + idx, cfg.width);
  }
}

template <typename T>
Tensor<T> Stem<T>::forward(const Tensor<T>& x) const {
  check(x.shape().size() == 4, "Stem: input must be rank 4");
  check(x.shape()[1] == 1, "Stem: input must be single-channel");
  Tensor<T> h = x;
  for (size_t i = 0; i < convs_.size(); ++i) {
    h = norms_[i].forward(relu(convs_[i].forward(h)));
  }
  return h;
}

template <typename T>
void Stem<T>::collect(std::vector<Parameter<T>*>& out) {
  for (size_t i = 0; i < convs_.size(); ++i) {
    convs_[i].collect(out);
    norms_[i].collect(out);
  }
}

template <typename T>
SpatialAttention<T>::SpatialAttention(const std::string& name, i64 sa_kernel,
                                      u64 init_seed)
    : conv_(name + ".conv", 2, 1, sa_kernel, (sa_kernel - 1) / 2, 1,
            init_seed) {
  check(sa_kernel >= 1 && sa_kernel % 2 == 1,
        "SpatialAttention: kernel must be odd");
}

template <typename T>
Tensor<T> SpatialAttention<T>::forward(const Tensor<T>& f) const {
  return sigmoid(conv_.forward(channel_mean_max(f)));
}

template <typename T>
void SpatialAttention<T>::collect(std::vector<Parameter<T>*>& out) {
  conv_.collect(out);
}

namespace {

i64 ca_hidden(i64 channels, i64 reduction) {
  check(channels > 0 && reduction > 0,
        "ChannelAttention: channels and reduction must be positive");
  check(channels % reduction == 0,
        "ChannelAttention: channels must be divisible by reduction");
  return channels / reduction;
}

}  // namespace

template <typename T>
ChannelAttention<T>::ChannelAttention(const std::string& name, i64 channels,
                                      i64 reduction, u64 init_seed)
    : channels_(channels),
      mlp_(name + ".mlp", channels, ca_hidden(channels, reduction),
           init_seed) {}

template <typename T>
Tensor<T> ChannelAttention<T>::forward(const Tensor<T>& f) const {
  check(f.shape().size() == 4 && f.shape()[1] == channels_,
        "ChannelAttention: channel width mismatch");
  Tensor<T> a = mlp_.forward(global_avg_pool(f));
  Tensor<T> b = mlp_.forward(global_max_pool(f));
  return sigmoid(add(a, b));
}

template <typename T>
void ChannelAttention<T>::collect(std::vector<Parameter<T>*>& out) {
  mlp_.collect(out);
}

template <typename T>
Cpf<T>::Cpf(const CpfConfig& cfg, u64 init_seed)
    : cfg_(cfg),
      sa_vv2vh_("cpf.sa_vv2vh", cfg.sa_kernel, init_seed),
      sa_vh2vv_("cpf.sa_vh2vv", cfg.sa_kernel, init_seed),
      ca_vv2vh_("cpf.ca_vv2vh", cfg.channels, cfg.reduction, init_seed),
      ca_vh2vv_("cpf.ca_vh2vv", cfg.channels, cfg.reduction, init_seed),
      // pairsum keeps the two concatenated halves order-independent, so
      // swapping branches together with direction weights is bit-exact.
      fuse_conv_("cpf.fuse_conv", 2 * cfg.channels, cfg.out_channels, 3, 1, 1,
                 init_seed, /*pairsum=*/true) {
  check(cfg.out_channels >= 1, "Cpf: out_channels must be >= 1");
}

template <typename T>
Tensor<T> Cpf<T>::gated(const Tensor<T>& target, const ChannelAttention<T>& ca,
                        const SpatialAttention<T>& sa,
                        const Tensor<T>& source) const {
  const Shape& s = target.shape();
  Tensor<T> cw = reshape(ca.forward(source), Shape{s[0], s[1], 1, 1});
  // Fixed gate order (channel, then spatial); both gates are elementwise
  // after broadcast so the order only pins the fp evaluation.
  return mul(mul(target, cw), sa.forward(source));
}

template <typename T>
Tensor<T> Cpf<T>::fuse(const Tensor<T>& f_vv, const Tensor<T>& f_vh) const {
  check(f_vv.shape().size() == 4 && f_vv.shape() == f_vh.shape(),
        "Cpf: polarization feature maps must share one rank-4 shape");
  check(f_vv.shape()[1] == cfg_.channels, "Cpf: channel width mismatch");
  const Tensor<T>& src_for_vv =
      (cfg_.wiring == CpfWiring::cross) ? f_vh : f_vv;
  const Tensor<T>& src_for_vh =
      (cfg_.wiring == CpfWiring::cross) ? f_vv : f_vh;
  Tensor<T> att_vv = gated(f_vv, ca_vh2vv_, sa_vh2vv_, src_for_vv);
  Tensor<T> att_vh = gated(f_vh, ca_vv2vh_, sa_vv2vh_, src_for_vh);
  return fuse_conv_.forward(concat_channels(att_vv, att_vh));
}

template <typename T>
void Cpf<T>::collect(std::vector<Parameter<T>*>& out) {
  sa_vv2vh_.collect(out);
  sa_vh2vv_.collect(out);
  ca_vv2vh_.collect(out);
  ca_vh2vv_.collect(out);
  fuse_conv_.collect(out);
}

#define FLOODCPF_CPF_INSTANCES(T)      \
  template class Stem<T>;              \
  template class SpatialAttention<T>;  \
  template class ChannelAttention<T>;  \
  template class Cpf<T>;

FLOODCPF_CPF_INSTANCES(float)
FLOODCPF_CPF_INSTANCES(double)
#undef FLOODCPF_CPF_INSTANCES

}  // namespace floodcpf
