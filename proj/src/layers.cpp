#include "floodcpf/layers.hpp"

#include <cmath>

namespace floodcpf {

template <typename T>
Parameter<T> make_param(std::string name, const Shape& shape) {
  Parameter<T> p;
  p.name = std::move(name);
  p.value = Tensor<T>::zeros(shape);
  p.value.set_trainable(true);
  return p;
}

template <typename T>
void xavier_fill(Parameter<T>& p, i64 fan_in, i64 fan_out, u64 init_seed) {
  check(fan_in > 0 && fan_out > 0, "xavier_fill: fans must be positive");
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Rng rng = Rng(init_seed).split(fnv1a64(p.name.data(), p.name.size()));
  T* d = p.value.data();
  const i64 n = p.value.numel();
  for (i64 i = 0; i < n; ++i) d[i] = static_cast<T>(rng.uniform(-bound, bound));
}

template <typename T>
Conv2d<T>::Conv2d(const std::string& name, i64 in_ch, i64 out_ch, i64 k,
                  i64 pad, i64 stride, u64 init_seed, bool pairsum)
    : in_ch_(in_ch),
      out_ch_(out_ch),
      pad_(pad),
      stride_(stride),
      pairsum_(pairsum) {
  check(in_ch > 0 && out_ch > 0 && k > 0 && stride > 0 && pad >= 0,
        "Conv2d: bad geometry for " + name);
  check(!pairsum || in_ch % 2 == 0,
        "Conv2d: pairsum needs an even input-channel count for " + name);
  weight_ = make_param<T>(name + ".weight", Shape{out_ch, in_ch, k, k});
  bias_ = make_param<T>(name + ".bias", Shape{out_ch});
  xavier_fill(weight_, in_ch * k * k, out_ch * k * k, init_seed);
}

template <typename T>
Tensor<T> Conv2d<T>::forward(const Tensor<T>& x) const {
  return conv2d(x, weight_.value, bias_.value, pad_, stride_, pairsum_);
}

template <typename T>
void Conv2d<T>::collect(std::vector<Parameter<T>*>& out) {
  out.push_back(&weight_);
  out.push_back(&bias_);
}

template <typename T>
Linear<T>::Linear(const std::string& name, i64 in_dim, i64 out_dim,
                  u64 init_seed)
    : in_dim_(in_dim), out_dim_(out_dim) {
  check(in_dim > 0 && out_dim > 0, "Linear: bad dims for " + name);
  weight_ = make_param<T>(name + ".weight", Shape{out_dim, in_dim});
  bias_ = make_param<T>(name + ".bias", Shape{out_dim});
  xavier_fill(weight_, in_dim, out_dim, init_seed);
}

template <typename T>
Tensor<T> Linear<T>::forward(const Tensor<T>& x) const {
  return linear(x, weight_.value, bias_.value);
}

template <typename T>
void Linear<T>::collect(std::vector<Parameter<T>*>& out) {
  out.push_back(&weight_);
  out.push_back(&bias_);
}

template <typename T>
LayerNorm<T>::LayerNorm(const std::string& name, i64 channels) {
  check(channels > 0, "LayerNorm: bad channel count for " + name);
  gain_ = make_param<T>(name + ".gain", Shape{channels});
  offset_ = make_param<T>(name + ".offset", Shape{channels});
  T* g = gain_.value.data();
  for (i64 i = 0; i < channels; ++i) g[i] = T(1);
}

template <typename T>
Tensor<T> LayerNorm<T>::forward(const Tensor<T>& x) const {
  return layer_norm(x, gain_.value, offset_.value, static_cast<T>(kLayerNormEps));
}

template <typename T>
void LayerNorm<T>::collect(std::vector<Parameter<T>*>& out) {
  out.push_back(&gain_);
  out.push_back(&offset_);
}

template <typename T>
Mlp<T>::Mlp(const std::string& name, i64 dim, i64 hidden, u64 init_seed)
    : fc1_(name + ".fc1", dim, hidden, init_seed),
      fc2_(name + ".fc2", hidden, dim, init_seed) {}

template <typename T>
Tensor<T> Mlp<T>::forward(const Tensor<T>& x) const {
  return fc2_.forward(relu(fc1_.forward(x)));
}

template <typename T>
void Mlp<T>::collect(std::vector<Parameter<T>*>& out) {
  fc1_.collect(out);
  fc2_.collect(out);
}

#define FLOODCPF_LAYER_INSTANCES(T)                                          \
  template Parameter<T> make_param<T>(std::string, const Shape&);            \
  template void xavier_fill<T>(Parameter<T>&, i64, i64, u64);                \
  template class Conv2d<T>;                                                  \
  template class Linear<T>;                                                  \
  template class LayerNorm<T>;                                               \
  template class Mlp<T>;

FLOODCPF_LAYER_INSTANCES(float)
FLOODCPF_LAYER_INSTANCES(double)
#undef FLOODCPF_LAYER_INSTANCES

}  // namespace floodcpf
