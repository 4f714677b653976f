#pragma once

#include <string>
#include <vector>

#include "floodcpf/common.hpp"
#include "floodcpf/rng.hpp"
#include "floodcpf/tensor.hpp"

namespace floodcpf {

// Named trainable tensor plus optimizer moment buffers (sized lazily by the
// optimizer on first step).
template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  std::vector<T> m;
  std::vector<T> v;
};

// Zero-filled trainable parameter.
template <typename T>
Parameter<T> make_param(std::string name, const Shape& shape);

// Fills p.value with Xavier-uniform samples from a stream keyed by the
// parameter name, so initialization does not depend on construction order.
template <typename T>
void xavier_fill(Parameter<T>& p, i64 fan_in, i64 fan_out, u64 init_seed);

template <typename T>
class Conv2d {
 public:
  Conv2d(const std::string& name, i64 in_ch, i64 out_ch, i64 k, i64 pad,
         i64 stride, u64 init_seed, bool pairsum = false);

  Tensor<T> forward(const Tensor<T>& x) const;
  void collect(std::vector<Parameter<T>*>& out);

  i64 in_channels() const { return in_ch_; }
  i64 out_channels() const { return out_ch_; }
  Parameter<T>& weight() { return weight_; }
  Parameter<T>& bias() { return bias_; }

 private:
  i64 in_ch_ = 0;
  i64 out_ch_ = 0;
  i64 pad_ = 0;
  i64 stride_ = 1;
  bool pairsum_ = false;
  Parameter<T> weight_;
  Parameter<T> bias_;
};

template <typename T>
class Linear {
 public:
  Linear(const std::string& name, i64 in_dim, i64 out_dim, u64 init_seed);

  Tensor<T> forward(const Tensor<T>& x) const;
  void collect(std::vector<Parameter<T>*>& out);

  i64 in_dim() const { return in_dim_; }
  i64 out_dim() const { return out_dim_; }
  Parameter<T>& weight() { return weight_; }
  Parameter<T>& bias() { return bias_; }

 private:
  i64 in_dim_ = 0;
  i64 out_dim_ = 0;
  Parameter<T> weight_;
  Parameter<T> bias_;
};

inline constexpr double kLayerNormEps = 1e-5;

template <typename T>
class LayerNorm {
 public:
  LayerNorm(const std::string& name, i64 channels);

  Tensor<T> forward(const Tensor<T>& x) const;
  void collect(std::vector<Parameter<T>*>& out);

  Parameter<T>& gain() { return gain_; }
  Parameter<T>& offset() { return offset_; }

 private:
  Parameter<T> gain_;
  Parameter<T> offset_;
};

// linear -> relu -> linear, both ends of width dim.
template <typename T>
class Mlp {
 public:
  Mlp(const std::string& name, i64 dim, i64 hidden, u64 init_seed);

  Tensor<T> forward(const Tensor<T>& x) const;
  void collect(std::vector<Parameter<T>*>& out);

  i64 dim() const { return fc1_.in_dim(); }
  i64 hidden() const { return fc1_.out_dim(); }

 private:
  Linear<T> fc1_;
  Linear<T> fc2_;
};

}  // namespace floodcpf
