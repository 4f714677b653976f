#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <string>
#include <vector>

#include "floodcpf/common.hpp"
#include "floodcpf/layers.hpp"
#include "floodcpf/rng.hpp"
#include "floodcpf/tensor.hpp"

using namespace floodcpf;

namespace {

Tensor<float> rand_t(const Shape& s, u64 seed, double lo = -1.0,
                     double hi = 1.0) {
  Rng rng(seed);
  Tensor<float> t = Tensor<float>::zeros(s);
  float* d = t.data();
  for (i64 i = 0; i < t.numel(); ++i)
    d[i] = static_cast<float>(rng.uniform(lo, hi));
  return t;
}

bool bits_equal(const Tensor<float>& a, const Tensor<float>& b) {
  return a.shape() == b.shape() &&
         std::memcmp(a.data(), b.data(),
                     sizeof(float) * static_cast<size_t>(a.numel())) == 0;
}

}  // namespace

TEST_CASE("make_param yields a zero trainable tensor with the given name") {
  Parameter<float> p = make_param<float>("m.weight", Shape{3, 2});
  CHECK(p.name == "m.weight");
  CHECK(p.value.shape() == Shape{3, 2});
  CHECK(p.value.trainable());
  for (i64 i = 0; i < p.value.numel(); ++i) CHECK(p.value.data()[i] == 0.0f);
  CHECK(p.m.empty());
  CHECK(p.v.empty());
}

TEST_CASE("xavier_fill respects the fan bound and is not degenerate") {
  Parameter<float> p = make_param<float>("c.weight", Shape{8, 4, 3, 3});
  const i64 fan_in = 4 * 9, fan_out = 8 * 9;
  xavier_fill(p, fan_in, fan_out, 42);
  const double bound = std::sqrt(6.0 / (fan_in + fan_out));
  double mean = 0.0;
  i64 nonzero = 0;
  for (i64 i = 0; i < p.value.numel(); ++i) {
    const double w = p.value.data()[i];
    CHECK(std::abs(w) <= bound);
    mean += w;
    if (w != 0.0) ++nonzero;
  }
  mean /= static_cast<double>(p.value.numel());
  CHECK(std::abs(mean) < 0.05);
  CHECK(nonzero == p.value.numel());
}

TEST_CASE("init streams are keyed by name and seed, not construction order") {
  Conv2d<float> a1("a", 3, 5, 3, 1, 1, 42);
  Conv2d<float> b1("b", 3, 5, 3, 1, 1, 42);
  // Reversed construction order must reproduce the same weights.
  Conv2d<float> b2("b", 3, 5, 3, 1, 1, 42);
  Conv2d<float> a2("a", 3, 5, 3, 1, 1, 42);
  CHECK(bits_equal(a1.weight().value, a2.weight().value));
  CHECK(bits_equal(b1.weight().value, b2.weight().value));
  CHECK_FALSE(bits_equal(a1.weight().value, b1.weight().value));
  Conv2d<float> a3("a", 3, 5, 3, 1, 1, 43);
  CHECK_FALSE(bits_equal(a1.weight().value, a3.weight().value));
}

TEST_CASE("Conv2d forwards through the conv op with zero-initialized bias") {
  Conv2d<float> conv("enc", 2, 4, 3, 1, 1, 7);
  for (i64 i = 0; i < conv.bias().value.numel(); ++i)
    CHECK(conv.bias().value.data()[i] == 0.0f);
  Tensor<float> x = rand_t(Shape{2, 2, 8, 8}, 11);
  Tensor<float> y = conv.forward(x);
  CHECK(y.shape() == Shape{2, 4, 8, 8});
  Tensor<float> ref =
      conv2d(x, conv.weight().value, conv.bias().value, 1, 1, false);
  CHECK(bits_equal(y, ref));
  Tensor<float> zeros_in = Tensor<float>::zeros(Shape{1, 2, 6, 6});
  Tensor<float> zeros_out = conv.forward(zeros_in);
  for (i64 i = 0; i < zeros_out.numel(); ++i)
    CHECK(zeros_out.data()[i] == 0.0f);
}

TEST_CASE("Conv2d rejects odd input channels in pairsum mode") {
  CHECK_THROWS(Conv2d<float>("p", 3, 4, 3, 1, 1, 1, true));
  CHECK_NOTHROW(Conv2d<float>("p", 4, 4, 3, 1, 1, 1, true));
}

TEST_CASE("Linear computes w x + b") {
  Linear<float> fc("fc", 2, 1, 5);
  fc.weight().value.data()[0] = 2.0f;
  fc.weight().value.data()[1] = 3.0f;
  fc.bias().value.data()[0] = -1.0f;
  Tensor<float> x = Tensor<float>::from_vec(Shape{1, 2}, {1.0f, 4.0f});
  Tensor<float> y = fc.forward(x);
  CHECK(y.shape() == Shape{1, 1});
  CHECK(y.data()[0] == doctest::Approx(13.0f));
}

TEST_CASE("LayerNorm starts as identity affine and wraps the norm op") {
  LayerNorm<float> norm("n", 5);
  for (i64 i = 0; i < 5; ++i) {
    CHECK(norm.gain().value.data()[i] == 1.0f);
    CHECK(norm.offset().value.data()[i] == 0.0f);
  }
  Tensor<float> x = rand_t(Shape{2, 5, 4, 4}, 3);
  Tensor<float> ref = layer_norm(x, norm.gain().value, norm.offset().value,
                                 static_cast<float>(kLayerNormEps));
  CHECK(bits_equal(norm.forward(x), ref));
}

TEST_CASE("Mlp is fc2(relu(fc1)) with the expected parameter layout") {
  Mlp<float> mlp("att.mlp", 8, 2, 21);
  CHECK(mlp.dim() == 8);
  CHECK(mlp.hidden() == 2);
  std::vector<Parameter<float>*> ps;
  mlp.collect(ps);
  REQUIRE(ps.size() == 4);
  CHECK(ps[0]->name == "att.mlp.fc1.weight");
  CHECK(ps[1]->name == "att.mlp.fc1.bias");
  CHECK(ps[2]->name == "att.mlp.fc2.weight");
  CHECK(ps[3]->name == "att.mlp.fc2.bias");
  Tensor<float> x = rand_t(Shape{3, 8}, 9);
  Tensor<float> ref = linear(relu(linear(x, ps[0]->value, ps[1]->value)),
                             ps[2]->value, ps[3]->value);
  CHECK(bits_equal(mlp.forward(x), ref));
}

TEST_CASE("Mlp with zeroed parameters maps everything to zero") {
  Mlp<float> mlp("z", 4, 2, 1);
  std::vector<Parameter<float>*> ps;
  mlp.collect(ps);
  for (Parameter<float>* p : ps)
    std::memset(p->value.data(), 0,
                sizeof(float) * static_cast<size_t>(p->value.numel()));
  Tensor<float> y = mlp.forward(rand_t(Shape{2, 4}, 13));
  for (i64 i = 0; i < y.numel(); ++i) CHECK(y.data()[i] == 0.0f);
}

TEST_CASE("layer parameters receive gradients through forward") {
  Conv2d<float> conv("g", 2, 3, 3, 1, 1, 17);
  Tensor<float> x = rand_t(Shape{1, 2, 6, 6}, 19);
  Tensor<float> w = rand_t(Shape{1, 3, 6, 6}, 23);
  Tensor<float> loss = sum_all(mul(conv.forward(x), w));
  backward(loss);
  std::vector<Parameter<float>*> ps;
  conv.collect(ps);
  for (Parameter<float>* p : ps) {
    const std::vector<float>& g = p->value.grad_vec();
    bool any = false;
    for (float v : g) any = any || v != 0.0f;
    CHECK_MESSAGE(any, p->name, " has an all-zero gradient");
  }
}

TEST_CASE("layer constructors reject bad geometry") {
  CHECK_THROWS(Linear<float>("bad", 0, 3, 1));
  CHECK_THROWS(Conv2d<float>("bad", 2, 0, 3, 1, 1, 1));
  CHECK_THROWS(LayerNorm<float>("bad", 0));
}
