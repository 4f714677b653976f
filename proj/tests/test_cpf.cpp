#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <map>
#include <string>
#include <vector>

#include "floodcpf/common.hpp"
#include "floodcpf/cpf.hpp"
#include "floodcpf/rng.hpp"
#include "floodcpf/tensor.hpp"

using namespace floodcpf;

namespace {

template <typename T>
Tensor<T> rand_t(const Shape& s, u64 seed, double lo = -1.0, double hi = 1.0) {
  Rng rng(seed);
  Tensor<T> t = Tensor<T>::zeros(s);
  T* d = t.data();
  for (i64 i = 0; i < t.numel(); ++i)
    d[i] = static_cast<T>(rng.uniform(lo, hi));
  return t;
}

template <typename T>
bool bits_equal(const Tensor<T>& a, const Tensor<T>& b) {
  return a.shape() == b.shape() &&
         std::memcmp(a.data(), b.data(),
                     sizeof(T) * static_cast<size_t>(a.numel())) == 0;
}

// Weighted reduction; the weights are baked outside the autodiff graph.
template <typename T>
Tensor<T> loss_of(const Tensor<T>& t, u64 seed) {
  Tensor<T> w;
  {
    NoGrad ng;
    w = rand_t<T>(t.shape(), seed, 0.2, 1.0);
  }
  return sum_all(mul(t, w));
}

template <typename T, typename Module>
std::map<std::string, Parameter<T>*> param_map(Module& m) {
  std::vector<Parameter<T>*> ps;
  m.collect(ps);
  std::map<std::string, Parameter<T>*> out;
  for (Parameter<T>* p : ps) out[p->name] = p;
  return out;
}

template <typename T>
void zero_param(Parameter<T>* p) {
  std::memset(p->value.data(), 0,
              sizeof(T) * static_cast<size_t>(p->value.numel()));
}

}  // namespace

TEST_CASE("stem maps (B,1,H,W) to (B,C,H,W)") {
  StemConfig cfg;
  Stem<float> stem("stem_vv", cfg, 42);
  Tensor<float> x = rand_t<float>(Shape{2, 1, 32, 32}, 5);
  Tensor<float> y;
  {
    NoGrad ng;
    y = stem.forward(x);
  }
  CHECK(y.shape() == Shape{2, 16, 32, 32});
}

TEST_CASE("stem with zero biases sends the zero image to exact zeros") {
  Stem<float> stem("stem_vv", StemConfig{}, 42);
  Tensor<float> x = Tensor<float>::zeros(Shape{1, 1, 16, 16});
  NoGrad ng;
  Tensor<float> y = stem.forward(x);
  for (i64 i = 0; i < y.numel(); ++i) CHECK(y.data()[i] == 0.0f);
}

TEST_CASE("stem rejects multi-channel and non-rank-4 input") {
  Stem<float> stem("s", StemConfig{}, 1);
  CHECK_THROWS(stem.forward(Tensor<float>::zeros(Shape{1, 2, 8, 8})));
  CHECK_THROWS(stem.forward(Tensor<float>::zeros(Shape{1, 8, 8})));
  CHECK_THROWS(Stem<float>("s", StemConfig{1, 4, 4}, 1));
  CHECK_THROWS(Stem<float>("s", StemConfig{0, 4, 3}, 1));
}

TEST_CASE("perturbing the other stem leaves a stem's output bit-identical") {
  Stem<float> stem_vv("stem_vv", StemConfig{}, 42);
  Stem<float> stem_vh("stem_vh", StemConfig{}, 42);
  Tensor<float> x = rand_t<float>(Shape{1, 1, 16, 16}, 9);
  NoGrad ng;
  Tensor<float> before = stem_vv.forward(x);
  std::vector<Parameter<float>*> ps;
  stem_vh.collect(ps);
  for (Parameter<float>* p : ps)
    for (i64 i = 0; i < p->value.numel(); ++i) p->value.data()[i] += 0.37f;
  Tensor<float> after = stem_vv.forward(x);
  CHECK(bits_equal(before, after));
}

TEST_CASE("stem exposes depth x {conv weight, conv bias, gain, offset}") {
  Stem<float> stem("stem_vh", StemConfig{}, 3);
  std::vector<Parameter<float>*> ps;
  stem.collect(ps);
  REQUIRE(ps.size() == 8);
  CHECK(ps[0]->name == "stem_vh.conv0.weight");
  CHECK(ps[1]->name == "stem_vh.conv0.bias");
  CHECK(ps[2]->name == "stem_vh.norm0.gain");
  CHECK(ps[3]->name == "stem_vh.norm0.offset");
  CHECK(ps[4]->name == "stem_vh.conv1.weight");
  CHECK(ps[7]->name == "stem_vh.norm1.offset");
  CHECK(ps[0]->value.shape() == Shape{16, 1, 3, 3});
  CHECK(ps[4]->value.shape() == Shape{16, 16, 3, 3});
}

TEST_CASE("spatial attention with zero weights is a uniform 0.5 map") {
  SpatialAttention<float> sa("sa", 7, 77);
  std::vector<Parameter<float>*> ps;
  sa.collect(ps);
  for (Parameter<float>* p : ps) zero_param(p);
  NoGrad ng;
  Tensor<float> m = sa.forward(rand_t<float>(Shape{2, 5, 9, 9}, 8, -3.0, 3.0));
  CHECK(m.shape() == Shape{2, 1, 9, 9});
  for (i64 i = 0; i < m.numel(); ++i) CHECK(m.data()[i] == 0.5f);
}

TEST_CASE("spatial attention stays strictly inside (0,1) for wild inputs") {
  SpatialAttention<float> sa("sa", 5, 3);
  NoGrad ng;
  Tensor<float> m =
      sa.forward(rand_t<float>(Shape{1, 4, 8, 8}, 2, -40.0, 40.0));
  for (i64 i = 0; i < m.numel(); ++i) {
    CHECK(m.data()[i] > 0.0f);
    CHECK(m.data()[i] < 1.0f);
  }
}

TEST_CASE("circularly shifted input shifts the attention map in the interior") {
  const i64 C = 3, H = 20, W = 20, k = 7, pad = (k - 1) / 2;
  const i64 dy = 3, dx = 5;
  SpatialAttention<float> sa("sa", k, 12345);
  Tensor<float> x = rand_t<float>(Shape{1, C, H, W}, 31);
  Tensor<float> xs = Tensor<float>::zeros(Shape{1, C, H, W});
  for (i64 c = 0; c < C; ++c)
    for (i64 y = 0; y < H; ++y)
      for (i64 w = 0; w < W; ++w)
        xs.data()[(c * H + y) * W + w] =
            x.data()[(c * H + (y - dy + H) % H) * W + (w - dx + W) % W];
  NoGrad ng;
  Tensor<float> a = sa.forward(x);
  Tensor<float> b = sa.forward(xs);
  i64 compared = 0;
  // Interior pixels whose conv window avoids both the padding ring and the
  // wrap-around seam on each side of the comparison.
  for (i64 y = pad + dy; y < H - pad; ++y)
    for (i64 w = pad + dx; w < W - pad; ++w) {
      const float shifted = b.data()[y * W + w];
      const float orig = a.data()[(y - dy) * W + (w - dx)];
      CHECK(shifted == orig);
      ++compared;
    }
  CHECK(compared == (H - 2 * pad - dy) * (W - 2 * pad - dx));
}

TEST_CASE("channel attention with zero mlp is exactly 0.5 everywhere") {
  ChannelAttention<float> ca("ca", 8, 4, 5);
  std::vector<Parameter<float>*> ps;
  ca.collect(ps);
  REQUIRE(ps.size() == 4);  // one shared mlp, not one per pooled vector
  CHECK(ps[0]->name == "ca.mlp.fc1.weight");
  for (Parameter<float>* p : ps) zero_param(p);
  NoGrad ng;
  Tensor<float> w = ca.forward(rand_t<float>(Shape{3, 8, 6, 6}, 4));
  CHECK(w.shape() == Shape{3, 8});
  for (i64 i = 0; i < w.numel(); ++i) CHECK(w.data()[i] == 0.5f);
}

TEST_CASE("channel attention is bit-invariant to spatial shuffling") {
  const i64 B = 2, C = 6, H = 5, W = 5;
  ChannelAttention<float> ca("ca", C, 2, 9);
  Tensor<float> x = rand_t<float>(Shape{B, C, H, W}, 21);
  Tensor<float> xp = Tensor<float>::zeros(Shape{B, C, H, W});
  Rng rng(777);
  for (i64 nc = 0; nc < B * C; ++nc) {
    std::vector<i64> perm(static_cast<size_t>(H * W));
    for (i64 i = 0; i < H * W; ++i) perm[static_cast<size_t>(i)] = i;
    for (i64 i = H * W - 1; i > 0; --i) {
      const i64 j = static_cast<i64>(rng.uniform_int(static_cast<u64>(i + 1)));
      std::swap(perm[static_cast<size_t>(i)], perm[static_cast<size_t>(j)]);
    }
    for (i64 i = 0; i < H * W; ++i)
      xp.data()[nc * H * W + i] =
          x.data()[nc * H * W + perm[static_cast<size_t>(i)]];
  }
  NoGrad ng;
  CHECK(bits_equal(ca.forward(x), ca.forward(xp)));
}

TEST_CASE("channel attention validates widths") {
  CHECK_THROWS(ChannelAttention<float>("ca", 6, 4, 1));
  ChannelAttention<float> ca("ca", 8, 4, 1);
  CHECK_THROWS(ca.forward(Tensor<float>::zeros(Shape{1, 6, 4, 4})));
}

TEST_CASE("cpf_fuse produces (B, C_f, H, W) and rejects mismatched maps") {
  CpfConfig cfg;
  cfg.channels = 8;
  cfg.out_channels = 12;
  cfg.reduction = 4;
  cfg.sa_kernel = 7;
  Cpf<float> cpf(cfg, 42);
  Tensor<float> a = rand_t<float>(Shape{2, 8, 12, 12}, 1);
  Tensor<float> b = rand_t<float>(Shape{2, 8, 12, 12}, 2);
  NoGrad ng;
  CHECK(cpf.fuse(a, b).shape() == Shape{2, 12, 12, 12});
  CHECK_THROWS(cpf.fuse(a, rand_t<float>(Shape{2, 8, 12, 10}, 3)));
  CHECK_THROWS(cpf.fuse(rand_t<float>(Shape{2, 4, 12, 12}, 4),
                        rand_t<float>(Shape{2, 4, 12, 12}, 5)));
}

TEST_CASE("zeroed attention plus zero VH reduces to conv of [0.25 vv || 0]") {
  CpfConfig cfg;
  cfg.channels = 4;
  cfg.out_channels = 5;
  cfg.reduction = 4;
  cfg.sa_kernel = 7;
  Cpf<float> cpf(cfg, 11);
  auto pm = param_map<float>(cpf);
  for (auto& [name, p] : pm)
    if (name.rfind("cpf.sa_", 0) == 0 || name.rfind("cpf.ca_", 0) == 0)
      zero_param(p);
  Tensor<float> f_vv = rand_t<float>(Shape{1, 4, 8, 8}, 6, 0.1, 1.0);
  Tensor<float> f_vh = Tensor<float>::zeros(Shape{1, 4, 8, 8});
  NoGrad ng;
  Tensor<float> got = cpf.fuse(f_vv, f_vh);
  Tensor<float> quarter = affine(f_vv, 0.25f, 0.0f);
  Tensor<float> expected =
      conv2d(concat_channels(quarter, f_vh), pm.at("cpf.fuse_conv.weight")->value,
             pm.at("cpf.fuse_conv.bias")->value, 1, 1, true);
  CHECK(bits_equal(got, expected));
}

TEST_CASE("swapping branches, direction weights, and kernel halves is exact") {
  CpfConfig cfg;
  cfg.channels = 4;
  cfg.out_channels = 6;
  cfg.reduction = 2;
  cfg.sa_kernel = 5;
  Cpf<float> a(cfg, 7);
  Cpf<float> b(cfg, 8);
  auto ma = param_map<float>(a);
  auto mb = param_map<float>(b);
  for (auto& [name, pa] : ma) {
    std::string tgt = name;
    if (auto pos = tgt.find("vv2vh"); pos != std::string::npos)
      tgt.replace(pos, 5, "vh2vv");
    else if (auto pos2 = tgt.find("vh2vv"); pos2 != std::string::npos)
      tgt.replace(pos2, 5, "vv2vh");
    Parameter<float>* pb = mb.at(tgt);
    REQUIRE(pb->value.numel() == pa->value.numel());
    std::memcpy(pb->value.data(), pa->value.data(),
                sizeof(float) * static_cast<size_t>(pa->value.numel()));
  }
  // Swap the fusion kernel's input-channel halves in b.
  Parameter<float>* fw = mb.at("cpf.fuse_conv.weight");
  const i64 cf = cfg.out_channels, c = cfg.channels, kk = 9;
  for (i64 co = 0; co < cf; ++co)
    for (i64 ci = 0; ci < c; ++ci)
      for (i64 t = 0; t < kk; ++t)
        std::swap(fw->value.data()[(co * 2 * c + ci) * kk + t],
                  fw->value.data()[(co * 2 * c + ci + c) * kk + t]);
  Tensor<float> x = rand_t<float>(Shape{2, 4, 10, 10}, 51);
  Tensor<float> y = rand_t<float>(Shape{2, 4, 10, 10}, 52);
  NoGrad ng;
  CHECK(bits_equal(a.fuse(x, y), b.fuse(y, x)));
}

TEST_CASE("fused output depends on the VH branch") {
  CpfConfig cfg;
  cfg.channels = 4;
  cfg.out_channels = 4;
  cfg.reduction = 4;
  cfg.sa_kernel = 7;
  Cpf<float> cpf(cfg, 11);
  Tensor<float> f_vv = rand_t<float>(Shape{1, 4, 8, 8}, 61, 0.2, 1.0);
  Tensor<float> f_vh = rand_t<float>(Shape{1, 4, 8, 8}, 62, 0.2, 1.0);
  NoGrad ng;
  Tensor<float> with = cpf.fuse(f_vv, f_vh);
  Tensor<float> without = cpf.fuse(f_vv, Tensor<float>::zeros(f_vh.shape()));
  double max_diff = 0.0;
  for (i64 i = 0; i < with.numel(); ++i)
    max_diff = std::max(
        max_diff, std::abs(static_cast<double>(with.data()[i]) -
                           static_cast<double>(without.data()[i])));
  CHECK(max_diff >= 1e-6);
}

TEST_CASE("cpf_fuse passes grad_check on a 1x4x6x6 pair") {
  CpfConfig cfg;
  cfg.channels = 4;
  cfg.out_channels = 4;
  cfg.reduction = 4;
  cfg.sa_kernel = 7;
  Cpf<double> cpf(cfg, 13);
  Tensor<double> f_vv = rand_t<double>(Shape{1, 4, 6, 6}, 71, 0.1, 1.0);
  Tensor<double> f_vh = rand_t<double>(Shape{1, 4, 6, 6}, 72, 0.1, 1.0);
  f_vv.set_trainable(true);
  f_vh.set_trainable(true);
  std::vector<Tensor<double>> inputs{f_vv, f_vh};
  std::vector<Parameter<double>*> ps;
  cpf.collect(ps);
  for (Parameter<double>* p : ps) inputs.push_back(p->value);
  GradCheckResult r = grad_check(
      [&]() { return loss_of(cpf.fuse(f_vv, f_vh), 321); }, inputs, 1e-5,
      1e-4, 48, 99);
  CHECK_MESSAGE(r.ok, r.detail);
}

TEST_CASE("every cpf parameter receives gradient through fuse") {
  CpfConfig cfg;
  cfg.channels = 4;
  cfg.out_channels = 4;
  cfg.reduction = 2;
  cfg.sa_kernel = 5;
  Cpf<float> cpf(cfg, 15);
  Tensor<float> x = rand_t<float>(Shape{2, 4, 8, 8}, 81, 0.2, 1.0);
  Tensor<float> y = rand_t<float>(Shape{2, 4, 8, 8}, 82, 0.2, 1.0);
  Tensor<float> loss = loss_of(cpf.fuse(x, y), 83);
  backward(loss);
  std::vector<Parameter<float>*> ps;
  cpf.collect(ps);
  REQUIRE(ps.size() == 14);
  for (Parameter<float>* p : ps) {
    const std::vector<float>& g = p->value.grad_vec();
    bool any = false;
    for (float v : g) any = any || v != 0.0f;
    CHECK_MESSAGE(any, p->name, " has an all-zero gradient");
  }
}

TEST_CASE("self wiring reuses the weight layout but changes the gating") {
  CpfConfig cross_cfg;
  cross_cfg.channels = 4;
  cross_cfg.out_channels = 4;
  cross_cfg.reduction = 4;
  cross_cfg.sa_kernel = 5;
  CpfConfig self_cfg = cross_cfg;
  self_cfg.wiring = CpfWiring::self;
  Cpf<float> crossed(cross_cfg, 23);
  Cpf<float> selfed(self_cfg, 23);
  Tensor<float> x = rand_t<float>(Shape{1, 4, 8, 8}, 91, 0.2, 1.0);
  Tensor<float> y = rand_t<float>(Shape{1, 4, 8, 8}, 92, 0.2, 1.0);
  NoGrad ng;
  Tensor<float> oc = crossed.fuse(x, y);
  Tensor<float> os = selfed.fuse(x, y);
  double max_diff = 0.0;
  for (i64 i = 0; i < oc.numel(); ++i)
    max_diff = std::max(max_diff,
                        std::abs(static_cast<double>(oc.data()[i]) -
                                 static_cast<double>(os.data()[i])));
  CHECK(max_diff > 1e-6);
  // Equal branches make the two wirings read the same gate source.
  CHECK(bits_equal(crossed.fuse(x, x), selfed.fuse(x, x)));
}

TEST_CASE("wiring names round-trip") {
  CHECK(parse_wiring("cross") == CpfWiring::cross);
  CHECK(parse_wiring("self") == CpfWiring::self);
  CHECK(wiring_name(CpfWiring::self) == "self");
  CHECK_THROWS(parse_wiring("twisted"));
}
