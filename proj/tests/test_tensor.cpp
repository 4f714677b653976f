#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <sstream>
#include <vector>

#include "floodcpf/rng.hpp"
#include "floodcpf/tensor.hpp"

using namespace floodcpf;

namespace {

template <typename T>
Tensor<T> rand_tensor(Rng& rng, const Shape& s, T lo, T hi) {
    std::vector<T> v(static_cast<std::size_t>(numel(s)));
    for (auto& x : v) x = static_cast<T>(rng.uniform(lo, hi));
    return Tensor<T>::from_vec(s, std::move(v));
}

// Evenly spaced values in shuffled order: all pairwise gaps far exceed the
// finite-difference step, so argmax-based ops cannot flip under perturbation.
template <typename T>
Tensor<T> distinct_tensor(Rng& rng, const Shape& s, T lo, T hi) {
    const i64 n = numel(s);
    std::vector<T> v(static_cast<std::size_t>(n));
    for (i64 i = 0; i < n; ++i)
        v[static_cast<std::size_t>(i)] =
            lo + (hi - lo) * static_cast<T>(i) / static_cast<T>(n > 1 ? n - 1 : 1);
    for (i64 i = n - 1; i > 0; --i) {
        const i64 j = static_cast<i64>(rng.uniform_int(static_cast<u64>(i + 1)));
        std::swap(v[static_cast<std::size_t>(i)], v[static_cast<std::size_t>(j)]);
    }
    return Tensor<T>::from_vec(s, std::move(v));
}

// Uniform values rejected near the listed kinks, keeping central differences
// on one side of every non-smooth point.
template <typename T>
Tensor<T> rand_away_from(Rng& rng, const Shape& s, std::vector<T> kinks, T margin) {
    std::vector<T> v(static_cast<std::size_t>(numel(s)));
    for (auto& x : v) {
        for (;;) {
            const T c = static_cast<T>(rng.uniform(-1.0, 1.0));
            bool ok = true;
            for (T kk : kinks)
                if (std::abs(c - kk) < margin) ok = false;
            if (ok) {
                x = c;
                break;
            }
        }
    }
    return Tensor<T>::from_vec(s, std::move(v));
}

// Scalar loss with per-element weights so the incoming grad field varies.
Tensor<double> weighted_sum(const Tensor<double>& t, u64 seed) {
    Rng rng(seed);
    Tensor<double> w = rand_tensor<double>(rng, t.shape(), 0.1, 1.0);
    return sum_all(mul(t, w));
}

}  // namespace

TEST_CASE("conv2d matches hand-computed values") {
    // 3x3 input, 2x2 kernel [[1,0],[0,2]], bias 0.5, valid placement.
    auto x = Tensor<float>::from_vec({1, 1, 3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
    auto k = Tensor<float>::from_vec({1, 1, 2, 2}, {1, 0, 0, 2});
    auto b = Tensor<float>::from_vec({1}, {0.5f});
    auto y = conv2d(x, k, b, 0, 1);
    REQUIRE(y.shape() == Shape{1, 1, 2, 2});
    CHECK(y.data()[0] == doctest::Approx(11.5));
    CHECK(y.data()[1] == doctest::Approx(14.5));
    CHECK(y.data()[2] == doctest::Approx(20.5));
    CHECK(y.data()[3] == doctest::Approx(23.5));

    // Same input, all-ones 3x3 kernel, pad 1: each output is a box sum.
    auto k1 = Tensor<float>::full({1, 1, 3, 3}, 1.0f);
    auto y1 = conv2d(x, k1, Tensor<float>(), 1, 1);
    const float box[9] = {12, 21, 16, 27, 45, 33, 24, 39, 28};
    REQUIRE(y1.shape() == Shape{1, 1, 3, 3});
    for (int i = 0; i < 9; ++i) CHECK(y1.data()[i] == doctest::Approx(box[i]));

    // Stride 2 with pad 1 and the 2x2 kernel.
    auto y2 = conv2d(x, k, Tensor<float>(), 1, 2);
    REQUIRE(y2.shape() == Shape{1, 1, 2, 2});
    CHECK(y2.data()[0] == doctest::Approx(2));
    CHECK(y2.data()[1] == doctest::Approx(6));
    CHECK(y2.data()[2] == doctest::Approx(14));
    CHECK(y2.data()[3] == doctest::Approx(23));

    // Two input channels mixed by a 1x1 kernel [2,3], bias -1.
    auto x2 = Tensor<float>::from_vec({1, 2, 2, 2}, {1, 2, 3, 4, 10, 20, 30, 40});
    auto k2 = Tensor<float>::from_vec({1, 2, 1, 1}, {2, 3});
    auto b2 = Tensor<float>::from_vec({1}, {-1.0f});
    auto y3 = conv2d(x2, k2, b2, 0, 1);
    const float mix[4] = {31, 63, 95, 127};
    for (int i = 0; i < 4; ++i) CHECK(y3.data()[i] == doctest::Approx(mix[i]));
}

TEST_CASE("conv2d rejects malformed geometry") {
    auto x = Tensor<float>::zeros({1, 2, 4, 4});
    CHECK_THROWS(conv2d(x, Tensor<float>::zeros({1, 3, 3, 3}), Tensor<float>(), 1, 1));
    CHECK_THROWS(conv2d(x, Tensor<float>::zeros({1, 2, 3, 2}), Tensor<float>(), 1, 1));
    CHECK_THROWS(conv2d(x, Tensor<float>::zeros({1, 2, 7, 7}), Tensor<float>(), 1, 1));
    CHECK_THROWS(conv2d(x, Tensor<float>::zeros({1, 2, 3, 3}), Tensor<float>::zeros({2}), 1, 1));
}

TEST_CASE("broadcast add/mul match a naive loop") {
    Rng rng(11);
    auto a = rand_tensor<double>(rng, {2, 3, 4}, -1, 1);
    auto b = rand_tensor<double>(rng, {3, 1}, -1, 1);
    auto s = add(a, b);
    auto m = mul(a, b);
    REQUIRE(s.shape() == Shape{2, 3, 4});
    for (i64 i = 0; i < 2; ++i)
        for (i64 j = 0; j < 3; ++j)
            for (i64 l = 0; l < 4; ++l) {
                const double av = a.data()[(i * 3 + j) * 4 + l];
                const double bv = b.data()[j];
                CHECK(s.data()[(i * 3 + j) * 4 + l] == doctest::Approx(av + bv));
                CHECK(m.data()[(i * 3 + j) * 4 + l] == doctest::Approx(av * bv));
            }
}

TEST_CASE("broadcast grads reduce with the right multiplicity") {
    auto a = Tensor<double>::full({3, 1}, 1.0);
    auto b = Tensor<double>::full({1, 4}, 2.0);
    a.set_trainable(true);
    b.set_trainable(true);
    auto loss = sum_all(add(a, b));
    backward(loss);
    for (int i = 0; i < 3; ++i) CHECK(a.grad_vec()[i] == doctest::Approx(4.0));
    for (int j = 0; j < 4; ++j) CHECK(b.grad_vec()[j] == doctest::Approx(3.0));
}

TEST_CASE("shared subexpression accumulates grad once per use") {
    auto x = Tensor<double>::from_vec({3}, {1.0, 2.0, 3.0});
    x.set_trainable(true);
    auto loss = sum_all(add(mul(x, x), x));  // d/dx = 2x + 1
    backward(loss);
    CHECK(x.grad_vec()[0] == doctest::Approx(3.0));
    CHECK(x.grad_vec()[1] == doctest::Approx(5.0));
    CHECK(x.grad_vec()[2] == doctest::Approx(7.0));
}

TEST_CASE("backward twice exactly doubles trainable-leaf grads") {
    // Single consumer of x: the leaf then gets exactly one accumulation per
    // backward, making the doubling bit-exact.
    Rng rng(4);
    auto x = rand_tensor<double>(rng, {2, 5}, -1, 1);
    auto c = rand_tensor<double>(rng, {2, 5}, 0.5, 1.5);
    x.set_trainable(true);
    auto f = [&] { return sum_all(mul(sigmoid(x), c)); };
    auto l1 = f();
    backward(l1);
    const std::vector<double> g1 = x.grad_vec();
    auto l2 = f();
    backward(l2);
    for (std::size_t i = 0; i < g1.size(); ++i) CHECK(x.grad_vec()[i] == 2.0 * g1[i]);
}

TEST_CASE("NoGrad builds no graph") {
    auto x = Tensor<double>::full({2, 2}, 1.5);
    x.set_trainable(true);
    NoGrad ng;
    auto y = sum_all(relu(x));
    CHECK(y.item() == doctest::Approx(6.0));
    CHECK_THROWS(backward(y));
}

TEST_CASE("backward requires scalar root") {
    auto x = Tensor<double>::full({2, 2}, 1.0);
    x.set_trainable(true);
    auto y = relu(x);
    CHECK_THROWS(backward(y));
}

TEST_CASE("sigmoid output stays strictly inside (0,1) in float") {
    auto x = Tensor<float>::from_vec({7}, {-1000.f, -100.f, -20.f, 0.f, 20.f, 100.f, 1000.f});
    auto s = sigmoid(x);
    for (int i = 0; i < 7; ++i) {
        CHECK(s.data()[i] > 0.0f);
        CHECK(s.data()[i] < 1.0f);
    }
}

TEST_CASE("grad: elementwise binaries with broadcasting") {
    Rng rng(21);
    auto a = rand_tensor<double>(rng, {2, 3, 4}, -1, 1);
    auto b = rand_tensor<double>(rng, {3, 1}, -1, 1);
    auto c = rand_tensor<double>(rng, {2, 3, 4}, 0.5, 1.5);
    a.set_trainable(true);
    b.set_trainable(true);
    c.set_trainable(true);

    auto fadd = [&] { return weighted_sum(add(a, b), 1); };
    auto radd = grad_check(fadd, {a, b});
    CHECK_MESSAGE(radd.ok, radd.detail);

    auto fsub = [&] { return weighted_sum(sub(a, b), 2); };
    auto rsub = grad_check(fsub, {a, b});
    CHECK_MESSAGE(rsub.ok, rsub.detail);

    auto fmul = [&] { return weighted_sum(mul(a, b), 3); };
    auto rmul = grad_check(fmul, {a, b});
    CHECK_MESSAGE(rmul.ok, rmul.detail);

    auto fdiv = [&] { return weighted_sum(divide(a, c), 4); };
    auto rdiv = grad_check(fdiv, {a, c});
    CHECK_MESSAGE(rdiv.ok, rdiv.detail);
}

TEST_CASE("grad: unaries and affine") {
    Rng rng(22);
    auto x = rand_tensor<double>(rng, {3, 5}, -1, 1);
    x.set_trainable(true);

    auto fexp = [&] { return weighted_sum(exp(x), 5); };
    auto r1 = grad_check(fexp, {x});
    CHECK_MESSAGE(r1.ok, r1.detail);

    auto fsig = [&] { return weighted_sum(sigmoid(x), 6); };
    auto r2 = grad_check(fsig, {x});
    CHECK_MESSAGE(r2.ok, r2.detail);

    auto faff = [&] { return weighted_sum(affine(x, 2.5, -0.75), 7); };
    auto r3 = grad_check(faff, {x});
    CHECK_MESSAGE(r3.ok, r3.detail);

    auto xp = rand_tensor<double>(rng, {3, 5}, 0.2, 3.0);
    xp.set_trainable(true);
    auto flog = [&] { return weighted_sum(log(xp), 8); };
    auto r4 = grad_check(flog, {xp});
    CHECK_MESSAGE(r4.ok, r4.detail);

    auto xr = rand_away_from<double>(rng, {3, 5}, {0.0}, 0.05);
    xr.set_trainable(true);
    auto frelu = [&] { return weighted_sum(relu(xr), 9); };
    auto r5 = grad_check(frelu, {xr});
    CHECK_MESSAGE(r5.ok, r5.detail);

    auto xc = rand_away_from<double>(rng, {4, 4}, {-0.5, 0.5}, 0.05);
    xc.set_trainable(true);
    auto fclamp = [&] { return weighted_sum(clamp(xc, -0.5, 0.5), 10); };
    auto r6 = grad_check(fclamp, {xc});
    CHECK_MESSAGE(r6.ok, r6.detail);
}

TEST_CASE("grad: reshape and sum_all") {
    Rng rng(23);
    auto x = rand_tensor<double>(rng, {2, 6}, -1, 1);
    x.set_trainable(true);
    auto f = [&] { return weighted_sum(reshape(x, {3, 4}), 11); };
    auto r = grad_check(f, {x});
    CHECK_MESSAGE(r.ok, r.detail);

    auto fs = [&] { return sum_all(x); };
    auto rs = grad_check(fs, {x});
    CHECK_MESSAGE(rs.ok, rs.detail);
}

TEST_CASE("grad: conv2d dense and strided and pairsum") {
    Rng rng(24);
    auto x = rand_tensor<double>(rng, {2, 3, 6, 5}, -1, 1);
    auto k = rand_tensor<double>(rng, {4, 3, 3, 3}, -0.5, 0.5);
    auto b = rand_tensor<double>(rng, {4}, -0.5, 0.5);
    x.set_trainable(true);
    k.set_trainable(true);
    b.set_trainable(true);
    auto f = [&] { return weighted_sum(conv2d(x, k, b, 1, 1), 12); };
    auto r = grad_check(f, {x, k, b});
    CHECK_MESSAGE(r.ok, r.detail);

    auto fs = [&] { return weighted_sum(conv2d(x, k, b, 1, 2), 13); };
    auto rs = grad_check(fs, {x, k, b});
    CHECK_MESSAGE(rs.ok, rs.detail);

    auto xp = rand_tensor<double>(rng, {2, 4, 5, 5}, -1, 1);
    auto kp = rand_tensor<double>(rng, {3, 4, 3, 3}, -0.5, 0.5);
    auto bp = rand_tensor<double>(rng, {3}, -0.5, 0.5);
    xp.set_trainable(true);
    kp.set_trainable(true);
    bp.set_trainable(true);
    auto fp = [&] { return weighted_sum(conv2d(xp, kp, bp, 1, 1, true), 14); };
    auto rp = grad_check(fp, {xp, kp, bp});
    CHECK_MESSAGE(rp.ok, rp.detail);
}

TEST_CASE("grad: linear") {
    Rng rng(25);
    auto x = rand_tensor<double>(rng, {3, 5}, -1, 1);
    auto w = rand_tensor<double>(rng, {4, 5}, -0.5, 0.5);
    auto b = rand_tensor<double>(rng, {4}, -0.5, 0.5);
    x.set_trainable(true);
    w.set_trainable(true);
    b.set_trainable(true);
    auto f = [&] { return weighted_sum(linear(x, w, b), 15); };
    auto r = grad_check(f, {x, w, b});
    CHECK_MESSAGE(r.ok, r.detail);
}

TEST_CASE("grad: pooling and resampling") {
    Rng rng(26);
    auto x = distinct_tensor<double>(rng, {2, 3, 4, 4}, -1.0, 1.0);
    x.set_trainable(true);

    auto fmp = [&] { return weighted_sum(max_pool2(x), 16); };
    auto r1 = grad_check(fmp, {x});
    CHECK_MESSAGE(r1.ok, r1.detail);

    auto fup = [&] { return weighted_sum(upsample2(x), 17); };
    auto r2 = grad_check(fup, {x});
    CHECK_MESSAGE(r2.ok, r2.detail);

    auto fav = [&] { return weighted_sum(global_avg_pool(x), 18); };
    auto r3 = grad_check(fav, {x});
    CHECK_MESSAGE(r3.ok, r3.detail);

    auto fgm = [&] { return weighted_sum(global_max_pool(x), 19); };
    auto r4 = grad_check(fgm, {x});
    CHECK_MESSAGE(r4.ok, r4.detail);

    auto fcm = [&] { return weighted_sum(channel_mean_max(x), 20); };
    auto r5 = grad_check(fcm, {x});
    CHECK_MESSAGE(r5.ok, r5.detail);
}

TEST_CASE("grad: concat and slice") {
    Rng rng(27);
    auto a = rand_tensor<double>(rng, {2, 3, 4, 4}, -1, 1);
    auto b = rand_tensor<double>(rng, {2, 2, 4, 4}, -1, 1);
    a.set_trainable(true);
    b.set_trainable(true);
    auto f = [&] { return weighted_sum(concat_channels(a, b), 21); };
    auto r = grad_check(f, {a, b});
    CHECK_MESSAGE(r.ok, r.detail);

    auto fs = [&] { return weighted_sum(slice_channels(a, 1, 3), 22); };
    auto rs = grad_check(fs, {a});
    CHECK_MESSAGE(rs.ok, rs.detail);
}

TEST_CASE("grad: layer_norm") {
    Rng rng(28);
    auto x = rand_tensor<double>(rng, {2, 3, 4, 4}, -1, 1);
    auto gain = rand_tensor<double>(rng, {3}, 0.5, 1.5);
    auto offset = rand_tensor<double>(rng, {3}, -0.5, 0.5);
    x.set_trainable(true);
    gain.set_trainable(true);
    offset.set_trainable(true);
    auto f = [&] { return weighted_sum(layer_norm(x, gain, offset, 1e-5), 23); };
    auto r = grad_check(f, {x, gain, offset});
    CHECK_MESSAGE(r.ok, r.detail);
}

TEST_CASE("grad: composite attention-shaped graph") {
    Rng rng(29);
    auto x = distinct_tensor<double>(rng, {2, 4, 4, 4}, -1.0, 1.0);
    auto k = rand_tensor<double>(rng, {4, 4, 1, 1}, -0.5, 0.5);
    x.set_trainable(true);
    k.set_trainable(true);
    auto f = [&] {
        auto feat = conv2d(x, k, Tensor<double>(), 0, 1);
        auto gate = sigmoid(reshape(global_avg_pool(feat), {2, 4, 1, 1}));
        return weighted_sum(mul(feat, gate), 24);
    };
    auto r = grad_check(f, {x, k});
    CHECK_MESSAGE(r.ok, r.detail);
}

TEST_CASE("layer_norm output is normalized per sample") {
    Rng rng(30);
    auto x = rand_tensor<double>(rng, {3, 2, 4, 4}, -2, 5);
    auto gain = Tensor<double>::full({2}, 1.0);
    auto offset = Tensor<double>::zeros({2});
    auto y = layer_norm(x, gain, offset, 1e-9);
    const i64 m = 2 * 4 * 4;
    for (i64 n = 0; n < 3; ++n) {
        double s = 0, s2 = 0;
        for (i64 i = 0; i < m; ++i) {
            const double v = y.data()[n * m + i];
            s += v;
            s2 += v * v;
        }
        CHECK(std::abs(s / m) < 1e-9);
        CHECK(s2 / m == doctest::Approx(1.0).epsilon(1e-6));
    }
}

TEST_CASE("tensor snapshot roundtrips byte-exactly") {
    Rng rng(31);
    auto t = rand_tensor<float>(rng, {2, 3, 5}, -10, 10);
    std::stringstream ss;
    save_tensor(ss, t);
    auto back = load_tensor<float>(ss);
    REQUIRE(back.shape() == t.shape());
    CHECK(std::memcmp(back.data(), t.data(), sizeof(float) * t.numel()) == 0);

    std::stringstream s2;
    save_tensor(s2, t);
    CHECK_THROWS(load_tensor<double>(s2));

    std::stringstream s3;
    s3 << "TNSR v1 f32 2 2 3\nxx";
    CHECK_THROWS(load_tensor<float>(s3));
}
