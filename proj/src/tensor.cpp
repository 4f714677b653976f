#include "floodcpf/tensor.hpp"

#include <algorithm>
#include <istream>
#include <ostream>
#include <sstream>
#include <unordered_set>
#include <utility>

#include "floodcpf/rng.hpp"

namespace floodcpf {

namespace {

thread_local bool g_grad_enabled = true;

template <typename T>
std::shared_ptr<Node<T>> fresh(Shape s) {
    auto n = std::make_shared<Node<T>>();
    n->shape = std::move(s);
    n->value.resize(static_cast<std::size_t>(numel(n->shape)));
    return n;
}

// Registers parents on the output and reports whether a backprop closure is
// needed. Parents are kept even when they need no grad themselves: closures
// read their values.
template <typename T>
bool wire(const std::shared_ptr<Node<T>>& out,
          std::initializer_list<std::shared_ptr<Node<T>>> ps) {
    if (!g_grad_enabled) return false;
    bool any = false;
    for (const auto& p : ps)
        if (p && p->needs_grad) any = true;
    if (!any) return false;
    out->needs_grad = true;
    for (const auto& p : ps)
        if (p) out->parents.push_back(p);
    return true;
}

struct BinPlans {
    kern::BcPlan fw;  // forward: operands a, b
    kern::BcPlan ga;  // grad-side: operands g (contiguous), b
    kern::BcPlan gb;  // grad-side: operands g (contiguous), a
    kern::BcPlan gg;  // grad-side: operands g, output (both contiguous)
    kern::RedPlan ra, rb;
};

BinPlans make_bin_plans(const Shape& as, const Shape& bs, Shape& os) {
    const int r = static_cast<int>(std::max(as.size(), bs.size()));
    check(r >= 1 && r <= kern::kMaxRank, "broadcast: rank out of range");
    i64 ae[kern::kMaxRank], be[kern::kMaxRank], oe[kern::kMaxRank];
    for (int d = 0; d < r; ++d) {
        const int ai = d - (r - static_cast<int>(as.size()));
        const int bi = d - (r - static_cast<int>(bs.size()));
        ae[d] = ai >= 0 ? as[static_cast<std::size_t>(ai)] : 1;
        be[d] = bi >= 0 ? bs[static_cast<std::size_t>(bi)] : 1;
        check(ae[d] == be[d] || ae[d] == 1 || be[d] == 1,
              "broadcast: incompatible shapes " + shape_str(as) + " vs " + shape_str(bs));
        oe[d] = std::max(ae[d], be[d]);
    }
    BinPlans P;
    P.fw.rank = r;
    i64 ostr[kern::kMaxRank];
    i64 sa = 1, sb = 1, so = 1;
    for (int d = r - 1; d >= 0; --d) {
        P.fw.oext[d] = oe[d];
        P.fw.astr[d] = ae[d] == 1 ? 0 : sa;
        P.fw.bstr[d] = be[d] == 1 ? 0 : sb;
        ostr[d] = so;
        sa *= ae[d];
        sb *= be[d];
        so *= oe[d];
    }
    P.fw.n = so;
    os.assign(oe, oe + r);
    P.ga = P.fw;
    P.gb = P.fw;
    P.gg = P.fw;
    for (int d = 0; d < r; ++d) {
        P.ga.astr[d] = ostr[d];
        P.gb.astr[d] = ostr[d];
        P.gb.bstr[d] = P.fw.astr[d];
        P.gg.astr[d] = ostr[d];
        P.gg.bstr[d] = ostr[d];
    }
    P.ra.rank = r;
    P.rb.rank = r;
    i64 na = 1, nb = 1;
    for (int d = 0; d < r; ++d) {
        P.ra.oext[d] = oe[d];
        P.rb.oext[d] = oe[d];
        P.ra.keep[d] = ae[d] == oe[d];
        P.rb.keep[d] = be[d] == oe[d];
        na *= ae[d];
        nb *= be[d];
    }
    P.ra.dst_n = na;
    P.rb.dst_n = nb;
    return P;
}

template <typename T>
Tensor<T> binary(const Tensor<T>& a, const Tensor<T>& b, kern::BinOp op) {
    Shape os;
    const BinPlans P = make_bin_plans(a.shape(), b.shape(), os);
    auto out = fresh<T>(std::move(os));
    kern::bc_binary(out->value.data(), a.data(), b.data(), P.fw, op);
    auto an = a.node();
    auto bn = b.node();
    if (wire(out, {an, bn})) {
        Node<T>* o = out.get();
        Node<T>* pa = an.get();
        Node<T>* pb = bn.get();
        out->backprop = [o, pa, pb, P, op]() {
            const i64 n = static_cast<i64>(o->value.size());
            const T* g = o->grad.data();
            std::vector<T> tmp;
            switch (op) {
                case kern::BinOp::add:
                    if (pa->needs_grad) {
                        pa->ensure_grad();
                        kern::reduce_to(pa->grad.data(), g, P.ra);
                    }
                    if (pb->needs_grad) {
                        pb->ensure_grad();
                        kern::reduce_to(pb->grad.data(), g, P.rb);
                    }
                    break;
                case kern::BinOp::sub:
                    if (pa->needs_grad) {
                        pa->ensure_grad();
                        kern::reduce_to(pa->grad.data(), g, P.ra);
                    }
                    if (pb->needs_grad) {
                        pb->ensure_grad();
                        tmp.resize(static_cast<std::size_t>(n));
                        kern::unary_forward(tmp.data(), g, n, kern::UnOp::neg);
                        kern::reduce_to(pb->grad.data(), tmp.data(), P.rb);
                    }
                    break;
                case kern::BinOp::mul:
                    if (pa->needs_grad) {
                        pa->ensure_grad();
                        tmp.resize(static_cast<std::size_t>(n));
                        kern::bc_binary(tmp.data(), g, pb->value.data(), P.ga, kern::BinOp::mul);
                        kern::reduce_to(pa->grad.data(), tmp.data(), P.ra);
                    }
                    if (pb->needs_grad) {
                        pb->ensure_grad();
                        tmp.resize(static_cast<std::size_t>(n));
                        kern::bc_binary(tmp.data(), g, pa->value.data(), P.gb, kern::BinOp::mul);
                        kern::reduce_to(pb->grad.data(), tmp.data(), P.rb);
                    }
                    break;
                case kern::BinOp::div:
                    if (pa->needs_grad) {
                        pa->ensure_grad();
                        tmp.resize(static_cast<std::size_t>(n));
                        kern::bc_binary(tmp.data(), g, pb->value.data(), P.ga, kern::BinOp::div);
                        kern::reduce_to(pa->grad.data(), tmp.data(), P.ra);
                    }
                    if (pb->needs_grad) {
                        pb->ensure_grad();
                        tmp.resize(static_cast<std::size_t>(n));
                        kern::bc_binary(tmp.data(), g, o->value.data(), P.gg, kern::BinOp::mul);
                        kern::bc_binary(tmp.data(), tmp.data(), pb->value.data(), P.ga,
                                        kern::BinOp::div);
                        kern::unary_forward(tmp.data(), tmp.data(), n, kern::UnOp::neg);
                        kern::reduce_to(pb->grad.data(), tmp.data(), P.rb);
                    }
                    break;
            }
        };
    }
    return Tensor<T>(out);
}

template <typename T>
Tensor<T> unary(const Tensor<T>& x, kern::UnOp op, T p0 = T(0), T p1 = T(0)) {
    auto out = fresh<T>(x.shape());
    const i64 n = x.numel();
    kern::unary_forward(out->value.data(), x.data(), n, op, p0, p1);
    auto xn = x.node();
    if (wire(out, {xn})) {
        Node<T>* o = out.get();
        Node<T>* px = xn.get();
        const bool ref_out = op == kern::UnOp::exp || op == kern::UnOp::sigmoid;
        out->backprop = [o, px, op, p0, p1, ref_out, n]() {
            px->ensure_grad();
            const T* ref = ref_out ? o->value.data() : px->value.data();
            kern::unary_backward(px->grad.data(), o->grad.data(), ref, n, op, p0, p1);
        };
    }
    return Tensor<T>(out);
}

}  // namespace

// ---- Tensor members ----

template <typename T>
Tensor<T> Tensor<T>::zeros(const Shape& s) {
    return full(s, T(0));
}

template <typename T>
Tensor<T> Tensor<T>::full(const Shape& s, T v) {
    check(!s.empty(), "tensor: rank must be at least 1");
    for (i64 e : s) check(e >= 1, "tensor: extents must be positive");
    auto n = std::make_shared<Node<T>>();
    n->shape = s;
    n->value.assign(static_cast<std::size_t>(floodcpf::numel(s)), v);
    return Tensor<T>(n);
}

template <typename T>
Tensor<T> Tensor<T>::from_vec(const Shape& s, std::vector<T> v) {
    check(!s.empty(), "tensor: rank must be at least 1");
    for (i64 e : s) check(e >= 1, "tensor: extents must be positive");
    check(static_cast<i64>(v.size()) == floodcpf::numel(s),
          "tensor: value count does not match shape");
    auto n = std::make_shared<Node<T>>();
    n->shape = s;
    n->value = std::move(v);
    return Tensor<T>(n);
}

// ---- grad mode ----

bool grad_enabled() { return g_grad_enabled; }

NoGrad::NoGrad() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGrad::~NoGrad() { g_grad_enabled = prev_; }

// ---- elementwise ----

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    return binary(a, b, kern::BinOp::add);
}
template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
    return binary(a, b, kern::BinOp::sub);
}
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
    return binary(a, b, kern::BinOp::mul);
}
template <typename T>
Tensor<T> divide(const Tensor<T>& a, const Tensor<T>& b) {
    return binary(a, b, kern::BinOp::div);
}

template <typename T>
Tensor<T> affine(const Tensor<T>& x, T scale, T shift) {
    auto out = fresh<T>(x.shape());
    const i64 n = x.numel();
    kern::scale_shift(out->value.data(), x.data(), n, scale, shift);
    auto xn = x.node();
    if (wire(out, {xn})) {
        Node<T>* o = out.get();
        Node<T>* px = xn.get();
        out->backprop = [o, px, scale, n]() {
            px->ensure_grad();
            kern::scale_shift_backward(px->grad.data(), o->grad.data(), n, scale);
        };
    }
    return Tensor<T>(out);
}

template <typename T>
Tensor<T> exp(const Tensor<T>& x) {
    return unary(x, kern::UnOp::exp);
}
template <typename T>
Tensor<T> log(const Tensor<T>& x) {
    return unary(x, kern::UnOp::log);
}
template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
    return unary(x, kern::UnOp::relu);
}
template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
    return unary(x, kern::UnOp::sigmoid);
}
template <typename T>
Tensor<T> clamp(const Tensor<T>& x, T lo, T hi) {
    check(lo <= hi, "clamp: lo > hi");
    return unary(x, kern::UnOp::clamp, lo, hi);
}

template <typename T>
Tensor<T> sum_all(const Tensor<T>& x) {
    auto out = fresh<T>(Shape{1});
    const i64 n = x.numel();
    out->value[0] = kern::sum_all(x.data(), n);
    auto xn = x.node();
    if (wire(out, {xn})) {
        Node<T>* o = out.get();
        Node<T>* px = xn.get();
        out->backprop = [o, px, n]() {
            px->ensure_grad();
            kern::sum_all_backward(px->grad.data(), o->grad[0], n);
        };
    }
    return Tensor<T>(out);
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, const Shape& s) {
    check(numel(s) == x.numel(),
          "reshape: element count mismatch " + shape_str(x.shape()) + " to " + shape_str(s));
    auto out = fresh<T>(s);
    out->value = x.value();
    auto xn = x.node();
    if (wire(out, {xn})) {
        Node<T>* o = out.get();
        Node<T>* px = xn.get();
        const i64 n = x.numel();
        out->backprop = [o, px, n]() {
            px->ensure_grad();
            kern::accum(px->grad.data(), o->grad.data(), n);
        };
    }
    return Tensor<T>(out);
}

// ---- structured ops ----

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& k, const Tensor<T>& b, i64 pad, i64 stride,
                 bool pairsum) {
    const Shape& xs = x.shape();
    const Shape& ks = k.shape();
    check(xs.size() == 4, "conv2d: input must be (n,c,h,w)");
    check(ks.size() == 4, "conv2d: kernel must be (co,ci,k,k)");
    check(ks[1] == xs[1], "conv2d: channel mismatch");
    check(ks[2] == ks[3], "conv2d: kernel must be square");
    const kern::ConvGeom g =
        kern::conv_geom(xs[0], xs[1], xs[2], xs[3], ks[0], ks[2], pad, stride);
    const T* bptr = nullptr;
    if (b.defined()) {
        check(b.shape() == Shape{ks[0]}, "conv2d: bias must be (co)");
        bptr = b.data();
    }
    auto out = fresh<T>({g.n, g.co, g.oh, g.ow});
    if (pairsum)
        kern::conv2d_forward_pairsum(out->value.data(), x.data(), k.data(), bptr, g);
    else
        kern::conv2d_forward(out->value.data(), x.data(), k.data(), bptr, g);
    auto xn = x.node();
    auto kn = k.node();
    auto bn = b.defined() ? b.node() : nullptr;
    if (wire(out, {xn, kn, bn})) {
        Node<T>* o = out.get();
        Node<T>* px = xn.get();
        Node<T>* pk = kn.get();
        Node<T>* pb = bn ? bn.get() : nullptr;
        out->backprop = [o, px, pk, pb, g]() {
            const T* gr = o->grad.data();
            if (px->needs_grad) {
                px->ensure_grad();
                kern::conv2d_backward_input(px->grad.data(), gr, pk->value.data(), g);
            }
            if (pk->needs_grad) {
                pk->ensure_grad();
                kern::conv2d_backward_kernel(pk->grad.data(), gr, px->value.data(), g);
            }
            if (pb && pb->needs_grad) {
                pb->ensure_grad();
                kern::conv2d_backward_bias(pb->grad.data(), gr, g);
            }
        };
    }
    return Tensor<T>(out);
}

template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
    const Shape& xs = x.shape();
    const Shape& ws = w.shape();
    check(xs.size() == 2, "linear: input must be (n,f)");
    check(ws.size() == 2 && ws[1] == xs[1], "linear: weight must be (fout,fin)");
    const i64 bn = xs[0], fin = xs[1], fout = ws[0];
    const T* bptr = nullptr;
    if (b.defined()) {
        check(b.shape() == Shape{fout}, "linear: bias must be (fout)");
        bptr = b.data();
    }
    auto out = fresh<T>({bn, fout});
    kern::linear_forward(out->value.data(), x.data(), w.data(), bptr, bn, fin, fout);
    auto xn = x.node();
    auto wn = w.node();
    auto bnn = b.defined() ? b.node() : nullptr;
    if (wire(out, {xn, wn, bnn})) {
        Node<T>* o = out.get();
        Node<T>* px = xn.get();
        Node<T>* pw = wn.get();
        Node<T>* pb = bnn ? bnn.get() : nullptr;
        out->backprop = [o, px, pw, pb, bn, fin, fout]() {
            const T* gr = o->grad.data();
            if (px->needs_grad) {
                px->ensure_grad();
                kern::linear_backward_input(px->grad.data(), gr, pw->value.data(), bn, fin, fout);
            }
            if (pw->needs_grad) {
                pw->ensure_grad();
                kern::linear_backward_weight(pw->grad.data(), gr, px->value.data(), bn, fin,
                                             fout);
            }
            if (pb && pb->needs_grad) {
                pb->ensure_grad();
                kern::linear_backward_bias(pb->grad.data(), gr, bn, fout);
            }
        };
    }
    return Tensor<T>(out);
}

template <typename T>
Tensor<T> max_pool2(const Tensor<T>& x) {
    const Shape& xs = x.shape();
    check(xs.size() == 4, "max_pool2: input must be (n,c,h,w)");
    const i64 n = xs[0], c = xs[1], h = xs[2], w = xs[3];
    auto out = fresh<T>({n, c, h / 2, w / 2});
    std::vector<i64> am(out->value.size());
    kern::max_pool2_forward(out->value.data(), am.data(), x.data(), n, c, h, w);
    auto xn = x.node();
    if (wire(out, {xn})) {
        Node<T>* o = out.get();
        Node<T>* px = xn.get();
        out->backprop = [o, px, am = std::move(am), n, c, h, w]() {
            px->ensure_grad();
            kern::max_pool2_backward(px->grad.data(), o->grad.data(), am.data(), n, c, h, w);
        };
    }
    return Tensor<T>(out);
}

template <typename T>
Tensor<T> upsample2(const Tensor<T>& x) {
    const Shape& xs = x.shape();
    check(xs.size() == 4, "upsample2: input must be (n,c,h,w)");
    const i64 n = xs[0], c = xs[1], h = xs[2], w = xs[3];
    auto out = fresh<T>({n, c, h * 2, w * 2});
    kern::upsample2_forward(out->value.data(), x.data(), n, c, h, w);
    auto xn = x.node();
    if (wire(out, {xn})) {
        Node<T>* o = out.get();
        Node<T>* px = xn.get();
        out->backprop = [o, px, n, c, h, w]() {
            px->ensure_grad();
            kern::upsample2_backward(px->grad.data(), o->grad.data(), n, c, h, w);
        };
    }
    return Tensor<T>(out);
}

template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& x) {
    const Shape& xs = x.shape();
    check(xs.size() == 4, "global_avg_pool: input must be (n,c,h,w)");
    const i64 n = xs[0], c = xs[1], h = xs[2], w = xs[3];
    auto out = fresh<T>({n, c});
    kern::global_avg_forward(out->value.data(), x.data(), n, c, h, w);
    auto xn = x.node();
    if (wire(out, {xn})) {
        Node<T>* o = out.get();
        Node<T>* px = xn.get();
        out->backprop = [o, px, n, c, h, w]() {
            px->ensure_grad();
            kern::global_avg_backward(px->grad.data(), o->grad.data(), n, c, h, w);
        };
    }
    return Tensor<T>(out);
}

template <typename T>
Tensor<T> global_max_pool(const Tensor<T>& x) {
    const Shape& xs = x.shape();
    check(xs.size() == 4, "global_max_pool: input must be (n,c,h,w)");
    const i64 n = xs[0], c = xs[1], h = xs[2], w = xs[3];
    auto out = fresh<T>({n, c});
    std::vector<i64> am(static_cast<std::size_t>(n * c));
    kern::global_max_forward(out->value.data(), am.data(), x.data(), n, c, h, w);
    auto xn = x.node();
    if (wire(out, {xn})) {
        Node<T>* o = out.get();
        Node<T>* px = xn.get();
        out->backprop = [o, px, am = std::move(am), n, c, h, w]() {
            px->ensure_grad();
            kern::global_max_backward(px->grad.data(), o->grad.data(), am.data(), n, c, h, w);
        };
    }
    return Tensor<T>(out);
}

template <typename T>
Tensor<T> channel_mean_max(const Tensor<T>& x) {
    const Shape& xs = x.shape();
    check(xs.size() == 4, "channel_mean_max: input must be (n,c,h,w)");
    const i64 n = xs[0], c = xs[1], h = xs[2], w = xs[3];
    auto out = fresh<T>({n, 2, h, w});
    std::vector<i64> am(static_cast<std::size_t>(n * h * w));
    kern::channel_mean_max_forward(out->value.data(), am.data(), x.data(), n, c, h, w);
    auto xn = x.node();
    if (wire(out, {xn})) {
        Node<T>* o = out.get();
        Node<T>* px = xn.get();
        out->backprop = [o, px, am = std::move(am), n, c, h, w]() {
            px->ensure_grad();
            kern::channel_mean_max_backward(px->grad.data(), o->grad.data(), am.data(), n, c, h,
                                            w);
        };
    }
    return Tensor<T>(out);
}

template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
    const Shape& as = a.shape();
    const Shape& bs = b.shape();
    check(as.size() == 4 && bs.size() == 4, "concat_channels: inputs must be (n,c,h,w)");
    check(as[0] == bs[0] && as[2] == bs[2] && as[3] == bs[3],
          "concat_channels: non-channel extents must match");
    const i64 n = as[0], ca = as[1], cb = bs[1], h = as[2], w = as[3];
    auto out = fresh<T>({n, ca + cb, h, w});
    kern::concat_channels_forward(out->value.data(), a.data(), b.data(), n, ca, cb, h, w);
    auto an = a.node();
    auto bn = b.node();
    if (wire(out, {an, bn})) {
        Node<T>* o = out.get();
        Node<T>* pa = an.get();
        Node<T>* pb = bn.get();
        out->backprop = [o, pa, pb, n, ca, cb, h, w]() {
            if (pa->needs_grad) {
                pa->ensure_grad();
                kern::concat_channels_backward_a(pa->grad.data(), o->grad.data(), n, ca, cb, h,
                                                 w);
            }
            if (pb->needs_grad) {
                pb->ensure_grad();
                kern::concat_channels_backward_b(pb->grad.data(), o->grad.data(), n, ca, cb, h,
                                                 w);
            }
        };
    }
    return Tensor<T>(out);
}

template <typename T>
Tensor<T> slice_channels(const Tensor<T>& x, i64 c0, i64 c1) {
    const Shape& xs = x.shape();
    check(xs.size() == 4, "slice_channels: input must be (n,c,h,w)");
    const i64 n = xs[0], c = xs[1], h = xs[2], w = xs[3];
    check(0 <= c0 && c0 < c1 && c1 <= c, "slice_channels: bad channel range");
    auto out = fresh<T>({n, c1 - c0, h, w});
    kern::slice_channels_forward(out->value.data(), x.data(), n, c, c0, c1, h, w);
    auto xn = x.node();
    if (wire(out, {xn})) {
        Node<T>* o = out.get();
        Node<T>* px = xn.get();
        out->backprop = [o, px, n, c, c0, c1, h, w]() {
            px->ensure_grad();
            kern::slice_channels_backward(px->grad.data(), o->grad.data(), n, c, c0, c1, h, w);
        };
    }
    return Tensor<T>(out);
}

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gain, const Tensor<T>& offset, T eps) {
    const Shape& xs = x.shape();
    check(xs.size() == 4, "layer_norm: input must be (n,c,h,w)");
    const i64 n = xs[0], c = xs[1], h = xs[2], w = xs[3];
    check(gain.shape() == Shape{c} && offset.shape() == Shape{c},
          "layer_norm: gain/offset must be (c)");
    auto out = fresh<T>(xs);
    std::vector<T> xhat(x.value().size());
    std::vector<T> inv_sigma(static_cast<std::size_t>(n));
    kern::layer_norm_forward(out->value.data(), xhat.data(), inv_sigma.data(), x.data(),
                             gain.data(), offset.data(), n, c, h, w, eps);
    auto xn = x.node();
    auto gn = gain.node();
    auto on = offset.node();
    if (wire(out, {xn, gn, on})) {
        Node<T>* o = out.get();
        Node<T>* px = xn.get();
        Node<T>* pg = gn.get();
        Node<T>* po = on.get();
        out->backprop = [o, px, pg, po, xhat = std::move(xhat),
                         inv_sigma = std::move(inv_sigma), n, c, h, w]() {
            T* dx = nullptr;
            T* dg = nullptr;
            T* doff = nullptr;
            if (px->needs_grad) {
                px->ensure_grad();
                dx = px->grad.data();
            }
            if (pg->needs_grad) {
                pg->ensure_grad();
                dg = pg->grad.data();
            }
            if (po->needs_grad) {
                po->ensure_grad();
                doff = po->grad.data();
            }
            kern::layer_norm_backward(dx, dg, doff, o->grad.data(), xhat.data(),
                                      inv_sigma.data(), pg->value.data(), n, c, h, w);
        };
    }
    return Tensor<T>(out);
}

// ---- backward ----

template <typename T>
void backward(const Tensor<T>& root) {
    check(root.numel() == 1, "backward: root must be scalar");
    auto r = root.node();
    check(r->needs_grad, "backward: root does not depend on any trainable tensor");
    std::vector<Node<T>*> order;
    std::unordered_set<Node<T>*> seen;
    struct Frame {
        Node<T>* n;
        std::size_t next;
    };
    std::vector<Frame> stack{{r.get(), 0}};
    seen.insert(r.get());
    while (!stack.empty()) {
        Frame& f = stack.back();
        if (f.next < f.n->parents.size()) {
            Node<T>* p = f.n->parents[f.next++].get();
            if (p->needs_grad && seen.insert(p).second) stack.push_back({p, 0});
        } else {
            order.push_back(f.n);
            stack.pop_back();
        }
    }
    // order holds ancestors before descendants; interior grads restart at
    // zero while trainable-leaf grads accumulate.
    for (Node<T>* n : order) {
        n->ensure_grad();
        if (n->backprop) std::fill(n->grad.begin(), n->grad.end(), T(0));
    }
    r->grad[0] += T(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it)
        if ((*it)->backprop) (*it)->backprop();
}

// ---- gradient check ----

GradCheckResult grad_check(const std::function<Tensor<double>()>& f,
                           const std::vector<Tensor<double>>& inputs, double h, double tol,
                           i64 max_checks_per_tensor, u64 seed) {
    for (const auto& t : inputs)
        check(t.trainable(), "grad_check: inputs must be trainable leaves");
    std::vector<Tensor<double>> ins = inputs;
    for (auto& t : ins) t.zero_grad();
    Tensor<double> out = f();
    check(out.numel() == 1, "grad_check: f must return a scalar");
    backward(out);
    std::vector<std::vector<double>> analytic;
    analytic.reserve(ins.size());
    for (auto& t : ins) analytic.push_back(t.grad_vec());

    NoGrad ng;
    Rng rng(seed ^ 0x67726164636b00ULL);
    auto quotient = [&f](double* slot, double orig, double step) {
        slot[0] = orig + step;
        const double f1 = f().item();
        slot[0] = orig - step;
        const double f2 = f().item();
        slot[0] = orig;
        return (f1 - f2) / (2 * step);
    };
    i64 checked = 0, inconclusive = 0;
    for (std::size_t ti = 0; ti < ins.size(); ++ti) {
        Tensor<double>& t = ins[ti];
        const i64 n = t.numel();
        const bool sample = max_checks_per_tensor > 0 && n > max_checks_per_tensor;
        const i64 m = sample ? max_checks_per_tensor : n;
        for (i64 j = 0; j < m; ++j) {
            const i64 idx = sample ? rng.uniform_int(n) : j;
            double* d = t.data();
            const double orig = d[idx];
            const double num = quotient(d + idx, orig, h);
            const double ana = analytic[ti][static_cast<std::size_t>(idx)];
            auto rel_of = [&ana](double est) {
                return std::abs(ana - est) /
                       std::max({std::abs(ana), std::abs(est), 1e-6});
            };
            ++checked;
            if (rel_of(num) <= tol) continue;
            // Smooth coordinates give a quotient that is stable under halving
            // h; a drifting quotient means the probe straddles a kink or sits
            // at the cancellation noise floor, so it cannot arbitrate.
            const double num2 = quotient(d + idx, orig, h / 2);
            if (rel_of(num2) <= tol) continue;
            if (std::abs(num - num2) > 0.3 * std::abs(num2 - ana)) {
                ++inconclusive;
                continue;
            }
            std::ostringstream os;
            os << "grad mismatch: tensor " << ti << " coord " << idx << " analytic " << ana
               << " numeric " << num << " (h/2: " << num2 << ") rel " << rel_of(num);
            return {false, os.str()};
        }
    }
    if (inconclusive * 20 > checked) {
        std::ostringstream os;
        os << "grad check inconclusive: " << inconclusive << " of " << checked
           << " probes were numerically unstable";
        return {false, os.str()};
    }
    return {true, ""};
}

// ---- snapshot io ----

template <>
const char* dtype_token<float>() {
    return "f32";
}
template <>
const char* dtype_token<double>() {
    return "f64";
}

template <typename T>
void save_tensor(std::ostream& os, const Tensor<T>& t) {
    os << "TNSR v1 " << dtype_token<T>() << ' ' << t.shape().size();
    for (i64 e : t.shape()) os << ' ' << e;
    os << '\n';
    os.write(reinterpret_cast<const char*>(t.data()),
             static_cast<std::streamsize>(t.numel() * static_cast<i64>(sizeof(T))));
    check(os.good(), "save_tensor: write failed");
}

template <typename T>
Tensor<T> load_tensor(std::istream& is) {
    std::string magic, ver, dt;
    std::size_t rank = 0;
    is >> magic >> ver >> dt >> rank;
    check(is.good() && magic == "TNSR" && ver == "v1", "load_tensor: bad header");
    check(dt == dtype_token<T>(), "load_tensor: dtype mismatch (" + dt + ")");
    check(rank >= 1 && rank <= static_cast<std::size_t>(kern::kMaxRank),
          "load_tensor: bad rank");
    Shape s(rank);
    for (auto& e : s) {
        is >> e;
        check(is.good() && e >= 1, "load_tensor: bad extent");
    }
    check(is.get() == '\n', "load_tensor: malformed header terminator");
    std::vector<T> v(static_cast<std::size_t>(numel(s)));
    const std::streamsize bytes = static_cast<std::streamsize>(v.size() * sizeof(T));
    is.read(reinterpret_cast<char*>(v.data()), bytes);
    check(is.gcount() == bytes, "load_tensor: truncated payload");
    return Tensor<T>::from_vec(s, std::move(v));
}

// ---- explicit instantiations ----

#define FLOODCPF_TENSOR_INSTANCES(T)                                                     \
    template class Tensor<T>;                                                            \
    template Tensor<T> add<T>(const Tensor<T>&, const Tensor<T>&);                       \
    template Tensor<T> sub<T>(const Tensor<T>&, const Tensor<T>&);                       \
    template Tensor<T> mul<T>(const Tensor<T>&, const Tensor<T>&);                       \
    template Tensor<T> divide<T>(const Tensor<T>&, const Tensor<T>&);                    \
    template Tensor<T> affine<T>(const Tensor<T>&, T, T);                                \
    template Tensor<T> exp<T>(const Tensor<T>&);                                         \
    template Tensor<T> log<T>(const Tensor<T>&);                                         \
    template Tensor<T> relu<T>(const Tensor<T>&);                                        \
    template Tensor<T> sigmoid<T>(const Tensor<T>&);                                     \
    template Tensor<T> clamp<T>(const Tensor<T>&, T, T);                                 \
    template Tensor<T> sum_all<T>(const Tensor<T>&);                                     \
    template Tensor<T> reshape<T>(const Tensor<T>&, const Shape&);                       \
    template Tensor<T> conv2d<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,  \
                                 i64, i64, bool);                                        \
    template Tensor<T> linear<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&); \
    template Tensor<T> max_pool2<T>(const Tensor<T>&);                                   \
    template Tensor<T> upsample2<T>(const Tensor<T>&);                                   \
    template Tensor<T> global_avg_pool<T>(const Tensor<T>&);                             \
    template Tensor<T> global_max_pool<T>(const Tensor<T>&);                             \
    template Tensor<T> channel_mean_max<T>(const Tensor<T>&);                            \
    template Tensor<T> concat_channels<T>(const Tensor<T>&, const Tensor<T>&);           \
    template Tensor<T> slice_channels<T>(const Tensor<T>&, i64, i64);                    \
    template Tensor<T> layer_norm<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, \
                                     T);                                                 \
    template void backward<T>(const Tensor<T>&);                                         \
    template void save_tensor<T>(std::ostream&, const Tensor<T>&);                       \
    template Tensor<T> load_tensor<T>(std::istream&);

FLOODCPF_TENSOR_INSTANCES(float)
FLOODCPF_TENSOR_INSTANCES(double)

#undef FLOODCPF_TENSOR_INSTANCES

}  // namespace floodcpf
