#pragma once

// Per-unit inner routines shared by the serial and OpenMP backends. A unit is
// one independent output element or row; backends differ only in how units
// are scheduled. Keeping the accumulation order of every unit fixed in one
// place is what makes the two backends bitwise interchangeable.

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "floodcpf/kernels.hpp"

namespace floodcpf::kern::detail {

// Valid ow range such that iw = ow*stride - pad + kw lies in [0, w).
inline void ow_range(i64 kw, const ConvGeom& g, i64& lo, i64& hi) {
    const i64 a = g.pad - kw;
    lo = a <= 0 ? 0 : (a + g.stride - 1) / g.stride;
    const i64 b = g.w - 1 + g.pad - kw;
    hi = b < 0 ? 0 : b / g.stride + 1;
    if (hi > g.ow) hi = g.ow;
    if (lo > hi) lo = hi;
}

// Eight independent accumulator lanes folded in a fixed tree at the end.
// Lets reductions vectorize without fast-math while keeping one well-defined
// summation order.
template <typename T>
struct Lanes8 {
    T l[8] = {};

    void add_products(const T* __restrict a, const T* __restrict b, i64 len) {
        const i64 nb = len / 8;
        for (i64 i = 0; i < nb; ++i) {
            l[0] += a[0] * b[0];
            l[1] += a[1] * b[1];
            l[2] += a[2] * b[2];
            l[3] += a[3] * b[3];
            l[4] += a[4] * b[4];
            l[5] += a[5] * b[5];
            l[6] += a[6] * b[6];
            l[7] += a[7] * b[7];
            a += 8;
            b += 8;
        }
        const i64 rem = len - nb * 8;
        for (i64 j = 0; j < rem; ++j) l[j] += a[j] * b[j];
    }

    void add_values(const T* __restrict a, i64 len) {
        const i64 nb = len / 8;
        for (i64 i = 0; i < nb; ++i) {
            l[0] += a[0];
            l[1] += a[1];
            l[2] += a[2];
            l[3] += a[3];
            l[4] += a[4];
            l[5] += a[5];
            l[6] += a[6];
            l[7] += a[7];
            a += 8;
        }
        const i64 rem = len - nb * 8;
        for (i64 j = 0; j < rem; ++j) l[j] += a[j];
    }

    T fold() const { return ((l[0] + l[1]) + (l[2] + l[3])) + ((l[4] + l[5]) + (l[6] + l[7])); }
};

// Accumulates the contribution of input channels [ci0, ci1) into one output
// row. Term order per output element is (ci, kh, kw), out-of-bounds taps
// skipped identically everywhere.
template <typename T>
inline void conv_accum_range(T* __restrict acc, const T* __restrict x, const T* __restrict k,
                             const ConvGeom& g, i64 n, i64 co, i64 oh, i64 ci0, i64 ci1) {
    for (i64 ci = ci0; ci < ci1; ++ci) {
        for (i64 kh = 0; kh < g.k; ++kh) {
            const i64 ih = oh * g.stride - g.pad + kh;
            if (ih < 0 || ih >= g.h) continue;
            const T* xrow = x + ((n * g.ci + ci) * g.h + ih) * g.w;
            const T* krow = k + ((co * g.ci + ci) * g.k + kh) * g.k;
            for (i64 kw = 0; kw < g.k; ++kw) {
                const T wgt = krow[kw];
                i64 lo, hi;
                ow_range(kw, g, lo, hi);
                if (g.stride == 1) {
                    const T* __restrict xs = xrow - g.pad + kw;
                    for (i64 ow = lo; ow < hi; ++ow) acc[ow] += xs[ow] * wgt;
                } else {
                    for (i64 ow = lo; ow < hi; ++ow)
                        acc[ow] += xrow[ow * g.stride - g.pad + kw] * wgt;
                }
            }
        }
    }
}

template <typename T>
inline void conv_fwd_row(T* __restrict out, const T* __restrict x, const T* __restrict k,
                         const T* __restrict b, const ConvGeom& g, i64 n, i64 co, i64 oh) {
    T* orow = out + ((n * g.co + co) * g.oh + oh) * g.ow;
    const T bias = b ? b[co] : T(0);
    for (i64 ow = 0; ow < g.ow; ++ow) orow[ow] = bias;
    conv_accum_range(orow, x, k, g, n, co, oh, 0, g.ci);
}

// Half sums are built independently and joined with one add; addition is
// commutative, so exchanging the halves (with matching kernel halves) cannot
// change a single bit of the output.
template <typename T>
inline void conv_fwd_row_pairsum(T* __restrict out, const T* __restrict x, const T* __restrict k,
                                 const T* __restrict b, const ConvGeom& g, i64 n, i64 co,
                                 i64 oh) {
    T h0[kMaxRowLen];
    T h1[kMaxRowLen];
    for (i64 ow = 0; ow < g.ow; ++ow) h0[ow] = T(0);
    for (i64 ow = 0; ow < g.ow; ++ow) h1[ow] = T(0);
    const i64 half = g.ci / 2;
    conv_accum_range(h0, x, k, g, n, co, oh, 0, half);
    conv_accum_range(h1, x, k, g, n, co, oh, half, g.ci);
    T* orow = out + ((n * g.co + co) * g.oh + oh) * g.ow;
    const T bias = b ? b[co] : T(0);
    for (i64 ow = 0; ow < g.ow; ++ow) orow[ow] = bias + (h0[ow] + h1[ow]);
}

template <typename T>
inline void conv_bwd_in_row(T* __restrict dx_acc, const T* __restrict dout,
                            const T* __restrict k, const ConvGeom& g, i64 n, i64 ci, i64 ih) {
    T acc[kMaxRowLen];
    for (i64 iw = 0; iw < g.w; ++iw) acc[iw] = T(0);
    for (i64 co = 0; co < g.co; ++co) {
        for (i64 kh = 0; kh < g.k; ++kh) {
            const i64 num = ih + g.pad - kh;
            i64 oh;
            if (g.stride == 1) {
                oh = num;
            } else {
                if (num < 0 || num % g.stride != 0) continue;
                oh = num / g.stride;
            }
            if (oh < 0 || oh >= g.oh) continue;
            const T* grow = dout + ((n * g.co + co) * g.oh + oh) * g.ow;
            const T* krow = k + ((co * g.ci + ci) * g.k + kh) * g.k;
            for (i64 kw = 0; kw < g.k; ++kw) {
                const T wgt = krow[kw];
                i64 lo, hi;
                ow_range(kw, g, lo, hi);
                if (g.stride == 1) {
                    const T* __restrict gs = grow + g.pad - kw;
                    const i64 wlo = lo - g.pad + kw;
                    const i64 whi = hi - g.pad + kw;
                    for (i64 iw = wlo; iw < whi; ++iw) acc[iw] += gs[iw] * wgt;
                } else {
                    for (i64 ow = lo; ow < hi; ++ow)
                        acc[ow * g.stride - g.pad + kw] += grow[ow] * wgt;
                }
            }
        }
    }
    T* dxrow = dx_acc + ((n * g.ci + ci) * g.h + ih) * g.w;
    for (i64 iw = 0; iw < g.w; ++iw) dxrow[iw] += acc[iw];
}

template <typename T>
inline T conv_bwd_k_elem(const T* __restrict dout, const T* __restrict x, const ConvGeom& g,
                         i64 co, i64 ci, i64 kh, i64 kw) {
    Lanes8<T> lanes;
    i64 lo, hi;
    ow_range(kw, g, lo, hi);
    if (hi <= lo) return T(0);
    for (i64 n = 0; n < g.n; ++n) {
        for (i64 oh = 0; oh < g.oh; ++oh) {
            const i64 ih = oh * g.stride - g.pad + kh;
            if (ih < 0 || ih >= g.h) continue;
            const T* grow = dout + ((n * g.co + co) * g.oh + oh) * g.ow;
            const T* xrow = x + ((n * g.ci + ci) * g.h + ih) * g.w;
            if (g.stride == 1) {
                lanes.add_products(grow + lo, xrow + lo - g.pad + kw, hi - lo);
            } else {
                for (i64 ow = lo; ow < hi; ++ow)
                    lanes.l[(ow - lo) % 8] += grow[ow] * xrow[ow * g.stride - g.pad + kw];
            }
        }
    }
    return lanes.fold();
}

template <typename T>
inline T conv_bwd_bias_elem(const T* __restrict dout, const ConvGeom& g, i64 co) {
    Lanes8<T> lanes;
    for (i64 n = 0; n < g.n; ++n) {
        for (i64 oh = 0; oh < g.oh; ++oh) {
            lanes.add_values(dout + ((n * g.co + co) * g.oh + oh) * g.ow, g.ow);
        }
    }
    return lanes.fold();
}

// ---- dense layer units ----

template <typename T>
inline void linear_fwd_row(T* __restrict y, const T* __restrict x, const T* __restrict w,
                           const T* __restrict b, i64 fin, i64 fout, i64 bn) {
    const T* xrow = x + bn * fin;
    T* yrow = y + bn * fout;
    for (i64 o = 0; o < fout; ++o) {
        T acc = b ? b[o] : T(0);
        const T* wrow = w + o * fin;
        for (i64 f = 0; f < fin; ++f) acc += xrow[f] * wrow[f];
        yrow[o] = acc;
    }
}

template <typename T>
inline void linear_bwd_in_row(T* __restrict dx_acc, const T* __restrict dout,
                              const T* __restrict w, i64 fin, i64 fout, i64 bn) {
    const T* grow = dout + bn * fout;
    T* dxrow = dx_acc + bn * fin;
    for (i64 f = 0; f < fin; ++f) {
        T acc = T(0);
        for (i64 o = 0; o < fout; ++o) acc += grow[o] * w[o * fin + f];
        dxrow[f] += acc;
    }
}

template <typename T>
inline T linear_bwd_w_elem(const T* __restrict dout, const T* __restrict x, i64 fin, i64 fout,
                           i64 n, i64 o, i64 f) {
    T acc = T(0);
    for (i64 bn = 0; bn < n; ++bn) acc += dout[bn * fout + o] * x[bn * fin + f];
    return acc;
}

template <typename T>
inline T linear_bwd_b_elem(const T* __restrict dout, i64 fout, i64 n, i64 o) {
    T acc = T(0);
    for (i64 bn = 0; bn < n; ++bn) acc += dout[bn * fout + o];
    return acc;
}

// ---- elementwise units ----

template <typename T>
inline T bin_apply(T a, T b, BinOp op) {
    switch (op) {
        case BinOp::add: return a + b;
        case BinOp::sub: return a - b;
        case BinOp::mul: return a * b;
        case BinOp::div: return a / b;
    }
    return T(0);
}

// One inner row of a broadcast binary op. Row index is decomposed over the
// leading dims to find the operand base offsets.
template <typename T>
inline void bc_binary_row(T* __restrict out, const T* __restrict a, const T* __restrict b,
                          const BcPlan& p, BinOp op, i64 row) {
    const int last = p.rank - 1;
    const i64 inner = p.oext[last];
    i64 rest = row;
    i64 abase = 0, bbase = 0;
    for (int d = last - 1; d >= 0; --d) {
        const i64 idx = rest % p.oext[d];
        rest /= p.oext[d];
        abase += idx * p.astr[d];
        bbase += idx * p.bstr[d];
    }
    T* orow = out + row * inner;
    const i64 as = p.astr[last];
    const i64 bs = p.bstr[last];
    if (as == 1 && bs == 1) {
        const T* __restrict ap = a + abase;
        const T* __restrict bp = b + bbase;
        for (i64 i = 0; i < inner; ++i) orow[i] = bin_apply(ap[i], bp[i], op);
    } else {
        for (i64 i = 0; i < inner; ++i)
            orow[i] = bin_apply(a[abase + i * as], b[bbase + i * bs], op);
    }
}

// Sums the fiber of src that collapses onto dst element j; iteration is
// row-major over the collapsed dims.
template <typename T>
inline void reduce_fiber(T* __restrict dst_acc, const T* __restrict src, const RedPlan& p,
                         i64 j) {
    i64 sstr[kMaxRank];
    i64 s = 1;
    for (int d = p.rank - 1; d >= 0; --d) {
        sstr[d] = s;
        s *= p.oext[d];
    }
    i64 rest = j;
    i64 base = 0;
    for (int d = p.rank - 1; d >= 0; --d) {
        if (p.keep[d]) {
            const i64 idx = rest % p.oext[d];
            rest /= p.oext[d];
            base += idx * sstr[d];
        }
    }
    int fdims[kMaxRank];
    int nf = 0;
    for (int d = 0; d < p.rank; ++d) {
        if (!p.keep[d] && p.oext[d] > 1) fdims[nf++] = d;
    }
    T acc = T(0);
    if (nf == 0) {
        acc = src[base];
    } else {
        i64 idx[kMaxRank] = {};
        for (;;) {
            i64 off = base;
            for (int q = 0; q < nf; ++q) off += idx[q] * sstr[fdims[q]];
            acc += src[off];
            int q = nf - 1;
            for (; q >= 0; --q) {
                if (++idx[q] < p.oext[fdims[q]]) break;
                idx[q] = 0;
            }
            if (q < 0) break;
        }
    }
    dst_acc[j] += acc;
}

template <typename T>
inline T un_apply(T x, UnOp op, T p0, T p1) {
    switch (op) {
        case UnOp::neg: return -x;
        case UnOp::exp: return std::exp(x);
        case UnOp::log: return std::log(x);
        case UnOp::relu: return x > T(0) ? x : T(0);
        case UnOp::sigmoid: {
            // Saturation is clamped one ulp inside (0,1): the strict-range
            // contract must survive finite precision.
            T s;
            if (x >= T(0)) {
                s = T(1) / (T(1) + std::exp(-x));
            } else {
                const T e = std::exp(x);
                s = e / (T(1) + e);
            }
            const T lo = std::numeric_limits<T>::min();
            const T hi = T(1) - std::numeric_limits<T>::epsilon() / T(2);
            if (s < lo) s = lo;
            if (s > hi) s = hi;
            return s;
        }
        case UnOp::clamp: return x < p0 ? p0 : (x > p1 ? p1 : x);
    }
    return T(0);
}

// ref is the saved tensor the derivative needs: x for relu/log/clamp, the
// forward output for exp/sigmoid, unused for neg.
template <typename T>
inline T un_grad_factor(T ref, UnOp op, T p0, T p1) {
    switch (op) {
        case UnOp::neg: return T(-1);
        case UnOp::exp: return ref;
        case UnOp::log: return T(1) / ref;
        case UnOp::relu: return ref > T(0) ? T(1) : T(0);
        case UnOp::sigmoid: return ref * (T(1) - ref);
        case UnOp::clamp: return (ref >= p0 && ref <= p1) ? T(1) : T(0);
    }
    return T(0);
}

// ---- pooling units ----

template <typename T>
inline void max_pool2_row(T* __restrict out, i64* __restrict argmax, const T* __restrict x,
                          i64 c, i64 h, i64 w, i64 n, i64 cc, i64 oh) {
    const i64 ow_n = w / 2;
    const i64 plane = (n * c + cc) * h;
    T* orow = out + ((n * c + cc) * (h / 2) + oh) * ow_n;
    i64* arow = argmax + ((n * c + cc) * (h / 2) + oh) * ow_n;
    for (i64 ow = 0; ow < ow_n; ++ow) {
        const i64 ih = oh * 2;
        const i64 iw = ow * 2;
        i64 best = (plane + ih) * w + iw;
        T m = x[best];
        for (i64 kh = 0; kh < 2; ++kh) {
            for (i64 kw = 0; kw < 2; ++kw) {
                const i64 off = (plane + ih + kh) * w + iw + kw;
                const T v = x[off];
                if (v > m) {
                    m = v;
                    best = off;
                }
            }
        }
        orow[ow] = m;
        arow[ow] = best;
    }
}

template <typename T>
inline void upsample2_row(T* __restrict out, const T* __restrict x, i64 c, i64 h, i64 w, i64 n,
                          i64 cc, i64 oh) {
    const T* xrow = x + ((n * c + cc) * h + oh / 2) * w;
    T* orow = out + ((n * c + cc) * (h * 2) + oh) * (w * 2);
    for (i64 ow = 0; ow < w * 2; ++ow) orow[ow] = xrow[ow / 2];
}

template <typename T>
inline void upsample2_bwd_row(T* __restrict dx_acc, const T* __restrict g, i64 c, i64 h, i64 w,
                              i64 n, i64 cc, i64 ih) {
    const i64 oh0 = ih * 2;
    const T* g0 = g + ((n * c + cc) * (h * 2) + oh0) * (w * 2);
    const T* g1 = g0 + w * 2;
    T* dxrow = dx_acc + ((n * c + cc) * h + ih) * w;
    for (i64 iw = 0; iw < w; ++iw) {
        const i64 ow0 = iw * 2;
        dxrow[iw] += (g0[ow0] + g0[ow0 + 1]) + (g1[ow0] + g1[ow0 + 1]);
    }
}

template <typename T>
inline void global_avg_one(T* __restrict out, const T* __restrict x, i64 hw, i64 nc,
                           std::vector<T>& scratch) {
    const T* row = x + nc * hw;
    scratch.assign(row, row + hw);
    std::sort(scratch.begin(), scratch.end());
    T acc = T(0);
    for (i64 i = 0; i < hw; ++i) acc += scratch[i];
    out[nc] = acc / T(hw);
}

template <typename T>
inline void global_max_one(T* __restrict out, i64* __restrict argmax, const T* __restrict x,
                           i64 hw, i64 nc) {
    const T* row = x + nc * hw;
    T m = row[0];
    i64 best = 0;
    for (i64 i = 1; i < hw; ++i) {
        if (row[i] > m) {
            m = row[i];
            best = i;
        }
    }
    // Canonicalize a zero maximum so mixed-sign zeros cannot leak input order.
    out[nc] = (m == T(0)) ? T(0) : m;
    argmax[nc] = nc * hw + best;
}

template <typename T>
inline void channel_mean_max_px(T* __restrict out, i64* __restrict argmax,
                                const T* __restrict x, i64 c, i64 h, i64 w, i64 nn, i64 hw_idx) {
    const i64 hw = h * w;
    const T* base = x + nn * c * hw + hw_idx;
    T acc = base[0];
    T m = base[0];
    i64 best = 0;
    for (i64 cc = 1; cc < c; ++cc) {
        const T v = base[cc * hw];
        acc += v;
        if (v > m) {
            m = v;
            best = cc;
        }
    }
    T* obase = out + nn * 2 * hw + hw_idx;
    obase[0] = acc / T(c);
    obase[hw] = m;
    argmax[nn * hw + hw_idx] = best;
}

// ---- layer norm units ----

template <typename T>
inline void layer_norm_sample(T* __restrict out, T* __restrict xhat, T* __restrict inv_sigma,
                              const T* __restrict x, const T* __restrict gain,
                              const T* __restrict offset, i64 c, i64 hw, i64 n, T eps) {
    const i64 m = c * hw;
    const T* xs = x + n * m;
    T mean = T(0);
    for (i64 i = 0; i < m; ++i) mean += xs[i];
    mean /= T(m);
    T var = T(0);
    for (i64 i = 0; i < m; ++i) {
        const T d = xs[i] - mean;
        var += d * d;
    }
    var /= T(m);
    const T is = T(1) / std::sqrt(var + eps);
    inv_sigma[n] = is;
    T* xh = xhat + n * m;
    T* os = out + n * m;
    for (i64 i = 0; i < m; ++i) {
        const T v = (xs[i] - mean) * is;
        xh[i] = v;
        os[i] = gain[i / hw] * v + offset[i / hw];
    }
}

template <typename T>
inline void layer_norm_bwd_sample(T* __restrict dx_acc, const T* __restrict g,
                                  const T* __restrict xhat, const T* __restrict inv_sigma,
                                  const T* __restrict gain, i64 c, i64 hw, i64 n) {
    const i64 m = c * hw;
    const T* gs = g + n * m;
    const T* xh = xhat + n * m;
    T s1 = T(0), s2 = T(0);
    for (i64 i = 0; i < m; ++i) {
        const T gh = gs[i] * gain[i / hw];
        s1 += gh;
        s2 += gh * xh[i];
    }
    const T is = inv_sigma[n];
    const T inv_m = T(1) / T(m);
    T* dx = dx_acc + n * m;
    for (i64 i = 0; i < m; ++i) {
        const T gh = gs[i] * gain[i / hw];
        dx[i] += is * (gh - (s1 + xh[i] * s2) * inv_m);
    }
}

template <typename T>
inline void layer_norm_bwd_affine(T* __restrict dgain_acc, T* __restrict doffset_acc,
                                  const T* __restrict g, const T* __restrict xhat, i64 n, i64 c,
                                  i64 hw, i64 cc) {
    T dg = T(0), doff = T(0);
    for (i64 nn = 0; nn < n; ++nn) {
        const T* gs = g + (nn * c + cc) * hw;
        const T* xh = xhat + (nn * c + cc) * hw;
        for (i64 i = 0; i < hw; ++i) {
            dg += gs[i] * xh[i];
            doff += gs[i];
        }
    }
    if (dgain_acc) dgain_acc[cc] += dg;
    if (doffset_acc) doffset_acc[cc] += doff;
}

constexpr i64 kSumBlock = 4096;

template <typename T>
inline T sum_block(const T* __restrict x, i64 i0, i64 i1) {
    T acc = T(0);
    for (i64 i = i0; i < i1; ++i) acc += x[i];
    return acc;
}

}  // namespace floodcpf::kern::detail
