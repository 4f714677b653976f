// OpenMP backend. Every kernel parallelizes over units (output rows or
// elements) that no other unit writes, and each unit runs the same shared
// per-unit routine as the serial backend, so results are bitwise identical at
// any thread count.

#include <omp.h>

#include "kernels_backend.hpp"
#include "kernels_detail.hpp"

namespace floodcpf::kern::omp {

namespace d = floodcpf::kern::detail;

template <typename T>
void conv2d_forward(T* out, const T* x, const T* k, const T* b, const ConvGeom& g) {
    const i64 units = g.n * g.co * g.oh;
#pragma omp parallel for schedule(static)
    for (i64 u = 0; u < units; ++u) {
        const i64 oh = u % g.oh;
        const i64 co = (u / g.oh) % g.co;
        const i64 n = u / (g.oh * g.co);
        d::conv_fwd_row(out, x, k, b, g, n, co, oh);
    }
}

template <typename T>
void conv2d_forward_pairsum(T* out, const T* x, const T* k, const T* b, const ConvGeom& g) {
    const i64 units = g.n * g.co * g.oh;
#pragma omp parallel for schedule(static)
    for (i64 u = 0; u < units; ++u) {
        const i64 oh = u % g.oh;
        const i64 co = (u / g.oh) % g.co;
        const i64 n = u / (g.oh * g.co);
        d::conv_fwd_row_pairsum(out, x, k, b, g, n, co, oh);
    }
}

template <typename T>
void conv2d_backward_input(T* dx_acc, const T* dout, const T* k, const ConvGeom& g) {
    const i64 units = g.n * g.ci * g.h;
#pragma omp parallel for schedule(static)
    for (i64 u = 0; u < units; ++u) {
        const i64 ih = u % g.h;
        const i64 ci = (u / g.h) % g.ci;
        const i64 n = u / (g.h * g.ci);
        d::conv_bwd_in_row(dx_acc, dout, k, g, n, ci, ih);
    }
}

template <typename T>
void conv2d_backward_kernel(T* dk_acc, const T* dout, const T* x, const ConvGeom& g) {
    const i64 units = g.co * g.ci * g.k * g.k;
#pragma omp parallel for schedule(static)
    for (i64 u = 0; u < units; ++u) {
        const i64 kw = u % g.k;
        const i64 kh = (u / g.k) % g.k;
        const i64 ci = (u / (g.k * g.k)) % g.ci;
        const i64 co = u / (g.k * g.k * g.ci);
        dk_acc[u] += d::conv_bwd_k_elem(dout, x, g, co, ci, kh, kw);
    }
}

template <typename T>
void conv2d_backward_bias(T* db_acc, const T* dout, const ConvGeom& g) {
#pragma omp parallel for schedule(static)
    for (i64 co = 0; co < g.co; ++co) db_acc[co] += d::conv_bwd_bias_elem(dout, g, co);
}

template <typename T>
void linear_forward(T* y, const T* x, const T* w, const T* b, i64 bn, i64 fin, i64 fout) {
#pragma omp parallel for schedule(static)
    for (i64 i = 0; i < bn; ++i) d::linear_fwd_row(y, x, w, b, fin, fout, i);
}

template <typename T>
void linear_backward_input(T* dx_acc, const T* dout, const T* w, i64 bn, i64 fin, i64 fout) {
#pragma omp parallel for schedule(static)
    for (i64 i = 0; i < bn; ++i) d::linear_bwd_in_row(dx_acc, dout, w, fin, fout, i);
}

template <typename T>
void linear_backward_weight(T* dw_acc, const T* dout, const T* x, i64 bn, i64 fin, i64 fout) {
    const i64 units = fout * fin;
#pragma omp parallel for schedule(static)
    for (i64 u = 0; u < units; ++u) {
        const i64 f = u % fin;
        const i64 o = u / fin;
        dw_acc[u] += d::linear_bwd_w_elem(dout, x, fin, fout, bn, o, f);
    }
}

template <typename T>
void linear_backward_bias(T* db_acc, const T* dout, i64 bn, i64 fout) {
#pragma omp parallel for schedule(static)
    for (i64 o = 0; o < fout; ++o) db_acc[o] += d::linear_bwd_b_elem(dout, fout, bn, o);
}

template <typename T>
void bc_binary(T* out, const T* a, const T* b, const BcPlan& p, BinOp op) {
    const i64 rows = p.n / p.oext[p.rank - 1];
#pragma omp parallel for schedule(static)
    for (i64 r = 0; r < rows; ++r) d::bc_binary_row(out, a, b, p, op, r);
}

template <typename T>
void reduce_to(T* dst_acc, const T* src, const RedPlan& p) {
#pragma omp parallel for schedule(static)
    for (i64 j = 0; j < p.dst_n; ++j) d::reduce_fiber(dst_acc, src, p, j);
}

template <typename T>
void unary_forward(T* out, const T* x, i64 n, UnOp op, T p0, T p1) {
#pragma omp parallel for schedule(static)
    for (i64 i = 0; i < n; ++i) out[i] = d::un_apply(x[i], op, p0, p1);
}

template <typename T>
void unary_backward(T* dx_acc, const T* g, const T* ref, i64 n, UnOp op, T p0, T p1) {
#pragma omp parallel for schedule(static)
    for (i64 i = 0; i < n; ++i) dx_acc[i] += g[i] * d::un_grad_factor(ref[i], op, p0, p1);
}

template <typename T>
void scale_shift(T* out, const T* x, i64 n, T scale, T shift) {
#pragma omp parallel for schedule(static)
    for (i64 i = 0; i < n; ++i) out[i] = x[i] * scale + shift;
}

template <typename T>
void scale_shift_backward(T* dx_acc, const T* g, i64 n, T scale) {
#pragma omp parallel for schedule(static)
    for (i64 i = 0; i < n; ++i) dx_acc[i] += g[i] * scale;
}

template <typename T>
void accum(T* dst, const T* src, i64 n) {
#pragma omp parallel for schedule(static)
    for (i64 i = 0; i < n; ++i) dst[i] += src[i];
}

template <typename T>
void fill(T* dst, i64 n, T v) {
#pragma omp parallel for schedule(static)
    for (i64 i = 0; i < n; ++i) dst[i] = v;
}

template <typename T>
T sum_all(const T* x, i64 n) {
    const i64 nb = (n + d::kSumBlock - 1) / d::kSumBlock;
    std::vector<T> partial(static_cast<std::size_t>(nb));
#pragma omp parallel for schedule(static)
    for (i64 bIdx = 0; bIdx < nb; ++bIdx)
        partial[bIdx] = d::sum_block(x, bIdx * d::kSumBlock, std::min(n, (bIdx + 1) * d::kSumBlock));
    // Partials fold serially in block order so the total matches the serial
    // backend bit for bit.
    T acc = T(0);
    for (i64 bIdx = 0; bIdx < nb; ++bIdx) acc += partial[bIdx];
    return acc;
}

template <typename T>
void sum_all_backward(T* dx_acc, T g, i64 n) {
#pragma omp parallel for schedule(static)
    for (i64 i = 0; i < n; ++i) dx_acc[i] += g;
}

template <typename T>
void max_pool2_forward(T* out, i64* argmax, const T* x, i64 n, i64 c, i64 h, i64 w) {
    const i64 units = n * c * (h / 2);
#pragma omp parallel for schedule(static)
    for (i64 u = 0; u < units; ++u) {
        const i64 oh = u % (h / 2);
        const i64 cc = (u / (h / 2)) % c;
        const i64 nn = u / ((h / 2) * c);
        d::max_pool2_row(out, argmax, x, c, h, w, nn, cc, oh);
    }
}

template <typename T>
void max_pool2_backward(T* dx_acc, const T* g, const i64* argmax, i64 n, i64 c, i64 h, i64 w) {
    // Windows do not overlap, so argmax targets are unique per output element.
    const i64 m = n * c * (h / 2) * (w / 2);
#pragma omp parallel for schedule(static)
    for (i64 i = 0; i < m; ++i) dx_acc[argmax[i]] += g[i];
}

template <typename T>
void upsample2_forward(T* out, const T* x, i64 n, i64 c, i64 h, i64 w) {
    const i64 units = n * c * (h * 2);
#pragma omp parallel for schedule(static)
    for (i64 u = 0; u < units; ++u) {
        const i64 oh = u % (h * 2);
        const i64 cc = (u / (h * 2)) % c;
        const i64 nn = u / ((h * 2) * c);
        d::upsample2_row(out, x, c, h, w, nn, cc, oh);
    }
}

template <typename T>
void upsample2_backward(T* dx_acc, const T* g, i64 n, i64 c, i64 h, i64 w) {
    const i64 units = n * c * h;
#pragma omp parallel for schedule(static)
    for (i64 u = 0; u < units; ++u) {
        const i64 ih = u % h;
        const i64 cc = (u / h) % c;
        const i64 nn = u / (h * c);
        d::upsample2_bwd_row(dx_acc, g, c, h, w, nn, cc, ih);
    }
}

template <typename T>
void global_avg_forward(T* out, const T* x, i64 n, i64 c, i64 h, i64 w) {
    const i64 units = n * c;
#pragma omp parallel
    {
        std::vector<T> scratch;
#pragma omp for schedule(static)
        for (i64 nc = 0; nc < units; ++nc) d::global_avg_one(out, x, h * w, nc, scratch);
    }
}

template <typename T>
void global_avg_backward(T* dx_acc, const T* g, i64 n, i64 c, i64 h, i64 w) {
    const i64 hw = h * w;
    const i64 units = n * c;
#pragma omp parallel for schedule(static)
    for (i64 nc = 0; nc < units; ++nc) {
        const T q = g[nc] / T(hw);
        T* row = dx_acc + nc * hw;
        for (i64 i = 0; i < hw; ++i) row[i] += q;
    }
}

template <typename T>
void global_max_forward(T* out, i64* argmax, const T* x, i64 n, i64 c, i64 h, i64 w) {
    const i64 units = n * c;
#pragma omp parallel for schedule(static)
    for (i64 nc = 0; nc < units; ++nc) d::global_max_one(out, argmax, x, h * w, nc);
}

template <typename T>
void global_max_backward(T* dx_acc, const T* g, const i64* argmax, i64 n, i64 c, i64 h, i64 w) {
    (void)h;
    (void)w;
    const i64 units = n * c;
#pragma omp parallel for schedule(static)
    for (i64 nc = 0; nc < units; ++nc) dx_acc[argmax[nc]] += g[nc];
}

template <typename T>
void channel_mean_max_forward(T* out, i64* argmax, const T* x, i64 n, i64 c, i64 h, i64 w) {
    const i64 hw = h * w;
    const i64 units = n * hw;
#pragma omp parallel for schedule(static)
    for (i64 u = 0; u < units; ++u) {
        const i64 p = u % hw;
        const i64 nn = u / hw;
        d::channel_mean_max_px(out, argmax, x, c, h, w, nn, p);
    }
}

template <typename T>
void channel_mean_max_backward(T* dx_acc, const T* g, const i64* argmax, i64 n, i64 c, i64 h,
                               i64 w) {
    const i64 hw = h * w;
    const i64 units = n * hw;
#pragma omp parallel for schedule(static)
    for (i64 u = 0; u < units; ++u) {
        const i64 p = u % hw;
        const i64 nn = u / hw;
        const T* gmean = g + nn * 2 * hw;
        const T* gmax = gmean + hw;
        const T q = gmean[p] / T(c);
        T* base = dx_acc + nn * c * hw + p;
        for (i64 cc = 0; cc < c; ++cc) base[cc * hw] += q;
        base[argmax[nn * hw + p] * hw] += gmax[p];
    }
}

template <typename T>
void concat_channels_forward(T* out, const T* a, const T* b, i64 n, i64 ca, i64 cb, i64 h,
                             i64 w) {
    const i64 hw = h * w;
#pragma omp parallel for schedule(static)
    for (i64 nn = 0; nn < n; ++nn) {
        T* obase = out + nn * (ca + cb) * hw;
        const T* abase = a + nn * ca * hw;
        const T* bbase = b + nn * cb * hw;
        for (i64 i = 0; i < ca * hw; ++i) obase[i] = abase[i];
        for (i64 i = 0; i < cb * hw; ++i) obase[ca * hw + i] = bbase[i];
    }
}

template <typename T>
void concat_channels_backward_a(T* da_acc, const T* g, i64 n, i64 ca, i64 cb, i64 h, i64 w) {
    const i64 hw = h * w;
#pragma omp parallel for schedule(static)
    for (i64 nn = 0; nn < n; ++nn) {
        const T* gbase = g + nn * (ca + cb) * hw;
        T* abase = da_acc + nn * ca * hw;
        for (i64 i = 0; i < ca * hw; ++i) abase[i] += gbase[i];
    }
}

template <typename T>
void concat_channels_backward_b(T* db_acc, const T* g, i64 n, i64 ca, i64 cb, i64 h, i64 w) {
    const i64 hw = h * w;
#pragma omp parallel for schedule(static)
    for (i64 nn = 0; nn < n; ++nn) {
        const T* gbase = g + nn * (ca + cb) * hw + ca * hw;
        T* bbase = db_acc + nn * cb * hw;
        for (i64 i = 0; i < cb * hw; ++i) bbase[i] += gbase[i];
    }
}

template <typename T>
void slice_channels_forward(T* out, const T* x, i64 n, i64 c, i64 c0, i64 c1, i64 h, i64 w) {
    const i64 hw = h * w;
    const i64 cs = c1 - c0;
#pragma omp parallel for schedule(static)
    for (i64 nn = 0; nn < n; ++nn) {
        const T* xbase = x + (nn * c + c0) * hw;
        T* obase = out + nn * cs * hw;
        for (i64 i = 0; i < cs * hw; ++i) obase[i] = xbase[i];
    }
}

template <typename T>
void slice_channels_backward(T* dx_acc, const T* g, i64 n, i64 c, i64 c0, i64 c1, i64 h, i64 w) {
    const i64 hw = h * w;
    const i64 cs = c1 - c0;
#pragma omp parallel for schedule(static)
    for (i64 nn = 0; nn < n; ++nn) {
        T* xbase = dx_acc + (nn * c + c0) * hw;
        const T* gbase = g + nn * cs * hw;
        for (i64 i = 0; i < cs * hw; ++i) xbase[i] += gbase[i];
    }
}

template <typename T>
void layer_norm_forward(T* out, T* xhat, T* inv_sigma, const T* x, const T* gain,
                        const T* offset, i64 n, i64 c, i64 h, i64 w, T eps) {
#pragma omp parallel for schedule(static)
    for (i64 nn = 0; nn < n; ++nn)
        d::layer_norm_sample(out, xhat, inv_sigma, x, gain, offset, c, h * w, nn, eps);
}

template <typename T>
void layer_norm_backward(T* dx_acc, T* dgain_acc, T* doffset_acc, const T* g, const T* xhat,
                         const T* inv_sigma, const T* gain, i64 n, i64 c, i64 h, i64 w) {
    if (dx_acc) {
#pragma omp parallel for schedule(static)
        for (i64 nn = 0; nn < n; ++nn)
            d::layer_norm_bwd_sample(dx_acc, g, xhat, inv_sigma, gain, c, h * w, nn);
    }
    if (dgain_acc || doffset_acc) {
#pragma omp parallel for schedule(static)
        for (i64 cc = 0; cc < c; ++cc)
            d::layer_norm_bwd_affine(dgain_acc, doffset_acc, g, xhat, n, c, h * w, cc);
    }
}

FLOODCPF_KERNEL_INSTANCES(float)
FLOODCPF_KERNEL_INSTANCES(double)

}  // namespace floodcpf::kern::omp
