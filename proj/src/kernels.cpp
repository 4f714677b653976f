#include "floodcpf/kernels.hpp"

#include "kernels_backend.hpp"

namespace floodcpf::kern {

namespace {
Backend g_backend = Backend::omp;
}

Backend backend() { return g_backend; }

void set_backend(Backend b) { g_backend = b; }

Backend parse_backend(const std::string& name) {
    if (name == "serial") return Backend::serial;
    if (name == "omp") return Backend::omp;
    fail("unknown backend '" + name + "' (expected serial or omp)");
}

ConvGeom conv_geom(i64 n, i64 ci, i64 h, i64 w, i64 co, i64 k, i64 pad, i64 stride) {
    check(n >= 1 && ci >= 1 && h >= 1 && w >= 1 && co >= 1, "conv: extents must be positive");
    check(k >= 1 && stride >= 1 && pad >= 0, "conv: bad kernel/stride/pad");
    check(k <= h + 2 * pad && k <= w + 2 * pad, "conv: kernel larger than padded input");
    ConvGeom g;
    g.n = n;
    g.ci = ci;
    g.h = h;
    g.w = w;
    g.co = co;
    g.k = k;
    g.pad = pad;
    g.stride = stride;
    g.oh = (h + 2 * pad - k) / stride + 1;
    g.ow = (w + 2 * pad - k) / stride + 1;
    check(w <= kMaxRowLen && g.ow <= kMaxRowLen, "conv: row exceeds stack buffer");
    return g;
}

#define FLOODCPF_DISPATCH(fn, ...) \
    (g_backend == Backend::serial ? serial::fn(__VA_ARGS__) : omp::fn(__VA_ARGS__))

template <typename T>
void conv2d_forward(T* out, const T* x, const T* k, const T* b, const ConvGeom& g) {
    FLOODCPF_DISPATCH(conv2d_forward, out, x, k, b, g);
}

template <typename T>
void conv2d_forward_pairsum(T* out, const T* x, const T* k, const T* b, const ConvGeom& g) {
    check(g.ci % 2 == 0, "pairsum conv: input channels must split in half");
    FLOODCPF_DISPATCH(conv2d_forward_pairsum, out, x, k, b, g);
}

template <typename T>
void conv2d_backward_input(T* dx_acc, const T* dout, const T* k, const ConvGeom& g) {
    FLOODCPF_DISPATCH(conv2d_backward_input, dx_acc, dout, k, g);
}

template <typename T>
void conv2d_backward_kernel(T* dk_acc, const T* dout, const T* x, const ConvGeom& g) {
    FLOODCPF_DISPATCH(conv2d_backward_kernel, dk_acc, dout, x, g);
}

template <typename T>
void conv2d_backward_bias(T* db_acc, const T* dout, const ConvGeom& g) {
    FLOODCPF_DISPATCH(conv2d_backward_bias, db_acc, dout, g);
}

template <typename T>
void linear_forward(T* y, const T* x, const T* w, const T* b, i64 bn, i64 fin, i64 fout) {
    FLOODCPF_DISPATCH(linear_forward, y, x, w, b, bn, fin, fout);
}

template <typename T>
void linear_backward_input(T* dx_acc, const T* dout, const T* w, i64 bn, i64 fin, i64 fout) {
    FLOODCPF_DISPATCH(linear_backward_input, dx_acc, dout, w, bn, fin, fout);
}

template <typename T>
void linear_backward_weight(T* dw_acc, const T* dout, const T* x, i64 bn, i64 fin, i64 fout) {
    FLOODCPF_DISPATCH(linear_backward_weight, dw_acc, dout, x, bn, fin, fout);
}

template <typename T>
void linear_backward_bias(T* db_acc, const T* dout, i64 bn, i64 fout) {
    FLOODCPF_DISPATCH(linear_backward_bias, db_acc, dout, bn, fout);
}

template <typename T>
void bc_binary(T* out, const T* a, const T* b, const BcPlan& p, BinOp op) {
    FLOODCPF_DISPATCH(bc_binary, out, a, b, p, op);
}

template <typename T>
void reduce_to(T* dst_acc, const T* src, const RedPlan& p) {
    FLOODCPF_DISPATCH(reduce_to, dst_acc, src, p);
}

template <typename T>
void unary_forward(T* out, const T* x, i64 n, UnOp op, T p0, T p1) {
    FLOODCPF_DISPATCH(unary_forward, out, x, n, op, p0, p1);
}

template <typename T>
void unary_backward(T* dx_acc, const T* g, const T* ref, i64 n, UnOp op, T p0, T p1) {
    FLOODCPF_DISPATCH(unary_backward, dx_acc, g, ref, n, op, p0, p1);
}

template <typename T>
void scale_shift(T* out, const T* x, i64 n, T scale, T shift) {
    FLOODCPF_DISPATCH(scale_shift, out, x, n, scale, shift);
}

template <typename T>
void scale_shift_backward(T* dx_acc, const T* g, i64 n, T scale) {
    FLOODCPF_DISPATCH(scale_shift_backward, dx_acc, g, n, scale);
}

template <typename T>
void accum(T* dst, const T* src, i64 n) {
    FLOODCPF_DISPATCH(accum, dst, src, n);
}

template <typename T>
void fill(T* dst, i64 n, T v) {
    FLOODCPF_DISPATCH(fill, dst, n, v);
}

template <typename T>
T sum_all(const T* x, i64 n) {
    return FLOODCPF_DISPATCH(sum_all, x, n);
}

template <typename T>
void sum_all_backward(T* dx_acc, T g, i64 n) {
    FLOODCPF_DISPATCH(sum_all_backward, dx_acc, g, n);
}

template <typename T>
void max_pool2_forward(T* out, i64* argmax, const T* x, i64 n, i64 c, i64 h, i64 w) {
    check(h % 2 == 0 && w % 2 == 0, "max_pool2: extents must be even");
    FLOODCPF_DISPATCH(max_pool2_forward, out, argmax, x, n, c, h, w);
}

template <typename T>
void max_pool2_backward(T* dx_acc, const T* g, const i64* argmax, i64 n, i64 c, i64 h, i64 w) {
    FLOODCPF_DISPATCH(max_pool2_backward, dx_acc, g, argmax, n, c, h, w);
}

template <typename T>
void upsample2_forward(T* out, const T* x, i64 n, i64 c, i64 h, i64 w) {
    FLOODCPF_DISPATCH(upsample2_forward, out, x, n, c, h, w);
}

template <typename T>
void upsample2_backward(T* dx_acc, const T* g, i64 n, i64 c, i64 h, i64 w) {
    FLOODCPF_DISPATCH(upsample2_backward, dx_acc, g, n, c, h, w);
}

template <typename T>
void global_avg_forward(T* out, const T* x, i64 n, i64 c, i64 h, i64 w) {
    FLOODCPF_DISPATCH(global_avg_forward, out, x, n, c, h, w);
}

template <typename T>
void global_avg_backward(T* dx_acc, const T* g, i64 n, i64 c, i64 h, i64 w) {
    FLOODCPF_DISPATCH(global_avg_backward, dx_acc, g, n, c, h, w);
}

template <typename T>
void global_max_forward(T* out, i64* argmax, const T* x, i64 n, i64 c, i64 h, i64 w) {
    FLOODCPF_DISPATCH(global_max_forward, out, argmax, x, n, c, h, w);
}

template <typename T>
void global_max_backward(T* dx_acc, const T* g, const i64* argmax, i64 n, i64 c, i64 h, i64 w) {
    FLOODCPF_DISPATCH(global_max_backward, dx_acc, g, argmax, n, c, h, w);
}

template <typename T>
void channel_mean_max_forward(T* out, i64* argmax, const T* x, i64 n, i64 c, i64 h, i64 w) {
    FLOODCPF_DISPATCH(channel_mean_max_forward, out, argmax, x, n, c, h, w);
}

template <typename T>
void channel_mean_max_backward(T* dx_acc, const T* g, const i64* argmax, i64 n, i64 c, i64 h,
                               i64 w) {
    FLOODCPF_DISPATCH(channel_mean_max_backward, dx_acc, g, argmax, n, c, h, w);
}

template <typename T>
void concat_channels_forward(T* out, const T* a, const T* b, i64 n, i64 ca, i64 cb, i64 h,
                             i64 w) {
    FLOODCPF_DISPATCH(concat_channels_forward, out, a, b, n, ca, cb, h, w);
}

template <typename T>
void concat_channels_backward_a(T* da_acc, const T* g, i64 n, i64 ca, i64 cb, i64 h, i64 w) {
    FLOODCPF_DISPATCH(concat_channels_backward_a, da_acc, g, n, ca, cb, h, w);
}

template <typename T>
void concat_channels_backward_b(T* db_acc, const T* g, i64 n, i64 ca, i64 cb, i64 h, i64 w) {
    FLOODCPF_DISPATCH(concat_channels_backward_b, db_acc, g, n, ca, cb, h, w);
}

template <typename T>
void slice_channels_forward(T* out, const T* x, i64 n, i64 c, i64 c0, i64 c1, i64 h, i64 w) {
    check(0 <= c0 && c0 < c1 && c1 <= c, "slice_channels: bad channel range");
    FLOODCPF_DISPATCH(slice_channels_forward, out, x, n, c, c0, c1, h, w);
}

template <typename T>
void slice_channels_backward(T* dx_acc, const T* g, i64 n, i64 c, i64 c0, i64 c1, i64 h, i64 w) {
    FLOODCPF_DISPATCH(slice_channels_backward, dx_acc, g, n, c, c0, c1, h, w);
}

template <typename T>
void layer_norm_forward(T* out, T* xhat, T* inv_sigma, const T* x, const T* gain,
                        const T* offset, i64 n, i64 c, i64 h, i64 w, T eps) {
    FLOODCPF_DISPATCH(layer_norm_forward, out, xhat, inv_sigma, x, gain, offset, n, c, h, w, eps);
}

template <typename T>
void layer_norm_backward(T* dx_acc, T* dgain_acc, T* doffset_acc, const T* g, const T* xhat,
                         const T* inv_sigma, const T* gain, i64 n, i64 c, i64 h, i64 w) {
    FLOODCPF_DISPATCH(layer_norm_backward, dx_acc, dgain_acc, doffset_acc, g, xhat, inv_sigma,
                      gain, n, c, h, w);
}

#undef FLOODCPF_DISPATCH

FLOODCPF_KERNEL_INSTANCES(float)
FLOODCPF_KERNEL_INSTANCES(double)

}  // namespace floodcpf::kern
