#pragma once

// Internal backend entry points. Both namespaces expose the same surface; the
// dispatcher in kernels.cpp selects one at runtime.

#include "floodcpf/kernels.hpp"

#define FLOODCPF_KERNEL_DECLS                                                                   \
    template <typename T>                                                                       \
    void conv2d_forward(T* out, const T* x, const T* k, const T* b, const ConvGeom& g);        \
    template <typename T>                                                                       \
    void conv2d_forward_pairsum(T* out, const T* x, const T* k, const T* b, const ConvGeom& g); \
    template <typename T>                                                                       \
    void conv2d_backward_input(T* dx_acc, const T* dout, const T* k, const ConvGeom& g);       \
    template <typename T>                                                                       \
    void conv2d_backward_kernel(T* dk_acc, const T* dout, const T* x, const ConvGeom& g);      \
    template <typename T>                                                                       \
    void conv2d_backward_bias(T* db_acc, const T* dout, const ConvGeom& g);                    \
    template <typename T>                                                                       \
    void linear_forward(T* y, const T* x, const T* w, const T* b, i64 bn, i64 fin, i64 fout);  \
    template <typename T>                                                                       \
    void linear_backward_input(T* dx_acc, const T* dout, const T* w, i64 bn, i64 fin,          \
                               i64 fout);                                                       \
    template <typename T>                                                                       \
    void linear_backward_weight(T* dw_acc, const T* dout, const T* x, i64 bn, i64 fin,         \
                                i64 fout);                                                      \
    template <typename T>                                                                       \
    void linear_backward_bias(T* db_acc, const T* dout, i64 bn, i64 fout);                     \
    template <typename T>                                                                       \
    void bc_binary(T* out, const T* a, const T* b, const BcPlan& p, BinOp op);                 \
    template <typename T>                                                                       \
    void reduce_to(T* dst_acc, const T* src, const RedPlan& p);                                \
    template <typename T>                                                                       \
    void unary_forward(T* out, const T* x, i64 n, UnOp op, T p0, T p1);                        \
    template <typename T>                                                                       \
    void unary_backward(T* dx_acc, const T* g, const T* ref, i64 n, UnOp op, T p0, T p1);      \
    template <typename T>                                                                       \
    void scale_shift(T* out, const T* x, i64 n, T scale, T shift);                             \
    template <typename T>                                                                       \
    void scale_shift_backward(T* dx_acc, const T* g, i64 n, T scale);                          \
    template <typename T>                                                                       \
    void accum(T* dst, const T* src, i64 n);                                                   \
    template <typename T>                                                                       \
    void fill(T* dst, i64 n, T v);                                                             \
    template <typename T>                                                                       \
    T sum_all(const T* x, i64 n);                                                              \
    template <typename T>                                                                       \
    void sum_all_backward(T* dx_acc, T g, i64 n);                                              \
    template <typename T>                                                                       \
    void max_pool2_forward(T* out, i64* argmax, const T* x, i64 n, i64 c, i64 h, i64 w);       \
    template <typename T>                                                                       \
    void max_pool2_backward(T* dx_acc, const T* g, const i64* argmax, i64 n, i64 c, i64 h,     \
                            i64 w);                                                             \
    template <typename T>                                                                       \
    void upsample2_forward(T* out, const T* x, i64 n, i64 c, i64 h, i64 w);                    \
    template <typename T>                                                                       \
    void upsample2_backward(T* dx_acc, const T* g, i64 n, i64 c, i64 h, i64 w);                \
    template <typename T>                                                                       \
    void global_avg_forward(T* out, const T* x, i64 n, i64 c, i64 h, i64 w);                   \
    template <typename T>                                                                       \
    void global_avg_backward(T* dx_acc, const T* g, i64 n, i64 c, i64 h, i64 w);               \
    template <typename T>                                                                       \
    void global_max_forward(T* out, i64* argmax, const T* x, i64 n, i64 c, i64 h, i64 w);      \
    template <typename T>                                                                       \
    void global_max_backward(T* dx_acc, const T* g, const i64* argmax, i64 n, i64 c, i64 h,    \
                             i64 w);                                                            \
    template <typename T>                                                                       \
    void channel_mean_max_forward(T* out, i64* argmax, const T* x, i64 n, i64 c, i64 h,        \
                                  i64 w);                                                       \
    template <typename T>                                                                       \
    void channel_mean_max_backward(T* dx_acc, const T* g, const i64* argmax, i64 n, i64 c,     \
                                   i64 h, i64 w);                                               \
    template <typename T>                                                                       \
    void concat_channels_forward(T* out, const T* a, const T* b, i64 n, i64 ca, i64 cb, i64 h, \
                                 i64 w);                                                        \
    template <typename T>                                                                       \
    void concat_channels_backward_a(T* da_acc, const T* g, i64 n, i64 ca, i64 cb, i64 h,       \
                                    i64 w);                                                     \
    template <typename T>                                                                       \
    void concat_channels_backward_b(T* db_acc, const T* g, i64 n, i64 ca, i64 cb, i64 h,       \
                                    i64 w);                                                     \
    template <typename T>                                                                       \
    void slice_channels_forward(T* out, const T* x, i64 n, i64 c, i64 c0, i64 c1, i64 h,       \
                                i64 w);                                                         \
    template <typename T>                                                                       \
    void slice_channels_backward(T* dx_acc, const T* g, i64 n, i64 c, i64 c0, i64 c1, i64 h,   \
                                 i64 w);                                                        \
    template <typename T>                                                                       \
    void layer_norm_forward(T* out, T* xhat, T* inv_sigma, const T* x, const T* gain,          \
                            const T* offset, i64 n, i64 c, i64 h, i64 w, T eps);               \
    template <typename T>                                                                       \
    void layer_norm_backward(T* dx_acc, T* dgain_acc, T* doffset_acc, const T* g,              \
                             const T* xhat, const T* inv_sigma, const T* gain, i64 n, i64 c,   \
                             i64 h, i64 w);

namespace floodcpf::kern::serial {
FLOODCPF_KERNEL_DECLS
}

namespace floodcpf::kern::omp {
FLOODCPF_KERNEL_DECLS
}

#undef FLOODCPF_KERNEL_DECLS

// Explicit instantiation list shared by the backend translation units.
#define FLOODCPF_KERNEL_INSTANCES(T)                                                            \
    template void conv2d_forward<T>(T*, const T*, const T*, const T*, const ConvGeom&);        \
    template void conv2d_forward_pairsum<T>(T*, const T*, const T*, const T*,                  \
                                            const ConvGeom&);                                  \
    template void conv2d_backward_input<T>(T*, const T*, const T*, const ConvGeom&);           \
    template void conv2d_backward_kernel<T>(T*, const T*, const T*, const ConvGeom&);          \
    template void conv2d_backward_bias<T>(T*, const T*, const ConvGeom&);                      \
    template void linear_forward<T>(T*, const T*, const T*, const T*, i64, i64, i64);          \
    template void linear_backward_input<T>(T*, const T*, const T*, i64, i64, i64);             \
    template void linear_backward_weight<T>(T*, const T*, const T*, i64, i64, i64);            \
    template void linear_backward_bias<T>(T*, const T*, i64, i64);                             \
    template void bc_binary<T>(T*, const T*, const T*, const BcPlan&, BinOp);                  \
    template void reduce_to<T>(T*, const T*, const RedPlan&);                                  \
    template void unary_forward<T>(T*, const T*, i64, UnOp, T, T);                             \
    template void unary_backward<T>(T*, const T*, const T*, i64, UnOp, T, T);                  \
    template void scale_shift<T>(T*, const T*, i64, T, T);                                     \
    template void scale_shift_backward<T>(T*, const T*, i64, T);                               \
    template void accum<T>(T*, const T*, i64);                                                 \
    template void fill<T>(T*, i64, T);                                                         \
    template T sum_all<T>(const T*, i64);                                                      \
    template void sum_all_backward<T>(T*, T, i64);                                             \
    template void max_pool2_forward<T>(T*, i64*, const T*, i64, i64, i64, i64);                \
    template void max_pool2_backward<T>(T*, const T*, const i64*, i64, i64, i64, i64);         \
    template void upsample2_forward<T>(T*, const T*, i64, i64, i64, i64);                      \
    template void upsample2_backward<T>(T*, const T*, i64, i64, i64, i64);                     \
    template void global_avg_forward<T>(T*, const T*, i64, i64, i64, i64);                     \
    template void global_avg_backward<T>(T*, const T*, i64, i64, i64, i64);                    \
    template void global_max_forward<T>(T*, i64*, const T*, i64, i64, i64, i64);               \
    template void global_max_backward<T>(T*, const T*, const i64*, i64, i64, i64, i64);        \
    template void channel_mean_max_forward<T>(T*, i64*, const T*, i64, i64, i64, i64);         \
    template void channel_mean_max_backward<T>(T*, const T*, const i64*, i64, i64, i64, i64);  \
    template void concat_channels_forward<T>(T*, const T*, const T*, i64, i64, i64, i64, i64); \
    template void concat_channels_backward_a<T>(T*, const T*, i64, i64, i64, i64, i64);        \
    template void concat_channels_backward_b<T>(T*, const T*, i64, i64, i64, i64, i64);        \
    template void slice_channels_forward<T>(T*, const T*, i64, i64, i64, i64, i64, i64);       \
    template void slice_channels_backward<T>(T*, const T*, i64, i64, i64, i64, i64, i64);      \
    template void layer_norm_forward<T>(T*, T*, T*, const T*, const T*, const T*, i64, i64,    \
                                        i64, i64, T);                                          \
    template void layer_norm_backward<T>(T*, T*, T*, const T*, const T*, const T*, const T*,   \
                                         i64, i64, i64, i64);
