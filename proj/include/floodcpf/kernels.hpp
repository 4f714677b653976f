#pragma once

#include "floodcpf/common.hpp"

namespace floodcpf::kern {

// Two interchangeable backends. Every kernel is written so that the OpenMP
// variant parallelizes only over independent output units while each unit's
// accumulation order is fixed; the two backends therefore produce bitwise
// identical results, which the parity tests assert on random inputs.
enum class Backend { serial, omp };

Backend backend();
void set_backend(Backend b);
Backend parse_backend(const std::string& name);

constexpr int kMaxRank = 8;
// Row buffers in the conv kernels live on the stack with this capacity.
constexpr i64 kMaxRowLen = 4096;

struct ConvGeom {
    i64 n, ci, h, w;   // input extents
    i64 co, k;         // output channels, square kernel size
    i64 pad, stride;
    i64 oh, ow;        // output spatial extents
};

ConvGeom conv_geom(i64 n, i64 ci, i64 h, i64 w, i64 co, i64 k, i64 pad, i64 stride);

// Broadcast plan for binary elementwise ops: extents of the output plus
// element strides into each operand (0 on stretched dims). Index 0 is the
// outermost dimension.
struct BcPlan {
    int rank = 1;
    i64 oext[kMaxRank] = {1};
    i64 astr[kMaxRank] = {0};
    i64 bstr[kMaxRank] = {0};
    i64 n = 1;
};

// Reduction plan for the backward of a broadcast: sums an output-shaped
// buffer down to one operand's shape (keep[d] marks dims the operand owns).
struct RedPlan {
    int rank = 1;
    i64 oext[kMaxRank] = {1};
    bool keep[kMaxRank] = {true};
    i64 dst_n = 1;
};

enum class BinOp { add, sub, mul, div };
enum class UnOp { neg, exp, log, relu, sigmoid, clamp };

// ---- convolution (cross-correlation, zero padding) ----
template <typename T>
void conv2d_forward(T* out, const T* x, const T* k, const T* b, const ConvGeom& g);
// Accumulates the two input-channel halves separately and joins them with one
// commutative add, so swapping concatenated input halves together with the
// matching kernel halves leaves the output bit-identical. Used by the fusion
// convolution, whose symmetry contract requires exactly that.
template <typename T>
void conv2d_forward_pairsum(T* out, const T* x, const T* k, const T* b, const ConvGeom& g);
template <typename T>
void conv2d_backward_input(T* dx_acc, const T* dout, const T* k, const ConvGeom& g);
template <typename T>
void conv2d_backward_kernel(T* dk_acc, const T* dout, const T* x, const ConvGeom& g);
template <typename T>
void conv2d_backward_bias(T* db_acc, const T* dout, const ConvGeom& g);

// ---- dense layer: y[bn,fo] = b[fo] + sum_f x[bn,f] * w[fo,f] ----
template <typename T>
void linear_forward(T* y, const T* x, const T* w, const T* b, i64 bn, i64 fin, i64 fout);
template <typename T>
void linear_backward_input(T* dx_acc, const T* dout, const T* w, i64 bn, i64 fin, i64 fout);
template <typename T>
void linear_backward_weight(T* dw_acc, const T* dout, const T* x, i64 bn, i64 fin, i64 fout);
template <typename T>
void linear_backward_bias(T* db_acc, const T* dout, i64 bn, i64 fout);

// ---- elementwise ----
template <typename T>
void bc_binary(T* out, const T* a, const T* b, const BcPlan& p, BinOp op);
template <typename T>
void reduce_to(T* dst_acc, const T* src, const RedPlan& p);
template <typename T>
void unary_forward(T* out, const T* x, i64 n, UnOp op, T p0 = T(0), T p1 = T(0));
// ref is the saved tensor the derivative needs: x for relu/log/clamp, the
// forward output for exp/sigmoid, unused for neg.
template <typename T>
void unary_backward(T* dx_acc, const T* g, const T* ref, i64 n, UnOp op, T p0 = T(0), T p1 = T(0));
template <typename T>
void scale_shift(T* out, const T* x, i64 n, T scale, T shift);
template <typename T>
void scale_shift_backward(T* dx_acc, const T* g, i64 n, T scale);
template <typename T>
void accum(T* dst, const T* src, i64 n);
template <typename T>
void fill(T* dst, i64 n, T v);

// Fixed-block partial sums folded in block order; the result is independent
// of the parallel split.
template <typename T>
T sum_all(const T* x, i64 n);
template <typename T>
void sum_all_backward(T* dx_acc, T g, i64 n);

// ---- pooling / resampling (argmax entries are linear offsets into x) ----
template <typename T>
void max_pool2_forward(T* out, i64* argmax, const T* x, i64 n, i64 c, i64 h, i64 w);
template <typename T>
void max_pool2_backward(T* dx_acc, const T* g, const i64* argmax, i64 n, i64 c, i64 h, i64 w);
template <typename T>
void upsample2_forward(T* out, const T* x, i64 n, i64 c, i64 h, i64 w);
template <typename T>
void upsample2_backward(T* dx_acc, const T* g, i64 n, i64 c, i64 h, i64 w);

// Spatial values are summed in ascending value order, which makes the pooled
// mean bit-invariant under any spatial permutation of the input. The channel
// attention contract depends on that invariance.
template <typename T>
void global_avg_forward(T* out, const T* x, i64 n, i64 c, i64 h, i64 w);
template <typename T>
void global_avg_backward(T* dx_acc, const T* g, i64 n, i64 c, i64 h, i64 w);
template <typename T>
void global_max_forward(T* out, i64* argmax, const T* x, i64 n, i64 c, i64 h, i64 w);
template <typename T>
void global_max_backward(T* dx_acc, const T* g, const i64* argmax, i64 n, i64 c, i64 h, i64 w);

// out has 2 channels: per-pixel mean over c, then per-pixel max over c.
// argmax holds the winning channel index per (n,h,w).
template <typename T>
void channel_mean_max_forward(T* out, i64* argmax, const T* x, i64 n, i64 c, i64 h, i64 w);
template <typename T>
void channel_mean_max_backward(T* dx_acc, const T* g, const i64* argmax, i64 n, i64 c, i64 h,
                               i64 w);

template <typename T>
void concat_channels_forward(T* out, const T* a, const T* b, i64 n, i64 ca, i64 cb, i64 h, i64 w);
template <typename T>
void concat_channels_backward_a(T* da_acc, const T* g, i64 n, i64 ca, i64 cb, i64 h, i64 w);
template <typename T>
void concat_channels_backward_b(T* db_acc, const T* g, i64 n, i64 ca, i64 cb, i64 h, i64 w);
template <typename T>
void slice_channels_forward(T* out, const T* x, i64 n, i64 c, i64 c0, i64 c1, i64 h, i64 w);
template <typename T>
void slice_channels_backward(T* dx_acc, const T* g, i64 n, i64 c, i64 c0, i64 c1, i64 h, i64 w);

// Per-sample normalization over (c,h,w) followed by a per-channel affine.
// xhat and inv_sigma are saved for the backward pass.
template <typename T>
void layer_norm_forward(T* out, T* xhat, T* inv_sigma, const T* x, const T* gain,
                        const T* offset, i64 n, i64 c, i64 h, i64 w, T eps);
template <typename T>
void layer_norm_backward(T* dx_acc, T* dgain_acc, T* doffset_acc, const T* g, const T* xhat,
                         const T* inv_sigma, const T* gain, i64 n, i64 c, i64 h, i64 w);

}  // namespace floodcpf::kern
