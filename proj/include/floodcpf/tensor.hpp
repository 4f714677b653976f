#pragma once

#include <functional>
#include <iosfwd>
#include <memory>
#include <vector>

#include "floodcpf/common.hpp"
#include "floodcpf/kernels.hpp"

namespace floodcpf {

// One vertex of the autodiff graph. Interior vertices own a backprop closure
// that scatters their grad into the parents' grads; leaves own none. A vertex
// participates in the graph only while needs_grad is set, which lets forward
// passes under NoGrad skip graph construction entirely.
template <typename T>
struct Node {
    Shape shape;
    std::vector<T> value;
    std::vector<T> grad;
    bool trainable = false;
    bool needs_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void()> backprop;

    void ensure_grad() {
        if (grad.empty()) grad.assign(value.size(), T(0));
    }
};

// Shared-ownership handle to a Node. Copies alias the same storage.
template <typename T>
class Tensor {
  public:
    Tensor() = default;
    explicit Tensor(std::shared_ptr<Node<T>> n) : node_(std::move(n)) {}

    static Tensor zeros(const Shape& s);
    static Tensor full(const Shape& s, T v);
    static Tensor from_vec(const Shape& s, std::vector<T> v);

    bool defined() const { return static_cast<bool>(node_); }
    const Shape& shape() const { return node_->shape; }
    i64 numel() const { return static_cast<i64>(node_->value.size()); }
    T* data() { return node_->value.data(); }
    const T* data() const { return node_->value.data(); }
    const std::vector<T>& value() const { return node_->value; }

    // Grad access allocates a zeroed buffer on first touch.
    T* grad() {
        node_->ensure_grad();
        return node_->grad.data();
    }
    const std::vector<T>& grad_vec() const {
        node_->ensure_grad();
        return node_->grad;
    }
    void zero_grad() { node_->grad.assign(node_->value.size(), T(0)); }

    T item() const {
        check(numel() == 1, "item: tensor is not scalar");
        return node_->value[0];
    }

    // Leaves only; grads of trainable leaves accumulate across backward calls.
    void set_trainable(bool t) {
        check(!node_->backprop, "set_trainable: not a leaf");
        node_->trainable = t;
        node_->needs_grad = t;
    }
    bool trainable() const { return node_->trainable; }

    std::shared_ptr<Node<T>> node() const { return node_; }

  private:
    std::shared_ptr<Node<T>> node_;
};

// Forward passes constructed inside a NoGrad scope build no graph.
bool grad_enabled();
class NoGrad {
  public:
    NoGrad();
    ~NoGrad();
    NoGrad(const NoGrad&) = delete;
    NoGrad& operator=(const NoGrad&) = delete;

  private:
    bool prev_;
};

// ---- elementwise, broadcasting over trailing-aligned dims ----
template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> divide(const Tensor<T>& a, const Tensor<T>& b);

// out = x * scale + shift, elementwise with scalar coefficients.
template <typename T>
Tensor<T> affine(const Tensor<T>& x, T scale, T shift);

template <typename T>
Tensor<T> exp(const Tensor<T>& x);
template <typename T>
Tensor<T> log(const Tensor<T>& x);
template <typename T>
Tensor<T> relu(const Tensor<T>& x);
// Output clamped one ulp inside (0,1); derivative uses the clamped output.
template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x);
template <typename T>
Tensor<T> clamp(const Tensor<T>& x, T lo, T hi);

// Scalar result of shape (1).
template <typename T>
Tensor<T> sum_all(const Tensor<T>& x);

// Same element count, new extents; values are copied.
template <typename T>
Tensor<T> reshape(const Tensor<T>& x, const Shape& s);

// ---- structured ops on (n,c,h,w) ----
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& k, const Tensor<T>& b, i64 pad, i64 stride,
                 bool pairsum = false);
template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b);
template <typename T>
Tensor<T> max_pool2(const Tensor<T>& x);
template <typename T>
Tensor<T> upsample2(const Tensor<T>& x);
// Pooled results have shape (n,c).
template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& x);
template <typename T>
Tensor<T> global_max_pool(const Tensor<T>& x);
// Result has 2 channels: per-pixel channel mean, then channel max.
template <typename T>
Tensor<T> channel_mean_max(const Tensor<T>& x);
template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> slice_channels(const Tensor<T>& x, i64 c0, i64 c1);
// Per-sample normalization over (c,h,w), per-channel affine.
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gain, const Tensor<T>& offset, T eps);

// Seeds the scalar root with grad 1 and propagates to every reachable vertex
// that needs grad. Interior grads are zeroed first; trainable-leaf grads
// accumulate.
template <typename T>
void backward(const Tensor<T>& root);

template <typename T>
Tensor<T> operator+(const Tensor<T>& a, const Tensor<T>& b) {
    return add(a, b);
}
template <typename T>
Tensor<T> operator-(const Tensor<T>& a, const Tensor<T>& b) {
    return sub(a, b);
}
template <typename T>
Tensor<T> operator*(const Tensor<T>& a, const Tensor<T>& b) {
    return mul(a, b);
}
template <typename T>
Tensor<T> operator/(const Tensor<T>& a, const Tensor<T>& b) {
    return divide(a, b);
}

// ---- numeric gradient check (double precision only) ----
struct GradCheckResult {
    bool ok = true;
    std::string detail;
};

// Verifies analytic grads of the trainable inputs against central differences
// of f, which must rebuild its graph from the current input values on every
// call and return a scalar. max_checks_per_tensor > 0 samples that many
// coordinates per tensor instead of sweeping all of them.
GradCheckResult grad_check(const std::function<Tensor<double>()>& f,
                           const std::vector<Tensor<double>>& inputs, double h = 1e-5,
                           double tol = 1e-4, i64 max_checks_per_tensor = 0, u64 seed = 0);

// ---- snapshot io: "TNSR v1 <dtype> <rank> <extents...>\n" + raw LE values ----
template <typename T>
const char* dtype_token();
template <typename T>
void save_tensor(std::ostream& os, const Tensor<T>& t);
template <typename T>
Tensor<T> load_tensor(std::istream& is);

}  // namespace floodcpf
