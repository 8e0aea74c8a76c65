#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "sparsevid/errors.hpp"
#include "sparsevid/rng.hpp"

namespace sparsevid {

// Reverse-mode autograd over dense double tensors, rank <= 4.
// Video layout convention is [N frames, C channels, H, W], row-major.

struct TensorNode;
using NodePtr = std::shared_ptr<TensorNode>;

struct TensorNode {
    std::vector<int> shape;
    std::vector<double> val;
    std::vector<double> grad;  // allocated lazily during backward
    bool requires_grad = false;
    std::vector<NodePtr> parents;
    std::function<void(TensorNode&)> backward_fn;  // accumulates into parents

    size_t size() const {
        size_t n = 1;
        for (int d : shape) n *= static_cast<size_t>(d);
        return n;
    }
    void ensure_grad() {
        if (grad.size() != val.size()) grad.assign(val.size(), 0.0);
    }
};

class Tensor {
public:
    Tensor() = default;
    explicit Tensor(NodePtr n) : node_(std::move(n)) {}

    static Tensor zeros(std::vector<int> shape, bool requires_grad = false);
    static Tensor full(std::vector<int> shape, double value, bool requires_grad = false);
    static Tensor from(std::vector<int> shape, std::vector<double> data,
                       bool requires_grad = false);

    bool valid() const { return node_ != nullptr; }
    const std::vector<int>& shape() const { return node_->shape; }
    size_t size() const { return node_->size(); }
    double* data() { return node_->val.data(); }
    const double* data() const { return node_->val.data(); }
    std::vector<double>& values() { return node_->val; }
    const std::vector<double>& values() const { return node_->val; }
    double* grad_data() { node_->ensure_grad(); return node_->grad.data(); }
    const std::vector<double>& grad() const { return node_->grad; }
    bool requires_grad() const { return node_->requires_grad; }
    void set_requires_grad(bool rg) { node_->requires_grad = rg; }
    NodePtr node() const { return node_; }

    double scalar() const;

    // Run reverse-mode accumulation from this (scalar) node.
    void backward();
    void zero_grad() { if (node_) node_->grad.assign(node_->val.size(), 0.0); }

private:
    NodePtr node_;
};

// Elementwise.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double s);
Tensor silu(const Tensor& x);

// Reductions.
Tensor sum_all(const Tensor& x);
Tensor mse(const Tensor& a, const Tensor& b);

// Broadcast adds.
Tensor add_channel_vec(const Tensor& x, const Tensor& v);  // x [N,C,H,W], v [C]
// Constant per-frame-per-channel offset (positional encoding); no grad to P.
Tensor add_frame_channel_const(const Tensor& x, const std::vector<double>& p);  // p [N*C]

// Convolutions, pad 1, kernel 3x3, stride in {1,2}. w [Co,Ci,3,3], b [Co].
Tensor conv3x3(const Tensor& x, const Tensor& w, const Tensor& b, int stride = 1);
// 1x1 projection. w [Co,Ci], b [Co].
Tensor conv1x1(const Tensor& x, const Tensor& w, const Tensor& b);

Tensor upsample2x(const Tensor& x);
Tensor concat_channels(const Tensor& a, const Tensor& b);

// Dense vector layer: v [Din], w [Din,Dout], b [Dout] -> [Dout].
Tensor linear_vec(const Tensor& v, const Tensor& w, const Tensor& b);

// Row lookup into an embedding table [V,D] -> [L,D]; gradient scatters back.
Tensor embed_rows(const Tensor& table, const std::vector<int>& ids);

// Self-attention across the frame axis, independently per pixel.
// x [N,C,H,W]; wq,wk,wv,wo all [C,C]. Returns the attended value (no residual).
Tensor temporal_attention(const Tensor& x, const Tensor& wq, const Tensor& wk,
                          const Tensor& wv, const Tensor& wo);

// Cross-attention from pixels (queries) to text tokens, per frame.
// x [N,C,H,W], txt [L,D]; wq [C,A], wk [D,A], wv [D,A], wo [A,C].
Tensor cross_attention(const Tensor& x, const Tensor& txt, const Tensor& wq,
                       const Tensor& wk, const Tensor& wv, const Tensor& wo);

// Parameter initializers.
void fill_normal(Tensor& t, Rng& rng, double stddev);
void fill_uniform(Tensor& t, Rng& rng, double lo, double hi);

}  // namespace sparsevid
