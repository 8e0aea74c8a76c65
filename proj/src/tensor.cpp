#include "sparsevid/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "sparsevid/kernels.hpp"

namespace sparsevid {
namespace {

size_t shape_size(const std::vector<int>& s) {
    size_t n = 1;
    for (int d : s) {
        if (d <= 0) throw ArgumentError("tensor dims must be positive");
        n *= static_cast<size_t>(d);
    }
    return n;
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape())
        throw ArgumentError(std::string(op) + ": shape mismatch");
}

Tensor make_op(std::vector<int> shape, std::vector<double> val,
               std::vector<NodePtr> parents,
               std::function<void(TensorNode&)> backward_fn) {
    auto n = std::make_shared<TensorNode>();
    n->shape = std::move(shape);
    n->val = std::move(val);
    n->parents = std::move(parents);
    for (const auto& p : n->parents)
        if (p->requires_grad) n->requires_grad = true;
    if (n->requires_grad) n->backward_fn = std::move(backward_fn);
    return Tensor(std::move(n));
}

// C[m,n] += A[m,k] * B[k,n]
void mm_acc(const double* a, const double* b, double* c, int m, int k, int n) {
    const auto& K = kernels();
    for (int i = 0; i < m; ++i)
        for (int l = 0; l < k; ++l)
            K.axpy(a[i * k + l], b + static_cast<size_t>(l) * n, c + static_cast<size_t>(i) * n, n);
}

// C[m,k] += A[m,n] * B[k,n]^T
void mmT_acc(const double* a, const double* b, double* c, int m, int n, int k) {
    const auto& K = kernels();
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < k; ++j)
            c[i * k + j] += K.dot(a + static_cast<size_t>(i) * n, b + static_cast<size_t>(j) * n, n);
}

// C[k,n] += A[m,k]^T * B[m,n]
void mTm_acc(const double* a, const double* b, double* c, int m, int k, int n) {
    const auto& K = kernels();
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < k; ++j)
            K.axpy(a[i * k + j], b + static_cast<size_t>(i) * n, c + static_cast<size_t>(j) * n, n);
}

void softmax_rows(double* s, int rows, int cols) {
    for (int i = 0; i < rows; ++i) {
        double* row = s + static_cast<size_t>(i) * cols;
        double mx = row[0];
        for (int j = 1; j < cols; ++j) mx = std::max(mx, row[j]);
        double z = 0.0;
        for (int j = 0; j < cols; ++j) {
            row[j] = std::exp(row[j] - mx);
            z += row[j];
        }
        const double inv = 1.0 / z;
        for (int j = 0; j < cols; ++j) row[j] *= inv;
    }
}

// Given probabilities p and upstream dp (both [rows, cols]), write ds in place of dp.
void softmax_rows_backward(const double* p, double* dp, int rows, int cols) {
    const auto& K = kernels();
    for (int i = 0; i < rows; ++i) {
        const double* pr = p + static_cast<size_t>(i) * cols;
        double* dr = dp + static_cast<size_t>(i) * cols;
        const double inner = K.dot(dr, pr, cols);
        for (int j = 0; j < cols; ++j) dr[j] = (dr[j] - inner) * pr[j];
    }
}

}  // namespace

Tensor Tensor::zeros(std::vector<int> shape, bool requires_grad) {
    const size_t n = shape_size(shape);
    auto node = std::make_shared<TensorNode>();
    node->shape = std::move(shape);
    node->val.assign(n, 0.0);
    node->requires_grad = requires_grad;
    return Tensor(std::move(node));
}

Tensor Tensor::full(std::vector<int> shape, double value, bool requires_grad) {
    Tensor t = zeros(std::move(shape), requires_grad);
    std::fill(t.values().begin(), t.values().end(), value);
    return t;
}

Tensor Tensor::from(std::vector<int> shape, std::vector<double> data, bool requires_grad) {
    if (shape_size(shape) != data.size())
        throw ArgumentError("Tensor::from: data length does not match shape");
    auto node = std::make_shared<TensorNode>();
    node->shape = std::move(shape);
    node->val = std::move(data);
    node->requires_grad = requires_grad;
    return Tensor(std::move(node));
}

double Tensor::scalar() const {
    if (size() != 1) throw ArgumentError("scalar() on non-scalar tensor");
    return node_->val[0];
}

void Tensor::backward() {
    if (size() != 1) throw ArgumentError("backward() requires a scalar root");
    // Iterative DFS topological order.
    std::vector<TensorNode*> order;
    std::unordered_set<TensorNode*> visited;
    std::vector<std::pair<TensorNode*, size_t>> stack;
    stack.emplace_back(node_.get(), 0);
    visited.insert(node_.get());
    while (!stack.empty()) {
        auto& [node, idx] = stack.back();
        if (idx < node->parents.size()) {
            TensorNode* p = node->parents[idx++].get();
            if (p->requires_grad && !visited.count(p)) {
                visited.insert(p);
                stack.emplace_back(p, 0);
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    for (TensorNode* n : order) n->ensure_grad();
    node_->grad[0] = 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        TensorNode* n = *it;
        if (n->backward_fn) {
            for (auto& p : n->parents)
                if (p->requires_grad) p->ensure_grad();
            n->backward_fn(*n);
        }
    }
}

Tensor add(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "add");
    std::vector<double> out(a.size());
    kernels().add(a.data(), b.data(), out.data(), a.size());
    return make_op(a.shape(), std::move(out), {a.node(), b.node()}, [](TensorNode& n) {
        const auto& K = kernels();
        if (n.parents[0]->requires_grad)
            K.axpy(1.0, n.grad.data(), n.parents[0]->grad.data(), n.grad.size());
        if (n.parents[1]->requires_grad)
            K.axpy(1.0, n.grad.data(), n.parents[1]->grad.data(), n.grad.size());
    });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "sub");
    std::vector<double> out(a.size());
    kernels().sub(a.data(), b.data(), out.data(), a.size());
    return make_op(a.shape(), std::move(out), {a.node(), b.node()}, [](TensorNode& n) {
        const auto& K = kernels();
        if (n.parents[0]->requires_grad)
            K.axpy(1.0, n.grad.data(), n.parents[0]->grad.data(), n.grad.size());
        if (n.parents[1]->requires_grad)
            K.axpy(-1.0, n.grad.data(), n.parents[1]->grad.data(), n.grad.size());
    });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "mul");
    std::vector<double> out(a.size());
    kernels().mul(a.data(), b.data(), out.data(), a.size());
    return make_op(a.shape(), std::move(out), {a.node(), b.node()}, [](TensorNode& n) {
        const auto& K = kernels();
        if (n.parents[0]->requires_grad)
            K.fmadd(n.grad.data(), n.parents[1]->val.data(), n.parents[0]->grad.data(), n.grad.size());
        if (n.parents[1]->requires_grad)
            K.fmadd(n.grad.data(), n.parents[0]->val.data(), n.parents[1]->grad.data(), n.grad.size());
    });
}

Tensor scale(const Tensor& x, double s) {
    std::vector<double> out(x.values());
    kernels().scale(s, out.data(), out.size());
    return make_op(x.shape(), std::move(out), {x.node()}, [s](TensorNode& n) {
        kernels().axpy(s, n.grad.data(), n.parents[0]->grad.data(), n.grad.size());
    });
}

Tensor silu(const Tensor& x) {
    const size_t n = x.size();
    std::vector<double> out(n);
    const double* xv = x.data();
    for (size_t i = 0; i < n; ++i) {
        const double s = 1.0 / (1.0 + std::exp(-xv[i]));
        out[i] = xv[i] * s;
    }
    return make_op(x.shape(), std::move(out), {x.node()}, [](TensorNode& nd) {
        const double* xv = nd.parents[0]->val.data();
        double* gx = nd.parents[0]->grad.data();
        const double* g = nd.grad.data();
        for (size_t i = 0; i < nd.grad.size(); ++i) {
            const double s = 1.0 / (1.0 + std::exp(-xv[i]));
            gx[i] += g[i] * s * (1.0 + xv[i] * (1.0 - s));
        }
    });
}

Tensor sum_all(const Tensor& x) {
    std::vector<double> out{kernels().sum(x.data(), x.size())};
    return make_op({1}, std::move(out), {x.node()}, [](TensorNode& n) {
        const double g = n.grad[0];
        double* gx = n.parents[0]->grad.data();
        for (size_t i = 0; i < n.parents[0]->val.size(); ++i) gx[i] += g;
    });
}

Tensor mse(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "mse");
    const size_t n = a.size();
    std::vector<double> out{kernels().sumsq_diff(a.data(), b.data(), n) / static_cast<double>(n)};
    return make_op({1}, std::move(out), {a.node(), b.node()}, [n](TensorNode& nd) {
        const double c = 2.0 * nd.grad[0] / static_cast<double>(n);
        const double* av = nd.parents[0]->val.data();
        const double* bv = nd.parents[1]->val.data();
        for (size_t i = 0; i < n; ++i) {
            const double d = c * (av[i] - bv[i]);
            if (nd.parents[0]->requires_grad) nd.parents[0]->grad[i] += d;
            if (nd.parents[1]->requires_grad) nd.parents[1]->grad[i] -= d;
        }
    });
}

Tensor add_channel_vec(const Tensor& x, const Tensor& v) {
    if (x.shape().size() != 4) throw ArgumentError("add_channel_vec: x must be rank 4");
    const int N = x.shape()[0], C = x.shape()[1], H = x.shape()[2], W = x.shape()[3];
    if (v.shape() != std::vector<int>{C})
        throw ArgumentError("add_channel_vec: v must be [C]");
    std::vector<double> out(x.values());
    const size_t plane = static_cast<size_t>(H) * W;
    for (int f = 0; f < N; ++f)
        for (int c = 0; c < C; ++c) {
            double* p = out.data() + (static_cast<size_t>(f) * C + c) * plane;
            const double vc = v.data()[c];
            for (size_t i = 0; i < plane; ++i) p[i] += vc;
        }
    return make_op(x.shape(), std::move(out), {x.node(), v.node()},
                   [N, C, plane](TensorNode& nd) {
        const auto& K = kernels();
        if (nd.parents[0]->requires_grad)
            K.axpy(1.0, nd.grad.data(), nd.parents[0]->grad.data(), nd.grad.size());
        if (nd.parents[1]->requires_grad) {
            for (int f = 0; f < N; ++f)
                for (int c = 0; c < C; ++c)
                    nd.parents[1]->grad[c] +=
                        K.sum(nd.grad.data() + (static_cast<size_t>(f) * C + c) * plane, plane);
        }
    });
}

Tensor add_frame_channel_const(const Tensor& x, const std::vector<double>& p) {
    if (x.shape().size() != 4) throw ArgumentError("add_frame_channel_const: x must be rank 4");
    const int N = x.shape()[0], C = x.shape()[1], H = x.shape()[2], W = x.shape()[3];
    if (p.size() != static_cast<size_t>(N) * C)
        throw ArgumentError("add_frame_channel_const: p must be [N*C]");
    std::vector<double> out(x.values());
    const size_t plane = static_cast<size_t>(H) * W;
    for (int f = 0; f < N; ++f)
        for (int c = 0; c < C; ++c) {
            double* o = out.data() + (static_cast<size_t>(f) * C + c) * plane;
            const double pc = p[static_cast<size_t>(f) * C + c];
            for (size_t i = 0; i < plane; ++i) o[i] += pc;
        }
    return make_op(x.shape(), std::move(out), {x.node()}, [](TensorNode& nd) {
        kernels().axpy(1.0, nd.grad.data(), nd.parents[0]->grad.data(), nd.grad.size());
    });
}

Tensor conv3x3(const Tensor& x, const Tensor& w, const Tensor& b, int stride) {
    if (x.shape().size() != 4) throw ArgumentError("conv3x3: x must be rank 4");
    const int N = x.shape()[0], Ci = x.shape()[1], H = x.shape()[2], W = x.shape()[3];
    if (w.shape().size() != 4 || w.shape()[1] != Ci || w.shape()[2] != 3 || w.shape()[3] != 3)
        throw ArgumentError("conv3x3: weight must be [Co,Ci,3,3]");
    const int Co = w.shape()[0];
    if (b.shape() != std::vector<int>{Co}) throw ArgumentError("conv3x3: bias must be [Co]");
    if (stride != 1 && stride != 2) throw ArgumentError("conv3x3: stride must be 1 or 2");
    if (stride == 2 && (H % 2 != 0 || W % 2 != 0))
        throw ArgumentError("conv3x3: stride-2 needs even spatial dims");
    const int Ho = (stride == 1) ? H : H / 2;
    const int Wo = (stride == 1) ? W : W / 2;

    const size_t in_plane = static_cast<size_t>(H) * W;
    const size_t out_plane = static_cast<size_t>(Ho) * Wo;
    std::vector<double> out(static_cast<size_t>(N) * Co * out_plane);
    const double* xv = x.data();
    const double* wv = w.data();
    const auto& K = kernels();

    for (int f = 0; f < N; ++f) {
        const double* xin = xv + static_cast<size_t>(f) * Ci * in_plane;
        double* xout = out.data() + static_cast<size_t>(f) * Co * out_plane;
        for (int co = 0; co < Co; ++co) {
            double* oplane = xout + static_cast<size_t>(co) * out_plane;
            std::fill(oplane, oplane + out_plane, b.data()[co]);
            for (int ci = 0; ci < Ci; ++ci) {
                const double* iplane = xin + static_cast<size_t>(ci) * in_plane;
                const double* wk = wv + (static_cast<size_t>(co) * Ci + ci) * 9;
                if (stride == 1) {
                    for (int y = 0; y < H; ++y) {
                        for (int ky = 0; ky < 3; ++ky) {
                            const int yin = y + ky - 1;
                            if (yin < 0 || yin >= H) continue;
                            const double* irow = iplane + static_cast<size_t>(yin) * W;
                            double* orow = oplane + static_cast<size_t>(y) * W;
                            for (int kx = 0; kx < 3; ++kx) {
                                const double wgt = wk[ky * 3 + kx];
                                const int x0 = std::max(0, 1 - kx);
                                const int x1 = std::min(W, W + 1 - kx);
                                if (x1 > x0)
                                    K.axpy(wgt, irow + x0 + kx - 1, orow + x0, x1 - x0);
                            }
                        }
                    }
                } else {
                    for (int y = 0; y < Ho; ++y)
                        for (int xo = 0; xo < Wo; ++xo) {
                            double acc = 0.0;
                            for (int ky = 0; ky < 3; ++ky) {
                                const int yin = 2 * y + ky - 1;
                                if (yin < 0 || yin >= H) continue;
                                for (int kx = 0; kx < 3; ++kx) {
                                    const int xi = 2 * xo + kx - 1;
                                    if (xi < 0 || xi >= W) continue;
                                    acc += wk[ky * 3 + kx] * iplane[static_cast<size_t>(yin) * W + xi];
                                }
                            }
                            oplane[static_cast<size_t>(y) * Wo + xo] += acc;
                        }
                }
            }
        }
    }

    return make_op({N, Co, Ho, Wo}, std::move(out), {x.node(), w.node(), b.node()},
                   [N, Ci, Co, H, W, Ho, Wo, stride](TensorNode& nd) {
        const auto& K = kernels();
        const size_t in_plane = static_cast<size_t>(H) * W;
        const size_t out_plane = static_cast<size_t>(Ho) * Wo;
        TensorNode& xn = *nd.parents[0];
        TensorNode& wn = *nd.parents[1];
        TensorNode& bn = *nd.parents[2];
        for (int f = 0; f < N; ++f) {
            const double* go = nd.grad.data() + static_cast<size_t>(f) * Co * out_plane;
            const double* xin = xn.val.data() + static_cast<size_t>(f) * Ci * in_plane;
            for (int co = 0; co < Co; ++co) {
                const double* gplane = go + static_cast<size_t>(co) * out_plane;
                if (bn.requires_grad) bn.grad[co] += K.sum(gplane, out_plane);
                for (int ci = 0; ci < Ci; ++ci) {
                    const double* iplane = xin + static_cast<size_t>(ci) * in_plane;
                    const double* wk = wn.val.data() + (static_cast<size_t>(co) * Ci + ci) * 9;
                    double* gwk = wn.requires_grad
                                      ? wn.grad.data() + (static_cast<size_t>(co) * Ci + ci) * 9
                                      : nullptr;
                    double* gi = xn.requires_grad
                                     ? xn.grad.data() + (static_cast<size_t>(f) * Ci + ci) * in_plane
                                     : nullptr;
                    if (stride == 1) {
                        for (int y = 0; y < H; ++y) {
                            const double* grow = gplane + static_cast<size_t>(y) * Wo;
                            for (int ky = 0; ky < 3; ++ky) {
                                const int yin = y + ky - 1;
                                if (yin < 0 || yin >= H) continue;
                                for (int kx = 0; kx < 3; ++kx) {
                                    const int x0 = std::max(0, 1 - kx);
                                    const int x1 = std::min(W, W + 1 - kx);
                                    if (x1 <= x0) continue;
                                    const size_t off = static_cast<size_t>(yin) * W + x0 + kx - 1;
                                    if (gwk)
                                        gwk[ky * 3 + kx] += K.dot(grow + x0, iplane + off, x1 - x0);
                                    if (gi)
                                        K.axpy(wk[ky * 3 + kx], grow + x0, gi + off, x1 - x0);
                                }
                            }
                        }
                    } else {
                        for (int y = 0; y < Ho; ++y)
                            for (int xo = 0; xo < Wo; ++xo) {
                                const double g = gplane[static_cast<size_t>(y) * Wo + xo];
                                for (int ky = 0; ky < 3; ++ky) {
                                    const int yin = 2 * y + ky - 1;
                                    if (yin < 0 || yin >= H) continue;
                                    for (int kx = 0; kx < 3; ++kx) {
                                        const int xi = 2 * xo + kx - 1;
                                        if (xi < 0 || xi >= W) continue;
                                        const size_t off = static_cast<size_t>(yin) * W + xi;
                                        if (gwk) gwk[ky * 3 + kx] += g * iplane[off];
                                        if (gi) gi[off] += wk[ky * 3 + kx] * g;
                                    }
                                }
                            }
                    }
                }
            }
        }
    });
}

Tensor conv1x1(const Tensor& x, const Tensor& w, const Tensor& b) {
    if (x.shape().size() != 4) throw ArgumentError("conv1x1: x must be rank 4");
    const int N = x.shape()[0], Ci = x.shape()[1], H = x.shape()[2], W = x.shape()[3];
    if (w.shape().size() != 2 || w.shape()[1] != Ci)
        throw ArgumentError("conv1x1: weight must be [Co,Ci]");
    const int Co = w.shape()[0];
    if (b.shape() != std::vector<int>{Co}) throw ArgumentError("conv1x1: bias must be [Co]");
    const size_t plane = static_cast<size_t>(H) * W;
    std::vector<double> out(static_cast<size_t>(N) * Co * plane);
    const auto& K = kernels();
    for (int f = 0; f < N; ++f) {
        const double* xin = x.data() + static_cast<size_t>(f) * Ci * plane;
        double* xout = out.data() + static_cast<size_t>(f) * Co * plane;
        for (int co = 0; co < Co; ++co) {
            double* oplane = xout + static_cast<size_t>(co) * plane;
            std::fill(oplane, oplane + plane, b.data()[co]);
            for (int ci = 0; ci < Ci; ++ci)
                K.axpy(w.data()[co * Ci + ci], xin + static_cast<size_t>(ci) * plane, oplane, plane);
        }
    }
    return make_op({N, Co, H, W}, std::move(out), {x.node(), w.node(), b.node()},
                   [N, Ci, Co, plane](TensorNode& nd) {
        const auto& K = kernels();
        TensorNode& xn = *nd.parents[0];
        TensorNode& wn = *nd.parents[1];
        TensorNode& bn = *nd.parents[2];
        for (int f = 0; f < N; ++f) {
            const double* go = nd.grad.data() + static_cast<size_t>(f) * Co * plane;
            const double* xin = xn.val.data() + static_cast<size_t>(f) * Ci * plane;
            for (int co = 0; co < Co; ++co) {
                const double* gplane = go + static_cast<size_t>(co) * plane;
                if (bn.requires_grad) bn.grad[co] += K.sum(gplane, plane);
                for (int ci = 0; ci < Ci; ++ci) {
                    if (wn.requires_grad)
                        wn.grad[co * Ci + ci] +=
                            K.dot(gplane, xin + static_cast<size_t>(ci) * plane, plane);
                    if (xn.requires_grad)
                        K.axpy(wn.val[co * Ci + ci], gplane,
                               xn.grad.data() + (static_cast<size_t>(f) * Ci + ci) * plane, plane);
                }
            }
        }
    });
}

Tensor upsample2x(const Tensor& x) {
    if (x.shape().size() != 4) throw ArgumentError("upsample2x: x must be rank 4");
    const int N = x.shape()[0], C = x.shape()[1], H = x.shape()[2], W = x.shape()[3];
    const int Ho = 2 * H, Wo = 2 * W;
    std::vector<double> out(static_cast<size_t>(N) * C * Ho * Wo);
    for (int fc = 0; fc < N * C; ++fc) {
        const double* ip = x.data() + static_cast<size_t>(fc) * H * W;
        double* op = out.data() + static_cast<size_t>(fc) * Ho * Wo;
        for (int y = 0; y < H; ++y)
            for (int xx = 0; xx < W; ++xx) {
                const double v = ip[static_cast<size_t>(y) * W + xx];
                const size_t base = static_cast<size_t>(2 * y) * Wo + 2 * xx;
                op[base] = v;
                op[base + 1] = v;
                op[base + Wo] = v;
                op[base + Wo + 1] = v;
            }
    }
    return make_op({N, C, Ho, Wo}, std::move(out), {x.node()}, [N, C, H, W](TensorNode& nd) {
        const int Wo = 2 * W;
        for (int fc = 0; fc < N * C; ++fc) {
            double* gi = nd.parents[0]->grad.data() + static_cast<size_t>(fc) * H * W;
            const double* go = nd.grad.data() + static_cast<size_t>(fc) * 4 * H * W;
            for (int y = 0; y < H; ++y)
                for (int xx = 0; xx < W; ++xx) {
                    const size_t base = static_cast<size_t>(2 * y) * Wo + 2 * xx;
                    gi[static_cast<size_t>(y) * W + xx] +=
                        go[base] + go[base + 1] + go[base + Wo] + go[base + Wo + 1];
                }
        }
    });
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
    if (a.shape().size() != 4 || b.shape().size() != 4)
        throw ArgumentError("concat_channels: inputs must be rank 4");
    const int N = a.shape()[0], Ca = a.shape()[1], H = a.shape()[2], W = a.shape()[3];
    if (b.shape()[0] != N || b.shape()[2] != H || b.shape()[3] != W)
        throw ArgumentError("concat_channels: frame/spatial dims differ");
    const int Cb = b.shape()[1];
    const size_t plane = static_cast<size_t>(H) * W;
    std::vector<double> out(static_cast<size_t>(N) * (Ca + Cb) * plane);
    for (int f = 0; f < N; ++f) {
        std::copy_n(a.data() + static_cast<size_t>(f) * Ca * plane, Ca * plane,
                    out.data() + static_cast<size_t>(f) * (Ca + Cb) * plane);
        std::copy_n(b.data() + static_cast<size_t>(f) * Cb * plane, Cb * plane,
                    out.data() + (static_cast<size_t>(f) * (Ca + Cb) + Ca) * plane);
    }
    return make_op({N, Ca + Cb, H, W}, std::move(out), {a.node(), b.node()},
                   [N, Ca, Cb, plane](TensorNode& nd) {
        const auto& K = kernels();
        for (int f = 0; f < N; ++f) {
            if (nd.parents[0]->requires_grad)
                K.axpy(1.0, nd.grad.data() + static_cast<size_t>(f) * (Ca + Cb) * plane,
                       nd.parents[0]->grad.data() + static_cast<size_t>(f) * Ca * plane,
                       Ca * plane);
            if (nd.parents[1]->requires_grad)
                K.axpy(1.0, nd.grad.data() + (static_cast<size_t>(f) * (Ca + Cb) + Ca) * plane,
                       nd.parents[1]->grad.data() + static_cast<size_t>(f) * Cb * plane,
                       Cb * plane);
        }
    });
}

Tensor linear_vec(const Tensor& v, const Tensor& w, const Tensor& b) {
    if (v.shape().size() != 1) throw ArgumentError("linear_vec: v must be rank 1");
    const int Din = v.shape()[0];
    if (w.shape().size() != 2 || w.shape()[0] != Din)
        throw ArgumentError("linear_vec: weight must be [Din,Dout]");
    const int Dout = w.shape()[1];
    if (b.shape() != std::vector<int>{Dout}) throw ArgumentError("linear_vec: bias must be [Dout]");
    std::vector<double> out(b.values());
    mm_acc(v.data(), w.data(), out.data(), 1, Din, Dout);
    return make_op({Dout}, std::move(out), {v.node(), w.node(), b.node()},
                   [Din, Dout](TensorNode& nd) {
        TensorNode& vn = *nd.parents[0];
        TensorNode& wn = *nd.parents[1];
        TensorNode& bn = *nd.parents[2];
        if (bn.requires_grad)
            kernels().axpy(1.0, nd.grad.data(), bn.grad.data(), Dout);
        if (vn.requires_grad)
            mmT_acc(nd.grad.data(), wn.val.data(), vn.grad.data(), 1, Dout, Din);
        if (wn.requires_grad)
            mTm_acc(vn.val.data(), nd.grad.data(), wn.grad.data(), 1, Din, Dout);
    });
}

Tensor embed_rows(const Tensor& table, const std::vector<int>& ids) {
    if (table.shape().size() != 2) throw ArgumentError("embed_rows: table must be rank 2");
    const int V = table.shape()[0], D = table.shape()[1];
    if (ids.empty()) throw ArgumentError("embed_rows: empty id list");
    for (int id : ids)
        if (id < 0 || id >= V) throw ArgumentError("embed_rows: token id out of range");
    const int L = static_cast<int>(ids.size());
    std::vector<double> out(static_cast<size_t>(L) * D);
    for (int i = 0; i < L; ++i)
        std::copy_n(table.data() + static_cast<size_t>(ids[i]) * D, D,
                    out.data() + static_cast<size_t>(i) * D);
    return make_op({L, D}, std::move(out), {table.node()}, [ids, D](TensorNode& nd) {
        for (size_t i = 0; i < ids.size(); ++i)
            kernels().axpy(1.0, nd.grad.data() + i * D,
                           nd.parents[0]->grad.data() + static_cast<size_t>(ids[i]) * D, D);
    });
}

Tensor temporal_attention(const Tensor& x, const Tensor& wq, const Tensor& wk,
                          const Tensor& wv, const Tensor& wo) {
    if (x.shape().size() != 4) throw ArgumentError("temporal_attention: x must be rank 4");
    const int N = x.shape()[0], C = x.shape()[1], H = x.shape()[2], W = x.shape()[3];
    for (const Tensor* t : {&wq, &wk, &wv, &wo})
        if (t->shape() != std::vector<int>{C, C})
            throw ArgumentError("temporal_attention: projection weights must be [C,C]");
    const int P = H * W;
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(C));

    // Saved activations for backward, per pixel.
    auto saved = std::make_shared<std::vector<double>>(
        static_cast<size_t>(P) * (4 * static_cast<size_t>(N) * C + static_cast<size_t>(N) * N));
    const size_t per_pix = 4 * static_cast<size_t>(N) * C + static_cast<size_t>(N) * N;

    std::vector<double> out(x.size(), 0.0);
    std::vector<double> xs(static_cast<size_t>(N) * C);
    const size_t plane = static_cast<size_t>(H) * W;

    for (int p = 0; p < P; ++p) {
        double* buf = saved->data() + static_cast<size_t>(p) * per_pix;
        double* Q = buf;
        double* Kb = buf + static_cast<size_t>(N) * C;
        double* Vb = buf + 2 * static_cast<size_t>(N) * C;
        double* A = buf + 3 * static_cast<size_t>(N) * C;
        double* Pm = buf + 4 * static_cast<size_t>(N) * C;
        for (int f = 0; f < N; ++f)
            for (int c = 0; c < C; ++c)
                xs[static_cast<size_t>(f) * C + c] =
                    x.data()[(static_cast<size_t>(f) * C + c) * plane + p];
        std::fill(Q, Q + 3 * static_cast<size_t>(N) * C, 0.0);
        mm_acc(xs.data(), wq.data(), Q, N, C, C);
        mm_acc(xs.data(), wk.data(), Kb, N, C, C);
        mm_acc(xs.data(), wv.data(), Vb, N, C, C);
        std::fill(Pm, Pm + static_cast<size_t>(N) * N, 0.0);
        mmT_acc(Q, Kb, Pm, N, C, N);
        kernels().scale(inv_sqrt, Pm, static_cast<size_t>(N) * N);
        softmax_rows(Pm, N, N);
        std::fill(A, A + static_cast<size_t>(N) * C, 0.0);
        mm_acc(Pm, Vb, A, N, N, C);
        // out += A * Wo, scattered back to [N,C,H,W]
        std::fill(xs.begin(), xs.end(), 0.0);
        mm_acc(A, wo.data(), xs.data(), N, C, C);
        for (int f = 0; f < N; ++f)
            for (int c = 0; c < C; ++c)
                out[(static_cast<size_t>(f) * C + c) * plane + p] =
                    xs[static_cast<size_t>(f) * C + c];
    }

    return make_op(x.shape(), std::move(out),
                   {x.node(), wq.node(), wk.node(), wv.node(), wo.node()},
                   [N, C, P, plane, per_pix, inv_sqrt, saved](TensorNode& nd) {
        TensorNode& xn = *nd.parents[0];
        TensorNode& qn = *nd.parents[1];
        TensorNode& kn = *nd.parents[2];
        TensorNode& vn = *nd.parents[3];
        TensorNode& on = *nd.parents[4];
        const size_t NC = static_cast<size_t>(N) * C;
        std::vector<double> xs(NC), dO(NC), dA(NC), dV(NC), dQ(NC), dK(NC), dX(NC);
        std::vector<double> dP(static_cast<size_t>(N) * N);
        for (int p = 0; p < P; ++p) {
            const double* buf = saved->data() + static_cast<size_t>(p) * per_pix;
            const double* Q = buf;
            const double* Kb = buf + NC;
            const double* Vb = buf + 2 * NC;
            const double* A = buf + 3 * NC;
            const double* Pm = buf + 4 * NC;
            for (int f = 0; f < N; ++f)
                for (int c = 0; c < C; ++c) {
                    const size_t i = static_cast<size_t>(f) * C + c;
                    xs[i] = xn.val[(static_cast<size_t>(f) * C + c) * plane + p];
                    dO[i] = nd.grad[(static_cast<size_t>(f) * C + c) * plane + p];
                }
            // dA = dO Wo^T ; dWo += A^T dO
            std::fill(dA.begin(), dA.end(), 0.0);
            mmT_acc(dO.data(), on.val.data(), dA.data(), N, C, C);
            if (on.requires_grad) mTm_acc(A, dO.data(), on.grad.data(), N, C, C);
            // dP = dA V^T ; dV = P^T dA
            std::fill(dP.begin(), dP.end(), 0.0);
            mmT_acc(dA.data(), Vb, dP.data(), N, C, N);
            std::fill(dV.begin(), dV.end(), 0.0);
            mTm_acc(Pm, dA.data(), dV.data(), N, N, C);
            softmax_rows_backward(Pm, dP.data(), N, N);
            kernels().scale(inv_sqrt, dP.data(), dP.size());
            // dQ = dS K ; dK = dS^T Q
            std::fill(dQ.begin(), dQ.end(), 0.0);
            mm_acc(dP.data(), Kb, dQ.data(), N, N, C);
            std::fill(dK.begin(), dK.end(), 0.0);
            mTm_acc(dP.data(), Q, dK.data(), N, N, C);
            // Parameter grads and input grad.
            if (qn.requires_grad) mTm_acc(xs.data(), dQ.data(), qn.grad.data(), N, C, C);
            if (kn.requires_grad) mTm_acc(xs.data(), dK.data(), kn.grad.data(), N, C, C);
            if (vn.requires_grad) mTm_acc(xs.data(), dV.data(), vn.grad.data(), N, C, C);
            if (xn.requires_grad) {
                std::fill(dX.begin(), dX.end(), 0.0);
                mmT_acc(dQ.data(), qn.val.data(), dX.data(), N, C, C);
                mmT_acc(dK.data(), kn.val.data(), dX.data(), N, C, C);
                mmT_acc(dV.data(), vn.val.data(), dX.data(), N, C, C);
                for (int f = 0; f < N; ++f)
                    for (int c = 0; c < C; ++c)
                        xn.grad[(static_cast<size_t>(f) * C + c) * plane + p] +=
                            dX[static_cast<size_t>(f) * C + c];
            }
        }
    });
}

Tensor cross_attention(const Tensor& x, const Tensor& txt, const Tensor& wq,
                       const Tensor& wk, const Tensor& wv, const Tensor& wo) {
    if (x.shape().size() != 4) throw ArgumentError("cross_attention: x must be rank 4");
    if (txt.shape().size() != 2) throw ArgumentError("cross_attention: txt must be rank 2");
    const int N = x.shape()[0], C = x.shape()[1], H = x.shape()[2], W = x.shape()[3];
    const int L = txt.shape()[0], D = txt.shape()[1];
    if (wq.shape().size() != 2 || wq.shape()[0] != C)
        throw ArgumentError("cross_attention: wq must be [C,A]");
    const int A = wq.shape()[1];
    if (wk.shape() != std::vector<int>{D, A} || wv.shape() != std::vector<int>{D, A})
        throw ArgumentError("cross_attention: wk/wv must be [D,A]");
    if (wo.shape() != std::vector<int>{A, C})
        throw ArgumentError("cross_attention: wo must be [A,C]");
    const int M = H * W;
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(A));
    const size_t plane = static_cast<size_t>(H) * W;

    // Keys/values shared across frames.
    auto saved = std::make_shared<std::vector<double>>();
    saved->resize(2 * static_cast<size_t>(L) * A +
                  static_cast<size_t>(N) * (static_cast<size_t>(M) * A * 2 + static_cast<size_t>(M) * L));
    double* Kb = saved->data();
    double* Vb = Kb + static_cast<size_t>(L) * A;
    double* per_frame = Vb + static_cast<size_t>(L) * A;
    const size_t frame_stride = static_cast<size_t>(M) * A * 2 + static_cast<size_t>(M) * L;

    std::fill(Kb, Kb + 2 * static_cast<size_t>(L) * A, 0.0);
    mm_acc(txt.data(), wk.data(), Kb, L, D, A);
    mm_acc(txt.data(), wv.data(), Vb, L, D, A);

    std::vector<double> out(x.size(), 0.0);
    std::vector<double> xsf(static_cast<size_t>(M) * C);
    for (int f = 0; f < N; ++f) {
        double* Q = per_frame + static_cast<size_t>(f) * frame_stride;
        double* Aatt = Q + static_cast<size_t>(M) * A;
        double* Pm = Aatt + static_cast<size_t>(M) * A;
        // Gather frame as [M, C] (pixel-major rows).
        const double* xf = x.data() + static_cast<size_t>(f) * C * plane;
        for (int p = 0; p < M; ++p)
            for (int c = 0; c < C; ++c)
                xsf[static_cast<size_t>(p) * C + c] = xf[static_cast<size_t>(c) * plane + p];
        std::fill(Q, Q + static_cast<size_t>(M) * A, 0.0);
        mm_acc(xsf.data(), wq.data(), Q, M, C, A);
        std::fill(Pm, Pm + static_cast<size_t>(M) * L, 0.0);
        mmT_acc(Q, Kb, Pm, M, A, L);
        kernels().scale(inv_sqrt, Pm, static_cast<size_t>(M) * L);
        softmax_rows(Pm, M, L);
        std::fill(Aatt, Aatt + static_cast<size_t>(M) * A, 0.0);
        mm_acc(Pm, Vb, Aatt, M, L, A);
        std::fill(xsf.begin(), xsf.end(), 0.0);
        mm_acc(Aatt, wo.data(), xsf.data(), M, A, C);
        double* of = out.data() + static_cast<size_t>(f) * C * plane;
        for (int p = 0; p < M; ++p)
            for (int c = 0; c < C; ++c)
                of[static_cast<size_t>(c) * plane + p] = xsf[static_cast<size_t>(p) * C + c];
    }

    return make_op(x.shape(), std::move(out),
                   {x.node(), txt.node(), wq.node(), wk.node(), wv.node(), wo.node()},
                   [N, C, L, D, A, M, plane, frame_stride, inv_sqrt, saved](TensorNode& nd) {
        TensorNode& xn = *nd.parents[0];
        TensorNode& tn = *nd.parents[1];
        TensorNode& qn = *nd.parents[2];
        TensorNode& kn = *nd.parents[3];
        TensorNode& vn = *nd.parents[4];
        TensorNode& on = *nd.parents[5];
        const double* Kb = saved->data();
        const double* Vb = Kb + static_cast<size_t>(L) * A;
        const double* per_frame = Vb + static_cast<size_t>(L) * A;
        std::vector<double> xsf(static_cast<size_t>(M) * C), dO(static_cast<size_t>(M) * C),
            dAatt(static_cast<size_t>(M) * A), dQ(static_cast<size_t>(M) * A),
            dP(static_cast<size_t>(M) * L), dX(static_cast<size_t>(M) * C);
        std::vector<double> dK(static_cast<size_t>(L) * A, 0.0), dV(static_cast<size_t>(L) * A, 0.0);
        for (int f = 0; f < N; ++f) {
            const double* Q = per_frame + static_cast<size_t>(f) * frame_stride;
            const double* Aatt = Q + static_cast<size_t>(M) * A;
            const double* Pm = Aatt + static_cast<size_t>(M) * A;
            const double* xf = xn.val.data() + static_cast<size_t>(f) * C * plane;
            const double* gf = nd.grad.data() + static_cast<size_t>(f) * C * plane;
            for (int p = 0; p < M; ++p)
                for (int c = 0; c < C; ++c) {
                    xsf[static_cast<size_t>(p) * C + c] = xf[static_cast<size_t>(c) * plane + p];
                    dO[static_cast<size_t>(p) * C + c] = gf[static_cast<size_t>(c) * plane + p];
                }
            std::fill(dAatt.begin(), dAatt.end(), 0.0);
            mmT_acc(dO.data(), on.val.data(), dAatt.data(), M, C, A);
            if (on.requires_grad) mTm_acc(Aatt, dO.data(), on.grad.data(), M, A, C);
            std::fill(dP.begin(), dP.end(), 0.0);
            mmT_acc(dAatt.data(), Vb, dP.data(), M, A, L);
            mTm_acc(Pm, dAatt.data(), dV.data(), M, L, A);
            softmax_rows_backward(Pm, dP.data(), M, L);
            kernels().scale(inv_sqrt, dP.data(), dP.size());
            std::fill(dQ.begin(), dQ.end(), 0.0);
            mm_acc(dP.data(), Kb, dQ.data(), M, L, A);
            mTm_acc(dP.data(), Q, dK.data(), M, L, A);
            if (qn.requires_grad) mTm_acc(xsf.data(), dQ.data(), qn.grad.data(), M, C, A);
            if (xn.requires_grad) {
                std::fill(dX.begin(), dX.end(), 0.0);
                mmT_acc(dQ.data(), qn.val.data(), dX.data(), M, A, C);
                double* gx = xn.grad.data() + static_cast<size_t>(f) * C * plane;
                for (int p = 0; p < M; ++p)
                    for (int c = 0; c < C; ++c)
                        gx[static_cast<size_t>(c) * plane + p] += dX[static_cast<size_t>(p) * C + c];
            }
        }
        // Text/key/value parameter paths (keys shared across frames).
        if (kn.requires_grad) mTm_acc(tn.val.data(), dK.data(), kn.grad.data(), L, D, A);
        if (vn.requires_grad) mTm_acc(tn.val.data(), dV.data(), vn.grad.data(), L, D, A);
        if (tn.requires_grad) {
            mmT_acc(dK.data(), kn.val.data(), tn.grad.data(), L, A, D);
            mmT_acc(dV.data(), vn.val.data(), tn.grad.data(), L, A, D);
        }
    });
}

void fill_normal(Tensor& t, Rng& rng, double stddev) {
    for (double& v : t.values()) v = rng.normal() * stddev;
}

void fill_uniform(Tensor& t, Rng& rng, double lo, double hi) {
    for (double& v : t.values()) v = lo + (hi - lo) * rng.uniform();
}

}  // namespace sparsevid
