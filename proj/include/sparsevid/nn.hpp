#pragma once

#include <string>
#include <utility>
#include <vector>

#include "sparsevid/rng.hpp"
#include "sparsevid/tensor.hpp"

namespace sparsevid {

// Named trainable parameters of a network, in construction order. The order
// is part of the checkpoint contract.
class ParamStore {
public:
    Tensor add(const std::string& name, std::vector<int> shape) {
        Tensor t = Tensor::zeros(std::move(shape), /*requires_grad=*/true);
        params_.emplace_back(name, t);
        return t;
    }
    const std::vector<std::pair<std::string, Tensor>>& all() const { return params_; }
    std::vector<std::pair<std::string, Tensor>>& all() { return params_; }

    void set_requires_grad(bool rg) {
        for (auto& [name, t] : params_) t.set_requires_grad(rg);
    }
    void zero_grad() {
        for (auto& [name, t] : params_) t.zero_grad();
    }
    size_t total_size() const {
        size_t n = 0;
        for (const auto& [name, t] : params_) n += t.size();
        return n;
    }

private:
    std::vector<std::pair<std::string, Tensor>> params_;
};

// Sinusoidal embedding of an integer position, dim must be even.
std::vector<double> sinusoidal_embedding(int pos, int dim);

// Per-(frame, channel) positional encoding used by temporal attention.
std::vector<double> frame_positional_encoding(int frames, int channels);

// conv(3x3) -> +temb -> silu -> conv(3x3), with identity or 1x1 skip.
struct ResBlock {
    Tensor w1, b1, w2, b2;
    Tensor tw, tb;  // temb projection to [cout]
    Tensor sw, sb;  // optional 1x1 skip projection
    bool has_skip_proj = false;

    void init(ParamStore& store, const std::string& prefix, int cin, int cout,
              int temb_dim, Rng& rng);
    Tensor forward(const Tensor& x, const Tensor& temb) const;
};

// Residual self-attention over the frame axis with positional encoding.
struct TemporalAttnBlock {
    Tensor wq, wk, wv, wo;
    void init(ParamStore& store, const std::string& prefix, int channels, Rng& rng);
    Tensor forward(const Tensor& x) const;
};

// Residual cross-attention from pixels to text tokens.
struct CrossAttnBlock {
    Tensor wq, wk, wv, wo;
    void init(ParamStore& store, const std::string& prefix, int channels, int text_dim,
              Rng& rng);
    Tensor forward(const Tensor& x, const Tensor& txt) const;
};

// Timestep embedding MLP: sinusoid -> linear -> silu -> linear.
struct TimestepEmbed {
    Tensor w1, b1, w2, b2;
    int dim = 0;
    void init(ParamStore& store, const std::string& prefix, int dim_, Rng& rng);
    Tensor forward(int t) const;
};

void init_conv3x3(Tensor& w, Tensor& b, Rng& rng);
void init_conv1x1(Tensor& w, Tensor& b, Rng& rng);
void init_linear(Tensor& w, Tensor& b, Rng& rng);

}  // namespace sparsevid
