#include "sparsevid/nn.hpp"

#include <cmath>

#include "sparsevid/errors.hpp"

namespace sparsevid {

std::vector<double> sinusoidal_embedding(int pos, int dim) {
    if (dim < 2 || dim % 2 != 0) throw ArgumentError("sinusoidal_embedding: dim must be even");
    std::vector<double> e(dim);
    const int half = dim / 2;
    for (int i = 0; i < half; ++i) {
        const double freq = std::exp(-std::log(10000.0) * i / half);
        e[i] = std::sin(pos * freq);
        e[half + i] = std::cos(pos * freq);
    }
    return e;
}

std::vector<double> frame_positional_encoding(int frames, int channels) {
    std::vector<double> p(static_cast<size_t>(frames) * channels);
    const int half = channels / 2;
    for (int f = 0; f < frames; ++f)
        for (int c = 0; c < channels; ++c) {
            if (half == 0) {
                p[static_cast<size_t>(f) * channels + c] = std::sin(static_cast<double>(f));
                continue;
            }
            const int i = c % half;
            const double freq = std::exp(-std::log(10000.0) * i / half);
            p[static_cast<size_t>(f) * channels + c] =
                (c < half) ? std::sin(f * freq) : std::cos(f * freq);
        }
    return p;
}

void init_conv3x3(Tensor& w, Tensor& b, Rng& rng) {
    const int fan_in = w.shape()[1] * 9;
    fill_normal(w, rng, std::sqrt(2.0 / fan_in));
    std::fill(b.values().begin(), b.values().end(), 0.0);
}

void init_conv1x1(Tensor& w, Tensor& b, Rng& rng) {
    const int fan_in = w.shape()[1];
    fill_normal(w, rng, std::sqrt(2.0 / fan_in));
    std::fill(b.values().begin(), b.values().end(), 0.0);
}

void init_linear(Tensor& w, Tensor& b, Rng& rng) {
    const int fan_in = w.shape()[0];
    fill_normal(w, rng, std::sqrt(2.0 / fan_in));
    std::fill(b.values().begin(), b.values().end(), 0.0);
}

void ResBlock::init(ParamStore& store, const std::string& prefix, int cin, int cout,
                    int temb_dim, Rng& rng) {
    w1 = store.add(prefix + ".conv1.w", {cout, cin, 3, 3});
    b1 = store.add(prefix + ".conv1.b", {cout});
    w2 = store.add(prefix + ".conv2.w", {cout, cout, 3, 3});
    b2 = store.add(prefix + ".conv2.b", {cout});
    tw = store.add(prefix + ".temb.w", {temb_dim, cout});
    tb = store.add(prefix + ".temb.b", {cout});
    init_conv3x3(w1, b1, rng);
    init_conv3x3(w2, b2, rng);
    init_linear(tw, tb, rng);
    has_skip_proj = (cin != cout);
    if (has_skip_proj) {
        sw = store.add(prefix + ".skip.w", {cout, cin});
        sb = store.add(prefix + ".skip.b", {cout});
        init_conv1x1(sw, sb, rng);
    }
}

Tensor ResBlock::forward(const Tensor& x, const Tensor& temb) const {
    Tensor h = silu(conv3x3(x, w1, b1));
    h = add_channel_vec(h, linear_vec(temb, tw, tb));
    h = conv3x3(silu(h), w2, b2);
    Tensor skip = has_skip_proj ? conv1x1(x, sw, sb) : x;
    return add(h, skip);
}

void TemporalAttnBlock::init(ParamStore& store, const std::string& prefix, int channels,
                             Rng& rng) {
    wq = store.add(prefix + ".wq", {channels, channels});
    wk = store.add(prefix + ".wk", {channels, channels});
    wv = store.add(prefix + ".wv", {channels, channels});
    wo = store.add(prefix + ".wo", {channels, channels});
    const double s = 1.0 / std::sqrt(static_cast<double>(channels));
    fill_normal(wq, rng, s);
    fill_normal(wk, rng, s);
    fill_normal(wv, rng, s);
    fill_normal(wo, rng, 0.1 * s);  // small output scale keeps residual near identity
}

Tensor TemporalAttnBlock::forward(const Tensor& x) const {
    const int N = x.shape()[0], C = x.shape()[1];
    Tensor xp = add_frame_channel_const(x, frame_positional_encoding(N, C));
    return add(x, temporal_attention(xp, wq, wk, wv, wo));
}

void CrossAttnBlock::init(ParamStore& store, const std::string& prefix, int channels,
                          int text_dim, Rng& rng) {
    wq = store.add(prefix + ".wq", {channels, channels});
    wk = store.add(prefix + ".wk", {text_dim, channels});
    wv = store.add(prefix + ".wv", {text_dim, channels});
    wo = store.add(prefix + ".wo", {channels, channels});
    fill_normal(wq, rng, 1.0 / std::sqrt(static_cast<double>(channels)));
    fill_normal(wk, rng, 1.0 / std::sqrt(static_cast<double>(text_dim)));
    fill_normal(wv, rng, 1.0 / std::sqrt(static_cast<double>(text_dim)));
    fill_normal(wo, rng, 0.1 / std::sqrt(static_cast<double>(channels)));
}

Tensor CrossAttnBlock::forward(const Tensor& x, const Tensor& txt) const {
    return add(x, cross_attention(x, txt, wq, wk, wv, wo));
}

void TimestepEmbed::init(ParamStore& store, const std::string& prefix, int dim_, Rng& rng) {
    dim = dim_;
    w1 = store.add(prefix + ".w1", {dim, dim});
    b1 = store.add(prefix + ".b1", {dim});
    w2 = store.add(prefix + ".w2", {dim, dim});
    b2 = store.add(prefix + ".b2", {dim});
    init_linear(w1, b1, rng);
    init_linear(w2, b2, rng);
}

Tensor TimestepEmbed::forward(int t) const {
    Tensor base = Tensor::from({dim}, sinusoidal_embedding(t, dim));
    return linear_vec(silu(linear_vec(base, w1, b1)), w2, b2);
}

}  // namespace sparsevid
