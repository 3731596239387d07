#pragma once

#include <memory>

#include "slahan/tape.hpp"

namespace slahan {

// Standard LSTM cell, no peepholes. The four gates live in one packed weight
// matrix W of shape (4H x (in + H)) applied to [x; h_prev], plus bias b (4H),
// gate order i, f, g, o:
//   i = sigmoid(a0)   f = sigmoid(a1)   g = tanh(a2)   o = sigmoid(a3)
//   c = f*c_prev + i*g ;  h = o*tanh(c)
// Fused into a single tape node (value = [h; c]) with a hand-derived
// backward; h and c are exposed as slices of it.
struct LstmOut {
    NodeId h;
    NodeId c;
};

inline LstmOut lstm_cell(Tape& t, NodeId x, NodeId h_prev, NodeId c_prev, NodeId w, NodeId b) {
    const Tensor &X = t.value(x), &H = t.value(h_prev), &C = t.value(c_prev);
    const Tensor &W = t.value(w), &B = t.value(b);
    const size_t hid = H.numel();
    const size_t in = X.numel();
    if (C.numel() != hid || W.rank() != 2 || W.rows() != 4 * hid || W.cols() != in + hid ||
        B.numel() != 4 * hid)
        throw std::invalid_argument("lstm_cell: dimension mismatch, W " + W.shape_str() +
                                    ", x " + X.shape_str() + ", h " + H.shape_str());

    struct Cache {
        std::vector<double> i, f, g, o, tanh_c;
    };
    auto cache = std::make_shared<Cache>();
    cache->i.resize(hid);
    cache->f.resize(hid);
    cache->g.resize(hid);
    cache->o.resize(hid);
    cache->tanh_c.resize(hid);

    const size_t cols = in + hid;
    Tensor out = Tensor::zeros({2 * hid});
    for (size_t r = 0; r < 4 * hid; ++r) {
        double a = B.v[r];
        const double* wr = W.v.data() + r * cols;
        for (size_t j = 0; j < in; ++j) a += wr[j] * X.v[j];
        for (size_t j = 0; j < hid; ++j) a += wr[in + j] * H.v[j];
        const size_t k = r % hid;
        switch (r / hid) {
            case 0: cache->i[k] = 1.0 / (1.0 + std::exp(-a)); break;
            case 1: cache->f[k] = 1.0 / (1.0 + std::exp(-a)); break;
            case 2: cache->g[k] = std::tanh(a); break;
            case 3: cache->o[k] = 1.0 / (1.0 + std::exp(-a)); break;
        }
    }
    for (size_t k = 0; k < hid; ++k) {
        const double c = cache->f[k] * C.v[k] + cache->i[k] * cache->g[k];
        cache->tanh_c[k] = std::tanh(c);
        out.v[hid + k] = c;
        out.v[k] = cache->o[k] * cache->tanh_c[k];
    }

    NodeId cell = t.record(std::move(out),
        [x, h_prev, c_prev, w, b, hid, in, cols, cache](Tape& t, NodeId self) {
            const Tensor& g = t.grad(self);
            const Tensor &X = t.value(x), &H = t.value(h_prev), &C = t.value(c_prev);
            const Tensor& W = t.value(w);
            Tensor &gx = t.grad(x), &gh = t.grad(h_prev), &gc = t.grad(c_prev);
            Tensor &gw = t.grad(w), &gb = t.grad(b);

            std::vector<double> ga(4 * hid); // gradients of gate pre-activations
            for (size_t k = 0; k < hid; ++k) {
                const double gh_k = g.v[k];
                const double tc = cache->tanh_c[k];
                const double gc_total = g.v[hid + k] + gh_k * cache->o[k] * (1.0 - tc * tc);
                const double gi = gc_total * cache->g[k];
                const double gf = gc_total * C.v[k];
                const double gg = gc_total * cache->i[k];
                const double go = gh_k * tc;
                ga[k] = gi * cache->i[k] * (1.0 - cache->i[k]);
                ga[hid + k] = gf * cache->f[k] * (1.0 - cache->f[k]);
                ga[2 * hid + k] = gg * (1.0 - cache->g[k] * cache->g[k]);
                ga[3 * hid + k] = go * cache->o[k] * (1.0 - cache->o[k]);
                gc.v[k] += gc_total * cache->f[k];
            }
            for (size_t r = 0; r < 4 * hid; ++r) {
                const double a = ga[r];
                if (a == 0.0) continue;
                gb.v[r] += a;
                double* gwr = gw.v.data() + r * cols;
                const double* wr = W.v.data() + r * cols;
                for (size_t j = 0; j < in; ++j) {
                    gwr[j] += a * X.v[j];
                    gx.v[j] += a * wr[j];
                }
                for (size_t j = 0; j < hid; ++j) {
                    gwr[in + j] += a * H.v[j];
                    gh.v[j] += a * wr[in + j];
                }
            }
        }, "lstm_cell");

    return LstmOut{slice(t, cell, 0, hid), slice(t, cell, hid, hid)};
}

} // namespace slahan
