#pragma once

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "encflow/nn.hpp"

namespace encflow {

enum class CellKind : uint8_t { lstm = 0, gru = 1 };

inline std::string cell_name(CellKind k) {
    return k == CellKind::lstm ? "lstm" : "gru";
}

struct RnnParams {
    CellKind cell = CellKind::lstm;
    bool bidirectional = false;
    size_t layers = 1;
    size_t hidden = 16;
    size_t epochs = 100;
    size_t batch = 32;
    double learning_rate = 0.01;
    uint64_t seed = 1;

    void validate() const {
        if (layers < 1) throw SpecInvalid("rnn layers must be >= 1");
        if (hidden < 1) throw SpecInvalid("rnn hidden width must be >= 1");
        if (epochs < 1) throw SpecInvalid("rnn epochs must be >= 1");
        if (!(learning_rate > 0)) throw SpecInvalid("learning_rate must be > 0");
    }

    size_t gates() const { return cell == CellKind::lstm ? 4 : 3; }
    size_t directions() const { return bidirectional ? 2 : 1; }
};

// Gate order is fixed by the model file: LSTM [i, f, g, o], GRU [r, z, n].
// Weights per layer and direction: W (G*H x D), U (G*H x H), b (G*H).
namespace detail {

struct LstmStepCache {
    std::vector<double> i, f, g, o, c, tanh_c;
};

// h_prev/c_prev are the incoming state; h/c receive the new one.
inline void lstm_step_cached(const double* W, const double* U, const double* b,
                             std::span<const double> x,
                             const std::vector<double>& h_prev,
                             const std::vector<double>& c_prev,
                             std::vector<double>& h, std::vector<double>& c,
                             LstmStepCache& cache, size_t H) {
    size_t D = x.size();
    cache.i.resize(H);
    cache.f.resize(H);
    cache.g.resize(H);
    cache.o.resize(H);
    cache.c.resize(H);
    cache.tanh_c.resize(H);
    h.resize(H);
    c.resize(H);
    for (size_t gate = 0; gate < 4; ++gate) {
        for (size_t j = 0; j < H; ++j) {
            size_t row = gate * H + j;
            double z = b[row];
            const double* wr = W + row * D;
            for (size_t d = 0; d < D; ++d) z += wr[d] * x[d];
            const double* ur = U + row * H;
            for (size_t k = 0; k < H; ++k) z += ur[k] * h_prev[k];
            switch (gate) {
                case 0: cache.i[j] = sigmoid(z); break;
                case 1: cache.f[j] = sigmoid(z); break;
                case 2: cache.g[j] = std::tanh(z); break;
                default: cache.o[j] = sigmoid(z); break;
            }
        }
    }
    for (size_t j = 0; j < H; ++j) {
        cache.c[j] = cache.f[j] * c_prev[j] + cache.i[j] * cache.g[j];
        cache.tanh_c[j] = std::tanh(cache.c[j]);
        c[j] = cache.c[j];
        h[j] = cache.o[j] * cache.tanh_c[j];
    }
}

struct GruStepCache {
    std::vector<double> r, z, n, rh;
};

inline void gru_step_cached(const double* W, const double* U, const double* b,
                            std::span<const double> x,
                            const std::vector<double>& h_prev,
                            std::vector<double>& h, GruStepCache& cache,
                            size_t H) {
    size_t D = x.size();
    cache.r.resize(H);
    cache.z.resize(H);
    cache.n.resize(H);
    cache.rh.resize(H);
    h.resize(H);
    for (size_t gate = 0; gate < 2; ++gate) {
        for (size_t j = 0; j < H; ++j) {
            size_t row = gate * H + j;
            double z = b[row];
            const double* wr = W + row * D;
            for (size_t d = 0; d < D; ++d) z += wr[d] * x[d];
            const double* ur = U + row * H;
            for (size_t k = 0; k < H; ++k) z += ur[k] * h_prev[k];
            (gate == 0 ? cache.r[j] : cache.z[j]) = sigmoid(z);
        }
    }
    for (size_t j = 0; j < H; ++j) cache.rh[j] = cache.r[j] * h_prev[j];
    for (size_t j = 0; j < H; ++j) {
        size_t row = 2 * H + j;
        double z = b[row];
        const double* wr = W + row * D;
        for (size_t d = 0; d < D; ++d) z += wr[d] * x[d];
        const double* ur = U + row * H;
        for (size_t k = 0; k < H; ++k) z += ur[k] * cache.rh[k];
        cache.n[j] = std::tanh(z);
    }
    for (size_t j = 0; j < H; ++j) {
        h[j] = (1.0 - cache.z[j]) * cache.n[j] + cache.z[j] * h_prev[j];
    }
}

}  // namespace detail

struct LstmState {
    std::vector<double> h;
    std::vector<double> c;
};

// Single cell step against a raw weight block; exists so the recurrence can
// be checked against a scalar transcription of the equations.
inline LstmState lstm_cell_step(const double* W, const double* U,
                                const double* b, std::span<const double> x,
                                const LstmState& state, size_t H) {
    if (state.h.size() != H || state.c.size() != H) {
        throw ShapeError("lstm state width disagrees with hidden size");
    }
    detail::LstmStepCache cache;
    LstmState out;
    detail::lstm_step_cached(W, U, b, x, state.h, state.c, out.h, out.c, cache, H);
    return out;
}

inline std::vector<double> gru_cell_step(const double* W, const double* U,
                                         const double* b,
                                         std::span<const double> x,
                                         const std::vector<double>& h,
                                         size_t H) {
    if (h.size() != H) throw ShapeError("gru state width disagrees with hidden size");
    detail::GruStepCache cache;
    std::vector<double> out;
    detail::gru_step_cached(W, U, b, x, h, out, cache, H);
    return out;
}

namespace detail {

// Flat layout: per layer, per direction: W, U, b. Then the head weights
// (final feature width) and head bias.
struct RnnNet {
    RnnParams params;
    size_t input_dim = 0;

    size_t layer_in_dim(size_t layer) const {
        return layer == 0 ? input_dim : params.hidden * params.directions();
    }

    size_t block_count(size_t layer) const {
        size_t g = params.gates(), h = params.hidden, d = layer_in_dim(layer);
        return g * h * d + g * h * h + g * h;
    }

    size_t head_width() const { return params.hidden * params.directions(); }

    size_t param_count() const {
        size_t n = 0;
        for (size_t l = 0; l < params.layers; ++l) {
            n += params.directions() * block_count(l);
        }
        return n + head_width() + 1;
    }

    size_t block_offset(size_t layer, size_t dir) const {
        size_t off = 0;
        for (size_t l = 0; l < layer; ++l) off += params.directions() * block_count(l);
        return off + dir * block_count(layer);
    }

    std::vector<double> init(Rng& rng) const {
        std::vector<double> theta(param_count(), 0.0);
        size_t g = params.gates(), h = params.hidden;
        for (size_t l = 0; l < params.layers; ++l) {
            size_t d = layer_in_dim(l);
            for (size_t dir = 0; dir < params.directions(); ++dir) {
                double* base = theta.data() + block_offset(l, dir);
                xavier_fill(base, g * h * d, d, h, rng);
                xavier_fill(base + g * h * d, g * h * h, h, h, rng);
                // biases start at zero
            }
        }
        double* head = theta.data() + param_count() - head_width() - 1;
        xavier_fill(head, head_width(), head_width(), 1, rng);
        return theta;
    }

    struct DirTrace {
        std::vector<std::vector<double>> h;  // h[t], plus caches per step
        std::vector<LstmStepCache> lstm;
        std::vector<GruStepCache> gru;
        std::vector<std::vector<double>> h_prev;
        std::vector<std::vector<double>> c_prev;
    };

    struct Trace {
        std::vector<Matrix> layer_out;  // per layer: T x (H * dirs)
        std::vector<std::vector<DirTrace>> dirs;
    };

    // Runs the full stack; seq is T x input_dim.
    double forward(const std::vector<double>& theta, const Matrix& seq,
                   Trace* trace) const {
        if (seq.cols() != input_dim) {
            throw ShapeError("sequence width disagrees with the fitted input");
        }
        size_t T = seq.rows(), H = params.hidden, dirs = params.directions();
        const Matrix* in = &seq;
        Matrix current;
        if (trace) {
            trace->layer_out.clear();
            trace->dirs.assign(params.layers, {});
        }
        for (size_t l = 0; l < params.layers; ++l) {
            size_t D = layer_in_dim(l);
            Matrix out(T, H * dirs);
            if (trace) trace->dirs[l].resize(dirs);
            for (size_t dir = 0; dir < dirs; ++dir) {
                const double* base = theta.data() + block_offset(l, dir);
                const double* W = base;
                const double* U = base + params.gates() * H * D;
                const double* b = U + params.gates() * H * H;
                std::vector<double> h(H, 0.0), c(H, 0.0), nh, nc;
                DirTrace* dt = trace ? &trace->dirs[l][dir] : nullptr;
                if (dt) {
                    dt->h.resize(T);
                    dt->h_prev.resize(T);
                    dt->c_prev.resize(T);
                    if (params.cell == CellKind::lstm) dt->lstm.resize(T);
                    else dt->gru.resize(T);
                }
                for (size_t step = 0; step < T; ++step) {
                    size_t t = dir == 0 ? step : T - 1 - step;
                    std::span<const double> x(in->row(t), D);
                    LstmStepCache scratch_l;
                    GruStepCache scratch_g;
                    LstmStepCache& lc = dt ? dt->lstm[step] : scratch_l;
                    GruStepCache& gc = dt ? dt->gru[step] : scratch_g;
                    if (dt) {
                        dt->h_prev[step] = h;
                        dt->c_prev[step] = c;
                    }
                    if (params.cell == CellKind::lstm) {
                        lstm_step_cached(W, U, b, x, h, c, nh, nc, lc, H);
                        c = nc;
                    } else {
                        gru_step_cached(W, U, b, x, h, nh, gc, H);
                    }
                    h = nh;
                    if (dt) dt->h[step] = h;
                    for (size_t j = 0; j < H; ++j) out(t, dir * H + j) = h[j];
                }
            }
            if (trace) trace->layer_out.push_back(out);
            current = std::move(out);
            in = &current;
        }
        // Head reads the final state of each direction: forward at t = T-1,
        // backward at t = 0.
        const double* head = theta.data() + param_count() - head_width() - 1;
        double logit = theta.back();
        for (size_t dir = 0; dir < dirs; ++dir) {
            size_t t = dir == 0 ? T - 1 : 0;
            for (size_t j = 0; j < H; ++j) {
                logit += head[dir * H + j] * current(t, dir * H + j);
            }
        }
        return logit;
    }

    double loss_grad(const std::vector<double>& theta, const Matrix& seq,
                     double y, std::vector<double>& grad) const {
        Trace trace;
        double logit = forward(theta, seq, &trace);
        double loss = bce_from_logit(logit, y);
        double dlogit = sigmoid(logit) - y;

        size_t T = seq.rows(), H = params.hidden, dirs = params.directions();
        const double* head = theta.data() + param_count() - head_width() - 1;
        double* ghead = grad.data() + param_count() - head_width() - 1;
        grad.back() += dlogit;

        // d(layer output), propagated down the stack.
        Matrix dout(T, H * dirs);
        const Matrix& top = trace.layer_out.back();
        for (size_t dir = 0; dir < dirs; ++dir) {
            size_t t = dir == 0 ? T - 1 : 0;
            for (size_t j = 0; j < H; ++j) {
                ghead[dir * H + j] += dlogit * top(t, dir * H + j);
                dout(t, dir * H + j) += dlogit * head[dir * H + j];
            }
        }

        for (size_t l = params.layers; l-- > 0;) {
            size_t D = layer_in_dim(l);
            Matrix din(T, D);
            const Matrix& in_mat =
                l == 0 ? seq : trace.layer_out[l - 1];
            for (size_t dir = 0; dir < dirs; ++dir) {
                const double* base = theta.data() + block_offset(l, dir);
                const double* W = base;
                const double* U = base + params.gates() * H * D;
                double* gbase = grad.data() + block_offset(l, dir);
                double* gW = gbase;
                double* gU = gbase + params.gates() * H * D;
                double* gb = gU + params.gates() * H * H;
                DirTrace& dt = trace.dirs[l][dir];

                std::vector<double> dh(H, 0.0), dc(H, 0.0);
                for (size_t step = T; step-- > 0;) {
                    size_t t = dir == 0 ? step : T - 1 - step;
                    for (size_t j = 0; j < H; ++j) dh[j] += dout(t, dir * H + j);
                    std::span<const double> x(in_mat.row(t), D);
                    const std::vector<double>& h_prev = dt.h_prev[step];
                    std::vector<double> dh_prev(H, 0.0);
                    if (params.cell == CellKind::lstm) {
                        LstmStepCache& cc = dt.lstm[step];
                        const std::vector<double>& c_prev = dt.c_prev[step];
                        std::vector<double> dz(4 * H);
                        for (size_t j = 0; j < H; ++j) {
                            double do_ = dh[j] * cc.tanh_c[j];
                            dc[j] += dh[j] * cc.o[j] *
                                     (1.0 - cc.tanh_c[j] * cc.tanh_c[j]);
                            double di = dc[j] * cc.g[j];
                            double df = dc[j] * c_prev[j];
                            double dg = dc[j] * cc.i[j];
                            dz[0 * H + j] = di * cc.i[j] * (1.0 - cc.i[j]);
                            dz[1 * H + j] = df * cc.f[j] * (1.0 - cc.f[j]);
                            dz[2 * H + j] = dg * (1.0 - cc.g[j] * cc.g[j]);
                            dz[3 * H + j] = do_ * cc.o[j] * (1.0 - cc.o[j]);
                            dc[j] *= cc.f[j];  // flows to c_prev
                        }
                        for (size_t row = 0; row < 4 * H; ++row) {
                            double d = dz[row];
                            if (d == 0.0) continue;
                            double* gwr = gW + row * D;
                            for (size_t k = 0; k < D; ++k) gwr[k] += d * x[k];
                            double* gur = gU + row * H;
                            for (size_t k = 0; k < H; ++k) gur[k] += d * h_prev[k];
                            gb[row] += d;
                            const double* wr = W + row * D;
                            for (size_t k = 0; k < D; ++k) din(t, k) += d * wr[k];
                            const double* ur = U + row * H;
                            for (size_t k = 0; k < H; ++k) dh_prev[k] += d * ur[k];
                        }
                    } else {
                        GruStepCache& cc = dt.gru[step];
                        std::vector<double> dz(3 * H, 0.0);
                        std::vector<double> drh(H, 0.0);
                        for (size_t j = 0; j < H; ++j) {
                            double dn = dh[j] * (1.0 - cc.z[j]);
                            double dzg = dh[j] * (h_prev[j] - cc.n[j]);
                            dh_prev[j] += dh[j] * cc.z[j];
                            dz[2 * H + j] = dn * (1.0 - cc.n[j] * cc.n[j]);
                            dz[1 * H + j] = dzg * cc.z[j] * (1.0 - cc.z[j]);
                        }
                        // n-row weights act on r∘h_prev, so route them first.
                        for (size_t j = 0; j < H; ++j) {
                            size_t row = 2 * H + j;
                            double d = dz[row];
                            const double* ur = U + row * H;
                            for (size_t k = 0; k < H; ++k) drh[k] += d * ur[k];
                        }
                        for (size_t j = 0; j < H; ++j) {
                            double dr = drh[j] * h_prev[j];
                            dh_prev[j] += drh[j] * cc.r[j];
                            dz[0 * H + j] = dr * cc.r[j] * (1.0 - cc.r[j]);
                        }
                        for (size_t row = 0; row < 3 * H; ++row) {
                            double d = dz[row];
                            if (d == 0.0) continue;
                            double* gwr = gW + row * D;
                            for (size_t k = 0; k < D; ++k) gwr[k] += d * x[k];
                            gb[row] += d;
                            const double* wr = W + row * D;
                            for (size_t k = 0; k < D; ++k) din(t, k) += d * wr[k];
                            double* gur = gU + row * H;
                            const double* hsrc =
                                row < 2 * H ? h_prev.data() : cc.rh.data();
                            for (size_t k = 0; k < H; ++k) gur[k] += d * hsrc[k];
                            if (row < 2 * H) {
                                const double* ur = U + row * H;
                                for (size_t k = 0; k < H; ++k) {
                                    dh_prev[k] += d * ur[k];
                                }
                            }
                        }
                    }
                    dh = dh_prev;
                }
            }
            if (l > 0) dout = std::move(din);
        }
        return loss;
    }
};

}  // namespace detail

struct RnnModel {
    RnnParams params;
    size_t input_dim = 0;
    std::vector<double> theta;
    std::vector<double> epoch_losses;

    double predict_logit(const Matrix& seq) const {
        detail::RnnNet net{params, input_dim};
        return net.forward(theta, seq, nullptr);
    }

    double predict_proba(const Matrix& seq) const {
        return sigmoid(predict_logit(seq));
    }
};

inline RnnModel fit_rnn(const std::vector<Matrix>& sequences,
                        const std::vector<int>& y, const RnnParams& params) {
    params.validate();
    if (sequences.size() != y.size()) {
        throw LengthMismatch("sequence/label count mismatch");
    }
    if (sequences.empty()) throw EmptyInput("no training sequences");
    require_binary(y);
    size_t dim = sequences[0].cols();
    for (const auto& s : sequences) {
        if (s.cols() != dim || s.rows() == 0) {
            throw ShapeError("training sequences must share their width");
        }
    }
    detail::RnnNet net{params, dim};
    Rng rng(keyed_hash(params.seed, uint64_t{0x4e4e}, params.hidden));
    RnnModel model;
    model.params = params;
    model.input_dim = dim;
    model.theta = net.init(rng);
    model.epoch_losses =
        train_epochs(net, model.theta, sequences, y, params.epochs,
                     params.batch, params.learning_rate, rng);
    return model;
}

}  // namespace encflow
