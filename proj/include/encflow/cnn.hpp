#pragma once

#include <cmath>
#include <vector>

#include "encflow/nn.hpp"

namespace encflow {

using Tensor3 = std::vector<Matrix>;  // channel-major feature maps

struct CnnParams {
    size_t blocks = 2;
    // channels[0] is the stem width; channels[k+1] the width of block k.
    std::vector<size_t> channels = {8, 8, 8};
    size_t epochs = 100;
    size_t batch = 32;
    double learning_rate = 0.01;
    uint64_t seed = 1;

    void validate() const {
        if (blocks < 1) throw SpecInvalid("cnn needs at least one block");
        if (channels.size() != blocks + 1) {
            throw SpecInvalid("cnn channel schedule must list stem + blocks");
        }
        for (size_t c : channels) {
            if (c < 1) throw SpecInvalid("cnn channel widths must be >= 1");
        }
        if (epochs < 1) throw SpecInvalid("cnn epochs must be >= 1");
        if (!(learning_rate > 0)) throw SpecInvalid("learning_rate must be > 0");
    }
};

// 3x3 convolution, stride 1, zero same-padding. Weights are
// w[out][in][3*3] row-major; bias one per output channel.
inline Tensor3 conv3x3_same(const Tensor3& in, const double* w, const double* b,
                            size_t out_c) {
    size_t rows = in[0].rows(), cols = in[0].cols(), in_c = in.size();
    Tensor3 out(out_c, Matrix(rows, cols));
    for (size_t co = 0; co < out_c; ++co) {
        for (size_t i = 0; i < rows; ++i) {
            for (size_t j = 0; j < cols; ++j) {
                double acc = b ? b[co] : 0.0;
                for (size_t ci = 0; ci < in_c; ++ci) {
                    const double* k = w + (co * in_c + ci) * 9;
                    for (int di = -1; di <= 1; ++di) {
                        int ii = int(i) + di;
                        if (ii < 0 || ii >= int(rows)) continue;
                        for (int dj = -1; dj <= 1; ++dj) {
                            int jj = int(j) + dj;
                            if (jj < 0 || jj >= int(cols)) continue;
                            acc += k[(di + 1) * 3 + (dj + 1)] *
                                   in[ci](size_t(ii), size_t(jj));
                        }
                    }
                }
                out[co](i, j) = acc;
            }
        }
    }
    return out;
}

namespace detail {

inline void relu_inplace(Tensor3& t) {
    for (auto& m : t) {
        for (double& v : m.data()) v = v > 0 ? v : 0.0;
    }
}

// Gradient of conv3x3_same: fills weight/bias grads and the input gradient.
inline void conv3x3_backward(const Tensor3& in, const double* w,
                             const Tensor3& dout, double* gw, double* gb,
                             Tensor3* din) {
    size_t rows = in[0].rows(), cols = in[0].cols();
    size_t in_c = in.size(), out_c = dout.size();
    for (size_t co = 0; co < out_c; ++co) {
        for (size_t i = 0; i < rows; ++i) {
            for (size_t j = 0; j < cols; ++j) {
                double d = dout[co](i, j);
                if (d == 0.0) continue;
                if (gb) gb[co] += d;
                for (size_t ci = 0; ci < in_c; ++ci) {
                    const double* k = w + (co * in_c + ci) * 9;
                    double* gk = gw + (co * in_c + ci) * 9;
                    for (int di = -1; di <= 1; ++di) {
                        int ii = int(i) + di;
                        if (ii < 0 || ii >= int(rows)) continue;
                        for (int dj = -1; dj <= 1; ++dj) {
                            int jj = int(j) + dj;
                            if (jj < 0 || jj >= int(cols)) continue;
                            size_t kk = size_t((di + 1) * 3 + (dj + 1));
                            gk[kk] += d * in[ci](size_t(ii), size_t(jj));
                            if (din) {
                                (*din)[ci](size_t(ii), size_t(jj)) += d * k[kk];
                            }
                        }
                    }
                }
            }
        }
    }
}

// Stem conv + ReLU, residual blocks with identity or 1x1-projected skips,
// global average pool, affine head.
struct CnnNet {
    CnnParams params;
    size_t in_h = 0;
    size_t in_w = 0;

    size_t stem_w_count() const { return params.channels[0] * 9; }

    bool projected(size_t block) const {
        return params.channels[block] != params.channels[block + 1];
    }

    size_t block_param_count(size_t block) const {
        size_t ci = params.channels[block], co = params.channels[block + 1];
        size_t n = co * ci * 9 + co + co * co * 9 + co;
        if (projected(block)) n += co * ci;
        return n;
    }

    size_t block_offset(size_t block) const {
        size_t off = stem_w_count() + params.channels[0];
        for (size_t b = 0; b < block; ++b) off += block_param_count(b);
        return off;
    }

    size_t head_offset() const { return block_offset(params.blocks); }

    size_t param_count() const {
        return head_offset() + params.channels.back() + 1;
    }

    std::vector<double> init(Rng& rng) const {
        std::vector<double> theta(param_count(), 0.0);
        xavier_fill(theta.data(), stem_w_count(), 9, params.channels[0] * 9, rng);
        for (size_t b = 0; b < params.blocks; ++b) {
            size_t ci = params.channels[b], co = params.channels[b + 1];
            double* at = theta.data() + block_offset(b);
            xavier_fill(at, co * ci * 9, ci * 9, co * 9, rng);
            at += co * ci * 9 + co;
            xavier_fill(at, co * co * 9, co * 9, co * 9, rng);
            at += co * co * 9 + co;
            if (projected(b)) xavier_fill(at, co * ci, ci, co, rng);
        }
        xavier_fill(theta.data() + head_offset(), params.channels.back(),
                    params.channels.back(), 1, rng);
        return theta;
    }

    struct Trace {
        Tensor3 stem;                 // post-ReLU
        std::vector<Tensor3> mid;     // per block: ReLU(conv1)
        std::vector<Tensor3> out;     // per block: post-ReLU output
    };

    double forward(const std::vector<double>& theta, const Matrix& img,
                   Trace* trace) const {
        if (img.rows() != in_h || img.cols() != in_w) {
            throw ShapeError("image shape disagrees with the fitted input");
        }
        Tensor3 act = conv3x3_same({img}, theta.data(),
                                   theta.data() + stem_w_count(),
                                   params.channels[0]);
        relu_inplace(act);
        if (trace) trace->stem = act;
        for (size_t b = 0; b < params.blocks; ++b) {
            size_t ci = params.channels[b], co = params.channels[b + 1];
            const double* at = theta.data() + block_offset(b);
            const double* w1 = at;
            const double* b1 = at + co * ci * 9;
            const double* w2 = b1 + co;
            const double* b2 = w2 + co * co * 9;
            const double* ws = b2 + co;  // only with projection
            Tensor3 mid = conv3x3_same(act, w1, b1, co);
            relu_inplace(mid);
            if (trace) trace->mid.push_back(mid);
            Tensor3 out = conv3x3_same(mid, w2, b2, co);
            if (projected(b)) {
                for (size_t c = 0; c < co; ++c) {
                    for (size_t i = 0; i < in_h; ++i) {
                        for (size_t j = 0; j < in_w; ++j) {
                            double s = 0;
                            for (size_t k = 0; k < ci; ++k) {
                                s += ws[c * ci + k] * act[k](i, j);
                            }
                            out[c](i, j) += s;
                        }
                    }
                }
            } else {
                for (size_t c = 0; c < co; ++c) {
                    for (size_t i = 0; i < in_h; ++i) {
                        for (size_t j = 0; j < in_w; ++j) {
                            out[c](i, j) += act[c](i, j);
                        }
                    }
                }
            }
            relu_inplace(out);
            if (trace) trace->out.push_back(out);
            act = std::move(out);
        }
        const double* head = theta.data() + head_offset();
        double logit = theta.back();
        double denom = double(in_h * in_w);
        for (size_t c = 0; c < act.size(); ++c) {
            double s = 0;
            for (double v : act[c].data()) s += v;
            logit += head[c] * (s / denom);
        }
        return logit;
    }

    double loss_grad(const std::vector<double>& theta, const Matrix& img,
                     double y, std::vector<double>& grad) const {
        Trace trace;
        double logit = forward(theta, img, &trace);
        double loss = bce_from_logit(logit, y);
        double dlogit = sigmoid(logit) - y;

        const double* head = theta.data() + head_offset();
        double* ghead = grad.data() + head_offset();
        grad.back() += dlogit;
        double denom = double(in_h * in_w);
        const Tensor3& last = trace.out.back();
        size_t c_last = params.channels.back();
        Tensor3 dact(c_last, Matrix(in_h, in_w));
        for (size_t c = 0; c < c_last; ++c) {
            double s = 0;
            for (double v : last[c].data()) s += v;
            ghead[c] += dlogit * (s / denom);
            double dcell = dlogit * head[c] / denom;
            for (double& v : dact[c].data()) v = dcell;
        }

        for (size_t b = params.blocks; b-- > 0;) {
            size_t ci = params.channels[b], co = params.channels[b + 1];
            const double* at = theta.data() + block_offset(b);
            const double* w1 = at;
            const double* w2 = at + co * ci * 9 + co;
            const double* ws = w2 + co * co * 9 + co;
            double* gat = grad.data() + block_offset(b);
            double* gw1 = gat;
            double* gb1 = gat + co * ci * 9;
            double* gw2 = gb1 + co;
            double* gb2 = gw2 + co * co * 9;
            double* gws = gb2 + co;
            const Tensor3& in_act = b == 0 ? trace.stem : trace.out[b - 1];
            const Tensor3& out_act = trace.out[b];
            const Tensor3& mid = trace.mid[b];

            // dzb: gradient before the final ReLU of the block.
            for (size_t c = 0; c < co; ++c) {
                auto& dm = dact[c].data();
                const auto& am = out_act[c].data();
                for (size_t k = 0; k < dm.size(); ++k) {
                    if (am[k] <= 0.0) dm[k] = 0.0;
                }
            }

            Tensor3 dmid(co, Matrix(in_h, in_w));
            conv3x3_backward(mid, w2, dact, gw2, gb2, &dmid);
            for (size_t c = 0; c < co; ++c) {
                auto& dm = dmid[c].data();
                const auto& am = mid[c].data();
                for (size_t k = 0; k < dm.size(); ++k) {
                    if (am[k] <= 0.0) dm[k] = 0.0;
                }
            }
            Tensor3 din(ci, Matrix(in_h, in_w));
            conv3x3_backward(in_act, w1, dmid, gw1, gb1, &din);
            if (projected(b)) {
                for (size_t c = 0; c < co; ++c) {
                    for (size_t i = 0; i < in_h; ++i) {
                        for (size_t j = 0; j < in_w; ++j) {
                            double d = dact[c](i, j);
                            if (d == 0.0) continue;
                            for (size_t k = 0; k < ci; ++k) {
                                gws[c * ci + k] += d * in_act[k](i, j);
                                din[k](i, j) += d * ws[c * ci + k];
                            }
                        }
                    }
                }
            } else {
                for (size_t c = 0; c < co; ++c) {
                    for (size_t i = 0; i < in_h; ++i) {
                        for (size_t j = 0; j < in_w; ++j) {
                            din[c](i, j) += dact[c](i, j);
                        }
                    }
                }
            }
            dact = std::move(din);
        }

        // Stem: mask by its ReLU, then fold into the kernel grads.
        for (size_t c = 0; c < params.channels[0]; ++c) {
            auto& dm = dact[c].data();
            const auto& am = trace.stem[c].data();
            for (size_t k = 0; k < dm.size(); ++k) {
                if (am[k] <= 0.0) dm[k] = 0.0;
            }
        }
        conv3x3_backward({img}, theta.data(), dact, grad.data(),
                         grad.data() + stem_w_count(), nullptr);
        return loss;
    }
};

}  // namespace detail

struct CnnModel {
    CnnParams params;
    size_t in_h = 0;
    size_t in_w = 0;
    std::vector<double> theta;
    std::vector<double> epoch_losses;

    double predict_logit(const Matrix& img) const {
        detail::CnnNet net{params, in_h, in_w};
        return net.forward(theta, img, nullptr);
    }

    double predict_proba(const Matrix& img) const {
        return sigmoid(predict_logit(img));
    }
};

inline CnnModel fit_cnn(const std::vector<Matrix>& images,
                        const std::vector<int>& y, const CnnParams& params) {
    params.validate();
    if (images.size() != y.size()) {
        throw LengthMismatch("image/label count mismatch");
    }
    if (images.empty()) throw EmptyInput("no training images");
    require_binary(y);
    size_t h = images[0].rows(), w = images[0].cols();
    for (const auto& img : images) {
        if (img.rows() != h || img.cols() != w) {
            throw ShapeError("training images must share one shape");
        }
    }
    detail::CnnNet net{params, h, w};
    Rng rng(keyed_hash(params.seed, uint64_t{0xc44}, params.blocks));
    CnnModel model;
    model.params = params;
    model.in_h = h;
    model.in_w = w;
    model.theta = net.init(rng);
    model.epoch_losses = train_epochs(net, model.theta, images, y, params.epochs,
                                      params.batch, params.learning_rate, rng);
    return model;
}

}  // namespace encflow
