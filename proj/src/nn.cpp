#include "anymodal/nn.hpp"

#include <algorithm>
#include <cmath>

namespace anymodal {

std::string shape_str(const Tensor & t) {
    std::string s = "[";
    for (size_t i = 0; i < t.shape.size(); ++i) {
        s += (i ? "x" : "") + std::to_string(t.shape[i]);
    }
    return s + "]";
}

void check_2d(const Tensor & t, const char * who) {
    if (t.shape.size() != 2) {
        throw InvalidInput(std::string(who) + ": expected 2D tensor, got " + shape_str(t));
    }
}

// ---------------------------------------------------------------------------
// matmul kernels
// ---------------------------------------------------------------------------

void matmul(const double * a, const double * b, double * c, int M, int K, int N) {
    for (int i = 0; i < M; ++i) {
        double * ci = c + (size_t) i * N;
        std::fill(ci, ci + N, 0.0);
        const double * ai = a + (size_t) i * K;
        for (int k = 0; k < K; ++k) {
            const double av = ai[k];
            const double * bk = b + (size_t) k * N;
            for (int j = 0; j < N; ++j) {
                ci[j] += av * bk[j];
            }
        }
    }
}

void matmul_nt(const double * a, const double * b, double * c, int M, int K, int N) {
    for (int i = 0; i < M; ++i) {
        const double * ai = a + (size_t) i * K;
        double * ci = c + (size_t) i * N;
        for (int j = 0; j < N; ++j) {
            const double * bj = b + (size_t) j * K;
            double acc = 0.0;
            for (int k = 0; k < K; ++k) {
                acc += ai[k] * bj[k];
            }
            ci[j] = acc;
        }
    }
}

void matmul_tn_acc(const double * a, const double * b, double * c, int M, int K, int N) {
    for (int i = 0; i < M; ++i) {
        const double * ai = a + (size_t) i * K;
        const double * bi = b + (size_t) i * N;
        for (int k = 0; k < K; ++k) {
            const double av = ai[k];
            double * ck = c + (size_t) k * N;
            for (int j = 0; j < N; ++j) {
                ck[j] += av * bi[j];
            }
        }
    }
}

// ---------------------------------------------------------------------------
// init / functional ops
// ---------------------------------------------------------------------------

void init_trunc_normal(Tensor & t, Rng & rng, double stddev) {
    for (auto & v : t.data) {
        double z = rng.normal();
        while (std::fabs(z) > 2.0) {
            z = rng.normal();
        }
        v = (double) (z * stddev);
    }
}

Tensor add(const Tensor & a, const Tensor & b) {
    if (!a.same_shape(b)) {
        throw InvalidInput("add: shape mismatch " + shape_str(a) + " vs " + shape_str(b));
    }
    Tensor out = a;
    for (size_t i = 0; i < out.data.size(); ++i) {
        out.data[i] += b.data[i];
    }
    return out;
}

Tensor softmax_rows(const Tensor & x) {
    check_2d(x, "softmax_rows");
    Tensor y = x;
    const int R = x.rows(), C = x.cols();
    for (int r = 0; r < R; ++r) {
        double * row = y.data.data() + (size_t) r * C;
        double  mx  = row[0];
        for (int c = 1; c < C; ++c) {
            mx = std::max(mx, row[c]);
        }
        double sum = 0.0;
        for (int c = 0; c < C; ++c) {
            row[c] = std::exp(row[c] - mx);
            sum += row[c];
        }
        const double inv = (double) (1.0 / sum);
        for (int c = 0; c < C; ++c) {
            row[c] *= inv;
        }
    }
    return y;
}

Tensor softmax_rows_backward(const Tensor & y, const Tensor & dy) {
    Tensor dx = dy;
    const int R = y.rows(), C = y.cols();
    for (int r = 0; r < R; ++r) {
        const double * yr  = y.data.data() + (size_t) r * C;
        double *       dxr = dx.data.data() + (size_t) r * C;
        double dot = 0.0;
        for (int c = 0; c < C; ++c) {
            dot += (double) yr[c] * dxr[c];
        }
        for (int c = 0; c < C; ++c) {
            dxr[c] = yr[c] * (dxr[c] - (double) dot);
        }
    }
    return dx;
}

double cross_entropy(const Tensor & logits, const std::vector<int> & targets, Tensor * dlogits) {
    check_2d(logits, "cross_entropy");
    const int T = logits.rows(), V = logits.cols();
    if ((int) targets.size() != T) {
        throw InvalidInput("cross_entropy: " + std::to_string(targets.size()) + " targets for " +
                           std::to_string(T) + " rows");
    }
    if (dlogits) {
        dlogits->resize(logits.shape);
    }
    double loss = 0.0;
    for (int t = 0; t < T; ++t) {
        const double * row = logits.data.data() + (size_t) t * V;
        const int     tgt = targets[(size_t) t];
        if (tgt < 0 || tgt >= V) {
            throw InvalidInput("cross_entropy: target " + std::to_string(tgt) + " outside vocab " +
                               std::to_string(V));
        }
        double mx = row[0];
        for (int c = 1; c < V; ++c) {
            mx = std::max(mx, row[c]);
        }
        double sum = 0.0;
        for (int c = 0; c < V; ++c) {
            sum += std::exp((double) row[c] - mx);
        }
        const double logz = std::log(sum) + mx;
        loss += logz - row[tgt];
        if (dlogits) {
            double * drow = dlogits->data.data() + (size_t) t * V;
            const double inv_sum = 1.0 / sum;
            for (int c = 0; c < V; ++c) {
                drow[c] = (double) (std::exp((double) row[c] - mx) * inv_sum / T);
            }
            drow[tgt] -= 1.0 / (double) T;
        }
    }
    return loss / T;
}

// ---------------------------------------------------------------------------
// Linear
// ---------------------------------------------------------------------------

void Linear::setup(const std::string & name, int in, int out, Rng & rng, bool bias, double init_std) {
    w.name = name + ".w";
    w.init_shape({in, out});
    init_trunc_normal(w.value, rng, init_std);
    has_bias = bias;
    if (bias) {
        b.name = name + ".b";
        b.init_shape({out});
    }
}

Tensor Linear::forward(const Tensor & x) {
    check_2d(x, "Linear::forward");
    if (x.cols() != w.value.rows()) {
        throw InvalidInput("Linear " + w.name + ": input " + shape_str(x) + " does not match weight " +
                           shape_str(w.value));
    }
    x_ = x;
    Tensor y({x.rows(), w.value.cols()});
    matmul(x.data.data(), w.value.data.data(), y.data.data(), x.rows(), x.cols(), w.value.cols());
    if (has_bias) {
        const int N = y.cols();
        for (int r = 0; r < y.rows(); ++r) {
            double * row = y.data.data() + (size_t) r * N;
            for (int c = 0; c < N; ++c) {
                row[c] += b.value.data[(size_t) c];
            }
        }
    }
    return y;
}

Tensor Linear::backward(const Tensor & dy) {
    const int T = x_.rows(), in = x_.cols(), out = w.value.cols();
    if (dy.rows() != T || dy.cols() != out) {
        throw InvalidInput("Linear " + w.name + ": dy " + shape_str(dy) + " does not match forward shapes");
    }
    // dW += x^T dy ; db += column sums ; dx = dy W^T
    matmul_tn_acc(x_.data.data(), dy.data.data(), w.grad.data.data(), T, in, out);
    if (has_bias) {
        for (int r = 0; r < T; ++r) {
            const double * row = dy.data.data() + (size_t) r * out;
            for (int c = 0; c < out; ++c) {
                b.grad.data[(size_t) c] += row[c];
            }
        }
    }
    Tensor dx({T, in});
    matmul_nt(dy.data.data(), w.value.data.data(), dx.data.data(), T, out, in);
    return dx;
}

Tensor Linear::infer(const Tensor & x) const {
    check_2d(x, "Linear::infer");
    if (x.cols() != w.value.rows()) {
        throw InvalidInput("Linear " + w.name + ": input " + shape_str(x) + " does not match weight " +
                           shape_str(w.value));
    }
    Tensor y({x.rows(), w.value.cols()});
    matmul(x.data.data(), w.value.data.data(), y.data.data(), x.rows(), x.cols(), w.value.cols());
    if (has_bias) {
        const int N = y.cols();
        for (int r = 0; r < y.rows(); ++r) {
            double * row = y.data.data() + (size_t) r * N;
            for (int c = 0; c < N; ++c) {
                row[c] += b.value.data[(size_t) c];
            }
        }
    }
    return y;
}

void Linear::collect(std::vector<Parameter *> & out) {
    out.push_back(&w);
    if (has_bias) {
        out.push_back(&b);
    }
}

// ---------------------------------------------------------------------------
// LayerNorm
// ---------------------------------------------------------------------------

void LayerNorm::setup(const std::string & name, int dim) {
    gamma.name = name + ".gamma";
    gamma.init_shape({dim});
    std::fill(gamma.value.data.begin(), gamma.value.data.end(), 1.0);
    beta.name = name + ".beta";
    beta.init_shape({dim});
}

Tensor LayerNorm::forward(const Tensor & x) {
    check_2d(x, "LayerNorm::forward");
    const int T = x.rows(), D = x.cols();
    if (D != gamma.value.rows()) {
        throw InvalidInput("LayerNorm " + gamma.name + ": dim mismatch " + shape_str(x));
    }
    xhat_.resize({T, D});
    rstd_.assign((size_t) T, 0.0);
    Tensor y({T, D});
    for (int t = 0; t < T; ++t) {
        const double * row = x.data.data() + (size_t) t * D;
        double mean = 0.0;
        for (int c = 0; c < D; ++c) {
            mean += row[c];
        }
        mean /= D;
        double var = 0.0;
        for (int c = 0; c < D; ++c) {
            const double d = row[c] - mean;
            var += d * d;
        }
        var /= D;
        const double rstd = (double) (1.0 / std::sqrt(var + eps));
        rstd_[(size_t) t]  = rstd;
        double * xh = xhat_.data.data() + (size_t) t * D;
        double * yr = y.data.data() + (size_t) t * D;
        for (int c = 0; c < D; ++c) {
            xh[c] = (double) ((row[c] - mean) * rstd);
            yr[c] = xh[c] * gamma.value.data[(size_t) c] + beta.value.data[(size_t) c];
        }
    }
    return y;
}

Tensor LayerNorm::backward(const Tensor & dy) {
    const int T = dy.rows(), D = dy.cols();
    Tensor dx({T, D});
    for (int t = 0; t < T; ++t) {
        const double * dyr = dy.data.data() + (size_t) t * D;
        const double * xh  = xhat_.data.data() + (size_t) t * D;
        double *       dxr = dx.data.data() + (size_t) t * D;
        double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
        for (int c = 0; c < D; ++c) {
            const double dxhat = (double) dyr[c] * gamma.value.data[(size_t) c];
            sum_dxhat += dxhat;
            sum_dxhat_xhat += dxhat * xh[c];
            gamma.grad.data[(size_t) c] += dyr[c] * xh[c];
            beta.grad.data[(size_t) c] += dyr[c];
        }
        const double inv_d = 1.0 / D;
        for (int c = 0; c < D; ++c) {
            const double dxhat = (double) dyr[c] * gamma.value.data[(size_t) c];
            dxr[c] = (double) ((dxhat - sum_dxhat * inv_d - xh[c] * sum_dxhat_xhat * inv_d) * rstd_[(size_t) t]);
        }
    }
    return dx;
}

Tensor LayerNorm::infer(const Tensor & x) const {
    check_2d(x, "LayerNorm::infer");
    const int T = x.rows(), D = x.cols();
    Tensor y({T, D});
    for (int t = 0; t < T; ++t) {
        const double * row = x.data.data() + (size_t) t * D;
        double mean = 0.0;
        for (int c = 0; c < D; ++c) {
            mean += row[c];
        }
        mean /= D;
        double var = 0.0;
        for (int c = 0; c < D; ++c) {
            const double d = row[c] - mean;
            var += d * d;
        }
        var /= D;
        const double rstd = 1.0 / std::sqrt(var + eps);
        double * yr = y.data.data() + (size_t) t * D;
        for (int c = 0; c < D; ++c) {
            yr[c] = (row[c] - mean) * rstd * gamma.value.data[(size_t) c] + beta.value.data[(size_t) c];
        }
    }
    return y;
}

void LayerNorm::collect(std::vector<Parameter *> & out) {
    out.push_back(&gamma);
    out.push_back(&beta);
}

// ---------------------------------------------------------------------------
// Embedding
// ---------------------------------------------------------------------------

void Embedding::setup(const std::string & name, int vocab, int dim, Rng & rng, double init_std) {
    table.name = name;
    table.init_shape({vocab, dim});
    init_trunc_normal(table.value, rng, init_std);
}

Tensor Embedding::forward(const std::vector<int> & ids) {
    const int V = table.value.rows(), D = table.value.cols();
    ids_ = ids;
    Tensor y({(int) ids.size(), D});
    for (size_t t = 0; t < ids.size(); ++t) {
        const int id = ids[t];
        if (id < 0 || id >= V) {
            throw InvalidInput("Embedding " + table.name + ": id " + std::to_string(id) + " outside vocab " +
                               std::to_string(V));
        }
        std::copy_n(table.value.data.data() + (size_t) id * D, D, y.data.data() + t * D);
    }
    return y;
}

void Embedding::backward(const Tensor & dy) {
    const int D = table.value.cols();
    for (size_t t = 0; t < ids_.size(); ++t) {
        const double * src = dy.data.data() + t * D;
        double *       dst = table.grad.data.data() + (size_t) ids_[t] * D;
        for (int c = 0; c < D; ++c) {
            dst[c] += src[c];
        }
    }
}

Tensor Embedding::infer(const std::vector<int> & ids) const {
    const int V = table.value.rows(), D = table.value.cols();
    Tensor y({(int) ids.size(), D});
    for (size_t t = 0; t < ids.size(); ++t) {
        const int id = ids[t];
        if (id < 0 || id >= V) {
            throw InvalidInput("Embedding " + table.name + ": id " + std::to_string(id) + " outside vocab " +
                               std::to_string(V));
        }
        std::copy_n(table.value.data.data() + (size_t) id * D, D, y.data.data() + t * D);
    }
    return y;
}

void Embedding::collect(std::vector<Parameter *> & out) {
    out.push_back(&table);
}

// ---------------------------------------------------------------------------
// SwiGLU
// ---------------------------------------------------------------------------

static inline double silu(double x) {
    return x / (1.0 + std::exp(-x));
}

void SwiGLU::setup(const std::string & name, int in, int hidden, int out, Rng & rng, double init_std) {
    const double in_std   = init_std > 0.0 ? init_std : 1.0 / std::sqrt((double) in);
    const double down_std = init_std > 0.0 ? init_std : 1.0 / std::sqrt((double) hidden);
    gate.setup(name + ".gate", in, hidden, rng, false, in_std);
    up.setup(name + ".up", in, hidden, rng, false, in_std);
    down.setup(name + ".down", hidden, out, rng, true, down_std);
}

Tensor SwiGLU::forward(const Tensor & x) {
    g_ = gate.forward(x);
    u_ = up.forward(x);
    Tensor h = g_;
    for (size_t i = 0; i < h.data.size(); ++i) {
        h.data[i] = silu(g_.data[i]) * u_.data[i];
    }
    return down.forward(h);
}

Tensor SwiGLU::backward(const Tensor & dy) {
    const Tensor dh = down.backward(dy);
    Tensor dg = dh, du = dh;
    for (size_t i = 0; i < dh.data.size(); ++i) {
        const double g  = g_.data[i];
        const double s  = 1.0 / (1.0 + std::exp(-g));
        const double si = g * s;
        // d silu(g)/dg = s + g s (1 - s)
        dg.data[i] = dh.data[i] * u_.data[i] * (s + g * s * (1.0 - s));
        du.data[i] = dh.data[i] * si;
    }
    const Tensor dx_g = gate.backward(dg);
    const Tensor dx_u = up.backward(du);
    return add(dx_g, dx_u);
}

Tensor SwiGLU::infer(const Tensor & x) const {
    const Tensor g = gate.infer(x);
    const Tensor u = up.infer(x);
    Tensor h = g;
    for (size_t i = 0; i < h.data.size(); ++i) {
        h.data[i] = silu(g.data[i]) * u.data[i];
    }
    return down.infer(h);
}

void SwiGLU::collect(std::vector<Parameter *> & out) {
    gate.collect(out);
    up.collect(out);
    down.collect(out);
}

// ---------------------------------------------------------------------------
// MultiHeadAttention
// ---------------------------------------------------------------------------

void MultiHeadAttention::setup(const std::string & name, int dim, int n_heads, Rng & rng) {
    if (dim % n_heads != 0) {
        throw ConfigError("attention dim " + std::to_string(dim) + " not divisible by heads " +
                          std::to_string(n_heads));
    }
    heads = n_heads;
    wq.setup(name + ".wq", dim, dim, rng);
    wk.setup(name + ".wk", dim, dim, rng);
    wv.setup(name + ".wv", dim, dim, rng);
    wo.setup(name + ".wo", dim, dim, rng);
}

Tensor MultiHeadAttention::forward(const Tensor & q_in, const Tensor & kv_in, AttnMask mask) {
    check_2d(q_in, "MultiHeadAttention::forward");
    check_2d(kv_in, "MultiHeadAttention::forward");
    mask_ = mask;
    q_ = wq.forward(q_in);
    k_ = wk.forward(kv_in);
    v_ = wv.forward(kv_in);

    const int T  = q_.rows(), S = k_.rows();
    const int D  = q_.cols();
    const int dh = D / heads;
    const double scale = 1.0 / std::sqrt((double) dh);

    attn_.resize({heads * T, S});
    Tensor ctx({T, D});
    std::vector<double> scores((size_t) S);
    for (int h = 0; h < heads; ++h) {
        const int off = h * dh;
        for (int t = 0; t < T; ++t) {
            const double * qt = q_.data.data() + (size_t) t * D + off;
            for (int s = 0; s < S; ++s) {
                const double * ks = k_.data.data() + (size_t) s * D + off;
                double acc = 0.0;
                for (int c = 0; c < dh; ++c) {
                    acc += qt[c] * ks[c];
                }
                scores[(size_t) s] = acc * scale;
            }
            const int limit = (mask == AttnMask::causal) ? std::min(t + 1, S) : S;
            double mx = -1e30f;
            for (int s = 0; s < limit; ++s) {
                mx = std::max(mx, scores[(size_t) s]);
            }
            double sum = 0.0;
            double * arow = attn_.data.data() + ((size_t) h * T + t) * S;
            for (int s = 0; s < S; ++s) {
                if (s < limit) {
                    arow[s] = std::exp(scores[(size_t) s] - mx);
                    sum += arow[s];
                } else {
                    arow[s] = 0.0;
                }
            }
            const double inv = (double) (1.0 / sum);
            double * ct = ctx.data.data() + (size_t) t * D + off;
            std::fill(ct, ct + dh, 0.0);
            for (int s = 0; s < S; ++s) {
                arow[s] *= inv;
                if (arow[s] != 0.0) {
                    const double * vs = v_.data.data() + (size_t) s * D + off;
                    for (int c = 0; c < dh; ++c) {
                        ct[c] += arow[s] * vs[c];
                    }
                }
            }
        }
    }
    return wo.forward(ctx);
}

std::pair<Tensor, Tensor> MultiHeadAttention::backward(const Tensor & dy) {
    const Tensor dctx = wo.backward(dy);

    const int T  = q_.rows(), S = k_.rows();
    const int D  = q_.cols();
    const int dh = D / heads;
    const double scale = 1.0 / std::sqrt((double) dh);

    Tensor dq({T, D}), dk({S, D}), dv({S, D});
    std::vector<double> dattn((size_t) S);
    for (int h = 0; h < heads; ++h) {
        const int off = h * dh;
        for (int t = 0; t < T; ++t) {
            const double * arow = attn_.data.data() + ((size_t) h * T + t) * S;
            const double * dct  = dctx.data.data() + (size_t) t * D + off;
            // dV += a^T dctx ; dattn = dctx V^T
            double dot = 0.0;
            for (int s = 0; s < S; ++s) {
                const double a = arow[s];
                double acc = 0.0;
                const double * vs = v_.data.data() + (size_t) s * D + off;
                double *       dvs = dv.data.data() + (size_t) s * D + off;
                for (int c = 0; c < dh; ++c) {
                    acc += dct[c] * vs[c];
                    dvs[c] += a * dct[c];
                }
                dattn[(size_t) s] = acc;
                dot += (double) a * acc;
            }
            // softmax backward then score scale
            const double * qt = q_.data.data() + (size_t) t * D + off;
            double *       dqt = dq.data.data() + (size_t) t * D + off;
            for (int s = 0; s < S; ++s) {
                const double a = arow[s];
                if (a == 0.0) {
                    continue;
                }
                const double dscore = a * (dattn[(size_t) s] - (double) dot) * scale;
                const double * ks = k_.data.data() + (size_t) s * D + off;
                double *       dks = dk.data.data() + (size_t) s * D + off;
                for (int c = 0; c < dh; ++c) {
                    dqt[c] += dscore * ks[c];
                    dks[c] += dscore * qt[c];
                }
            }
        }
    }

    const Tensor dq_in = wq.backward(dq);
    const Tensor dk_in = wk.backward(dk);
    const Tensor dv_in = wv.backward(dv);
    return {dq_in, add(dk_in, dv_in)};
}

Tensor MultiHeadAttention::infer(const Tensor & q_in, const Tensor & kv_in, AttnMask mask) const {
    const Tensor q = wq.infer(q_in);
    const Tensor k = wk.infer(kv_in);
    const Tensor v = wv.infer(kv_in);

    const int T  = q.rows(), S = k.rows();
    const int D  = q.cols();
    const int dh = D / heads;
    const double scale = 1.0 / std::sqrt((double) dh);

    Tensor ctx({T, D});
    std::vector<double> scores((size_t) S);
    for (int h = 0; h < heads; ++h) {
        const int off = h * dh;
        for (int t = 0; t < T; ++t) {
            const double * qt = q.data.data() + (size_t) t * D + off;
            for (int s = 0; s < S; ++s) {
                const double * ks = k.data.data() + (size_t) s * D + off;
                double acc = 0.0;
                for (int c = 0; c < dh; ++c) {
                    acc += qt[c] * ks[c];
                }
                scores[(size_t) s] = acc * scale;
            }
            const int limit = (mask == AttnMask::causal) ? std::min(t + 1, S) : S;
            double mx = -1e30;
            for (int s = 0; s < limit; ++s) {
                mx = std::max(mx, scores[(size_t) s]);
            }
            double sum = 0.0;
            for (int s = 0; s < limit; ++s) {
                scores[(size_t) s] = std::exp(scores[(size_t) s] - mx);
                sum += scores[(size_t) s];
            }
            const double inv = 1.0 / sum;
            double * ct = ctx.data.data() + (size_t) t * D + off;
            std::fill(ct, ct + dh, 0.0);
            for (int s = 0; s < limit; ++s) {
                const double a = scores[(size_t) s] * inv;
                const double * vs = v.data.data() + (size_t) s * D + off;
                for (int c = 0; c < dh; ++c) {
                    ct[c] += a * vs[c];
                }
            }
        }
    }
    return wo.infer(ctx);
}

void MultiHeadAttention::collect(std::vector<Parameter *> & out) {
    wq.collect(out);
    wk.collect(out);
    wv.collect(out);
    wo.collect(out);
}

// ---------------------------------------------------------------------------
// grad_check
// ---------------------------------------------------------------------------

GradCheckReport grad_check(const std::function<double()> & loss_fn, const std::vector<Parameter *> & params,
                           double tolerance, double h, int probes_per_param, uint64_t probe_seed) {
    for (Parameter * p : params) {
        p->zero_grad();
    }
    loss_fn();
    std::vector<std::vector<double>> analytic;
    for (Parameter * p : params) {
        analytic.push_back(p->grad.data);
    }

    GradCheckReport report;
    Rng rng(probe_seed);
    for (size_t pi = 0; pi < params.size(); ++pi) {
        Parameter * p = params[pi];
        GradCheckEntry entry;
        entry.name = p->name;

        const size_t n = p->value.data.size();
        std::vector<size_t> probes;
        if ((int) n <= probes_per_param) {
            for (size_t i = 0; i < n; ++i) {
                probes.push_back(i);
            }
        } else {
            for (int i = 0; i < probes_per_param; ++i) {
                probes.push_back((size_t) rng.uniform_u64(n));
            }
        }
        for (size_t idx : probes) {
            const double saved = p->value.data[idx];
            p->value.data[idx] = saved + h;
            for (Parameter * q : params) {
                q->zero_grad();
            }
            const double up = loss_fn();
            p->value.data[idx] = saved - h;
            for (Parameter * q : params) {
                q->zero_grad();
            }
            const double down = loss_fn();
            p->value.data[idx] = saved;

            const double fd = (up - down) / (2.0 * h);
            const double an = analytic[pi][idx];
            const double denom = std::max({std::fabs(fd), std::fabs(an), 1e-6});
            const double rel   = std::fabs(fd - an) / denom;
            entry.max_rel_err  = std::max(entry.max_rel_err, rel);
        }
        entry.pass = entry.max_rel_err < tolerance;
        report.entries.push_back(entry);
        report.max_rel_err = std::max(report.max_rel_err, entry.max_rel_err);
        report.pass        = report.pass && entry.pass;
    }
    return report;
}

} // namespace anymodal
