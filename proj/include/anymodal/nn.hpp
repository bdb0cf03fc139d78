#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "anymodal/errors.hpp"
#include "anymodal/rng.hpp"

namespace anymodal {

// ---------------------------------------------------------------------------
// Tensor: dense f32, row-major. Almost everything here is 2D [rows, cols].
// ---------------------------------------------------------------------------

struct Tensor {
    std::vector<int>   shape;
    std::vector<double> data;

    Tensor() = default;
    Tensor(std::initializer_list<int> dims) { resize(std::vector<int>(dims)); }
    explicit Tensor(const std::vector<int> & dims) { resize(dims); }

    void resize(const std::vector<int> & dims) {
        shape = dims;
        size_t n = 1;
        for (int d : dims) {
            n *= (size_t) d;
        }
        data.assign(n, 0.0);
    }

    size_t numel() const { return data.size(); }
    int    rows() const { return shape.empty() ? 0 : shape[0]; }
    int    cols() const { return shape.size() < 2 ? 1 : shape[1]; }

    double &       at(int r, int c) { return data[(size_t) r * cols() + c]; }
    const double & at(int r, int c) const { return data[(size_t) r * cols() + c]; }

    void zero() { std::fill(data.begin(), data.end(), 0.0); }

    bool same_shape(const Tensor & o) const { return shape == o.shape; }
};

std::string shape_str(const Tensor & t);
void        check_2d(const Tensor & t, const char * who);

// ---------------------------------------------------------------------------
// Raw matmul kernels (the hot path)
// ---------------------------------------------------------------------------

// C[M,N] = A[M,K] * B[K,N]
void matmul(const double * a, const double * b, double * c, int M, int K, int N);
// C[M,N] = A[M,K] * B[N,K]^T
void matmul_nt(const double * a, const double * b, double * c, int M, int K, int N);
// C[K,N] += A[M,K]^T * B[M,N]
void matmul_tn_acc(const double * a, const double * b, double * c, int M, int K, int N);

// ---------------------------------------------------------------------------
// Parameters
// ---------------------------------------------------------------------------

struct Parameter {
    std::string name;
    Tensor      value;
    Tensor      grad;

    void init_shape(const std::vector<int> & dims) {
        value.resize(dims);
        grad.resize(dims);
    }
    void zero_grad() { grad.zero(); }
};

// truncated normal (resampled beyond 2 std), the default weight init
void init_trunc_normal(Tensor & t, Rng & rng, double stddev = 0.02);

// ---------------------------------------------------------------------------
// Functional ops with explicit backward
// ---------------------------------------------------------------------------

Tensor add(const Tensor & a, const Tensor & b); // same-shape elementwise
// softmax over the last dimension of a 2D tensor
Tensor softmax_rows(const Tensor & x);
// dx given y = softmax_rows(x) and dy
Tensor softmax_rows_backward(const Tensor & y, const Tensor & dy);

// mean cross-entropy over rows of logits [T, V] against targets [T];
// dlogits is d(mean loss)/dlogits
double cross_entropy(const Tensor & logits, const std::vector<int> & targets, Tensor * dlogits = nullptr);

// ---------------------------------------------------------------------------
// Layers (forward caches what backward needs; single-writer training)
// ---------------------------------------------------------------------------

struct Linear {
    Parameter w; // [in, out]
    Parameter b; // [out]
    bool      has_bias = true;

    void setup(const std::string & name, int in, int out, Rng & rng, bool bias = true, double init_std = 0.02);

    Tensor forward(const Tensor & x);
    Tensor backward(const Tensor & dy); // returns dx, accumulates w/b grads
    Tensor infer(const Tensor & x) const; // cache-free, concurrently callable

    void collect(std::vector<Parameter *> & out);

  private:
    Tensor x_;
};

struct LayerNorm {
    Parameter gamma, beta;
    double    eps = 1e-6;

    void setup(const std::string & name, int dim);

    Tensor forward(const Tensor & x);
    Tensor backward(const Tensor & dy);
    Tensor infer(const Tensor & x) const;

    void collect(std::vector<Parameter *> & out);

  private:
    Tensor             xhat_;
    std::vector<double> rstd_;
};

struct Embedding {
    Parameter table; // [vocab, dim]

    void setup(const std::string & name, int vocab, int dim, Rng & rng, double init_std = 0.02);

    Tensor forward(const std::vector<int> & ids);
    void   backward(const Tensor & dy); // scatter-adds into table.grad
    Tensor infer(const std::vector<int> & ids) const;

    void collect(std::vector<Parameter *> & out);

  private:
    std::vector<int> ids_;
};

// y = (silu(x Wg) * (x Wu)) Wd
struct SwiGLU {
    Linear gate, up, down;

    // init_std < 0 selects fan-in scaling (1/sqrt(in)); transformer blocks
    // pass their fixed 0.02
    void setup(const std::string & name, int in, int hidden, int out, Rng & rng, double init_std = -1.0);

    Tensor forward(const Tensor & x);
    Tensor backward(const Tensor & dy);
    Tensor infer(const Tensor & x) const;

    void collect(std::vector<Parameter *> & out);

  private:
    Tensor g_, u_; // pre-activation caches
};

enum class AttnMask : uint8_t { none, causal };

struct MultiHeadAttention {
    int    heads = 1;
    Linear wq, wk, wv, wo;

    void setup(const std::string & name, int dim, int n_heads, Rng & rng);

    // q_in [T, D], kv_in [S, D]; self-attention when both are the same tensor
    Tensor forward(const Tensor & q_in, const Tensor & kv_in, AttnMask mask);
    // returns (dq_in, dkv_in); caller adds them when q_in == kv_in
    std::pair<Tensor, Tensor> backward(const Tensor & dy);
    Tensor infer(const Tensor & q_in, const Tensor & kv_in, AttnMask mask) const;

    void collect(std::vector<Parameter *> & out);

  private:
    Tensor   q_, k_, v_;
    Tensor   attn_; // heads stacked row blocks [heads*T, S]
    AttnMask mask_ = AttnMask::none;
};

// ---------------------------------------------------------------------------
// Gradient checking
// ---------------------------------------------------------------------------

struct GradCheckEntry {
    std::string name;
    double      max_rel_err = 0.0;
    bool        pass        = true;
};

struct GradCheckReport {
    std::vector<GradCheckEntry> entries;
    double                      max_rel_err = 0.0;
    bool                        pass        = true;
};

// loss_fn must run forward+backward and return the loss; analytic grads are
// read after one call, then central differences probe up to probes_per_param
// entries of each parameter (all entries when small).
GradCheckReport grad_check(const std::function<double()> & loss_fn, const std::vector<Parameter *> & params,
                           double tolerance, double h = 1e-3, int probes_per_param = 24, uint64_t probe_seed = 17);

} // namespace anymodal
