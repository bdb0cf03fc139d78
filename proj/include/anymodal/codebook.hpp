#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "anymodal/rng.hpp"

namespace anymodal {

// VQ codebook with EMA statistics. Vectors always satisfy
// vectors[k] = ema_sums[k] / max(ema_counts[k], eps) after any update.
// Serialized as f32 little-endian ("VQCB").
struct Codebook {
    int    K = 0;
    int    D = 0;
    double decay = 0.99;

    std::vector<double> vectors;    // K x D
    std::vector<double> ema_counts; // K
    std::vector<double> ema_sums;   // K x D

    void save(const std::string & path) const;
    static Codebook load(const std::string & path);
};

// k-means++ / Lloyd initialization; EMA stats seeded from the cluster counts.
Codebook kmeans_init(const double * samples, int n, int dim, int k, uint64_t seed, double decay = 0.99);

struct QuantizeResult {
    int    index = 0;
    double dist2 = 0.0;
};

// nearest entry by squared L2, ties -> lowest index; NaN input rejected
QuantizeResult quantize(const Codebook & book, const double * x);

// EMA update from a batch of assigned vectors. Dead entries (count < 0.01
// after the update) are reseeded from random batch vectors.
void ema_update(Codebook & book, const double * batch, const std::vector<int> & assignments, int n, Rng & rng);

// Multi-head quantization: the D-dim latent splits into `heads` contiguous
// slices, each quantized against its own codebook; one token per head.
struct MemcodesQuantizer {
    int heads    = 0;
    int head_dim = 0;
    std::vector<Codebook> books;

    int dim() const { return heads * head_dim; }
    int vocab() const { return books.empty() ? 0 : books[0].K; }

    static MemcodesQuantizer init(const double * samples, int n, int dim, int heads, int vocab, uint64_t seed,
                                  double decay = 0.99);

    // x: dim() values; out_ids: heads entries; xq: quantized latent
    void quantize_vec(const double * x, int * out_ids, double * xq) const;
    void decode_ids(const int * ids, double * xq) const; // codewords for given ids
    void ema_update_batch(const double * batch, const std::vector<int> & ids, int n, Rng & rng);
};

} // namespace anymodal
