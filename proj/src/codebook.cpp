#include "anymodal/codebook.hpp"

#include <cmath>

#include "anymodal/binio.hpp"
#include "anymodal/errors.hpp"
#include "anymodal/kmeans.hpp"

namespace anymodal {

static constexpr double kCountEps      = 1e-9;
static constexpr double kDeadThreshold = 0.01;
static constexpr uint32_t kCodebookVersion = 1;

void Codebook::save(const std::string & path) const {
    BinWriter w(path);
    w.magic("VQCB");
    w.u32(kCodebookVersion);
    w.u32((uint32_t) K);
    w.u32((uint32_t) D);
    w.f32((float) decay);
    for (double v : vectors) {
        w.f32((float) v);
    }
    for (double v : ema_counts) {
        w.f32((float) v);
    }
    for (double v : ema_sums) {
        w.f32((float) v);
    }
    w.close();
}

Codebook Codebook::load(const std::string & path) {
    BinReader r(path);
    r.expect_magic("VQCB");
    const uint32_t version = r.u32();
    if (version != kCodebookVersion) {
        throw ArtifactError("unsupported codebook version in " + path);
    }
    Codebook b;
    b.K     = (int) r.u32();
    b.D     = (int) r.u32();
    b.decay = r.f32();
    auto read_vec = [&](size_t n) {
        std::vector<double> v(n);
        const auto raw = r.f32s(n);
        for (size_t i = 0; i < n; ++i) {
            v[i] = raw[i];
        }
        return v;
    };
    b.vectors    = read_vec((size_t) b.K * b.D);
    b.ema_counts = read_vec((size_t) b.K);
    b.ema_sums   = read_vec((size_t) b.K * b.D);
    return b;
}

Codebook kmeans_init(const double * samples, int n, int dim, int k, uint64_t seed, double decay) {
    if (n < k) {
        throw InvalidInput("kmeans_init: " + std::to_string(n) + " samples for " + std::to_string(k) + " entries");
    }
    const KmeansResult km = kmeans(samples, n, dim, k, seed, 50, 1e-5);

    Codebook b;
    b.K       = k;
    b.D       = dim;
    b.decay   = decay;
    b.vectors = km.centers;
    b.ema_counts.assign((size_t) k, 0.0);
    b.ema_sums.assign((size_t) k * dim, 0.0);
    for (int c = 0; c < k; ++c) {
        b.ema_counts[(size_t) c] = std::max((double) km.counts[(size_t) c], 1.0);
        for (int j = 0; j < dim; ++j) {
            b.ema_sums[(size_t) c * dim + j] = b.vectors[(size_t) c * dim + j] * b.ema_counts[(size_t) c];
        }
    }
    return b;
}

QuantizeResult quantize(const Codebook & book, const double * x) {
    for (int j = 0; j < book.D; ++j) {
        if (std::isnan(x[j])) {
            throw InvalidInput("quantize: NaN input");
        }
    }
    QuantizeResult res;
    res.index = nearest_center(book.vectors.data(), book.K, book.D, x, &res.dist2);
    return res;
}

void ema_update(Codebook & book, const double * batch, const std::vector<int> & assignments, int n, Rng & rng) {
    const int D = book.D;
    std::vector<double> counts((size_t) book.K, 0.0);
    std::vector<double> sums((size_t) book.K * D, 0.0);
    for (int i = 0; i < n; ++i) {
        const int k = assignments[(size_t) i];
        counts[(size_t) k] += 1.0;
        const double * x = batch + (size_t) i * D;
        double * s = sums.data() + (size_t) k * D;
        for (int j = 0; j < D; ++j) {
            s[j] += x[j];
        }
    }
    const double d = book.decay;
    for (int k = 0; k < book.K; ++k) {
        book.ema_counts[(size_t) k] = d * book.ema_counts[(size_t) k] + (1.0 - d) * counts[(size_t) k];
        for (int j = 0; j < D; ++j) {
            const size_t idx = (size_t) k * D + j;
            book.ema_sums[idx] = d * book.ema_sums[idx] + (1.0 - d) * sums[idx];
            book.vectors[idx]  = book.ema_sums[idx] / std::max(book.ema_counts[(size_t) k], kCountEps);
        }
    }
    // dead-entry reseeding keeps small-data codebooks from collapsing
    if (n > 0) {
        for (int k = 0; k < book.K; ++k) {
            if (book.ema_counts[(size_t) k] < kDeadThreshold) {
                const double * x = batch + (size_t) rng.uniform_int(n) * D;
                book.ema_counts[(size_t) k] = 1.0;
                for (int j = 0; j < D; ++j) {
                    book.vectors[(size_t) k * D + j]  = x[j];
                    book.ema_sums[(size_t) k * D + j] = x[j];
                }
            }
        }
    }
}

MemcodesQuantizer MemcodesQuantizer::init(const double * samples, int n, int dim, int heads, int vocab,
                                          uint64_t seed, double decay) {
    if (heads <= 0 || dim % heads != 0) {
        throw ConfigError("memcodes: heads must divide the latent dim");
    }
    MemcodesQuantizer q;
    q.heads    = heads;
    q.head_dim = dim / heads;
    std::vector<double> slice((size_t) n * q.head_dim);
    for (int h = 0; h < heads; ++h) {
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < q.head_dim; ++j) {
                slice[(size_t) i * q.head_dim + j] = samples[(size_t) i * dim + h * q.head_dim + j];
            }
        }
        q.books.push_back(kmeans_init(slice.data(), n, q.head_dim, vocab, seed + (uint64_t) h * 1315423911ull,
                                      decay));
    }
    return q;
}

void MemcodesQuantizer::quantize_vec(const double * x, int * out_ids, double * xq) const {
    for (int h = 0; h < heads; ++h) {
        const QuantizeResult r = quantize(books[(size_t) h], x + (size_t) h * head_dim);
        out_ids[h] = r.index;
        const double * code = books[(size_t) h].vectors.data() + (size_t) r.index * head_dim;
        for (int j = 0; j < head_dim; ++j) {
            xq[(size_t) h * head_dim + j] = code[j];
        }
    }
}

void MemcodesQuantizer::decode_ids(const int * ids, double * xq) const {
    for (int h = 0; h < heads; ++h) {
        const int id = ids[h];
        if (id < 0 || id >= books[(size_t) h].K) {
            throw InvalidInput("memcodes: id " + std::to_string(id) + " outside vocab");
        }
        const double * code = books[(size_t) h].vectors.data() + (size_t) id * head_dim;
        for (int j = 0; j < head_dim; ++j) {
            xq[(size_t) h * head_dim + j] = code[j];
        }
    }
}

void MemcodesQuantizer::ema_update_batch(const double * batch, const std::vector<int> & ids, int n, Rng & rng) {
    std::vector<double> slice((size_t) n * head_dim);
    std::vector<int>    assign((size_t) n);
    for (int h = 0; h < heads; ++h) {
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < head_dim; ++j) {
                slice[(size_t) i * head_dim + j] = batch[(size_t) i * (size_t) dim() + h * head_dim + j];
            }
            assign[(size_t) i] = ids[(size_t) i * heads + h];
        }
        ema_update(books[(size_t) h], slice.data(), assign, n, rng);
    }
}

} // namespace anymodal
