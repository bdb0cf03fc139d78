#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "anymodal/generation.hpp"

namespace anymodal {

// Flat exact cosine index over unit-norm embeddings ("4MIX" on disk).
struct RetrievalIndex {
    int                   dim = 64;
    std::vector<uint64_t> ids;
    std::vector<float>    embeddings; // N x dim, unit norm within 1e-5
    std::vector<int>      labels;     // optional, for kNN classification checks
    std::string           source;     // recorded provenance

    size_t size() const { return ids.size(); }

    void add(uint64_t id, const std::vector<float> & emb, int label = -1);
    void validate() const; // unit norms, unique ids

    void                  save(const std::string & path) const;
    static RetrievalIndex load(const std::string & path);
};

struct KnnConfig {
    int    k           = 20;
    double temperature = 0.07;
};

struct KnnHit {
    uint64_t id         = 0;
    int      index      = -1;
    double   similarity = 0.0;
    double   weight     = 0.0; // exp(sim/T) normalized over the k results
};

struct KnnResult {
    std::vector<KnnHit> hits;
    bool                truncated = false; // k exceeded the index size
};

KnnResult knn(const RetrievalIndex & index, const std::vector<float> & query, const KnnConfig & cfg);

// weighted label votes over the hits (labels must be present)
std::map<int, double> knn_vote(const RetrievalIndex & index, const KnnResult & result);

// Predict the global embedding from any conditioning subset: decode the 16
// global tokens, detokenize, L2-normalize. When the conditioning already
// carries the full global token set the model is bypassed (tokenizer
// reconstruction pass-through).
std::vector<float> predict_embedding(const Model & model, const TokenizerSet & toks, const TokenBatch & inputs,
                                     const DecodeSchedule & schedule, Rng & rng);

enum class EmbeddingSource : uint8_t { ground_truth, tokenizer, model };

// Index construction over aligned samples. `query_modalities` selects the
// conditioning subset for the model-predicted source.
RetrievalIndex build_index(const std::vector<MultimodalSample> & samples,
                           const std::vector<TokenizedSample> & tokenized, EmbeddingSource source,
                           const TokenizerSet * toks, const Model * model, ModalitySet query_modalities,
                           const DecodeSchedule & schedule, uint64_t seed);

} // namespace anymodal
