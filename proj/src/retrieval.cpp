#include "anymodal/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "anymodal/binio.hpp"

namespace anymodal {

void RetrievalIndex::add(uint64_t id, const std::vector<float> & emb, int label) {
    if ((int) emb.size() != dim) {
        throw InvalidInput("index expects dim " + std::to_string(dim) + ", got " + std::to_string(emb.size()));
    }
    ids.push_back(id);
    embeddings.insert(embeddings.end(), emb.begin(), emb.end());
    labels.push_back(label);
}

void RetrievalIndex::validate() const {
    std::set<uint64_t> seen;
    for (size_t i = 0; i < ids.size(); ++i) {
        if (!seen.insert(ids[i]).second) {
            throw InvalidInput("duplicate id in retrieval index");
        }
        double n2 = 0.0;
        for (int c = 0; c < dim; ++c) {
            n2 += (double) embeddings[i * (size_t) dim + c] * embeddings[i * (size_t) dim + c];
        }
        if (std::fabs(std::sqrt(n2) - 1.0) > 1e-5) {
            throw InvalidInput("index embedding " + std::to_string(i) + " is not unit norm");
        }
    }
}

static constexpr uint32_t kIndexVersion = 1;

void RetrievalIndex::save(const std::string & path) const {
    BinWriter w(path);
    w.magic("4MIX");
    w.u32(kIndexVersion);
    w.str(source);
    w.u32((uint32_t) size());
    w.u32((uint32_t) dim);
    for (uint64_t id : ids) {
        w.u64(id);
    }
    for (int l : labels) {
        w.i32(l);
    }
    w.f32s(embeddings);
    w.close();
}

RetrievalIndex RetrievalIndex::load(const std::string & path) {
    BinReader r(path);
    r.expect_magic("4MIX");
    if (r.u32() != kIndexVersion) {
        throw ArtifactError("unsupported index version in " + path);
    }
    RetrievalIndex idx;
    idx.source = r.str();
    const uint32_t n = r.u32();
    idx.dim = (int) r.u32();
    for (uint32_t i = 0; i < n; ++i) {
        idx.ids.push_back(r.u64());
    }
    for (uint32_t i = 0; i < n; ++i) {
        idx.labels.push_back(r.i32());
    }
    idx.embeddings = r.f32s((size_t) n * idx.dim);
    return idx;
}

KnnResult knn(const RetrievalIndex & index, const std::vector<float> & query, const KnnConfig & cfg) {
    if (index.size() == 0) {
        throw InvalidInput("knn: empty index");
    }
    if ((int) query.size() != index.dim) {
        throw InvalidInput("knn: query dim mismatch");
    }
    if (cfg.k < 1 || cfg.temperature <= 0.0) {
        throw InvalidInput("knn: k must be >= 1 and temperature > 0");
    }
    const int n = (int) index.size();
    std::vector<std::pair<double, int>> scored((size_t) n);
    for (int i = 0; i < n; ++i) {
        double dot = 0.0;
        const float * e = index.embeddings.data() + (size_t) i * index.dim;
        for (int c = 0; c < index.dim; ++c) {
            dot += (double) e[c] * query[(size_t) c];
        }
        scored[(size_t) i] = {-dot, i}; // ties resolve to the lower index
    }
    KnnResult result;
    int k = cfg.k;
    if (k > n) {
        k = n;
        result.truncated = true;
    }
    std::partial_sort(scored.begin(), scored.begin() + k, scored.end());

    double wsum = 0.0;
    for (int j = 0; j < k; ++j) {
        KnnHit hit;
        hit.index      = scored[(size_t) j].second;
        hit.id         = index.ids[(size_t) hit.index];
        hit.similarity = -scored[(size_t) j].first;
        hit.weight     = std::exp(hit.similarity / cfg.temperature);
        wsum += hit.weight;
        result.hits.push_back(hit);
    }
    for (auto & hit : result.hits) {
        hit.weight /= wsum;
    }
    return result;
}

std::map<int, double> knn_vote(const RetrievalIndex & index, const KnnResult & result) {
    std::map<int, double> votes;
    for (const auto & hit : result.hits) {
        const int label = index.labels[(size_t) hit.index];
        if (label >= 0) {
            votes[label] += hit.weight;
        }
    }
    return votes;
}

std::vector<float> predict_embedding(const Model & model, const TokenizerSet & toks, const TokenBatch & inputs,
                                     const DecodeSchedule & schedule, Rng & rng) {
    // pass-through: conditioning that already carries the full global token
    // set is just the tokenizer reconstruction
    for (const auto & e : inputs.input) {
        if (e.modality == Modality::global_emb && (int) e.ids.size() == model.config().set_length) {
            return detokenize_global(toks, e.ids);
        }
    }
    const std::vector<int> ids = iterative_decode(model, inputs, Modality::global_emb, schedule, rng);
    return detokenize_global(toks, ids);
}

RetrievalIndex build_index(const std::vector<MultimodalSample> & samples,
                           const std::vector<TokenizedSample> & tokenized, EmbeddingSource source,
                           const TokenizerSet * toks, const Model * model, ModalitySet query_modalities,
                           const DecodeSchedule & schedule, uint64_t seed) {
    if (samples.empty()) {
        throw InvalidInput("build_index: no samples");
    }
    RetrievalIndex idx;
    idx.dim = (int) samples[0].payload.global_emb.size();
    switch (source) {
        case EmbeddingSource::ground_truth: idx.source = "ground-truth"; break;
        case EmbeddingSource::tokenizer:    idx.source = "tokenizer-reconstructed"; break;
        case EmbeddingSource::model:        idx.source = "model-predicted"; break;
    }
    for (size_t i = 0; i < samples.size(); ++i) {
        const auto & s = samples[i];
        std::vector<float> emb;
        switch (source) {
            case EmbeddingSource::ground_truth:
                emb = s.payload.global_emb;
                break;
            case EmbeddingSource::tokenizer: {
                if (!toks) {
                    throw InvalidInput("build_index: tokenizer source needs a tokenizer set");
                }
                std::vector<double> gt(s.payload.global_emb.begin(), s.payload.global_emb.end());
                emb = detokenize_global(*toks, toks->global_vae.encode_vec(gt));
                break;
            }
            case EmbeddingSource::model: {
                if (!toks || !model || tokenized.size() != samples.size()) {
                    throw InvalidInput("build_index: model source needs tokenizers, model and tokenized samples");
                }
                Rng rng = Rng::derive(seed, s.id);
                const TokenBatch inputs = batch_from_sample(tokenized[i], query_modalities);
                emb = predict_embedding(*model, *toks, inputs, schedule, rng);
                break;
            }
        }
        // majority class of the sample doubles as a kNN-classification label
        int label = -1;
        if (!s.payload.semantic.empty()) {
            std::array<int, 16> hist{};
            for (int32_t c : s.payload.semantic.data) {
                hist[(size_t) c]++;
            }
            label = (int) (std::max_element(hist.begin(), hist.end()) - hist.begin());
        }
        idx.add(s.id, emb, label);
    }
    idx.validate();
    return idx;
}

} // namespace anymodal
