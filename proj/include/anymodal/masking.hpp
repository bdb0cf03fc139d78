#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "anymodal/modality.hpp"
#include "anymodal/nn.hpp"
#include "anymodal/rng.hpp"
#include "anymodal/vocab.hpp"

namespace anymodal {

// ---------------------------------------------------------------------------
// Configuration types
// ---------------------------------------------------------------------------

// Per-side masking spec: Dirichlet concentration per modality, with pinned
// modalities taken fully unmasked (input side) and excluded ones never drawn.
struct AlphaSpec {
    double                      sym = 1.0; // default alpha
    std::map<Modality, double>  per_modality;
    std::set<Modality>          pins;
    std::set<Modality>          excludes;

    double alpha_for(Modality m) const {
        auto it = per_modality.find(m);
        return it != per_modality.end() ? it->second : sym;
    }
    bool pinned(Modality m) const { return pins.count(m) > 0; }
    bool excluded(Modality m) const { return excludes.count(m) > 0; }

    void validate(const std::string & where) const; // throws ConfigError
};

struct MaskingStrategy {
    std::string name;
    AlphaSpec   input_alpha;
    AlphaSpec   target_alpha;
    int         input_budget  = 64; // desk default; 256 at paper scale
    int         target_budget = 64;
    double      span_mean     = 3.0; // geometric span length mean
    bool        rgb_as_pixels = false;

    void validate() const;
};

struct StrategyMixture {
    std::vector<MaskingStrategy> strategies;
    std::vector<double>          weights; // normalized at load

    void normalize();
};

struct DatasetSpec {
    std::string     name;
    double          weight = 1.0;
    ModalitySet     available;
    StrategyMixture mixture;
};

struct MaskingConfig {
    std::vector<DatasetSpec> datasets;

    void validate() const;

    // line-anchored structured text format
    static MaskingConfig parse(const std::string & text, const std::string & origin = "<config>");
    std::string          render() const;

    // Appendix-E style default: three datasets weighted 0.6/0.2/0.2, with
    // all-to-all (alpha 0.01/0.1/1/10), RGB-to-all (targets at alpha 0.5),
    // pixel-RGB-to-all and caption/global-biased strategies
    static MaskingConfig default_config(int input_budget = 64, int target_budget = 64);
};

// ---------------------------------------------------------------------------
// Tokenized data
// ---------------------------------------------------------------------------

struct TokenizedSample {
    uint64_t id = 0;
    std::array<std::vector<int>, kModalityCount> tokens;
    Tensor rgb_pixels; // [grid^2, patch_dim] patch matrix for the pixel-RGB input variant

    bool has(Modality m) const { return !tokens[(size_t) m].empty(); }
    const std::vector<int> & of(Modality m) const { return tokens[(size_t) m]; }
    std::vector<int> &       of(Modality m) { return tokens[(size_t) m]; }
};

struct TokenizedDataset {
    std::string                  name;
    std::vector<TokenizedSample> samples;
};

// ---------------------------------------------------------------------------
// TokenBatch
// ---------------------------------------------------------------------------

struct TokenBatchEntry {
    Modality         modality;
    std::vector<int> ids;
    std::vector<int> positions;
};

struct TokenBatch {
    std::vector<TokenBatchEntry> input;
    std::vector<TokenBatchEntry> target;
    std::string dataset_tag;
    std::string strategy_tag;
    uint64_t    sample_id     = 0;
    bool        rgb_as_pixels = false;
    Tensor      rgb_pixels;

    int input_tokens() const;
    int target_tokens() const;
};

// throws InvalidInput when budget or disjointness invariants fail
void validate_token_batch(const TokenBatch & batch, const MaskingStrategy & strategy);

// ---------------------------------------------------------------------------
// Operations
// ---------------------------------------------------------------------------

// normalized Gamma draws; proportions sum to 1 within 1e-9
std::vector<double> sample_dirichlet(const std::vector<double> & alphas, Rng & rng);

// largest-remainder rounding of proportions*budget with proportional
// redistribution of capped overflow; sum == min(budget, sum(caps))
std::vector<int> allocate_budget(const std::vector<double> & proportions, int budget,
                                 const std::vector<int> & caps);

struct RandomMaskResult {
    std::vector<int> selected;  // draw order
    std::vector<int> remainder; // ascending
};
RandomMaskResult mask_random(int length, int count, Rng & rng);

struct SpanMaskResult {
    std::vector<int> input;  // kept tokens with sentinel ids at masked runs
    std::vector<int> target; // sentinel-delimited spans, EOS-terminated
    int              n_spans = 0;
};
// T5-style span corruption: round((1-keep_ratio)*n) tokens masked in spans of
// geometric length (mean mean_span), uniformly placed, sentinels S0..S99
SpanMaskResult mask_span(const std::vector<int> & seq, double keep_ratio, double mean_span,
                         const Vocabulary & vocab, Rng & rng);

// whole (v1,v0) chunks kept or masked, one sentinel per contiguous masked run
SpanMaskResult mask_metadata_chunks(const std::vector<int> & seq, int keep_count, const Vocabulary & vocab,
                                    Rng & rng);

// dataset draw -> sample draw -> strategy draw -> Dirichlet budgets -> masks;
// deterministic function of (config, data, seed, index)
TokenBatch sample_training_example(const MaskingConfig & cfg, const std::vector<TokenizedDataset> & data,
                                   const Vocabulary & vocab, uint64_t seed, uint64_t index);

// the strategy drawn for a given (seed, index), for tests and validation
const MaskingStrategy & strategy_of_batch(const MaskingConfig & cfg, const TokenBatch & batch);

} // namespace anymodal
