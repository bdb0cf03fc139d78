#pragma once

#include <map>
#include <string>
#include <vector>

#include "anymodal/masking.hpp"
#include "anymodal/seq_codecs.hpp"
#include "anymodal/shards.hpp"
#include "anymodal/vq_tokenizers.hpp"

namespace anymodal {

// ---------------------------------------------------------------------------
// The full tokenizer suite: six spatial VQ tokenizers (the edge tokenizer is
// shared between both edge modalities), the instance-mask tokenizer feeding
// the instance sequence grammar, bottleneck VAEs for poses and global
// embeddings, and the joint text vocabulary.
// ---------------------------------------------------------------------------

struct SequenceCaps {
    int caption  = 48;
    int bbox     = 64;
    int metadata = 40;
    int palette  = 23;
    int pose     = 64;
    int instance = 128;
};

struct TokenizerBuildConfig {
    int grid_vocab = 256; // desk scale (8192 in the documented large preset)
    int set_vocab  = 256;
    int pose_vocab = 256; // per-head Memcodes vocab (1024 documented)
    int mask_vocab = 256; // instance-mask tokenizer (1024 documented)
    int text_vocab_target = 30000;

    int    spatial_steps = 900;
    int    vae_steps     = 1200;
    int    mask_steps    = 1200;
    int    width         = 128;
    int    latent_dim    = 32;
    double lr            = 2e-3;
    uint64_t seed        = 0;

    SequenceCaps caps;
};

struct TokenizerSet {
    Vocabulary           vocab;
    MetadataTypeRegistry registry = MetadataTypeRegistry::frozen();
    SequenceCaps         caps;

    SpatialTokenizer rgb, depth, normals, semantic, edges, dense_feat;
    SpatialTokenizer instance_mask; // 64x64 binary masks -> 16 tokens
    BottleneckVAE    pose_vae;      // 20-dim keypoints -> 8 tokens
    BottleneckVAE    global_vae;    // 64-dim unit embedding -> 16 tokens

    int grid_tokens() const { return rgb.cfg.tokens_per_image(); }
};

// trains every tokenizer on the given samples; per-tokenizer holdout metrics
// land in `metrics` when provided
TokenizerSet train_tokenizer_set(const std::vector<MultimodalSample> & samples, const TokenizerBuildConfig & cfg,
                                 std::map<std::string, double> * metrics = nullptr);

void         save_tokenizer_set(const TokenizerSet & toks, const std::string & dir);
TokenizerSet load_tokenizer_set(const std::string & dir);

// ---------------------------------------------------------------------------
// Sample tokenization / detokenization
// ---------------------------------------------------------------------------

// order_seed drives metadata field order, palette granularity choice and pose
// component shuffling
TokenizedSample tokenize_sample(const MultimodalSample & sample, const TokenizerSet & toks, uint64_t order_seed);

GridU8  detokenize_rgb(const TokenizerSet & toks, const std::vector<int> & ids);
GridF32 detokenize_depth(const TokenizerSet & toks, const std::vector<int> & ids);
GridF32 detokenize_normals(const TokenizerSet & toks, const std::vector<int> & ids); // unit per pixel
GridI32 detokenize_semantic(const TokenizerSet & toks, const std::vector<int> & ids);
GridU8  detokenize_edges(const TokenizerSet & toks, const std::vector<int> & ids);
GridF32 detokenize_dense(const TokenizerSet & toks, const std::vector<int> & ids);
std::vector<float> detokenize_global(const TokenizerSet & toks, const std::vector<int> & ids); // unit norm
GridU8  detokenize_instance_mask(const TokenizerSet & toks, const std::vector<int> & vq_ids);

// full unmasked conditioning batch over a modality subset
TokenBatch batch_from_sample(const TokenizedSample & sample, ModalitySet include, bool rgb_as_pixels = false);

// ---------------------------------------------------------------------------
// Token shards (binary, magic "4MTS")
// ---------------------------------------------------------------------------

void             save_tokenized_dataset(const TokenizedDataset & ds, const std::string & path);
TokenizedDataset load_tokenized_dataset(const std::string & path);

// ---------------------------------------------------------------------------
// Synthetic dataset roles (CC12M / COYO / C4 analogs)
// ---------------------------------------------------------------------------

struct DatasetRole {
    std::string name;
    ModalitySet coverage;
    int         samples = 0;
};

// full-coverage, 7-modality and text-only roles with the given sample counts
std::vector<DatasetRole> default_dataset_roles(int n_full, int n_core, int n_text);

} // namespace anymodal
