#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "anymodal/masking.hpp"
#include "anymodal/nn.hpp"
#include "anymodal/optim.hpp"

namespace anymodal {

// ---------------------------------------------------------------------------
// Config
// ---------------------------------------------------------------------------

struct ModelConfig {
    int enc_layers = 4;
    int dec_layers = 4;
    int dim        = 128;
    int heads      = 4;
    int ffn_hidden = 256;
    int grid_size  = 8;   // grid modalities: grid_size^2 tokens, 2D positions
    int image_size = 64;  // pixel-RGB patch input
    int set_length = 16;  // global-embedding token count
    int max_seq_len = 128;
    std::array<int, kModalityCount> vocab_sizes{}; // 0 = modality disabled
    uint64_t init_seed = 0;

    int pixel_patch() const { return image_size / grid_size; }
    int pixel_patch_dim() const { return pixel_patch() * pixel_patch() * 3; }

    std::string        to_json() const;
    static ModelConfig from_json(const std::string & js);

    // desk-scale defaults: grid vocabs 256, sequence modalities share the
    // joint text vocabulary
    static ModelConfig desk_default(int text_vocab, int grid_vocab = 256, int set_vocab = 256);
};

// ---------------------------------------------------------------------------
// Model
// ---------------------------------------------------------------------------

struct EncoderBlock {
    LayerNorm          ln1, ln2;
    MultiHeadAttention attn;
    SwiGLU             ffn;
};

struct DecoderBlock {
    LayerNorm          ln1, ln2, ln3;
    MultiHeadAttention self_attn, cross_attn;
    SwiGLU             ffn;
};

// Any-to-any encoder-decoder over token batches. Input embeddings are
// token + modality + fixed sine-cosine positional (2D for grids, 1D for
// sequences/sets). Decoder queries carry modality + positional embeddings;
// sequence targets add the previous-token embedding and decode causally,
// grid/set targets attend freely (mask-token style).
class Model {
  public:
    explicit Model(const ModelConfig & cfg);

    const ModelConfig & config() const { return cfg_; }

    std::vector<Parameter *> parameters();
    uint64_t                 parameter_count();

    // ------------------------------------------------------------- training
    struct StepStats {
        double loss = 0.0;
        std::map<Modality, double> loss_per_modality; // token-weighted means
        int target_tokens = 0;
    };
    // forward+backward over a micro-batch with gradient accumulation; the
    // caller owns optimizer stepping
    StepStats forward_backward(const std::vector<TokenBatch> & batch);

    // ------------------------------------------------------------ inference
    // encoder states for a conditioning set (thread-safe on a frozen model)
    Tensor encode_infer(const TokenBatch & inputs) const;
    // logits for grid/set target positions: [n_positions, vocab(m)]
    Tensor decode_grid_infer(const Tensor & enc_states, Modality m, const std::vector<int> & positions) const;
    // next-token logits for a sequence prefix: [len(prefix)+1, text_vocab]
    Tensor decode_seq_infer(const Tensor & enc_states, Modality m, const std::vector<int> & prefix) const;

    int vocab_of(Modality m) const { return cfg_.vocab_sizes[(size_t) m]; }

    // fixed positional tables (exposed for the constancy checksum test)
    const Tensor & grid_positions() const { return pos_grid_; }
    const Tensor & seq_positions() const { return pos_seq_; }

    void save(const std::string & path, const AdamW * opt = nullptr);
    static Model load(const std::string & path, AdamW * opt = nullptr);

  private:
    ModelConfig cfg_;

    // token embedding tables: one per grid modality, one shared across
    // sequence modalities, one for the global-embedding set
    std::vector<Parameter> tok_tables_;
    std::array<int, kModalityCount> table_of_{}; // modality -> table index (-1 disabled)
    Parameter modality_emb_; // [kModalityCount + 1, dim]; last row = pixel-RGB
    Linear    pixel_proj_;

    std::vector<EncoderBlock> enc_;
    std::vector<DecoderBlock> dec_;
    LayerNorm enc_ln_, dec_ln_;

    // output heads mirror the table sharing
    std::vector<Linear> heads_;
    std::array<int, kModalityCount> head_of_{};

    Tensor pos_grid_; // [grid^2, dim] 2D sine-cosine
    Tensor pos_seq_;  // [max_seq_len, dim] 1D sine-cosine

    struct GatherRef {
        int table = -1; // tok table index, -1 none
        int id    = 0;
        int mod_row = -1; // row in modality_emb_
    };

    struct EncoderAssembly {
        Tensor x0;     // embedded input rows
        std::vector<GatherRef> gathers;
        int    pixel_rows = 0; // trailing rows fed through pixel_proj_
        Tensor pixel_patches;
    };

    EncoderAssembly assemble_encoder_input(const TokenBatch & batch) const;
    const Tensor &  pos_for(Modality m, int position) const;
    void            add_pos_row(Tensor & x, int row, Modality m, int position) const;

    Tensor encode_forward(const EncoderAssembly & asm_, std::vector<Tensor> * residuals);
    Tensor run_decoder_forward(const Tensor & enc_states, const Tensor & q0, AttnMask mask);

    friend struct ModelTrainPass;
};

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

struct TrainConfig {
    int      steps      = 500;
    int      batch_size = 4;
    uint64_t seed       = 0;
    int      log_every  = 25;
    AdamWConfig opt;
    std::string checkpoint_path;  // written periodically when set
    int         checkpoint_every = 500;
};

struct TrainResult {
    std::vector<double> loss_curve;        // one entry per log_every steps
    std::vector<double> lr_curve;
    std::map<Modality, double> final_loss_per_modality;
    double   first_loss = 0.0;
    double   last_loss  = 0.0;
    uint64_t steps_run  = 0;
};

TrainResult train_model(Model & model, AdamW & opt, const MaskingConfig & mask_cfg,
                        const std::vector<TokenizedDataset> & data, const Vocabulary & vocab,
                        const TrainConfig & tcfg);

} // namespace anymodal
