#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "anymodal/codebook.hpp"
#include "anymodal/grid.hpp"
#include "anymodal/nn.hpp"
#include "anymodal/polygon.hpp"

namespace anymodal {

// ---------------------------------------------------------------------------
// Reconstruction losses (loss value + gradient wrt decoder output)
// ---------------------------------------------------------------------------

enum class ReconLoss : uint8_t { smooth_l1, l1, mse, cosine, cross_entropy, dice };

const char * recon_loss_name(ReconLoss l);
ReconLoss    recon_loss_from_name(const std::string & name);

double recon_loss_continuous(ReconLoss kind, const Tensor & y, const Tensor & target, Tensor & dy,
                             double smooth_beta = 1.0);
// categorical: y rows hold pix*classes logits; targets row-major per pixel
double recon_loss_categorical(const Tensor & y, const std::vector<int> & targets, int classes, Tensor & dy);
// soft dice over 2-class pixel logits (ablation-harness loss option)
double recon_loss_dice(const Tensor & y, const std::vector<int> & targets, Tensor & dy);

// ---------------------------------------------------------------------------
// Patch adapters between payload grids and [n_patches, patch_dim] matrices
// (patches in raster order: patch index = row * grid_w + col)
// ---------------------------------------------------------------------------

Tensor patches_from_f32(const GridF32 & g, int patch_h, int patch_w, double scale = 1.0, double offset = 0.0);
Tensor patches_from_u8(const GridU8 & g, int patch_h, int patch_w, double scale = 1.0, double offset = 0.0);
Tensor patches_onehot(const GridI32 & ids, int classes, int patch_h, int patch_w);

std::vector<int> patch_targets(const GridI32 & ids, int patch_h, int patch_w);
std::vector<int> patch_targets_u8(const GridU8 & mask, int patch_h, int patch_w);

GridF32 grid_from_patches(const Tensor & patches, int H, int W, int channels, int patch_h, int patch_w,
                          double scale = 1.0, double offset = 0.0);
GridI32 ids_from_patch_logits(const Tensor & logits, int H, int W, int classes, int patch_h, int patch_w);

// ---------------------------------------------------------------------------
// Spatial VQ tokenizer: patch flatten -> MLP encoder -> codebook -> MLP decoder
// ---------------------------------------------------------------------------

struct SpatialTokenizerConfig {
    std::string name = "spatial";
    int image_size  = 64;
    int in_channels = 1;
    int patch_h = 8, patch_w = 8;
    int latent_dim = 32;
    int width      = 128;
    int vocab      = 256;
    ReconLoss loss = ReconLoss::smooth_l1;
    int    classes        = 0; // > 0 selects the categorical decoder
    double smooth_l1_beta = 1.0;
    // training
    int      steps        = 800;
    int      batch_images = 16;
    double   lr           = 1e-3;
    double   commitment_beta = 0.25;
    double   codebook_decay  = 0.99;
    double   holdout_fraction = 0.1;
    uint64_t seed = 0;

    int grid_h() const { return image_size / patch_h; }
    int grid_w() const { return image_size / patch_w; }
    int tokens_per_image() const { return grid_h() * grid_w(); }
    int pix() const { return patch_h * patch_w; }
    int patch_dim() const { return pix() * in_channels; }
    int out_dim() const { return classes > 0 ? pix() * classes : patch_dim(); }

    std::string        to_json() const;
    static SpatialTokenizerConfig from_json(const std::string & js);
};

struct SpatialTokenizer {
    SpatialTokenizerConfig cfg;
    SwiGLU   enc, dec;
    Codebook book;
    bool     trained = false;

    // patches [n, patch_dim] -> token ids in raster order
    std::vector<int> tokenize(const Tensor & patches) const;
    // ids -> decoder output [n, out_dim]
    Tensor detokenize(const std::vector<int> & ids) const;

    void collect(std::vector<Parameter *> & out);
    void save(const std::string & path) const;
    static SpatialTokenizer load(const std::string & path);
};

struct TokenizerTrainReport {
    std::vector<double> loss_curve;
    double holdout_loss   = 0.0;
    double holdout_metric = 0.0; // IoU for masks/categorical, cosine for embeddings, -loss otherwise
    int    steps          = 0;
};

// images: per image [tokens_per_image, patch_dim]; targets per image (pixel
// class ids, raster within each patch) for categorical losses, else empty
SpatialTokenizer train_spatial_tokenizer(const std::vector<Tensor> & images,
                                         const std::vector<std::vector<int>> & targets,
                                         const SpatialTokenizerConfig & cfg, TokenizerTrainReport * report);

// binary 64x64 masks -> 16-token tokenizer (Instance-mask configuration)
SpatialTokenizer train_mask_tokenizer(const std::vector<GridU8> & masks, const SpatialTokenizerConfig & cfg,
                                      TokenizerTrainReport * report);

// mean reconstruction IoU of a mask tokenizer over the given masks
double mask_tokenizer_iou(const SpatialTokenizer & tok, const std::vector<GridU8> & masks);

// ---------------------------------------------------------------------------
// Bottleneck MLP discrete VAE with Memcodes quantization
// ---------------------------------------------------------------------------

struct BottleneckVAEConfig {
    std::string name = "bottleneck";
    int input_dim = 64;
    int n_tokens  = 16;
    int slice_dim = 8;
    int width     = 128;
    int vocab     = 256;
    ReconLoss loss = ReconLoss::smooth_l1;
    double smooth_l1_beta = 1.0;
    // training
    int      steps = 600;
    int      batch = 64;
    double   lr    = 1e-3;
    double   commitment_beta  = 0.25;
    double   codebook_decay   = 0.99;
    double   holdout_fraction = 0.1;
    uint64_t seed = 0;

    int latent_dim() const { return n_tokens * slice_dim; }

    std::string to_json() const;
    static BottleneckVAEConfig from_json(const std::string & js);
};

struct BottleneckVAE {
    BottleneckVAEConfig cfg;
    SwiGLU            enc, dec;
    MemcodesQuantizer quant;
    bool              trained = false;

    std::vector<int>    encode_vec(const std::vector<double> & x) const; // n_tokens ids
    std::vector<double> decode_ids(const std::vector<int> & ids) const;  // input_dim values

    void collect(std::vector<Parameter *> & out);
    void save(const std::string & path) const;
    static BottleneckVAE load(const std::string & path);
};

BottleneckVAE train_bottleneck_vae(const std::vector<std::vector<double>> & data, const BottleneckVAEConfig & cfg,
                                   TokenizerTrainReport * report);

// polygons are resampled to n_points and flattened to 2*n_points inputs;
// the report metric is rasterized IoU against the input polygons
BottleneckVAE train_path_tokenizer(const std::vector<std::vector<PolyPoint>> & polygons, int n_points,
                                   const BottleneckVAEConfig & cfg, TokenizerTrainReport * report);
double path_tokenizer_iou(const BottleneckVAE & vae, const std::vector<std::vector<PolyPoint>> & polygons,
                          int n_points, int raster_size = 64);

BottleneckVAE train_global_tokenizer(const std::vector<std::vector<double>> & embeddings,
                                     const BottleneckVAEConfig & cfg, TokenizerTrainReport * report);
BottleneckVAE train_pose_tokenizer(const std::vector<std::vector<double>> & keypoint_vecs,
                                   const BottleneckVAEConfig & cfg, TokenizerTrainReport * report);

// PSNR between two grids of equal shape, peak = given range
double grid_psnr(const GridF32 & a, const GridF32 & b, double peak);

} // namespace anymodal
