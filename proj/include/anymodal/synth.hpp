#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "anymodal/grid.hpp"
#include "anymodal/modality.hpp"
#include "anymodal/ontology.hpp"

namespace anymodal {

// ---------------------------------------------------------------------------
// Scene description
// ---------------------------------------------------------------------------

enum class ShapeKind : uint8_t { circle, rectangle, triangle };

struct PoseRecord {
    std::array<float, 4>  bbox{};      // xmin, ymin, xmax, ymax in [0,1]
    std::array<float, 20> keypoints{}; // 10 (x, y) pairs in [0,1], inside bbox
    float                 shape_scalar = 0.0f; // [0,1]
};

struct ShapePrimitive {
    ShapeKind              kind = ShapeKind::circle;
    std::array<uint8_t, 3> color{};
    float                  cx = 0.5f, cy = 0.5f; // center in [0,1]^2
    float                  size   = 0.2f;        // full extent as fraction of image
    float                  aspect = 1.0f;        // rectangle height/width modifier
    float                  depth  = 1.0f;        // positive, pairwise distinct per scene
    int                    class_id = 0;
    bool                   is_human = false;     // rendered as head+body composite, carries a pose
    float                  tilt_x = 0.0f, tilt_y = 0.0f; // flat-shape normal tilt
};

struct Scene {
    uint64_t               seed       = 0;
    int                    image_size = 64;
    std::array<uint8_t, 3> background_color{};
    std::vector<ShapePrimitive> shapes; // 1..8, fully inside bounds
};

// ---------------------------------------------------------------------------
// Aligned payloads
// ---------------------------------------------------------------------------

struct MetadataRecord {
    int   crowdedness        = 0; // humans
    int   sam_clutter        = 0; // instances of any class
    int   coco_clutter       = 0; // instances of countable classes
    int   instance_diversity = 0; // unique countable classes among instances
    float objectness         = 0; // fraction of countable-class pixels
    float walkability        = 0; // fraction of walkable-class pixels
    int   semantic_diversity = 0; // unique classes in the semantic map
    int   caption_chars      = 0;
    int   caption_words      = 0;
    int   caption_sentences  = 0;
    float geometric_complexity = 0; // spherical variance of normals, [0,1]
    float occlusion_score      = 0; // fraction of depth Sobel pixels over threshold
    int   orig_height = 0, orig_width = 0; // synthetic pre-crop size
    float brightness   = 0; // mean grayscale, [0,255]
    float contrast     = 0; // grayscale std, [0,128]
    float saturation   = 0; // mean HSV-S, [0,1]
    float entropy      = 0; // Shannon entropy of the 256-bin gray histogram, [0,8] bits
    float colorfulness = 0; // Hasler-Suesstrunk metric
};

struct InstanceMask {
    GridU8 mask; // H x W binary
    int    class_id = 0;
};

struct BBox {
    float xmin = 0, ymin = 0, xmax = 0, ymax = 0; // [0,1]
    int   class_id = 0;
};

struct PaletteColors {
    std::vector<std::array<uint8_t, 3>> colors; // 1..7 entries
};

struct PayloadSet {
    GridU8  rgb;      // H x W x 3
    GridF32 depth;    // H x W, depth units
    GridF32 normals;  // H x W x 3, unit per pixel
    GridI32 semantic; // H x W class ids
    std::vector<InstanceMask> instances;
    std::vector<BBox>         bboxes;
    GridU8      edges_rgb;  // H x W binary
    GridU8      edges_inst; // H x W binary
    std::string caption;
    std::array<PaletteColors, 7> palettes; // palettes[c-1] has c colors
    MetadataRecord     metadata;
    std::vector<float> global_emb; // 64, unit norm
    GridF32            dense_feat; // G x G x 64
    std::vector<PoseRecord> poses;
};

struct MultimodalSample {
    uint64_t    id = 0;
    Scene       scene;
    PayloadSet  payload;
    ModalitySet coverage; // which payloads are populated
};

// ---------------------------------------------------------------------------
// Generation
// ---------------------------------------------------------------------------

struct GenerationConfig {
    int image_size = 64; // square, power of two >= 32
    int min_shapes = 1;
    int max_shapes = 6;
    int feature_grid = 8;  // dense_feat cells per side
    int embed_dim    = 64; // global/dense embedding dim
    double p_human    = 0.30;
    double p_walkable = 0.25;
    double p_scenery  = 0.15; // non-countable object classes
    double p_two_sentence_caption = 0.25;
    float  edge_tau          = 0.2f;  // RGB edge threshold, fraction of max gradient
    float  occlusion_threshold = 0.3f;
    uint64_t palette_seed = 0x9a1e77e5u; // fixed k-means init seed
    uint64_t embed_seed   = 0x7a11beadu; // fixed random-projection seed

    void validate() const; // throws ConfigError
};

// Deterministic for fixed (seed, config); byte-stable across runs.
MultimodalSample generate_sample(uint64_t seed, const GenerationConfig & cfg);

// Scene-level pieces, exposed for tests and the shard writer.
Scene       sample_scene(uint64_t seed, const GenerationConfig & cfg);
void        render_scene(const Scene & scene, PayloadSet & out, GridI32 & instance_ids);
std::string caption_for(const Scene & scene, uint64_t seed, const GenerationConfig & cfg);

// ---------------------------------------------------------------------------
// Metadata operations
// ---------------------------------------------------------------------------

float colorfulness(const GridU8 & rgb);
float occlusion_score(const GridF32 & depth, float threshold = 0.3f);
float geometric_complexity(const GridF32 & normals); // throws InvalidInput on non-unit input

// walkability / objectness / clutter / diversity / caption-length fields
void semantic_scores(const GridI32 & semantic, const std::vector<InstanceMask> & instances,
                     const std::vector<PoseRecord> & poses, const std::string & caption,
                     const Ontology & onto, MetadataRecord & out);

// brightness / contrast / saturation / entropy
void image_stats(const GridU8 & rgb, MetadataRecord & out);

// ---------------------------------------------------------------------------
// Palette / edges / embeddings
// ---------------------------------------------------------------------------

PaletteColors extract_palette(const GridU8 & rgb, int c, uint64_t seed);

GridU8 extract_edges_rgb(const GridU8 & rgb, float tau = 0.2f);
GridU8 extract_edges_instances(const GridI32 & instance_ids);

void synth_embeddings(const PayloadSet & payload, const GridI32 & instance_ids, const GenerationConfig & cfg,
                      GridF32 & dense_feat, std::vector<float> & global_emb);

// Payload invariants (unit normals, non-empty masks, unit global embedding,
// full semantic coverage). Throws InvalidInput with a description on failure.
void validate_payload(const PayloadSet & p, const Ontology & onto);

} // namespace anymodal
