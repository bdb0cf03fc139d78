#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "anymodal/modality.hpp"
#include "anymodal/synth.hpp"
#include "anymodal/vocab.hpp"

namespace anymodal {

struct TokenSequence {
    Modality         modality;
    std::vector<int> ids;

    int length() const { return (int) ids.size(); }
};

// 1000-bin coordinate codec: encode floors into bins, decode to bin centers
// (error <= half a bin for in-range values, 1.0 clamps to bin 999). The 1e-4
// nudge absorbs float representation error of decimal inputs (0.9f < 0.9).
inline int coord_bin(float u) {
    const int b = (int) std::floor((double) u * 1000.0 + 1e-4);
    return b < 0 ? 0 : (b > 999 ? 999 : b);
}
inline float coord_unbin(int bin) {
    return ((float) bin + 0.5f) / 1000.0f;
}

// ---------------------------------------------------------------------------
// Metadata field registry
// ---------------------------------------------------------------------------

enum class MetaField : int {
    sam_clutter = 0,
    coco_clutter,
    instance_diversity,
    objectness,
    walkability,
    crowdedness,
    semantic_diversity,
    caption_chars,
    caption_words,
    caption_sentences,
    brightness,
    contrast,
    saturation,
    entropy,
    colorfulness,
    geometric_complexity,
    occlusion_score,
    orig_height,
    orig_width,
    COUNT
};

enum class BinRule : uint8_t {
    count,  // clamp(round(v), 0, 999); decode is exact for integer values
    linear, // clamp(floor((v-lo)/(hi-lo)*1000), 0, 999); decode to bin centers
};

struct MetaFieldInfo {
    MetaField   field;
    std::string name;
    int         type_id; // value of the v1 type token
    BinRule     rule;
    float       lo = 0.0f, hi = 1.0f; // linear rule range

    float tolerance() const { return rule == BinRule::count ? 0.5f : 0.5f / 1000.0f * (hi - lo); }
};

// Frozen field -> (type id, binning rule) table. Type ids for crowdedness (5)
// and brightness (10) are fixed anchors; the rest are assigned in declaration
// order around them and versioned with the artifact.
class MetadataTypeRegistry {
  public:
    static const MetadataTypeRegistry & frozen();

    const MetaFieldInfo & info(MetaField f) const;
    const MetaFieldInfo * by_type_id(int type_id) const; // nullptr when unknown
    int                   field_count() const { return (int) fields_.size(); }

    int   bin_value(MetaField f, float v) const;
    float unbin_value(MetaField f, int bin) const;

    static float get(const MetadataRecord & r, MetaField f);
    static void  set(MetadataRecord & r, MetaField f, float v);

    std::vector<MetaField> all_fields() const;

    void                        save(const std::string & path) const;
    static MetadataTypeRegistry load(const std::string & path);

  private:
    std::vector<MetaFieldInfo> fields_;
    std::array<int, 1000>      type_to_index_;

    MetadataTypeRegistry() { type_to_index_.fill(-1); }
    void add(MetaField f, const char * name, int type_id, BinRule rule, float lo = 0.0f, float hi = 1.0f);
};

// ---------------------------------------------------------------------------
// Grammar codecs
// ---------------------------------------------------------------------------

// boxes: per box v0=bin(xmin) v1=bin(ymin) v2=bin(xmax) v3=bin(ymax) <class>
TokenSequence     encode_bbox_set(const std::vector<BBox> & boxes, const Vocabulary & vocab);
std::vector<BBox> decode_bbox_set(const TokenSequence & seq, const Vocabulary & vocab);

// metadata: per field v1=<type> v0=<binned value>, field order permuted by
// order_seed; each (v1, v0) pair is one chunk for chunk-based masking
TokenSequence encode_metadata(const MetadataRecord & record, const std::vector<MetaField> & fields,
                              uint64_t order_seed, const Vocabulary & vocab, const MetadataTypeRegistry & reg);

// same grammar, fields emitted in the given order (no permutation)
TokenSequence encode_metadata_ordered(const MetadataRecord & record, const std::vector<MetaField> & fields,
                                      const Vocabulary & vocab, const MetadataTypeRegistry & reg);

struct MetadataEntry {
    MetaField field;
    int       bin;
    float     value; // unbinned
};
std::vector<MetadataEntry> decode_metadata(const TokenSequence & seq, const Vocabulary & vocab,
                                           const MetadataTypeRegistry & reg);
void apply_metadata(const std::vector<MetadataEntry> & entries, MetadataRecord & out);

// palette: "color" v0=c then per color v1=R v2=G v3=B
TokenSequence encode_palette(const PaletteColors & palette, const Vocabulary & vocab);
PaletteColors decode_palette(const TokenSequence & seq, const Vocabulary & vocab);

// poses: empty list -> single "none"; else per human three component groups
// ("bbox" + 4 coord bins, "pose" + 8 VQ ids, "shape" + 1 bin), group order
// shuffled per human by shuffle_seed; decode accepts any group order
struct DecodedPose {
    std::array<float, 4> bbox{};
    std::vector<int>     vq_ids; // 8 raw pose-VQ ids
    float                shape_scalar = 0.0f;
};
TokenSequence encode_pose_sequence(const std::vector<PoseRecord> & poses,
                                   const std::vector<std::vector<int>> & pose_vq_ids, uint64_t shuffle_seed,
                                   const Vocabulary & vocab);
std::vector<DecodedPose> decode_pose_sequence(const TokenSequence & seq, const Vocabulary & vocab);

// instances: per instance "polygon" + 4 bbox bins + 16 mask-VQ ids
struct DecodedInstance {
    std::array<float, 4> bbox{};
    std::vector<int>     vq_ids; // 16 raw mask-VQ ids
};
TokenSequence encode_instance(const BBox & bbox, const std::vector<int> & mask_vq_ids, const Vocabulary & vocab);
TokenSequence encode_instance_set(const std::vector<BBox> & boxes,
                                  const std::vector<std::vector<int>> & mask_vq_ids, const Vocabulary & vocab);
std::vector<DecodedInstance> decode_instance_set(const TokenSequence & seq, const Vocabulary & vocab);

// caption: subword ids + EOS, truncated at max_len (EOS kept) when over budget
TokenSequence encode_caption(const std::string & text, const Vocabulary & vocab, int max_len,
                             bool * truncated = nullptr);
std::string   decode_caption(const TokenSequence & seq, const Vocabulary & vocab);

} // namespace anymodal
