#include "anymodal/seq_codecs.hpp"

#include <cmath>
#include <sstream>

#include "anymodal/binio.hpp"
#include "anymodal/rng.hpp"

namespace anymodal {

// ---------------------------------------------------------------------------
// MetadataTypeRegistry
// ---------------------------------------------------------------------------

void MetadataTypeRegistry::add(MetaField f, const char * name, int type_id, BinRule rule, float lo, float hi) {
    MetaFieldInfo info;
    info.field   = f;
    info.name    = name;
    info.type_id = type_id;
    info.rule    = rule;
    info.lo      = lo;
    info.hi      = hi;
    type_to_index_[(size_t) type_id] = (int) fields_.size();
    fields_.push_back(std::move(info));
}

const MetadataTypeRegistry & MetadataTypeRegistry::frozen() {
    static const MetadataTypeRegistry reg = [] {
        MetadataTypeRegistry r;
        // type ids 5 (crowdedness) and 10 (brightness) are fixed anchors
        r.add(MetaField::sam_clutter,        "sam_clutter",        0,  BinRule::count);
        r.add(MetaField::coco_clutter,       "coco_clutter",       1,  BinRule::count);
        r.add(MetaField::instance_diversity, "instance_diversity", 2,  BinRule::count);
        r.add(MetaField::objectness,         "objectness",         3,  BinRule::linear, 0.0f, 1.0f);
        r.add(MetaField::walkability,        "walkability",        4,  BinRule::linear, 0.0f, 1.0f);
        r.add(MetaField::crowdedness,        "crowdedness",        5,  BinRule::count);
        r.add(MetaField::semantic_diversity, "semantic_diversity", 6,  BinRule::count);
        r.add(MetaField::caption_chars,      "caption_chars",      7,  BinRule::count);
        r.add(MetaField::caption_words,      "caption_words",      8,  BinRule::count);
        r.add(MetaField::caption_sentences,  "caption_sentences",  9,  BinRule::count);
        r.add(MetaField::brightness,         "brightness",         10, BinRule::count);
        r.add(MetaField::contrast,           "contrast",           11, BinRule::count);
        r.add(MetaField::saturation,         "saturation",         12, BinRule::linear, 0.0f, 1.0f);
        r.add(MetaField::entropy,            "entropy",            13, BinRule::linear, 0.0f, 8.0f);
        r.add(MetaField::colorfulness,       "colorfulness",       14, BinRule::count);
        r.add(MetaField::geometric_complexity, "geometric_complexity", 15, BinRule::linear, 0.0f, 1.0f);
        r.add(MetaField::occlusion_score,    "occlusion_score",    16, BinRule::linear, 0.0f, 1.0f);
        r.add(MetaField::orig_height,        "orig_height",        17, BinRule::count);
        r.add(MetaField::orig_width,         "orig_width",         18, BinRule::count);
        return r;
    }();
    return reg;
}

const MetaFieldInfo & MetadataTypeRegistry::info(MetaField f) const {
    for (const auto & fi : fields_) {
        if (fi.field == f) {
            return fi;
        }
    }
    throw CodecError(CodecError::Kind::unknown_field, "metadata field not registered");
}

const MetaFieldInfo * MetadataTypeRegistry::by_type_id(int type_id) const {
    if (type_id < 0 || type_id >= 1000 || type_to_index_[(size_t) type_id] < 0) {
        return nullptr;
    }
    return &fields_[(size_t) type_to_index_[(size_t) type_id]];
}

int MetadataTypeRegistry::bin_value(MetaField f, float v) const {
    const MetaFieldInfo & fi = info(f);
    int bin;
    if (fi.rule == BinRule::count) {
        bin = (int) std::lround((double) v);
    } else {
        bin = (int) std::floor(((double) v - fi.lo) / ((double) fi.hi - fi.lo) * 1000.0);
    }
    return bin < 0 ? 0 : (bin > 999 ? 999 : bin);
}

float MetadataTypeRegistry::unbin_value(MetaField f, int bin) const {
    const MetaFieldInfo & fi = info(f);
    if (fi.rule == BinRule::count) {
        return (float) bin;
    }
    return fi.lo + ((float) bin + 0.5f) / 1000.0f * (fi.hi - fi.lo);
}

float MetadataTypeRegistry::get(const MetadataRecord & r, MetaField f) {
    switch (f) {
        case MetaField::sam_clutter:        return (float) r.sam_clutter;
        case MetaField::coco_clutter:       return (float) r.coco_clutter;
        case MetaField::instance_diversity: return (float) r.instance_diversity;
        case MetaField::objectness:         return r.objectness;
        case MetaField::walkability:        return r.walkability;
        case MetaField::crowdedness:        return (float) r.crowdedness;
        case MetaField::semantic_diversity: return (float) r.semantic_diversity;
        case MetaField::caption_chars:      return (float) r.caption_chars;
        case MetaField::caption_words:      return (float) r.caption_words;
        case MetaField::caption_sentences:  return (float) r.caption_sentences;
        case MetaField::brightness:         return r.brightness;
        case MetaField::contrast:           return r.contrast;
        case MetaField::saturation:         return r.saturation;
        case MetaField::entropy:            return r.entropy;
        case MetaField::colorfulness:       return r.colorfulness;
        case MetaField::geometric_complexity: return r.geometric_complexity;
        case MetaField::occlusion_score:    return r.occlusion_score;
        case MetaField::orig_height:        return (float) r.orig_height;
        case MetaField::orig_width:         return (float) r.orig_width;
        default: throw CodecError(CodecError::Kind::unknown_field, "bad metadata field");
    }
}

void MetadataTypeRegistry::set(MetadataRecord & r, MetaField f, float v) {
    switch (f) {
        case MetaField::sam_clutter:        r.sam_clutter = (int) std::lround(v); break;
        case MetaField::coco_clutter:       r.coco_clutter = (int) std::lround(v); break;
        case MetaField::instance_diversity: r.instance_diversity = (int) std::lround(v); break;
        case MetaField::objectness:         r.objectness = v; break;
        case MetaField::walkability:        r.walkability = v; break;
        case MetaField::crowdedness:        r.crowdedness = (int) std::lround(v); break;
        case MetaField::semantic_diversity: r.semantic_diversity = (int) std::lround(v); break;
        case MetaField::caption_chars:      r.caption_chars = (int) std::lround(v); break;
        case MetaField::caption_words:      r.caption_words = (int) std::lround(v); break;
        case MetaField::caption_sentences:  r.caption_sentences = (int) std::lround(v); break;
        case MetaField::brightness:         r.brightness = v; break;
        case MetaField::contrast:           r.contrast = v; break;
        case MetaField::saturation:         r.saturation = v; break;
        case MetaField::entropy:            r.entropy = v; break;
        case MetaField::colorfulness:       r.colorfulness = v; break;
        case MetaField::geometric_complexity: r.geometric_complexity = v; break;
        case MetaField::occlusion_score:    r.occlusion_score = v; break;
        case MetaField::orig_height:        r.orig_height = (int) std::lround(v); break;
        case MetaField::orig_width:         r.orig_width = (int) std::lround(v); break;
        default: throw CodecError(CodecError::Kind::unknown_field, "bad metadata field");
    }
}

std::vector<MetaField> MetadataTypeRegistry::all_fields() const {
    std::vector<MetaField> v;
    for (const auto & fi : fields_) {
        v.push_back(fi.field);
    }
    return v;
}

void MetadataTypeRegistry::save(const std::string & path) const {
    std::ostringstream os;
    os << "anymodal-metadata-types v1 " << fields_.size() << "\n";
    for (const auto & fi : fields_) {
        os << fi.name << " " << fi.type_id << " " << (fi.rule == BinRule::count ? "count" : "linear") << " "
           << fi.lo << " " << fi.hi << "\n";
    }
    write_file_atomic(path, os.str());
}

MetadataTypeRegistry MetadataTypeRegistry::load(const std::string & path) {
    std::istringstream is(read_text_file(path));
    std::string        tag, ver;
    size_t             n = 0;
    if (!(is >> tag >> ver >> n) || tag != "anymodal-metadata-types" || ver != "v1") {
        throw ArtifactError("bad metadata type table header in " + path);
    }
    const MetadataTypeRegistry & ref = frozen();
    MetadataTypeRegistry         reg;
    for (size_t i = 0; i < n; ++i) {
        std::string name, rule;
        int         type_id;
        float       lo, hi;
        if (!(is >> name >> type_id >> rule >> lo >> hi)) {
            throw ArtifactError("truncated metadata type table: " + path);
        }
        const MetaFieldInfo * match = nullptr;
        for (const auto & fi : ref.fields_) {
            if (fi.name == name) {
                match = &fi;
            }
        }
        if (!match) {
            throw ArtifactError("unknown metadata field '" + name + "' in " + path);
        }
        reg.add(match->field, name.c_str(), type_id, rule == "count" ? BinRule::count : BinRule::linear, lo, hi);
    }
    return reg;
}

// ---------------------------------------------------------------------------
// Box codec
// ---------------------------------------------------------------------------

TokenSequence encode_bbox_set(const std::vector<BBox> & boxes, const Vocabulary & vocab) {
    TokenSequence seq;
    seq.modality = Modality::bbox;
    for (const auto & b : boxes) {
        if (b.xmin < 0.0f || b.ymin < 0.0f || b.xmax > 1.0f || b.ymax > 1.0f || b.xmin >= b.xmax ||
            b.ymin >= b.ymax) {
            throw InvalidInput("bbox coordinates out of range or inverted");
        }
        seq.ids.push_back(vocab.special_value_id(0, coord_bin(b.xmin)));
        seq.ids.push_back(vocab.special_value_id(1, coord_bin(b.ymin)));
        seq.ids.push_back(vocab.special_value_id(2, coord_bin(b.xmax)));
        seq.ids.push_back(vocab.special_value_id(3, coord_bin(b.ymax)));
        seq.ids.push_back(vocab.class_token_id(b.class_id));
    }
    return seq;
}

std::vector<BBox> decode_bbox_set(const TokenSequence & seq, const Vocabulary & vocab) {
    std::vector<BBox> boxes;
    size_t i = 0;
    while (i < seq.ids.size()) {
        if (seq.ids[i] == vocab.eos_id()) {
            break;
        }
        if (i + 5 > seq.ids.size()) {
            throw CodecError(CodecError::Kind::malformed, "truncated bbox group at token " + std::to_string(i));
        }
        BBox b;
        float * coords[4] = {&b.xmin, &b.ymin, &b.xmax, &b.ymax};
        for (int g = 0; g < 4; ++g) {
            const int id = seq.ids[i + (size_t) g];
            if (!vocab.is_special_value(id) || vocab.special_group(id) != g) {
                throw CodecError(CodecError::Kind::malformed,
                                 "bbox group expects v" + std::to_string(g) + " at token " + std::to_string(i + g));
            }
            *coords[g] = coord_unbin(vocab.special_value(id));
        }
        const int cls_id = seq.ids[i + 4];
        if (!vocab.is_class_token(cls_id)) {
            throw CodecError(CodecError::Kind::malformed, "bbox group expects a class token");
        }
        b.class_id = vocab.class_of_token(cls_id);
        boxes.push_back(b);
        i += 5;
    }
    return boxes;
}

// ---------------------------------------------------------------------------
// Metadata codec
// ---------------------------------------------------------------------------

TokenSequence encode_metadata_ordered(const MetadataRecord & record, const std::vector<MetaField> & fields,
                                      const Vocabulary & vocab, const MetadataTypeRegistry & reg) {
    TokenSequence seq;
    seq.modality = Modality::metadata;
    for (MetaField f : fields) {
        const MetaFieldInfo & fi = reg.info(f); // throws on unregistered field
        const int bin = reg.bin_value(f, MetadataTypeRegistry::get(record, f));
        seq.ids.push_back(vocab.special_value_id(1, fi.type_id));
        seq.ids.push_back(vocab.special_value_id(0, bin));
    }
    return seq;
}

TokenSequence encode_metadata(const MetadataRecord & record, const std::vector<MetaField> & fields,
                              uint64_t order_seed, const Vocabulary & vocab, const MetadataTypeRegistry & reg) {
    std::vector<MetaField> order = fields;
    Rng rng(order_seed);
    rng.shuffle(order);
    return encode_metadata_ordered(record, order, vocab, reg);
}

std::vector<MetadataEntry> decode_metadata(const TokenSequence & seq, const Vocabulary & vocab,
                                           const MetadataTypeRegistry & reg) {
    std::vector<MetadataEntry> entries;
    size_t i = 0;
    while (i < seq.ids.size()) {
        if (seq.ids[i] == vocab.eos_id()) {
            break;
        }
        const int tid = seq.ids[i];
        if (!vocab.is_special_value(tid) || vocab.special_group(tid) != 1) {
            throw CodecError(CodecError::Kind::malformed,
                             "metadata chunk must start with a v1 type token (token " + std::to_string(i) + ")");
        }
        if (i + 1 >= seq.ids.size()) {
            throw CodecError(CodecError::Kind::malformed, "metadata type token without a v0 value");
        }
        const int vid = seq.ids[i + 1];
        if (!vocab.is_special_value(vid) || vocab.special_group(vid) != 0) {
            throw CodecError(CodecError::Kind::malformed, "metadata value must be a v0 token");
        }
        const MetaFieldInfo * fi = reg.by_type_id(vocab.special_value(tid));
        if (!fi) {
            throw CodecError(CodecError::Kind::unknown_field,
                             "unknown metadata type id " + std::to_string(vocab.special_value(tid)));
        }
        MetadataEntry e;
        e.field = fi->field;
        e.bin   = vocab.special_value(vid);
        e.value = reg.unbin_value(fi->field, e.bin);
        entries.push_back(e);
        i += 2;
    }
    return entries;
}

void apply_metadata(const std::vector<MetadataEntry> & entries, MetadataRecord & out) {
    for (const auto & e : entries) {
        MetadataTypeRegistry::set(out, e.field, e.value);
    }
}

// ---------------------------------------------------------------------------
// Palette codec
// ---------------------------------------------------------------------------

TokenSequence encode_palette(const PaletteColors & palette, const Vocabulary & vocab) {
    const int c = (int) palette.colors.size();
    if (c < 1 || c > 7) {
        throw InvalidInput("palette must have 1..7 colors");
    }
    TokenSequence seq;
    seq.modality = Modality::palette;
    seq.ids.push_back(vocab.identifier_id(Identifier::color));
    seq.ids.push_back(vocab.special_value_id(0, c));
    for (const auto & col : palette.colors) {
        seq.ids.push_back(vocab.special_value_id(1, col[0]));
        seq.ids.push_back(vocab.special_value_id(2, col[1]));
        seq.ids.push_back(vocab.special_value_id(3, col[2]));
    }
    return seq;
}

PaletteColors decode_palette(const TokenSequence & seq, const Vocabulary & vocab) {
    const auto & ids = seq.ids;
    if (ids.size() < 2 || ids[0] != vocab.identifier_id(Identifier::color)) {
        throw CodecError(CodecError::Kind::malformed, "palette must start with the color identifier");
    }
    if (!vocab.is_special_value(ids[1]) || vocab.special_group(ids[1]) != 0) {
        throw CodecError(CodecError::Kind::malformed, "palette count must be a v0 token");
    }
    const int c = vocab.special_value(ids[1]);
    if (c < 1 || c > 7) {
        throw CodecError(CodecError::Kind::out_of_range, "palette count " + std::to_string(c) + " out of range");
    }
    if (ids.size() != 2 + 3 * (size_t) c) {
        throw CodecError(CodecError::Kind::malformed, "palette length does not match its count token");
    }
    PaletteColors pal;
    for (int k = 0; k < c; ++k) {
        std::array<uint8_t, 3> col{};
        for (int ch = 0; ch < 3; ++ch) {
            const int id = ids[2 + (size_t) (3 * k + ch)];
            if (!vocab.is_special_value(id) || vocab.special_group(id) != ch + 1) {
                throw CodecError(CodecError::Kind::malformed, "palette channel must be a v" +
                                                                  std::to_string(ch + 1) + " token");
            }
            const int v = vocab.special_value(id);
            if (v > 255) {
                throw CodecError(CodecError::Kind::out_of_range, "palette channel value > 255");
            }
            col[(size_t) ch] = (uint8_t) v;
        }
        pal.colors.push_back(col);
    }
    return pal;
}

// ---------------------------------------------------------------------------
// Pose codec
// ---------------------------------------------------------------------------

static constexpr int kPoseTokens = 8;

TokenSequence encode_pose_sequence(const std::vector<PoseRecord> & poses,
                                   const std::vector<std::vector<int>> & pose_vq_ids, uint64_t shuffle_seed,
                                   const Vocabulary & vocab) {
    TokenSequence seq;
    seq.modality = Modality::pose;
    if (poses.empty()) {
        seq.ids.push_back(vocab.identifier_id(Identifier::none));
        return seq;
    }
    if (pose_vq_ids.size() != poses.size()) {
        throw InvalidInput("pose VQ id count does not match pose count");
    }
    Rng rng(shuffle_seed);
    for (size_t h = 0; h < poses.size(); ++h) {
        const PoseRecord & p = poses[h];
        if (pose_vq_ids[h].size() != kPoseTokens) {
            throw InvalidInput("each pose must carry exactly 8 VQ ids");
        }
        std::vector<int> group_order = {0, 1, 2};
        rng.shuffle(group_order);
        for (int g : group_order) {
            if (g == 0) {
                seq.ids.push_back(vocab.identifier_id(Identifier::bbox));
                seq.ids.push_back(vocab.special_value_id(0, coord_bin(p.bbox[0])));
                seq.ids.push_back(vocab.special_value_id(1, coord_bin(p.bbox[1])));
                seq.ids.push_back(vocab.special_value_id(2, coord_bin(p.bbox[2])));
                seq.ids.push_back(vocab.special_value_id(3, coord_bin(p.bbox[3])));
            } else if (g == 1) {
                seq.ids.push_back(vocab.identifier_id(Identifier::pose));
                for (int id : pose_vq_ids[h]) {
                    seq.ids.push_back(vocab.pose_vq_id(id));
                }
            } else {
                seq.ids.push_back(vocab.identifier_id(Identifier::shape));
                seq.ids.push_back(vocab.special_value_id(0, coord_bin(p.shape_scalar)));
            }
        }
    }
    return seq;
}

std::vector<DecodedPose> decode_pose_sequence(const TokenSequence & seq, const Vocabulary & vocab) {
    const auto & ids = seq.ids;
    std::vector<DecodedPose> poses;
    if (!ids.empty() && ids[0] == vocab.identifier_id(Identifier::none)) {
        if (ids.size() > 1 && ids[1] != vocab.eos_id()) {
            throw CodecError(CodecError::Kind::malformed, "tokens after the none pose token");
        }
        return poses;
    }

    size_t i = 0;
    while (i < ids.size() && ids[i] != vocab.eos_id()) {
        DecodedPose pose;
        bool have_bbox = false, have_pose = false, have_shape = false;
        // one human = three identifier-led groups in any order
        while (!(have_bbox && have_pose && have_shape)) {
            if (i >= ids.size()) {
                throw CodecError(CodecError::Kind::malformed, "pose sequence truncated mid-human");
            }
            const int head = ids[i];
            if (head == vocab.identifier_id(Identifier::bbox)) {
                if (have_bbox) {
                    throw CodecError(CodecError::Kind::malformed, "duplicate bbox group within a human");
                }
                if (i + 5 > ids.size()) {
                    throw CodecError(CodecError::Kind::malformed, "truncated pose bbox group");
                }
                for (int g = 0; g < 4; ++g) {
                    const int id = ids[i + 1 + (size_t) g];
                    if (!vocab.is_special_value(id) || vocab.special_group(id) != g) {
                        throw CodecError(CodecError::Kind::malformed, "pose bbox expects v" + std::to_string(g));
                    }
                    pose.bbox[(size_t) g] = coord_unbin(vocab.special_value(id));
                }
                have_bbox = true;
                i += 5;
            } else if (head == vocab.identifier_id(Identifier::pose)) {
                if (have_pose) {
                    throw CodecError(CodecError::Kind::malformed, "duplicate pose group within a human");
                }
                if (i + 1 + kPoseTokens > ids.size()) {
                    throw CodecError(CodecError::Kind::malformed, "truncated pose VQ group");
                }
                for (int t = 0; t < kPoseTokens; ++t) {
                    const int id = ids[i + 1 + (size_t) t];
                    if (!vocab.is_pose_vq(id)) {
                        throw CodecError(CodecError::Kind::bad_token, "pose group expects pose-VQ ids");
                    }
                    pose.vq_ids.push_back(vocab.pose_vq_value(id));
                }
                have_pose = true;
                i += 1 + kPoseTokens;
            } else if (head == vocab.identifier_id(Identifier::shape)) {
                if (have_shape) {
                    throw CodecError(CodecError::Kind::malformed, "duplicate shape group within a human");
                }
                if (i + 2 > ids.size()) {
                    throw CodecError(CodecError::Kind::malformed, "truncated shape group");
                }
                const int id = ids[i + 1];
                if (!vocab.is_special_value(id) || vocab.special_group(id) != 0) {
                    throw CodecError(CodecError::Kind::malformed, "shape group expects a v0 token");
                }
                pose.shape_scalar = coord_unbin(vocab.special_value(id));
                have_shape = true;
                i += 2;
            } else {
                throw CodecError(CodecError::Kind::malformed,
                                 "unexpected token in pose sequence at " + std::to_string(i));
            }
        }
        poses.push_back(std::move(pose));
    }
    return poses;
}

// ---------------------------------------------------------------------------
// Instance codec
// ---------------------------------------------------------------------------

static constexpr int kMaskTokens = 16;

TokenSequence encode_instance(const BBox & bbox, const std::vector<int> & mask_vq_ids, const Vocabulary & vocab) {
    if (mask_vq_ids.size() != kMaskTokens) {
        throw InvalidInput("instance must carry exactly 16 mask-VQ ids, got " + std::to_string(mask_vq_ids.size()));
    }
    if (bbox.xmin < 0.0f || bbox.ymin < 0.0f || bbox.xmax > 1.0f || bbox.ymax > 1.0f || bbox.xmin >= bbox.xmax ||
        bbox.ymin >= bbox.ymax) {
        throw InvalidInput("instance bbox out of range or inverted");
    }
    TokenSequence seq;
    seq.modality = Modality::instance;
    seq.ids.push_back(vocab.identifier_id(Identifier::polygon));
    seq.ids.push_back(vocab.special_value_id(0, coord_bin(bbox.xmin)));
    seq.ids.push_back(vocab.special_value_id(1, coord_bin(bbox.ymin)));
    seq.ids.push_back(vocab.special_value_id(2, coord_bin(bbox.xmax)));
    seq.ids.push_back(vocab.special_value_id(3, coord_bin(bbox.ymax)));
    for (int id : mask_vq_ids) {
        seq.ids.push_back(vocab.mask_vq_id(id));
    }
    return seq;
}

TokenSequence encode_instance_set(const std::vector<BBox> & boxes,
                                  const std::vector<std::vector<int>> & mask_vq_ids, const Vocabulary & vocab) {
    if (boxes.size() != mask_vq_ids.size()) {
        throw InvalidInput("instance box/VQ count mismatch");
    }
    TokenSequence seq;
    seq.modality = Modality::instance;
    for (size_t i = 0; i < boxes.size(); ++i) {
        const TokenSequence one = encode_instance(boxes[i], mask_vq_ids[i], vocab);
        seq.ids.insert(seq.ids.end(), one.ids.begin(), one.ids.end());
    }
    return seq;
}

std::vector<DecodedInstance> decode_instance_set(const TokenSequence & seq, const Vocabulary & vocab) {
    const auto & ids = seq.ids;
    std::vector<DecodedInstance> out;
    size_t i = 0;
    while (i < ids.size() && ids[i] != vocab.eos_id()) {
        if (ids[i] != vocab.identifier_id(Identifier::polygon)) {
            throw CodecError(CodecError::Kind::malformed, "instance group must start with the polygon identifier");
        }
        if (i + 1 + 4 + kMaskTokens > ids.size()) {
            throw CodecError(CodecError::Kind::malformed, "truncated instance group");
        }
        DecodedInstance inst;
        for (int g = 0; g < 4; ++g) {
            const int id = ids[i + 1 + (size_t) g];
            if (!vocab.is_special_value(id) || vocab.special_group(id) != g) {
                throw CodecError(CodecError::Kind::malformed, "instance bbox expects v" + std::to_string(g));
            }
            inst.bbox[(size_t) g] = coord_unbin(vocab.special_value(id));
        }
        for (int t = 0; t < kMaskTokens; ++t) {
            const int id = ids[i + 5 + (size_t) t];
            if (!vocab.is_mask_vq(id)) {
                throw CodecError(CodecError::Kind::bad_token, "instance group expects mask-VQ ids");
            }
            inst.vq_ids.push_back(vocab.mask_vq_value(id));
        }
        out.push_back(std::move(inst));
        i += 5 + kMaskTokens;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Caption codec
// ---------------------------------------------------------------------------

TokenSequence encode_caption(const std::string & text, const Vocabulary & vocab, int max_len, bool * truncated) {
    TokenSequence seq;
    seq.modality = Modality::caption;
    seq.ids      = vocab.encode_text(text);
    seq.ids.push_back(vocab.eos_id());
    bool trunc = false;
    if ((int) seq.ids.size() > max_len) {
        seq.ids.resize((size_t) max_len);
        seq.ids.back() = vocab.eos_id();
        trunc          = true;
    }
    if (truncated) {
        *truncated = trunc;
    }
    return seq;
}

std::string decode_caption(const TokenSequence & seq, const Vocabulary & vocab) {
    return vocab.decode_text(seq.ids);
}

} // namespace anymodal
