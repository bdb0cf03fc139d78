#include "anymodal/shards.hpp"

#include <cstring>
#include <filesystem>
#include <sstream>

#include "anymodal/binio.hpp"
#include "anymodal/errors.hpp"

namespace anymodal {

// record format versions; bump when the byte layout changes
static constexpr uint32_t kPayloadVersion = 1;

namespace {

struct StringSink {
    std::string bytes;

    void raw(const void * p, size_t n) { bytes.append((const char *) p, n); }
    void u8(uint8_t v) { raw(&v, 1); }
    void u32(uint32_t v) { raw(&v, 4); }
    void u64(uint64_t v) { raw(&v, 8); }
    void i32(int32_t v) { raw(&v, 4); }
    void f32(float v) { raw(&v, 4); }
    void str(const std::string & s) {
        u32((uint32_t) s.size());
        raw(s.data(), s.size());
    }
    void grid_u8(const GridU8 & g) {
        u32((uint32_t) g.height);
        u32((uint32_t) g.width);
        u32((uint32_t) g.channels);
        raw(g.data.data(), g.data.size());
    }
    void grid_f32(const GridF32 & g) {
        u32((uint32_t) g.height);
        u32((uint32_t) g.width);
        u32((uint32_t) g.channels);
        raw(g.data.data(), g.data.size() * 4);
    }
    void grid_i32(const GridI32 & g) {
        u32((uint32_t) g.height);
        u32((uint32_t) g.width);
        u32((uint32_t) g.channels);
        raw(g.data.data(), g.data.size() * 4);
    }
    // binary masks packed 8 pixels per byte
    void packed_mask(const GridU8 & g) {
        u32((uint32_t) g.height);
        u32((uint32_t) g.width);
        std::vector<uint8_t> packed((g.size() + 7) / 8, 0);
        for (size_t i = 0; i < g.size(); ++i) {
            if (g.data[i]) {
                packed[i / 8] |= (uint8_t) (1u << (i % 8));
            }
        }
        raw(packed.data(), packed.size());
    }
};

struct StringSource {
    const std::string & bytes;
    size_t pos = 0;

    explicit StringSource(const std::string & b) : bytes(b) {}

    void raw(void * p, size_t n) {
        if (pos + n > bytes.size()) {
            throw ArtifactError("truncated payload record");
        }
        std::memcpy(p, bytes.data() + pos, n);
        pos += n;
    }
    uint8_t u8() {
        uint8_t v;
        raw(&v, 1);
        return v;
    }
    uint32_t u32() {
        uint32_t v;
        raw(&v, 4);
        return v;
    }
    uint64_t u64() {
        uint64_t v;
        raw(&v, 8);
        return v;
    }
    int32_t i32() {
        int32_t v;
        raw(&v, 4);
        return v;
    }
    float f32() {
        float v;
        raw(&v, 4);
        return v;
    }
    std::string str() {
        const uint32_t n = u32();
        std::string    s(n, '\0');
        raw(s.data(), n);
        return s;
    }
};

GridU8 read_grid_u8(StringSource & src) {
    const int h = (int) src.u32();
    const int w = (int) src.u32();
    const int c = (int) src.u32();
    GridU8    g(h, w, c);
    src.raw(g.data.data(), g.data.size());
    return g;
}
GridF32 read_grid_f32(StringSource & src) {
    const int h = (int) src.u32();
    const int w = (int) src.u32();
    const int c = (int) src.u32();
    GridF32   g(h, w, c);
    src.raw(g.data.data(), g.data.size() * 4);
    return g;
}
GridI32 read_grid_i32(StringSource & src) {
    const int h = (int) src.u32();
    const int w = (int) src.u32();
    const int c = (int) src.u32();
    GridI32   g(h, w, c);
    src.raw(g.data.data(), g.data.size() * 4);
    return g;
}
GridU8 read_packed_mask(StringSource & src) {
    const int h = (int) src.u32();
    const int w = (int) src.u32();
    GridU8    g(h, w, 1);
    std::vector<uint8_t> packed((g.size() + 7) / 8);
    src.raw(packed.data(), packed.size());
    for (size_t i = 0; i < g.size(); ++i) {
        g.data[i] = (packed[i / 8] >> (i % 8)) & 1u;
    }
    return g;
}

void write_metadata(StringSink & s, const MetadataRecord & m) {
    s.i32(m.crowdedness);
    s.i32(m.sam_clutter);
    s.i32(m.coco_clutter);
    s.i32(m.instance_diversity);
    s.f32(m.objectness);
    s.f32(m.walkability);
    s.i32(m.semantic_diversity);
    s.i32(m.caption_chars);
    s.i32(m.caption_words);
    s.i32(m.caption_sentences);
    s.f32(m.geometric_complexity);
    s.f32(m.occlusion_score);
    s.i32(m.orig_height);
    s.i32(m.orig_width);
    s.f32(m.brightness);
    s.f32(m.contrast);
    s.f32(m.saturation);
    s.f32(m.entropy);
    s.f32(m.colorfulness);
}

MetadataRecord read_metadata(StringSource & s) {
    MetadataRecord m;
    m.crowdedness        = s.i32();
    m.sam_clutter        = s.i32();
    m.coco_clutter       = s.i32();
    m.instance_diversity = s.i32();
    m.objectness         = s.f32();
    m.walkability        = s.f32();
    m.semantic_diversity = s.i32();
    m.caption_chars      = s.i32();
    m.caption_words      = s.i32();
    m.caption_sentences  = s.i32();
    m.geometric_complexity = s.f32();
    m.occlusion_score      = s.f32();
    m.orig_height = s.i32();
    m.orig_width  = s.i32();
    m.brightness   = s.f32();
    m.contrast     = s.f32();
    m.saturation   = s.f32();
    m.entropy      = s.f32();
    m.colorfulness = s.f32();
    return m;
}

} // namespace

std::string serialize_payload(const MultimodalSample & sample) {
    const PayloadSet & p = sample.payload;
    const ModalitySet  cov = sample.coverage;
    StringSink s;
    s.u32(kPayloadVersion);
    s.u64(sample.id);
    s.u64(sample.scene.seed);
    s.u32(cov.bits);

    if (cov.has(Modality::rgb)) {
        s.grid_u8(p.rgb);
    }
    if (cov.has(Modality::depth)) {
        s.grid_f32(p.depth);
    }
    if (cov.has(Modality::normals)) {
        s.grid_f32(p.normals);
    }
    if (cov.has(Modality::semantic)) {
        s.grid_i32(p.semantic);
    }
    if (cov.has(Modality::instance)) {
        s.u32((uint32_t) p.instances.size());
        for (const auto & inst : p.instances) {
            s.i32(inst.class_id);
            s.packed_mask(inst.mask);
        }
    }
    if (cov.has(Modality::bbox)) {
        s.u32((uint32_t) p.bboxes.size());
        for (const auto & b : p.bboxes) {
            s.f32(b.xmin);
            s.f32(b.ymin);
            s.f32(b.xmax);
            s.f32(b.ymax);
            s.i32(b.class_id);
        }
    }
    if (cov.has(Modality::edges_rgb)) {
        s.packed_mask(p.edges_rgb);
    }
    if (cov.has(Modality::edges_inst)) {
        s.packed_mask(p.edges_inst);
    }
    if (cov.has(Modality::caption)) {
        s.str(p.caption);
    }
    if (cov.has(Modality::palette)) {
        for (const auto & pal : p.palettes) {
            s.u8((uint8_t) pal.colors.size());
            for (const auto & c : pal.colors) {
                s.u8(c[0]);
                s.u8(c[1]);
                s.u8(c[2]);
            }
        }
    }
    if (cov.has(Modality::metadata)) {
        write_metadata(s, p.metadata);
    }
    if (cov.has(Modality::global_emb)) {
        s.u32((uint32_t) p.global_emb.size());
        s.raw(p.global_emb.data(), p.global_emb.size() * 4);
    }
    if (cov.has(Modality::dense_feat)) {
        s.grid_f32(p.dense_feat);
    }
    if (cov.has(Modality::pose)) {
        s.u32((uint32_t) p.poses.size());
        for (const auto & pose : p.poses) {
            s.raw(pose.bbox.data(), 16);
            s.raw(pose.keypoints.data(), 80);
            s.f32(pose.shape_scalar);
        }
    }
    return std::move(s.bytes);
}

MultimodalSample deserialize_payload(const std::string & bytes) {
    StringSource src(bytes);
    const uint32_t version = src.u32();
    if (version != kPayloadVersion) {
        throw ArtifactError("unsupported payload record version " + std::to_string(version));
    }
    MultimodalSample sample;
    sample.id         = src.u64();
    sample.scene.seed = src.u64();
    sample.coverage.bits = src.u32();
    const ModalitySet cov = sample.coverage;
    PayloadSet & p = sample.payload;

    if (cov.has(Modality::rgb)) {
        p.rgb = read_grid_u8(src);
    }
    if (cov.has(Modality::depth)) {
        p.depth = read_grid_f32(src);
    }
    if (cov.has(Modality::normals)) {
        p.normals = read_grid_f32(src);
    }
    if (cov.has(Modality::semantic)) {
        p.semantic = read_grid_i32(src);
    }
    if (cov.has(Modality::instance)) {
        const uint32_t n = src.u32();
        for (uint32_t i = 0; i < n; ++i) {
            InstanceMask inst;
            inst.class_id = src.i32();
            inst.mask     = read_packed_mask(src);
            p.instances.push_back(std::move(inst));
        }
    }
    if (cov.has(Modality::bbox)) {
        const uint32_t n = src.u32();
        for (uint32_t i = 0; i < n; ++i) {
            BBox b;
            b.xmin = src.f32();
            b.ymin = src.f32();
            b.xmax = src.f32();
            b.ymax = src.f32();
            b.class_id = src.i32();
            p.bboxes.push_back(b);
        }
    }
    if (cov.has(Modality::edges_rgb)) {
        p.edges_rgb = read_packed_mask(src);
    }
    if (cov.has(Modality::edges_inst)) {
        p.edges_inst = read_packed_mask(src);
    }
    if (cov.has(Modality::caption)) {
        p.caption = src.str();
    }
    if (cov.has(Modality::palette)) {
        for (auto & pal : p.palettes) {
            const int n = src.u8();
            pal.colors.resize((size_t) n);
            for (auto & c : pal.colors) {
                c[0] = src.u8();
                c[1] = src.u8();
                c[2] = src.u8();
            }
        }
    }
    if (cov.has(Modality::metadata)) {
        p.metadata = read_metadata(src);
    }
    if (cov.has(Modality::global_emb)) {
        const uint32_t n = src.u32();
        p.global_emb.resize(n);
        src.raw(p.global_emb.data(), (size_t) n * 4);
    }
    if (cov.has(Modality::dense_feat)) {
        p.dense_feat = read_grid_f32(src);
    }
    if (cov.has(Modality::pose)) {
        const uint32_t n = src.u32();
        for (uint32_t i = 0; i < n; ++i) {
            PoseRecord pose;
            src.raw(pose.bbox.data(), 16);
            src.raw(pose.keypoints.data(), 80);
            pose.shape_scalar = src.f32();
            p.poses.push_back(pose);
        }
    }
    return sample;
}

ShardWriter::ShardWriter(const std::string & dir, const std::string & name, ModalitySet coverage)
    : dir_(dir), name_(name), coverage_(coverage) {
    std::filesystem::create_directories(dir);
    blob_path_ = dir + "/" + name + ".blob";
    std::ofstream reset(blob_path_, std::ios::binary | std::ios::trunc);
    if (!reset) {
        throw ArtifactError("cannot create shard blob: " + blob_path_);
    }
}

void ShardWriter::append(const MultimodalSample & sample) {
    if (finished_) {
        throw ArtifactError("shard writer already finished");
    }
    MultimodalSample trimmed = sample;
    trimmed.coverage.bits &= coverage_.bits;
    const std::string record = serialize_payload(trimmed);

    std::ofstream out(blob_path_, std::ios::binary | std::ios::app);
    out.write(record.data(), (std::streamsize) record.size());
    if (!out) {
        throw ArtifactError("shard blob write failed: " + blob_path_);
    }
    entries_.push_back({sample.id, sample.scene.seed, cursor_, record.size()});
    cursor_ += record.size();
}

void ShardWriter::finish() {
    std::ostringstream os;
    os << "anymodal-shard v1 " << name_ << " " << entries_.size() << " ";
    bool first = true;
    for (Modality m : coverage_.list()) {
        os << (first ? "" : ",") << modality_name(m);
        first = false;
    }
    os << "\n";
    for (const auto & e : entries_) {
        os << e.id << " " << e.seed << " " << e.offset << " " << e.length << "\n";
    }
    write_file_atomic(dir_ + "/" + name_ + ".manifest", os.str());
    finished_ = true;
}

ShardReader::ShardReader(const std::string & dir, const std::string & name) {
    blob_path_ = dir + "/" + name + ".blob";
    std::istringstream is(read_text_file(dir + "/" + name + ".manifest"));
    std::string tag, ver, got_name, mods;
    size_t      n = 0;
    if (!(is >> tag >> ver >> got_name >> n >> mods) || tag != "anymodal-shard" || ver != "v1") {
        throw ArtifactError("bad shard manifest header: " + dir + "/" + name + ".manifest");
    }
    std::istringstream ms(mods);
    std::string        tok;
    while (std::getline(ms, tok, ',')) {
        const auto m = modality_from_name(tok);
        if (!m) {
            throw ArtifactError("unknown modality '" + tok + "' in shard manifest");
        }
        coverage_.add(*m);
    }
    for (size_t i = 0; i < n; ++i) {
        ShardManifestEntry e;
        if (!(is >> e.id >> e.seed >> e.offset >> e.length)) {
            throw ArtifactError("truncated shard manifest: " + name);
        }
        entries_.push_back(e);
    }
}

MultimodalSample ShardReader::load(size_t index) const {
    if (index >= entries_.size()) {
        throw ArtifactError("shard index out of range");
    }
    const auto & e = entries_[index];
    std::ifstream in(blob_path_, std::ios::binary);
    if (!in) {
        throw ArtifactError("cannot open shard blob: " + blob_path_);
    }
    in.seekg((std::streamoff) e.offset);
    std::string record((size_t) e.length, '\0');
    in.read(record.data(), (std::streamsize) e.length);
    if ((uint64_t) in.gcount() != e.length) {
        throw ArtifactError("truncated shard blob: " + blob_path_);
    }
    return deserialize_payload(record);
}

} // namespace anymodal
