#include "anymodal/checkpoint.hpp"

#include "anymodal/binio.hpp"

namespace anymodal {

void SectionFile::add(const std::string & name, const Tensor & t) {
    Section s;
    s.name  = name;
    s.shape = t.shape;
    s.data  = t.data;
    sections.push_back(std::move(s));
}

void SectionFile::add_raw(const std::string & name, const std::vector<double> & v) {
    Section s;
    s.name  = name;
    s.shape = {(int) v.size()};
    s.data  = v;
    sections.push_back(std::move(s));
}

const Section & SectionFile::find(const std::string & name) const {
    const Section * s = try_find(name);
    if (!s) {
        throw ArtifactError("missing section '" + name + "'");
    }
    return *s;
}

const Section * SectionFile::try_find(const std::string & name) const {
    for (const auto & s : sections) {
        if (s.name == name) {
            return &s;
        }
    }
    return nullptr;
}

void SectionFile::save(const std::string & path, const char magic[5], uint32_t version) const {
    BinWriter w(path + ".tmp");
    w.magic(magic);
    w.u32(version);
    w.str(config);
    w.u32((uint32_t) sections.size());
    for (const auto & s : sections) {
        w.str(s.name);
        w.u32((uint32_t) s.shape.size());
        for (int d : s.shape) {
            w.u32((uint32_t) d);
        }
        w.u64(s.data.size());
        for (double v : s.data) {
            w.f32((float) v);
        }
    }
    w.close();
    if (std::rename((path + ".tmp").c_str(), path.c_str()) != 0) {
        throw ArtifactError("cannot move checkpoint into place: " + path);
    }
}

SectionFile SectionFile::load(const std::string & path, const char magic[5], uint32_t expect_version) {
    BinReader r(path);
    r.expect_magic(magic);
    const uint32_t version = r.u32();
    if (version != expect_version) {
        throw ArtifactError("unsupported container version " + std::to_string(version) + " in " + path);
    }
    SectionFile f;
    f.config = r.str();
    const uint32_t n = r.u32();
    for (uint32_t i = 0; i < n; ++i) {
        Section s;
        s.name = r.str();
        const uint32_t nd = r.u32();
        for (uint32_t d = 0; d < nd; ++d) {
            s.shape.push_back((int) r.u32());
        }
        const uint64_t count = r.u64();
        s.data.resize(count);
        const std::vector<float> raw = r.f32s(count);
        for (uint64_t j = 0; j < count; ++j) {
            s.data[j] = raw[j];
        }
        f.sections.push_back(std::move(s));
    }
    return f;
}

static constexpr uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::string & path, const std::string & config_json,
                     const std::vector<Parameter *> & params, const AdamW * opt) {
    SectionFile f;
    f.config = config_json;
    for (const Parameter * p : params) {
        f.add("param/" + p->name, p->value);
    }
    if (opt) {
        for (size_t i = 0; i < opt->params().size(); ++i) {
            const std::string base = "opt/" + opt->params()[i]->name;
            f.add_raw(base + "/m", opt->slots()[i].m);
            f.add_raw(base + "/v", opt->slots()[i].v);
        }
        f.add_raw("opt/meta", {(double) opt->step_count(), (double) opt->tokens_seen()});
    }
    f.save(path, "4MCK", kCheckpointVersion);
}

LoadedCheckpoint load_checkpoint(const std::string & path) {
    LoadedCheckpoint c;
    c.file = SectionFile::load(path, "4MCK", kCheckpointVersion);
    return c;
}

void LoadedCheckpoint::restore_params(const std::vector<Parameter *> & params) const {
    for (Parameter * p : params) {
        const Section & s = file.find("param/" + p->name);
        if (s.shape != p->value.shape) {
            throw ArtifactError("checkpoint shape mismatch for " + p->name);
        }
        p->value.data = s.data;
        p->zero_grad();
    }
}

bool LoadedCheckpoint::restore_optimizer(AdamW & opt) const {
    const Section * meta = file.try_find("opt/meta");
    if (!meta) {
        return false;
    }
    std::vector<AdamW::Slot> slots;
    for (const Parameter * p : opt.params()) {
        AdamW::Slot slot;
        slot.m = file.find("opt/" + p->name + "/m").data;
        slot.v = file.find("opt/" + p->name + "/v").data;
        slots.push_back(std::move(slot));
    }
    opt.restore(slots, (uint64_t) meta->data[0], (uint64_t) meta->data[1]);
    return true;
}

} // namespace anymodal
