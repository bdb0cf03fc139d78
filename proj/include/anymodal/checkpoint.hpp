#pragma once

#include <string>
#include <vector>

#include "anymodal/nn.hpp"
#include "anymodal/optim.hpp"

namespace anymodal {

// Named-section binary container. Sections carry a name, a shape and f32
// little-endian data; doubles are narrowed on write and widened on read.
// Model checkpoints use magic "4MCK", tokenizer bundles "VQTK".

struct Section {
    std::string         name;
    std::vector<int>    shape;
    std::vector<double> data;
};

class SectionFile {
  public:
    std::string              config; // free-form config blob (JSON)
    std::vector<Section>     sections;

    void add(const std::string & name, const Tensor & t);
    void add_raw(const std::string & name, const std::vector<double> & v);
    const Section & find(const std::string & name) const; // throws ArtifactError
    const Section * try_find(const std::string & name) const;

    void             save(const std::string & path, const char magic[5], uint32_t version) const;
    static SectionFile load(const std::string & path, const char magic[5], uint32_t expect_version);
};

// Model checkpoint = parameters + optimizer state + config, magic "4MCK".
void save_checkpoint(const std::string & path, const std::string & config_json,
                     const std::vector<Parameter *> & params, const AdamW * opt = nullptr);

struct LoadedCheckpoint {
    SectionFile file;

    std::string config_json() const { return file.config; }
    // copies data into params by name; throws on missing/shape mismatch
    void restore_params(const std::vector<Parameter *> & params) const;
    // restores optimizer state when present; returns false when absent
    bool restore_optimizer(AdamW & opt) const;
};

LoadedCheckpoint load_checkpoint(const std::string & path);

} // namespace anymodal
