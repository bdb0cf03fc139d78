#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "anymodal/synth.hpp"

namespace anymodal {

// Dataset shard: <name>.manifest (one text record per line: id, seed, byte
// offset, byte length) plus <name>.blob with the little-endian payload
// records. The manifest header carries the shard's modality coverage.

struct ShardManifestEntry {
    uint64_t id     = 0;
    uint64_t seed   = 0;
    uint64_t offset = 0;
    uint64_t length = 0;
};

class ShardWriter {
  public:
    ShardWriter(const std::string & dir, const std::string & name, ModalitySet coverage);

    void   append(const MultimodalSample & sample);
    size_t count() const { return entries_.size(); }
    void   finish(); // writes the manifest; writer unusable afterwards

  private:
    std::string dir_, name_;
    ModalitySet coverage_;
    std::string blob_path_;
    std::vector<ShardManifestEntry> entries_;
    uint64_t cursor_ = 0;
    bool finished_ = false;
};

class ShardReader {
  public:
    ShardReader(const std::string & dir, const std::string & name);

    size_t      size() const { return entries_.size(); }
    ModalitySet coverage() const { return coverage_; }
    const std::vector<ShardManifestEntry> & entries() const { return entries_; }

    MultimodalSample load(size_t index) const;

  private:
    std::string blob_path_;
    ModalitySet coverage_;
    std::vector<ShardManifestEntry> entries_;
};

// Payload record codec, exposed for round-trip tests.
std::string serialize_payload(const MultimodalSample & sample);
MultimodalSample deserialize_payload(const std::string & bytes);

} // namespace anymodal
