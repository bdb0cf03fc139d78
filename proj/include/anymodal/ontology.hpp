#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace anymodal {

struct OntologyClass {
    int                    id = 0;
    std::string            name;
    std::array<uint8_t, 3> base_color{};
    bool                   walkable  = false;
    bool                   countable = false;
};

// Frozen 16-class synthetic semantic ontology. Classes 1-2 are walkable
// surfaces, 3-12 countable object classes (3 = person), 13-15 non-countable
// scenery. Shipped as a versioned text table next to dataset shards.
struct Ontology {
    std::vector<OntologyClass> classes;

    static const Ontology & synthetic();

    int  size() const { return (int) classes.size(); }
    bool valid_class(int id) const { return id >= 0 && id < size(); }

    const OntologyClass & cls(int id) const; // throws InvalidInput on unknown id

    bool is_walkable(int id) const { return cls(id).walkable; }
    bool is_countable(int id) const { return cls(id).countable; }

    void            save(const std::string & path) const;
    static Ontology load(const std::string & path);
};

} // namespace anymodal
