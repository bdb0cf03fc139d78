#include "anymodal/ontology.hpp"

#include <sstream>

#include "anymodal/binio.hpp"
#include "anymodal/errors.hpp"

namespace anymodal {

const Ontology & Ontology::synthetic() {
    static const Ontology table = [] {
        Ontology o;
        auto add = [&](int id, const char * name, uint8_t r, uint8_t g, uint8_t b, bool walk, bool count) {
            o.classes.push_back({id, name, {r, g, b}, walk, count});
        };
        add(0, "background", 168, 168, 170, false, false);
        add(1, "road",       90,  90,  95,  true,  false);
        add(2, "floor",      150, 120, 90,  true,  false);
        add(3, "person",     230, 170, 140, false, true);
        add(4, "ball",       210, 60,  60,  false, true);
        add(5, "crate",      160, 110, 60,  false, true);
        add(6, "tree",       60,  150, 70,  false, true);
        add(7, "car",        70,  100, 200, false, true);
        add(8, "lamp",       235, 210, 90,  false, true);
        add(9, "sign",       220, 120, 40,  false, true);
        add(10, "animal",    140, 100, 80,  false, true);
        add(11, "rock",      120, 120, 120, false, true);
        add(12, "bush",      90,  170, 110, false, true);
        add(13, "wall",      190, 180, 165, false, false);
        add(14, "cloud",     235, 238, 242, false, false);
        add(15, "water",     80,  140, 190, false, false);
        return o;
    }();
    return table;
}

const OntologyClass & Ontology::cls(int id) const {
    if (!valid_class(id)) {
        throw InvalidInput("unknown semantic class id " + std::to_string(id));
    }
    return classes[id];
}

void Ontology::save(const std::string & path) const {
    std::ostringstream os;
    os << "anymodal-ontology v1 " << classes.size() << "\n";
    for (const auto & c : classes) {
        os << c.id << " " << c.name << " " << (int) c.base_color[0] << " " << (int) c.base_color[1] << " "
           << (int) c.base_color[2] << " " << (c.walkable ? 1 : 0) << " " << (c.countable ? 1 : 0) << "\n";
    }
    write_file_atomic(path, os.str());
}

Ontology Ontology::load(const std::string & path) {
    std::istringstream is(read_text_file(path));
    std::string        tag, ver;
    size_t             n = 0;
    if (!(is >> tag >> ver >> n) || tag != "anymodal-ontology" || ver != "v1") {
        throw ArtifactError("bad ontology header in " + path);
    }
    Ontology o;
    for (size_t i = 0; i < n; ++i) {
        OntologyClass c;
        int r, g, b, walk, count;
        if (!(is >> c.id >> c.name >> r >> g >> b >> walk >> count)) {
            throw ArtifactError("truncated ontology table in " + path);
        }
        c.base_color = {(uint8_t) r, (uint8_t) g, (uint8_t) b};
        c.walkable   = walk != 0;
        c.countable  = count != 0;
        o.classes.push_back(c);
    }
    return o;
}

} // namespace anymodal
