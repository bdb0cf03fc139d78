#include "anymodal/binio.hpp"

#include <cstdio>

namespace anymodal {

uint64_t hash_file(const std::string & path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw ArtifactError("cannot hash missing file: " + path);
    }
    uint64_t h = 0xcbf29ce484222325ull;
    char     buf[1 << 16];
    while (in) {
        in.read(buf, sizeof(buf));
        h = fnv1a64(buf, (size_t) in.gcount(), h);
    }
    return h;
}

std::string hash_hex(uint64_t h) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", (unsigned long long) h);
    return buf;
}

void write_file_atomic(const std::string & path, const std::string & contents) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw ArtifactError("cannot open for writing: " + tmp);
        }
        out.write(contents.data(), (std::streamsize) contents.size());
        out.close();
        if (!out) {
            throw ArtifactError("write failed: " + tmp);
        }
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0) {
        throw ArtifactError("cannot rename " + tmp + " -> " + path);
    }
}

std::string read_text_file(const std::string & path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw ArtifactError("cannot open for reading: " + path);
    }
    std::string s((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return s;
}

} // namespace anymodal
