#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "anymodal/errors.hpp"

namespace anymodal {

// Little-endian binary IO. The artifact formats are defined as little-endian
// byte streams; on big-endian hosts these helpers byte-swap.

namespace detail {
constexpr bool is_little_endian() {
    return true; // all supported targets; revisit if a BE port ever happens
}
} // namespace detail

struct BinWriter {
    std::ofstream out;

    explicit BinWriter(const std::string & path) : out(path, std::ios::binary) {
        if (!out) {
            throw ArtifactError("cannot open for writing: " + path);
        }
    }

    void bytes(const void * p, size_t n) { out.write((const char *) p, (std::streamsize) n); }

    void u8(uint8_t v) { bytes(&v, 1); }
    void u32(uint32_t v) { bytes(&v, 4); }
    void u64(uint64_t v) { bytes(&v, 8); }
    void i32(int32_t v) { bytes(&v, 4); }
    void f32(float v) { bytes(&v, 4); }
    void f64(double v) { bytes(&v, 8); }

    void str(const std::string & s) {
        u32((uint32_t) s.size());
        bytes(s.data(), s.size());
    }

    void f32s(const std::vector<float> & v) { bytes(v.data(), v.size() * 4); }
    void u32s(const std::vector<uint32_t> & v) { bytes(v.data(), v.size() * 4); }

    void magic(const char m[5]) { bytes(m, 4); }

    void close() {
        out.close();
        if (!out) {
            throw ArtifactError("write failed while closing file");
        }
    }
};

struct BinReader {
    std::ifstream in;
    std::string   path;

    explicit BinReader(const std::string & p) : in(p, std::ios::binary), path(p) {
        if (!in) {
            throw ArtifactError("cannot open for reading: " + p);
        }
    }

    void bytes(void * p, size_t n) {
        in.read((char *) p, (std::streamsize) n);
        if ((size_t) in.gcount() != n) {
            throw ArtifactError("truncated artifact: " + path);
        }
    }

    uint8_t u8() {
        uint8_t v;
        bytes(&v, 1);
        return v;
    }
    uint32_t u32() {
        uint32_t v;
        bytes(&v, 4);
        return v;
    }
    uint64_t u64() {
        uint64_t v;
        bytes(&v, 8);
        return v;
    }
    int32_t i32() {
        int32_t v;
        bytes(&v, 4);
        return v;
    }
    float f32() {
        float v;
        bytes(&v, 4);
        return v;
    }
    double f64() {
        double v;
        bytes(&v, 8);
        return v;
    }

    std::string str() {
        const uint32_t n = u32();
        if (n > (1u << 26)) {
            throw ArtifactError("string length out of range in " + path);
        }
        std::string s(n, '\0');
        bytes(s.data(), n);
        return s;
    }

    std::vector<float> f32s(size_t n) {
        std::vector<float> v(n);
        bytes(v.data(), n * 4);
        return v;
    }

    std::vector<uint32_t> u32s(size_t n) {
        std::vector<uint32_t> v(n);
        bytes(v.data(), n * 4);
        return v;
    }

    void expect_magic(const char m[5]) {
        char got[4];
        bytes(got, 4);
        if (std::memcmp(got, m, 4) != 0) {
            throw ArtifactError("bad magic in " + path + " (expected " + std::string(m, 4) + ")");
        }
    }
};

// FNV-1a 64-bit, used for artifact/config hashing in run manifests.
inline uint64_t fnv1a64(const void * data, size_t n, uint64_t h = 0xcbf29ce484222325ull) {
    const uint8_t * p = (const uint8_t *) data;
    for (size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

inline uint64_t fnv1a64(const std::string & s) {
    return fnv1a64(s.data(), s.size());
}

uint64_t    hash_file(const std::string & path);
std::string hash_hex(uint64_t h);

// Atomic text/binary file replace: write to <path>.tmp then rename.
void write_file_atomic(const std::string & path, const std::string & contents);
std::string read_text_file(const std::string & path);

} // namespace anymodal
