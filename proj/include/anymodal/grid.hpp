#pragma once

#include <cstdint>
#include <vector>

namespace anymodal {

// Dense H x W x C array, row-major, channel-last.
template <typename T> struct Grid {
    int height   = 0;
    int width    = 0;
    int channels = 1;
    std::vector<T> data;

    Grid() = default;
    Grid(int h, int w, int c = 1, T fill = T{}) : height(h), width(w), channels(c), data((size_t) h * w * c, fill) {}

    T &       at(int y, int x, int c = 0) { return data[((size_t) y * width + x) * channels + c]; }
    const T & at(int y, int x, int c = 0) const { return data[((size_t) y * width + x) * channels + c]; }

    size_t size() const { return data.size(); }
    bool   empty() const { return data.empty(); }

    bool operator==(const Grid & other) const {
        return height == other.height && width == other.width && channels == other.channels && data == other.data;
    }
};

using GridU8  = Grid<uint8_t>;
using GridF32 = Grid<float>;
using GridI32 = Grid<int32_t>;

} // namespace anymodal
