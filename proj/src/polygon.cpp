#include "anymodal/polygon.hpp"

#include <algorithm>
#include <cmath>

#include "anymodal/errors.hpp"

namespace anymodal {

std::vector<PolyPoint> shape_polygon(const ShapePrimitive & s) {
    std::vector<PolyPoint> poly;
    if (s.is_human) {
        // body rectangle outline (the head is ignored for path purposes)
        const float hw  = s.size * 0.2f;
        const float top = s.cy - s.size * 0.5f + 2.0f * s.size / 6.0f;
        const float bot = s.cy + s.size * 0.5f;
        poly = {{s.cx - hw, top}, {s.cx + hw, top}, {s.cx + hw, bot}, {s.cx - hw, bot}};
        return poly;
    }
    switch (s.kind) {
        case ShapeKind::circle: {
            const float r = s.size * 0.5f;
            for (int i = 0; i < 64; ++i) {
                const float a = 2.0f * 3.14159265358979f * (float) i / 64.0f;
                poly.push_back({s.cx + r * std::cos(a), s.cy + r * std::sin(a)});
            }
            break;
        }
        case ShapeKind::rectangle: {
            const float hw = s.size * 0.5f;
            const float hh = s.size * 0.5f * s.aspect;
            poly = {{s.cx - hw, s.cy - hh}, {s.cx + hw, s.cy - hh}, {s.cx + hw, s.cy + hh}, {s.cx - hw, s.cy + hh}};
            break;
        }
        case ShapeKind::triangle: {
            const float h = s.size * 0.5f;
            poly = {{s.cx, s.cy - h}, {s.cx + h, s.cy + h}, {s.cx - h, s.cy + h}};
            break;
        }
    }
    return poly;
}

double polygon_area(const std::vector<PolyPoint> & poly) {
    double area = 0.0;
    const size_t n = poly.size();
    for (size_t i = 0; i < n; ++i) {
        const auto & a = poly[i];
        const auto & b = poly[(i + 1) % n];
        area += (double) a[0] * b[1] - (double) b[0] * a[1];
    }
    return std::fabs(area) * 0.5;
}

std::vector<PolyPoint> resample_polygon(const std::vector<PolyPoint> & poly, int n) {
    if (poly.size() < 3 || polygon_area(poly) <= 1e-9) {
        throw InvalidInput("degenerate polygon (fewer than 3 points or zero area)");
    }
    const size_t m = poly.size();
    std::vector<double> cum(m + 1, 0.0);
    for (size_t i = 0; i < m; ++i) {
        const auto & a = poly[i];
        const auto & b = poly[(i + 1) % m];
        cum[i + 1] = cum[i] + std::hypot((double) b[0] - a[0], (double) b[1] - a[1]);
    }
    const double total = cum[m];
    if (total <= 1e-9) {
        throw InvalidInput("degenerate polygon (zero perimeter)");
    }
    std::vector<PolyPoint> out;
    out.reserve((size_t) n);
    size_t seg = 0;
    for (int i = 0; i < n; ++i) {
        const double target = total * (double) i / (double) n;
        while (seg + 1 < m && cum[seg + 1] < target) {
            seg++;
        }
        const double seg_len = cum[seg + 1] - cum[seg];
        const double frac    = seg_len > 0.0 ? (target - cum[seg]) / seg_len : 0.0;
        const auto & a = poly[seg];
        const auto & b = poly[(seg + 1) % m];
        out.push_back({(float) (a[0] + (b[0] - a[0]) * frac), (float) (a[1] + (b[1] - a[1]) * frac)});
    }
    return out;
}

GridU8 rasterize_polygon(const std::vector<PolyPoint> & poly, int size) {
    GridU8 mask(size, size, 1, 0);
    const size_t n = poly.size();
    if (n < 3) {
        return mask;
    }
    for (int y = 0; y < size; ++y) {
        const double py = ((double) y + 0.5) / size;
        // collect x crossings of the scanline
        std::vector<double> xs;
        for (size_t i = 0; i < n; ++i) {
            const auto & a = poly[i];
            const auto & b = poly[(i + 1) % n];
            const double ay = a[1], by = b[1];
            if ((ay <= py && by > py) || (by <= py && ay > py)) {
                const double t = (py - ay) / (by - ay);
                xs.push_back(a[0] + t * (b[0] - a[0]));
            }
        }
        std::sort(xs.begin(), xs.end());
        for (size_t i = 0; i + 1 < xs.size(); i += 2) {
            const int x0 = (int) std::ceil(xs[i] * size - 0.5);
            const int x1 = (int) std::floor(xs[i + 1] * size - 0.5);
            for (int x = std::max(0, x0); x <= std::min(size - 1, x1); ++x) {
                mask.at(y, x) = 1;
            }
        }
    }
    return mask;
}

double mask_iou(const GridU8 & a, const GridU8 & b) {
    if (a.height != b.height || a.width != b.width) {
        throw InvalidInput("mask_iou: size mismatch");
    }
    size_t inter = 0, uni = 0;
    for (size_t i = 0; i < a.data.size(); ++i) {
        const bool pa = a.data[i] != 0, pb = b.data[i] != 0;
        inter += (pa && pb) ? 1 : 0;
        uni += (pa || pb) ? 1 : 0;
    }
    return uni == 0 ? 1.0 : (double) inter / (double) uni;
}

GridU8 crop_resize_mask(const GridU8 & mask, int out_size) {
    int x0 = mask.width, x1 = -1, y0 = mask.height, y1 = -1;
    for (int y = 0; y < mask.height; ++y) {
        for (int x = 0; x < mask.width; ++x) {
            if (mask.at(y, x)) {
                x0 = std::min(x0, x);
                x1 = std::max(x1, x);
                y0 = std::min(y0, y);
                y1 = std::max(y1, y);
            }
        }
    }
    if (x1 < 0) {
        throw InvalidInput("crop_resize_mask: empty mask");
    }
    const int w = x1 - x0 + 1, h = y1 - y0 + 1;
    GridU8 out(out_size, out_size, 1, 0);
    for (int y = 0; y < out_size; ++y) {
        const int sy = y0 + std::min(h - 1, (int) ((int64_t) y * h / out_size));
        for (int x = 0; x < out_size; ++x) {
            const int sx = x0 + std::min(w - 1, (int) ((int64_t) x * w / out_size));
            out.at(y, x) = mask.at(sy, sx);
        }
    }
    return out;
}

} // namespace anymodal
