#pragma once

#include <array>
#include <vector>

#include "anymodal/grid.hpp"
#include "anymodal/synth.hpp"

namespace anymodal {

using PolyPoint = std::array<float, 2>; // (x, y) in [0,1]

// Closed-boundary polygon for a shape primitive (circles become 64-gons).
std::vector<PolyPoint> shape_polygon(const ShapePrimitive & s);

// Arc-length resampling to exactly n points along the closed boundary.
// Degenerate polygons (zero perimeter / area) are rejected.
std::vector<PolyPoint> resample_polygon(const std::vector<PolyPoint> & poly, int n);

double polygon_area(const std::vector<PolyPoint> & poly);

// Even-odd scanline rasterization at pixel centers.
GridU8 rasterize_polygon(const std::vector<PolyPoint> & poly, int size);

// IoU between binary masks; two empty masks count as IoU 1.
double mask_iou(const GridU8 & a, const GridU8 & b);

// Crop a mask to the tight bounding box of its set pixels and nearest-resize
// to out_size x out_size (the fixed tokenizer input format).
GridU8 crop_resize_mask(const GridU8 & mask, int out_size);

} // namespace anymodal
