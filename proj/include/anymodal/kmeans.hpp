#pragma once

#include <cstdint>
#include <vector>

namespace anymodal {

struct KmeansResult {
    int k = 0;
    int dim = 0;
    std::vector<double> centers;    // k x dim
    std::vector<int>    assignment; // n, nearest center (ties -> lowest index)
    std::vector<int>    counts;     // k
    int iterations = 0;
};

// k-means++ seeding followed by Lloyd iterations until the largest center
// movement drops below `tol` or `max_iters` is reached. Deterministic per seed.
KmeansResult kmeans(const double * points, int n, int dim, int k, uint64_t seed, int max_iters = 50,
                    double tol = 1e-5);

// float convenience wrapper (palette extraction)
KmeansResult kmeans(const float * points, int n, int dim, int k, uint64_t seed, int max_iters = 50,
                    double tol = 1e-5);

// Nearest center by squared L2, ties broken by lowest index.
int nearest_center(const double * centers, int k, int dim, const double * x, double * dist2_out = nullptr);

} // namespace anymodal
