#include "anymodal/kmeans.hpp"

#include <cmath>
#include <cstring>
#include <string>

#include "anymodal/errors.hpp"
#include "anymodal/rng.hpp"

namespace anymodal {

int nearest_center(const double * centers, int k, int dim, const double * x, double * dist2_out) {
    int    best   = 0;
    double best_d = -1.0;
    for (int c = 0; c < k; ++c) {
        const double * ctr = centers + (size_t) c * dim;
        double         d   = 0.0;
        for (int j = 0; j < dim; ++j) {
            const double diff = x[j] - ctr[j];
            d += diff * diff;
        }
        if (best_d < 0.0 || d < best_d) {
            best_d = d;
            best   = c;
        }
    }
    if (dist2_out) {
        *dist2_out = best_d;
    }
    return best;
}

static void seed_plus_plus(const double * points, int n, int dim, int k, Rng & rng, std::vector<double> & centers) {
    centers.assign((size_t) k * dim, 0.0);
    std::vector<double> dist2(n, 0.0);
    std::vector<char>   chosen(n, 0);

    int first = rng.uniform_int(n);
    std::memcpy(centers.data(), points + (size_t) first * dim, (size_t) dim * sizeof(double));
    chosen[first] = 1;

    for (int i = 0; i < n; ++i) {
        nearest_center(centers.data(), 1, dim, points + (size_t) i * dim, &dist2[(size_t) i]);
    }

    for (int c = 1; c < k; ++c) {
        double total = 0.0;
        for (int i = 0; i < n; ++i) {
            total += dist2[(size_t) i];
        }
        int pick = -1;
        if (total > 0.0) {
            double r   = rng.uniform() * total;
            double cum = 0.0;
            for (int i = 0; i < n; ++i) {
                cum += dist2[(size_t) i];
                if (r < cum) {
                    pick = i;
                    break;
                }
            }
            if (pick < 0) {
                pick = n - 1;
            }
        } else {
            // all remaining points coincide with a chosen center; take the
            // lowest-index unchosen point so k distinct slots still fill
            for (int i = 0; i < n; ++i) {
                if (!chosen[i]) {
                    pick = i;
                    break;
                }
            }
            if (pick < 0) {
                pick = 0;
            }
        }
        chosen[pick] = 1;
        std::memcpy(centers.data() + (size_t) c * dim, points + (size_t) pick * dim, (size_t) dim * sizeof(double));
        for (int i = 0; i < n; ++i) {
            double d = 0.0;
            const double * x   = points + (size_t) i * dim;
            const double * ctr = centers.data() + (size_t) c * dim;
            for (int j = 0; j < dim; ++j) {
                const double diff = x[j] - ctr[j];
                d += diff * diff;
            }
            if (d < dist2[(size_t) i]) {
                dist2[(size_t) i] = d;
            }
        }
    }
}

KmeansResult kmeans(const double * points, int n, int dim, int k, uint64_t seed, int max_iters, double tol) {
    if (n < k || k <= 0) {
        throw InvalidInput("kmeans: need at least k points (n=" + std::to_string(n) + ", k=" + std::to_string(k) + ")");
    }
    Rng rng(seed);

    KmeansResult res;
    res.k   = k;
    res.dim = dim;
    seed_plus_plus(points, n, dim, k, rng, res.centers);
    res.assignment.assign(n, 0);
    res.counts.assign(k, 0);

    std::vector<double> sums((size_t) k * dim);
    std::vector<double> next((size_t) k * dim);

    for (int it = 0; it < max_iters; ++it) {
        res.iterations = it + 1;
        for (int i = 0; i < n; ++i) {
            res.assignment[i] = nearest_center(res.centers.data(), k, dim, points + (size_t) i * dim);
        }
        std::fill(sums.begin(), sums.end(), 0.0);
        std::fill(res.counts.begin(), res.counts.end(), 0);
        for (int i = 0; i < n; ++i) {
            const int c = res.assignment[i];
            res.counts[(size_t) c]++;
            const double * x = points + (size_t) i * dim;
            double * s = sums.data() + (size_t) c * dim;
            for (int j = 0; j < dim; ++j) {
                s[j] += x[j];
            }
        }
        double moved = 0.0;
        for (int c = 0; c < k; ++c) {
            double * dst = next.data() + (size_t) c * dim;
            if (res.counts[(size_t) c] == 0) {
                // empty cluster keeps its center
                std::memcpy(dst, res.centers.data() + (size_t) c * dim, (size_t) dim * sizeof(double));
            } else {
                const double inv = 1.0 / res.counts[(size_t) c];
                double       d   = 0.0;
                for (int j = 0; j < dim; ++j) {
                    dst[j] = sums[(size_t) c * dim + j] * inv;
                    const double diff = dst[j] - res.centers[(size_t) c * dim + j];
                    d += diff * diff;
                }
                moved = std::max(moved, d);
            }
        }
        res.centers = next;
        if (std::sqrt(moved) < tol) {
            break;
        }
    }

    // final assignment against the converged centers
    std::fill(res.counts.begin(), res.counts.end(), 0);
    for (int i = 0; i < n; ++i) {
        res.assignment[i] = nearest_center(res.centers.data(), k, dim, points + (size_t) i * dim);
        res.counts[(size_t) res.assignment[i]]++;
    }
    return res;
}

KmeansResult kmeans(const float * points, int n, int dim, int k, uint64_t seed, int max_iters, double tol) {
    std::vector<double> pts((size_t) n * dim);
    for (size_t i = 0; i < pts.size(); ++i) {
        pts[i] = points[i];
    }
    return kmeans(pts.data(), n, dim, k, seed, max_iters, tol);
}

} // namespace anymodal
