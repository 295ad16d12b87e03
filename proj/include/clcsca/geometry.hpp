#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "clcsca/common.hpp"
#include "clcsca/tensor.hpp"

namespace clcsca {

// Origin-centered point set with optional per-point extras. Coordinates are
// flat row-major [n x 3]; attrs flat [n x a].
struct PointCloud {
    std::size_t n = 0;
    std::size_t a = 0;
    std::vector<double> coords;
    std::vector<double> attrs;
    std::vector<int> point_labels;  // empty or size n
    std::optional<int> cloud_label;

    const double* pt(std::size_t i) const { return coords.data() + 3 * i; }
    void validate() const;  // throws ContractError
};

// One grouped neighborhood: exactly k members within radius of the centroid
// (padded by repeating the nearest member when fewer qualify), in canonical
// order: ascending (squared distance, lexicographic coords, index).
struct NeighborGroup {
    std::size_t centroid_index = 0;
    std::vector<std::size_t> member_indices;  // k
    std::vector<double> member_offsets;       // k x 3, member - centroid
};

// Greedy farthest point sampling seeded at the lexicographically smallest
// point; each pick maximizes min distance to the chosen set, ties broken by
// lexicographic coords then index. Permutation-invariant as a coordinate set.
std::vector<std::size_t> farthest_point_sample(const PointCloud& pc, std::size_t m);
// Same greedy sweep from an explicit seed point (training-time diversity).
std::vector<std::size_t> farthest_point_sample_from(const PointCloud& pc, std::size_t m,
                                                    std::size_t seed_index);

// All points with distance <= r of each centroid, canonically sorted,
// truncated to k, padded by repeating the nearest member. The centroid always
// qualifies at distance zero.
std::vector<NeighborGroup> ball_query(const PointCloud& pc,
                                      const std::vector<std::size_t>& centroid_indices, double r,
                                      std::size_t k);

struct KnnResult {
    std::size_t k = 0;
    std::vector<std::size_t> indices;  // q x k, flat
    std::vector<double> distances;     // q x k, Euclidean
};

// k nearest sources per query row; canonical tie-break (distance,
// lexicographic coords, index). Requires k <= source count.
KnnResult knn(const double* query_pts, std::size_t q, const double* source_pts, std::size_t s,
              std::size_t k);
KnnResult knn(const std::vector<double>& query_pts, const std::vector<double>& source_pts,
              std::size_t k);

// Inverse-distance interpolation of source features onto query positions:
// w_j = (d_j + eps)^-1, normalized per query, eps = 1e-8. Differentiable with
// respect to source_feats; geometry is treated as constant.
Tensor interpolate_knn(const Tensor& source_feats, const std::vector<double>& source_pts,
                       const std::vector<double>& query_pts, std::size_t k);

}  // namespace clcsca
