#pragma once

#include <cstddef>
#include <vector>

#include "clcsca/geometry.hpp"
#include "clcsca/tensor.hpp"
#include "clcsca/train.hpp"

namespace clcsca::oracle {

// Deliberately naive re-derivations of the geometry and metric contracts,
// written with the simplest possible algorithms (full rescans, std::set
// arithmetic) so the production implementations can be checked against
// independent code paths. Test/verification use only.

// Greedy max-min selection with a full distance rescan every round.
std::vector<std::size_t> fps_brute(const PointCloud& pc, std::size_t m);

// Filter + full sort per centroid.
std::vector<NeighborGroup> ball_query_brute(const PointCloud& pc,
                                            const std::vector<std::size_t>& centroid_indices,
                                            double radius, std::size_t k);

// Full sort of all source points per query.
KnnResult knn_brute(const double* query_pts, std::size_t q, const double* source_pts,
                    std::size_t s, std::size_t k);

// Plain-loop inverse-distance interpolation; returns raw row-major values.
std::vector<double> interpolate_brute(const Tensor& source_feats,
                                      const std::vector<double>& source_pts,
                                      const std::vector<double>& query_pts, std::size_t k);

// Row = ground truth, column = prediction.
std::vector<std::vector<std::size_t>> confusion_matrix(const std::vector<int>& pred,
                                                       const std::vector<int>& gt,
                                                       std::size_t num_classes);

// OA/ACC read off the confusion matrix.
ClassificationMetrics classification_metrics_brute(const std::vector<int>& pred,
                                                   const std::vector<int>& gt,
                                                   std::size_t num_classes);

// Set-arithmetic IoU, mean over the category's parts (absent-absent = 1).
double shape_iou_brute(const std::vector<int>& pred, const std::vector<int>& gt,
                       const std::vector<int>& part_set);

}  // namespace clcsca::oracle
