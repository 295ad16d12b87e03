#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <vector>

#include "clcsca/geometry.hpp"
#include "clcsca/params.hpp"
#include "clcsca/rng.hpp"
#include "clcsca/tensor.hpp"

namespace clcsca {

// One grouped shared-MLP layer: ball query NN(radius, k), then the channel
// chain (first entry is the input width).
struct LayerSpec {
    double radius = 0.0;
    std::size_t k = 0;
    std::vector<std::size_t> mlp;
};

struct PathConfig {
    std::size_t resolution = 0;
    std::vector<LayerSpec> layers;  // exactly 3

    // extra_attrs widens the first layer's input to 3 + a.
    void validate(std::size_t extra_attrs) const;
    std::size_t out_channels() const { return layers.back().mlp.back(); }
};

// Low/mid/high feature maps of one path, all at the path's resolution.
struct LevelFeatures {
    std::vector<std::size_t> sample;  // indices into the original cloud
    std::vector<double> points;       // resolution x 3
    Tensor low, mid, high;
};

struct MlpParams {
    std::vector<Tensor> w, b;
};

// Gathers "{prefix}.mlp{j}.w/.b" for j in [0, stages).
MlpParams collect_mlp(const ParamMap& params, const std::string& prefix, std::size_t stages);

// linear + relu per stage, shared across rows.
Tensor apply_mlp(const Tensor& x, const MlpParams& mlp);

// Layer 1: per-neighbor input = relative offset (3 channels, plus the
// neighbor's extra attributes when present), shared MLP, max-pool over the
// k group members.
Tensor group_and_pool_first(const PointCloud& path_pc, double r, std::size_t k,
                            const MlpParams& mlp);

// Layers 2-3: per-neighbor input = concat(neighbor feature, centroid
// feature), doubling the channel width, then shared MLP and max-pool.
Tensor group_and_pool_deeper(const PointCloud& path_pc, const Tensor& feats, double r,
                             std::size_t k, const MlpParams& mlp);

// Runs the 3-layer stack of one path over an already-sampled sub-cloud.
// Parameter names: "{prefix}.layer{l}.mlp{j}.w/.b".
LevelFeatures run_path(const PointCloud& path_pc, const PathConfig& cfg, const ParamMap& params,
                       const std::string& prefix);

// FPS the input cloud to each path's resolution (independently, from the
// original cloud), then run the three paths. Parameter prefix: "path{p}".
// fps_rng, when given, picks a random FPS seed point per path.
std::array<LevelFeatures, 3> build_pyramid(const PointCloud& pc,
                                           const std::array<PathConfig, 3>& cfgs,
                                           const ParamMap& params, Rng* fps_rng = nullptr);

}  // namespace clcsca
