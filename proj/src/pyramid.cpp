#include "clcsca/pyramid.hpp"

#include <algorithm>
#include <string>

namespace clcsca {

namespace {

PointCloud subset(const PointCloud& pc, const std::vector<std::size_t>& idx) {
    PointCloud out;
    out.n = idx.size();
    out.a = pc.a;
    out.coords.resize(3 * idx.size());
    out.attrs.resize(pc.a * idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) {
        std::copy(pc.pt(idx[i]), pc.pt(idx[i]) + 3, out.coords.begin() + 3 * i);
        std::copy(pc.attrs.begin() + pc.a * idx[i], pc.attrs.begin() + pc.a * (idx[i] + 1),
                  out.attrs.begin() + pc.a * i);
    }
    return out;
}

std::vector<std::size_t> all_indices(std::size_t n) {
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    return idx;
}

}  // namespace

void PathConfig::validate(std::size_t extra_attrs) const {
    if (resolution < 1) throw ContractError("PathConfig: resolution must be positive");
    if (layers.size() != 3) {
        throw ContractError("PathConfig: expected 3 layers, got " + std::to_string(layers.size()));
    }
    const std::size_t c = layers.back().mlp.back();
    for (std::size_t l = 0; l < layers.size(); ++l) {
        const LayerSpec& spec = layers[l];
        if (!(spec.radius > 0.0)) throw ContractError("PathConfig: layer radius must be positive");
        if (spec.k < 1) throw ContractError("PathConfig: layer k must be at least 1");
        if (spec.mlp.size() < 2) throw ContractError("PathConfig: mlp chain needs input and output widths");
        if (l > 0 && !(spec.radius > layers[l - 1].radius)) {
            throw ContractError("PathConfig: radii must strictly increase within a path");
        }
        const std::size_t want_in = l == 0 ? 3 + extra_attrs : 2 * layers[l - 1].mlp.back();
        if (spec.mlp.front() != want_in) {
            throw ContractError("PathConfig: layer " + std::to_string(l) + " input width " +
                                std::to_string(spec.mlp.front()) + ", expected " +
                                std::to_string(want_in));
        }
        if (spec.mlp.back() != c) {
            throw ContractError("PathConfig: all layers must share one output width");
        }
    }
}

MlpParams collect_mlp(const ParamMap& params, const std::string& prefix, std::size_t stages) {
    MlpParams mlp;
    for (std::size_t j = 0; j < stages; ++j) {
        const std::string base = prefix + ".mlp" + std::to_string(j);
        mlp.w.push_back(param(params, base + ".w"));
        mlp.b.push_back(param(params, base + ".b"));
    }
    return mlp;
}

Tensor apply_mlp(const Tensor& x, const MlpParams& mlp) {
    if (mlp.w.empty() || mlp.w.size() != mlp.b.size()) {
        throw ContractError("apply_mlp: malformed parameter bundle");
    }
    Tensor h = x;
    for (std::size_t j = 0; j < mlp.w.size(); ++j) h = relu(linear(h, mlp.w[j], mlp.b[j]));
    return h;
}

Tensor group_and_pool_first(const PointCloud& path_pc, double r, std::size_t k,
                            const MlpParams& mlp) {
    const std::size_t m = path_pc.n, a = path_pc.a;
    const auto groups = ball_query(path_pc, all_indices(m), r, k);
    std::vector<double> in(m * k * (3 + a));
    for (std::size_t i = 0; i < m; ++i) {
        const NeighborGroup& g = groups[i];
        for (std::size_t j = 0; j < k; ++j) {
            double* row = in.data() + (i * k + j) * (3 + a);
            std::copy(g.member_offsets.begin() + 3 * j, g.member_offsets.begin() + 3 * (j + 1), row);
            const std::size_t nb = g.member_indices[j];
            std::copy(path_pc.attrs.begin() + a * nb, path_pc.attrs.begin() + a * (nb + 1), row + 3);
        }
    }
    Tensor grouped({m * k, 3 + a}, std::move(in));
    return group_max_pool(apply_mlp(grouped, mlp), k);
}

Tensor group_and_pool_deeper(const PointCloud& path_pc, const Tensor& feats, double r,
                             std::size_t k, const MlpParams& mlp) {
    const std::size_t m = path_pc.n;
    if (feats.rank() != 2 || feats.rows() != m) {
        throw ContractError("group_and_pool_deeper: features " + shape_str(feats.shape()) +
                            " do not cover " + std::to_string(m) + " points");
    }
    const auto groups = ball_query(path_pc, all_indices(m), r, k);
    std::vector<std::size_t> neighbor_idx(m * k), centroid_idx(m * k);
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < k; ++j) {
            neighbor_idx[i * k + j] = groups[i].member_indices[j];
            centroid_idx[i * k + j] = i;
        }
    }
    Tensor pairs = concat_cols(gather_rows(feats, std::move(neighbor_idx)),
                               gather_rows(feats, std::move(centroid_idx)));
    return group_max_pool(apply_mlp(pairs, mlp), k);
}

LevelFeatures run_path(const PointCloud& path_pc, const PathConfig& cfg, const ParamMap& params,
                       const std::string& prefix) {
    cfg.validate(path_pc.a);
    if (path_pc.n != cfg.resolution) {
        throw ContractError("run_path: cloud has " + std::to_string(path_pc.n) + " points, config wants " +
                            std::to_string(cfg.resolution));
    }
    LevelFeatures lv;
    lv.points = path_pc.coords;
    auto layer_mlp = [&](std::size_t l) {
        return collect_mlp(params, prefix + ".layer" + std::to_string(l), cfg.layers[l].mlp.size() - 1);
    };
    lv.low = group_and_pool_first(path_pc, cfg.layers[0].radius, cfg.layers[0].k, layer_mlp(0));
    lv.mid = group_and_pool_deeper(path_pc, lv.low, cfg.layers[1].radius, cfg.layers[1].k, layer_mlp(1));
    lv.high = group_and_pool_deeper(path_pc, lv.mid, cfg.layers[2].radius, cfg.layers[2].k, layer_mlp(2));
    return lv;
}

std::array<LevelFeatures, 3> build_pyramid(const PointCloud& pc,
                                           const std::array<PathConfig, 3>& cfgs,
                                           const ParamMap& params, Rng* fps_rng) {
    pc.validate();
    for (std::size_t p = 0; p < 3; ++p) {
        if (pc.n < cfgs[p].resolution) {
            throw ContractError("build_pyramid: cloud has " + std::to_string(pc.n) + " points, path " +
                                std::to_string(p) + " needs " + std::to_string(cfgs[p].resolution));
        }
    }
    std::array<LevelFeatures, 3> out;
    for (std::size_t p = 0; p < 3; ++p) {
        std::vector<std::size_t> sample =
            fps_rng ? farthest_point_sample_from(pc, cfgs[p].resolution, fps_rng->below(pc.n))
                    : farthest_point_sample(pc, cfgs[p].resolution);
        PointCloud sub = subset(pc, sample);
        out[p] = run_path(sub, cfgs[p], params, "path" + std::to_string(p));
        out[p].sample = std::move(sample);
    }
    return out;
}

}  // namespace clcsca
