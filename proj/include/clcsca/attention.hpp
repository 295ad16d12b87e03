#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include "clcsca/pyramid.hpp"
#include "clcsca/tensor.hpp"

namespace clcsca {

// Projection weights for one attention block. Self-attention uses wq/wk/wv;
// the cross (query/key/value from different operands) form uses w1/w2/w3.
// wq, wk, w1, w2 are CxC' with C' = C/4; wv, w3 are CxC.
struct AttentionParams {
    Tensor wq, wk, wv;
    Tensor w1, w2, w3;
};

// Read-only view of the softmax attention matrices, in call order, detached
// from the graph. Enabled by installing a probe for the current thread;
// normal runs leave it off.
struct AttentionProbe {
    std::vector<Tensor> weights;
};
void set_attention_probe(AttentionProbe* probe);

// softmax(F Wq (F Wk)^T / sqrt(C')) (F Wv) + F
Tensor self_attention(const Tensor& f, const AttentionParams& p);

// softmax((A W1)(B W2)^T [/ sqrt(C')]) (G W3) -- queries from a, keys from b,
// values from g; no residual. `scaled` applies the sqrt(C') normalization.
Tensor cross_attention_trio(const Tensor& a, const Tensor& b, const Tensor& g,
                            const AttentionParams& p, bool scaled);

struct ClcaParams {
    Tensor lift;  // level width -> attention width, shared by all three levels
    std::array<AttentionParams, 3> level;
    AttentionParams cross;
};

// Cross-level block: lift each level, self-attention per level (independent
// weights), then the cross trio plus all three level residuals.
Tensor clca(const LevelFeatures& lv, const ClcaParams& p, bool scaled);

// Lift-and-sum fallback used by the ablation variants: lift each level and
// add them, no attention.
Tensor level_sum(const LevelFeatures& lv, const Tensor& lift);

// kNN-interpolate features from path resolution to the full cloud (k = 3,
// clamped to the source count), optionally append the target coordinates,
// then the shared MLP chain.
Tensor upsample(const Tensor& f, const std::vector<double>& path_pts,
                const std::vector<double>& full_pts, const MlpParams& mlp, bool with_coords);

struct CscaParams {
    AttentionParams self;  // one set shared by all three scales
    AttentionParams cross;
};

// Cross-scale block: self-attention per scale (shared weights), then the
// cross trio plus the three self-attended residuals.
Tensor csca(const Tensor& s1, const Tensor& s2, const Tensor& s3, const CscaParams& p,
            bool scaled);

}  // namespace clcsca
