#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "clcsca/attention.hpp"
#include "clcsca/geometry.hpp"
#include "clcsca/params.hpp"
#include "clcsca/pyramid.hpp"
#include "clcsca/rng.hpp"

namespace clcsca {

// Which attention blocks are active. "baseline" replaces both with feature
// summation; "clca"/"csca" enable exactly one block.
enum class Ablation { baseline, clca, csca, full };
Ablation ablation_from_string(const std::string& s);
std::string to_string(Ablation a);

struct NetworkConfig {
    std::string task = "classification";  // or "segmentation"
    std::size_t num_classes = 0;
    std::size_t input_points = 0;
    std::array<PathConfig, 3> paths;
    std::size_t clca_channels = 0;            // width after the shared level lift
    std::size_t csca_channels = 0;            // scale width D
    std::vector<std::size_t> upsample_mlp;    // full chain, input width first
    std::vector<std::size_t> head;            // hidden widths; final layer to num_classes implied
    double dropout = 0.4;
    std::size_t extra_attrs = 0;              // a
    Ablation ablation = Ablation::full;
    bool scale_cross_attention = true;        // sqrt-width scaling in the cross trios
    bool zero_init_values = false;            // zero-init value projections (near-identity start)
    bool seg_sum_loss = false;                // sum instead of mean over points
    bool fps_random_start = false;            // random FPS seed point during training

    bool is_segmentation() const { return task == "segmentation"; }
    void validate() const;
};

NetworkConfig network_config_from_json_text(const std::string& text);
std::string to_json_text(const NetworkConfig& cfg);

using ModelParams = ParamMap;

struct ParamSpec {
    std::string name;
    Shape shape;
};

// The full parameter schema implied by a config, in name order.
std::vector<ParamSpec> param_schema(const NetworkConfig& cfg);

// Fresh parameters: weights uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) drawn
// from the per-parameter "init" substream of seed, biases zero.
ModelParams init_params(const NetworkConfig& cfg, std::uint64_t seed);

// Deep value copy, gradients dropped, still trainable.
ModelParams clone_params(const ModelParams& params);

// Shape-checks params against the config's schema; names the first mismatch.
void validate_params(const NetworkConfig& cfg, const ModelParams& params);

// Classification logits [1 x num_classes]. dropout_rng enables dropout (train
// mode); fps_rng randomizes the FPS seed when the config asks for it.
Tensor classify_forward(const PointCloud& pc, const NetworkConfig& cfg, const ModelParams& params,
                        Rng* dropout_rng = nullptr, Rng* fps_rng = nullptr);

// Per-point logits [n x num_classes].
Tensor segment_forward(const PointCloud& pc, const NetworkConfig& cfg, const ModelParams& params,
                       Rng* dropout_rng = nullptr, Rng* fps_rng = nullptr);

// Task-aware supervision: mean over points for segmentation (sum behind
// cfg.seg_sum_loss); plain cross-entropy for classification.
Tensor cross_entropy(const Tensor& logits, const std::vector<int>& targets,
                     const NetworkConfig& cfg);

// Argmax per row, smallest index on ties.
std::vector<int> predict(const Tensor& logits);

// CLCW checkpoint: magic "CLCW", version, then name-sorted tensors.
void save_params(const std::string& path, const ModelParams& params);
ModelParams load_params(const std::string& path);
// Loads and validates against cfg's schema in one step.
ModelParams load_params(const std::string& path, const NetworkConfig& cfg);

}  // namespace clcsca
