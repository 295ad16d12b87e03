#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "clcsca/data.hpp"
#include "clcsca/model.hpp"

namespace clcsca {

// Optimizer and loop hyperparameters. Defaults follow the classification
// protocol; the segmentation configs override lr/decay/batch in JSON.
struct TrainConfig {
    std::string task;  // informational; must match the network task when set
    double initial_lr = 0.001;
    double decay_factor = 0.7;
    std::size_t decay_every_epochs = 20;
    std::size_t epochs = 60;
    std::size_t batch_size = 20;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    std::uint64_t seed = 0;
    // augmentation switches (train split only); order: dropout, shift, scale
    bool augment = true;
    double dropout_max_ratio = 0.875;
    double shift_range = 0.1;
    double scale_lo = 0.8;
    double scale_hi = 1.25;

    void validate() const;
};

TrainConfig train_config_from_json_text(const std::string& text);
std::string train_config_to_json_text(const TrainConfig& cfg);

// One file holding {"network": {...}, "train": {...}}.
struct RunConfig {
    NetworkConfig network;
    TrainConfig train;
};

RunConfig run_config_from_json_text(const std::string& text);
std::string run_config_to_json_text(const RunConfig& cfg);

// ---- optimizer ---------------------------------------------------------------

struct AdamState {
    std::map<std::string, std::vector<double>> m;  // first moments
    std::map<std::string, std::vector<double>> v;  // second moments
    std::uint64_t t = 0;                           // completed steps
};

AdamState make_adam_state(const ParamMap& params);

// Applies one Adam update using each parameter's accumulated gradient
// (missing/empty gradients count as zero). Advances state.t.
void adam_step(ParamMap& params, AdamState& state, double lr, const TrainConfig& cfg);

// initial_lr * decay_factor^floor(epoch / decay_every_epochs)
double lr_at_epoch(const TrainConfig& cfg, std::size_t epoch);

// ---- augmentation ---------------------------------------------------------------

// Random point dropout (dropped points collapse onto the first point), global
// per-axis shift, global scale — in that order. Stages whose switches are at
// the identity consume no random draws.
PointCloud augment(const PointCloud& pc, const TrainConfig& cfg, Rng& rng);

// ---- metrics -------------------------------------------------------------------

struct ClassificationMetrics {
    double oa = 0.0;   // overall accuracy
    double acc = 0.0;  // unweighted mean of per-class recalls (classes with support)
};

ClassificationMetrics classification_metrics(const std::vector<int>& pred,
                                             const std::vector<int>& gt,
                                             std::size_t num_classes);

// IoU of one shape: mean over the category's parts, counting parts absent from
// both prediction and ground truth as 1 (the ShapeNet convention).
double shape_iou(const std::vector<int>& pred, const std::vector<int>& gt,
                 const std::vector<int>& part_set);

struct EvalResult {
    double loss = 0.0;
    double oa = 0.0;
    double acc = 0.0;
    std::optional<double> instance_miou;
    std::map<std::string, double> category_iou;
};

EvalResult evaluate_classification(const NetworkConfig& net, const ParamMap& params,
                                   const Dataset& ds);
EvalResult evaluate_segmentation(const NetworkConfig& net, const ParamMap& params,
                                 const Dataset& ds);

// ---- metrics CSV ------------------------------------------------------------------

struct MetricsRow {
    std::size_t epoch = 0;
    std::string split;
    double loss = 0.0;
    std::optional<double> oa;
    std::optional<double> acc;
    std::optional<double> miou;
    double lr = 0.0;
};

// Header `epoch,split,loss,oa,acc,miou,lr`; numbers at 9 significant digits,
// absent fields empty.
std::string metrics_csv(const std::vector<MetricsRow>& rows);
void write_metrics_csv(const std::string& path, const std::vector<MetricsRow>& rows);

// ---- training loop -----------------------------------------------------------------

struct EpochStats {
    double loss = 0.0;      // mean per-sample loss
    double accuracy = 0.0;  // argmax accuracy on the training pass
};

// Named random streams so changing one stage never perturbs the others.
struct TrainRngs {
    Rng shuffle;
    Rng augment;
    Rng dropout;
    Rng fps;
};

TrainRngs make_train_rngs(std::uint64_t seed);

EpochStats train_epoch(const NetworkConfig& net, ParamMap& params, AdamState& state,
                       const Dataset& train_ds, const TrainConfig& cfg, std::size_t epoch,
                       TrainRngs& rngs);

struct TrainOutcome {
    ParamMap best_params;   // weights of the best epoch (checkpoint of record)
    ParamMap final_params;  // weights after the last epoch
    std::size_t best_epoch = 0;
    double best_metric = 0.0;  // test OA (classification) or instance mIoU (segmentation)
    std::vector<MetricsRow> history;
};

// Full loop: init, epochs of train + test evaluation, best-epoch tracking by
// test OA (classification) or test instance mIoU (segmentation).
TrainOutcome run_training(const NetworkConfig& net, const TrainConfig& cfg,
                          const Dataset& train_ds, const Dataset& test_ds,
                          std::ostream* log = nullptr);

}  // namespace clcsca
