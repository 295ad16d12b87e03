#include "clcsca/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <ostream>
#include <set>

#include "json.hpp"

namespace clcsca {

namespace {

using nlohmann::json;

json parse_object(const std::string& text, const char* what) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw FormatError(std::string(what) + ": " + e.what());
    }
    if (!j.is_object()) throw ContractError(std::string(what) + ": expected a JSON object");
    return j;
}

void reject_unknown_keys(const json& j, const std::set<std::string>& allowed, const char* what) {
    for (const auto& [key, _] : j.items()) {
        if (!allowed.count(key)) {
            throw ContractError(std::string(what) + ": unknown field \"" + key + "\"");
        }
    }
}

template <typename T>
void read_field(const json& j, const char* key, T& out, const char* what) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ContractError(std::string(what) + ": field \"" + key + "\": " + e.what());
    }
}

std::string fmt9(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
}

}  // namespace

// ---- config ------------------------------------------------------------------

void TrainConfig::validate() const {
    if (!task.empty() && task != "classification" && task != "segmentation") {
        throw ContractError("train config: bad task \"" + task + "\"");
    }
    if (!(initial_lr > 0.0)) throw ContractError("train config: initial_lr must be positive");
    if (!(decay_factor > 0.0 && decay_factor <= 1.0)) {
        throw ContractError("train config: decay_factor must be in (0, 1]");
    }
    if (decay_every_epochs < 1) throw ContractError("train config: decay_every_epochs must be >= 1");
    if (epochs < 1) throw ContractError("train config: epochs must be >= 1");
    if (batch_size < 1) throw ContractError("train config: batch_size must be >= 1");
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
        throw ContractError("train config: betas must be in [0, 1)");
    }
    if (!(epsilon > 0.0)) throw ContractError("train config: epsilon must be positive");
    if (!(dropout_max_ratio >= 0.0 && dropout_max_ratio < 1.0)) {
        throw ContractError("train config: dropout_max_ratio must be in [0, 1)");
    }
    if (!(shift_range >= 0.0)) throw ContractError("train config: shift_range must be >= 0");
    if (!(scale_lo > 0.0 && scale_lo <= scale_hi)) {
        throw ContractError("train config: need 0 < scale_lo <= scale_hi");
    }
}

TrainConfig train_config_from_json_text(const std::string& text) {
    const json j = parse_object(text, "train config");
    reject_unknown_keys(j,
                        {"task", "initial_lr", "decay_factor", "decay_every_epochs", "epochs",
                         "batch_size", "beta1", "beta2", "epsilon", "seed", "augment",
                         "dropout_max_ratio", "shift_range", "scale_lo", "scale_hi"},
                        "train config");
    TrainConfig cfg;
    read_field(j, "task", cfg.task, "train config");
    read_field(j, "initial_lr", cfg.initial_lr, "train config");
    read_field(j, "decay_factor", cfg.decay_factor, "train config");
    read_field(j, "decay_every_epochs", cfg.decay_every_epochs, "train config");
    read_field(j, "epochs", cfg.epochs, "train config");
    read_field(j, "batch_size", cfg.batch_size, "train config");
    read_field(j, "beta1", cfg.beta1, "train config");
    read_field(j, "beta2", cfg.beta2, "train config");
    read_field(j, "epsilon", cfg.epsilon, "train config");
    read_field(j, "seed", cfg.seed, "train config");
    read_field(j, "augment", cfg.augment, "train config");
    read_field(j, "dropout_max_ratio", cfg.dropout_max_ratio, "train config");
    read_field(j, "shift_range", cfg.shift_range, "train config");
    read_field(j, "scale_lo", cfg.scale_lo, "train config");
    read_field(j, "scale_hi", cfg.scale_hi, "train config");
    cfg.validate();
    return cfg;
}

std::string train_config_to_json_text(const TrainConfig& cfg) {
    json j{{"task", cfg.task},
           {"initial_lr", cfg.initial_lr},
           {"decay_factor", cfg.decay_factor},
           {"decay_every_epochs", cfg.decay_every_epochs},
           {"epochs", cfg.epochs},
           {"batch_size", cfg.batch_size},
           {"beta1", cfg.beta1},
           {"beta2", cfg.beta2},
           {"epsilon", cfg.epsilon},
           {"seed", cfg.seed},
           {"augment", cfg.augment},
           {"dropout_max_ratio", cfg.dropout_max_ratio},
           {"shift_range", cfg.shift_range},
           {"scale_lo", cfg.scale_lo},
           {"scale_hi", cfg.scale_hi}};
    return j.dump(2);
}

RunConfig run_config_from_json_text(const std::string& text) {
    const json j = parse_object(text, "run config");
    reject_unknown_keys(j, {"network", "train"}, "run config");
    if (!j.contains("network")) throw ContractError("run config: missing \"network\" section");
    RunConfig cfg;
    cfg.network = network_config_from_json_text(j.at("network").dump());
    if (j.contains("train")) cfg.train = train_config_from_json_text(j.at("train").dump());
    if (cfg.train.task.empty()) {
        cfg.train.task = cfg.network.task;
    } else if (cfg.train.task != cfg.network.task) {
        throw ContractError("run config: train task \"" + cfg.train.task +
                            "\" does not match network task \"" + cfg.network.task + "\"");
    }
    cfg.train.validate();
    return cfg;
}

std::string run_config_to_json_text(const RunConfig& cfg) {
    json j{{"network", json::parse(to_json_text(cfg.network))},
           {"train", json::parse(train_config_to_json_text(cfg.train))}};
    return j.dump(2);
}

// ---- optimizer -----------------------------------------------------------------

AdamState make_adam_state(const ParamMap& params) {
    AdamState state;
    for (const auto& [name, t] : params) {
        state.m.emplace(name, std::vector<double>(t.size(), 0.0));
        state.v.emplace(name, std::vector<double>(t.size(), 0.0));
    }
    return state;
}

void adam_step(ParamMap& params, AdamState& state, double lr, const TrainConfig& cfg) {
    state.t += 1;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
    for (auto& [name, p] : params) {
        auto mi = state.m.find(name);
        auto vi = state.v.find(name);
        if (mi == state.m.end() || vi == state.v.end()) {
            throw ContractError("adam_step: no state for parameter \"" + name + "\"");
        }
        std::vector<double>& m = mi->second;
        std::vector<double>& v = vi->second;
        if (m.size() != p.size() || v.size() != p.size()) {
            throw ContractError("adam_step: state shape mismatch for \"" + name + "\"");
        }
        static const std::vector<double> kNoGrad;
        const std::vector<double>& g = p.has_grad() ? p.grad() : kNoGrad;
        std::vector<double>& theta = p.values_mut();
        for (std::size_t i = 0; i < theta.size(); ++i) {
            const double gi = g.empty() ? 0.0 : g[i];
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * gi;
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * gi * gi;
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            theta[i] -= lr * mhat / (std::sqrt(vhat) + cfg.epsilon);
        }
    }
}

double lr_at_epoch(const TrainConfig& cfg, std::size_t epoch) {
    const auto steps = static_cast<double>(epoch / cfg.decay_every_epochs);
    return cfg.initial_lr * std::pow(cfg.decay_factor, steps);
}

// ---- augmentation -----------------------------------------------------------------

PointCloud augment(const PointCloud& pc, const TrainConfig& cfg, Rng& rng) {
    PointCloud out = pc;
    if (!cfg.augment) return out;
    if (cfg.dropout_max_ratio > 0.0) {
        const double ratio = rng.uniform() * cfg.dropout_max_ratio;
        for (std::size_t i = 0; i < out.n; ++i) {
            if (rng.uniform() < ratio) {
                for (std::size_t d = 0; d < 3; ++d) out.coords[3 * i + d] = pc.coords[d];
                for (std::size_t d = 0; d < out.a; ++d) out.attrs[out.a * i + d] = pc.attrs[d];
                if (!out.point_labels.empty()) out.point_labels[i] = pc.point_labels[0];
            }
        }
    }
    if (cfg.shift_range > 0.0) {
        const double sx = rng.uniform(-cfg.shift_range, cfg.shift_range);
        const double sy = rng.uniform(-cfg.shift_range, cfg.shift_range);
        const double sz = rng.uniform(-cfg.shift_range, cfg.shift_range);
        for (std::size_t i = 0; i < out.n; ++i) {
            out.coords[3 * i] += sx;
            out.coords[3 * i + 1] += sy;
            out.coords[3 * i + 2] += sz;
        }
    }
    if (!(cfg.scale_lo == 1.0 && cfg.scale_hi == 1.0)) {
        const double s = rng.uniform(cfg.scale_lo, cfg.scale_hi);
        for (double& c : out.coords) c *= s;
    }
    return out;
}

// ---- metrics --------------------------------------------------------------------

ClassificationMetrics classification_metrics(const std::vector<int>& pred,
                                             const std::vector<int>& gt,
                                             std::size_t num_classes) {
    if (pred.empty() || pred.size() != gt.size()) {
        throw ContractError("classification metrics: need equal, non-empty label vectors");
    }
    std::vector<std::size_t> support(num_classes, 0), correct(num_classes, 0);
    std::size_t right = 0;
    for (std::size_t i = 0; i < gt.size(); ++i) {
        if (gt[i] < 0 || static_cast<std::size_t>(gt[i]) >= num_classes || pred[i] < 0 ||
            static_cast<std::size_t>(pred[i]) >= num_classes) {
            throw ContractError("classification metrics: label outside [0, num_classes)");
        }
        support[gt[i]] += 1;
        if (pred[i] == gt[i]) {
            correct[gt[i]] += 1;
            right += 1;
        }
    }
    ClassificationMetrics out;
    out.oa = static_cast<double>(right) / static_cast<double>(gt.size());
    double recall_sum = 0.0;
    std::size_t seen = 0;
    for (std::size_t c = 0; c < num_classes; ++c) {
        if (support[c] == 0) continue;
        recall_sum += static_cast<double>(correct[c]) / static_cast<double>(support[c]);
        seen += 1;
    }
    out.acc = seen == 0 ? 0.0 : recall_sum / static_cast<double>(seen);
    return out;
}

double shape_iou(const std::vector<int>& pred, const std::vector<int>& gt,
                 const std::vector<int>& part_set) {
    if (pred.size() != gt.size() || gt.empty()) {
        throw ContractError("shape iou: need equal, non-empty label vectors");
    }
    if (part_set.empty()) throw ContractError("shape iou: empty part set");
    const auto in_set = [&part_set](int l) {
        return std::find(part_set.begin(), part_set.end(), l) != part_set.end();
    };
    for (std::size_t i = 0; i < gt.size(); ++i) {
        if (!in_set(gt[i]) || !in_set(pred[i])) {
            throw ContractError("shape iou: label outside the category's part set");
        }
    }
    double sum = 0.0;
    for (int part : part_set) {
        std::size_t inter = 0, uni = 0;
        for (std::size_t i = 0; i < gt.size(); ++i) {
            const bool p = pred[i] == part, g = gt[i] == part;
            inter += p && g;
            uni += p || g;
        }
        sum += uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
    }
    return sum / static_cast<double>(part_set.size());
}

namespace {

// Argmax over the category's own columns, smallest part id on ties.
int restricted_argmax(const Tensor& logits, std::size_t row, const std::vector<int>& part_set) {
    std::vector<int> parts = part_set;
    std::sort(parts.begin(), parts.end());
    int best = parts.front();
    double best_v = logits.values()[row * logits.cols() + static_cast<std::size_t>(best)];
    for (int p : parts) {
        const double v = logits.values()[row * logits.cols() + static_cast<std::size_t>(p)];
        if (v > best_v) {
            best_v = v;
            best = p;
        }
    }
    return best;
}

void check_eval_inputs(const NetworkConfig& net, const Dataset& ds, const char* task) {
    if (ds.samples.empty()) throw ContractError("evaluate: empty dataset");
    if (net.task != task || ds.task != task) {
        throw ContractError(std::string("evaluate: expected ") + task + " network and dataset");
    }
}

}  // namespace

EvalResult evaluate_classification(const NetworkConfig& net, const ParamMap& params,
                                   const Dataset& ds) {
    check_eval_inputs(net, ds, "classification");
    if (ds.class_names.size() != static_cast<std::size_t>(net.num_classes)) {
        throw ContractError("evaluate: dataset has " + std::to_string(ds.class_names.size()) +
                            " classes but the network expects " + std::to_string(net.num_classes));
    }
    NoTapeScope inference;
    EvalResult out;
    std::vector<int> preds, gts;
    for (const PointCloud& pc : ds.samples) {
        const Tensor logits = classify_forward(pc, net, params);
        out.loss += cross_entropy(logits, {*pc.cloud_label}, net).values()[0];
        preds.push_back(predict(logits)[0]);
        gts.push_back(*pc.cloud_label);
    }
    out.loss /= static_cast<double>(ds.samples.size());
    const ClassificationMetrics m =
        classification_metrics(preds, gts, static_cast<std::size_t>(net.num_classes));
    out.oa = m.oa;
    out.acc = m.acc;
    return out;
}

EvalResult evaluate_segmentation(const NetworkConfig& net, const ParamMap& params,
                                 const Dataset& ds) {
    check_eval_inputs(net, ds, "segmentation");
    if (ds.num_classes() != static_cast<std::size_t>(net.num_classes)) {
        throw ContractError("evaluate: dataset has " + std::to_string(ds.num_classes()) +
                            " part labels but the network expects " +
                            std::to_string(net.num_classes));
    }
    NoTapeScope inference;
    EvalResult out;
    const std::size_t parts_total = static_cast<std::size_t>(net.num_classes);
    std::vector<std::size_t> support(parts_total, 0), recalled(parts_total, 0);
    std::size_t right = 0, total = 0;
    std::map<std::string, std::vector<double>> per_category;
    double iou_sum = 0.0;
    for (const PointCloud& pc : ds.samples) {
        const std::string& category = ds.class_names[*pc.cloud_label];
        const std::vector<int>& parts = ds.part_sets.at(category);
        const Tensor logits = segment_forward(pc, net, params);
        out.loss += cross_entropy(logits, pc.point_labels, net).values()[0];
        std::vector<int> pred(pc.n);
        for (std::size_t i = 0; i < pc.n; ++i) {
            pred[i] = restricted_argmax(logits, i, parts);
            const int g = pc.point_labels[i];
            support[g] += 1;
            if (pred[i] == g) {
                recalled[g] += 1;
                right += 1;
            }
        }
        total += pc.n;
        const double iou = shape_iou(pred, pc.point_labels, parts);
        iou_sum += iou;
        per_category[category].push_back(iou);
    }
    out.loss /= static_cast<double>(ds.samples.size());
    out.oa = static_cast<double>(right) / static_cast<double>(total);
    double recall_sum = 0.0;
    std::size_t seen = 0;
    for (std::size_t p = 0; p < parts_total; ++p) {
        if (support[p] == 0) continue;
        recall_sum += static_cast<double>(recalled[p]) / static_cast<double>(support[p]);
        seen += 1;
    }
    out.acc = seen == 0 ? 0.0 : recall_sum / static_cast<double>(seen);
    out.instance_miou = iou_sum / static_cast<double>(ds.samples.size());
    for (const auto& [category, ious] : per_category) {
        out.category_iou[category] =
            std::accumulate(ious.begin(), ious.end(), 0.0) / static_cast<double>(ious.size());
    }
    return out;
}

// ---- metrics CSV --------------------------------------------------------------------

std::string metrics_csv(const std::vector<MetricsRow>& rows) {
    std::string out = "epoch,split,loss,oa,acc,miou,lr\n";
    for (const MetricsRow& r : rows) {
        out += std::to_string(r.epoch);
        out += ',';
        out += r.split;
        out += ',';
        out += fmt9(r.loss);
        out += ',';
        if (r.oa) out += fmt9(*r.oa);
        out += ',';
        if (r.acc) out += fmt9(*r.acc);
        out += ',';
        if (r.miou) out += fmt9(*r.miou);
        out += ',';
        out += fmt9(r.lr);
        out += '\n';
    }
    return out;
}

void write_metrics_csv(const std::string& path, const std::vector<MetricsRow>& rows) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw FormatError("cannot open \"" + path + "\" for writing");
    out << metrics_csv(rows);
    if (!out) throw FormatError("write failed for \"" + path + "\"");
}

// ---- training loop ---------------------------------------------------------------------

TrainRngs make_train_rngs(std::uint64_t seed) {
    return TrainRngs{Rng::stream(seed, {"shuffle"}), Rng::stream(seed, {"augment"}),
                     Rng::stream(seed, {"dropout"}), Rng::stream(seed, {"fps"})};
}

EpochStats train_epoch(const NetworkConfig& net, ParamMap& params, AdamState& state,
                       const Dataset& train_ds, const TrainConfig& cfg, std::size_t epoch,
                       TrainRngs& rngs) {
    if (train_ds.samples.empty()) throw ContractError("train_epoch: empty dataset");
    const bool seg = net.is_segmentation();
    const double lr = lr_at_epoch(cfg, epoch);
    std::vector<std::size_t> order(train_ds.samples.size());
    std::iota(order.begin(), order.end(), 0);
    rngs.shuffle.shuffle(order);

    EpochStats stats;
    std::size_t right = 0, total = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
        const std::size_t batch = std::min(cfg.batch_size, order.size() - start);
        for (auto& [name, p] : params) p.zero_grad();
        for (std::size_t b = 0; b < batch; ++b) {
            const PointCloud& raw = train_ds.samples[order[start + b]];
            const PointCloud pc = augment(raw, cfg, rngs.augment);
            const std::vector<int> targets =
                seg ? pc.point_labels : std::vector<int>{*pc.cloud_label};
            Tape tape;
            Rng* fps = net.fps_random_start ? &rngs.fps : nullptr;
            const Tensor logits = seg
                                      ? segment_forward(pc, net, params, &rngs.dropout, fps)
                                      : classify_forward(pc, net, params, &rngs.dropout, fps);
            const Tensor loss = cross_entropy(logits, targets, net);
            backward(scale(loss, 1.0 / static_cast<double>(batch)));
            stats.loss += loss.values()[0];
            const std::vector<int> preds = predict(logits);
            for (std::size_t i = 0; i < targets.size(); ++i) right += preds[i] == targets[i];
            total += targets.size();
        }
        adam_step(params, state, lr, cfg);
    }
    stats.loss /= static_cast<double>(order.size());
    stats.accuracy = static_cast<double>(right) / static_cast<double>(total);
    return stats;
}

TrainOutcome run_training(const NetworkConfig& net, const TrainConfig& cfg,
                          const Dataset& train_ds, const Dataset& test_ds,
                          std::ostream* log) {
    net.validate();
    cfg.validate();
    if (!cfg.task.empty() && cfg.task != net.task) {
        throw ContractError("run_training: train task does not match network task");
    }
    const bool seg = net.is_segmentation();
    ParamMap params = init_params(net, cfg.seed);
    AdamState state = make_adam_state(params);
    TrainRngs rngs = make_train_rngs(cfg.seed);

    TrainOutcome out;
    out.best_metric = -1.0;
    out.best_params = clone_params(params);
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        const double lr = lr_at_epoch(cfg, epoch);
        const EpochStats stats = train_epoch(net, params, state, train_ds, cfg, epoch, rngs);
        const EvalResult eval = seg ? evaluate_segmentation(net, params, test_ds)
                                    : evaluate_classification(net, params, test_ds);
        out.history.push_back(
            {epoch, "train", stats.loss, stats.accuracy, std::nullopt, std::nullopt, lr});
        out.history.push_back({epoch, "test", eval.loss, eval.oa, eval.acc, eval.instance_miou, lr});
        const double metric = seg ? *eval.instance_miou : eval.oa;
        if (metric > out.best_metric) {
            out.best_metric = metric;
            out.best_epoch = epoch;
            out.best_params = clone_params(params);
        }
        if (log) {
            *log << "epoch " << epoch << " lr " << fmt9(lr) << " train-loss " << fmt9(stats.loss)
                 << " test-loss " << fmt9(eval.loss) << " test-oa " << fmt9(eval.oa);
            if (seg) *log << " test-miou " << fmt9(*eval.instance_miou);
            *log << "\n";
        }
    }
    out.final_params = clone_params(params);
    return out;
}

}  // namespace clcsca
