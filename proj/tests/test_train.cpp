#include "clcsca/train.hpp"

#include <cmath>
#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

#include "clcsca/data.hpp"
#include "clcsca/model.hpp"
#include "clcsca/oracles.hpp"
#include "clcsca/rng.hpp"
#include "clcsca/tensor.hpp"
#include "doctest.h"

using namespace clcsca;

namespace {

NetworkConfig small_config(const std::string& task) {
    NetworkConfig cfg;
    cfg.task = task;
    cfg.num_classes = task == "segmentation" ? 7 : 4;
    cfg.input_points = 64;
    cfg.paths[0].resolution = 16;
    cfg.paths[0].layers = {{1.1, 4, {3, 8}}, {1.5, 4, {16, 8}}, {1.9, 4, {16, 8}}};
    cfg.paths[1].resolution = 8;
    cfg.paths[1].layers = {{1.3, 4, {3, 8}}, {1.6, 4, {16, 8}}, {2.0, 4, {16, 8}}};
    cfg.paths[2].resolution = 4;
    cfg.paths[2].layers = {{1.7, 4, {3, 8}}, {1.9, 4, {16, 8}}, {2.1, 4, {16, 8}}};
    cfg.clca_channels = 8;
    cfg.csca_channels = 8;
    cfg.upsample_mlp = task == "segmentation" ? std::vector<std::size_t>{11, 8}
                                              : std::vector<std::size_t>{8, 8};
    cfg.head = {8};
    cfg.dropout = 0.0;
    return cfg;
}

PointCloud cloud_from(std::vector<double> coords) {
    PointCloud pc;
    pc.n = coords.size() / 3;
    pc.coords = std::move(coords);
    return pc;
}

// Accumulates d(sum(w * c))/dw = c into w's gradient.
void push_gradient(Tensor& w, const Tensor& c) {
    Tape tape;
    backward(sum_all(mul(w, c)));
}

}  // namespace

TEST_CASE("train config json round-trip and whitelist") {
    TrainConfig cfg;
    cfg.task = "segmentation";
    cfg.initial_lr = 0.0005;
    cfg.decay_factor = 0.5;
    cfg.epochs = 7;
    cfg.batch_size = 8;
    cfg.seed = 99;
    cfg.augment = false;
    const std::string text = train_config_to_json_text(cfg);
    const TrainConfig back = train_config_from_json_text(text);
    CHECK(back.task == cfg.task);
    CHECK(back.initial_lr == cfg.initial_lr);
    CHECK(back.decay_factor == cfg.decay_factor);
    CHECK(back.epochs == cfg.epochs);
    CHECK(back.batch_size == cfg.batch_size);
    CHECK(back.seed == cfg.seed);
    CHECK(back.augment == cfg.augment);
    CHECK(train_config_to_json_text(back) == text);

    CHECK_THROWS_AS(train_config_from_json_text("{\"learning_rate\": 0.1}"), ContractError);
    CHECK_THROWS_AS(train_config_from_json_text("{{{"), FormatError);
}

TEST_CASE("train config validation") {
    TrainConfig cfg;
    CHECK_NOTHROW(cfg.validate());
    TrainConfig lr = cfg;
    lr.initial_lr = 0.0;
    CHECK_THROWS_AS(lr.validate(), ContractError);
    TrainConfig batch = cfg;
    batch.batch_size = 0;
    CHECK_THROWS_AS(batch.validate(), ContractError);
    TrainConfig scale = cfg;
    scale.scale_lo = 1.5;
    scale.scale_hi = 1.2;
    CHECK_THROWS_AS(scale.validate(), ContractError);
    TrainConfig drop = cfg;
    drop.dropout_max_ratio = 1.0;
    CHECK_THROWS_AS(drop.validate(), ContractError);
}

TEST_CASE("run config binds network and train sections") {
    const NetworkConfig net = small_config("classification");
    RunConfig rc;
    rc.network = net;
    rc.train.task = "classification";
    const std::string text = run_config_to_json_text(rc);
    const RunConfig back = run_config_from_json_text(text);
    CHECK(back.network.task == "classification");
    CHECK(back.train.task == "classification");

    // The train task defaults to the network task when omitted.
    const RunConfig bare = run_config_from_json_text("{\"network\": " + to_json_text(net) + "}");
    CHECK(bare.train.task == "classification");

    // And must match it when present.
    std::string clash = "{\"network\": " + to_json_text(net) +
                        ", \"train\": {\"task\": \"segmentation\"}}";
    CHECK_THROWS_AS(run_config_from_json_text(clash), ContractError);
    CHECK_THROWS_AS(run_config_from_json_text("{}"), ContractError);  // network required
}

TEST_CASE("adam follows the constant-gradient recurrence") {
    // With a constant gradient g, bias-corrected moments give mhat = g and
    // vhat = g^2 at every step, so each update is -lr * g / (|g| + eps).
    TrainConfig cfg;
    ParamMap params;
    params.emplace("w", Tensor({2, 2}, {1.0, -2.0, 0.5, 3.0}, true));
    const Tensor g({2, 2}, {0.3, -0.7, 0.0, 2.5});
    AdamState state = make_adam_state(params);

    std::vector<double> want = {1.0, -2.0, 0.5, 3.0};
    for (int step = 0; step < 3; ++step) {
        push_gradient(params.at("w"), g);
        adam_step(params, state, 0.01, cfg);
        params.at("w").zero_grad();
        for (std::size_t i = 0; i < 4; ++i) {
            const double gi = g.values()[i];
            if (gi != 0.0) want[i] -= 0.01 * gi / (std::abs(gi) + cfg.epsilon);
            CHECK(params.at("w").values()[i] == doctest::Approx(want[i]).epsilon(1e-12));
        }
    }
    CHECK(state.t == 3);
}

TEST_CASE("adam without gradients is a no-op that still advances time") {
    TrainConfig cfg;
    ParamMap params;
    params.emplace("w", Tensor({3}, {1.0, 2.0, 3.0}, true));
    AdamState state = make_adam_state(params);
    adam_step(params, state, 0.1, cfg);
    CHECK(params.at("w").values() == std::vector<double>{1.0, 2.0, 3.0});
    CHECK(state.t == 1);
}

TEST_CASE("adam state must cover the parameters") {
    TrainConfig cfg;
    ParamMap params;
    params.emplace("w", Tensor({2}, {1.0, 2.0}, true));
    AdamState state = make_adam_state(params);
    params.emplace("extra", Tensor({2}, {0.0, 0.0}, true));
    CHECK_THROWS_AS(adam_step(params, state, 0.1, cfg), ContractError);
}

TEST_CASE("learning rate decays stepwise") {
    TrainConfig cfg;  // 0.001, factor 0.7, every 20
    CHECK(lr_at_epoch(cfg, 0) == doctest::Approx(0.001).epsilon(1e-12));
    CHECK(lr_at_epoch(cfg, 19) == doctest::Approx(0.001).epsilon(1e-12));
    CHECK(lr_at_epoch(cfg, 20) == doctest::Approx(0.0007).epsilon(1e-12));
    CHECK(lr_at_epoch(cfg, 39) == doctest::Approx(0.0007).epsilon(1e-12));
    CHECK(lr_at_epoch(cfg, 40) == doctest::Approx(0.00049).epsilon(1e-12));

    TrainConfig seg;
    seg.initial_lr = 0.0005;
    seg.decay_factor = 0.5;
    CHECK(lr_at_epoch(seg, 25) == doctest::Approx(0.00025).epsilon(1e-12));
    CHECK(lr_at_epoch(seg, 40) == doctest::Approx(0.000125).epsilon(1e-12));

    // Piecewise-constant: within a window the rate never changes.
    for (std::size_t e = 0; e < 100; ++e)
        CHECK(lr_at_epoch(cfg, e) ==
              doctest::Approx(0.001 * std::pow(0.7, double(e / 20))).epsilon(1e-12));
}

TEST_CASE("augmentation at the identity settings is a no-op that draws nothing") {
    TrainConfig cfg;
    cfg.augment = true;
    cfg.dropout_max_ratio = 0.0;
    cfg.shift_range = 0.0;
    cfg.scale_lo = 1.0;
    cfg.scale_hi = 1.0;

    Rng data_rng(5);
    const PointCloud pc = gen_part_shape(PartShapeKind::table, 64, data_rng);
    Rng rng = Rng::stream(3, {"augment"});
    const PointCloud out = augment(pc, cfg, rng);
    CHECK(out.coords == pc.coords);
    CHECK(out.point_labels == pc.point_labels);

    // Identity stages must not consume randomness.
    Rng fresh = Rng::stream(3, {"augment"});
    CHECK(rng.next_u64() == fresh.next_u64());

    // The master switch also short-circuits everything.
    TrainConfig off;
    off.augment = false;
    Rng rng2 = Rng::stream(4, {"augment"});
    const PointCloud out2 = augment(pc, off, rng2);
    CHECK(out2.coords == pc.coords);
}

TEST_CASE("point dropout collapses dropped points onto point zero") {
    TrainConfig cfg;
    cfg.augment = true;
    cfg.dropout_max_ratio = 0.875;
    cfg.shift_range = 0.0;
    cfg.scale_lo = 1.0;
    cfg.scale_hi = 1.0;

    Rng data_rng(6);
    const PointCloud pc = gen_part_shape(PartShapeKind::mug, 64, data_rng);
    std::size_t dropped_total = 0;
    for (std::uint64_t s = 0; s < 16; ++s) {
        Rng rng(s);
        const PointCloud out = augment(pc, cfg, rng);
        REQUIRE(out.n == pc.n);
        for (std::size_t i = 0; i < out.n; ++i) {
            const bool kept = std::equal(out.pt(i), out.pt(i) + 3, pc.pt(i)) &&
                              out.point_labels[i] == pc.point_labels[i];
            const bool dropped = std::equal(out.pt(i), out.pt(i) + 3, pc.pt(0)) &&
                                 out.point_labels[i] == pc.point_labels[0];
            CHECK((kept || dropped));
            if (!kept) ++dropped_total;
        }
    }
    CHECK(dropped_total > 0);  // the stage actually fires across seeds
}

TEST_CASE("shift moves every point by one shared offset") {
    TrainConfig cfg;
    cfg.augment = true;
    cfg.dropout_max_ratio = 0.0;
    cfg.shift_range = 0.1;
    cfg.scale_lo = 1.0;
    cfg.scale_hi = 1.0;

    Rng data_rng(7);
    const PointCloud pc = gen_shape(ShapeKind::torus, 64, 0.01, data_rng);
    Rng rng(9);
    const PointCloud out = augment(pc, cfg, rng);
    const double dx = out.coords[0] - pc.coords[0];
    const double dy = out.coords[1] - pc.coords[1];
    const double dz = out.coords[2] - pc.coords[2];
    CHECK(std::abs(dx) <= 0.1);
    CHECK(std::abs(dy) <= 0.1);
    CHECK(std::abs(dz) <= 0.1);
    for (std::size_t i = 0; i < pc.n; ++i) {
        CHECK(out.pt(i)[0] - pc.pt(i)[0] == doctest::Approx(dx).epsilon(1e-12));
        CHECK(out.pt(i)[1] - pc.pt(i)[1] == doctest::Approx(dy).epsilon(1e-12));
        CHECK(out.pt(i)[2] - pc.pt(i)[2] == doctest::Approx(dz).epsilon(1e-12));
    }
}

TEST_CASE("scale multiplies every coordinate by one factor in range") {
    TrainConfig cfg;
    cfg.augment = true;
    cfg.dropout_max_ratio = 0.0;
    cfg.shift_range = 0.0;
    cfg.scale_lo = 0.8;
    cfg.scale_hi = 1.25;

    Rng data_rng(8);
    const PointCloud pc = gen_shape(ShapeKind::cube, 64, 0.01, data_rng);
    Rng rng(10);
    const PointCloud out = augment(pc, cfg, rng);
    const double s = out.coords[0] / pc.coords[0];
    CHECK(s >= 0.8);
    CHECK(s <= 1.25);
    for (std::size_t i = 0; i < pc.coords.size(); ++i)
        CHECK(out.coords[i] == doctest::Approx(pc.coords[i] * s).epsilon(1e-12));
}

TEST_CASE("classification metrics on a hand-worked majority case") {
    // Ten samples, all predicted class 0; nine actually are, one is class 1.
    const std::vector<int> pred(10, 0);
    std::vector<int> gt(10, 0);
    gt[7] = 1;
    const ClassificationMetrics m = classification_metrics(pred, gt, 2);
    CHECK(m.oa == doctest::Approx(0.9).epsilon(1e-12));
    CHECK(m.acc == doctest::Approx(0.5).epsilon(1e-12));  // recalls 1.0 and 0.0

    CHECK_THROWS_AS(classification_metrics({}, {}, 2), ContractError);
    CHECK_THROWS_AS(classification_metrics({0}, {0, 1}, 2), ContractError);
    CHECK_THROWS_AS(classification_metrics({5}, {0}, 2), ContractError);
}

TEST_CASE("classification metrics match the confusion-matrix oracle") {
    for (int trial = 0; trial < 30; ++trial) {
        Rng rng(900 + trial);
        const std::size_t n = 1 + rng.below(40);
        const std::size_t c = 2 + rng.below(5);
        std::vector<int> pred(n), gt(n);
        for (std::size_t i = 0; i < n; ++i) {
            pred[i] = static_cast<int>(rng.below(c));
            gt[i] = static_cast<int>(rng.below(c));
        }
        const ClassificationMetrics a = classification_metrics(pred, gt, c);
        const ClassificationMetrics b = oracle::classification_metrics_brute(pred, gt, c);
        CHECK(a.oa == doctest::Approx(b.oa).epsilon(1e-12));
        CHECK(a.acc == doctest::Approx(b.acc).epsilon(1e-12));
    }
}

TEST_CASE("shape iou hand cases") {
    // Part 2: intersection {0}, union {0,1} -> 1/2. Part 3: intersection {2},
    // union {1,2} -> 1/2. Mean 0.5.
    CHECK(shape_iou({2, 3, 3}, {2, 2, 3}, {2, 3}) == doctest::Approx(0.5).epsilon(1e-12));
    // Perfect prediction -> 1 (including the absent part counting as 1).
    CHECK(shape_iou({2, 2}, {2, 2}, {2, 3}) == doctest::Approx(1.0).epsilon(1e-12));
    // Completely swapped -> 0 on both parts.
    CHECK(shape_iou({3, 3}, {2, 2}, {2, 3}) == doctest::Approx(0.0).epsilon(1e-12));
    // Labels outside the category's part set are contract errors.
    CHECK_THROWS_AS(shape_iou({5}, {2}, {2, 3}), ContractError);
    CHECK_THROWS_AS(shape_iou({2}, {5}, {2, 3}), ContractError);
}

TEST_CASE("shape iou matches the set-arithmetic oracle") {
    const std::vector<int> part_set = {1, 4, 6};
    for (int trial = 0; trial < 30; ++trial) {
        Rng rng(800 + trial);
        const std::size_t n = 1 + rng.below(30);
        std::vector<int> pred(n), gt(n);
        for (std::size_t i = 0; i < n; ++i) {
            pred[i] = part_set[rng.below(3)];
            gt[i] = part_set[rng.below(3)];
        }
        CHECK(shape_iou(pred, gt, part_set) ==
              doctest::Approx(oracle::shape_iou_brute(pred, gt, part_set)).epsilon(1e-12));
    }
}

TEST_CASE("metrics csv formatting") {
    std::vector<MetricsRow> rows(2);
    rows[0].epoch = 1;
    rows[0].split = "train";
    rows[0].loss = 1.25;
    rows[0].oa = 0.5;
    rows[0].acc = 0.25;
    rows[0].lr = 0.001;
    rows[1].epoch = 1;
    rows[1].split = "test";
    rows[1].loss = 0.125;
    rows[1].oa = 1.0 / 3.0;
    rows[1].acc = 0.75;
    rows[1].miou = 0.5;
    rows[1].lr = 0.0007;
    CHECK(metrics_csv(rows) ==
          "epoch,split,loss,oa,acc,miou,lr\n"
          "1,train,1.25,0.5,0.25,,0.001\n"
          "1,test,0.125,0.333333333,0.75,0.5,0.0007\n");
}

TEST_CASE("evaluation rejects mismatched tasks") {
    const NetworkConfig net = small_config("classification");
    const ModelParams params = init_params(net, 0);
    const DatasetPair seg = make_dataset("segmentation", 1, 1, 64, 0.0, 0);
    CHECK_THROWS_AS(evaluate_classification(net, params, seg.train), ContractError);
}

TEST_CASE("evaluation reports coherent classification numbers") {
    const NetworkConfig net = small_config("classification");
    const ModelParams params = init_params(net, 0);
    const DatasetPair ds = make_dataset("classification", 2, 2, 64, 0.02, 1);
    const EvalResult r = evaluate_classification(net, params, ds.test);
    CHECK(r.loss > 0.0);
    CHECK(r.oa >= 0.0);
    CHECK(r.oa <= 1.0);
    CHECK(r.acc >= 0.0);
    CHECK(r.acc <= 1.0);
    CHECK(!r.instance_miou.has_value());
}

TEST_CASE("evaluation reports coherent segmentation numbers") {
    const NetworkConfig net = small_config("segmentation");
    const ModelParams params = init_params(net, 0);
    const DatasetPair ds = make_dataset("segmentation", 1, 1, 64, 0.0, 2);
    const EvalResult r = evaluate_segmentation(net, params, ds.test);
    CHECK(r.loss > 0.0);
    REQUIRE(r.instance_miou.has_value());
    CHECK(*r.instance_miou >= 0.0);
    CHECK(*r.instance_miou <= 1.0);
    CHECK(r.category_iou.size() == 3);
}

TEST_CASE("a tiny run overfits two easy classes deterministically") {
    NetworkConfig net = small_config("classification");
    net.num_classes = 2;

    TrainConfig cfg;
    cfg.task = "classification";
    cfg.initial_lr = 0.003;
    cfg.epochs = 30;
    cfg.batch_size = 4;
    cfg.seed = 1;
    cfg.augment = false;

    const DatasetPair ds =
        make_dataset("classification", 6, 3, 64, 0.01, 5, {"sphere", "torus"});

    std::ostringstream log;
    const TrainOutcome out = run_training(net, cfg, ds.train, ds.test, &log);
    REQUIRE(out.history.size() == 2 * cfg.epochs);  // train + test row per epoch

    double first_train = 0.0, last_train = 0.0;
    for (const MetricsRow& row : out.history) {
        if (row.split != "train") continue;
        if (row.epoch == 0) first_train = row.loss;
        last_train = row.loss;
    }
    CHECK(last_train <= first_train);
    CHECK(last_train <= 0.5 * first_train);  // actually learned, not just wobbled

    // Best-epoch bookkeeping matches the history (epochs are zero-based).
    double best_oa = 0.0;
    for (const MetricsRow& row : out.history)
        if (row.split == "test" && row.oa) best_oa = std::max(best_oa, *row.oa);
    CHECK(out.best_metric == doctest::Approx(best_oa).epsilon(1e-12));
    CHECK(out.best_epoch < cfg.epochs);
    CHECK_NOTHROW(validate_params(net, out.best_params));
    CHECK_NOTHROW(validate_params(net, out.final_params));

    // Identical seeds reproduce the run bit for bit; the log names each epoch.
    const TrainOutcome again = run_training(net, cfg, ds.train, ds.test, nullptr);
    CHECK(metrics_csv(out.history) == metrics_csv(again.history));
    CHECK(log.str().find("epoch 0 ") != std::string::npos);
}
