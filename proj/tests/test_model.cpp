#include "clcsca/model.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "clcsca/data.hpp"
#include "clcsca/rng.hpp"
#include "doctest.h"

using namespace clcsca;

namespace {

// Smallest valid network that exercises every block. Radii sit above each
// path's nearest-neighbor spacing (~4/sqrt(m) on the unit sphere) so the
// grouped layers see real neighbors.
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

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

struct TempFile {
    std::string path;
    explicit TempFile(const std::string& name) : path("/tmp/clcsca_test_" + name) {}
    ~TempFile() { std::remove(path.c_str()); }
};

}  // namespace

TEST_CASE("config json round-trip preserves every field") {
    NetworkConfig cfg = small_config("segmentation");
    cfg.dropout = 0.25;
    cfg.extra_attrs = 0;
    cfg.ablation = Ablation::clca;
    cfg.scale_cross_attention = false;
    cfg.fps_random_start = true;

    const std::string text = to_json_text(cfg);
    const NetworkConfig back = network_config_from_json_text(text);
    CHECK(back.task == cfg.task);
    CHECK(back.num_classes == cfg.num_classes);
    CHECK(back.input_points == cfg.input_points);
    for (int p = 0; p < 3; ++p) {
        CHECK(back.paths[p].resolution == cfg.paths[p].resolution);
        REQUIRE(back.paths[p].layers.size() == 3);
        for (int l = 0; l < 3; ++l) {
            CHECK(back.paths[p].layers[l].radius == cfg.paths[p].layers[l].radius);
            CHECK(back.paths[p].layers[l].k == cfg.paths[p].layers[l].k);
            CHECK(back.paths[p].layers[l].mlp == cfg.paths[p].layers[l].mlp);
        }
    }
    CHECK(back.clca_channels == cfg.clca_channels);
    CHECK(back.csca_channels == cfg.csca_channels);
    CHECK(back.upsample_mlp == cfg.upsample_mlp);
    CHECK(back.head == cfg.head);
    CHECK(back.dropout == cfg.dropout);
    CHECK(back.ablation == cfg.ablation);
    CHECK(back.scale_cross_attention == cfg.scale_cross_attention);
    CHECK(back.fps_random_start == cfg.fps_random_start);
    CHECK(to_json_text(back) == text);
}

TEST_CASE("config json rejects unknown keys and malformed text") {
    CHECK_THROWS_AS(network_config_from_json_text("{\"taskk\": \"classification\"}"),
                    ContractError);
    CHECK_THROWS_AS(network_config_from_json_text("not json at all"), FormatError);
}

TEST_CASE("config validation rejects structural mistakes") {
    CHECK_NOTHROW(small_config("classification").validate());

    NetworkConfig bad_task = small_config("classification");
    bad_task.task = "regression";
    CHECK_THROWS_AS(bad_task.validate(), ContractError);

    NetworkConfig one_class = small_config("classification");
    one_class.num_classes = 1;
    CHECK_THROWS_AS(one_class.validate(), ContractError);

    NetworkConfig order = small_config("classification");
    std::swap(order.paths[0], order.paths[2]);  // resolutions must decrease
    CHECK_THROWS_AS(order.validate(), ContractError);

    NetworkConfig up = small_config("classification");
    up.upsample_mlp.front() = 5;  // must equal clca_channels (+3 for segmentation)
    CHECK_THROWS_AS(up.validate(), ContractError);

    NetworkConfig seg_up = small_config("segmentation");
    seg_up.upsample_mlp.front() = 8;  // segmentation appends coordinates: wants 11
    CHECK_THROWS_AS(seg_up.validate(), ContractError);

    NetworkConfig drop = small_config("classification");
    drop.dropout = 1.0;
    CHECK_THROWS_AS(drop.validate(), ContractError);

    NetworkConfig clca_w = small_config("classification");
    clca_w.clca_channels = 6;  // attention widths must be multiples of 4
    CHECK_THROWS_AS(clca_w.validate(), ContractError);
}

TEST_CASE("ablation names round-trip") {
    for (Ablation a : {Ablation::baseline, Ablation::clca, Ablation::csca, Ablation::full})
        CHECK(ablation_from_string(to_string(a)) == a);
    CHECK_THROWS_AS(ablation_from_string("none"), ContractError);
}

TEST_CASE("parameter schema matches init exactly") {
    const NetworkConfig cfg = small_config("classification");
    const auto schema = param_schema(cfg);
    const ModelParams params = init_params(cfg, 3);
    REQUIRE(schema.size() == params.size());
    for (const ParamSpec& spec : schema) {
        auto it = params.find(spec.name);
        REQUIRE_MESSAGE(it != params.end(), spec.name);
        CHECK(it->second.shape() == spec.shape);
    }
    CHECK_NOTHROW(validate_params(cfg, params));
}

TEST_CASE("ablations shrink the parameter schema") {
    NetworkConfig cfg = small_config("classification");
    const std::size_t full = param_schema(cfg).size();
    cfg.ablation = Ablation::baseline;
    const std::size_t baseline = param_schema(cfg).size();
    cfg.ablation = Ablation::clca;
    const std::size_t with_clca = param_schema(cfg).size();
    cfg.ablation = Ablation::csca;
    const std::size_t with_csca = param_schema(cfg).size();
    CHECK(baseline < with_clca);
    CHECK(baseline < with_csca);
    CHECK(with_clca < full);
    CHECK(with_csca < full);

    // Each variant's init satisfies its own schema.
    cfg.ablation = Ablation::baseline;
    CHECK_NOTHROW(validate_params(cfg, init_params(cfg, 0)));
}

TEST_CASE("init draws bounded weights and zero biases") {
    const NetworkConfig cfg = small_config("classification");
    const ModelParams params = init_params(cfg, 5);
    for (const auto& [name, t] : params) {
        if (name.size() >= 2 && name.substr(name.size() - 2) == ".b") {
            for (double v : t.values()) CHECK(v == 0.0);
        } else {
            const double bound = 1.0 / std::sqrt(double(t.shape()[0]));
            for (double v : t.values()) {
                CHECK(v >= -bound);
                CHECK(v < bound);
            }
        }
    }
    // Deterministic per seed, different across seeds.
    const ModelParams again = init_params(cfg, 5);
    const ModelParams other = init_params(cfg, 6);
    CHECK(param(params, "head.mlp0.w").values() == param(again, "head.mlp0.w").values());
    CHECK(param(params, "head.mlp0.w").values() != param(other, "head.mlp0.w").values());
}

TEST_CASE("validate_params pinpoints mismatches") {
    const NetworkConfig cfg = small_config("classification");
    ModelParams params = init_params(cfg, 0);

    ModelParams missing = params;
    missing.erase("head.mlp0.w");
    CHECK_THROWS_AS(validate_params(cfg, missing), ContractError);

    ModelParams extra = params;
    extra.emplace("rogue.w", Tensor::zeros({2, 2}));
    CHECK_THROWS_AS(validate_params(cfg, extra), ContractError);

    ModelParams reshaped = params;
    reshaped.at("head.mlp0.w") = Tensor::zeros({3, 3});
    CHECK_THROWS_AS(validate_params(cfg, reshaped), ContractError);
}

TEST_CASE("forward passes produce logits of the contracted shape") {
    Rng rng(11);
    const NetworkConfig ccfg = small_config("classification");
    const PointCloud sphere = gen_shape(ShapeKind::sphere, 64, 0.02, rng);
    const Tensor logits = classify_forward(sphere, ccfg, init_params(ccfg, 1));
    CHECK(logits.rows() == 1);
    CHECK(logits.cols() == 4);

    const NetworkConfig scfg = small_config("segmentation");
    const PointCloud mug = gen_part_shape(PartShapeKind::mug, 64, rng);
    const Tensor seg = segment_forward(mug, scfg, init_params(scfg, 1));
    CHECK(seg.rows() == 64);
    CHECK(seg.cols() == 7);

    // Forward is deterministic without dropout/fps randomness.
    const Tensor logits2 = classify_forward(sphere, ccfg, init_params(ccfg, 1));
    CHECK(logits.values() == logits2.values());
}

TEST_CASE("every ablation variant runs and they disagree") {
    Rng rng(12);
    const PointCloud sphere = gen_shape(ShapeKind::sphere, 64, 0.02, rng);
    std::vector<std::vector<double>> outs;
    for (Ablation a : {Ablation::baseline, Ablation::clca, Ablation::csca, Ablation::full}) {
        NetworkConfig cfg = small_config("classification");
        cfg.ablation = a;
        outs.push_back(classify_forward(sphere, cfg, init_params(cfg, 2)).values());
    }
    for (std::size_t i = 0; i < outs.size(); ++i)
        for (std::size_t j = i + 1; j < outs.size(); ++j) CHECK(outs[i] != outs[j]);
}

TEST_CASE("cross entropy of uniform logits is ln C") {
    NetworkConfig cfg = small_config("classification");
    const Tensor logits = Tensor::zeros({1, 4});
    const Tensor loss = cross_entropy(logits, {2}, cfg);
    CHECK(loss.item() == doctest::Approx(std::log(4.0)).epsilon(1e-12));

    NetworkConfig seg = small_config("segmentation");
    const Tensor slogits = Tensor::zeros({5, 7});
    const std::vector<int> targets = {0, 1, 2, 3, 4};
    const double mean_loss = cross_entropy(slogits, targets, seg).item();
    CHECK(mean_loss == doctest::Approx(std::log(7.0)).epsilon(1e-12));

    seg.seg_sum_loss = true;
    const double sum_loss = cross_entropy(slogits, targets, seg).item();
    CHECK(sum_loss == doctest::Approx(5.0 * mean_loss).epsilon(1e-12));
}

TEST_CASE("cross entropy validates target count") {
    NetworkConfig cfg = small_config("classification");
    CHECK_THROWS_AS(cross_entropy(Tensor::zeros({1, 4}), {0, 1}, cfg), ContractError);
    CHECK_THROWS_AS(cross_entropy(Tensor::zeros({1, 4}), {4}, cfg), ContractError);
}

TEST_CASE("predict takes the smallest index on ties") {
    Tensor logits({2, 3}, {1.0, 5.0, 5.0, -2.0, -2.0, -7.0});
    CHECK(predict(logits) == std::vector<int>{1, 0});
}

TEST_CASE("checkpoint round-trip is exact and stable") {
    const NetworkConfig cfg = small_config("classification");
    const ModelParams params = init_params(cfg, 9);
    TempFile f1("params1.clcw"), f2("params2.clcw");
    save_params(f1.path, params);

    const ModelParams back = load_params(f1.path, cfg);
    REQUIRE(back.size() == params.size());
    for (const auto& [name, t] : params) {
        CHECK(back.at(name).shape() == t.shape());
        CHECK(back.at(name).values() == t.values());
    }

    save_params(f2.path, back);
    CHECK(slurp(f1.path) == slurp(f2.path));  // byte-identical re-save
}

TEST_CASE("checkpoint loading separates format from contract errors") {
    const NetworkConfig cfg = small_config("classification");
    const ModelParams params = init_params(cfg, 9);
    TempFile good("params3.clcw");
    save_params(good.path, params);

    // Truncation is a file-format problem.
    const std::string bytes = slurp(good.path);
    TempFile cut("params4.clcw");
    std::ofstream(cut.path, std::ios::binary) << bytes.substr(0, bytes.size() / 2);
    CHECK_THROWS_AS(load_params(cut.path), FormatError);

    // Wrong magic as well.
    TempFile magic("params5.clcw");
    std::string wrong = bytes;
    wrong[0] = 'X';
    std::ofstream(magic.path, std::ios::binary) << wrong;
    CHECK_THROWS_AS(load_params(magic.path), FormatError);

    // A valid file that does not match the schema is a caller mistake.
    const NetworkConfig seg = small_config("segmentation");
    CHECK_THROWS_AS(load_params(good.path, seg), ContractError);

    // Missing file.
    CHECK_THROWS_AS(load_params("/tmp/clcsca_test_does_not_exist.clcw"), FormatError);
}
