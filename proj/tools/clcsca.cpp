// Command-line front end: synthetic data generation, training, evaluation,
// and the verification suites. Exit codes: 0 success, 1 contract/validation
// failure, 2 I/O or file-format failure.

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "clcsca/checks.hpp"
#include "clcsca/data.hpp"
#include "clcsca/model.hpp"
#include "clcsca/rng.hpp"
#include "clcsca/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw clcsca::FormatError("cannot open \"" + path + "\"");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string utc_now() {
    const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

struct GenDataArgs {
    std::string task = "classification";
    std::vector<std::string> classes;
    std::size_t train_per_class = 50;
    std::size_t test_per_class = 25;
    std::size_t points = 256;
    double noise = 0.02;
    std::uint64_t seed = 0;
    std::string out;
};

int cmd_gen_data(const GenDataArgs& a) {
    const clcsca::DatasetPair ds = clcsca::make_dataset(
        a.task, a.train_per_class, a.test_per_class, a.points, a.noise, a.seed, a.classes);
    clcsca::save_dataset(a.out, ds, a.seed, a.noise);
    std::cout << "wrote " << ds.train.samples.size() << " train + " << ds.test.samples.size()
              << " test clouds (" << a.points << " points each) to " << a.out << "\n";
    return 0;
}

struct TrainArgs {
    std::string config;
    std::string data;
    std::string out;
    std::string ablate;
    std::int64_t epochs = -1;
    std::int64_t seed = -1;
    std::size_t threads = 1;
};

int cmd_train(const TrainArgs& a) {
    const std::string config_text = read_file(a.config);
    clcsca::RunConfig cfg = clcsca::run_config_from_json_text(config_text);
    if (!a.ablate.empty()) cfg.network.ablation = clcsca::ablation_from_string(a.ablate);
    if (a.epochs >= 0) cfg.train.epochs = static_cast<std::size_t>(a.epochs);
    if (a.seed >= 0) cfg.train.seed = static_cast<std::uint64_t>(a.seed);
    if (a.threads < 1) throw clcsca::ContractError("train: --threads must be >= 1");
    cfg.network.validate();
    cfg.train.validate();

    const clcsca::DatasetPair data = clcsca::load_dataset(a.data);
    fs::create_directories(a.out);
    const std::string started = utc_now();

    clcsca::TrainOutcome outcome =
        clcsca::run_training(cfg.network, cfg.train, data.train, data.test, &std::cout);

    const std::string resolved = clcsca::run_config_to_json_text(cfg);
    clcsca::write_metrics_csv((fs::path(a.out) / "metrics.csv").string(), outcome.history);
    clcsca::save_params((fs::path(a.out) / "best.clcw").string(), outcome.best_params);
    // final-epoch weights reproduce the CSV's last test row under `eval`
    clcsca::save_params((fs::path(a.out) / "final.clcw").string(), outcome.final_params);
    const clcsca::MetricsRow& last = outcome.history.back();

    json manifest{{"config", json::parse(resolved)},
                  {"config_hash", hex64(clcsca::fnv1a64(resolved))},
                  {"seed", cfg.train.seed},
                  {"data_dir", a.data},
                  {"out_dir", a.out},
                  {"started", started},
                  {"finished", utc_now()},
                  {"best_epoch", outcome.best_epoch},
                  {"best_metric", outcome.best_metric},
                  {"epochs", cfg.train.epochs}};
    std::ofstream mout(fs::path(a.out) / "manifest.json");
    if (!mout) throw clcsca::FormatError("cannot write run manifest in \"" + a.out + "\"");
    mout << manifest.dump(2) << "\n";

    std::cout << "best epoch " << outcome.best_epoch << " ("
              << (cfg.network.is_segmentation() ? "test instance mIoU " : "test OA ")
              << outcome.best_metric << "); final test "
              << (last.miou ? *last.miou : last.oa.value_or(0.0)) << "\n"
              << "wrote metrics.csv, best.clcw, final.clcw, manifest.json to " << a.out << "\n";
    return 0;
}

struct EvalArgs {
    std::string checkpoint;
    std::string config;
    std::string data;
    std::string split = "test";
};

int cmd_eval(const EvalArgs& a) {
    const std::string text = read_file(a.config);
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw clcsca::FormatError(std::string("config: ") + e.what());
    }
    // accept either a full run config or a bare network config
    const clcsca::NetworkConfig net =
        j.is_object() && j.contains("network")
            ? clcsca::run_config_from_json_text(text).network
            : clcsca::network_config_from_json_text(text);
    const clcsca::ModelParams params = clcsca::load_params(a.checkpoint, net);
    const clcsca::DatasetPair pair = clcsca::load_dataset(a.data);
    if (a.split != "train" && a.split != "test") {
        throw clcsca::ContractError("eval: --split must be train or test");
    }
    const clcsca::Dataset& ds = a.split == "train" ? pair.train : pair.test;

    if (net.is_segmentation()) {
        const clcsca::EvalResult r = clcsca::evaluate_segmentation(net, params, ds);
        std::printf("split            %s\n", a.split.c_str());
        std::printf("loss             %.9g\n", r.loss);
        std::printf("point accuracy   %.9g\n", r.oa);
        std::printf("instance mIoU    %.9g\n", *r.instance_miou);
        for (const auto& [category, iou] : r.category_iou) {
            std::printf("IoU %-12s %.9g\n", category.c_str(), iou);
        }
    } else {
        const clcsca::EvalResult r = clcsca::evaluate_classification(net, params, ds);
        std::printf("split  %s\n", a.split.c_str());
        std::printf("loss   %.9g\n", r.loss);
        std::printf("OA     %.9g\n", r.oa);
        std::printf("ACC    %.9g\n", r.acc);
    }
    return 0;
}

struct CheckArgs {
    std::string suite = "all";
    std::uint64_t seed = 0;
};

int cmd_check(const CheckArgs& a) {
    std::vector<clcsca::CheckResult> results;
    const auto run = [&](const std::string& name) {
        if (a.suite != "all" && a.suite != name) return;
        std::vector<clcsca::CheckResult> part;
        if (name == "grad") part = clcsca::check_gradients(a.seed);
        if (name == "invariance") part = clcsca::check_invariance(a.seed);
        if (name == "oracle") part = clcsca::check_oracles(a.seed);
        results.insert(results.end(), part.begin(), part.end());
    };
    run("grad");
    run("invariance");
    run("oracle");
    if (results.empty()) throw clcsca::ContractError("check: unknown suite \"" + a.suite + "\"");
    for (const clcsca::CheckResult& r : results) {
        std::printf("%s %-34s %s [%.2fs]\n", r.passed ? "PASS" : "FAIL", r.name.c_str(),
                    r.detail.c_str(), r.seconds);
    }
    return clcsca::all_passed(results) ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Point-cloud attention network: data, training, evaluation, verification"};
    app.require_subcommand(1);

    GenDataArgs gen;
    CLI::App* sgen = app.add_subcommand("gen-data", "Generate a synthetic dataset");
    sgen->add_option("--task", gen.task, "classification | segmentation")
        ->check(CLI::IsMember({"classification", "segmentation"}));
    sgen->add_option("--classes", gen.classes,
                     "Subset of class names (default: all classes of the task)")
        ->delimiter(',');
    sgen->add_option("--train-per-class", gen.train_per_class, "Training clouds per class");
    sgen->add_option("--test-per-class", gen.test_per_class, "Test clouds per class");
    sgen->add_option("--points", gen.points, "Points per cloud");
    sgen->add_option("--noise", gen.noise, "Gaussian jitter sigma (classification only)");
    sgen->add_option("--seed", gen.seed, "Dataset seed");
    sgen->add_option("--out", gen.out, "Output directory")->required();

    TrainArgs tr;
    CLI::App* strain = app.add_subcommand("train", "Train a model");
    strain->add_option("--config", tr.config, "Run config JSON")->required();
    strain->add_option("--data", tr.data, "Dataset directory (from gen-data)")->required();
    strain->add_option("--out", tr.out, "Output directory")->required();
    strain->add_option("--epochs", tr.epochs, "Override config epochs");
    strain->add_option("--seed", tr.seed, "Override config seed");
    strain->add_option("--ablate", tr.ablate, "baseline | clca | csca | full")
        ->check(CLI::IsMember({"baseline", "clca", "csca", "full"}));
    strain->add_option("--threads", tr.threads, "Worker cap (math is single-threaded)");

    EvalArgs ev;
    CLI::App* seval = app.add_subcommand("eval", "Evaluate a checkpoint");
    seval->add_option("--checkpoint", ev.checkpoint, "CLCW checkpoint")->required();
    seval->add_option("--config", ev.config, "Run or network config JSON")->required();
    seval->add_option("--data", ev.data, "Dataset directory")->required();
    seval->add_option("--split", ev.split, "train | test (default test)");

    CheckArgs ch;
    CLI::App* scheck = app.add_subcommand("check", "Run the verification suites");
    scheck->add_option("--suite", ch.suite, "grad | invariance | oracle | all")
        ->check(CLI::IsMember({"grad", "invariance", "oracle", "all"}));
    scheck->add_option("--seed", ch.seed, "Randomization seed");

    try {
        app.parse(argc, argv);
        if (sgen->parsed()) return cmd_gen_data(gen);
        if (strain->parsed()) return cmd_train(tr);
        if (seval->parsed()) return cmd_eval(ev);
        if (scheck->parsed()) return cmd_check(ch);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    } catch (const clcsca::FormatError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const clcsca::ContractError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
